#include "gsw/appearance.hpp"

#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

namespace gsw {

// Layout:
//   GSWNET1
//   options K=<k> lego_mode=<0|1> disable_k_maps=<0|1> disable_projection_map=<0|1> disable_separation=<0|1>
//   section <name> <tensor count>
//   tensor <param name> <rank> <dims...>
//   <values, whitespace separated>
//   ...
//   end

namespace {

void write_section(std::ostream& os, const std::string& name, const std::vector<nn::Parameter*>& params) {
    os << "section " << name << ' ' << params.size() << '\n';
    char buf[40];
    for (const nn::Parameter* p : params) {
        os << "tensor " << p->name << ' ' << p->shape.size();
        for (int d : p->shape) os << ' ' << d;
        os << '\n';
        for (std::size_t i = 0; i < p->value.size(); ++i) {
            std::snprintf(buf, sizeof(buf), "%.17g", p->value[i]);
            os << buf << ((i + 1) % 16 == 0 || i + 1 == p->value.size() ? '\n' : ' ');
        }
    }
}

bool parse_flag(const std::string& token, const std::string& key, int& out) {
    if (token.rfind(key + "=", 0) != 0) return false;
    out = std::stoi(token.substr(key.size() + 1));
    return true;
}

}  // namespace

void save_checkpoint(const std::string& path, AppearanceModel& model) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot open checkpoint for writing: " + path);
    const AppearanceOptions& o = model.options;
    os << "GSWNET1\n";
    os << "options K=" << o.K << " lego_mode=" << o.lego_mode << " disable_k_maps=" << o.disable_k_maps
       << " disable_projection_map=" << o.disable_projection_map
       << " disable_separation=" << o.disable_separation << '\n';
    write_section(os, "extractor", model.extractor.parameters());
    write_section(os, "fusion", model.nets.fusion_parameters());
    write_section(os, "decoder", model.nets.decoder_parameters());
    os << "end\n";
    if (!os) throw std::runtime_error("failed writing checkpoint: " + path);
}

AppearanceModel load_checkpoint(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open checkpoint: " + path);
    std::size_t line_no = 0;
    std::string line;
    auto next_line = [&]() -> std::string& {
        if (!std::getline(is, line)) throw ParseError("checkpoint: unexpected end of file", line_no + 1);
        ++line_no;
        return line;
    };

    if (next_line() != "GSWNET1") throw ParseError("checkpoint: missing GSWNET1 version tag", line_no);
    AppearanceOptions opts;
    {
        std::istringstream ss(next_line());
        std::string token;
        ss >> token;
        if (token != "options") throw ParseError("checkpoint: expected options line", line_no);
        int v = 0;
        while (ss >> token) {
            if (parse_flag(token, "K", v)) opts.K = v;
            else if (parse_flag(token, "lego_mode", v)) opts.lego_mode = v != 0;
            else if (parse_flag(token, "disable_k_maps", v)) opts.disable_k_maps = v != 0;
            else if (parse_flag(token, "disable_projection_map", v)) opts.disable_projection_map = v != 0;
            else if (parse_flag(token, "disable_separation", v)) opts.disable_separation = v != 0;
            else throw ParseError("checkpoint: unknown option '" + token + "'", line_no);
        }
        if (opts.K < 1) throw ParseError("checkpoint: K must be at least 1", line_no);
    }

    AppearanceModel model(opts, 0);
    std::map<std::string, std::vector<nn::Parameter*>> sections{
        {"extractor", model.extractor.parameters()},
        {"fusion", model.nets.fusion_parameters()},
        {"decoder", model.nets.decoder_parameters()}};
    std::map<std::string, bool> seen;

    while (true) {
        std::istringstream ss(next_line());
        std::string kind, name;
        ss >> kind;
        if (kind == "end") break;
        std::size_t count = 0;
        if (kind != "section" || !(ss >> name >> count))
            throw ParseError("checkpoint: expected 'section <name> <count>'", line_no);
        auto it = sections.find(name);
        if (it == sections.end()) throw ParseError("checkpoint: unknown section '" + name + "'", line_no);
        if (count != it->second.size()) throw ParseError("checkpoint: wrong tensor count in " + name, line_no);
        for (nn::Parameter* p : it->second) {
            std::istringstream hs(next_line());
            std::string tag, pname;
            std::size_t rank = 0;
            if (!(hs >> tag >> pname >> rank) || tag != "tensor")
                throw ParseError("checkpoint: expected tensor header", line_no);
            if (pname != p->name) throw ParseError("checkpoint: expected tensor " + p->name, line_no);
            std::vector<int> shape(rank);
            for (auto& d : shape)
                if (!(hs >> d)) throw ParseError("checkpoint: bad tensor shape", line_no);
            if (shape != p->shape) throw ParseError("checkpoint: shape mismatch for " + p->name, line_no);
            std::size_t filled = 0;
            while (filled < p->value.size()) {
                std::istringstream vs(next_line());
                double v;
                while (vs >> v) {
                    if (filled >= p->value.size()) throw ParseError("checkpoint: too many values", line_no);
                    p->value[filled++] = v;
                }
                if (!vs.eof()) throw ParseError("checkpoint: malformed value", line_no);
            }
        }
        seen[name] = true;
    }
    for (const auto& [name, params] : sections)
        if (!seen[name]) throw ParseError("checkpoint: missing section " + name, line_no);
    return model;
}

}  // namespace gsw
