#include "gsw/dataio.hpp"

#include "gsw/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>

namespace gsw {

void DatasetSpec::validate() const {
    require(n_train >= 2, "dataset: n_train must be at least 2");
    require(n_test >= 1, "dataset: n_test must be at least 1");
    require(width > 0 && height > 0, "dataset: image size must be positive");
    require(n_points > 0 && K >= 1, "dataset: n_points and K must be positive");
    require(focal > 0 && ring_radius > 0 && point_scale > 0, "dataset: focal, radius and scale must be positive");
    require(gain_min <= gain_max && bias_min <= bias_max, "dataset: empty perturbation range");
    require(max_occluders >= 0, "dataset: max_occluders must be nonnegative");
    require(init_opacity > 0 && init_opacity < 1, "dataset: init_opacity must lie in (0,1)");
}

std::vector<TrainView> SyntheticDataset::train_views() const {
    std::vector<TrainView> out;
    for (const auto& v : views)
        if (v.role == "train") out.push_back({v.image, cameras.at(v.camera_index)});
    return out;
}

std::vector<TrainView> SyntheticDataset::test_views() const {
    std::vector<TrainView> out;
    for (const auto& v : views)
        if (v.role == "test") out.push_back({v.image, cameras.at(v.camera_index)});
    return out;
}

std::size_t SyntheticDataset::reference_view() const {
    std::size_t train_index = 0;
    for (const auto& v : views) {
        if (v.role != "train") continue;
        if (v.perturbation.identity()) return train_index;
        ++train_index;
    }
    throw ContractViolation("dataset has no clean training view");
}

std::vector<Camera> camera_ring(int count, double radius, double height, double focal, int width, int height_px) {
    std::vector<Camera> cams;
    cams.reserve(count);
    for (int i = 0; i < count; ++i) {
        const double a = 2.0 * std::numbers::pi * i / count;
        const Vec3 eye(radius * std::cos(a), radius * std::sin(a), height);
        cams.push_back(look_at(eye, Vec3::Zero(), Vec3(0, 0, 1), focal, focal, width, height_px));
    }
    return cams;
}

namespace {

struct Sphere {
    Vec3 center;
    double radius;
};

struct Box {
    Vec3 center;
    Vec3 half;
};

Vec3 sphere_texture(const Vec3& p, const Sphere& s, int variant) {
    const Vec3 d = (p - s.center) / s.radius;
    if (variant == 0) {
        const bool stripe = std::sin(9.0 * d.z()) > 0.0;
        return stripe ? Vec3(0.85, 0.25, 0.2) : Vec3(0.95, 0.85, 0.3);
    }
    return Vec3(0.2 + 0.6 * (0.5 + 0.5 * d.x()), 0.3 + 0.5 * (0.5 + 0.5 * d.y()), 0.8);
}

Vec3 box_texture(const Vec3& p) {
    const int cell = static_cast<int>(std::floor(5.0 * p.x()) + std::floor(5.0 * p.y()) + std::floor(5.0 * p.z()));
    return (cell & 1) ? Vec3(0.15, 0.55, 0.3) : Vec3(0.8, 0.8, 0.75);
}

Vec4 random_quaternion(std::mt19937_64& rng) {
    std::normal_distribution<double> n(0.0, 1.0);
    Vec4 q(n(rng), n(rng), n(rng), n(rng));
    const double len = q.norm();
    return len > 1e-12 ? Vec4(q / len) : Vec4(1, 0, 0, 0);
}

GaussianPoint make_point(const Vec3& x, int K) {
    GaussianPoint p;
    p.position = x;
    p.intrinsic.assign(kIntrinsicDim, 0.0);
    p.sampling_coords.assign(2 * K, 0.0);
    return p;
}

}  // namespace

GaussianCloud synthetic_scene(int n_points, int K, double point_scale, std::mt19937_64& rng,
                              std::vector<Vec3>& colors) {
    const Sphere big{{-0.45, 0.0, 0.0}, 0.45};
    const Sphere small{{0.1, -0.55, 0.35}, 0.2};
    const Box box{{0.45, 0.15, -0.1}, {0.3, 0.3, 0.35}};

    const double area_big = 4 * std::numbers::pi * big.radius * big.radius;
    const double area_small = 4 * std::numbers::pi * small.radius * small.radius;
    const Vec3 h = box.half;
    const double face_area[3] = {4 * h.y() * h.z(), 4 * h.x() * h.z(), 4 * h.x() * h.y()};
    const double area_box = 2 * (face_area[0] + face_area[1] + face_area[2]);
    const double total = area_big + area_small + area_box;

    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::normal_distribution<double> n(0.0, 1.0);
    GaussianCloud cloud;
    cloud.K = K;
    cloud.points.reserve(n_points);
    colors.clear();
    colors.reserve(n_points);
    for (int i = 0; i < n_points; ++i) {
        const double pick = u(rng) * total;
        Vec3 x, c;
        if (pick < area_big + area_small) {
            const bool is_big = pick < area_big;
            const Sphere& s = is_big ? big : small;
            Vec3 d(n(rng), n(rng), n(rng));
            d /= std::max(d.norm(), 1e-12);
            x = s.center + s.radius * d;
            c = sphere_texture(x, s, is_big ? 0 : 1);
        } else {
            double r = u(rng) * area_box;
            int axis = 0;
            while (axis < 2 && r >= 2 * face_area[axis]) r -= 2 * face_area[axis++];
            const double sign = u(rng) < 0.5 ? -1.0 : 1.0;
            Vec3 local(2 * u(rng) - 1, 2 * u(rng) - 1, 2 * u(rng) - 1);
            local[axis] = sign;
            x = box.center + local.cwiseProduct(h);
            c = box_texture(x);
        }
        GaussianPoint p = make_point(x, K);
        p.rotation = random_quaternion(rng);
        p.log_scale = Vec3::Constant(std::log(point_scale));
        p.opacity_logit = logit(0.9);
        cloud.points.push_back(std::move(p));
        colors.push_back(c);
    }
    return cloud;
}

Image apply_perturbation(const Image& clean, const Perturbation& p) {
    Image out = clean;
    for (std::size_t i = 0; i < out.pixel_count(); ++i)
        for (int c = 0; c < 3; ++c) {
            double& v = out.data[i * 3 + c];
            v = std::clamp(p.gain[c] * v + p.bias[c], 0.0, 1.0);
        }
    for (const auto& o : p.occluders)
        for (int y = std::max(0, o.y0); y < std::min(out.height, o.y1); ++y)
            for (int x = std::max(0, o.x0); x < std::min(out.width, o.x1); ++x)
                for (int c = 0; c < 3; ++c) out.at(y, x, c) = o.color[c];
    return out;
}

std::vector<std::uint8_t> occluder_mask(int height, int width, const Perturbation& p) {
    std::vector<std::uint8_t> mask(static_cast<std::size_t>(height) * width, 0);
    for (const auto& o : p.occluders)
        for (int y = std::max(0, o.y0); y < std::min(height, o.y1); ++y)
            for (int x = std::max(0, o.x0); x < std::min(width, o.x1); ++x)
                mask[static_cast<std::size_t>(y) * width + x] = 1;
    return mask;
}

SyntheticDataset generate_dataset(const DatasetSpec& spec, std::uint64_t seed) {
    spec.validate();
    std::mt19937_64 rng(seed);
    SyntheticDataset data;
    data.ground_truth = synthetic_scene(spec.n_points, spec.K, spec.point_scale, rng, data.colors);

    const int total = spec.n_train + spec.n_test;
    data.cameras = camera_ring(total, spec.ring_radius, spec.ring_height, spec.focal, spec.width, spec.height);
    std::vector<bool> is_test(total, false);
    for (int j = 0; j < spec.n_test; ++j)
        is_test[std::min(total - 1, static_cast<int>((j + 1) * static_cast<double>(total) / spec.n_test) - 1)] = true;

    std::uniform_real_distribution<double> gain(spec.gain_min, spec.gain_max);
    std::uniform_real_distribution<double> bias(spec.bias_min, spec.bias_max);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::uniform_int_distribution<int> occ_count(0, spec.max_occluders);
    const int min_side = std::max(2, std::min(spec.width, spec.height) / 6);
    const int max_side = std::max(min_side, std::min(spec.width, spec.height) * 3 / 8);
    std::uniform_int_distribution<int> side(min_side, max_side);

    bool reference_done = false;
    for (int i = 0; i < total; ++i) {
        const Image clean = render_fixed_colors(data.ground_truth, data.cameras[i], data.colors, Vec3::Zero());
        DatasetView view;
        view.camera_index = i;
        if (is_test[i]) {
            view.role = "test";
        } else {
            view.role = "train";
            if (reference_done) {
                for (int c = 0; c < 3; ++c) view.perturbation.gain[c] = gain(rng);
                for (int c = 0; c < 3; ++c) view.perturbation.bias[c] = bias(rng);
                const int count = occ_count(rng);
                for (int k = 0; k < count; ++k) {
                    Occluder o;
                    const int w = side(rng), h = side(rng);
                    o.x0 = std::uniform_int_distribution<int>(0, spec.width - w)(rng);
                    o.y0 = std::uniform_int_distribution<int>(0, spec.height - h)(rng);
                    o.x1 = o.x0 + w;
                    o.y1 = o.y0 + h;
                    o.color = Vec3(unit(rng), unit(rng), unit(rng));
                    view.perturbation.occluders.push_back(o);
                }
            }
            reference_done = true;
        }
        view.image = apply_perturbation(clean, view.perturbation);
        data.views.push_back(std::move(view));
    }

    Vec3 centroid = Vec3::Zero();
    for (const auto& p : data.ground_truth.points) centroid += p.position;
    centroid /= static_cast<double>(data.ground_truth.size());
    double extent = 0.0;
    for (const auto& p : data.ground_truth.points) extent = std::max(extent, (p.position - centroid).norm());

    std::normal_distribution<double> jitter(0.0, spec.init_noise * extent);
    std::normal_distribution<double> feature(0.0, 0.05);
    std::uniform_real_distribution<double> scale_factor(0.5, 1.5);
    data.init_cloud.K = spec.K;
    std::vector<Vec3> positions;
    for (const auto& gt : data.ground_truth.points) {
        GaussianPoint p = make_point(gt.position + Vec3(jitter(rng), jitter(rng), jitter(rng)), spec.K);
        p.rotation = random_quaternion(rng);
        for (int a = 0; a < 3; ++a) p.log_scale[a] = std::log(spec.point_scale * scale_factor(rng));
        p.opacity_logit = logit(spec.init_opacity);
        for (double& f : p.intrinsic) f = feature(rng);
        positions.push_back(p.position);
        data.init_cloud.points.push_back(std::move(p));
    }
    const auto sc = init_sampling_coords(positions, spec.K, seed ^ 0x5eedULL);
    for (std::size_t i = 0; i < sc.size(); ++i) data.init_cloud.points[i].sampling_coords = sc[i];
    return data;
}

double psnr(const Image& a, const Image& b) {
    require(a.same_shape(b) && a.pixel_count() > 0, "psnr: image shapes differ");
    double sum = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        const double d = a.data[i] - b.data[i];
        sum += d * d;
    }
    const double mse = sum / static_cast<double>(a.data.size());
    if (mse <= 0.0) return 99.0;
    return std::min(99.0, 10.0 * std::log10(1.0 / mse));
}

// ---------------------------------------------------------------------------
// Files

namespace {

std::ifstream open_in(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    return in;
}

std::ofstream open_out(const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    return out;
}

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

// Reads the next non-empty line, counting lines for diagnostics.
bool next_line(std::istream& in, std::string& line, int& line_no) {
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") != std::string::npos) return true;
    }
    return false;
}

std::vector<double> parse_numbers(const std::string& line, std::size_t expected, int line_no,
                                  const std::string& what) {
    std::istringstream ss(line);
    std::vector<double> out;
    std::string tok;
    while (ss >> tok) {
        try {
            std::size_t used = 0;
            out.push_back(std::stod(tok, &used));
            if (used != tok.size()) throw std::invalid_argument(tok);
        } catch (const std::exception&) {
            throw ParseError(what + ": bad number '" + tok + "'", line_no);
        }
    }
    if (out.size() != expected)
        throw ParseError(what + ": expected " + std::to_string(expected) + " values, found " +
                             std::to_string(out.size()),
                         line_no);
    return out;
}

int header_int(const std::string& header, const std::string& key, int line_no) {
    const std::string tag = key + "=";
    std::istringstream ss(header);
    std::string tok;
    while (ss >> tok) {
        if (tok.rfind(tag, 0) == 0) {
            try {
                return std::stoi(tok.substr(tag.size()));
            } catch (const std::exception&) {
                break;
            }
        }
    }
    throw ParseError("header is missing a valid " + key, line_no);
}

}  // namespace

void write_image(const std::string& path, const Image& image) {
    auto out = open_out(path);
    out << "P6\n" << image.width << ' ' << image.height << "\n255\n";
    std::vector<unsigned char> bytes(image.data.size());
    for (std::size_t i = 0; i < bytes.size(); ++i)
        bytes[i] = static_cast<unsigned char>(std::clamp(std::floor(image.data[i] * 256.0), 0.0, 255.0));
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

Image read_image(const std::string& path) {
    auto in = open_in(path);
    std::string magic;
    int w = 0, h = 0, maxval = 0;
    in >> magic;
    // Skip comments between header fields.
    auto read_field = [&](int& v) {
        in >> std::ws;
        while (in.peek() == '#') {
            std::string skip;
            std::getline(in, skip);
            in >> std::ws;
        }
        in >> v;
    };
    if (magic != "P6") throw ParseError(path + ": not a binary PPM", 1);
    read_field(w);
    read_field(h);
    read_field(maxval);
    if (!in || w <= 0 || h <= 0 || maxval != 255) throw ParseError(path + ": bad PPM header", 1);
    in.get();
    std::vector<unsigned char> bytes(static_cast<std::size_t>(w) * h * 3);
    in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (in.gcount() != static_cast<std::streamsize>(bytes.size())) throw ParseError(path + ": truncated pixel data", 2);
    Image img(h, w);
    for (std::size_t i = 0; i < bytes.size(); ++i) img.data[i] = (bytes[i] + 0.5) / 256.0;
    return img;
}

void save_scene(const std::string& path, const GaussianCloud& cloud) {
    cloud.validate();
    auto out = open_out(path);
    out << "GSW1 K=" << cloud.K << " SF=" << kIntrinsicDim << " N=" << cloud.size() << '\n';
    for (const auto& p : cloud.points) {
        std::string line;
        auto put = [&](double v) {
            if (!line.empty()) line += ' ';
            line += fmt(v);
        };
        for (int a = 0; a < 3; ++a) put(p.position[a]);
        for (int a = 0; a < 4; ++a) put(p.rotation[a]);
        for (int a = 0; a < 3; ++a) put(p.log_scale[a]);
        put(p.opacity_logit);
        for (double v : p.intrinsic) put(v);
        for (double v : p.sampling_coords) put(v);
        out << line << '\n';
    }
}

GaussianCloud load_scene(const std::string& path) {
    auto in = open_in(path);
    std::string line;
    int line_no = 0;
    if (!next_line(in, line, line_no) || line.rfind("GSW1", 0) != 0)
        throw ParseError(path + ": missing GSW1 header", std::max(line_no, 1));
    GaussianCloud cloud;
    cloud.K = header_int(line, "K", line_no);
    const int sf = header_int(line, "SF", line_no);
    const int n = line.find("N=") == std::string::npos ? -1 : header_int(line, "N", line_no);
    if (cloud.K < 1 || sf != kIntrinsicDim) throw ParseError(path + ": unsupported header values", line_no);
    const std::size_t width = 11 + kIntrinsicDim + 2 * cloud.K;
    for (int i = 0; n < 0 || i < n; ++i) {
        if (!next_line(in, line, line_no)) {
            if (n < 0) break;
            throw ParseError(path + ": expected " + std::to_string(n) + " points, file ends after " +
                                 std::to_string(i),
                             line_no + 1);
        }
        const auto v = parse_numbers(line, width, line_no, path);
        GaussianPoint p;
        p.position = Vec3(v[0], v[1], v[2]);
        p.rotation = Vec4(v[3], v[4], v[5], v[6]);
        p.log_scale = Vec3(v[7], v[8], v[9]);
        p.opacity_logit = v[10];
        p.intrinsic.assign(v.begin() + 11, v.begin() + 11 + kIntrinsicDim);
        p.sampling_coords.assign(v.begin() + 11 + kIntrinsicDim, v.end());
        cloud.points.push_back(std::move(p));
    }
    return cloud;
}

void save_cameras(const std::string& path, const std::vector<Camera>& cameras) {
    auto out = open_out(path);
    for (const auto& c : cameras) {
        out << fmt(c.fx) << ' ' << fmt(c.fy) << ' ' << fmt(c.cx) << ' ' << fmt(c.cy) << ' ' << c.width << ' '
            << c.height << ' ' << fmt(c.near_clip) << '\n';
        for (int r = 0; r < 4; ++r) {
            for (int k = 0; k < 4; ++k) out << (k ? " " : "") << fmt(c.world_to_cam(r, k));
            out << '\n';
        }
    }
}

std::vector<Camera> load_cameras(const std::string& path) {
    auto in = open_in(path);
    std::string line;
    int line_no = 0;
    std::vector<Camera> cams;
    while (next_line(in, line, line_no)) {
        const auto k = parse_numbers(line, 7, line_no, path);
        Camera c;
        c.fx = k[0];
        c.fy = k[1];
        c.cx = k[2];
        c.cy = k[3];
        c.width = static_cast<int>(k[4]);
        c.height = static_cast<int>(k[5]);
        c.near_clip = k[6];
        for (int r = 0; r < 4; ++r) {
            if (!next_line(in, line, line_no)) throw ParseError(path + ": truncated camera matrix", line_no + 1);
            const auto row = parse_numbers(line, 4, line_no, path);
            for (int q = 0; q < 4; ++q) c.world_to_cam(r, q) = row[q];
        }
        try {
            c.validate();
        } catch (const ContractViolation& e) {
            throw ParseError(path + ": " + e.what(), line_no);
        }
        cams.push_back(c);
    }
    return cams;
}

void save_dataset(const std::string& dir, const SyntheticDataset& data) {
    namespace fs = std::filesystem;
    fs::create_directories(fs::path(dir) / "images");
    save_cameras((fs::path(dir) / "cameras.txt").string(), data.cameras);
    save_scene((fs::path(dir) / "init_cloud.gsw").string(), data.init_cloud);
    save_scene((fs::path(dir) / "ground_truth.gsw").string(), data.ground_truth);
    auto out = open_out((fs::path(dir) / "manifest.txt").string());
    out << "# role image camera gain_r gain_g gain_b bias_r bias_g bias_b n_occluders [x0 y0 x1 y1 r g b]...\n";
    for (std::size_t i = 0; i < data.views.size(); ++i) {
        const auto& v = data.views[i];
        char name[64];
        std::snprintf(name, sizeof name, "images/%s_%03zu.ppm", v.role.c_str(), i);
        write_image((fs::path(dir) / name).string(), v.image);
        const auto& p = v.perturbation;
        out << v.role << ' ' << name << ' ' << v.camera_index;
        for (int c = 0; c < 3; ++c) out << ' ' << fmt(p.gain[c]);
        for (int c = 0; c < 3; ++c) out << ' ' << fmt(p.bias[c]);
        out << ' ' << p.occluders.size();
        for (const auto& o : p.occluders)
            out << ' ' << o.x0 << ' ' << o.y0 << ' ' << o.x1 << ' ' << o.y1 << ' ' << fmt(o.color[0]) << ' '
                << fmt(o.color[1]) << ' ' << fmt(o.color[2]);
        out << '\n';
    }
}

SyntheticDataset load_dataset(const std::string& dir) {
    namespace fs = std::filesystem;
    const fs::path root(dir);
    const std::string manifest = (root / "manifest.txt").string();
    if (!fs::exists(manifest)) throw std::runtime_error("dataset manifest not found: " + manifest);
    SyntheticDataset data;
    data.cameras = load_cameras((root / "cameras.txt").string());
    data.init_cloud = load_scene((root / "init_cloud.gsw").string());
    if (fs::exists(root / "ground_truth.gsw")) data.ground_truth = load_scene((root / "ground_truth.gsw").string());

    auto in = open_in(manifest);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto start = line.find_first_not_of(" \t\r");
        if (start == std::string::npos || line[start] == '#') continue;
        std::istringstream ss(line);
        DatasetView v;
        std::string image_path;
        std::size_t n_occ = 0;
        if (!(ss >> v.role >> image_path >> v.camera_index)) throw ParseError(manifest + ": bad view line", line_no);
        if (v.role != "train" && v.role != "test") throw ParseError(manifest + ": unknown role " + v.role, line_no);
        if (v.camera_index < 0 || v.camera_index >= static_cast<int>(data.cameras.size()))
            throw ParseError(manifest + ": camera index out of range", line_no);
        for (int c = 0; c < 3; ++c) ss >> v.perturbation.gain[c];
        for (int c = 0; c < 3; ++c) ss >> v.perturbation.bias[c];
        ss >> n_occ;
        for (std::size_t k = 0; k < n_occ && ss; ++k) {
            Occluder o;
            ss >> o.x0 >> o.y0 >> o.x1 >> o.y1 >> o.color[0] >> o.color[1] >> o.color[2];
            v.perturbation.occluders.push_back(o);
        }
        if (!ss) throw ParseError(manifest + ": truncated perturbation fields", line_no);
        v.image = read_image((root / image_path).string());
        data.views.push_back(std::move(v));
    }
    return data;
}

}  // namespace gsw
