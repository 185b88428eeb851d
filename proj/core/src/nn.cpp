#include "gsw/nn.hpp"

#include <cmath>
#include <functional>
#include <numeric>

namespace gsw::nn {

Parameter::Parameter(std::string n, std::vector<int> s) : name(std::move(n)), shape(std::move(s)) {
    const std::size_t count =
        std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<std::size_t>());
    value.assign(count, 0.0);
    grad.assign(count, 0.0);
}

using ConstMap = Eigen::Map<const RowMatrix>;
using Map = Eigen::Map<RowMatrix>;

Conv2d::Conv2d(std::string name, int in_channels, int out_channels, int kernel, int stride)
    : in_(in_channels), out_(out_channels), kernel_(kernel), stride_(stride), pad_(kernel / 2),
      weight_(name + ".weight", {out_channels, in_channels, kernel, kernel}),
      bias_(name + ".bias", {out_channels}) {}

void Conv2d::init_kaiming(std::mt19937_64& rng) {
    const double bound = std::sqrt(6.0 / (in_ * kernel_ * kernel_));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (double& w : weight_.value) w = dist(rng);
    std::fill(bias_.value.begin(), bias_.value.end(), 0.0);
}

// Output columns [first, last) whose input column ox * stride - pad + kx lies inside [0, width).
std::pair<int, int> Conv2d::valid_range(int kx, int wo, int width) const {
    const int off = kx - pad_;
    int first = off >= 0 ? 0 : (-off + stride_ - 1) / stride_;
    int last = (width - 1 - off) >= 0 ? (width - 1 - off) / stride_ + 1 : 0;
    return {std::min(first, wo), std::clamp(last, 0, wo)};
}

Tensor Conv2d::forward(const Tensor& x, RowMatrix& columns) const {
    require(x.channels == in_, "conv2d: channel mismatch");
    const int ho = out_size(x.height), wo = out_size(x.width);
    const int kk = kernel_ * kernel_;
    columns.setZero(static_cast<Eigen::Index>(in_) * kk, static_cast<Eigen::Index>(ho) * wo);
    for (int c = 0; c < in_; ++c) {
        const double* plane = x.channel(c);
        for (int ky = 0; ky < kernel_; ++ky) {
            for (int kx = 0; kx < kernel_; ++kx) {
                double* row = columns.row((c * kernel_ + ky) * kernel_ + kx).data();
                const auto [ox0, ox1] = valid_range(kx, wo, x.width);
                for (int oy = 0; oy < ho; ++oy) {
                    const int iy = oy * stride_ - pad_ + ky;
                    if (iy < 0 || iy >= x.height) continue;
                    const double* src = plane + static_cast<std::size_t>(iy) * x.width - pad_ + kx;
                    double* dst = row + static_cast<std::size_t>(oy) * wo;
                    for (int ox = ox0; ox < ox1; ++ox) dst[ox] = src[ox * stride_];
                }
            }
        }
    }
    Tensor y(out_, ho, wo);
    Map ym(y.data.data(), out_, static_cast<Eigen::Index>(ho) * wo);
    const ConstMap w(weight_.value.data(), out_, static_cast<Eigen::Index>(in_) * kk);
    ym.noalias() = w * columns;
    for (int o = 0; o < out_; ++o) ym.row(o).array() += bias_.value[o];
    return y;
}

Tensor Conv2d::backward(const Tensor& x, const RowMatrix& columns, const Tensor& d_out) {
    const int ho = d_out.height, wo = d_out.width;
    const int kk = kernel_ * kernel_;
    const ConstMap dy(d_out.data.data(), out_, static_cast<Eigen::Index>(ho) * wo);
    Map dw(weight_.grad.data(), out_, static_cast<Eigen::Index>(in_) * kk);
    dw.noalias() += dy * columns.transpose();
    for (int o = 0; o < out_; ++o) bias_.grad[o] += dy.row(o).sum();

    const ConstMap w(weight_.value.data(), out_, static_cast<Eigen::Index>(in_) * kk);
    const RowMatrix d_cols = w.transpose() * dy;
    Tensor dx(x.channels, x.height, x.width);
    for (int c = 0; c < in_; ++c) {
        double* plane = dx.channel(c);
        for (int ky = 0; ky < kernel_; ++ky) {
            for (int kx = 0; kx < kernel_; ++kx) {
                const double* row = d_cols.row((c * kernel_ + ky) * kernel_ + kx).data();
                const auto [ox0, ox1] = valid_range(kx, wo, x.width);
                for (int oy = 0; oy < ho; ++oy) {
                    const int iy = oy * stride_ - pad_ + ky;
                    if (iy < 0 || iy >= x.height) continue;
                    double* dst = plane + static_cast<std::size_t>(iy) * x.width - pad_ + kx;
                    const double* src = row + static_cast<std::size_t>(oy) * wo;
                    for (int ox = ox0; ox < ox1; ++ox) dst[ox * stride_] += src[ox];
                }
            }
        }
    }
    return dx;
}

Linear::Linear(std::string name, int in_features, int out_features)
    : in_(in_features), out_(out_features), weight_(name + ".weight", {out_features, in_features}),
      bias_(name + ".bias", {out_features}) {}

void Linear::init_xavier(std::mt19937_64& rng) {
    const double bound = std::sqrt(6.0 / (in_ + out_));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (double& w : weight_.value) w = dist(rng);
    std::fill(bias_.value.begin(), bias_.value.end(), 0.0);
}

RowMatrix Linear::forward(const RowMatrix& x) const {
    require(x.cols() == in_, "linear: input width mismatch");
    const ConstMap w(weight_.value.data(), out_, in_);
    RowMatrix y = x * w.transpose();
    y.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(bias_.value.data(), out_);
    return y;
}

RowMatrix Linear::backward(const RowMatrix& x, const RowMatrix& d_out) {
    Map dw(weight_.grad.data(), out_, in_);
    dw.noalias() += d_out.transpose() * x;
    Eigen::Map<Eigen::RowVectorXd>(bias_.grad.data(), out_) += d_out.colwise().sum();
    const ConstMap w(weight_.value.data(), out_, in_);
    return d_out * w;
}

Mlp::Mlp(const std::string& name, const std::vector<int>& widths) {
    require(widths.size() >= 2, "mlp: need at least input and output width");
    for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
        layers_.emplace_back(name + "." + std::to_string(i), widths[i], widths[i + 1]);
    }
}

RowMatrix Mlp::forward(const RowMatrix& x, Tape* tape) const {
    if (tape) tape->inputs.clear();
    RowMatrix h = x;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        if (tape) tape->inputs.push_back(h);
        h = layers_[i].forward(h);
        if (i + 1 < layers_.size()) h = h.cwiseMax(0.0);
    }
    return h;
}

RowMatrix Mlp::backward(const Tape& tape, const RowMatrix& d_out) {
    require(tape.inputs.size() == layers_.size(), "mlp: tape does not match network");
    RowMatrix d = d_out;
    for (std::size_t i = layers_.size(); i-- > 0;) {
        d = layers_[i].backward(tape.inputs[i], d);
        if (i > 0) d = (tape.inputs[i].array() > 0.0).select(d, 0.0);
    }
    return d;
}

void Mlp::init_xavier(std::mt19937_64& rng) {
    for (auto& l : layers_) l.init_xavier(rng);
}

std::vector<Parameter*> Mlp::parameters() {
    std::vector<Parameter*> out;
    for (auto& l : layers_) {
        out.push_back(&l.weight());
        out.push_back(&l.bias());
    }
    return out;
}

std::vector<const Parameter*> Mlp::parameters() const {
    std::vector<const Parameter*> out;
    for (const auto& l : layers_) {
        out.push_back(&l.weight());
        out.push_back(&l.bias());
    }
    return out;
}

Tensor relu(const Tensor& x) {
    Tensor y = x;
    for (double& v : y.data) v = v > 0.0 ? v : 0.0;
    return y;
}

Tensor relu_backward(const Tensor& y, const Tensor& d_y) {
    Tensor d = d_y;
    for (std::size_t i = 0; i < d.data.size(); ++i)
        if (!(y.data[i] > 0.0)) d.data[i] = 0.0;
    return d;
}

Tensor upsample2x(const Tensor& x) {
    Tensor y(x.channels, x.height * 2, x.width * 2);
    for (int c = 0; c < x.channels; ++c)
        for (int yy = 0; yy < y.height; ++yy)
            for (int xx = 0; xx < y.width; ++xx) y.at(c, yy, xx) = x.at(c, yy / 2, xx / 2);
    return y;
}

Tensor upsample2x_backward(const Tensor& d_y) {
    Tensor d(d_y.channels, d_y.height / 2, d_y.width / 2);
    for (int c = 0; c < d_y.channels; ++c)
        for (int yy = 0; yy < d_y.height; ++yy)
            for (int xx = 0; xx < d_y.width; ++xx) d.at(c, yy / 2, xx / 2) += d_y.at(c, yy, xx);
    return d;
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
    require(a.height == b.height && a.width == b.width, "concat: spatial mismatch");
    Tensor y(a.channels + b.channels, a.height, a.width);
    std::copy(a.data.begin(), a.data.end(), y.data.begin());
    std::copy(b.data.begin(), b.data.end(), y.data.begin() + static_cast<std::ptrdiff_t>(a.data.size()));
    return y;
}

void split_channels(const Tensor& d, int first_channels, Tensor& d_a, Tensor& d_b) {
    d_a = Tensor(first_channels, d.height, d.width);
    d_b = Tensor(d.channels - first_channels, d.height, d.width);
    std::copy(d.data.begin(), d.data.begin() + static_cast<std::ptrdiff_t>(d_a.data.size()), d_a.data.begin());
    std::copy(d.data.begin() + static_cast<std::ptrdiff_t>(d_a.data.size()), d.data.end(), d_b.data.begin());
}

}  // namespace gsw::nn
