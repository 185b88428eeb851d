#pragma once

#include "gsw/types.hpp"

#include <algorithm>
#include <random>
#include <string>
#include <utility>
#include <vector>

namespace gsw::nn {

/// A named trainable array with its gradient accumulator.
struct Parameter {
    std::string name;
    std::vector<int> shape;
    AlignedBuffer value;
    AlignedBuffer grad;

    Parameter() = default;
    Parameter(std::string n, std::vector<int> s);

    std::size_t size() const { return value.size(); }
    void zero_grad() { std::fill(grad.begin(), grad.end(), 0.0); }
};

/// 2D convolution, square kernel, zero padding, implemented with im2col + GEMM.
class Conv2d {
public:
    Conv2d() = default;
    Conv2d(std::string name, int in_channels, int out_channels, int kernel, int stride);

    /// Forward pass. `columns` receives the im2col buffer needed by backward.
    Tensor forward(const Tensor& x, RowMatrix& columns) const;
    /// Accumulates parameter gradients; returns the gradient w.r.t. the input.
    Tensor backward(const Tensor& x, const RowMatrix& columns, const Tensor& d_out);

    void init_kaiming(std::mt19937_64& rng);
    Parameter& weight() { return weight_; }
    Parameter& bias() { return bias_; }
    int in_channels() const { return in_; }
    int out_channels() const { return out_; }

private:
    int in_ = 0, out_ = 0, kernel_ = 3, stride_ = 1, pad_ = 1;
    Parameter weight_;  // out x (in * k * k)
    Parameter bias_;    // out
    int out_size(int n) const { return (n + 2 * pad_ - kernel_) / stride_ + 1; }
    std::pair<int, int> valid_range(int kx, int wo, int width) const;
};

/// Fully connected layer applied row-wise to a batch (rows = samples).
class Linear {
public:
    Linear() = default;
    Linear(std::string name, int in_features, int out_features);

    RowMatrix forward(const RowMatrix& x) const;
    RowMatrix backward(const RowMatrix& x, const RowMatrix& d_out);

    void init_xavier(std::mt19937_64& rng);
    Parameter& weight() { return weight_; }
    Parameter& bias() { return bias_; }
    const Parameter& weight() const { return weight_; }
    const Parameter& bias() const { return bias_; }
    int in_features() const { return in_; }
    int out_features() const { return out_; }

private:
    int in_ = 0, out_ = 0;
    Parameter weight_;  // out x in
    Parameter bias_;    // out
};

/// Linear layers with ReLU between them; the last layer is linear.
class Mlp {
public:
    struct Tape {
        std::vector<RowMatrix> inputs;  // input of each layer (post-activation)
    };

    Mlp() = default;
    /// widths = {in, hidden..., out}
    Mlp(const std::string& name, const std::vector<int>& widths);

    RowMatrix forward(const RowMatrix& x, Tape* tape = nullptr) const;
    RowMatrix backward(const Tape& tape, const RowMatrix& d_out);

    void init_xavier(std::mt19937_64& rng);
    std::vector<Parameter*> parameters();
    std::vector<const Parameter*> parameters() const;
    int in_features() const { return layers_.front().in_features(); }
    int out_features() const { return layers_.back().out_features(); }

private:
    std::vector<Linear> layers_;
};

Tensor relu(const Tensor& x);
/// Gradient of relu given its output.
Tensor relu_backward(const Tensor& y, const Tensor& d_y);
Tensor upsample2x(const Tensor& x);
Tensor upsample2x_backward(const Tensor& d_y);
Tensor concat_channels(const Tensor& a, const Tensor& b);
void split_channels(const Tensor& d, int first_channels, Tensor& d_a, Tensor& d_b);

}  // namespace gsw::nn
