#pragma once

#include <Eigen/Core>

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace gsw {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;
using Mat2 = Eigen::Matrix2d;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;
using Mat23 = Eigen::Matrix<double, 2, 3>;

/// Row-major dynamic matrix; one row per point in batched network code.
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// std::vector with Eigen alignment; keeps vectorized reductions bitwise reproducible.
using AlignedBuffer = std::vector<double, Eigen::aligned_allocator<double>>;

/// Broken precondition or inconsistent inputs (programmer error).
class ContractViolation : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

/// Covariance too ill-conditioned to invert.
class DegenerateCovariance : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Densify/prune removed every point.
class TrainingCollapse : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Loss became NaN or infinite during training.
class NonFiniteLoss : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed input file. `line()` is 1-based, 0 when unknown.
class ParseError : public std::runtime_error {
public:
    ParseError(const std::string& what, std::size_t line)
        : std::runtime_error(line > 0 ? what + " (line " + std::to_string(line) + ")" : what),
          line_(line) {}
    std::size_t line() const { return line_; }

private:
    std::size_t line_;
};

inline void require(bool condition, const char* message) {
    if (!condition) throw ContractViolation(message);
}

/// Interleaved RGB image, row-major, values nominally in [0,1].
struct Image {
    int height = 0;
    int width = 0;
    AlignedBuffer data;  // height * width * 3

    Image() = default;
    Image(int h, int w, double fill = 0.0)
        : height(h), width(w), data(static_cast<std::size_t>(h) * w * 3, fill) {}

    double& at(int y, int x, int c) { return data[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }
    double at(int y, int x, int c) const {
        return data[(static_cast<std::size_t>(y) * width + x) * 3 + c];
    }
    std::size_t pixel_count() const { return static_cast<std::size_t>(height) * width; }
    bool same_shape(const Image& o) const { return height == o.height && width == o.width; }
};

/// Planar C x H x W tensor used by the convolutional extractor and feature maps.
struct Tensor {
    int channels = 0;
    int height = 0;
    int width = 0;
    AlignedBuffer data;

    Tensor() = default;
    Tensor(int c, int h, int w, double fill = 0.0)
        : channels(c), height(h), width(w),
          data(static_cast<std::size_t>(c) * h * w, fill) {}

    std::size_t plane() const { return static_cast<std::size_t>(height) * width; }
    double& at(int c, int y, int x) { return data[c * plane() + static_cast<std::size_t>(y) * width + x]; }
    double at(int c, int y, int x) const {
        return data[c * plane() + static_cast<std::size_t>(y) * width + x];
    }
    double* channel(int c) { return data.data() + c * plane(); }
    const double* channel(int c) const { return data.data() + c * plane(); }
    bool same_shape(const Tensor& o) const {
        return channels == o.channels && height == o.height && width == o.width;
    }
};

Tensor image_to_tensor(const Image& image);
Image tensor_to_image(const Tensor& tensor);

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }
inline double logit(double p) { return std::log(p / (1.0 - p)); }

}  // namespace gsw
