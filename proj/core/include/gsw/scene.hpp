#pragma once

#include "gsw/types.hpp"

#include <cstdint>
#include <random>
#include <vector>

namespace gsw {

/// Dimension of the per-point intrinsic appearance feature.
inline constexpr int kIntrinsicDim = 48;

/// One anisotropic Gaussian primitive.
///
/// Stored in optimizer-friendly spaces: scale = exp(log_scale), opacity =
/// sigmoid(opacity_logit), rotation is a scalar-first quaternion that the
/// optimizer renormalizes after every step.
struct GaussianPoint {
    Vec3 position = Vec3::Zero();
    Vec4 rotation = Vec4(1, 0, 0, 0);  // (w, x, y, z)
    Vec3 log_scale = Vec3::Zero();
    double opacity_logit = 0.0;
    std::vector<double> intrinsic;        // kIntrinsicDim entries
    std::vector<double> sampling_coords;  // 2K entries: (u1, v1, ..., uK, vK)

    Vec3 scale() const { return log_scale.array().exp(); }
    double opacity() const { return sigmoid(opacity_logit); }
    Vec2 sampling_coord(int k) const { return {sampling_coords[2 * k], sampling_coords[2 * k + 1]}; }
};

struct GaussianCloud {
    int K = 3;
    std::vector<GaussianPoint> points;

    std::size_t size() const { return points.size(); }
    bool empty() const { return points.empty(); }

    /// Throws ContractViolation if any point has the wrong attribute sizes.
    void validate() const;
};

/// Accumulated screen-space positional gradient per point, reset after each densify.
struct DensifyStats {
    std::vector<double> grad_accum;
    std::vector<int> count;

    void reset(std::size_t n) {
        grad_accum.assign(n, 0.0);
        count.assign(n, 0);
    }
    void add(std::size_t i, double grad_norm) {
        grad_accum[i] += grad_norm;
        ++count[i];
    }
    double mean(std::size_t i) const { return count[i] > 0 ? grad_accum[i] / count[i] : 0.0; }
};

/// Rotation matrix of a (not necessarily unit) quaternion by the polynomial formula.
Mat3 quaternion_to_rotation(const Vec4& q);

/// Sigma = R S S^T R^T. Requires |r| = 1 within 1e-6 and s > 0.
Mat3 build_covariance(const Vec4& r, const Vec3& s);

struct CovarianceGrad {
    Vec4 d_rotation = Vec4::Zero();
    Vec3 d_scale = Vec3::Zero();
};

/// Gradient of build_covariance treating every entry of d_cov as independent.
CovarianceGrad build_covariance_backward(const Vec4& r, const Vec3& s, const Mat3& d_cov);

/// Covariance from raw optimizer parameters: rotation normalized, scale = exp(log_scale).
Mat3 covariance_from_parameters(const Vec4& raw_rotation, const Vec3& log_scale);

struct ParameterCovarianceGrad {
    Vec4 d_raw_rotation = Vec4::Zero();
    Vec3 d_log_scale = Vec3::Zero();
};

ParameterCovarianceGrad covariance_from_parameters_backward(const Vec4& raw_rotation,
                                                            const Vec3& log_scale,
                                                            const Mat3& d_cov);

/// exp(-1/2 (x - mean)^T cov^-1 (x - mean)). Throws DegenerateCovariance when
/// the condition number of cov reaches 1e12.
double gaussian_weight(const Vec3& x, const Vec3& mean, const Mat3& cov);

struct GaussianWeightGrad {
    Vec3 d_x = Vec3::Zero();
    Vec3 d_mean = Vec3::Zero();
    Mat3 d_cov = Mat3::Zero();
};

GaussianWeightGrad gaussian_weight_backward(const Vec3& x, const Vec3& mean, const Mat3& cov,
                                            double d_weight);

struct DensifyOptions {
    double grad_threshold = 4e-4;
    double min_opacity = 0.005;
    double scene_extent = 1.0;
    double percent_dense = 0.01;  // clone when max scale <= percent_dense * extent
    double split_divisor = 1.6;
    int split_children = 2;
};

struct DensifyResult {
    GaussianCloud cloud;
    /// For every output point, the index of the input point it came from.
    std::vector<std::size_t> origin;
    /// True for points copied unchanged from the input (optimizer state may be kept).
    std::vector<bool> untouched;
    std::size_t cloned = 0;
    std::size_t split = 0;
    std::size_t pruned = 0;
};

/// Clone small high-gradient points, split large ones, then drop low-opacity points.
/// Untouched points keep their relative order and come first; new points follow.
/// Children inherit the parent's intrinsic feature and sampling coordinates verbatim.
DensifyResult densify_and_prune(const GaussianCloud& cloud, const DensifyStats& stats,
                                const DensifyOptions& options, std::mt19937_64& rng);

}  // namespace gsw
