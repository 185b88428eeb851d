#include "gsw/scene.hpp"

#include <Eigen/LU>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>

namespace gsw {

void GaussianCloud::validate() const {
    require(K >= 1, "cloud K must be at least 1");
    for (const auto& p : points) {
        require(p.intrinsic.size() == static_cast<std::size_t>(kIntrinsicDim),
                "intrinsic feature must have 48 entries");
        require(p.sampling_coords.size() == static_cast<std::size_t>(2 * K),
                "sampling coordinates must have 2K entries");
    }
}

Mat3 quaternion_to_rotation(const Vec4& q) {
    const double w = q[0], x = q[1], y = q[2], z = q[3];
    Mat3 r;
    r << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
        2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
        2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
    return r;
}

namespace {

Vec4 rotation_backward(const Vec4& q, const Mat3& d) {
    const double w = q[0], x = q[1], y = q[2], z = q[3];
    Vec4 g;
    g[0] = 2 * (-z * d(0, 1) + y * d(0, 2) + z * d(1, 0) - x * d(1, 2) - y * d(2, 0) + x * d(2, 1));
    g[1] = 2 * (y * d(0, 1) + z * d(0, 2) + y * d(1, 0) - 2 * x * d(1, 1) - w * d(1, 2) +
                z * d(2, 0) + w * d(2, 1) - 2 * x * d(2, 2));
    g[2] = 2 * (-2 * y * d(0, 0) + x * d(0, 1) + w * d(0, 2) + x * d(1, 0) + z * d(1, 2) -
                w * d(2, 0) + z * d(2, 1) - 2 * y * d(2, 2));
    g[3] = 2 * (-2 * z * d(0, 0) - w * d(0, 1) + x * d(0, 2) + w * d(1, 0) - 2 * z * d(1, 1) +
                y * d(1, 2) + x * d(2, 0) + y * d(2, 1));
    return g;
}

Mat3 covariance_unchecked(const Vec4& r, const Vec3& s) {
    const Mat3 m = quaternion_to_rotation(r) * s.asDiagonal();
    Mat3 cov;
    for (int i = 0; i < 3; ++i)
        for (int j = i; j < 3; ++j) cov(i, j) = cov(j, i) = m.row(i).dot(m.row(j));
    return cov;
}

CovarianceGrad covariance_backward_unchecked(const Vec4& r, const Vec3& s, const Mat3& d_cov) {
    const Mat3 rot = quaternion_to_rotation(r);
    const Mat3 m = rot * s.asDiagonal();
    const Mat3 d_m = (d_cov + d_cov.transpose()) * m;
    CovarianceGrad g;
    g.d_rotation = rotation_backward(r, d_m * s.asDiagonal());
    g.d_scale = (rot.array() * d_m.array()).colwise().sum().transpose();
    return g;
}

}  // namespace

Mat3 build_covariance(const Vec4& r, const Vec3& s) {
    if (std::abs(r.norm() - 1.0) > 1e-6) throw ContractViolation("build_covariance: quaternion is not unit");
    require((s.array() > 0).all(), "build_covariance: scales must be positive");
    return covariance_unchecked(r, s);
}

CovarianceGrad build_covariance_backward(const Vec4& r, const Vec3& s, const Mat3& d_cov) {
    if (std::abs(r.norm() - 1.0) > 1e-6) throw ContractViolation("build_covariance: quaternion is not unit");
    return covariance_backward_unchecked(r, s, d_cov);
}

Mat3 covariance_from_parameters(const Vec4& raw_rotation, const Vec3& log_scale) {
    const double n = raw_rotation.norm();
    require(n > 0, "rotation quaternion is zero");
    return covariance_unchecked(raw_rotation / n, log_scale.array().exp());
}

ParameterCovarianceGrad covariance_from_parameters_backward(const Vec4& raw_rotation,
                                                            const Vec3& log_scale,
                                                            const Mat3& d_cov) {
    const double n = raw_rotation.norm();
    require(n > 0, "rotation quaternion is zero");
    const Vec4 q = raw_rotation / n;
    const Vec3 s = log_scale.array().exp();
    const CovarianceGrad g = covariance_backward_unchecked(q, s, d_cov);
    ParameterCovarianceGrad out;
    out.d_raw_rotation = (g.d_rotation - q * q.dot(g.d_rotation)) / n;
    out.d_log_scale = g.d_scale.cwiseProduct(s);
    return out;
}

namespace {

Mat3 checked_inverse(const Mat3& cov) {
    Eigen::JacobiSVD<Mat3> svd(cov);
    const auto sv = svd.singularValues();
    if (!(sv[2] > 0.0) || sv[0] / sv[2] >= 1e12) {
        throw DegenerateCovariance("gaussian_weight: covariance is singular or ill-conditioned");
    }
    return cov.inverse();
}

}  // namespace

double gaussian_weight(const Vec3& x, const Vec3& mean, const Mat3& cov) {
    const Mat3 inv = checked_inverse(cov);
    const Vec3 d = x - mean;
    return std::exp(-0.5 * d.dot(inv * d));
}

GaussianWeightGrad gaussian_weight_backward(const Vec3& x, const Vec3& mean, const Mat3& cov,
                                            double d_weight) {
    const Mat3 inv = checked_inverse(cov);
    const Vec3 d = x - mean;
    const double w = std::exp(-0.5 * d.dot(inv * d));
    const double d_q = -0.5 * w * d_weight;
    GaussianWeightGrad g;
    g.d_x = d_q * (inv + inv.transpose()) * d;
    g.d_mean = -g.d_x;
    g.d_cov = -d_q * inv.transpose() * (d * d.transpose()) * inv.transpose();
    return g;
}

DensifyResult densify_and_prune(const GaussianCloud& cloud, const DensifyStats& stats,
                                const DensifyOptions& options, std::mt19937_64& rng) {
    require(stats.grad_accum.size() == cloud.size() && stats.count.size() == cloud.size(),
            "densify_and_prune: stats not aligned with cloud");

    const std::size_t n = cloud.size();
    std::vector<bool> replaced(n, false);
    std::vector<GaussianPoint> children;
    std::vector<std::size_t> child_origin;
    DensifyResult result;
    std::normal_distribution<double> normal(0.0, 1.0);

    const double clone_limit = options.percent_dense * options.scene_extent;
    for (std::size_t i = 0; i < n; ++i) {
        if (stats.mean(i) <= options.grad_threshold) continue;
        const GaussianPoint& parent = cloud.points[i];
        const Vec3 scale = parent.scale();
        if (scale.maxCoeff() <= clone_limit) {
            children.push_back(parent);
            child_origin.push_back(i);
            ++result.cloned;
            continue;
        }
        const Mat3 rot = quaternion_to_rotation(parent.rotation / parent.rotation.norm());
        for (int c = 0; c < options.split_children; ++c) {
            GaussianPoint child = parent;
            const Vec3 offset(normal(rng) * scale[0], normal(rng) * scale[1], normal(rng) * scale[2]);
            child.position = parent.position + rot * offset;
            child.log_scale = (scale / options.split_divisor).array().log();
            children.push_back(std::move(child));
            child_origin.push_back(i);
        }
        replaced[i] = true;
        ++result.split;
    }

    result.cloud.K = cloud.K;
    auto keep = [&](const GaussianPoint& p) { return p.opacity() >= options.min_opacity; };
    for (std::size_t i = 0; i < n; ++i) {
        if (replaced[i]) continue;
        if (!keep(cloud.points[i])) {
            ++result.pruned;
            continue;
        }
        result.cloud.points.push_back(cloud.points[i]);
        result.origin.push_back(i);
        result.untouched.push_back(true);
    }
    for (std::size_t c = 0; c < children.size(); ++c) {
        if (!keep(children[c])) {
            ++result.pruned;
            continue;
        }
        result.cloud.points.push_back(std::move(children[c]));
        result.origin.push_back(child_origin[c]);
        result.untouched.push_back(false);
    }
    if (result.cloud.empty()) throw TrainingCollapse("densify_and_prune: every point was pruned");
    return result;
}

}  // namespace gsw
