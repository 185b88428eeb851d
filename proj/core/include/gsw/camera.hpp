#pragma once

#include "gsw/types.hpp"

#include <optional>

namespace gsw {

/// Pinhole camera with a rigid world-to-camera transform. Cameras are fixed inputs.
struct Camera {
    double fx = 1.0;
    double fy = 1.0;
    double cx = 0.0;
    double cy = 0.0;
    int width = 1;
    int height = 1;
    Mat4 world_to_cam = Mat4::Identity();
    double near_clip = 0.01;

    Mat3 rotation() const { return world_to_cam.topLeftCorner<3, 3>(); }
    Vec3 translation() const { return world_to_cam.topRightCorner<3, 1>(); }
    /// Camera center in world coordinates.
    Vec3 center() const { return -rotation().transpose() * translation(); }

    /// Throws ContractViolation unless the rotation block is orthonormal (1e-6),
    /// focal lengths are positive, the image is non-empty and near_clip > 0.
    void validate() const;
};

/// Camera at `eye` looking at `target`; +y of the image points along -up.
Camera look_at(const Vec3& eye, const Vec3& target, const Vec3& up, double fx, double fy,
               int width, int height, double near_clip = 0.01);

struct ProjectedMean {
    Vec2 pixel = Vec2::Zero();
    double depth = 0.0;
    bool valid = false;
};

struct ProjectedGaussian {
    Vec2 pixel_mean = Vec2::Zero();
    double depth = 0.0;
    Mat2 cov2d = Mat2::Identity();
    bool valid = false;
};

/// Low-pass floor added to every projected 2D covariance, in pixel^2.
inline constexpr double kCovarianceDilation = 0.3;

/// Pinhole projection of a world point. Invalid (not an error) behind the near plane.
ProjectedMean project_point(const Vec3& x, const Camera& cam);

/// Gradient w.r.t. the world point given gradients of pixel and depth.
Vec3 project_point_backward(const Vec3& x, const Camera& cam, const Vec2& d_pixel, double d_depth);

/// J W Sigma W^T J^T + 0.3 I. Requires the point to be in front of the near plane.
Mat2 project_covariance(const Mat3& cov, const Vec3& x, const Camera& cam);

struct ProjectCovarianceGrad {
    Mat3 d_cov = Mat3::Zero();
    Vec3 d_position = Vec3::Zero();
};

ProjectCovarianceGrad project_covariance_backward(const Mat3& cov, const Vec3& x, const Camera& cam,
                                                  const Mat2& d_cov2d);

/// Pixel position mapped to [-1,1]^2 with corner pixel centers at +-1.
/// Empty when behind the near plane or outside the image.
std::optional<Vec2> normalized_projection(const Vec3& x, const Camera& cam);

/// Gradient of a valid normalized projection w.r.t. the world point.
Vec3 normalized_projection_backward(const Vec3& x, const Camera& cam, const Vec2& d_uv);

/// Mean, depth and dilated 2D covariance in one call.
ProjectedGaussian project_gaussian(const Vec3& x, const Mat3& cov, const Camera& cam);

}  // namespace gsw
