#include "gsw/camera.hpp"

#include <Eigen/Geometry>

#include <cmath>

namespace gsw {

void Camera::validate() const {
    const Mat3 r = rotation();
    require((r * r.transpose() - Mat3::Identity()).cwiseAbs().maxCoeff() <= 1e-6,
            "camera rotation block is not orthonormal");
    require(fx > 0 && fy > 0, "camera focal lengths must be positive");
    require(width >= 1 && height >= 1, "camera image must be at least 1x1");
    require(near_clip > 0, "camera near clip must be positive");
}

Camera look_at(const Vec3& eye, const Vec3& target, const Vec3& up, double fx, double fy,
               int width, int height, double near_clip) {
    const Vec3 forward = (target - eye).normalized();
    const Vec3 right = forward.cross(up).normalized();
    const Vec3 down = forward.cross(right);
    Mat3 r;
    r.row(0) = right.transpose();
    r.row(1) = down.transpose();
    r.row(2) = forward.transpose();
    Camera cam;
    cam.fx = fx;
    cam.fy = fy;
    cam.cx = (width - 1) / 2.0;
    cam.cy = (height - 1) / 2.0;
    cam.width = width;
    cam.height = height;
    cam.near_clip = near_clip;
    cam.world_to_cam.setIdentity();
    cam.world_to_cam.topLeftCorner<3, 3>() = r;
    cam.world_to_cam.topRightCorner<3, 1>() = -r * eye;
    return cam;
}

namespace {

Vec3 to_camera(const Vec3& x, const Camera& cam) { return cam.rotation() * x + cam.translation(); }

}  // namespace

ProjectedMean project_point(const Vec3& x, const Camera& cam) {
    const Vec3 t = to_camera(x, cam);
    ProjectedMean out;
    out.depth = t.z();
    if (t.z() <= cam.near_clip) return out;
    out.pixel = Vec2(cam.fx * t.x() / t.z() + cam.cx, cam.fy * t.y() / t.z() + cam.cy);
    out.valid = true;
    return out;
}

Vec3 project_point_backward(const Vec3& x, const Camera& cam, const Vec2& d_pixel, double d_depth) {
    const Vec3 t = to_camera(x, cam);
    if (t.z() <= cam.near_clip) return Vec3::Zero();
    const double iz = 1.0 / t.z();
    Vec3 d_t;
    d_t.x() = d_pixel.x() * cam.fx * iz;
    d_t.y() = d_pixel.y() * cam.fy * iz;
    d_t.z() = -d_pixel.x() * cam.fx * t.x() * iz * iz - d_pixel.y() * cam.fy * t.y() * iz * iz + d_depth;
    return cam.rotation().transpose() * d_t;
}

namespace {

Mat23 projection_jacobian(const Vec3& t, const Camera& cam) {
    const double iz = 1.0 / t.z();
    Mat23 j;
    j << cam.fx * iz, 0.0, -cam.fx * t.x() * iz * iz,
        0.0, cam.fy * iz, -cam.fy * t.y() * iz * iz;
    return j;
}

}  // namespace

Mat2 project_covariance(const Mat3& cov, const Vec3& x, const Camera& cam) {
    const Vec3 t = to_camera(x, cam);
    if (t.z() <= cam.near_clip) throw ContractViolation("project_covariance: point behind near plane");
    const Mat23 m = projection_jacobian(t, cam) * cam.rotation();
    return m * cov * m.transpose() + kCovarianceDilation * Mat2::Identity();
}

ProjectCovarianceGrad project_covariance_backward(const Mat3& cov, const Vec3& x, const Camera& cam,
                                                  const Mat2& d_cov2d) {
    const Vec3 t = to_camera(x, cam);
    if (t.z() <= cam.near_clip) throw ContractViolation("project_covariance: point behind near plane");
    const Mat3 rot = cam.rotation();
    const Mat23 j = projection_jacobian(t, cam);
    const Mat23 m = j * rot;

    ProjectCovarianceGrad g;
    g.d_cov = m.transpose() * d_cov2d * m;
    const Mat23 d_m = d_cov2d * m * cov.transpose() + d_cov2d.transpose() * m * cov;
    const Mat23 d_j = d_m * rot.transpose();

    const double iz = 1.0 / t.z();
    const double iz2 = iz * iz;
    const double iz3 = iz2 * iz;
    Vec3 d_t;
    d_t.x() = -d_j(0, 2) * cam.fx * iz2;
    d_t.y() = -d_j(1, 2) * cam.fy * iz2;
    d_t.z() = -d_j(0, 0) * cam.fx * iz2 + d_j(0, 2) * 2.0 * cam.fx * t.x() * iz3 -
              d_j(1, 1) * cam.fy * iz2 + d_j(1, 2) * 2.0 * cam.fy * t.y() * iz3;
    g.d_position = rot.transpose() * d_t;
    return g;
}

namespace {

double pixel_to_unit(double p, int extent) { return extent > 1 ? 2.0 * p / (extent - 1) - 1.0 : 0.0; }

}  // namespace

std::optional<Vec2> normalized_projection(const Vec3& x, const Camera& cam) {
    const ProjectedMean pm = project_point(x, cam);
    if (!pm.valid) return std::nullopt;
    const Vec2 uv(pixel_to_unit(pm.pixel.x(), cam.width), pixel_to_unit(pm.pixel.y(), cam.height));
    if (std::abs(uv.x()) > 1.0 || std::abs(uv.y()) > 1.0) return std::nullopt;
    return uv;
}

Vec3 normalized_projection_backward(const Vec3& x, const Camera& cam, const Vec2& d_uv) {
    const Vec2 d_pixel(cam.width > 1 ? d_uv.x() * 2.0 / (cam.width - 1) : 0.0,
                       cam.height > 1 ? d_uv.y() * 2.0 / (cam.height - 1) : 0.0);
    return project_point_backward(x, cam, d_pixel, 0.0);
}

ProjectedGaussian project_gaussian(const Vec3& x, const Mat3& cov, const Camera& cam) {
    ProjectedGaussian out;
    const ProjectedMean pm = project_point(x, cam);
    out.depth = pm.depth;
    if (!pm.valid) return out;
    out.pixel_mean = pm.pixel;
    out.cov2d = project_covariance(cov, x, cam);
    out.valid = true;
    return out;
}

}  // namespace gsw
