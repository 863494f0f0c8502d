#include "gsocc/camera.hpp"

#include <cmath>

namespace gsocc {

void CameraModel::validate() const {
    if (width < 1 || height < 1) throw ValidationError("CameraModel: bad image size");
    const Mat3& k = intrinsics;
    if (!(k(0, 0) > 0.0) || !(k(1, 1) > 0.0) || std::abs(k(1, 0)) > 1e-12 ||
        std::abs(k(2, 0)) > 1e-12 || std::abs(k(2, 1)) > 1e-12 ||
        std::abs(k(2, 2) - 1.0) > 1e-12) {
        throw ValidationError("CameraModel: intrinsics not upper-triangular with positive focals");
    }
    const Mat3 r = extrinsics.leftCols<3>();
    if ((r.transpose() * r - Mat3::Identity()).cwiseAbs().maxCoeff() > 1e-6) {
        throw ValidationError("CameraModel: extrinsic rotation not orthonormal");
    }
}

CameraModel look_at_camera(const Vec3& position, const Vec3& target, const Vec3& up,
                           double focal_px, int width, int height) {
    CameraModel cam;
    cam.width = width;
    cam.height = height;
    cam.intrinsics = Mat3::Identity();
    cam.intrinsics(0, 0) = focal_px;
    cam.intrinsics(1, 1) = focal_px;
    cam.intrinsics(0, 2) = 0.5 * (width - 1);
    cam.intrinsics(1, 2) = 0.5 * (height - 1);

    // camera frame: +z forward, +x right, +y down
    const Vec3 forward = (target - position).normalized();
    Vec3 right = forward.cross(up);
    if (right.norm() < 1e-9) right = forward.cross(Vec3(1, 0, 0));
    right.normalize();
    const Vec3 down = forward.cross(right).normalized();

    Mat3 r_wc;
    r_wc.row(0) = right.transpose();
    r_wc.row(1) = down.transpose();
    r_wc.row(2) = forward.transpose();
    cam.extrinsics.leftCols<3>() = r_wc;
    cam.extrinsics.col(3) = -r_wc * position;
    return cam;
}

PixelProjection project_point(const Vec3& p, const CameraModel& cam, double z_near) {
    PixelProjection out;
    const Vec3 x_cam = cam.extrinsics.leftCols<3>() * p + cam.extrinsics.col(3);
    out.depth = x_cam.z();
    if (!(x_cam.z() > z_near)) return out;
    const Vec3 px = cam.intrinsics * (x_cam / x_cam.z());
    out.u = px.x();
    out.v = px.y();
    out.valid = out.u >= 0.0 && out.u <= cam.width - 1.0 && out.v >= 0.0 &&
                out.v <= cam.height - 1.0;
    return out;
}

void FeaturePyramid::validate() const {
    if (channels < 1 || levels.empty()) throw ValidationError("FeaturePyramid: empty");
    int prev_stride = 0;
    for (const auto& l : levels) {
        if (l.stride <= prev_stride) {
            throw ValidationError("FeaturePyramid: strides must be strictly increasing");
        }
        prev_stride = l.stride;
        if (l.data.size() !=
            static_cast<std::size_t>(l.width) * l.height * channels) {
            throw ValidationError("FeaturePyramid: level size mismatch");
        }
        for (double v : l.data) {
            if (!std::isfinite(v)) throw ValidationError("FeaturePyramid: non-finite value");
        }
    }
}

bool bilinear_sample(const FeaturePyramid::Level& level, int channels, double u, double v,
                     double* out) {
    const double ul = u / level.stride;
    const double vl = v / level.stride;
    if (ul < 0.0 || ul > level.width - 1.0 || vl < 0.0 || vl > level.height - 1.0) {
        return false;
    }
    int x0 = static_cast<int>(std::floor(ul));
    int y0 = static_cast<int>(std::floor(vl));
    x0 = std::min(x0, level.width - 2);
    y0 = std::min(y0, level.height - 2);
    if (level.width == 1) x0 = 0;
    if (level.height == 1) y0 = 0;
    const int x1 = std::min(x0 + 1, level.width - 1);
    const int y1 = std::min(y0 + 1, level.height - 1);
    const double wx = ul - x0;
    const double wy = vl - y0;
    const double* p00 = level.at(x0, y0, channels);
    const double* p10 = level.at(x1, y0, channels);
    const double* p01 = level.at(x0, y1, channels);
    const double* p11 = level.at(x1, y1, channels);
    for (int c = 0; c < channels; ++c) {
        out[c] = (1 - wx) * (1 - wy) * p00[c] + wx * (1 - wy) * p10[c] +
                 (1 - wx) * wy * p01[c] + wx * wy * p11[c];
    }
    return true;
}

}  // namespace gsocc
