#pragma once

#include <vector>

#include "gsocc/types.hpp"

namespace gsocc {

// Pinhole camera: intrinsics K (pixels), extrinsics E mapping world to
// camera coordinates, image size in pixels. Pixel (i, j) is centered at
// (i, j); a point is in-image when 0 <= u <= W-1 and 0 <= v <= H-1.
struct CameraModel {
    Mat3 intrinsics = Mat3::Identity();
    Mat34 extrinsics = Mat34::Zero();
    int width = 0;
    int height = 0;

    Vec3 camera_center() const {
        const Mat3 r = extrinsics.leftCols<3>();
        return -r.transpose() * extrinsics.col(3);
    }

    void validate() const;
};

CameraModel look_at_camera(const Vec3& position, const Vec3& target, const Vec3& up,
                           double focal_px, int width, int height);

struct PixelProjection {
    double u = 0.0;
    double v = 0.0;
    double depth = 0.0;  // camera-frame z
    bool valid = false;
};

// World point -> pixel. Points with camera z <= z_near or outside the image
// are flagged invalid; the coordinates are still filled for diagnostics.
PixelProjection project_point(const Vec3& p, const CameraModel& cam, double z_near = 1e-4);

// Multi-scale 2D feature maps standing in for the image backbone.
struct FeaturePyramid {
    struct Level {
        int width = 0;
        int height = 0;
        int stride = 1;
        std::vector<double> data;  // height x width x channels, row-major

        const double* at(int x, int y, int channels) const {
            return data.data() + (static_cast<std::size_t>(y) * width + x) * channels;
        }
        double* at(int x, int y, int channels) {
            return data.data() + (static_cast<std::size_t>(y) * width + x) * channels;
        }
    };

    int channels = 0;
    std::vector<Level> levels;

    void validate() const;
};

// Bilinear lookup at level-0 pixel coordinates (u, v), scaled by the level's
// stride. Returns false (and leaves `out` untouched) when the scaled point
// falls outside [0, W_l-1] x [0, H_l-1].
bool bilinear_sample(const FeaturePyramid::Level& level, int channels, double u, double v,
                     double* out);

}  // namespace gsocc
