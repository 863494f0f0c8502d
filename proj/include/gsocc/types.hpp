#pragma once

#include <Eigen/Core>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace gsocc {

using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;
using Vec3i = Eigen::Vector3i;
using Mat3 = Eigen::Matrix3d;
using Mat34 = Eigen::Matrix<double, 3, 4>;
using VecX = Eigen::VectorXd;
using MatX = Eigen::MatrixXd;

// Thrown for malformed inputs (bad shapes, non-finite values, broken files).
// The CLI maps this to exit code 3.
class ValidationError : public std::runtime_error {
public:
    explicit ValidationError(const std::string& msg) : std::runtime_error(msg) {}
};

// Thrown when an optimization or kernel produces non-finite results.
// The CLI maps this to exit code 4.
class NumericalError : public std::runtime_error {
public:
    explicit NumericalError(const std::string& msg) : std::runtime_error(msg) {}
};

inline double sigmoid(double x) {
    if (x >= 0.0) {
        return 1.0 / (1.0 + std::exp(-x));
    }
    const double e = std::exp(x);
    return e / (1.0 + e);
}

inline double sigmoid_grad(double x) {
    const double s = sigmoid(x);
    return s * (1.0 - s);
}

inline double logit(double p) { return std::log(p) - std::log1p(-p); }

// Axis-aligned voxelized volume. `extent` must be (close to) an integer
// multiple of `voxel_size`; grid dimensions are round(extent / voxel_size).
struct SceneBox {
    Vec3 origin{0.0, 0.0, 0.0};
    Vec3 extent{0.0, 0.0, 0.0};
    double voxel_size = 0.0;

    Vec3i dims() const {
        return Vec3i(static_cast<int>(std::lround(extent.x() / voxel_size)),
                     static_cast<int>(std::lround(extent.y() / voxel_size)),
                     static_cast<int>(std::lround(extent.z() / voxel_size)));
    }

    std::int64_t voxel_count() const {
        const Vec3i d = dims();
        return static_cast<std::int64_t>(d.x()) * d.y() * d.z();
    }

    // Flat index order is x-major, then y, then z.
    std::int64_t flat_index(int x, int y, int z) const {
        const Vec3i d = dims();
        return (static_cast<std::int64_t>(x) * d.y() + y) * d.z() + z;
    }

    Vec3 voxel_center(int x, int y, int z) const {
        return origin + Vec3((x + 0.5) * voxel_size, (y + 0.5) * voxel_size,
                             (z + 0.5) * voxel_size);
    }

    bool contains(const Vec3& p) const {
        const Vec3 l = p - origin;
        return l.x() >= 0.0 && l.y() >= 0.0 && l.z() >= 0.0 &&
               l.x() <= extent.x() && l.y() <= extent.y() && l.z() <= extent.z();
    }

    void validate() const {
        if (!(voxel_size > 0.0)) {
            throw ValidationError("SceneBox: voxel_size must be positive");
        }
        for (int a = 0; a < 3; ++a) {
            if (!(extent[a] > 0.0)) {
                throw ValidationError("SceneBox: extent must be positive");
            }
            const double cells = extent[a] / voxel_size;
            if (std::abs(cells - std::lround(cells)) > 0.5) {
                throw ValidationError("SceneBox: extent not an integral number of voxels");
            }
        }
        if (!origin.allFinite() || !extent.allFinite()) {
            throw ValidationError("SceneBox: non-finite geometry");
        }
    }
};

inline bool operator==(const SceneBox& a, const SceneBox& b) {
    return a.origin == b.origin && a.extent == b.extent && a.voxel_size == b.voxel_size;
}

// Default class layout, free space at index 0 (11 semantic classes follow).
inline constexpr int kDefaultNumClasses = 12;

inline const char* class_name(int c) {
    static const char* names[kDefaultNumClasses] = {
        "free",  "ceiling", "floor", "wall",      "window",  "chair",
        "bed",   "sofa",    "table", "tvs",       "furniture", "objects"};
    if (c >= 0 && c < kDefaultNumClasses) return names[c];
    return "unknown";
}

}  // namespace gsocc
