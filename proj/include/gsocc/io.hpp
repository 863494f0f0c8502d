#pragma once

#include <string>
#include <vector>

#include "gsocc/gaussian.hpp"
#include "gsocc/grid.hpp"

namespace gsocc {

// Occupancy grid file (binary, little-endian):
//   magic "OCCG", u32 version word, u32 X, Y, Z, f32 voxel_size,
//   3x f32 origin, X*Y*Z label bytes in (x*Y + y)*Z + z order.
// Low 16 bits of the version word hold format version 1; bit 16 flags a
// trailing confidence block of X*Y*Z f32.
void write_occg(const std::string& path, const OccupancyGrid& grid);
OccupancyGrid read_occg(const std::string& path);

// Gaussian set file: {"count": N, "s_max": f, "box": {...}, "anchors": [...]}
// with each anchor row laid out mean(3), scale(3), rotation(4), opacity(1),
// semantics(C), all 64-bit floats.
void write_gaussians_json(const std::string& path, const std::vector<GaussianAnchor>& anchors,
                          const SceneBox& box, double s_max);
struct GaussianSet {
    std::vector<GaussianAnchor> anchors;
    SceneBox box;
    double s_max = 0.0;
};
GaussianSet read_gaussians_json(const std::string& path);

// "x,y,z,label" dump for external plotting.
void write_grid_csv(const std::string& path, const OccupancyGrid& grid);

struct MetricRow {
    std::string metric;
    std::string cls;
    double value;
};
// CSV with header "metric,class,value".
void write_metrics_csv(const std::string& path, const std::vector<MetricRow>& rows);

struct LossRow {
    int step;
    double loss, focal, lovasz, geo, sem;
};
// CSV with header "step,loss,focal,lovasz,geo,sem".
void write_losses_csv(const std::string& path, const std::vector<LossRow>& rows);

std::string format_double(double v);

}  // namespace gsocc
