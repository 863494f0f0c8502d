#pragma once

#include <vector>

#include "gsocc/gaussian.hpp"
#include "gsocc/rng.hpp"
#include "gsocc/types.hpp"

namespace gsocc::test {

inline SceneBox unit_box(int nx, int ny, int nz, double voxel_size) {
    SceneBox box;
    box.origin = Vec3::Zero();
    box.extent = Vec3(nx * voxel_size, ny * voxel_size, nz * voxel_size);
    box.voxel_size = voxel_size;
    return box;
}

inline UnconstrainedAnchor random_raw_anchor(Rng& rng, int num_classes) {
    UnconstrainedAnchor r;
    for (int a = 0; a < 3; ++a) r.raw_mean[a] = rng.normal();
    for (int a = 0; a < 3; ++a) r.raw_scale[a] = rng.normal();
    for (int a = 0; a < 4; ++a) r.raw_rotation[a] = rng.normal();
    r.raw_opacity = rng.normal();
    r.raw_semantics = VecX::Zero(num_classes);
    for (int k = 0; k < num_classes; ++k) r.raw_semantics[k] = rng.normal();
    return r;
}

inline std::vector<GaussianAnchor> random_anchors(Rng& rng, int count, const SceneBox& box,
                                                  double s_max, int num_classes) {
    std::vector<GaussianAnchor> out;
    out.reserve(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) {
        out.push_back(activate(random_raw_anchor(rng, num_classes), box, s_max));
    }
    return out;
}

}  // namespace gsocc::test
