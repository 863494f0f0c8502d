#pragma once

#include <cstdint>
#include <vector>

#include "gsocc/types.hpp"

namespace gsocc {

// Dense labeled voxel volume. Flat index = (x*Y + y)*Z + z.
struct OccupancyGrid {
    SceneBox box;
    std::vector<std::uint8_t> labels;
    std::vector<double> confidence;  // accumulated splat mass; may be empty

    bool has_confidence() const { return !confidence.empty(); }

    std::uint8_t label_at(int x, int y, int z) const {
        return labels[static_cast<std::size_t>(box.flat_index(x, y, z))];
    }

    void validate(int num_classes) const;
};

OccupancyGrid make_empty_grid(const SceneBox& box);

// Dense per-voxel accumulated semantic mass, X*Y*Z*C, channel innermost.
struct SemanticField {
    SceneBox box;
    int num_classes = 0;
    std::vector<double> values;

    double* at(std::int64_t flat) { return values.data() + flat * num_classes; }
    const double* at(std::int64_t flat) const { return values.data() + flat * num_classes; }
};

SemanticField make_empty_field(const SceneBox& box, int num_classes);

// Argmax materialization. Voxels whose total mass is below mass_floor are
// labeled free (class 0); confidence holds the total mass either way.
OccupancyGrid field_to_grid(const SemanticField& field, double mass_floor = 1e-6);

}  // namespace gsocc
