#include "gsocc/grid.hpp"

namespace gsocc {

void OccupancyGrid::validate(int num_classes) const {
    box.validate();
    if (static_cast<std::int64_t>(labels.size()) != box.voxel_count()) {
        throw ValidationError("OccupancyGrid: label count does not match dims");
    }
    for (std::uint8_t l : labels) {
        if (l >= num_classes) {
            throw ValidationError("OccupancyGrid: label out of range");
        }
    }
    if (!confidence.empty() &&
        static_cast<std::int64_t>(confidence.size()) != box.voxel_count()) {
        throw ValidationError("OccupancyGrid: confidence count does not match dims");
    }
}

OccupancyGrid make_empty_grid(const SceneBox& box) {
    box.validate();
    OccupancyGrid g;
    g.box = box;
    g.labels.assign(static_cast<std::size_t>(box.voxel_count()), 0);
    return g;
}

SemanticField make_empty_field(const SceneBox& box, int num_classes) {
    box.validate();
    if (num_classes < 2) {
        throw ValidationError("SemanticField: need at least free + one class");
    }
    SemanticField f;
    f.box = box;
    f.num_classes = num_classes;
    f.values.assign(static_cast<std::size_t>(box.voxel_count()) * num_classes, 0.0);
    return f;
}

OccupancyGrid field_to_grid(const SemanticField& field, double mass_floor) {
    OccupancyGrid grid;
    grid.box = field.box;
    const std::int64_t n = field.box.voxel_count();
    grid.labels.assign(static_cast<std::size_t>(n), 0);
    grid.confidence.assign(static_cast<std::size_t>(n), 0.0);
    const int c = field.num_classes;
#pragma omp parallel for schedule(static)
    for (std::int64_t v = 0; v < n; ++v) {
        const double* row = field.at(v);
        double total = 0.0;
        int best = 0;
        double best_val = row[0];
        for (int k = 0; k < c; ++k) {
            total += row[k];
            if (row[k] > best_val) {
                best_val = row[k];
                best = k;
            }
        }
        grid.confidence[static_cast<std::size_t>(v)] = total;
        grid.labels[static_cast<std::size_t>(v)] =
            (total < mass_floor) ? 0 : static_cast<std::uint8_t>(best);
    }
    return grid;
}

}  // namespace gsocc
