#pragma once

#include <unordered_map>
#include <vector>

#include "gsocc/gaussian.hpp"

namespace gsocc {

// Sparse tensor over occupied self-encoder cells. Coordinates are unique and
// lexicographically sorted; each Gaussian index appears in exactly one
// owners list (sorted by the owning anchor's mean so cell aggregates do not
// depend on input order). gate_opacity stores the opacity logit of the
// cell's max-opacity member (the "o" of the gated convolution).
struct SparseGaussianTensor {
    std::vector<Vec3i> coords;
    std::vector<VecX> feats;
    std::vector<std::vector<int>> owners;
    std::vector<double> gate_opacity;

    int size() const { return static_cast<int>(coords.size()); }
    int feature_width() const { return feats.empty() ? 0 : static_cast<int>(feats[0].size()); }

    // -1 when the cell is unoccupied.
    int find(const Vec3i& coord) const;
    void rebuild_index();

private:
    struct CoordHash {
        std::size_t operator()(const Vec3i& k) const {
            std::size_t seed = 0;
            for (int i = 0; i < 3; ++i) {
                seed ^= static_cast<std::size_t>(k[i]) + 0x9e3779b9 + (seed << 6) + (seed >> 2);
            }
            return seed;
        }
    };
    std::unordered_map<Vec3i, int, CoordHash> index_;
};

struct VoxelizeResult {
    SparseGaussianTensor tensor;
    int clamped_count = 0;  // means outside the box, clamped to boundary cells
};

// cell = floor((mean - origin)/cell_size); co-located features averaged.
VoxelizeResult voxelize_queries(const std::vector<GaussianAnchor>& anchors,
                                const std::vector<VecX>& queries, const SceneBox& box,
                                double cell_size);

// Submanifold sparse convolution weights: one C x C matrix per kernel offset
// (27 for kernel 3, 1 for kernel 1) plus a bias. Offset index for kernel 3 is
// ((dx+1)*3 + (dy+1))*3 + (dz+1).
struct SparseConvLayer {
    int kernel_size = 3;
    int stride = 1;
    std::vector<MatX> weights;
    VecX bias;

    int offset_count() const { return kernel_size == 3 ? 27 : 1; }
    void validate(int c_feat) const;

    static SparseConvLayer zeros(int c_feat, int kernel_size);
    static SparseConvLayer identity(int c_feat, int kernel_size);
};

// Output occupancy equals input occupancy; each output feature sums
// kernel-weighted neighbor features over occupied offsets only.
SparseGaussianTensor submanifold_conv(const SparseGaussianTensor& t, const SparseConvLayer& layer);

// OGSPConv(Q, o) = SPConv3(Q) .* (sigmoid(o) + sigmoid(SPConv1(Q))).
// The opacity term broadcasts over channels; the conv1 term is per-channel,
// so every gate value lies in (sigmoid(o), sigmoid(o) + 1).
SparseGaussianTensor ogspconv(const SparseGaussianTensor& t, const SparseConvLayer& conv3,
                              const SparseConvLayer& conv1);

struct SelfEncoderWeights {
    // one (conv3, conv1) pair per scale
    std::vector<SparseConvLayer> conv3;
    std::vector<SparseConvLayer> conv1;

    int num_scales() const { return static_cast<int>(conv3.size()); }
    void validate(int c_feat) const;
};

// Pyramid of stride-2 mean poolings, each scale gated-convolved, unpooled by
// nearest-neighbor broadcast and summed with the stride-1 path; the summed
// cell outputs are scattered back residually: q' = q + cell_out(cell(q)).
std::vector<VecX> multiscale_self_encode(const SparseGaussianTensor& t,
                                         const std::vector<VecX>& queries,
                                         const SelfEncoderWeights& weights);

}  // namespace gsocc
