#include "gsocc/ose.hpp"

#include <algorithm>
#include <cmath>

namespace gsocc {

int SparseGaussianTensor::find(const Vec3i& coord) const {
    const auto it = index_.find(coord);
    return it == index_.end() ? -1 : it->second;
}

void SparseGaussianTensor::rebuild_index() {
    index_.clear();
    index_.reserve(coords.size());
    for (int i = 0; i < size(); ++i) index_.emplace(coords[static_cast<std::size_t>(i)], i);
}

VoxelizeResult voxelize_queries(const std::vector<GaussianAnchor>& anchors,
                                const std::vector<VecX>& queries, const SceneBox& box,
                                double cell_size) {
    if (!(cell_size > 0.0)) throw ValidationError("voxelize_queries: cell_size must be positive");
    if (anchors.size() != queries.size()) {
        throw ValidationError("voxelize_queries: anchor/query count mismatch");
    }
    VoxelizeResult result;
    if (anchors.empty()) return result;

    Vec3i max_cell;
    for (int a = 0; a < 3; ++a) {
        max_cell[a] = std::max(0, static_cast<int>(std::ceil(box.extent[a] / cell_size)) - 1);
    }

    const int n = static_cast<int>(anchors.size());
    std::vector<Vec3i> cell_of(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        const Vec3 local = (anchors[static_cast<std::size_t>(i)].mean - box.origin) / cell_size;
        bool clamped = false;
        Vec3i cell;
        for (int a = 0; a < 3; ++a) {
            int c = static_cast<int>(std::floor(local[a]));
            if (c < 0 || c > max_cell[a]) {
                c = std::clamp(c, 0, max_cell[a]);
                clamped = true;
            }
            cell[a] = c;
        }
        if (clamped) ++result.clamped_count;
        cell_of[static_cast<std::size_t>(i)] = cell;
    }

    // canonical order: cells sorted lexicographically, members sorted by the
    // anchor's mean (ties by opacity) so output is permutation-equivariant
    std::vector<int> order(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
    auto cell_less = [](const Vec3i& a, const Vec3i& b) {
        if (a.x() != b.x()) return a.x() < b.x();
        if (a.y() != b.y()) return a.y() < b.y();
        return a.z() < b.z();
    };
    std::sort(order.begin(), order.end(), [&](int ia, int ib) {
        const Vec3i& ca = cell_of[static_cast<std::size_t>(ia)];
        const Vec3i& cb = cell_of[static_cast<std::size_t>(ib)];
        if (ca != cb) return cell_less(ca, cb);
        const GaussianAnchor& a = anchors[static_cast<std::size_t>(ia)];
        const GaussianAnchor& b = anchors[static_cast<std::size_t>(ib)];
        for (int ax = 0; ax < 3; ++ax) {
            if (a.mean[ax] != b.mean[ax]) return a.mean[ax] < b.mean[ax];
        }
        return a.opacity < b.opacity;
    });

    SparseGaussianTensor& t = result.tensor;
    for (int k = 0; k < n; ++k) {
        const int i = order[static_cast<std::size_t>(k)];
        const Vec3i& cell = cell_of[static_cast<std::size_t>(i)];
        if (t.coords.empty() || t.coords.back() != cell) {
            t.coords.push_back(cell);
            t.feats.push_back(queries[static_cast<std::size_t>(i)]);
            t.owners.push_back({i});
            t.gate_opacity.push_back(anchors[static_cast<std::size_t>(i)].opacity);
        } else {
            t.feats.back() += queries[static_cast<std::size_t>(i)];
            t.owners.back().push_back(i);
            t.gate_opacity.back() =
                std::max(t.gate_opacity.back(), anchors[static_cast<std::size_t>(i)].opacity);
        }
    }
    for (int c = 0; c < t.size(); ++c) {
        t.feats[static_cast<std::size_t>(c)] /=
            static_cast<double>(t.owners[static_cast<std::size_t>(c)].size());
        // Eq. 3 gates with the opacity logit; sigmoid activation makes
        // logit(max opacity) the max member's raw opacity.
        t.gate_opacity[static_cast<std::size_t>(c)] = logit(t.gate_opacity[static_cast<std::size_t>(c)]);
    }
    t.rebuild_index();
    return result;
}

void SparseConvLayer::validate(int c_feat) const {
    if (kernel_size != 1 && kernel_size != 3) {
        throw ValidationError("SparseConvLayer: kernel size must be 1 or 3");
    }
    if (stride != 1) throw ValidationError("SparseConvLayer: submanifold stride must be 1");
    if (static_cast<int>(weights.size()) != offset_count()) {
        throw ValidationError("SparseConvLayer: offset count mismatch");
    }
    for (const MatX& w : weights) {
        if (w.rows() != c_feat || w.cols() != c_feat || !w.allFinite()) {
            throw ValidationError("SparseConvLayer: bad weight matrix");
        }
    }
    if (bias.size() != c_feat || !bias.allFinite()) {
        throw ValidationError("SparseConvLayer: bad bias");
    }
}

SparseConvLayer SparseConvLayer::zeros(int c_feat, int kernel_size) {
    SparseConvLayer l;
    l.kernel_size = kernel_size;
    l.weights.assign(static_cast<std::size_t>(l.offset_count()), MatX::Zero(c_feat, c_feat));
    l.bias = VecX::Zero(c_feat);
    return l;
}

SparseConvLayer SparseConvLayer::identity(int c_feat, int kernel_size) {
    SparseConvLayer l = zeros(c_feat, kernel_size);
    const int center = kernel_size == 3 ? 13 : 0;
    l.weights[static_cast<std::size_t>(center)] = MatX::Identity(c_feat, c_feat);
    return l;
}

SparseGaussianTensor submanifold_conv(const SparseGaussianTensor& t, const SparseConvLayer& layer) {
    layer.validate(t.feature_width());
    SparseGaussianTensor out = t;
    const int n = t.size();
#pragma omp parallel for schedule(static)
    for (int i = 0; i < n; ++i) {
        VecX acc = layer.bias;
        if (layer.kernel_size == 1) {
            acc += layer.weights[0] * t.feats[static_cast<std::size_t>(i)];
        } else {
            const Vec3i& c = t.coords[static_cast<std::size_t>(i)];
            for (int dx = -1; dx <= 1; ++dx)
                for (int dy = -1; dy <= 1; ++dy)
                    for (int dz = -1; dz <= 1; ++dz) {
                        const int nb = t.find(Vec3i(c.x() + dx, c.y() + dy, c.z() + dz));
                        if (nb < 0) continue;
                        const int off = ((dx + 1) * 3 + (dy + 1)) * 3 + (dz + 1);
                        acc.noalias() += layer.weights[static_cast<std::size_t>(off)] *
                                         t.feats[static_cast<std::size_t>(nb)];
                    }
        }
        out.feats[static_cast<std::size_t>(i)] = std::move(acc);
    }
    return out;
}

SparseGaussianTensor ogspconv(const SparseGaussianTensor& t, const SparseConvLayer& conv3,
                              const SparseConvLayer& conv1) {
    if (conv3.kernel_size != 3 || conv1.kernel_size != 1) {
        throw ValidationError("ogspconv: expected kernel sizes 3 and 1");
    }
    SparseGaussianTensor main = submanifold_conv(t, conv3);
    const SparseGaussianTensor gate = submanifold_conv(t, conv1);
    const int n = t.size();
#pragma omp parallel for schedule(static)
    for (int i = 0; i < n; ++i) {
        const double o_term = sigmoid(t.gate_opacity[static_cast<std::size_t>(i)]);
        VecX& f = main.feats[static_cast<std::size_t>(i)];
        const VecX& g = gate.feats[static_cast<std::size_t>(i)];
        for (int k = 0; k < f.size(); ++k) f[k] *= o_term + sigmoid(g[k]);
    }
    return main;
}

void SelfEncoderWeights::validate(int c_feat) const {
    if (conv3.size() != conv1.size() || conv3.empty()) {
        throw ValidationError("SelfEncoderWeights: need one conv pair per scale");
    }
    for (const auto& l : conv3) l.validate(c_feat);
    for (const auto& l : conv1) l.validate(c_feat);
}

namespace {

bool coord_less(const Vec3i& a, const Vec3i& b) {
    if (a.x() != b.x()) return a.x() < b.x();
    if (a.y() != b.y()) return a.y() < b.y();
    return a.z() < b.z();
}

// stride-2 mean pooling of occupied cells; gate opacity pooled by max
SparseGaussianTensor pool2(const SparseGaussianTensor& fine, std::vector<int>* parent_of) {
    const int n = fine.size();
    std::vector<Vec3i> parents(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        const Vec3i& c = fine.coords[static_cast<std::size_t>(i)];
        parents[static_cast<std::size_t>(i)] =
            Vec3i(c.x() >= 0 ? c.x() / 2 : (c.x() - 1) / 2, c.y() >= 0 ? c.y() / 2 : (c.y() - 1) / 2,
                  c.z() >= 0 ? c.z() / 2 : (c.z() - 1) / 2);
    }
    SparseGaussianTensor coarse;
    coarse.coords = parents;
    std::sort(coarse.coords.begin(), coarse.coords.end(), coord_less);
    coarse.coords.erase(std::unique(coarse.coords.begin(), coarse.coords.end()),
                        coarse.coords.end());
    coarse.rebuild_index();

    const int width = fine.feature_width();
    coarse.feats.assign(static_cast<std::size_t>(coarse.size()), VecX::Zero(width));
    coarse.gate_opacity.assign(static_cast<std::size_t>(coarse.size()),
                               -std::numeric_limits<double>::infinity());
    coarse.owners.assign(static_cast<std::size_t>(coarse.size()), {});
    std::vector<int> counts(static_cast<std::size_t>(coarse.size()), 0);
    parent_of->resize(static_cast<std::size_t>(n));
    // fine coords are canonically sorted, so this accumulation order is
    // deterministic and input-permutation independent
    for (int i = 0; i < n; ++i) {
        const int j = coarse.find(parents[static_cast<std::size_t>(i)]);
        (*parent_of)[static_cast<std::size_t>(i)] = j;
        coarse.feats[static_cast<std::size_t>(j)] += fine.feats[static_cast<std::size_t>(i)];
        coarse.gate_opacity[static_cast<std::size_t>(j)] = std::max(
            coarse.gate_opacity[static_cast<std::size_t>(j)], fine.gate_opacity[static_cast<std::size_t>(i)]);
        counts[static_cast<std::size_t>(j)] += 1;
    }
    for (int j = 0; j < coarse.size(); ++j) {
        coarse.feats[static_cast<std::size_t>(j)] /= counts[static_cast<std::size_t>(j)];
    }
    return coarse;
}

}  // namespace

std::vector<VecX> multiscale_self_encode(const SparseGaussianTensor& t,
                                         const std::vector<VecX>& queries,
                                         const SelfEncoderWeights& weights) {
    weights.validate(t.feature_width());
    const int num_scales = weights.num_scales();

    // stride-1 path
    SparseGaussianTensor out0 = ogspconv(t, weights.conv3[0], weights.conv1[0]);
    std::vector<VecX> cell_out = std::move(out0.feats);

    // coarser scales: pool, encode, broadcast back to level-0 cells
    SparseGaussianTensor level = t;
    std::vector<std::vector<int>> chain;  // per scale: level-0 cell -> cell at that scale
    for (int s = 1; s < num_scales; ++s) {
        std::vector<int> parent_of;
        level = pool2(level, &parent_of);
        if (chain.empty()) {
            chain.push_back(parent_of);
        } else {
            std::vector<int> composed(chain.back().size());
            for (std::size_t i = 0; i < composed.size(); ++i) {
                composed[i] = parent_of[static_cast<std::size_t>(chain.back()[i])];
            }
            chain.push_back(std::move(composed));
        }
        const SparseGaussianTensor enc = ogspconv(level, weights.conv3[static_cast<std::size_t>(s)],
                                                  weights.conv1[static_cast<std::size_t>(s)]);
        for (int i = 0; i < t.size(); ++i) {
            cell_out[static_cast<std::size_t>(i)] +=
                enc.feats[static_cast<std::size_t>(chain.back()[static_cast<std::size_t>(i)])];
        }
    }

    // residual scatter back to Gaussians through the owners lists
    std::vector<VecX> updated = queries;
    for (int c = 0; c < t.size(); ++c) {
        for (int g : t.owners[static_cast<std::size_t>(c)]) {
            updated[static_cast<std::size_t>(g)] += cell_out[static_cast<std::size_t>(c)];
        }
    }
    return updated;
}

}  // namespace gsocc
