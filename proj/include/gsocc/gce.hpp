#pragma once

#include <vector>

#include "gsocc/camera.hpp"
#include "gsocc/gaussian.hpp"

namespace gsocc {

// Fixed sample directions in the Gaussian local frame, norm <= 1 each.
struct OffsetTemplate {
    std::vector<Vec3> base_offsets;

    int count() const { return static_cast<int>(base_offsets.size()); }
    void validate() const;

    // +-principal axes at 1 sigma plus an optional center point (R = 7).
    static OffsetTemplate principal_axes(bool include_center = true);
};

// Dynamic-weight projections of the mixing stage. All maps are affine.
struct MixWeights {
    MatX semantic_proj_w;   // (C*C) x C
    VecX semantic_proj_b;   // C*C
    MatX geometric_proj_w;  // (R*R) x 12
    VecX geometric_proj_b;  // R*R
    MatX attention_proj_w;  // (R*L) x C
    VecX attention_proj_b;  // R*L
    VecX ln_s_gain, ln_s_bias;  // C
    VecX ln_g_gain, ln_g_bias;  // C

    void validate(int c_feat, int num_points, int num_levels) const;
};

// P_j = m + R(r) (offset_j .* s): ellipsoidal reference points, world frame.
std::vector<Vec3> reference_points(const GaussianAnchor& anchor, const OffsetTemplate& tmpl);

struct ProjectedPoints {
    std::vector<PixelProjection> pixels;
    bool any_valid() const;
};

ProjectedPoints project_points(const std::vector<Vec3>& points, const CameraModel& cam,
                               double z_near = 1e-4);

// LayerNorm over the channel axis, eps 1e-5. A (near-)constant row comes out
// as the bias (gains see a zero normalized vector).
VecX layer_norm(const VecX& x, const VecX& gain, const VecX& bias, double eps = 1e-5);

// Per-point bilinear samples over pyramid levels, combined with a masked
// softmax over each point's valid levels. Invalid points give zero rows.
// Result is R x C.
MatX deformable_sample(const VecX& query, const ProjectedPoints& points,
                       const FeaturePyramid& pyramid, const MixWeights& weights);

// Q_s = ReLU(LN(Q_p W_s)), W_s = reshape(semantic_proj(query), C x C).
MatX semantic_mix(const MatX& q_p, const VecX& query, const MixWeights& weights);

// Q_g = ReLU(LN(W_g Q_s)), W_g = reshape(geometric_proj(G), R x R) with
// G = concat(scale, vec(R(r))) in R^12. Mixes across the point axis.
MatX geometric_mix(const MatX& q_s, const GaussianAnchor& anchor, const MixWeights& weights);

// Full cross-encoder pass: every query receives mean-over-points(Q_g) as a
// residual update. Gaussians whose reference points are all invalid are left
// untouched. Parallel over Gaussians.
void cross_encode(const std::vector<GaussianAnchor>& anchors, std::vector<VecX>& queries,
                  const CameraModel& cam, const FeaturePyramid& pyramid,
                  const OffsetTemplate& tmpl, const MixWeights& weights, double z_near = 1e-4);

}  // namespace gsocc
