#pragma once

#include <vector>

#include "gsocc/types.hpp"

namespace gsocc {

// One ellipsoidal scene primitive. Valid instances satisfy:
//   rotation unit-norm (1e-6), scale in (0, s_max], opacity in (0, 1),
//   semantics holds one unnormalized logit per class, class 0 = free.
// Quaternions are scalar-first (w, x, y, z), Hamilton convention.
struct GaussianAnchor {
    Vec3 mean = Vec3::Zero();
    Vec3 scale = Vec3::Ones();
    Vec4 rotation = Vec4(1.0, 0.0, 0.0, 0.0);
    double opacity = 0.5;
    VecX semantics;

    int num_classes() const { return static_cast<int>(semantics.size()); }
    void validate(double s_max) const;
};

// Per-Gaussian feature vector updated by the encoders.
struct GaussianQuery {
    VecX features;
};

// Pre-activation parameterization; activate() always yields a valid anchor.
// Used for residual refinement and for unconstrained gradient descent.
struct UnconstrainedAnchor {
    Vec3 raw_mean = Vec3::Zero();
    Vec3 raw_scale = Vec3::Zero();
    Vec4 raw_rotation = Vec4(1.0, 0.0, 0.0, 0.0);
    double raw_opacity = 0.0;
    VecX raw_semantics;
};

// mean     = origin + sigmoid(raw_mean) .* extent
// scale    = sigmoid(raw_scale) * s_max
// rotation = raw_rotation / |raw_rotation|   (|.| < 1e-12 is an error)
// opacity  = sigmoid(raw_opacity)
// semantics passes through unchanged.
GaussianAnchor activate(const UnconstrainedAnchor& raw, const SceneBox& box, double s_max);

std::vector<GaussianAnchor> activate_all(const std::vector<UnconstrainedAnchor>& raw,
                                         const SceneBox& box, double s_max);

// Scalar-first unit quaternion -> rotation matrix.
Mat3 quaternion_to_matrix(const Vec4& q);

// Hamilton product a*b, both scalar-first.
Vec4 quaternion_multiply(const Vec4& a, const Vec4& b);

// Partial derivatives of quaternion_to_matrix w.r.t. each quaternion entry,
// treating the entries as independent (normalization chained separately).
void quaternion_to_matrix_jacobian(const Vec4& q, Mat3 out[4]);

// Sigma = R diag(s^2) R^T. Symmetric positive definite by construction.
Mat3 covariance(const GaussianAnchor& anchor);

// Gradients w.r.t. the activated anchor fields.
struct AnchorGrad {
    Vec3 mean = Vec3::Zero();
    Vec3 scale = Vec3::Zero();
    Vec4 rotation = Vec4::Zero();
    double opacity = 0.0;
    VecX semantics;
};

// Chain AnchorGrad back through activate() into unconstrained space.
// The rotation gradient is projected onto the unit-sphere tangent, which is
// idempotent with the projection splat_backward already applies.
UnconstrainedAnchor activate_backward(const UnconstrainedAnchor& raw, const SceneBox& box,
                                      double s_max, const AnchorGrad& grad);

}  // namespace gsocc
