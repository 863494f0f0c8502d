#pragma once

#include <vector>

#include "gsocc/gaussian.hpp"
#include "gsocc/grid.hpp"

namespace gsocc {

// Gaussian-to-Voxel splatting. For every voxel center x and Gaussian i whose
// cutoff ellipsoid contains x:
//   values[x] += o_i * exp(-1/2 d^T Sigma_i^{-1} d) * softmax(c_i),  d = x - m_i
// Candidates are found through the axis-aligned bounding box of the rotated
// ellipsoid with semi-axes cutoff_sigma * s, then kept by the exact test
// d^T Sigma^{-1} d <= cutoff_sigma^2.
//
// The kernel bins Gaussians into per-voxel candidate lists (ordered by
// Gaussian index) and gathers per voxel, so the result is bit-identical for
// any thread count.
SemanticField splat_forward(const std::vector<GaussianAnchor>& anchors, const SceneBox& box,
                            double cutoff_sigma = 3.0);

// Serial brute-force double loop over all Gaussian-voxel pairs, kept as the
// reference for tests and the benchmark. cutoff_sigma = infinity disables
// truncation entirely.
SemanticField splat_forward_reference(const std::vector<GaussianAnchor>& anchors,
                                      const SceneBox& box, double cutoff_sigma);

struct SplatGradients {
    std::vector<AnchorGrad> anchors;
};

// Analytic adjoint of splat_forward. `upstream` is dLoss/dvalues with the
// field's shape. Differentiates through Sigma = R diag(s^2) R^T, the
// quaternion normalization (rotation gradient is tangent to the unit sphere)
// and softmax(c). The hard cutoff is held fixed (zero derivative).
// Parallel over Gaussians; bit-identical for any thread count.
SplatGradients splat_backward(const std::vector<GaussianAnchor>& anchors, const SceneBox& box,
                              double cutoff_sigma, const SemanticField& upstream);

}  // namespace gsocc
