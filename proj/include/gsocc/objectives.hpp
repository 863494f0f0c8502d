#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "gsocc/gaussian.hpp"
#include "gsocc/grid.hpp"

namespace gsocc {

// Per-voxel class probabilities, voxel-major (v * C + k), rows on the simplex.
struct ProbField {
    int num_classes = 0;
    std::int64_t num_voxels = 0;
    std::vector<double> probs;

    double* at(std::int64_t v) { return probs.data() + v * num_classes; }
    const double* at(std::int64_t v) const { return probs.data() + v * num_classes; }
};

// probs_k = (values_k + 1e-8 + [k==0] free_prior) / (sum(values + 1e-8) + free_prior).
// free_prior = 0 is the plain softmax-of-log-mass mapping; a positive value
// plays the role of the labeling mass floor inside the losses: voxels with
// negligible mass read as free instead of uniform, and a class only wins a
// voxel by out-massing the prior.
ProbField field_to_probs(const SemanticField& field, double free_prior);

// Mean over voxels of -alpha (1 - p_t)^gamma log(p_t), p_t clamped at 1e-12.
// If grad is non-null, accumulates dLoss/dprobs into it (same layout).
double focal_loss(const ProbField& probs, const std::vector<std::uint8_t>& labels,
                  double gamma, double alpha, std::vector<double>* grad = nullptr);

// Lovasz-softmax: per class present in the target, the Lovasz extension of
// the Jaccard loss over sorted errors; mean over present classes. In [0, 1].
double lovasz_softmax(const ProbField& probs, const std::vector<std::uint8_t>& labels,
                      std::vector<double>* grad = nullptr);

enum class AffinityMode { kGeometry, kSemantic };

// Scene-class affinity: soft precision/recall/specificity scored as
// -(log P + log R + log S) / #defined-terms. Geometry mode collapses classes
// to occupied/free mass; semantic mode averages per nonfree class present in
// the target.
double scene_class_affinity(const ProbField& probs, const std::vector<std::uint8_t>& labels,
                            AffinityMode mode, std::vector<double>* grad = nullptr);

struct IoUResult {
    double iou = 0.0;                  // occupied vs free
    std::vector<double> per_class;     // semantic classes 1..C-1; NaN if absent
    double miou = 0.0;                 // mean over classes present in gt or pred
    bool defined = true;               // false when the mask selects nothing
};

// mask, when given, must have one entry per voxel; nonzero = evaluate.
IoUResult iou_miou(const OccupancyGrid& pred, const OccupancyGrid& gt, int num_classes,
                   const std::vector<std::uint8_t>* mask = nullptr);

struct LossWeights {
    double focal = 1.0;
    double lovasz = 1.0;
    double geo = 1.0;
    double sem = 1.0;
    double gamma = 2.0;
    double alpha = 1.0;
    double free_prior = 0.03;
};

struct LossBreakdown {
    double total = 0.0, focal = 0.0, lovasz = 0.0, geo = 0.0, sem = 0.0;
};

// Weighted loss of a splatted field against ground-truth labels. If
// grad_values is non-null it receives dLoss/dvalues with the field's layout.
LossBreakdown occupancy_loss(const SemanticField& field, const std::vector<std::uint8_t>& labels,
                             const LossWeights& weights, std::vector<double>* grad_values = nullptr);

struct FitOptions {
    int num_gaussians = 16200;
    double s_max = 0.08;
    int steps = 2000;
    double learning_rate = 1e-2;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    double cutoff_sigma = 3.0;
    std::uint64_t seed = 0;
    bool init_from_occupied = true;  // false: uniform random in box
    LossWeights weights;
    // Called once per step when set (step, breakdown).
    std::function<void(int, const LossBreakdown&)> on_step;
};

struct FitResult {
    std::vector<GaussianAnchor> anchors;
    std::vector<UnconstrainedAnchor> raw;
    std::vector<LossBreakdown> curve;
};

// Adaptive-moment gradient descent on unconstrained anchors through
// splat_forward and the weighted loss above. Throws NumericalError if the
// loss goes non-finite.
FitResult fit_gaussians(const OccupancyGrid& gt, int num_classes, const FitOptions& options);

std::vector<UnconstrainedAnchor> init_anchors(const OccupancyGrid& gt, int num_classes,
                                              int count, bool from_occupied, std::uint64_t seed);

}  // namespace gsocc
