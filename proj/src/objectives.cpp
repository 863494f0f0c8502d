#include "gsocc/objectives.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "gsocc/parallel.hpp"
#include "gsocc/rng.hpp"
#include "gsocc/splat.hpp"

namespace gsocc {

namespace {

constexpr double kProbClamp = 1e-12;
constexpr double kMassEps = 1e-8;

void check_labels(const std::vector<std::uint8_t>& labels, std::int64_t num_voxels,
                  int num_classes) {
    if (static_cast<std::int64_t>(labels.size()) != num_voxels) {
        throw ValidationError("loss: label count mismatch");
    }
    for (std::uint8_t l : labels) {
        if (l >= num_classes) throw ValidationError("loss: label out of range");
    }
}

// Gradient of the Lovasz extension of the Jaccard loss for a descending
// error ordering with ground-truth indicator gt_sorted.
std::vector<double> lovasz_grad(const std::vector<int>& gt_sorted) {
    const std::size_t p = gt_sorted.size();
    std::vector<double> jaccard(p);
    double gts = 0.0;
    for (int g : gt_sorted) gts += g;
    double inter_cum = 0.0, union_cum = 0.0;
    for (std::size_t i = 0; i < p; ++i) {
        inter_cum += gt_sorted[i];
        union_cum += 1.0 - gt_sorted[i];
        const double intersection = gts - inter_cum;
        const double uni = gts + union_cum;
        jaccard[i] = 1.0 - intersection / uni;
    }
    for (std::size_t i = p; i-- > 1;) jaccard[i] -= jaccard[i - 1];
    return jaccard;
}

struct AffinityTermGrads {
    // d(term sum)/dx_i = a + b*y_i with y in {0,1}; stored split so callers
    // can apply it per voxel without materializing x.
    double coeff_pos = 0.0;  // applied where y = 1
    double coeff_neg = 0.0;  // applied where y = 0
};

// Soft precision/recall/specificity of mass x against indicator y.
// Returns -(sum of defined log terms)/count and per-voxel gradient coeffs.
double affinity_binary(double sxy, double sx, double sy, double s1x1y, double s1y,
                       AffinityTermGrads* g) {
    double loss = 0.0;
    int count = 0;
    double d_pos = 0.0, d_neg = 0.0;
    if (sy > 0.0 && sx > 0.0) {  // precision
        const double prec = sxy / sx;
        loss += -std::log(std::max(prec, kProbClamp));
        // d(-log P)/dx_i = -(y_i*sx - sxy)/(sx^2 * P) = -(y_i*sx - sxy)/(sx*sxy)
        d_pos += -(sx - sxy) / (sx * sxy);
        d_neg += sxy / (sx * sxy);
        ++count;
    }
    if (sy > 0.0) {  // recall
        const double rec = sxy / sy;
        loss += -std::log(std::max(rec, kProbClamp));
        d_pos += -1.0 / sxy;
        ++count;
    }
    if (s1y > 0.0) {  // specificity
        const double spec = s1x1y / s1y;
        loss += -std::log(std::max(spec, kProbClamp));
        d_neg += 1.0 / s1x1y;
        ++count;
    }
    if (count == 0) {
        if (g) *g = AffinityTermGrads{};
        return 0.0;
    }
    if (g) {
        g->coeff_pos = d_pos / count;
        g->coeff_neg = d_neg / count;
    }
    return loss / count;
}

}  // namespace

ProbField field_to_probs(const SemanticField& field, double free_prior) {
    if (free_prior < 0.0) throw ValidationError("field_to_probs: free_prior must be >= 0");
    ProbField out;
    out.num_classes = field.num_classes;
    out.num_voxels = field.box.voxel_count();
    out.probs.resize(field.values.size());
    const int c = field.num_classes;
#pragma omp parallel for schedule(static)
    for (std::int64_t v = 0; v < out.num_voxels; ++v) {
        const double* row = field.at(v);
        double sum = free_prior;
        for (int k = 0; k < c; ++k) sum += row[k] + kMassEps;
        double* p = out.probs.data() + v * c;
        for (int k = 0; k < c; ++k) p[k] = (row[k] + kMassEps + (k == 0 ? free_prior : 0.0)) / sum;
    }
    return out;
}

double focal_loss(const ProbField& probs, const std::vector<std::uint8_t>& labels,
                  double gamma, double alpha, std::vector<double>* grad) {
    if (gamma < 0.0) throw ValidationError("focal_loss: gamma must be >= 0");
    check_labels(labels, probs.num_voxels, probs.num_classes);
    const std::int64_t n = probs.num_voxels;
    if (n == 0) return 0.0;
    const int c = probs.num_classes;
    const double loss = deterministic_sum(n, [&](std::int64_t v) {
        const double p = std::max(probs.at(v)[labels[static_cast<std::size_t>(v)]], kProbClamp);
        return -alpha * std::pow(1.0 - p, gamma) * std::log(p);
    }) / static_cast<double>(n);
    if (grad) {
        grad->resize(probs.probs.size(), 0.0);
#pragma omp parallel for schedule(static)
        for (std::int64_t v = 0; v < n; ++v) {
            const int t = labels[static_cast<std::size_t>(v)];
            const double p = std::max(probs.at(v)[t], kProbClamp);
            double d = -alpha * std::pow(1.0 - p, gamma) / p;
            if (gamma > 0.0) {
                d += alpha * gamma * std::pow(1.0 - p, gamma - 1.0) * std::log(p);
            }
            (*grad)[static_cast<std::size_t>(v * c + t)] += d / static_cast<double>(n);
        }
    }
    return loss;
}

double lovasz_softmax(const ProbField& probs, const std::vector<std::uint8_t>& labels,
                      std::vector<double>* grad) {
    check_labels(labels, probs.num_voxels, probs.num_classes);
    const std::int64_t n = probs.num_voxels;
    const int c = probs.num_classes;
    if (grad) grad->resize(probs.probs.size(), 0.0);
    if (n == 0) return 0.0;

    std::vector<int> present;
    {
        std::vector<char> seen(static_cast<std::size_t>(c), 0);
        for (std::uint8_t l : labels) seen[l] = 1;
        for (int k = 0; k < c; ++k)
            if (seen[static_cast<std::size_t>(k)]) present.push_back(k);
    }
    if (present.empty()) return 0.0;

    std::vector<double> class_losses(present.size(), 0.0);
#pragma omp parallel for schedule(dynamic, 1)
    for (std::int64_t pi = 0; pi < static_cast<std::int64_t>(present.size()); ++pi) {
        const int cls = present[static_cast<std::size_t>(pi)];
        std::vector<std::pair<double, std::int64_t>> errors(static_cast<std::size_t>(n));
        for (std::int64_t v = 0; v < n; ++v) {
            const double y = labels[static_cast<std::size_t>(v)] == cls ? 1.0 : 0.0;
            errors[static_cast<std::size_t>(v)] = {std::abs(y - probs.at(v)[cls]), v};
        }
        std::sort(errors.begin(), errors.end(), [](const auto& a, const auto& b) {
            if (a.first != b.first) return a.first > b.first;
            return a.second < b.second;
        });
        std::vector<int> gt_sorted(static_cast<std::size_t>(n));
        for (std::int64_t i = 0; i < n; ++i) {
            gt_sorted[static_cast<std::size_t>(i)] =
                labels[static_cast<std::size_t>(errors[static_cast<std::size_t>(i)].second)] == cls;
        }
        const std::vector<double> g = lovasz_grad(gt_sorted);
        double loss = 0.0;
        for (std::int64_t i = 0; i < n; ++i) {
            loss += errors[static_cast<std::size_t>(i)].first * g[static_cast<std::size_t>(i)];
        }
        class_losses[static_cast<std::size_t>(pi)] = loss;
        if (grad) {
            // de/dp = -1 on the class's voxels, +1 elsewhere; each class only
            // touches its own channel, so classes can run in parallel.
            for (std::int64_t i = 0; i < n; ++i) {
                const std::int64_t v = errors[static_cast<std::size_t>(i)].second;
                const double sign = gt_sorted[static_cast<std::size_t>(i)] ? -1.0 : 1.0;
                (*grad)[static_cast<std::size_t>(v * c + cls)] +=
                    sign * g[static_cast<std::size_t>(i)] / static_cast<double>(present.size());
            }
        }
    }
    double total = 0.0;
    for (double l : class_losses) total += l;
    return total / static_cast<double>(present.size());
}

double scene_class_affinity(const ProbField& probs, const std::vector<std::uint8_t>& labels,
                            AffinityMode mode, std::vector<double>* grad) {
    check_labels(labels, probs.num_voxels, probs.num_classes);
    const std::int64_t n = probs.num_voxels;
    const int c = probs.num_classes;
    if (grad) grad->resize(probs.probs.size(), 0.0);
    if (n == 0) return 0.0;

    if (mode == AffinityMode::kGeometry) {
        // x = occupied mass = 1 - p_free, y = (label != 0).
        double sxy = 0.0, sx = 0.0, sy = 0.0, s1x1y = 0.0, s1y = 0.0;
        for (std::int64_t v = 0; v < n; ++v) {
            const double x = 1.0 - probs.at(v)[0];
            const double y = labels[static_cast<std::size_t>(v)] != 0 ? 1.0 : 0.0;
            sxy += x * y;
            sx += x;
            sy += y;
            s1x1y += (1.0 - x) * (1.0 - y);
            s1y += 1.0 - y;
        }
        AffinityTermGrads tg;
        const double loss = affinity_binary(sxy, sx, sy, s1x1y, s1y, grad ? &tg : nullptr);
        if (grad) {
            for (std::int64_t v = 0; v < n; ++v) {
                const bool pos = labels[static_cast<std::size_t>(v)] != 0;
                // dL/dp_free = -dL/dx
                (*grad)[static_cast<std::size_t>(v * c)] -= pos ? tg.coeff_pos : tg.coeff_neg;
            }
        }
        return loss;
    }

    // Semantic mode: average over nonfree classes present in the target.
    std::vector<int> present;
    {
        std::vector<char> seen(static_cast<std::size_t>(c), 0);
        for (std::uint8_t l : labels) seen[l] = 1;
        for (int k = 1; k < c; ++k)
            if (seen[static_cast<std::size_t>(k)]) present.push_back(k);
    }
    if (present.empty()) return 0.0;
    double total = 0.0;
    for (int cls : present) {
        double sxy = 0.0, sx = 0.0, sy = 0.0, s1x1y = 0.0, s1y = 0.0;
        for (std::int64_t v = 0; v < n; ++v) {
            const double x = probs.at(v)[cls];
            const double y = labels[static_cast<std::size_t>(v)] == cls ? 1.0 : 0.0;
            sxy += x * y;
            sx += x;
            sy += y;
            s1x1y += (1.0 - x) * (1.0 - y);
            s1y += 1.0 - y;
        }
        AffinityTermGrads tg;
        total += affinity_binary(sxy, sx, sy, s1x1y, s1y, grad ? &tg : nullptr);
        if (grad) {
            const double scale = 1.0 / static_cast<double>(present.size());
            for (std::int64_t v = 0; v < n; ++v) {
                const bool pos = labels[static_cast<std::size_t>(v)] == cls;
                (*grad)[static_cast<std::size_t>(v * c + cls)] +=
                    scale * (pos ? tg.coeff_pos : tg.coeff_neg);
            }
        }
    }
    return total / static_cast<double>(present.size());
}

IoUResult iou_miou(const OccupancyGrid& pred, const OccupancyGrid& gt, int num_classes,
                   const std::vector<std::uint8_t>* mask) {
    if (pred.box.dims() != gt.box.dims()) {
        throw ValidationError("iou_miou: grid dimension mismatch");
    }
    const std::int64_t n = static_cast<std::int64_t>(pred.labels.size());
    if (mask && static_cast<std::int64_t>(mask->size()) != n) {
        throw ValidationError("iou_miou: mask size mismatch");
    }
    IoUResult res;
    std::int64_t occ_inter = 0, occ_union = 0, selected = 0;
    std::vector<std::int64_t> inter(static_cast<std::size_t>(num_classes), 0);
    std::vector<std::int64_t> uni(static_cast<std::size_t>(num_classes), 0);
    for (std::int64_t v = 0; v < n; ++v) {
        if (mask && !(*mask)[static_cast<std::size_t>(v)]) continue;
        ++selected;
        const int p = pred.labels[static_cast<std::size_t>(v)];
        const int g = gt.labels[static_cast<std::size_t>(v)];
        if (p != 0 && g != 0) ++occ_inter;
        if (p != 0 || g != 0) ++occ_union;
        if (p == g && p != 0) ++inter[static_cast<std::size_t>(p)];
        if (p != 0) ++uni[static_cast<std::size_t>(p)];
        if (g != 0 && g != p) ++uni[static_cast<std::size_t>(g)];
    }
    const double nan = std::numeric_limits<double>::quiet_NaN();
    if (selected == 0) {
        res.defined = false;
        res.iou = nan;
        res.miou = nan;
        res.per_class.assign(static_cast<std::size_t>(num_classes) - 1, nan);
        return res;
    }
    res.iou = occ_union > 0 ? static_cast<double>(occ_inter) / static_cast<double>(occ_union) : nan;
    res.per_class.resize(static_cast<std::size_t>(num_classes) - 1, nan);
    double sum = 0.0;
    int count = 0;
    for (int cls = 1; cls < num_classes; ++cls) {
        if (uni[static_cast<std::size_t>(cls)] == 0) continue;
        const double v = static_cast<double>(inter[static_cast<std::size_t>(cls)]) /
                         static_cast<double>(uni[static_cast<std::size_t>(cls)]);
        res.per_class[static_cast<std::size_t>(cls) - 1] = v;
        sum += v;
        ++count;
    }
    res.miou = count > 0 ? sum / count : nan;
    return res;
}

LossBreakdown occupancy_loss(const SemanticField& field, const std::vector<std::uint8_t>& labels,
                             const LossWeights& weights, std::vector<double>* grad_values) {
    const ProbField probs = field_to_probs(field, weights.free_prior);
    std::vector<double> grad_probs;
    std::vector<double>* gp = grad_values ? &grad_probs : nullptr;
    if (gp) gp->assign(probs.probs.size(), 0.0);

    LossBreakdown out;
    std::vector<double> tmp;
    auto run_term = [&](double w, auto&& fn) {
        double value;
        if (gp) {
            tmp.assign(probs.probs.size(), 0.0);
            value = fn(&tmp);
            for (std::size_t i = 0; i < gp->size(); ++i) (*gp)[i] += w * tmp[i];
        } else {
            value = fn(static_cast<std::vector<double>*>(nullptr));
        }
        out.total += w * value;
        return value;
    };

    out.focal = run_term(weights.focal, [&](std::vector<double>* g) {
        return focal_loss(probs, labels, weights.gamma, weights.alpha, g);
    });
    out.lovasz = run_term(weights.lovasz,
                          [&](std::vector<double>* g) { return lovasz_softmax(probs, labels, g); });
    out.geo = run_term(weights.geo, [&](std::vector<double>* g) {
        return scene_class_affinity(probs, labels, AffinityMode::kGeometry, g);
    });
    out.sem = run_term(weights.sem, [&](std::vector<double>* g) {
        return scene_class_affinity(probs, labels, AffinityMode::kSemantic, g);
    });

    if (grad_values) {
        // Chain through probs = (values + eps)/sum(values + eps).
        grad_values->resize(field.values.size());
        const int c = field.num_classes;
        const std::int64_t n = probs.num_voxels;
#pragma omp parallel for schedule(static)
        for (std::int64_t v = 0; v < n; ++v) {
            const double* row = field.at(v);
            const double* p = probs.at(v);
            const double* g = grad_probs.data() + v * c;
            double sum = weights.free_prior, dot = 0.0;
            for (int k = 0; k < c; ++k) {
                sum += row[k] + kMassEps;
                dot += g[k] * p[k];
            }
            double* out_g = grad_values->data() + v * c;
            for (int k = 0; k < c; ++k) out_g[k] = (g[k] - dot) / sum;
        }
    }
    return out;
}

std::vector<UnconstrainedAnchor> init_anchors(const OccupancyGrid& gt, int num_classes,
                                              int count, bool from_occupied, std::uint64_t seed) {
    Rng rng(seed);
    const SceneBox& box = gt.box;
    std::vector<std::int64_t> occupied;
    if (from_occupied) {
        for (std::int64_t v = 0; v < static_cast<std::int64_t>(gt.labels.size()); ++v) {
            if (gt.labels[static_cast<std::size_t>(v)] != 0) occupied.push_back(v);
        }
    }
    const Vec3i dims = box.dims();
    std::vector<UnconstrainedAnchor> raw(static_cast<std::size_t>(count));
    for (auto& r : raw) {
        int target_class = -1;
        if (!occupied.empty()) {
            const std::int64_t v =
                occupied[static_cast<std::size_t>(rng.uniform_int(occupied.size()))];
            const int z = static_cast<int>(v % dims.z());
            const int y = static_cast<int>((v / dims.z()) % dims.y());
            const int x = static_cast<int>(v / (static_cast<std::int64_t>(dims.z()) * dims.y()));
            const Vec3 center = box.voxel_center(x, y, z);
            for (int a = 0; a < 3; ++a) {
                const double frac =
                    std::clamp((center[a] - box.origin[a]) / box.extent[a], 1e-4, 1.0 - 1e-4);
                r.raw_mean[a] = logit(frac) + rng.normal(0.0, 0.1);
            }
            target_class = gt.labels[static_cast<std::size_t>(v)];
        } else {
            for (int a = 0; a < 3; ++a) r.raw_mean[a] = logit(rng.uniform(0.05, 0.95));
        }
        for (int a = 0; a < 3; ++a) r.raw_scale[a] = rng.normal(-0.5, 0.25);
        do {
            for (int a = 0; a < 4; ++a) r.raw_rotation[a] = rng.normal();
        } while (r.raw_rotation.norm() < 1e-6);
        r.raw_opacity = rng.normal(1.0, 0.25);
        r.raw_semantics = VecX::Zero(num_classes);
        for (int k = 0; k < num_classes; ++k) r.raw_semantics[k] = rng.normal(0.0, 0.1);
        if (target_class >= 0) {
            r.raw_semantics[target_class] += 3.0;
        }
    }
    return raw;
}

FitResult fit_gaussians(const OccupancyGrid& gt, int num_classes, const FitOptions& options) {
    if (options.num_gaussians < 1) {
        throw ValidationError("fit_gaussians: need at least one Gaussian");
    }
    if (!(options.s_max > 0.0)) throw ValidationError("fit_gaussians: s_max must be positive");
    gt.validate(num_classes);

    const SceneBox& box = gt.box;
    std::vector<UnconstrainedAnchor> raw = init_anchors(
        gt, num_classes, options.num_gaussians, options.init_from_occupied, options.seed);

    const int per = 11 + num_classes;
    const std::size_t nparams = raw.size() * static_cast<std::size_t>(per);
    std::vector<double> m(nparams, 0.0), v(nparams, 0.0);

    FitResult result;
    result.curve.reserve(static_cast<std::size_t>(options.steps));

    for (int step = 0; step < options.steps; ++step) {
        const std::vector<GaussianAnchor> anchors = activate_all(raw, box, options.s_max);
        SemanticField field = splat_forward(anchors, box, options.cutoff_sigma);
        std::vector<double> grad_values;
        const LossBreakdown breakdown =
            occupancy_loss(field, gt.labels, options.weights, &grad_values);
        if (!std::isfinite(breakdown.total)) {
            throw NumericalError("fit_gaussians: non-finite loss at step " + std::to_string(step));
        }
        result.curve.push_back(breakdown);
        if (options.on_step) options.on_step(step, breakdown);

        SemanticField upstream;
        upstream.box = box;
        upstream.num_classes = num_classes;
        upstream.values = std::move(grad_values);
        const SplatGradients sg = splat_backward(anchors, box, options.cutoff_sigma, upstream);

        const double bias1 = 1.0 - std::pow(options.beta1, step + 1);
        const double bias2 = 1.0 - std::pow(options.beta2, step + 1);
#pragma omp parallel for schedule(static)
        for (std::int64_t i = 0; i < static_cast<std::int64_t>(raw.size()); ++i) {
            const UnconstrainedAnchor g = activate_backward(
                raw[static_cast<std::size_t>(i)], box, options.s_max,
                sg.anchors[static_cast<std::size_t>(i)]);
            UnconstrainedAnchor& r = raw[static_cast<std::size_t>(i)];
            std::size_t j = static_cast<std::size_t>(i) * static_cast<std::size_t>(per);
            auto adam = [&](double grad, double& param) {
                m[j] = options.beta1 * m[j] + (1.0 - options.beta1) * grad;
                v[j] = options.beta2 * v[j] + (1.0 - options.beta2) * grad * grad;
                param -= options.learning_rate * (m[j] / bias1) /
                         (std::sqrt(v[j] / bias2) + options.adam_eps);
                ++j;
            };
            for (int a = 0; a < 3; ++a) adam(g.raw_mean[a], r.raw_mean[a]);
            for (int a = 0; a < 3; ++a) adam(g.raw_scale[a], r.raw_scale[a]);
            for (int a = 0; a < 4; ++a) adam(g.raw_rotation[a], r.raw_rotation[a]);
            adam(g.raw_opacity, r.raw_opacity);
            for (int k = 0; k < num_classes; ++k) adam(g.raw_semantics[k], r.raw_semantics[k]);
        }
    }

    result.raw = std::move(raw);
    result.anchors = activate_all(result.raw, box, options.s_max);
    return result;
}

}  // namespace gsocc
