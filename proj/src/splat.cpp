#include "gsocc/splat.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <limits>

namespace gsocc {

namespace {

struct GaussianWork {
    Vec3 mean;
    Mat3 inv_cov;          // Sigma^{-1}
    Mat3 rot;              // R(q)
    double opacity;
    std::vector<double> probs;  // softmax(semantics)
    int lo[3], hi[3];      // inclusive voxel range of the cutoff AABB
    bool empty_range;
};

std::vector<double> softmax(const VecX& logits) {
    const double m = logits.maxCoeff();
    std::vector<double> p(static_cast<std::size_t>(logits.size()));
    double sum = 0.0;
    for (int i = 0; i < logits.size(); ++i) {
        p[static_cast<std::size_t>(i)] = std::exp(logits[i] - m);
        sum += p[static_cast<std::size_t>(i)];
    }
    for (double& v : p) v /= sum;
    return p;
}

void validate_anchors(const std::vector<GaussianAnchor>& anchors, int* num_classes) {
    *num_classes = anchors.empty() ? kDefaultNumClasses : anchors[0].num_classes();
    for (const auto& a : anchors) {
        if (!a.mean.allFinite() || !a.scale.allFinite() || !a.rotation.allFinite() ||
            !std::isfinite(a.opacity) || !a.semantics.allFinite()) {
            throw ValidationError("splat: non-finite anchor");
        }
        if (a.num_classes() != *num_classes) {
            throw ValidationError("splat: inconsistent semantics width");
        }
        if (!(a.scale.minCoeff() > 0.0)) {
            throw ValidationError("splat: non-positive scale");
        }
    }
}

// AABB of the ellipsoid {d : d^T Sigma^{-1} d <= k^2} has half-widths
// k * sqrt(diag(Sigma)).
GaussianWork prepare(const GaussianAnchor& a, const SceneBox& box, double cutoff_sigma) {
    GaussianWork w;
    w.mean = a.mean;
    w.rot = quaternion_to_matrix(a.rotation);
    const Vec3 inv_s2 = a.scale.cwiseProduct(a.scale).cwiseInverse();
    w.inv_cov = w.rot * inv_s2.asDiagonal() * w.rot.transpose();
    w.opacity = a.opacity;
    w.probs = softmax(a.semantics);

    const Vec3i dims = box.dims();
    w.empty_range = false;
    if (std::isinf(cutoff_sigma)) {
        for (int ax = 0; ax < 3; ++ax) {
            w.lo[ax] = 0;
            w.hi[ax] = dims[ax] - 1;
        }
        return w;
    }
    for (int ax = 0; ax < 3; ++ax) {
        double diag = 0.0;
        for (int j = 0; j < 3; ++j) {
            const double rs = w.rot(ax, j) * a.scale[j];
            diag += rs * rs;
        }
        const double half = cutoff_sigma * std::sqrt(diag);
        // Voxel index range whose centers fall inside [mean-half, mean+half].
        const double lo_m = a.mean[ax] - half - box.origin[ax];
        const double hi_m = a.mean[ax] + half - box.origin[ax];
        int lo = static_cast<int>(std::ceil(lo_m / box.voxel_size - 0.5));
        int hi = static_cast<int>(std::floor(hi_m / box.voxel_size - 0.5));
        lo = std::max(lo, 0);
        hi = std::min(hi, dims[ax] - 1);
        if (lo > hi) w.empty_range = true;
        w.lo[ax] = lo;
        w.hi[ax] = hi;
    }
    return w;
}

}  // namespace

SemanticField splat_forward(const std::vector<GaussianAnchor>& anchors, const SceneBox& box,
                            double cutoff_sigma) {
    if (!(cutoff_sigma > 0.0)) {
        throw ValidationError("splat_forward: cutoff_sigma must be positive");
    }
    int num_classes = 0;
    validate_anchors(anchors, &num_classes);
    SemanticField field = make_empty_field(box, num_classes);
    if (anchors.empty()) return field;

    const int n = static_cast<int>(anchors.size());
    std::vector<GaussianWork> work;
    work.reserve(static_cast<std::size_t>(n));
    for (const auto& a : anchors) work.push_back(prepare(a, box, cutoff_sigma));

    // Binning pass: per-voxel candidate lists, filled in Gaussian index order
    // so each voxel accumulates in a fixed order regardless of threading.
    const std::int64_t nvox = box.voxel_count();
    const Vec3i dims = box.dims();
    std::vector<std::int64_t> counts(static_cast<std::size_t>(nvox) + 1, 0);
    for (const auto& w : work) {
        if (w.empty_range) continue;
        for (int x = w.lo[0]; x <= w.hi[0]; ++x)
            for (int y = w.lo[1]; y <= w.hi[1]; ++y) {
                const std::int64_t base = (static_cast<std::int64_t>(x) * dims.y() + y) * dims.z();
                for (int z = w.lo[2]; z <= w.hi[2]; ++z) counts[static_cast<std::size_t>(base + z) + 1]++;
            }
    }
    for (std::size_t v = 1; v < counts.size(); ++v) counts[v] += counts[v - 1];
    std::vector<std::int64_t> offsets(counts.begin(), counts.end() - 1);
    std::vector<int> candidates(static_cast<std::size_t>(counts.back()));
    for (int i = 0; i < n; ++i) {
        const auto& w = work[static_cast<std::size_t>(i)];
        if (w.empty_range) continue;
        for (int x = w.lo[0]; x <= w.hi[0]; ++x)
            for (int y = w.lo[1]; y <= w.hi[1]; ++y) {
                const std::int64_t base = (static_cast<std::int64_t>(x) * dims.y() + y) * dims.z();
                for (int z = w.lo[2]; z <= w.hi[2]; ++z) {
                    candidates[static_cast<std::size_t>(offsets[static_cast<std::size_t>(base + z)]++)] = i;
                }
            }
    }

    const double cutoff2 = std::isinf(cutoff_sigma) ? std::numeric_limits<double>::infinity()
                                                    : cutoff_sigma * cutoff_sigma;
    // Gather pass: each voxel owns its output row, no write conflicts.
#pragma omp parallel for schedule(dynamic, 64)
    for (std::int64_t v = 0; v < nvox; ++v) {
        const std::int64_t begin = counts[static_cast<std::size_t>(v)];
        const std::int64_t end = counts[static_cast<std::size_t>(v) + 1];
        if (begin == end) continue;
        const int z = static_cast<int>(v % dims.z());
        const int y = static_cast<int>((v / dims.z()) % dims.y());
        const int x = static_cast<int>(v / (static_cast<std::int64_t>(dims.z()) * dims.y()));
        const Vec3 center = box.voxel_center(x, y, z);
        double* row = field.at(v);
        for (std::int64_t c = begin; c < end; ++c) {
            const GaussianWork& w = work[static_cast<std::size_t>(candidates[static_cast<std::size_t>(c)])];
            const Vec3 d = center - w.mean;
            const double q = d.dot(w.inv_cov * d);
            if (q > cutoff2) continue;
            const double weight = w.opacity * std::exp(-0.5 * q);
            for (int k = 0; k < num_classes; ++k) row[k] += weight * w.probs[static_cast<std::size_t>(k)];
        }
    }
    return field;
}

SemanticField splat_forward_reference(const std::vector<GaussianAnchor>& anchors,
                                      const SceneBox& box, double cutoff_sigma) {
    if (!(cutoff_sigma > 0.0)) {
        throw ValidationError("splat_forward_reference: cutoff_sigma must be positive");
    }
    int num_classes = 0;
    validate_anchors(anchors, &num_classes);
    SemanticField field = make_empty_field(box, num_classes);
    const Vec3i dims = box.dims();
    const double cutoff2 = cutoff_sigma * cutoff_sigma;
    for (const auto& a : anchors) {
        const Mat3 inv_cov = covariance(a).inverse();
        const std::vector<double> probs = softmax(a.semantics);
        for (int x = 0; x < dims.x(); ++x)
            for (int y = 0; y < dims.y(); ++y)
                for (int z = 0; z < dims.z(); ++z) {
                    const Vec3 d = box.voxel_center(x, y, z) - a.mean;
                    const double q = d.dot(inv_cov * d);
                    if (q > cutoff2) continue;
                    const double weight = a.opacity * std::exp(-0.5 * q);
                    double* row = field.at(box.flat_index(x, y, z));
                    for (int k = 0; k < num_classes; ++k) row[k] += weight * probs[static_cast<std::size_t>(k)];
                }
    }
    return field;
}

SplatGradients splat_backward(const std::vector<GaussianAnchor>& anchors, const SceneBox& box,
                              double cutoff_sigma, const SemanticField& upstream) {
    if (!(cutoff_sigma > 0.0)) {
        throw ValidationError("splat_backward: cutoff_sigma must be positive");
    }
    int num_classes = 0;
    validate_anchors(anchors, &num_classes);
    if (upstream.num_classes != num_classes || !(upstream.box == box) ||
        upstream.values.size() != static_cast<std::size_t>(box.voxel_count()) * num_classes) {
        throw ValidationError("splat_backward: upstream shape mismatch");
    }
    for (double u : upstream.values) {
        if (!std::isfinite(u)) throw ValidationError("splat_backward: non-finite upstream");
    }

    const int n = static_cast<int>(anchors.size());
    SplatGradients grads;
    grads.anchors.assign(static_cast<std::size_t>(n), AnchorGrad{});
    const Vec3i dims = box.dims();
    const double cutoff2 = std::isinf(cutoff_sigma) ? std::numeric_limits<double>::infinity()
                                                    : cutoff_sigma * cutoff_sigma;

    // Each Gaussian reads the upstream field over its own AABB; no races.
#pragma omp parallel for schedule(dynamic, 1)
    for (int i = 0; i < n; ++i) {
        const GaussianAnchor& a = anchors[static_cast<std::size_t>(i)];
        const GaussianWork w = prepare(a, box, cutoff_sigma);
        AnchorGrad& g = grads.anchors[static_cast<std::size_t>(i)];
        g.semantics = VecX::Zero(num_classes);
        if (w.empty_range) continue;

        // Accumulators over the Gaussian's voxels:
        //   acc_o  = sum g_v * S_v              (S_v = <upstream_v, probs>)
        //   acc_d  = sum g_v * S_v * d          (for the mean)
        //   acc_M  = sum g_v * S_v * d d^T      (for the covariance)
        //   acc_p  = sum g_v * upstream_v       (for the semantics)
        double acc_o = 0.0;
        Vec3 acc_d = Vec3::Zero();
        Mat3 acc_M = Mat3::Zero();
        VecX acc_p = VecX::Zero(num_classes);

        for (int x = w.lo[0]; x <= w.hi[0]; ++x)
            for (int y = w.lo[1]; y <= w.hi[1]; ++y)
                for (int z = w.lo[2]; z <= w.hi[2]; ++z) {
                    const Vec3 d = box.voxel_center(x, y, z) - w.mean;
                    const double q = d.dot(w.inv_cov * d);
                    if (q > cutoff2) continue;
                    const double gv = std::exp(-0.5 * q);
                    const double* u = upstream.at(box.flat_index(x, y, z));
                    double s = 0.0;
                    for (int k = 0; k < num_classes; ++k) {
                        s += u[k] * w.probs[static_cast<std::size_t>(k)];
                        acc_p[k] += gv * u[k];
                    }
                    const double gs = gv * s;
                    acc_o += gs;
                    acc_d += gs * d;
                    acc_M.noalias() += gs * (d * d.transpose());
                }

        g.opacity = acc_o;
        g.mean = a.opacity * (w.inv_cov * acc_d);

        // dL/dSigma^{-1} = -1/2 o acc_M; dL/dSigma = -Sigma^{-1} (dL/dSigma^{-1}) Sigma^{-1}.
        const Mat3 grad_sigma = 0.5 * a.opacity * (w.inv_cov * acc_M * w.inv_cov);
        const Vec3 s2 = a.scale.cwiseProduct(a.scale);
        const Mat3 rtgr = w.rot.transpose() * grad_sigma * w.rot;
        for (int ax = 0; ax < 3; ++ax) g.scale[ax] = 2.0 * a.scale[ax] * rtgr(ax, ax);

        // dL/dR = 2 (dL/dSigma) R diag(s^2), then through dR/dq and the
        // tangent projection of the normalization.
        const Mat3 grad_r = 2.0 * grad_sigma * w.rot * s2.asDiagonal();
        Mat3 dr[4];
        quaternion_to_matrix_jacobian(a.rotation, dr);
        Vec4 gq;
        for (int c = 0; c < 4; ++c) gq[c] = (grad_r.array() * dr[c].array()).sum();
        g.rotation = gq - a.rotation * a.rotation.dot(gq);

        // Softmax adjoint for the semantic logits.
        const VecX grad_p = a.opacity * acc_p;
        double dot = 0.0;
        for (int k = 0; k < num_classes; ++k) dot += grad_p[k] * w.probs[static_cast<std::size_t>(k)];
        for (int k = 0; k < num_classes; ++k) {
            g.semantics[k] = w.probs[static_cast<std::size_t>(k)] * (grad_p[k] - dot);
        }
    }
    return grads;
}

}  // namespace gsocc
