#include "gsocc/gce.hpp"

#include <cmath>

namespace gsocc {

void OffsetTemplate::validate() const {
    if (base_offsets.empty()) throw ValidationError("OffsetTemplate: empty");
    for (const Vec3& o : base_offsets) {
        if (o.norm() > 1.0 + 1e-12) {
            throw ValidationError("OffsetTemplate: offset norm exceeds 1");
        }
    }
}

OffsetTemplate OffsetTemplate::principal_axes(bool include_center) {
    OffsetTemplate t;
    for (int a = 0; a < 3; ++a) {
        Vec3 e = Vec3::Zero();
        e[a] = 1.0;
        t.base_offsets.push_back(e);
        t.base_offsets.push_back(-e);
    }
    if (include_center) t.base_offsets.push_back(Vec3::Zero());
    return t;
}

void MixWeights::validate(int c_feat, int num_points, int num_levels) const {
    auto expect = [](const MatX& m, int rows, int cols, const char* name) {
        if (m.rows() != rows || m.cols() != cols) {
            throw ValidationError(std::string("MixWeights: bad shape for ") + name);
        }
    };
    expect(semantic_proj_w, c_feat * c_feat, c_feat, "semantic_proj.weight");
    expect(geometric_proj_w, num_points * num_points, 12, "geometric_proj.weight");
    expect(attention_proj_w, num_points * num_levels, c_feat, "attention_proj.weight");
    if (semantic_proj_b.size() != c_feat * c_feat ||
        geometric_proj_b.size() != num_points * num_points ||
        attention_proj_b.size() != num_points * num_levels) {
        throw ValidationError("MixWeights: bias size mismatch");
    }
    if (ln_s_gain.size() != c_feat || ln_s_bias.size() != c_feat ||
        ln_g_gain.size() != c_feat || ln_g_bias.size() != c_feat) {
        throw ValidationError("MixWeights: layer-norm parameter size mismatch");
    }
}

std::vector<Vec3> reference_points(const GaussianAnchor& anchor, const OffsetTemplate& tmpl) {
    const Mat3 r = quaternion_to_matrix(anchor.rotation);
    std::vector<Vec3> out;
    out.reserve(tmpl.base_offsets.size());
    for (const Vec3& o : tmpl.base_offsets) {
        out.push_back(anchor.mean + r * o.cwiseProduct(anchor.scale));
    }
    return out;
}

bool ProjectedPoints::any_valid() const {
    for (const auto& p : pixels) {
        if (p.valid) return true;
    }
    return false;
}

ProjectedPoints project_points(const std::vector<Vec3>& points, const CameraModel& cam,
                               double z_near) {
    ProjectedPoints out;
    out.pixels.reserve(points.size());
    for (const Vec3& p : points) out.pixels.push_back(project_point(p, cam, z_near));
    return out;
}

VecX layer_norm(const VecX& x, const VecX& gain, const VecX& bias, double eps) {
    const double mean = x.mean();
    const double var = (x.array() - mean).square().mean();
    const double inv = 1.0 / std::sqrt(var + eps);
    return (((x.array() - mean) * inv) * gain.array() + bias.array()).matrix();
}

MatX deformable_sample(const VecX& query, const ProjectedPoints& points,
                       const FeaturePyramid& pyramid, const MixWeights& weights) {
    const int c = static_cast<int>(query.size());
    const int num_points = static_cast<int>(points.pixels.size());
    const int num_levels = static_cast<int>(pyramid.levels.size());
    if (pyramid.channels != c) {
        throw ValidationError("deformable_sample: pyramid channel width != query width");
    }

    const VecX logits = weights.attention_proj_w * query + weights.attention_proj_b;
    MatX q_p = MatX::Zero(num_points, c);
    VecX sample = VecX::Zero(c);

    for (int j = 0; j < num_points; ++j) {
        const PixelProjection& px = points.pixels[static_cast<std::size_t>(j)];
        if (!px.valid) continue;

        // masked softmax over this point's valid levels
        double max_logit = -std::numeric_limits<double>::infinity();
        std::vector<int> valid_levels;
        for (int l = 0; l < num_levels; ++l) {
            const auto& level = pyramid.levels[static_cast<std::size_t>(l)];
            const double ul = px.u / level.stride;
            const double vl = px.v / level.stride;
            if (ul < 0.0 || ul > level.width - 1.0 || vl < 0.0 || vl > level.height - 1.0) {
                continue;
            }
            valid_levels.push_back(l);
            max_logit = std::max(max_logit, logits[j * num_levels + l]);
        }
        if (valid_levels.empty()) continue;
        double denom = 0.0;
        for (int l : valid_levels) denom += std::exp(logits[j * num_levels + l] - max_logit);
        for (int l : valid_levels) {
            const double w = std::exp(logits[j * num_levels + l] - max_logit) / denom;
            const bool ok = bilinear_sample(pyramid.levels[static_cast<std::size_t>(l)], c,
                                            px.u, px.v, sample.data());
            if (ok) q_p.row(j) += w * sample.transpose();
        }
    }
    return q_p;
}

MatX semantic_mix(const MatX& q_p, const VecX& query, const MixWeights& weights) {
    const int c = static_cast<int>(query.size());
    const VecX w_flat = weights.semantic_proj_w * query + weights.semantic_proj_b;
    const Eigen::Map<const MatX> w_s(w_flat.data(), c, c);  // row-major flat -> (col, row)

    // Q_p row times W_s: out[j][k] = sum_i Q_p[j][i] * W_s[i][k].
    // w_flat is row-major (i * c + k), so the mapped matrix is indexed (k, i).
    MatX out = q_p * w_s.transpose();
    for (int j = 0; j < out.rows(); ++j) {
        out.row(j) = layer_norm(out.row(j).transpose(), weights.ln_s_gain, weights.ln_s_bias)
                         .transpose()
                         .cwiseMax(0.0);
    }
    return out;
}

MatX geometric_mix(const MatX& q_s, const GaussianAnchor& anchor, const MixWeights& weights) {
    const int num_points = static_cast<int>(q_s.rows());
    VecX g(12);
    g.head<3>() = anchor.scale;
    const Mat3 r = quaternion_to_matrix(anchor.rotation);
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) g[3 + i * 3 + j] = r(i, j);

    const VecX w_flat = weights.geometric_proj_w * g + weights.geometric_proj_b;
    const Eigen::Map<const MatX> w_g_t(w_flat.data(), num_points, num_points);

    // W_g is row-major (j * R + j'), mapped column-major, so transpose back.
    MatX out = w_g_t.transpose() * q_s;
    for (int j = 0; j < out.rows(); ++j) {
        out.row(j) = layer_norm(out.row(j).transpose(), weights.ln_g_gain, weights.ln_g_bias)
                         .transpose()
                         .cwiseMax(0.0);
    }
    return out;
}

void cross_encode(const std::vector<GaussianAnchor>& anchors, std::vector<VecX>& queries,
                  const CameraModel& cam, const FeaturePyramid& pyramid,
                  const OffsetTemplate& tmpl, const MixWeights& weights, double z_near) {
    if (anchors.size() != queries.size()) {
        throw ValidationError("cross_encode: anchor/query count mismatch");
    }
    cam.validate();
    tmpl.validate();
    const int n = static_cast<int>(anchors.size());
#pragma omp parallel for schedule(dynamic, 16)
    for (int i = 0; i < n; ++i) {
        const GaussianAnchor& a = anchors[static_cast<std::size_t>(i)];
        const ProjectedPoints pts = project_points(reference_points(a, tmpl), cam, z_near);
        if (!pts.any_valid()) continue;  // off-screen: zero update
        const MatX q_p = deformable_sample(queries[static_cast<std::size_t>(i)], pts, pyramid, weights);
        const MatX q_s = semantic_mix(q_p, queries[static_cast<std::size_t>(i)], weights);
        const MatX q_g = geometric_mix(q_s, a, weights);
        queries[static_cast<std::size_t>(i)] += q_g.colwise().mean().transpose();
    }
}

}  // namespace gsocc
