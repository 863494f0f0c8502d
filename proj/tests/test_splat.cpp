#include <doctest.h>

#include <cmath>
#include <limits>

#include "gsocc/parallel.hpp"
#include "gsocc/splat.hpp"
#include "test_util.hpp"

using namespace gsocc;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

VecX softmax_oracle(const VecX& logits) {
    VecX e = (logits.array() - logits.maxCoeff()).exp();
    return e / e.sum();
}

double max_abs_diff(const SemanticField& a, const SemanticField& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.values.size(); ++i) {
        m = std::max(m, std::abs(a.values[i] - b.values[i]));
    }
    return m;
}

// Scalar objective J(raw) = <upstream, splat_forward(activate(raw))> used by
// the finite-difference gradient checks.
double fd_objective(const std::vector<UnconstrainedAnchor>& raw, const SceneBox& box,
                    double s_max, double cutoff, const SemanticField& upstream) {
    const SemanticField field = splat_forward(activate_all(raw, box, s_max), box, cutoff);
    double j = 0.0;
    for (std::size_t i = 0; i < field.values.size(); ++i) {
        j += field.values[i] * upstream.values[i];
    }
    return j;
}

struct GroupError {
    double max_rel = 0.0;
};

// Relative error with a floor tied to the group's magnitude, so near-zero
// entries are judged against the gradient's scale rather than themselves.
void update_group(GroupError& ge, const std::vector<double>& analytic,
                  const std::vector<double>& fd) {
    double scale = 1e-10;
    for (std::size_t i = 0; i < analytic.size(); ++i) {
        scale = std::max({scale, std::abs(analytic[i]), std::abs(fd[i])});
    }
    for (std::size_t i = 0; i < analytic.size(); ++i) {
        const double denom = std::max({std::abs(analytic[i]), std::abs(fd[i]), 1e-3 * scale});
        ge.max_rel = std::max(ge.max_rel, std::abs(analytic[i] - fd[i]) / denom);
    }
}

}  // namespace

TEST_CASE("single gaussian at a voxel center deposits exactly softmax(c)") {
    SceneBox box = test::unit_box(8, 8, 8, 0.1);
    GaussianAnchor a;
    a.mean = box.voxel_center(3, 4, 5);
    a.scale = Vec3(0.05, 0.05, 0.05);
    a.opacity = 1.0;
    a.semantics = VecX::Zero(4);
    a.semantics << 0.3, -1.0, 2.0, 0.1;

    const SemanticField f = splat_forward({a}, box, 3.0);
    const VecX p = softmax_oracle(a.semantics);
    const double* row = f.at(box.flat_index(3, 4, 5));
    for (int k = 0; k < 4; ++k) CHECK(row[k] == doctest::Approx(p[k]).epsilon(1e-12));
}

TEST_CASE("contributions are linear in opacity") {
    SceneBox box = test::unit_box(6, 6, 6, 0.1);
    Rng rng(5);
    std::vector<GaussianAnchor> anchors = test::random_anchors(rng, 1, box, 0.2, 3);
    anchors[0].opacity = 1.0;
    const SemanticField full = splat_forward(anchors, box, 3.0);
    anchors[0].opacity = 0.5;
    const SemanticField half = splat_forward(anchors, box, 3.0);
    for (std::size_t i = 0; i < full.values.size(); ++i) {
        CHECK(half.values[i] == doctest::Approx(0.5 * full.values[i]).epsilon(1e-12));
    }
}

TEST_CASE("empty anchor list gives a zero field, non-finite anchors are rejected") {
    SceneBox box = test::unit_box(4, 4, 4, 0.1);
    const SemanticField f = splat_forward({}, box, 3.0);
    for (double v : f.values) CHECK(v == 0.0);

    GaussianAnchor bad;
    bad.semantics = VecX::Zero(2);
    bad.mean[0] = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(splat_forward({bad}, box, 3.0), ValidationError);
}

TEST_CASE("kernel matches the brute-force oracle on 64 random gaussians") {
    SceneBox box = test::unit_box(16, 16, 16, 0.08);
    Rng rng(2024);
    const std::vector<GaussianAnchor> anchors = test::random_anchors(rng, 64, box, 0.12, 12);

    const SemanticField fast = splat_forward(anchors, box, 3.0);
    const SemanticField same_cutoff = splat_forward_reference(anchors, box, 3.0);
    const SemanticField no_cutoff = splat_forward_reference(anchors, box, kInf);

    CHECK(max_abs_diff(fast, same_cutoff) < 1e-9);
    CHECK(max_abs_diff(fast, no_cutoff) < 1e-2);
}

TEST_CASE("splatting is additive over disjoint anchor unions") {
    SceneBox box = test::unit_box(10, 10, 6, 0.1);
    Rng rng(77);
    const std::vector<GaussianAnchor> all = test::random_anchors(rng, 20, box, 0.15, 5);
    const std::vector<GaussianAnchor> first(all.begin(), all.begin() + 12);
    const std::vector<GaussianAnchor> second(all.begin() + 12, all.end());

    const SemanticField fa = splat_forward(all, box, 3.0);
    const SemanticField f1 = splat_forward(first, box, 3.0);
    const SemanticField f2 = splat_forward(second, box, 3.0);
    for (std::size_t i = 0; i < fa.values.size(); ++i) {
        CHECK(fa.values[i] == doctest::Approx(f1.values[i] + f2.values[i]).epsilon(1e-12));
    }
}

TEST_CASE("field is equivariant under a 90 degree rotation about the box axis") {
    SceneBox box = test::unit_box(12, 12, 6, 0.1);
    Rng rng(31);
    std::vector<GaussianAnchor> anchors = test::random_anchors(rng, 16, box, 0.2, 4);

    const Vec3 center = box.origin + 0.5 * box.extent;
    const double h = std::sqrt(0.5);
    const Vec4 qz(h, 0, 0, h);
    const Mat3 rz = quaternion_to_matrix(qz);

    std::vector<GaussianAnchor> rotated = anchors;
    for (auto& a : rotated) {
        a.mean = center + rz * (a.mean - center);
        a.rotation = quaternion_multiply(qz, a.rotation);
    }

    const SemanticField f = splat_forward(anchors, box, 3.0);
    const SemanticField fr = splat_forward(rotated, box, 3.0);

    const Vec3i dims = box.dims();
    for (int x = 0; x < dims.x(); ++x)
        for (int y = 0; y < dims.y(); ++y)
            for (int z = 0; z < dims.z(); ++z) {
                const Vec3 p = center + rz * (box.voxel_center(x, y, z) - center);
                const Vec3 l = (p - box.origin) / box.voxel_size;
                const int xr = static_cast<int>(std::floor(l.x()));
                const int yr = static_cast<int>(std::floor(l.y()));
                const int zr = static_cast<int>(std::floor(l.z()));
                const double* src = f.at(box.flat_index(x, y, z));
                const double* dst = fr.at(box.flat_index(xr, yr, zr));
                for (int k = 0; k < 4; ++k) {
                    CHECK(std::abs(src[k] - dst[k]) < 1e-9);
                }
            }
}

TEST_CASE("raising opacity strictly raises every voxel the kernel touches") {
    SceneBox box = test::unit_box(8, 8, 8, 0.1);
    Rng rng(13);
    std::vector<GaussianAnchor> anchors = test::random_anchors(rng, 3, box, 0.2, 4);

    const SemanticField before = splat_forward(anchors, box, 3.0);
    const SemanticField only =
        splat_forward({anchors[1]}, box, 3.0);  // locate touched voxels
    anchors[1].opacity = std::min(0.999, anchors[1].opacity + 0.3);
    const SemanticField after = splat_forward(anchors, box, 3.0);

    for (std::size_t i = 0; i < before.values.size(); ++i) {
        if (only.values[i] > 0.0) {
            CHECK(after.values[i] > before.values[i]);
        } else {
            CHECK(after.values[i] == before.values[i]);
        }
    }
}

TEST_CASE("results are bit-identical across thread counts") {
    SceneBox box = test::unit_box(14, 10, 8, 0.1);
    Rng rng(99);
    const std::vector<GaussianAnchor> anchors = test::random_anchors(rng, 40, box, 0.2, 6);

    set_num_threads(1);
    const SemanticField serial = splat_forward(anchors, box, 3.0);
    set_num_threads(4);
    const SemanticField parallel = splat_forward(anchors, box, 3.0);
    set_num_threads(0);

    for (std::size_t i = 0; i < serial.values.size(); ++i) {
        CHECK(serial.values[i] == parallel.values[i]);
    }
}

TEST_CASE("field_to_grid") {
    SceneBox box = test::unit_box(4, 4, 4, 0.1);

    SUBCASE("all-zero field is all free") {
        const OccupancyGrid g = field_to_grid(make_empty_field(box, 5));
        for (auto l : g.labels) CHECK(l == 0);
    }

    SUBCASE("argmax picks the heaviest class") {
        SemanticField f = make_empty_field(box, 4);
        double* row = f.at(box.flat_index(1, 2, 3));
        row[0] = 0.1;
        row[1] = 0.9;
        const OccupancyGrid g = field_to_grid(f);
        CHECK(g.label_at(1, 2, 3) == 1);
        CHECK(g.confidence[static_cast<std::size_t>(box.flat_index(1, 2, 3))] ==
              doctest::Approx(1.0));
    }

    SUBCASE("labels equal an independent per-voxel argmax scan") {
        Rng rng(4);
        SemanticField f = make_empty_field(box, 6);
        for (double& v : f.values) v = rng.uniform() < 0.3 ? 0.0 : rng.uniform();
        const OccupancyGrid g = field_to_grid(f, 1e-6);
        for (std::int64_t v = 0; v < box.voxel_count(); ++v) {
            const double* row = f.at(v);
            int best = 0;
            double total = 0.0;
            for (int k = 0; k < 6; ++k) {
                total += row[k];
                if (row[k] > row[best]) best = k;
            }
            const int expect = total < 1e-6 ? 0 : best;
            CHECK(g.labels[static_cast<std::size_t>(v)] == expect);
        }
    }
}

TEST_CASE("splat_backward zero upstream and symmetric-center cases") {
    SceneBox box = test::unit_box(8, 8, 8, 0.1);
    Rng rng(6);
    const std::vector<GaussianAnchor> anchors = test::random_anchors(rng, 4, box, 0.2, 4);

    SemanticField upstream = make_empty_field(box, 4);
    SplatGradients g = splat_backward(anchors, box, 3.0, upstream);
    for (const auto& ag : g.anchors) {
        CHECK(ag.mean.norm() == 0.0);
        CHECK(ag.scale.norm() == 0.0);
        CHECK(ag.rotation.norm() == 0.0);
        CHECK(ag.opacity == 0.0);
        CHECK(ag.semantics.norm() == 0.0);
    }

    GaussianAnchor centered;
    centered.mean = box.voxel_center(4, 4, 4);
    centered.scale = Vec3(0.08, 0.06, 0.05);
    centered.opacity = 0.7;
    centered.semantics = VecX::Zero(4);
    upstream.at(box.flat_index(4, 4, 4))[2] = 1.0;
    g = splat_backward({centered}, box, 3.0, upstream);
    CHECK(g.anchors[0].mean.cwiseAbs().maxCoeff() < 1e-15);
    CHECK(g.anchors[0].opacity > 0.0);
}

TEST_CASE("splat_backward matches central finite differences in raw space") {
    SceneBox box = test::unit_box(6, 6, 6, 0.1);
    const double s_max = 0.25;
    const double cutoff = 20.0;  // differentiable everywhere inside the stencil
    const int num_classes = 5;
    Rng rng(12345);

    std::vector<UnconstrainedAnchor> raw;
    for (int i = 0; i < 5; ++i) raw.push_back(test::random_raw_anchor(rng, num_classes));

    SemanticField upstream = make_empty_field(box, num_classes);
    for (double& u : upstream.values) u = rng.normal();

    const std::vector<GaussianAnchor> anchors = activate_all(raw, box, s_max);
    const SplatGradients sg = splat_backward(anchors, box, cutoff, upstream);

    GroupError mean_e, scale_e, rot_e, op_e, sem_e;
    const double h = 1e-4;
    for (std::size_t i = 0; i < raw.size(); ++i) {
        const UnconstrainedAnchor rg =
            activate_backward(raw[i], box, s_max, sg.anchors[i]);
        std::vector<double> analytic, fd;
        auto probe = [&](double* slot) {
            const double save = *slot;
            *slot = save + h;
            const double jp = fd_objective(raw, box, s_max, cutoff, upstream);
            *slot = save - h;
            const double jm = fd_objective(raw, box, s_max, cutoff, upstream);
            *slot = save;
            fd.push_back((jp - jm) / (2 * h));
        };
        analytic.clear();
        fd.clear();
        for (int a = 0; a < 3; ++a) { analytic.push_back(rg.raw_mean[a]); probe(&raw[i].raw_mean[a]); }
        update_group(mean_e, analytic, fd);
        analytic.clear(); fd.clear();
        for (int a = 0; a < 3; ++a) { analytic.push_back(rg.raw_scale[a]); probe(&raw[i].raw_scale[a]); }
        update_group(scale_e, analytic, fd);
        analytic.clear(); fd.clear();
        for (int a = 0; a < 4; ++a) { analytic.push_back(rg.raw_rotation[a]); probe(&raw[i].raw_rotation[a]); }
        update_group(rot_e, analytic, fd);
        analytic.clear(); fd.clear();
        analytic.push_back(rg.raw_opacity);
        probe(&raw[i].raw_opacity);
        update_group(op_e, analytic, fd);
        analytic.clear(); fd.clear();
        for (int k = 0; k < num_classes; ++k) {
            analytic.push_back(rg.raw_semantics[k]);
            probe(&raw[i].raw_semantics[k]);
        }
        update_group(sem_e, analytic, fd);
    }
    CHECK(mean_e.max_rel < 5e-3);
    CHECK(scale_e.max_rel < 5e-3);
    CHECK(rot_e.max_rel < 5e-3);
    CHECK(op_e.max_rel < 5e-3);
    CHECK(sem_e.max_rel < 5e-3);
}
