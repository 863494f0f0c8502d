#include <doctest.h>

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>

#include "gsocc/gaussian.hpp"
#include "gsocc/rng.hpp"
#include "test_util.hpp"

using namespace gsocc;

namespace {

// Independent covariance oracle: explicit 3x3 products, no library calls.
Mat3 covariance_oracle(const GaussianAnchor& a) {
    const Vec4& q = a.rotation;
    const double w = q[0], x = q[1], y = q[2], z = q[3];
    double r[3][3] = {
        {1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)},
        {2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)},
        {2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)}};
    double rd[3][3];
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) rd[i][j] = r[i][j] * a.scale[j] * a.scale[j];
    Mat3 sigma;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) {
            double s = 0.0;
            for (int k = 0; k < 3; ++k) s += rd[i][k] * r[j][k];
            sigma(i, j) = s;
        }
    return sigma;
}

}  // namespace

TEST_CASE("activate maps raw parameters into the valid anchor domain") {
    SceneBox box = test::unit_box(60, 60, 36, 0.08);
    UnconstrainedAnchor raw;
    raw.raw_semantics = VecX::Zero(12);

    GaussianAnchor a = activate(raw, box, 0.08);
    CHECK(a.mean.isApprox(Vec3(2.4, 2.4, 1.44), 1e-12));
    CHECK(a.rotation.isApprox(Vec4(1, 0, 0, 0), 1e-12));
    CHECK(a.scale.isApprox(Vec3(0.04, 0.04, 0.04), 1e-12));
    CHECK(a.opacity == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("activate rejects degenerate rotations") {
    SceneBox box = test::unit_box(4, 4, 4, 0.1);
    UnconstrainedAnchor raw;
    raw.raw_semantics = VecX::Zero(3);
    raw.raw_rotation = Vec4::Zero();
    CHECK_THROWS_AS(activate(raw, box, 0.1), ValidationError);
}

TEST_CASE("activate output satisfies anchor invariants for random raw inputs") {
    SceneBox box = test::unit_box(60, 60, 36, 0.08);
    Rng rng(11);
    for (int i = 0; i < 10000; ++i) {
        UnconstrainedAnchor raw = test::random_raw_anchor(rng, 12);
        GaussianAnchor a = activate(raw, box, 0.08);
        CHECK_NOTHROW(a.validate(0.08));
        CHECK(box.contains(a.mean));
    }
}

TEST_CASE("covariance of axis-aligned anchors") {
    GaussianAnchor a;
    a.semantics = VecX::Zero(2);
    a.scale = Vec3(1, 2, 3);
    CHECK(covariance(a).isApprox(Vec3(1, 4, 9).asDiagonal().toDenseMatrix(), 1e-12));

    // 90 degrees about z swaps the x/y axes of the ellipsoid.
    const double h = std::sqrt(0.5);
    a.rotation = Vec4(h, 0, 0, h);
    a.scale = Vec3(1, 2, 1);
    CHECK(covariance(a).isApprox(Vec3(4, 1, 1).asDiagonal().toDenseMatrix(), 1e-12));
}

TEST_CASE("covariance matches the explicit-product oracle and the s^2 spectrum") {
    SceneBox box = test::unit_box(10, 10, 10, 0.1);
    Rng rng(42);
    for (int i = 0; i < 1000; ++i) {
        GaussianAnchor a = activate(test::random_raw_anchor(rng, 4), box, 0.5);
        const Mat3 sigma = covariance(a);
        CHECK((sigma - covariance_oracle(a)).cwiseAbs().maxCoeff() < 1e-12);

        Eigen::SelfAdjointEigenSolver<Mat3> es(sigma);
        Vec3 expected = a.scale.cwiseProduct(a.scale);
        std::sort(expected.data(), expected.data() + 3);
        CHECK((es.eigenvalues() - expected).cwiseAbs().maxCoeff() < 1e-9);
    }
}

TEST_CASE("quaternion_to_matrix basics") {
    CHECK(quaternion_to_matrix(Vec4(1, 0, 0, 0)).isApprox(Mat3::Identity(), 1e-15));

    const double h = std::sqrt(0.5);
    Mat3 rz90;
    rz90 << 0, -1, 0, 1, 0, 0, 0, 0, 1;
    CHECK(quaternion_to_matrix(Vec4(h, 0, 0, h)).isApprox(rz90, 1e-12));
}

TEST_CASE("quaternion_to_matrix is orthonormal with det +1 and double covered") {
    Rng rng(7);
    for (int i = 0; i < 1000; ++i) {
        Vec4 q;
        for (int a = 0; a < 4; ++a) q[a] = rng.normal();
        q.normalize();
        const Mat3 r = quaternion_to_matrix(q);
        CHECK((r.transpose() * r - Mat3::Identity()).cwiseAbs().maxCoeff() < 1e-12);
        CHECK(r.determinant() == doctest::Approx(1.0).epsilon(1e-9));
        CHECK((quaternion_to_matrix(-q) - r).cwiseAbs().maxCoeff() == 0.0);
    }
}

TEST_CASE("quaternion jacobian matches finite differences") {
    Rng rng(3);
    Vec4 q;
    for (int a = 0; a < 4; ++a) q[a] = rng.normal();
    q.normalize();
    Mat3 jac[4];
    quaternion_to_matrix_jacobian(q, jac);
    const double h = 1e-6;
    for (int c = 0; c < 4; ++c) {
        Vec4 qp = q, qm = q;
        qp[c] += h;
        qm[c] -= h;
        const Mat3 fd = (quaternion_to_matrix(qp) - quaternion_to_matrix(qm)) / (2 * h);
        CHECK((fd - jac[c]).cwiseAbs().maxCoeff() < 1e-8);
    }
}
