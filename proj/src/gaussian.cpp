#include "gsocc/gaussian.hpp"

namespace gsocc {

void GaussianAnchor::validate(double s_max) const {
    if (std::abs(rotation.norm() - 1.0) > 1e-6) {
        throw ValidationError("GaussianAnchor: rotation is not unit-norm");
    }
    for (int a = 0; a < 3; ++a) {
        if (!(scale[a] > 0.0) || scale[a] > s_max + 1e-12) {
            throw ValidationError("GaussianAnchor: scale out of (0, s_max]");
        }
    }
    if (!(opacity > 0.0) || !(opacity < 1.0)) {
        throw ValidationError("GaussianAnchor: opacity out of (0,1)");
    }
    if (semantics.size() == 0 || !semantics.allFinite() || !mean.allFinite()) {
        throw ValidationError("GaussianAnchor: non-finite or empty fields");
    }
}

GaussianAnchor activate(const UnconstrainedAnchor& raw, const SceneBox& box, double s_max) {
    if (!(s_max > 0.0)) {
        throw ValidationError("activate: s_max must be positive");
    }
    const double qnorm = raw.raw_rotation.norm();
    if (qnorm < 1e-12) {
        throw ValidationError("activate: degenerate rotation (norm < 1e-12)");
    }
    GaussianAnchor out;
    for (int a = 0; a < 3; ++a) {
        out.mean[a] = box.origin[a] + sigmoid(raw.raw_mean[a]) * box.extent[a];
        out.scale[a] = sigmoid(raw.raw_scale[a]) * s_max;
    }
    out.rotation = raw.raw_rotation / qnorm;
    out.opacity = sigmoid(raw.raw_opacity);
    out.semantics = raw.raw_semantics;
    return out;
}

std::vector<GaussianAnchor> activate_all(const std::vector<UnconstrainedAnchor>& raw,
                                         const SceneBox& box, double s_max) {
    std::vector<GaussianAnchor> out;
    out.reserve(raw.size());
    for (const auto& r : raw) out.push_back(activate(r, box, s_max));
    return out;
}

Mat3 quaternion_to_matrix(const Vec4& q) {
    const double w = q[0], x = q[1], y = q[2], z = q[3];
    Mat3 r;
    r << 1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y),
         2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x),
         2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y);
    return r;
}

Vec4 quaternion_multiply(const Vec4& a, const Vec4& b) {
    return Vec4(a[0] * b[0] - a[1] * b[1] - a[2] * b[2] - a[3] * b[3],
                a[0] * b[1] + a[1] * b[0] + a[2] * b[3] - a[3] * b[2],
                a[0] * b[2] - a[1] * b[3] + a[2] * b[0] + a[3] * b[1],
                a[0] * b[3] + a[1] * b[2] - a[2] * b[1] + a[3] * b[0]);
}

void quaternion_to_matrix_jacobian(const Vec4& q, Mat3 out[4]) {
    const double w = q[0], x = q[1], y = q[2], z = q[3];
    out[0] << 0.0, -z, y,
              z, 0.0, -x,
              -y, x, 0.0;
    out[1] << 0.0, y, z,
              y, -2.0 * x, -w,
              z, w, -2.0 * x;
    out[2] << -2.0 * y, x, w,
              x, 0.0, z,
              -w, z, -2.0 * y;
    out[3] << -2.0 * z, -w, x,
              w, -2.0 * z, y,
              x, y, 0.0;
    for (int i = 0; i < 4; ++i) out[i] *= 2.0;
}

Mat3 covariance(const GaussianAnchor& anchor) {
    const Mat3 r = quaternion_to_matrix(anchor.rotation);
    const Vec3 s2 = anchor.scale.cwiseProduct(anchor.scale);
    return r * s2.asDiagonal() * r.transpose();
}

UnconstrainedAnchor activate_backward(const UnconstrainedAnchor& raw, const SceneBox& box,
                                      double s_max, const AnchorGrad& grad) {
    UnconstrainedAnchor g;
    for (int a = 0; a < 3; ++a) {
        g.raw_mean[a] = grad.mean[a] * box.extent[a] * sigmoid_grad(raw.raw_mean[a]);
        g.raw_scale[a] = grad.scale[a] * s_max * sigmoid_grad(raw.raw_scale[a]);
    }
    const double qnorm = raw.raw_rotation.norm();
    const Vec4 q = raw.raw_rotation / qnorm;
    g.raw_rotation = (grad.rotation - q * q.dot(grad.rotation)) / qnorm;
    g.raw_opacity = grad.opacity * sigmoid_grad(raw.raw_opacity);
    g.raw_semantics = grad.semantics;
    return g;
}

}  // namespace gsocc
