#include "splatrack/geometry.hpp"

#include <stdexcept>

namespace splatrack {

Vec4 quat_mul(const Vec4& a, const Vec4& b) {
  return Vec4(a[0] * b[0] - a[1] * b[1] - a[2] * b[2] - a[3] * b[3],
              a[0] * b[1] + a[1] * b[0] + a[2] * b[3] - a[3] * b[2],
              a[0] * b[2] - a[1] * b[3] + a[2] * b[0] + a[3] * b[1],
              a[0] * b[3] + a[1] * b[2] - a[2] * b[1] + a[3] * b[0]);
}

Mat3 quat_to_rot(const Vec4& q) {
  const double w = q[0], x = q[1], y = q[2], z = q[3];
  Mat3 r;
  r << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
      2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
      2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
  return r;
}

Vec4 rot_to_quat(const Mat3& m) {
  // Shepperd's method, branch on the largest diagonal term.
  Vec4 q;
  const double tr = m.trace();
  if (tr > 0.0) {
    double s = std::sqrt(tr + 1.0) * 2.0;
    q << 0.25 * s, (m(2, 1) - m(1, 2)) / s, (m(0, 2) - m(2, 0)) / s, (m(1, 0) - m(0, 1)) / s;
  } else if (m(0, 0) > m(1, 1) && m(0, 0) > m(2, 2)) {
    double s = std::sqrt(1.0 + m(0, 0) - m(1, 1) - m(2, 2)) * 2.0;
    q << (m(2, 1) - m(1, 2)) / s, 0.25 * s, (m(0, 1) + m(1, 0)) / s, (m(0, 2) + m(2, 0)) / s;
  } else if (m(1, 1) > m(2, 2)) {
    double s = std::sqrt(1.0 + m(1, 1) - m(0, 0) - m(2, 2)) * 2.0;
    q << (m(0, 2) - m(2, 0)) / s, (m(0, 1) + m(1, 0)) / s, 0.25 * s, (m(1, 2) + m(2, 1)) / s;
  } else {
    double s = std::sqrt(1.0 + m(2, 2) - m(0, 0) - m(1, 1)) * 2.0;
    q << (m(1, 0) - m(0, 1)) / s, (m(0, 2) + m(2, 0)) / s, (m(1, 2) + m(2, 1)) / s, 0.25 * s;
  }
  return q.normalized();
}

Eigen::Matrix4d quat_right_mul_matrix(const Vec4& p) {
  const double w = p[0], x = p[1], y = p[2], z = p[3];
  Eigen::Matrix4d m;
  m << w, -x, -y, -z,
      x, w, z, -y,
      y, -z, w, x,
      z, y, -x, w;
  return m;
}

Vec4 quat_normalize_backward(const Vec4& q, const Vec4& d_qhat) {
  const double n = q.norm();
  if (n < 1e-300) throw std::invalid_argument("quat_normalize_backward: zero quaternion");
  const Vec4 qhat = q / n;
  return (d_qhat - qhat * qhat.dot(d_qhat)) / n;
}

Vec4 quat_rotation_backward(const Vec4& q, const Mat3& g) {
  const Vec4 qh = q.normalized();
  const double w = qh[0], x = qh[1], y = qh[2], z = qh[3];
  Vec4 d;
  // <g, dR/dq_k> for the unit-quaternion rotation formula.
  d[0] = 2 * (-z * g(0, 1) + y * g(0, 2) + z * g(1, 0) - x * g(1, 2) - y * g(2, 0) + x * g(2, 1));
  d[1] = 2 * (y * g(0, 1) + z * g(0, 2) + y * g(1, 0) - 2 * x * g(1, 1) - w * g(1, 2) +
              z * g(2, 0) + w * g(2, 1) - 2 * x * g(2, 2));
  d[2] = 2 * (-2 * y * g(0, 0) + x * g(0, 1) + w * g(0, 2) + x * g(1, 0) + z * g(1, 2) -
              w * g(2, 0) + z * g(2, 1) - 2 * y * g(2, 2));
  d[3] = 2 * (-2 * z * g(0, 0) - w * g(0, 1) + x * g(0, 2) + w * g(1, 0) - 2 * z * g(1, 1) +
              y * g(1, 2) + x * g(2, 0) + y * g(2, 1));
  return quat_normalize_backward(q, d);
}

Mat3 so3_exp(const Vec3& w) {
  const double theta2 = w.squaredNorm();
  Mat3 wx;
  wx << 0, -w.z(), w.y(), w.z(), 0, -w.x(), -w.y(), w.x(), 0;
  if (theta2 < 1e-16) {
    // I + wx + wx^2/2, adequate below sqrt(eps).
    return Mat3::Identity() + wx + 0.5 * wx * wx;
  }
  const double theta = std::sqrt(theta2);
  return Mat3::Identity() + (std::sin(theta) / theta) * wx +
         ((1.0 - std::cos(theta)) / theta2) * wx * wx;
}

Mat4 make_pose(const Mat3& R, const Vec3& t) {
  Mat4 p = Mat4::Identity();
  p.block<3, 3>(0, 0) = R;
  p.block<3, 1>(0, 3) = t;
  return p;
}

Mat4 pose_inverse(const Mat4& p) {
  const Mat3 rt = pose_rotation(p).transpose();
  return make_pose(rt, -rt * pose_translation(p));
}

Mat4 orthonormalized(const Mat4& p) {
  const Vec4 q = rot_to_quat(pose_rotation(p));
  return make_pose(quat_to_rot(q), pose_translation(p));
}

}  // namespace splatrack
