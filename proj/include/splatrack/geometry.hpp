#pragma once

#include "splatrack/types.hpp"

#include <cmath>

namespace splatrack {

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Quaternions are stored as (w, x, y, z), Hamilton convention.
Vec4 quat_mul(const Vec4& a, const Vec4& b);
inline Vec4 quat_conj(const Vec4& q) { return Vec4(q[0], -q[1], -q[2], -q[3]); }

// Rotation matrix for a unit quaternion.
Mat3 quat_to_rot(const Vec4& unit_q);
Vec4 rot_to_quat(const Mat3& R);

// 4x4 matrix Q with quat_mul(q, p) == Q * q for fixed right operand p.
Eigen::Matrix4d quat_right_mul_matrix(const Vec4& p);

// Pulls a gradient w.r.t. q_hat = q/|q| back to the raw quaternion q.
Vec4 quat_normalize_backward(const Vec4& q, const Vec4& d_qhat);

// d(loss)/dq for R = quat_to_rot(q/|q|), given d(loss)/dR.
Vec4 quat_rotation_backward(const Vec4& q, const Mat3& dR);

// Rodrigues formula with a small-angle series fallback.
Mat3 so3_exp(const Vec3& w);

// Rigid transforms as 4x4 homogeneous matrices acting on column points.
Mat4 make_pose(const Mat3& R, const Vec3& t);
inline Mat3 pose_rotation(const Mat4& p) { return p.block<3, 3>(0, 0); }
inline Vec3 pose_translation(const Mat4& p) { return p.block<3, 1>(0, 3); }
Mat4 pose_inverse(const Mat4& p);
inline Vec3 transform_point(const Mat4& p, const Vec3& x) {
  return p.block<3, 3>(0, 0) * x + p.block<3, 1>(0, 3);
}
// Projects the rotation block back onto SO(3) via a quaternion round trip.
Mat4 orthonormalized(const Mat4& p);

inline Vec2 project_pinhole(const Intrinsics& k, const Vec3& cam_point) {
  return Vec2(k.fx * cam_point.x() / cam_point.z() + k.cx,
              k.fy * cam_point.y() / cam_point.z() + k.cy);
}
inline Vec3 unproject_pinhole(const Intrinsics& k, double u, double v, double z) {
  return Vec3((u - k.cx) * z / k.fx, (v - k.cy) * z / k.fy, z);
}

}  // namespace splatrack
