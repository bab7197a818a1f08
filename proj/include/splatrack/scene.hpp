#pragma once

#include "splatrack/geometry.hpp"
#include "splatrack/types.hpp"

#include <array>
#include <optional>
#include <vector>

namespace splatrack {

// Camera intrinsics plus one world-to-camera rigid transform per timestep.
// Pose 0 is the identity: the first frame defines the scene reference.
class CameraState {
 public:
  CameraState() = default;
  explicit CameraState(const Intrinsics& k);

  const Intrinsics& intrinsics() const { return intr_; }
  int pose_count() const { return static_cast<int>(poses_.size()); }
  const Mat4& pose(int time) const;
  // time == pose_count() appends, time < pose_count() overwrites.
  void set_pose(int time, const Mat4& world_to_camera);

  Vec2 project(const Vec3& world, int time) const {
    return project_pinhole(intr_, transform_point(pose(time), world));
  }
  Vec3 unproject(double u, double v, double z, int time) const {
    return transform_point(pose_inverse(pose(time)), unproject_pinhole(intr_, u, v, z));
  }

 private:
  Intrinsics intr_;
  std::vector<Mat4> poses_;
};

// One timestep's observations. All maps share the camera's (width, height).
struct FrameObservation {
  Image3 rgb;
  Image1 depth;
  FeatureImage feature;
  ImageI instance;  // 0 = background
  ImageB background;

  static ImageB background_from_instance(const ImageI& instance);
  // Checks sizes against the intrinsics and that depth is finite and > 0.
  void validate(const Intrinsics& k) const;
};

// Structure-of-arrays dynamic Gaussian cloud. Means, rotations, colors and
// features keep their full per-timestep history; scales, opacity and instance
// id are constant over time. History index for Gaussian i at time t is
// t - birth_time[i]; entries exist for birth_time[i] <= t <= latest_time.
struct GaussianCloud {
  int feature_dim = 0;
  int latest_time = -1;

  std::vector<int> birth_time;
  std::vector<int> instance_id;
  std::vector<Vec3> log_scale;
  std::vector<double> opacity_logit;
  std::vector<std::vector<Vec3>> mean_hist;
  std::vector<std::vector<Vec4>> quat_hist;
  std::vector<std::vector<Vec3>> color_hist;
  std::vector<std::vector<VecX>> feature_hist;

  int size() const { return static_cast<int>(birth_time.size()); }
  bool born_by(int i, int time) const { return birth_time[i] <= time; }

  const Vec3& mean_at(int i, int t) const { return mean_hist[i][idx(i, t)]; }
  Vec3& mean_at(int i, int t) { return mean_hist[i][idx(i, t)]; }
  const Vec4& quat_at(int i, int t) const { return quat_hist[i][idx(i, t)]; }
  Vec4& quat_at(int i, int t) { return quat_hist[i][idx(i, t)]; }
  const Vec3& color_at(int i, int t) const { return color_hist[i][idx(i, t)]; }
  Vec3& color_at(int i, int t) { return color_hist[i][idx(i, t)]; }
  const VecX& feature_at(int i, int t) const { return feature_hist[i][idx(i, t)]; }
  VecX& feature_at(int i, int t) { return feature_hist[i][idx(i, t)]; }

  Vec3 scale(int i) const { return log_scale[i].array().exp(); }
  double opacity(int i) const { return sigmoid(opacity_logit[i]); }

  // Appends `delta` (a cloud whose Gaussians were all born at this
  // latest_time) to this cloud.
  void append(const GaussianCloud& delta);

  size_t idx(int i, int t) const { return static_cast<size_t>(t - birth_time[i]); }
};

struct CloudDelta {
  GaussianCloud cloud;
  std::vector<std::array<int, 2>> source_pixels;  // (x, y) per created Gaussian
  int skipped_nonpositive_depth = 0;
};

// Lifts every stride-th pixel (grid anchored at (0,0)) of `frame` to a 3D
// Gaussian at `time`. If `pixel_mask` is given only mask-true grid pixels are
// lifted. Pixels with non-positive depth are skipped and counted.
CloudDelta init_gaussians_from_frame(const FrameObservation& frame, const CameraState& camera,
                                     int time, int stride,
                                     const ImageB* pixel_mask = nullptr);

}  // namespace splatrack
