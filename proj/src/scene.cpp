#include "splatrack/scene.hpp"

#include <cmath>
#include <stdexcept>

namespace splatrack {

CameraState::CameraState(const Intrinsics& k) : intr_(k) {
  poses_.push_back(Mat4::Identity());
}

const Mat4& CameraState::pose(int time) const {
  if (time < 0 || time >= pose_count())
    throw std::out_of_range("CameraState::pose: no pose for time " + std::to_string(time));
  return poses_[time];
}

void CameraState::set_pose(int time, const Mat4& world_to_camera) {
  if (time < 0 || time > pose_count())
    throw std::out_of_range("CameraState::set_pose: discontiguous time " + std::to_string(time));
  if (time == pose_count())
    poses_.push_back(world_to_camera);
  else
    poses_[time] = world_to_camera;
}

ImageB FrameObservation::background_from_instance(const ImageI& instance) {
  ImageB bg(instance.width, instance.height);
  for (size_t i = 0; i < instance.data.size(); ++i) bg.data[i] = instance.data[i] == 0 ? 1 : 0;
  return bg;
}

void FrameObservation::validate(const Intrinsics& k) const {
  const int w = k.width, h = k.height;
  if (!rgb.same_size(w, h) || !depth.same_size(w, h) || !feature.same_size(w, h) ||
      !instance.same_size(w, h) || !background.same_size(w, h))
    throw std::invalid_argument("FrameObservation: map size does not match camera");
  for (double z : depth.data)
    if (!std::isfinite(z) || z <= 0.0)
      throw std::invalid_argument("FrameObservation: depth must be finite and > 0");
}

void GaussianCloud::append(const GaussianCloud& delta) {
  if (delta.size() == 0) return;
  if (feature_dim == 0 && size() == 0) feature_dim = delta.feature_dim;
  if (delta.feature_dim != feature_dim)
    throw std::invalid_argument("GaussianCloud::append: feature dim mismatch");
  if (size() > 0 && delta.latest_time != latest_time)
    throw std::invalid_argument("GaussianCloud::append: delta time does not match cloud");
  latest_time = delta.latest_time;
  birth_time.insert(birth_time.end(), delta.birth_time.begin(), delta.birth_time.end());
  instance_id.insert(instance_id.end(), delta.instance_id.begin(), delta.instance_id.end());
  log_scale.insert(log_scale.end(), delta.log_scale.begin(), delta.log_scale.end());
  opacity_logit.insert(opacity_logit.end(), delta.opacity_logit.begin(),
                       delta.opacity_logit.end());
  mean_hist.insert(mean_hist.end(), delta.mean_hist.begin(), delta.mean_hist.end());
  quat_hist.insert(quat_hist.end(), delta.quat_hist.begin(), delta.quat_hist.end());
  color_hist.insert(color_hist.end(), delta.color_hist.begin(), delta.color_hist.end());
  feature_hist.insert(feature_hist.end(), delta.feature_hist.begin(), delta.feature_hist.end());
}

CloudDelta init_gaussians_from_frame(const FrameObservation& frame, const CameraState& camera,
                                     int time, int stride, const ImageB* pixel_mask) {
  if (stride < 1) throw std::invalid_argument("init_gaussians_from_frame: stride must be >= 1");
  const Intrinsics& k = camera.intrinsics();
  const Mat4 cam_to_world = pose_inverse(camera.pose(time));

  CloudDelta out;
  GaussianCloud& c = out.cloud;
  c.feature_dim = frame.feature.dim;
  c.latest_time = time;

  const double focal_mean = 0.5 * (k.fx + k.fy);
  for (int y = 0; y < k.height; y += stride) {
    for (int x = 0; x < k.width; x += stride) {
      if (pixel_mask && !(*pixel_mask)(y, x)) continue;
      const double z = frame.depth(y, x);
      if (!(z > 0.0)) {
        ++out.skipped_nonpositive_depth;
        continue;
      }
      c.birth_time.push_back(time);
      c.instance_id.push_back(frame.instance(y, x));
      c.log_scale.push_back(Vec3::Constant(std::log(z / focal_mean)));
      c.opacity_logit.push_back(0.7);
      c.mean_hist.push_back({transform_point(cam_to_world, unproject_pinhole(k, x, y, z))});
      c.quat_hist.push_back({Vec4(1, 0, 0, 0)});
      c.color_hist.push_back({frame.rgb(y, x)});
      c.feature_hist.push_back({VecX(frame.feature.at(y, x))});
      out.source_pixels.push_back({x, y});
    }
  }
  return out;
}

}  // namespace splatrack
