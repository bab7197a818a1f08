#pragma once

#include "splatrack/scene.hpp"

#include <vector>

namespace splatrack {

struct RenderOptions {
  double near_plane = 0.01;
  double dilation = 0.3;                   // low-pass added to the 2D covariance, px^2
  double alpha_cutoff = 1.0 / 255.0;       // contributions below this are skipped
  double transmittance_min = 1e-4;         // compositing stops once T drops below
  double radius_sigma = 3.5;               // footprint half-extent in sigmas
  bool depth_euclidean = false;            // composite |t_cam| instead of camera z

  // No cutoffs and footprints covering any image; matches a brute-force
  // per-pixel evaluation to floating-point accuracy.
  static RenderOptions exact() {
    RenderOptions o;
    o.alpha_cutoff = 0.0;
    o.transmittance_min = 0.0;
    o.radius_sigma = 1e9;
    return o;
  }
};

struct Projected2DGaussian {
  Vec2 mean2d;
  Mat2 cov2d;        // after dilation
  double cam_depth;  // camera-frame z of the mean
  int gaussian_index;
};

struct RenderedMaps {
  Image3 color;
  FeatureImage feature;
  Image1 depth;
  Image1 background;  // composited [instance_id == 0] indicator
  Image1 density;     // sum of T_i * alpha_i
  std::vector<double> per_gaussian_visibility;  // accumulated T * alpha per Gaussian
};

struct PixelContribution {
  int proj_ordinal;     // into RenderContext::projected
  double alpha;
  double transmittance;  // T at compositing time
};

// Everything the backward pass needs to replay the forward compositing.
struct RenderContext {
  int cloud_size = 0;
  int time = -1;
  int width = 0, height = 0, feature_dim = 0;
  RenderOptions options;
  std::vector<Projected2DGaussian> projected;  // sorted front to back
  std::vector<Mat2> cov2d_inv;
  std::vector<double> opacity;
  std::vector<std::vector<PixelContribution>> per_pixel;  // row-major, width*height
  int skipped_singular = 0;
};

struct RenderResult {
  RenderedMaps maps;
  RenderContext ctx;
};

// Upstream gradients, one image per rendered channel.
struct MapGradients {
  Image3 color;
  FeatureImage feature;
  Image1 depth;
  Image1 background;
  Image1 density;

  MapGradients() = default;
  MapGradients(int w, int h, int d)
      : color(w, h), feature(w, h, d), depth(w, h), background(w, h), density(w, h) {}
};

struct ParamGradients {
  std::vector<Vec3> means;
  std::vector<Vec4> quats;
  std::vector<Vec3> log_scales;
  std::vector<double> opacity_logits;
  std::vector<Vec3> colors;
  std::vector<VecX> features;
  Vec6 camera = Vec6::Zero();  // pose tangent: (translation xyz, rotation xyz)

  ParamGradients() = default;
  ParamGradients(int n, int feature_dim);
  void add_scaled(const ParamGradients& other, double s);
};

struct BackwardOptions {
  bool param_grads = true;
  bool camera_grad = true;
};

// EWA projection of all Gaussians born by `time`. Gaussians behind the near
// plane are culled; singular pre-dilation covariances are skipped and counted
// in `skipped_singular` when given. Result is sorted by (cam_depth, index).
std::vector<Projected2DGaussian> project_gaussians(const GaussianCloud& cloud,
                                                   const CameraState& camera, int time,
                                                   const RenderOptions& options = {},
                                                   int* skipped_singular = nullptr);

RenderResult rasterize(const GaussianCloud& cloud, const CameraState& camera, int time,
                       const RenderOptions& options = {});

// Analytic gradients of the forward map recorded in `ctx` w.r.t. every
// Gaussian parameter and the camera pose tangent. Throws if `ctx` does not
// match (cloud, camera, time).
ParamGradients rasterize_backward(const GaussianCloud& cloud, const CameraState& camera, int time,
                                  const RenderContext& ctx, const MapGradients& upstream,
                                  const BackwardOptions& bw = {});

// True exactly where density < 0.5.
ImageB densification_mask(const RenderedMaps& maps);

}  // namespace splatrack
