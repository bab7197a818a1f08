#include "splatrack/renderer.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace splatrack {

namespace {

// 2x3 Jacobian of the pinhole projection at a camera-frame point.
Eigen::Matrix<double, 2, 3> projection_jacobian(const Intrinsics& k, const Vec3& t_cam) {
  const double z = t_cam.z();
  Eigen::Matrix<double, 2, 3> J;
  J << k.fx / z, 0, -k.fx * t_cam.x() / (z * z),
      0, k.fy / z, -k.fy * t_cam.y() / (z * z);
  return J;
}

Mat3 world_covariance(const GaussianCloud& cloud, int i, int time) {
  const Mat3 rot = quat_to_rot(cloud.quat_at(i, time).normalized());
  const Vec3 s2 = cloud.scale(i).array().square();
  return rot * s2.asDiagonal() * rot.transpose();
}

struct Bbox {
  int x0, x1, y0, y1;  // inclusive; empty when x0 > x1
};

Bbox footprint(const Vec2& mu, const Mat2& cov, double radius_sigma, int w, int h) {
  const double half_tr = 0.5 * (cov(0, 0) + cov(1, 1));
  const double det_part = 0.25 * (cov(0, 0) - cov(1, 1)) * (cov(0, 0) - cov(1, 1)) +
                          cov(0, 1) * cov(0, 1);
  const double lambda_max = half_tr + std::sqrt(std::max(0.0, det_part));
  const double r = radius_sigma * std::sqrt(std::max(0.0, lambda_max));
  auto clamp_lo = [](double v, int hi) {
    if (!(v > 0.0)) return 0;
    if (v > hi) return hi + 1;
    return static_cast<int>(std::ceil(v));
  };
  auto clamp_hi = [](double v, int hi) {
    if (v < 0.0) return -1;
    if (!(v < hi)) return hi;
    return static_cast<int>(std::floor(v));
  };
  return {clamp_lo(mu.x() - r, w - 1), clamp_hi(mu.x() + r, w - 1),
          clamp_lo(mu.y() - r, h - 1), clamp_hi(mu.y() + r, h - 1)};
}

}  // namespace

ParamGradients::ParamGradients(int n, int feature_dim)
    : means(n, Vec3::Zero()),
      quats(n, Vec4::Zero()),
      log_scales(n, Vec3::Zero()),
      opacity_logits(n, 0.0),
      colors(n, Vec3::Zero()),
      features(n, VecX::Zero(feature_dim)) {}

void ParamGradients::add_scaled(const ParamGradients& other, double s) {
  for (size_t i = 0; i < means.size(); ++i) {
    means[i] += s * other.means[i];
    quats[i] += s * other.quats[i];
    log_scales[i] += s * other.log_scales[i];
    opacity_logits[i] += s * other.opacity_logits[i];
    colors[i] += s * other.colors[i];
    features[i] += s * other.features[i];
  }
  camera += s * other.camera;
}

std::vector<Projected2DGaussian> project_gaussians(const GaussianCloud& cloud,
                                                   const CameraState& camera, int time,
                                                   const RenderOptions& options,
                                                   int* skipped_singular) {
  const Intrinsics& k = camera.intrinsics();
  const Mat4& pose = camera.pose(time);
  const Mat3 rot_wc = pose_rotation(pose);
  const Vec3 t_wc = pose_translation(pose);

  std::vector<Projected2DGaussian> out;
  out.reserve(cloud.size());
  for (int i = 0; i < cloud.size(); ++i) {
    if (!cloud.born_by(i, time)) continue;
    const Vec3 t_cam = rot_wc * cloud.mean_at(i, time) + t_wc;
    if (t_cam.z() <= options.near_plane) continue;

    const Eigen::Matrix<double, 2, 3> J = projection_jacobian(k, t_cam);
    const Mat3 cam_cov = rot_wc * world_covariance(cloud, i, time) * rot_wc.transpose();
    const Mat2 cov2d = J * cam_cov * J.transpose();
    if (cov2d.determinant() <= 1e-12) {
      if (skipped_singular) ++*skipped_singular;
      continue;
    }
    Projected2DGaussian p;
    p.mean2d = project_pinhole(k, t_cam);
    p.cov2d = cov2d + options.dilation * Mat2::Identity();
    p.cam_depth = t_cam.z();
    p.gaussian_index = i;
    out.push_back(p);
  }
  std::sort(out.begin(), out.end(), [](const Projected2DGaussian& a, const Projected2DGaussian& b) {
    if (a.cam_depth != b.cam_depth) return a.cam_depth < b.cam_depth;
    return a.gaussian_index < b.gaussian_index;
  });
  return out;
}

RenderResult rasterize(const GaussianCloud& cloud, const CameraState& camera, int time,
                       const RenderOptions& options) {
  const Intrinsics& k = camera.intrinsics();
  const int w = k.width, h = k.height, d = cloud.feature_dim;

  RenderResult res;
  RenderContext& ctx = res.ctx;
  ctx.cloud_size = cloud.size();
  ctx.time = time;
  ctx.width = w;
  ctx.height = h;
  ctx.feature_dim = d;
  ctx.options = options;
  ctx.projected = project_gaussians(cloud, camera, time, options, &ctx.skipped_singular);
  ctx.per_pixel.assign(static_cast<size_t>(w) * h, {});

  const int np = static_cast<int>(ctx.projected.size());
  ctx.cov2d_inv.resize(np);
  ctx.opacity.resize(np);
  std::vector<double> depth_attr(np);
  const Mat4& pose = camera.pose(time);
  for (int p = 0; p < np; ++p) {
    const Projected2DGaussian& g = ctx.projected[p];
    const Mat2& c = g.cov2d;
    const double det = c(0, 0) * c(1, 1) - c(0, 1) * c(1, 0);
    Mat2 inv;
    inv << c(1, 1), -c(0, 1), -c(1, 0), c(0, 0);
    ctx.cov2d_inv[p] = inv / det;
    ctx.opacity[p] = cloud.opacity(g.gaussian_index);
    depth_attr[p] = options.depth_euclidean
                        ? transform_point(pose, cloud.mean_at(g.gaussian_index, time)).norm()
                        : g.cam_depth;
  }

  // Bin Gaussians to the pixels of their footprint; buckets inherit the
  // front-to-back order of the projected list.
  std::vector<std::vector<int>> buckets(static_cast<size_t>(w) * h);
  for (int p = 0; p < np; ++p) {
    const Bbox b = footprint(ctx.projected[p].mean2d, ctx.projected[p].cov2d,
                             options.radius_sigma, w, h);
    for (int y = b.y0; y <= b.y1; ++y)
      for (int x = b.x0; x <= b.x1; ++x) buckets[static_cast<size_t>(y) * w + x].push_back(p);
  }

  RenderedMaps& maps = res.maps;
  maps.color = Image3(w, h);
  maps.feature = FeatureImage(w, h, d);
  maps.depth = Image1(w, h);
  maps.background = Image1(w, h);
  maps.density = Image1(w, h);
  maps.per_gaussian_visibility.assign(cloud.size(), 0.0);

  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const size_t pix = static_cast<size_t>(y) * w + x;
      double T = 1.0;
      auto& contribs = ctx.per_pixel[pix];
      for (int p : buckets[pix]) {
        const Projected2DGaussian& g = ctx.projected[p];
        const Vec2 diff(x - g.mean2d.x(), y - g.mean2d.y());
        const double rho = diff.dot(ctx.cov2d_inv[p] * diff);
        const double alpha = ctx.opacity[p] * std::exp(-0.5 * rho);
        if (alpha < options.alpha_cutoff) continue;
        const double weight = T * alpha;
        const int i = g.gaussian_index;
        maps.color(y, x) += weight * cloud.color_at(i, time);
        maps.feature.at(y, x) += weight * cloud.feature_at(i, time);
        maps.depth(y, x) += weight * depth_attr[p];
        if (cloud.instance_id[i] == 0) maps.background(y, x) += weight;
        maps.per_gaussian_visibility[i] += weight;
        contribs.push_back({p, alpha, T});
        T *= 1.0 - alpha;
        if (T < options.transmittance_min) break;
      }
      maps.density(y, x) = 1.0 - T;
    }
  }
  return res;
}

ParamGradients rasterize_backward(const GaussianCloud& cloud, const CameraState& camera, int time,
                                  const RenderContext& ctx, const MapGradients& upstream,
                                  const BackwardOptions& bw) {
  const Intrinsics& k = camera.intrinsics();
  if (ctx.cloud_size != cloud.size() || ctx.time != time || ctx.width != k.width ||
      ctx.height != k.height || ctx.feature_dim != cloud.feature_dim)
    throw std::invalid_argument("rasterize_backward: context does not match forward inputs");
  if (!upstream.color.same_size(k.width, k.height) ||
      !upstream.feature.same_size(k.width, k.height) || upstream.feature.dim != cloud.feature_dim)
    throw std::invalid_argument("rasterize_backward: upstream size mismatch");

  const int np = static_cast<int>(ctx.projected.size());
  ParamGradients grads(cloud.size(), cloud.feature_dim);

  // Image-space accumulators per projected Gaussian.
  std::vector<Vec2> g_mu2d(np, Vec2::Zero());
  std::vector<Mat2> g_cov(np, Mat2::Zero());
  std::vector<double> g_depth_attr(np, 0.0);

  const Mat4& pose = camera.pose(time);
  const Mat3 rot_wc = pose_rotation(pose);
  const Vec3 t_wc = pose_translation(pose);

  std::vector<double> depth_attr(np);
  for (int p = 0; p < np; ++p) {
    const int i = ctx.projected[p].gaussian_index;
    depth_attr[p] = ctx.options.depth_euclidean ? (rot_wc * cloud.mean_at(i, time) + t_wc).norm()
                                                : ctx.projected[p].cam_depth;
  }

  VecX rest_f(cloud.feature_dim);
  for (int y = 0; y < ctx.height; ++y) {
    for (int x = 0; x < ctx.width; ++x) {
      const auto& contribs = ctx.per_pixel[static_cast<size_t>(y) * ctx.width + x];
      if (contribs.empty()) continue;
      const Vec3& u_c = upstream.color(y, x);
      const auto u_f = upstream.feature.at(y, x);
      const double u_d = upstream.depth(y, x);
      const double u_b = upstream.background(y, x);
      const double u_den = upstream.density(y, x);

      Vec3 rest_c = Vec3::Zero();
      rest_f.setZero();
      double rest_d = 0, rest_b = 0, rest_den = 0;

      for (auto it = contribs.rbegin(); it != contribs.rend(); ++it) {
        const int p = it->proj_ordinal;
        const Projected2DGaussian& g = ctx.projected[p];
        const int i = g.gaussian_index;
        const double alpha = it->alpha;
        const double T = it->transmittance;
        const double weight = T * alpha;
        const Vec3& c_i = cloud.color_at(i, time);
        const VecX& f_i = cloud.feature_at(i, time);
        const double z_i = depth_attr[p];
        const double bg_i = cloud.instance_id[i] == 0 ? 1.0 : 0.0;

        if (bw.param_grads) {
          grads.colors[i] += weight * u_c;
          grads.features[i] += weight * u_f;
        }

        // d(pixel outputs)/d(alpha_p), all channels.
        const double own = u_c.dot(c_i) + u_f.dot(f_i) + u_d * z_i + u_b * bg_i + u_den;
        const double rest = u_c.dot(rest_c) + u_f.dot(rest_f) + u_d * rest_d + u_b * rest_b +
                            u_den * rest_den;
        const double d_alpha = T * own - rest / (1.0 - alpha);

        if (bw.param_grads)
          grads.opacity_logits[i] += d_alpha * alpha * (1.0 - ctx.opacity[p]);
        const Vec2 diff(x - g.mean2d.x(), y - g.mean2d.y());
        const Vec2 v = ctx.cov2d_inv[p] * diff;
        g_mu2d[p] += (d_alpha * alpha) * v;
        g_cov[p] += (0.5 * d_alpha * alpha) * (v * v.transpose());
        g_depth_attr[p] += weight * u_d;

        rest_c += weight * c_i;
        rest_f += weight * f_i;
        rest_d += weight * z_i;
        rest_b += weight * bg_i;
        rest_den += weight;
      }
    }
  }

  // Chain image-space gradients through the projection to 3D parameters and
  // the camera pose tangent.
  for (int p = 0; p < np; ++p) {
    const int i = ctx.projected[p].gaussian_index;
    const Vec3& mu = cloud.mean_at(i, time);
    const Vec3 t_cam = rot_wc * mu + t_wc;
    const Eigen::Matrix<double, 2, 3> J = projection_jacobian(k, t_cam);
    const Mat3 sigma_world = world_covariance(cloud, i, time);
    const Mat3 cam_cov = rot_wc * sigma_world * rot_wc.transpose();

    Vec3 d_tcam = J.transpose() * g_mu2d[p];

    // Dependence of the projection Jacobian itself on the camera point.
    const Eigen::Matrix<double, 2, 3> dLdJ = 2.0 * g_cov[p] * J * cam_cov;
    const double z = t_cam.z(), z2 = z * z, z3 = z2 * z;
    d_tcam.x() += dLdJ(0, 2) * (-k.fx / z2);
    d_tcam.y() += dLdJ(1, 2) * (-k.fy / z2);
    d_tcam.z() += dLdJ(0, 0) * (-k.fx / z2) + dLdJ(0, 2) * (2.0 * k.fx * t_cam.x() / z3) +
                  dLdJ(1, 1) * (-k.fy / z2) + dLdJ(1, 2) * (2.0 * k.fy * t_cam.y() / z3);

    if (ctx.options.depth_euclidean)
      d_tcam += g_depth_attr[p] * t_cam.normalized();
    else
      d_tcam.z() += g_depth_attr[p];

    const Mat3 dLdV = J.transpose() * g_cov[p] * J;

    if (bw.param_grads) {
      grads.means[i] += rot_wc.transpose() * d_tcam;
      const Mat3 dLdSigma = rot_wc.transpose() * dLdV * rot_wc;
      const Mat3 rot = quat_to_rot(cloud.quat_at(i, time).normalized());
      const Vec3 s = cloud.scale(i);
      const Mat3 dLdRot = 2.0 * dLdSigma * rot * Vec3(s.array().square()).asDiagonal();
      grads.quats[i] += quat_rotation_backward(cloud.quat_at(i, time), dLdRot);
      const Mat3 b = rot.transpose() * dLdSigma * rot;
      for (int a = 0; a < 3; ++a) grads.log_scales[i][a] += 2.0 * s[a] * s[a] * b(a, a);
    }

    if (bw.camera_grad) {
      grads.camera.head<3>() += d_tcam;
      grads.camera.tail<3>() += (rot_wc * mu).cross(d_tcam);
      const Mat3 g_rot = 2.0 * dLdV * rot_wc * sigma_world;
      for (int c = 0; c < 3; ++c)
        grads.camera.tail<3>() += rot_wc.col(c).cross(g_rot.col(c));
    }
  }
  return grads;
}

ImageB densification_mask(const RenderedMaps& maps) {
  ImageB mask(maps.density.width, maps.density.height);
  for (size_t i = 0; i < mask.data.size(); ++i)
    mask.data[i] = maps.density.data[i] < 0.5 ? 1 : 0;
  return mask;
}

}  // namespace splatrack
