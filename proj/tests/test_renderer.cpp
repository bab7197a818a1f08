#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "splatrack/renderer.hpp"

#include "test_support.hpp"

#include <numeric>

using namespace splatrack;
using namespace splatrack::testing;

namespace {

GaussianCloud single_gaussian(const CameraState& cam, const Vec3& world, double sigma_world,
                              double logit, const Vec3& color, int feature_dim = 4) {
  GaussianCloud c;
  c.feature_dim = feature_dim;
  c.latest_time = 0;
  c.birth_time = {0};
  c.instance_id = {0};
  c.log_scale = {Vec3::Constant(std::log(sigma_world))};
  c.opacity_logit = {logit};
  c.mean_hist = {{world}};
  c.quat_hist = {{Vec4(1, 0, 0, 0)}};
  c.color_hist = {{color}};
  VecX f = VecX::LinSpaced(feature_dim, 0.1, 0.9);
  c.feature_hist = {{f}};
  return c;
}

MapGradients random_upstream(Rng& rng, int w, int h, int d) {
  MapGradients u(w, h, d);
  for (auto& v : u.color.data) v = Vec3(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
  for (auto& v : u.feature.data) v = rng.uniform(-1, 1);
  for (auto& v : u.depth.data) v = rng.uniform(-1, 1);
  for (auto& v : u.background.data) v = rng.uniform(-1, 1);
  for (auto& v : u.density.data) v = rng.uniform(-1, 1);
  return u;
}

double weighted_sum(const RenderedMaps& m, const MapGradients& u) {
  double s = 0;
  for (size_t i = 0; i < m.color.data.size(); ++i) s += m.color.data[i].dot(u.color.data[i]);
  for (size_t i = 0; i < m.feature.data.size(); ++i) s += m.feature.data[i] * u.feature.data[i];
  for (size_t i = 0; i < m.depth.data.size(); ++i) s += m.depth.data[i] * u.depth.data[i];
  for (size_t i = 0; i < m.background.data.size(); ++i)
    s += m.background.data[i] * u.background.data[i];
  for (size_t i = 0; i < m.density.data.size(); ++i) s += m.density.data[i] * u.density.data[i];
  return s;
}

}  // namespace

TEST_CASE("projection of an on-axis isotropic Gaussian has the closed form") {
  CameraState cam = make_camera(17, 17, 60, 60, 8.0, 8.0);
  const double z = 2.5, sigma = 0.05;
  GaussianCloud c = single_gaussian(cam, Vec3(0, 0, z), sigma, 0.7, Vec3(1, 0, 0));
  const auto proj = project_gaussians(c, cam, 0);
  REQUIRE(proj.size() == 1);
  CHECK((proj[0].mean2d - Vec2(8, 8)).norm() < 1e-12);
  const double var = 60.0 * 60.0 * sigma * sigma / (z * z) + 0.3;
  CHECK((proj[0].cov2d - var * Mat2::Identity()).norm() < 1e-10);
  CHECK(proj[0].cam_depth == doctest::Approx(z));
}

TEST_CASE("a Gaussian behind the camera is culled") {
  CameraState cam = small_camera();
  GaussianCloud c = single_gaussian(cam, Vec3(0, 0, -1.0), 0.05, 0.7, Vec3(1, 0, 0));
  CHECK(project_gaussians(c, cam, 0).empty());
}

TEST_CASE("isotropic covariance is invariant under quaternion rotation") {
  CameraState cam = small_camera();
  GaussianCloud c = single_gaussian(cam, Vec3(0.2, -0.1, 3.0), 0.08, 0.7, Vec3(1, 0, 0));
  const Mat2 base = project_gaussians(c, cam, 0)[0].cov2d;
  Rng rng(31);
  for (int trial = 0; trial < 5; ++trial) {
    Vec4 q(rng.normal(), rng.normal(), rng.normal(), rng.normal());
    c.quat_hist[0][0] = q.normalized();
    CHECK((project_gaussians(c, cam, 0)[0].cov2d - base).norm() < 1e-12);
  }
}

TEST_CASE("near-singular pre-dilation covariance is skipped with a counter") {
  CameraState cam = small_camera();
  GaussianCloud c = single_gaussian(cam, Vec3(0, 0, 3.0), 1e-9, 0.7, Vec3(1, 0, 0));
  int skipped = 0;
  CHECK(project_gaussians(c, cam, 0, {}, &skipped).empty());
  CHECK(skipped == 1);
}

TEST_CASE("a single opaque Gaussian reproduces its attributes at its center pixel") {
  CameraState cam = make_camera(17, 17, 60, 60, 8.0, 8.0);
  GaussianCloud c = single_gaussian(cam, Vec3(0, 0, 2.0), 0.05, 20.0, Vec3(0.3, 0.6, 0.9));
  const auto rr = rasterize(c, cam, 0);
  CHECK((rr.maps.color(8, 8) - Vec3(0.3, 0.6, 0.9)).norm() < 1e-8);
  CHECK(rr.maps.density(8, 8) == doctest::Approx(1.0).epsilon(1e-8));
  CHECK(rr.maps.depth(8, 8) == doctest::Approx(2.0).epsilon(1e-8));
  CHECK((rr.maps.feature.at(8, 8) - c.feature_hist[0][0]).norm() < 1e-8);
  CHECK(rr.maps.background(8, 8) == doctest::Approx(1.0).epsilon(1e-8));
}

TEST_CASE("empty cloud renders zeros") {
  CameraState cam = small_camera();
  GaussianCloud c;
  c.feature_dim = 4;
  c.latest_time = 0;
  const auto rr = rasterize(c, cam, 0);
  for (double v : rr.maps.density.data) CHECK(v == 0.0);
  for (const Vec3& v : rr.maps.color.data) CHECK(v == Vec3::Zero());
  for (double v : rr.maps.depth.data) CHECK(v == 0.0);
}

TEST_CASE("three overlapping Gaussians match a hand-accumulated composite") {
  CameraState cam = make_camera(17, 17, 60, 60, 8.0, 8.0);
  GaussianCloud c;
  c.feature_dim = 2;
  c.latest_time = 0;
  const double zs[3] = {2.0, 3.0, 4.5};
  const Vec3 cols[3] = {Vec3(1, 0, 0), Vec3(0, 1, 0), Vec3(0, 0, 1)};
  for (int i = 0; i < 3; ++i) {
    c.birth_time.push_back(0);
    c.instance_id.push_back(i);
    c.log_scale.push_back(Vec3::Constant(std::log(0.04 * zs[i])));
    c.opacity_logit.push_back(0.4 + 0.3 * i);
    c.mean_hist.push_back({cam.unproject(8.0 + 0.3 * i, 8.0 - 0.2 * i, zs[i], 0)});
    c.quat_hist.push_back({Vec4(1, 0, 0, 0)});
    c.color_hist.push_back({cols[i]});
    c.feature_hist.push_back({VecX::Constant(2, 0.5 * i)});
  }
  const auto rr = rasterize(c, cam, 0, RenderOptions::exact());

  // Direct evaluation of sum_i T_i alpha_i c_i over the depth-sorted triple.
  const auto proj = project_gaussians(c, cam, 0);
  Vec3 expected = Vec3::Zero();
  double T = 1.0;
  const Vec2 p(8, 8);
  for (const auto& g : proj) {
    const Vec2 d = p - g.mean2d;
    const double alpha =
        sigmoid(c.opacity_logit[g.gaussian_index]) * std::exp(-0.5 * d.dot(g.cov2d.inverse() * d));
    expected += T * alpha * c.color_hist[g.gaussian_index][0];
    T *= 1.0 - alpha;
  }
  CHECK((rr.maps.color(8, 8) - expected).norm() < 1e-12);
}

TEST_CASE("rasterizer equals the brute-force oracle on random scenes") {
  Rng rng(101);
  for (int scene = 0; scene < 10; ++scene) {
    CameraState cam = small_camera(28, 24);
    GaussianCloud c = random_cloud(rng, cam, 40, 6, 0, 3);
    const auto rr = rasterize(c, cam, 0, RenderOptions::exact());
    const auto om = oracle_render(c, cam, 0);
    double max_diff = 0;
    for (size_t i = 0; i < om.color.data.size(); ++i)
      max_diff = std::max(max_diff, (om.color.data[i] - rr.maps.color.data[i]).cwiseAbs().maxCoeff());
    for (size_t i = 0; i < om.feature.data.size(); ++i)
      max_diff = std::max(max_diff, std::abs(om.feature.data[i] - rr.maps.feature.data[i]));
    for (size_t i = 0; i < om.depth.data.size(); ++i)
      max_diff = std::max(max_diff, std::abs(om.depth.data[i] - rr.maps.depth.data[i]));
    for (size_t i = 0; i < om.background.data.size(); ++i)
      max_diff = std::max(max_diff, std::abs(om.background.data[i] - rr.maps.background.data[i]));
    for (size_t i = 0; i < om.density.data.size(); ++i)
      max_diff = std::max(max_diff, std::abs(om.density.data[i] - rr.maps.density.data[i]));
    CHECK(max_diff < 1e-5);
    for (int i = 0; i < c.size(); ++i)
      CHECK(std::abs(om.visibility[i] - rr.maps.per_gaussian_visibility[i]) < 1e-5);
  }
}

TEST_CASE("analytic gradients match central finite differences") {
  Rng rng(202);
  const RenderOptions opts = RenderOptions::exact();
  for (int scene = 0; scene < 4; ++scene) {
    CameraState cam = small_camera(20, 16);
    GaussianCloud c = random_cloud(rng, cam, 5, 6, 0, 2);
    const MapGradients u = random_upstream(rng, 20, 16, 6);
    auto eval = [&]() { return weighted_sum(rasterize(c, cam, 0, opts).maps, u); };

    const auto rr = rasterize(c, cam, 0, opts);
    const ParamGradients g = rasterize_backward(c, cam, 0, rr.ctx, u);

    for (int i = 0; i < c.size(); ++i) {
      for (int a = 0; a < 3; ++a) {
        CHECK(grad_close(g.means[i][a], central_diff(eval, c.mean_hist[i][0][a])));
        CHECK(grad_close(g.log_scales[i][a], central_diff(eval, c.log_scale[i][a])));
        CHECK(grad_close(g.colors[i][a], central_diff(eval, c.color_hist[i][0][a])));
      }
      for (int a = 0; a < 4; ++a)
        CHECK(grad_close(g.quats[i][a], central_diff(eval, c.quat_hist[i][0][a])));
      CHECK(grad_close(g.opacity_logits[i], central_diff(eval, c.opacity_logit[i])));
      for (int a = 0; a < 6; ++a)
        CHECK(grad_close(g.features[i][a], central_diff(eval, c.feature_hist[i][0][a])));
    }

    // Camera tangent: perturb through the retraction used by the optimizer.
    const Mat4 base = cam.pose(0);
    for (int a = 0; a < 6; ++a) {
      const double eps = 1e-3;
      auto perturbed = [&](double sign) {
        Vec6 delta = Vec6::Zero();
        delta[a] = sign * eps;
        CameraState pc = cam;
        pc.set_pose(0, make_pose(so3_exp(delta.tail<3>()) * pose_rotation(base),
                                 pose_translation(base) + delta.head<3>()));
        return weighted_sum(rasterize(c, pc, 0, opts).maps, u);
      };
      const double fd = (perturbed(1.0) - perturbed(-1.0)) / (2 * eps);
      CHECK(grad_close(g.camera[a], fd));
    }
  }
}

TEST_CASE("zero upstream yields zero gradients") {
  Rng rng(7);
  CameraState cam = small_camera();
  GaussianCloud c = random_cloud(rng, cam, 8, 4);
  const auto rr = rasterize(c, cam, 0);
  const MapGradients zero(cam.intrinsics().width, cam.intrinsics().height, 4);
  const ParamGradients g = rasterize_backward(c, cam, 0, rr.ctx, zero);
  for (int i = 0; i < c.size(); ++i) {
    CHECK(g.means[i] == Vec3::Zero());
    CHECK(g.quats[i] == Vec4::Zero());
    CHECK(g.opacity_logits[i] == 0.0);
  }
  CHECK(g.camera == Vec6::Zero());
}

TEST_CASE("backward rejects a mismatched forward context") {
  Rng rng(8);
  CameraState cam = small_camera();
  GaussianCloud c = random_cloud(rng, cam, 4, 4);
  const auto rr = rasterize(c, cam, 0);
  const MapGradients u(cam.intrinsics().width, cam.intrinsics().height, 4);
  GaussianCloud other = random_cloud(rng, cam, 5, 4);
  CHECK_THROWS_AS(rasterize_backward(other, cam, 0, rr.ctx, u), std::invalid_argument);
  CHECK_THROWS_AS(rasterize_backward(c, cam, 1, rr.ctx, u), std::invalid_argument);
}

TEST_CASE("density is monotone in any opacity logit") {
  Rng rng(9);
  CameraState cam = small_camera();
  GaussianCloud c = random_cloud(rng, cam, 6, 4);
  auto total_density = [&]() {
    const auto rr = rasterize(c, cam, 0, RenderOptions::exact());
    return std::accumulate(rr.maps.density.data.begin(), rr.maps.density.data.end(), 0.0);
  };
  for (int i = 0; i < c.size(); ++i) {
    const double before = total_density();
    c.opacity_logit[i] += 0.5;
    CHECK(total_density() >= before);
  }
}

TEST_CASE("rendering is invariant to the input Gaussian order") {
  Rng rng(10);
  CameraState cam = small_camera();
  GaussianCloud c = random_cloud(rng, cam, 12, 4);  // depths are all distinct
  GaussianCloud shuffled;
  shuffled.feature_dim = c.feature_dim;
  shuffled.latest_time = c.latest_time;
  std::vector<int> perm(c.size());
  std::iota(perm.begin(), perm.end(), 0);
  for (int i = c.size() - 1; i > 0; --i) std::swap(perm[i], perm[rng.uniform_int(0, i)]);
  for (int j : perm) {
    shuffled.birth_time.push_back(c.birth_time[j]);
    shuffled.instance_id.push_back(c.instance_id[j]);
    shuffled.log_scale.push_back(c.log_scale[j]);
    shuffled.opacity_logit.push_back(c.opacity_logit[j]);
    shuffled.mean_hist.push_back(c.mean_hist[j]);
    shuffled.quat_hist.push_back(c.quat_hist[j]);
    shuffled.color_hist.push_back(c.color_hist[j]);
    shuffled.feature_hist.push_back(c.feature_hist[j]);
  }
  const auto a = rasterize(c, cam, 0);
  const auto b = rasterize(shuffled, cam, 0);
  for (size_t i = 0; i < a.maps.color.data.size(); ++i)
    CHECK(a.maps.color.data[i] == b.maps.color.data[i]);
  for (size_t i = 0; i < perm.size(); ++i)
    CHECK(a.maps.per_gaussian_visibility[perm[i]] ==
          b.maps.per_gaussian_visibility[i]);
}

TEST_CASE("densification mask applies a strict 0.5 threshold") {
  RenderedMaps m;
  m.density = Image1(3, 1);
  m.density(0, 0) = 0.0;
  m.density(0, 1) = 0.49999;
  m.density(0, 2) = 0.5;
  const ImageB mask = densification_mask(m);
  CHECK(mask(0, 0) == 1);
  CHECK(mask(0, 1) == 1);
  CHECK(mask(0, 2) == 0);
}

TEST_CASE("mask is all true for an empty scene and all false behind an opaque wall") {
  CameraState cam = small_camera();
  GaussianCloud empty;
  empty.feature_dim = 2;
  empty.latest_time = 0;
  const auto none = rasterize(empty, cam, 0);
  for (uint8_t v : densification_mask(none.maps).data) CHECK(v == 1);

  // Dense wall of near-opaque Gaussians covering the frame.
  GaussianCloud wall;
  wall.feature_dim = 2;
  wall.latest_time = 0;
  const Intrinsics& k = cam.intrinsics();
  for (int y = 0; y < k.height; y += 2)
    for (int x = 0; x < k.width; x += 2) {
      wall.birth_time.push_back(0);
      wall.instance_id.push_back(0);
      wall.log_scale.push_back(Vec3::Constant(std::log(3.0 * 2.0 / k.fx)));
      wall.opacity_logit.push_back(10.0);
      wall.mean_hist.push_back({cam.unproject(x, y, 2.0, 0)});
      wall.quat_hist.push_back({Vec4(1, 0, 0, 0)});
      wall.color_hist.push_back({Vec3(1, 1, 1)});
      wall.feature_hist.push_back({VecX::Zero(2)});
    }
  const auto solid = rasterize(wall, cam, 0);
  for (uint8_t v : densification_mask(solid.maps).data) CHECK(v == 0);
}
