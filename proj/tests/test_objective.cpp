#include <doctest.h>

#include <cmath>
#include <random>

#include "helpers.hpp"
#include "stereosil/image.hpp"
#include "stereosil/mesh.hpp"
#include "stereosil/objective.hpp"
#include "stereosil/pose.hpp"
#include "stereosil/render.hpp"
#include "stereosil/synthetic.hpp"

using namespace stereosil;
using namespace stereosil::testing;

namespace {

ImageF dilate4(const ImageF& mask) {
  ImageF out(mask.width, mask.height, 0.0);
  for (int y = 0; y < mask.height; ++y)
    for (int x = 0; x < mask.width; ++x) {
      bool on = mask.at(x, y) == 1.0;
      if (!on && x > 0) on = mask.at(x - 1, y) == 1.0;
      if (!on && x < mask.width - 1) on = mask.at(x + 1, y) == 1.0;
      if (!on && y > 0) on = mask.at(x, y - 1) == 1.0;
      if (!on && y < mask.height - 1) on = mask.at(x, y + 1) == 1.0;
      out.at(x, y) = on ? 1.0 : 0.0;
    }
  return out;
}

ImageF all_ones(int w, int h) { return ImageF(w, h, 1.0); }

}  // namespace

TEST_CASE("dt mse hand cases") {
  CHECK(dt_mse_loss(ImageF(4, 4, 0.0), ImageF(4, 4, 0.0)) == 0.0);

  ImageF single(4, 4, 0.0);
  single.at(2, 1) = 1.0;
  CHECK(dt_mse_loss(ImageF(4, 4, 0.0), single) == 0.0);

  // Full 4x4 mask: the border ring is boundary (distance 0), the four interior
  // pixels sit one pixel from it. Checked against the brute-force field.
  const ImageF seg = all_ones(4, 4);
  ImageF render(4, 4, 0.0);
  render.at(0, 0) = 1.0;
  render.at(1, 1) = 1.0;
  render.at(2, 2) = 1.0;
  const ImageF d = brute_force_distance_transform(seg);
  CHECK(d.at(1, 1) == 1.0);
  CHECK(d.at(0, 0) == 0.0);
  double expected = 0;
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 4; ++x) {
      const double r = render.at(x, y) - d.at(x, y);
      expected += r * r;
    }
  expected /= 16.0;
  CHECK(dt_mse_loss(render, seg) == doctest::Approx(expected).epsilon(1e-15));
  CHECK(expected > 0.0);
}

TEST_CASE("dt normalization rescales the target field to unit maximum") {
  // 6x6 full mask: distances 0 on the outer ring, 1 on the next, 2 at the
  // centre four. Normalized squares average to 7/36; raw squares to 7/9.
  const ImageF seg = all_ones(6, 6);
  const ImageF zero(6, 6, 0.0);
  LossConfig raw;
  raw.kind = LossConfig::Kind::DtMse;
  CHECK(dt_mse_loss(zero, seg, raw) == doctest::Approx(7.0 / 9.0).epsilon(1e-12));
  LossConfig norm = raw;
  norm.normalize_dt = true;
  CHECK(dt_mse_loss(zero, seg, norm) == doctest::Approx(7.0 / 36.0).epsilon(1e-12));
}

TEST_CASE("soft dice hand cases") {
  const int n = 5;
  const ImageF ones = all_ones(n, n);
  const double eps = 1e-6;
  const double big_n = n * n;
  CHECK(soft_dice_loss(ones, ones) ==
        doctest::Approx(eps / (2.0 * big_n + eps)).epsilon(1e-12));

  CHECK(soft_dice_loss(ImageF(n, n, 0.0), ones) == 1.0);

  // 2x2 with a single pixel: every complement pixel touches the image border,
  // so the decay field is 1 everywhere and the terms can be enumerated.
  ImageF s(2, 2, 0.0);
  s.at(0, 0) = 1.0;
  const double expected = 1.0 - 2.0 * 1.0 / (1.0 + 4.0 + eps);
  CHECK(soft_dice_loss(s, s) == doctest::Approx(expected).epsilon(1e-14));
}

TEST_CASE("soft dice decay field equals exp(-d(complement)/sigma) from the oracle") {
  std::mt19937_64 rng(404);
  for (int trial = 0; trial < 8; ++trial) {
    const ImageF s = random_blob(24, 20, rng);
    for (double sigma : {1.0, 2.0, 5.0}) {
      LossConfig cfg;
      cfg.kind = LossConfig::Kind::SoftDice;
      cfg.sigma = sigma;
      const LossTarget target = make_loss_target(s, cfg);
      ImageF complement(s.width, s.height);
      for (std::size_t i = 0; i < s.data.size(); ++i) complement.data[i] = 1.0 - s.data[i];
      const ImageF d = brute_force_distance_transform(complement);
      for (std::size_t i = 0; i < s.data.size(); ++i)
        CHECK(target.field.data[i] == std::exp(-d.data[i] / sigma));
    }
  }
}

TEST_CASE("soft dice discriminates alignment on random blobs") {
  std::mt19937_64 rng(777);
  for (int trial = 0; trial < 10; ++trial) {
    const ImageF s = random_blob(32, 32, rng);
    const double at_truth = soft_dice_loss(s, s);

    const ImageF candidates[] = {translate_mask(s, 1, 0), translate_mask(s, 0, 1),
                                 translate_mask(s, 2, 2), dilate4(s), random_blob(32, 32, rng)};
    for (const ImageF& m : candidates) {
      if (intersection_over_union(m, s) >= 1.0) continue;  // degenerate draw
      CHECK(at_truth < soft_dice_loss(m, s));
    }
  }
}

TEST_CASE("losses are finite and nonnegative on random inputs") {
  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 10; ++trial) {
    const ImageF s = random_blob(20, 28, rng);
    const ImageF m = random_blob(20, 28, rng);
    for (double v : {dt_mse_loss(m, s), soft_dice_loss(m, s)}) {
      CHECK(std::isfinite(v));
      CHECK(v >= 0.0);
    }
  }
}

TEST_CASE("loss preconditions are enforced") {
  CHECK_THROWS(dt_mse_loss(ImageF(3, 3, 0.0), ImageF(4, 4, 0.0)));
  ImageF non_binary(3, 3, 0.5);
  CHECK_THROWS(soft_dice_loss(ImageF(3, 3, 0.0), non_binary));
  LossConfig bad_sigma;
  bad_sigma.sigma = 0.0;
  CHECK_THROWS(make_loss_target(ImageF(3, 3, 0.0), bad_sigma));
  LossConfig bad_eps;
  bad_eps.epsilon = -1.0;
  CHECK_THROWS(make_loss_target(ImageF(3, 3, 0.0), bad_eps));
}

TEST_CASE("stereo objective superposes two mono losses on a mirrored fixture") {
  // Identical pinhole cameras with centred principal points, baseline b along
  // x, and a sphere centred halfway between the optical axes: the two views
  // are exact mirror images, so each contributes the same mono loss.
  RobotModel model;
  model.name = "single";
  model.links.push_back({"only", "", Eigen::Isometry3d::Identity(), Eigen::Vector3d::Ones()});
  model.root_link = 0;
  const std::vector<TriangleMesh> meshes = {make_icosphere(0.05, 3)};

  const double b = 0.11;
  StereoRig rig;
  rig.left.fx = rig.left.fy = 240.0;
  rig.left.width = 128;
  rig.left.height = 96;
  rig.left.cx = 128 / 2.0 - 0.5;
  rig.left.cy = 96 / 2.0 - 0.5;
  rig.right = rig.left;
  rig.left_to_right = Eigen::Isometry3d::Identity();
  rig.left_to_right.translation() << -b, 0, 0;

  Eigen::Isometry3d pose = Eigen::Isometry3d::Identity();
  pose.translation() << b / 2.0, 0.013, 1.37;

  RenderConfig hard;
  hard.width = rig.left.width;
  hard.height = rig.left.height;
  hard.tau = 0.0;
  const Eigen::VectorXd q;  // no joints
  StereoObservation obs;
  obs.left = render_silhouette(model, meshes, q, pose, rig.left, hard);
  obs.right = render_silhouette(model, meshes, q, rig.left_to_right * pose, rig.right, hard);

  RenderConfig soft = hard;
  soft.tau = 1.5;
  LossConfig dice;
  dice.kind = LossConfig::Kind::SoftDice;

  const double objective =
      stereo_objective(pose, model, meshes, {q}, {obs}, rig, soft, dice);

  const ImageF m_left = render_silhouette(model, meshes, q, pose, rig.left, soft);
  const ImageF m_right =
      render_silhouette(model, meshes, q, rig.left_to_right * pose, rig.right, soft);
  const double mono_left = loss_value(m_left, make_loss_target(obs.left, dice));
  const double mono_right = loss_value(m_right, make_loss_target(obs.right, dice));

  CHECK(objective == doctest::Approx(mono_left + mono_right).epsilon(1e-15));
  CHECK(mono_left == doctest::Approx(mono_right).epsilon(1e-9));
  CHECK(objective == doctest::Approx(2.0 * mono_left).epsilon(1e-9));
}

TEST_CASE("stereo objective is exactly invariant to configuration order") {
  const RobotModel model = make_arm7();
  const std::vector<TriangleMesh> meshes = arm7_link_meshes();
  const StereoRig rig = make_small_rig();
  const Eigen::Isometry3d pose = arm7_view_pose(1.5);
  const std::vector<Eigen::VectorXd> q_set = jittered_q_set(arm7_home(), 3, 99);
  const std::vector<StereoObservation> obs = render_observations(model, meshes, q_set, pose, rig);

  RenderConfig cfg = hard_config(rig);
  LossConfig dice;
  dice.kind = LossConfig::Kind::SoftDice;

  Eigen::Isometry3d query = pose;
  query.translation().x() += 0.01;  // off-truth so per-config losses differ
  const double forward = stereo_objective(query, model, meshes, q_set, obs, rig, cfg, dice);

  std::vector<Eigen::VectorXd> q_rev(q_set.rbegin(), q_set.rend());
  std::vector<StereoObservation> obs_rev(obs.rbegin(), obs.rend());
  const double reversed = stereo_objective(query, model, meshes, q_rev, obs_rev, rig, cfg, dice);
  CHECK(forward == reversed);
}

TEST_CASE("stereo objective: empty config set sums to zero") {
  const RobotModel model = make_arm7();
  const std::vector<TriangleMesh> meshes = arm7_link_meshes();
  const StereoRig rig = make_small_rig();
  CHECK(stereo_objective(arm7_view_pose(1.5), model, meshes, {}, {}, rig, hard_config(rig),
                         LossConfig{}) == 0.0);
}

TEST_CASE("stereo objective rejects missing views") {
  const RobotModel model = make_arm7();
  const std::vector<TriangleMesh> meshes = arm7_link_meshes();
  const StereoRig rig = make_small_rig();
  const std::vector<Eigen::VectorXd> q_set = {arm7_home()};
  StereoObservation incomplete;
  incomplete.right = ImageF(rig.right.width, rig.right.height, 0.0);
  CHECK_THROWS_WITH_AS(stereo_objective(arm7_view_pose(1.5), model, meshes, q_set, {incomplete},
                                        rig, hard_config(rig), LossConfig{}),
                       doctest::Contains("missing view"), std::runtime_error);
}

TEST_CASE("ground-truth pose beats 50 random nearby perturbations") {
  const RobotModel model = make_arm7();
  const std::vector<TriangleMesh> meshes = arm7_link_meshes();
  const StereoRig rig = make_small_rig();
  const Eigen::Isometry3d pose = arm7_view_pose(1.5);
  const std::vector<Eigen::VectorXd> q_set = jittered_q_set(arm7_home(), 2, 5);
  const std::vector<StereoObservation> obs = render_observations(model, meshes, q_set, pose, rig);

  const RenderConfig cfg = hard_config(rig);
  LossConfig dice;
  dice.kind = LossConfig::Kind::SoftDice;
  const auto targets = make_stereo_targets(obs, dice);
  const double at_truth =
      stereo_objective_cached(pose, model, meshes, q_set, targets, rig, cfg);

  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    Eigen::Vector3d axis(unit(rng), unit(rng), unit(rng));
    if (axis.norm() < 1e-9) axis = Eigen::Vector3d::UnitX();
    axis.normalize();
    const Eigen::Vector3d rot = axis * (5.0 * EIGEN_PI / 180.0);
    const Eigen::Vector3d trans =
        Eigen::Vector3d(unit(rng), unit(rng), unit(rng)).normalized() * 0.05;
    const Eigen::Isometry3d perturbed = perturb_pose(pose, rot, trans);
    const double off =
        stereo_objective_cached(perturbed, model, meshes, q_set, targets, rig, cfg);
    CHECK(at_truth < off);
  }
}
