#include <doctest.h>

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <vector>

#include "helpers.hpp"
#include "stereosil/breathing.hpp"

using namespace stereosil;
using doctest::Approx;
using doctest::Contains;

namespace {

std::vector<BreathingSample> sample_model(const BreathingModel& model, double rate_hz,
                                          double duration_s) {
  std::vector<BreathingSample> out;
  const int n = static_cast<int>(std::llround(duration_s * rate_hz));
  for (int i = 0; i <= n; ++i) {
    const double t = i / rate_hz;
    out.push_back({t, eval_breathing(model, t).displacement_mm});
  }
  return out;
}

BreathingModel reference_model() {
  BreathingModel m;
  m.omega0 = 1.3;
  m.a0 = 1.2;
  m.a = {4.0, 1.5, 0.6};
  m.b = {2.5, -1.0, 0.3};
  return m;
}

}  // namespace

TEST_CASE("breathing eval: constant model has zero velocity") {
  BreathingModel m;
  m.a0 = 3.7;
  m.omega0 = 1.1;
  for (double t : {0.0, 0.37, 2.0, 151.0}) {
    const BreathingState s = eval_breathing(m, t);
    CHECK(s.displacement_mm == 3.7);
    CHECK(s.velocity_mm_s == 0.0);
  }
}

TEST_CASE("breathing eval: single cosine harmonic") {
  BreathingModel m;
  m.a0 = 0.5;
  m.a = {1.0, 0.0, 0.0};
  m.omega0 = 2.3;
  for (double t : {0.0, 0.2, 1.0, 4.7}) {
    const BreathingState s = eval_breathing(m, t);
    CHECK(s.displacement_mm == Approx(0.5 + std::cos(2.3 * t)).epsilon(1e-14));
    CHECK(s.velocity_mm_s == Approx(-2.3 * std::sin(2.3 * t)).epsilon(1e-14));
  }
}

TEST_CASE("breathing eval: velocity matches a central finite difference") {
  std::mt19937_64 rng(404);
  std::uniform_real_distribution<double> coef(-2.0, 2.0);
  std::uniform_real_distribution<double> freq(0.8, 6.0);
  std::uniform_real_distribution<double> time(0.0, 20.0);
  BreathingModel m;
  m.a0 = coef(rng);
  for (int n = 0; n < 3; ++n) {
    m.a[static_cast<std::size_t>(n)] = coef(rng);
    m.b[static_cast<std::size_t>(n)] = coef(rng);
  }
  m.omega0 = freq(rng);

  const double h = 1e-6;
  for (int i = 0; i < 100; ++i) {
    const double t = time(rng);
    const double fd = (eval_breathing(m, t + h).displacement_mm -
                       eval_breathing(m, t - h).displacement_mm) /
                      (2.0 * h);
    const double v = eval_breathing(m, t).velocity_mm_s;
    CHECK(std::abs(fd - v) / std::max(1.0, std::abs(v)) < 1e-6);
  }
}

TEST_CASE("breathing eval: model validation") {
  BreathingModel m;
  m.omega0 = 0.0;
  CHECK_THROWS_WITH_AS(eval_breathing(m, 0.0), Contains("omega0 > 0"), std::invalid_argument);
  m.omega0 = -1.0;
  CHECK_THROWS_AS(eval_breathing(m, 0.0), std::invalid_argument);
  m.omega0 = 1.0;
  m.a[1] = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_WITH_AS(eval_breathing(m, 0.0), Contains("non-finite"), std::invalid_argument);
}

TEST_CASE("breathing fit: constant signal is degenerate with the offset recovered") {
  std::vector<BreathingSample> samples;
  for (int i = 0; i <= 300; ++i) samples.push_back({i / 20.0, 2.5});
  const BreathingFit fit = fit_breathing(samples, FitConfig{});
  CHECK(fit.degenerate);
  CHECK_FALSE(fit.poor_fit);
  CHECK(fit.model.a0 == Approx(2.5).epsilon(1e-9));
  for (int n = 0; n < 3; ++n) {
    CHECK(std::abs(fit.model.a[static_cast<std::size_t>(n)]) < 1e-9);
    CHECK(std::abs(fit.model.b[static_cast<std::size_t>(n)]) < 1e-9);
  }
}

TEST_CASE("breathing fit: exact frequency ties resolve to the highest candidate") {
  // An identically-zero signal fits exactly at every candidate frequency, so
  // every grid point ties at zero error. The scan must keep the highest
  // frequency rather than drift to a subharmonic.
  std::vector<BreathingSample> samples;
  for (int i = 0; i <= 300; ++i) samples.push_back({i / 20.0, 0.0});
  const FitConfig cfg;
  const BreathingFit fit = fit_breathing(samples, cfg);
  CHECK(fit.degenerate);
  const double step = (cfg.omega_max - cfg.omega_min) / (cfg.grid_points - 1);
  CHECK(fit.model.omega0 > cfg.omega_max - 2.0 * step);
  CHECK(fit.model.omega0 <= cfg.omega_max + 1e-12);
}

TEST_CASE("breathing fit: noiseless three-harmonic signal is recovered") {
  const BreathingModel truth = reference_model();
  const std::vector<BreathingSample> samples = sample_model(truth, 20.0, 15.0);
  const BreathingFit fit = fit_breathing(samples, FitConfig{});

  CHECK(std::abs(fit.model.omega0 - truth.omega0) / truth.omega0 < 1e-3);
  CHECK(std::abs(fit.model.a0 - truth.a0) < 1e-6);
  for (int n = 0; n < 3; ++n) {
    CHECK(std::abs(fit.model.a[static_cast<std::size_t>(n)] -
                   truth.a[static_cast<std::size_t>(n)]) < 1e-6);
    CHECK(std::abs(fit.model.b[static_cast<std::size_t>(n)] -
                   truth.b[static_cast<std::size_t>(n)]) < 1e-6);
  }
  CHECK(fit.rms_residual_mm < 1e-9);
  CHECK_FALSE(fit.degenerate);
  CHECK_FALSE(fit.poor_fit);
}

TEST_CASE("breathing fit: tracking rates at both ends of the supported range work") {
  const BreathingModel truth = reference_model();
  for (double rate : {13.0, 28.0}) {
    const std::vector<BreathingSample> samples = sample_model(truth, rate, 15.0);
    const BreathingFit fit = fit_breathing(samples, FitConfig{});
    CAPTURE(rate);
    CHECK(std::abs(fit.model.omega0 - truth.omega0) / truth.omega0 < 1e-3);
    CHECK(fit.rms_residual_mm < 1e-9);
  }
}

TEST_CASE("breathing fit: a pure tone reports its own frequency") {
  BreathingModel tone;
  tone.omega0 = 2.0;
  tone.a = {1.5, 0.0, 0.0};
  // Restrict the search range so the tone's subharmonics fall outside it;
  // the only exact fit in range is the tone itself.
  FitConfig cfg;
  cfg.omega_min = 1.5;
  cfg.omega_max = 6.0;
  const std::vector<BreathingSample> samples = sample_model(tone, 20.0, 15.0);
  const BreathingFit fit = fit_breathing(samples, cfg);
  CHECK(std::abs(fit.model.omega0 - 2.0) / 2.0 < 1e-3);
  CHECK(std::abs(fit.model.a[0] - 1.5) < 1e-6);
  CHECK(std::abs(fit.model.b[0]) < 1e-6);
  CHECK(fit.rms_residual_mm < 1e-9);
}

TEST_CASE("breathing fit: noisy samples keep the frequency within 1%") {
  const BreathingModel truth = reference_model();
  const std::vector<BreathingSample> clean = sample_model(truth, 20.0, 15.0);
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> noise(0.0, 0.05);
    std::vector<BreathingSample> noisy = clean;
    for (BreathingSample& s : noisy) s.z_mm += noise(rng);

    const BreathingFit fit = fit_breathing(noisy, FitConfig{});
    CAPTURE(seed);
    CHECK(std::abs(fit.model.omega0 - truth.omega0) / truth.omega0 < 0.01);
    for (int n = 0; n < 3; ++n) {
      const double amp_true = std::hypot(truth.a[static_cast<std::size_t>(n)],
                                         truth.b[static_cast<std::size_t>(n)]);
      const double amp_fit = std::hypot(fit.model.a[static_cast<std::size_t>(n)],
                                        fit.model.b[static_cast<std::size_t>(n)]);
      CHECK(std::abs(amp_fit - amp_true) / amp_true < 0.05);
    }
    CHECK_FALSE(fit.poor_fit);
  }
}

TEST_CASE("breathing fit: a tone outside the search range is flagged as a poor fit") {
  // 40 rad/s is beyond the range, and so are the frequencies whose second or
  // third harmonic could land on it, so no candidate explains the signal.
  BreathingModel tone;
  tone.omega0 = 40.0;
  tone.a = {3.0, 0.0, 0.0};
  const std::vector<BreathingSample> samples = sample_model(tone, 20.0, 15.0);
  const BreathingFit fit = fit_breathing(samples, FitConfig{});
  CHECK(fit.poor_fit);
}

TEST_CASE("breathing fit: deterministic on identical input") {
  const std::vector<BreathingSample> samples = sample_model(reference_model(), 20.0, 15.0);
  const BreathingFit a = fit_breathing(samples, FitConfig{});
  const BreathingFit b = fit_breathing(samples, FitConfig{});
  CHECK(a.model.omega0 == b.model.omega0);
  CHECK(a.model.a0 == b.model.a0);
  for (int n = 0; n < 3; ++n) {
    CHECK(a.model.a[static_cast<std::size_t>(n)] == b.model.a[static_cast<std::size_t>(n)]);
    CHECK(a.model.b[static_cast<std::size_t>(n)] == b.model.b[static_cast<std::size_t>(n)]);
  }
  CHECK(a.rms_residual_mm == b.rms_residual_mm);
}

TEST_CASE("breathing fit: input validation") {
  CHECK_THROWS_WITH_AS(fit_breathing({}, FitConfig{}), Contains("empty"), std::invalid_argument);

  std::vector<BreathingSample> few;
  for (int i = 0; i < 10; ++i) few.push_back({i * 0.1, 1.0});
  CHECK_THROWS_WITH_AS(fit_breathing(few, FitConfig{}), Contains("at least 15"),
                       std::invalid_argument);

  std::vector<BreathingSample> narrow;
  for (int i = 0; i < 20; ++i) narrow.push_back({i * 0.01, 1.0});
  CHECK_THROWS_WITH_AS(fit_breathing(narrow, FitConfig{}), Contains("spans less than one period"),
                       std::invalid_argument);

  std::vector<BreathingSample> bad = sample_model(reference_model(), 20.0, 15.0);
  bad[5].z_mm = std::numeric_limits<double>::infinity();
  CHECK_THROWS_WITH_AS(fit_breathing(bad, FitConfig{}), Contains("non-finite"),
                       std::invalid_argument);

  FitConfig cfg;
  cfg.horizon_s = 0.0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = FitConfig{};
  cfg.omega_min = 0.0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = FitConfig{};
  cfg.omega_max = cfg.omega_min * 0.5;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = FitConfig{};
  cfg.grid_points = 1;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = FitConfig{};
  cfg.poor_fit_fraction = 0.0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  CHECK_NOTHROW(FitConfig{}.validate());
}

TEST_CASE("breathing: causal window keeps exactly [t - horizon, t]") {
  std::vector<BreathingSample> samples;
  for (int i = 0; i <= 20; ++i) samples.push_back({i * 0.5, static_cast<double>(i)});

  const std::vector<BreathingSample> w = causal_window(samples, 7.25, 3.0);
  REQUIRE(w.size() == 6);  // 4.5, 5.0, ..., 7.0
  CHECK(w.front().t_s == 4.5);
  CHECK(w.back().t_s == 7.0);

  // Both window edges are inclusive.
  const std::vector<BreathingSample> edges = causal_window(samples, 7.0, 3.0);
  REQUIRE(edges.size() == 7);
  CHECK(edges.front().t_s == 4.0);
  CHECK(edges.back().t_s == 7.0);

  // Nothing after t_now leaks in.
  for (const BreathingSample& s : causal_window(samples, 5.0, 100.0)) CHECK(s.t_s <= 5.0);
}
