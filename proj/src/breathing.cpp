#include "stereosil/breathing.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace stereosil {

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;

bool all_finite(const BreathingModel& m) {
  if (!std::isfinite(m.a0) || !std::isfinite(m.omega0)) return false;
  for (int n = 0; n < 3; ++n) {
    if (!std::isfinite(m.a[n]) || !std::isfinite(m.b[n])) return false;
  }
  return true;
}

}  // namespace

void BreathingModel::validate() const {
  if (!all_finite(*this)) throw std::invalid_argument("breathing model has non-finite fields");
  if (!(omega0 > 0.0)) throw std::invalid_argument("breathing model needs omega0 > 0");
}

BreathingState eval_breathing(const BreathingModel& model, double t_s) {
  model.validate();
  BreathingState out;
  out.displacement_mm = model.a0;
  for (int n = 1; n <= 3; ++n) {
    const double w = n * model.omega0;
    const double c = std::cos(w * t_s);
    const double s = std::sin(w * t_s);
    out.displacement_mm += model.a[n - 1] * c + model.b[n - 1] * s;
    out.velocity_mm_s += w * (model.b[n - 1] * c - model.a[n - 1] * s);
  }
  return out;
}

void FitConfig::validate() const {
  if (!(horizon_s > 0.0)) throw std::invalid_argument("fit config needs horizon > 0");
  if (!(omega_min > 0.0) || !(omega_max > omega_min)) {
    throw std::invalid_argument("fit config needs 0 < omega_min < omega_max");
  }
  if (grid_points < 2) throw std::invalid_argument("fit config needs at least 2 grid points");
  if (!(poor_fit_fraction > 0.0)) throw std::invalid_argument("fit config needs poor_fit_fraction > 0");
}

namespace {

struct FrequencyFit {
  double sse = 0.0;
  Eigen::Matrix<double, 7, 1> coef = Eigen::Matrix<double, 7, 1>::Zero();
};

// Exact linear least squares for the coefficients at a fixed frequency.
// Rank-revealing QR keeps the coefficients bounded when a short window makes
// the trigonometric columns nearly collinear.
FrequencyFit fit_at_frequency(const Eigen::VectorXd& t, const Eigen::VectorXd& z, double omega) {
  const Eigen::Index n = t.size();
  Eigen::MatrixXd design(n, 7);
  design.col(0).setOnes();
  for (int h = 1; h <= 3; ++h) {
    design.col(2 * h - 1) = (h * omega * t.array()).cos();
    design.col(2 * h) = (h * omega * t.array()).sin();
  }
  FrequencyFit out;
  out.coef = design.colPivHouseholderQr().solve(z);
  out.sse = (design * out.coef - z).squaredNorm();
  return out;
}

}  // namespace

BreathingFit fit_breathing(const std::vector<BreathingSample>& samples, const FitConfig& cfg) {
  cfg.validate();
  if (samples.empty()) throw std::invalid_argument("fit_breathing: empty sample window");
  const int n = static_cast<int>(samples.size());
  if (n < 15) throw std::invalid_argument("fit_breathing: need at least 15 samples");

  Eigen::VectorXd t(n), z(n);
  for (int i = 0; i < n; ++i) {
    if (!std::isfinite(samples[i].t_s) || !std::isfinite(samples[i].z_mm)) {
      throw std::invalid_argument("fit_breathing: non-finite sample");
    }
    t[i] = samples[i].t_s;
    z[i] = samples[i].z_mm;
  }
  const double span = t.maxCoeff() - t.minCoeff();
  if (span < kTwoPi / cfg.omega_max) {
    throw std::invalid_argument(
        "fit_breathing: window spans less than one period of every frequency in the search range");
  }

  // Coarse grid, scanned from the highest frequency down so exact ties keep
  // the fundamental instead of a subharmonic.
  const int grid = cfg.grid_points;
  const double step = (cfg.omega_max - cfg.omega_min) / (grid - 1);
  int best_index = grid - 1;
  double best_sse = std::numeric_limits<double>::infinity();
  for (int i = grid - 1; i >= 0; --i) {
    const double omega = cfg.omega_min + i * step;
    const double sse = fit_at_frequency(t, z, omega).sse;
    if (sse < best_sse) {
      best_sse = sse;
      best_index = i;
    }
  }

  // Golden-section refinement inside the bracketing grid cells.
  const double inv_phi = 0.61803398874989484820;
  double lo = cfg.omega_min + std::max(0, best_index - 1) * step;
  double hi = cfg.omega_min + std::min(grid - 1, best_index + 1) * step;
  double x1 = hi - inv_phi * (hi - lo);
  double x2 = lo + inv_phi * (hi - lo);
  double f1 = fit_at_frequency(t, z, x1).sse;
  double f2 = fit_at_frequency(t, z, x2).sse;
  for (int iter = 0; iter < 80; ++iter) {
    if (f1 < f2) {
      hi = x2;
      x2 = x1;
      f2 = f1;
      x1 = hi - inv_phi * (hi - lo);
      f1 = fit_at_frequency(t, z, x1).sse;
    } else {
      lo = x1;
      x1 = x2;
      f1 = f2;
      x2 = lo + inv_phi * (hi - lo);
      f2 = fit_at_frequency(t, z, x2).sse;
    }
  }
  double omega_star = (f1 < f2) ? x1 : x2;
  FrequencyFit refined = fit_at_frequency(t, z, omega_star);
  if (best_sse < refined.sse) {
    omega_star = cfg.omega_min + best_index * step;
    refined = fit_at_frequency(t, z, omega_star);
  }

  BreathingFit out;
  out.model.omega0 = omega_star;
  out.model.a0 = refined.coef[0];
  double max_harmonic = 0.0;
  for (int h = 1; h <= 3; ++h) {
    out.model.a[h - 1] = refined.coef[2 * h - 1];
    out.model.b[h - 1] = refined.coef[2 * h];
    max_harmonic = std::max({max_harmonic, std::abs(out.model.a[h - 1]), std::abs(out.model.b[h - 1])});
  }
  out.rms_residual_mm = std::sqrt(refined.sse / n);
  out.degenerate = max_harmonic < 1e-9;

  const double mean = z.mean();
  const double centred_rms = std::sqrt((z.array() - mean).square().sum() / n);
  out.poor_fit = centred_rms > 0.0 && out.rms_residual_mm > 1e-12 &&
                 out.rms_residual_mm > cfg.poor_fit_fraction * centred_rms;
  return out;
}

std::vector<BreathingSample> causal_window(const std::vector<BreathingSample>& samples,
                                           double t_now, double horizon_s) {
  std::vector<BreathingSample> out;
  for (const BreathingSample& s : samples) {
    if (s.t_s >= t_now - horizon_s && s.t_s <= t_now) out.push_back(s);
  }
  return out;
}

}  // namespace stereosil
