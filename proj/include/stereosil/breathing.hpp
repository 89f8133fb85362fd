#pragma once

#include <array>
#include <string>
#include <vector>

namespace stereosil {

/// Truncated 3-harmonic Fourier series of anatomy displacement along the
/// anterior-posterior axis: z(t) = a0 + sum_n a[n] cos(n w0 t) + b[n] sin(n w0 t).
struct BreathingModel {
  double a0 = 0.0;                   // offset, mm
  std::array<double, 3> a{{0, 0, 0}};  // cosine coefficients, mm (n = 1..3)
  std::array<double, 3> b{{0, 0, 0}};  // sine coefficients, mm (n = 1..3)
  double omega0 = 1.0;               // fundamental frequency, rad/s

  void validate() const;  // omega0 > 0 and every field finite
};

struct BreathingState {
  double displacement_mm = 0.0;
  double velocity_mm_s = 0.0;  // analytic derivative of the series
};

/// Exact series evaluation with the analytic time derivative.
BreathingState eval_breathing(const BreathingModel& model, double t_s);

struct BreathingSample {
  double t_s = 0.0;
  double z_mm = 0.0;
};

struct FitConfig {
  double horizon_s = 15.0;      // sliding-window length used by callers
  double omega_min = 0.62831853071795864769;   // 0.1 Hz, rad/s
  double omega_max = 12.566370614359172954;    // 2.0 Hz, rad/s
  int grid_points = 200;        // coarse frequency grid before local refinement
  // The fit is flagged poor when the residual RMS exceeds this fraction of
  // the centred-signal RMS, i.e. no frequency in the range explains the data.
  double poor_fit_fraction = 0.5;

  void validate() const;
};

struct BreathingFit {
  BreathingModel model;
  double rms_residual_mm = 0.0;
  // All harmonic coefficients below 1e-9: the signal carries no periodic
  // component, so omega0 is arbitrary.
  bool degenerate = false;
  // Residual above the configured fraction of the signal spread: the search
  // range excludes every plausible frequency.
  bool poor_fit = false;
};

/// Least-squares Fourier fit. For each candidate frequency the coefficient
/// subproblem is solved exactly (linear least squares); the frequency itself
/// is picked by grid search over [omega_min, omega_max] followed by
/// golden-section refinement around the best grid cell. Exact frequency ties
/// resolve to the highest candidate so a pure tone reports its own frequency
/// rather than a subharmonic.
///
/// Throws std::invalid_argument on an empty window, fewer than 15 samples, or
/// a window spanning less than one period of every frequency in the range.
BreathingFit fit_breathing(const std::vector<BreathingSample>& samples, const FitConfig& cfg);

/// Samples with t in [t_now - horizon, t_now]; the causal sliding window.
std::vector<BreathingSample> causal_window(const std::vector<BreathingSample>& samples,
                                           double t_now, double horizon_s);

}  // namespace stereosil
