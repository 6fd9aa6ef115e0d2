/// @file  alternating.hpp
/// @brief Internal alternating projected-subgradient engine shared by the
///        triplet solver and the supervised trainer. Not installed.

#pragma once

#include <chrono>
#include <cmath>
#include <functional>
#include <ostream>
#include <vector>

#include "mvml/model.hpp"
#include "mvml/parallel.hpp"
#include "mvml/rng.hpp"
#include "mvml/solver.hpp"

namespace mvml::detail {

/// I.i.d. Gaussian matrix with entries scaled by 1/sqrt(cols): the shared
/// transform initialization.
inline Eigen::MatrixXd gaussian_init(Index rows, Index cols, std::uint64_t seed) {
  Rng rng(seed);
  const double scale = 1.0 / std::sqrt(static_cast<double>(cols));
  Eigen::MatrixXd m(rows, cols);
  for (Index r = 0; r < rows; ++r) {
    for (Index c = 0; c < cols; ++c) m(r, c) = scale * rng.gaussian();
  }
  return m;
}

struct AltCallbacks {
  std::function<double()> objective;
  // Full subgradient in the transform, ridge included.
  std::function<Eigen::MatrixXd()> grad_transform;
  // Full subgradient in metric t, trace penalty included.
  std::function<Eigen::MatrixXd(std::size_t)> grad_metric;
};

/// Outer loop of Algorithm-style alternation. Each phase takes cfg.m_max
/// steps with step size eta0 / sqrt(m); the counter m is per variable and
/// keeps accumulating across outer iterations, so the schedule is a
/// genuinely diminishing subgradient step. Every metric step is followed
/// by PSD projection. Metrics are updated in parallel across views (their
/// subproblems are disjoint, so the result does not depend on scheduling).
/// Stops when the relative objective decrease falls below cfg.rel_tol or
/// outer_max is hit. Returns the objective trace [initial, after iter 1, ...].
inline std::vector<double> run_alternating(Eigen::MatrixXd& L,
                                           std::vector<Eigen::MatrixXd>& Ms,
                                           const AltCallbacks& cb, const SolverConfig& cfg,
                                           bool update_transform, bool update_metrics,
                                           std::ostream* progress) {
  const auto start = std::chrono::steady_clock::now();
  std::vector<double> trace;
  trace.push_back(cb.objective());
  if (!std::isfinite(trace.front())) throw DivergedError("initial objective not finite", 0);
  const double limit = cfg.divergence_factor * trace.front();
  double prev = trace.front();
  for (int outer = 1; outer <= cfg.outer_max; ++outer) {
    const double base =
        cfg.step_reset_per_phase ? 0.0 : static_cast<double>(outer - 1) * cfg.m_max;
    // A blow-up can surface mid-phase as a non-finite projection or distance
    // before the objective guard sees it; report it as divergence.
    try {
      if (update_transform) {
        for (int m = 1; m <= cfg.m_max; ++m) {
          L -= (cfg.eta0 / std::sqrt(base + m)) * cb.grad_transform();
        }
      }
      if (update_metrics) {
        parallel_for(0, static_cast<std::ptrdiff_t>(Ms.size()), cfg.threads,
                     [&](std::ptrdiff_t t) {
                       for (int m = 1; m <= cfg.m_max; ++m) {
                         const double eta = cfg.eta0 / std::sqrt(base + m);
                         Ms[t] = project_psd(Ms[t] - eta * cb.grad_metric(t));
                       }
                     });
      }
    } catch (const DivergedError&) {
      throw;
    } catch (const NumericError& e) {
      throw DivergedError(
          "objective diverged at iteration " + std::to_string(outer) + " (" + e.what() + ")",
          outer);
    }
    const double cur = cb.objective();
    trace.push_back(cur);
    const double rel = (prev - cur) / std::max(std::abs(prev), 1e-30);
    if (progress) {
      const auto elapsed = std::chrono::duration_cast<std::chrono::milliseconds>(
                               std::chrono::steady_clock::now() - start)
                               .count();
      *progress << outer << ' ' << cur << ' ' << rel << ' ' << elapsed << '\n';
    }
    if (!std::isfinite(cur) || cur > limit) {
      throw DivergedError("objective diverged at iteration " + std::to_string(outer), outer);
    }
    if (rel < cfg.rel_tol) break;
    prev = cur;
  }
  return trace;
}

}  // namespace mvml::detail
