/// @file  solver.hpp
/// @brief Alternating projected-subgradient training of the joint model,
///        the independent / pooled baselines, and 5-fold cross-validation
///        of the regularization product.

#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "mvml/data.hpp"
#include "mvml/model.hpp"

namespace mvml {

enum class TrainMode { joint, independent, pooled };

/// How the single-metric baselines parametrize each view: a factored
/// H x D transform (an embedding) or a full H x H PSD metric over the
/// input space. `auto_default` resolves per mode: independent -> factored
/// (desk-scale runtime), pooled -> full_psd (the single shared metric of
/// the base formulation).
enum class BaselineParam { auto_default, factored, full_psd };

BaselineParam resolve_baseline_param(BaselineParam param, TrainMode mode);

std::string to_string(TrainMode mode);
std::string to_string(BaselineParam param);
TrainMode train_mode_from_string(const std::string& s);
BaselineParam baseline_param_from_string(const std::string& s);

struct SolverConfig {
  Index embed_dim = 10;   // D
  double beta = 1.0;
  double gamma = 1.0;
  double eta0 = 1e-2;     // initial step size; eta = eta0 / sqrt(m)
  int m_max = 20;         // inner updates per phase
  int outer_max = 500;
  double rel_tol = 1e-5;  // stop when relative objective decrease drops below
  TrainMode mode = TrainMode::joint;
  BaselineParam baseline_param = BaselineParam::auto_default;
  std::uint64_t seed = 0;
  bool deterministic = false;
  int threads = 1;
  double divergence_factor = 1e3;
  /// Restart the step counter m at 1 in every phase instead of letting it
  /// accumulate across outer iterations (a coarser, non-diminishing schedule).
  bool step_reset_per_phase = false;

  // Diagnostics: keep L at its initial value / start from a given L.
  bool freeze_transform = false;
  std::optional<Eigen::MatrixXd> init_transform;

  void validate() const;
};

/// Immutable training result. Baselines are stored in the same
/// (transform, metrics) shape as the joint model:
///   joint              L (H x D)        M_t (D x D)
///   independent        I_H              L_t L_t^T or the learned M_t (H x H)
///   pooled factored    pooled L (H x D) I_D for every view
///   pooled full        I_H              the shared metric for every view
struct TrainedModel {
  TrainMode mode = TrainMode::joint;
  BaselineParam baseline_param = BaselineParam::auto_default;  // stored resolved
  GlobalTransform transform;
  std::vector<LocalMetric> metrics;       // length T
  std::vector<double> objective_trace;    // [initial, after iter 1, ...]
  SolverConfig config;
  /// True when the stored transform is the identity (baselines); enables
  /// the kernel shortcut in distance().
  bool identity_transform = false;

  Index num_views() const { return static_cast<Index>(metrics.size()); }
  /// Free parameters of the parametrization actually trained:
  /// joint H*D + T*D^2, independent factored T*H*D, pooled factored H*D,
  /// full-PSD baselines count H*H per learned metric.
  std::size_t parameter_count() const;

  /// Squared distance between objects i, j under view t's metric.
  double distance(Index view, Index i, Index j, const Eigen::MatrixXd* X) const;
};

/// Eq.-style full objective: summed hinge losses over all views plus
/// gamma * sum_t tr(M_t) + beta * ||L||_F^2.
double objective(const TripletDataset& data, const GlobalTransform& L,
                 const std::vector<LocalMetric>& Ms, double beta, double gamma);

/// Trains per the configured mode. Progress lines
/// `iter objective rel_change elapsed_ms` go to *progress when given.
TrainedModel train(const TripletDataset& data, const SolverConfig& cfg,
                   std::ostream* progress = nullptr);

struct CrossValidationResult {
  double best_product = 0.0;                 // the chosen beta*gamma
  std::vector<double> grid;                  // candidates, as given
  std::vector<double> mean_validation_error; // aligned with grid
};

/// Default candidate grid {1e-5, ..., 1e5}.
std::vector<double> default_cv_grid();

/// 5-fold CV over the regularization product: beta is fixed to 1 and gamma
/// takes each candidate; folds are seeded uniform splits per view; the
/// winner is the smallest mean validation triplet error, ties resolved
/// toward the smaller product.
CrossValidationResult cross_validate(const TripletDataset& data, const SolverConfig& base,
                                     const std::vector<double>& grid, int folds = 5);

}  // namespace mvml
