#pragma once

// Perturbation-specific regressors on latent embeddings: LASSO / elastic net
// by cyclic coordinate descent, a K-nearest-neighbour baseline, and the
// cross-validated tuner that picks the regularization strength by mean
// per-fold Spearman correlation.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "leap/matrix.hpp"
#include "leap/serialize.hpp"

namespace leap::regress {

struct LinearModel {
  std::vector<double> coefficients;
  double intercept = 0.0;
  double alpha = 0.0;
  std::int64_t fold_id = -1;
  std::int64_t representation = -1;
  bool converged = true;
  std::size_t passes = 0;

  double predict_row(std::span<const double> x) const;
  std::vector<double> predict(const Matrix& x) const;

  bool operator==(const LinearModel&) const = default;
};

double soft_threshold(double x, double lambda);

/// Geometric grid from alpha_max down to eps * alpha_max, where alpha_max is
/// the smallest alpha that zeroes every coefficient. nullopt when y is
/// constant (the caller falls back to a mean predictor).
std::optional<std::vector<double>> alpha_path(const Matrix& x, std::span<const double> y, std::size_t n_alphas,
                                              double eps, double l1_ratio = 1.0);

struct LassoOptions {
  double tolerance = 1e-4;
  std::size_t max_passes = 1000;
  // 1 is the pure L1 penalty; below 1 mixes in a ridge term (elastic net).
  double l1_ratio = 1.0;
  bool fit_intercept = true;
  // Optional objective value after every pass (for diagnostics and tests).
  std::vector<double>* objective_trace = nullptr;
};

/// Minimizes (1/2n)||y - Xw - b||^2 + alpha*l1*||w||_1 + alpha*(1-l1)/2*||w||^2.
///
/// Converged once a pass moves no coordinate by more than `tolerance` and the
/// KKT residual is within `tolerance`; otherwise stops at max_passes with
/// converged=false.
LinearModel fit_lasso(const Matrix& x, std::span<const double> y, double alpha, const LassoOptions& options = {},
                      const std::vector<double>* warm_start = nullptr);

/// Largest KKT violation of `model` for the objective above.
double kkt_violation(const Matrix& x, std::span<const double> y, const LinearModel& model, double l1_ratio = 1.0,
                     bool fit_intercept = true);

double lasso_objective(const Matrix& x, std::span<const double> y, const LinearModel& model, double l1_ratio = 1.0);

// --- K nearest neighbours ---------------------------------------------------

struct KnnModel {
  Matrix x;
  std::vector<double> y;
  std::size_t k = 5;
};

KnnModel fit_knn(Matrix x, std::vector<double> y, std::size_t k = 5);
/// Mean response of the k nearest training rows (Euclidean; ties by row index).
std::vector<double> predict_knn(const KnnModel& model, const Matrix& queries);

// --- cross-validated tuning -------------------------------------------------

enum class Grouping : std::uint32_t { by_sample = 0, grouped_by_tissue = 1, leave_one_tissue_out = 2 };

const char* to_string(Grouping g);
Grouping grouping_from_string(const std::string& s);

struct TuneConfig {
  std::size_t n_folds = 5;
  Grouping grouping = Grouping::by_sample;
  std::size_t n_alphas = 10;
  double alpha_eps = 1e-3;
  double l1_ratio = 1.0;
  double cd_tolerance = 1e-4;
  std::size_t cd_max_passes = 1000;
  // Also fit one model on all labeled rows at the selected alpha.
  bool refit_full = false;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Fold index for every sample.
///
/// by_sample: samples ordered by a seed-keyed hash of their id, dealt round
/// robin, so the assignment does not depend on row order.
/// grouped_by_tissue: whole tissues packed into min(n_folds, #tissues) folds,
/// largest tissue first into the currently smallest fold.
/// leave_one_tissue_out: one fold per tissue, in lexicographic tissue order.
std::vector<std::size_t> assign_folds(const std::vector<std::string>& sample_ids,
                                      const std::vector<std::string>* groups, const TuneConfig& cfg,
                                      std::uint64_t seed);

struct PerturbationFit {
  std::string perturbation_id;
  double best_alpha = 0.0;
  std::vector<LinearModel> fold_models;
  double cv_score = 0.0;
  bool degenerate = false;
  std::vector<double> alphas;
  std::vector<double> alpha_scores;  // mean fold Spearman per alpha
  std::optional<LinearModel> full_model;
  std::vector<std::string> warnings;

  bool operator==(const PerturbationFit&) const = default;
};

/// Tunes alpha by K-fold CV on (x, y) and keeps the K fold models at the
/// selected alpha. `groups` holds one tissue label per row and is required
/// for the tissue groupings.
PerturbationFit tune_and_fit(const Matrix& x, std::span<const double> y, const std::vector<std::string>& sample_ids,
                             const std::vector<std::string>* groups, const TuneConfig& cfg, std::uint64_t seed);

void write_fit(BinaryWriter& w, const PerturbationFit& fit);
PerturbationFit read_fit(BinaryReader& r);

}  // namespace leap::regress
