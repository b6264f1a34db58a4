#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "leap/dataset.hpp"

namespace leap::evaluate {

inline constexpr const char* kOverall = "OVERALL";

struct MetricRow {
  std::string perturbation_id;  // or kOverall
  std::optional<double> spearman;
  std::optional<double> pearson;
  double mse = 0.0;
  std::size_t n_pairs = 0;

  bool operator==(const MetricRow&) const = default;
};

struct ScoreResult {
  std::vector<MetricRow> rows;  // perturbations in id order, then OVERALL
  // Perturbations whose correlations were undefined (fewer than 2 pairs or
  // constant truth/prediction) and so left out of the per-perturbation means.
  std::size_t excluded = 0;

  const MetricRow& overall() const { return rows.back(); }
  double mean_spearman() const;
  double mean_pearson() const;
  double mean_mse() const;
};

/// Scores every truth record against its prediction; a missing prediction is an error.
ScoreResult score(const ResponseTable& truth, const PredictionTable& predictions);

// --- split plans ---------------------------------------------------------------

enum class Strategy { repeated_holdout, leave_one_tissue_out, transfer };

const char* to_string(Strategy s);

struct SplitRepeat {
  std::size_t train_set = 0;  // index into SplitPlan::train_sets
  std::vector<std::string> test;
  std::string group;  // held-out tissue, or "all"
  std::string label;  // repeat / bootstrap index
};

struct SplitPlan {
  Strategy strategy = Strategy::repeated_holdout;
  std::vector<std::vector<std::string>> train_sets;
  std::vector<SplitRepeat> repeats;
  std::uint64_t seed = 0;

  const std::vector<std::string>& train_of(const SplitRepeat& r) const { return train_sets.at(r.train_set); }
  // Throws if any repeat has an empty test set or overlapping train/test.
  void validate() const;
};

/// Repeated random holdout by sample: each repeat tests round(fraction * n) samples.
SplitPlan plan_repeated_holdout(const std::vector<std::string>& samples, double fraction = 0.2,
                                std::size_t repeats = 10, std::uint64_t seed = 0);

/// For every tissue with at least test_subset_size + 5 samples: train on all
/// other tissues; each bootstrap test set drops test_subset_size random
/// samples of the target tissue.
SplitPlan plan_leave_one_tissue_out(const std::vector<std::string>& samples, const std::vector<std::string>& tissues,
                                    std::size_t test_subset_size = 10, std::size_t n_bootstrap = 1000,
                                    std::uint64_t seed = 0);

/// Fixed train domain; each repeat tests on the test domain minus
/// removed_per_repeat random samples.
SplitPlan plan_transfer(const std::vector<std::string>& train_domain, const std::vector<std::string>& test_domain,
                        std::size_t removed_per_repeat = 10, std::size_t repeats = 10, std::uint64_t seed = 0);

// --- reports -------------------------------------------------------------------

struct RepeatScore {
  std::string group;
  std::string label;
  ScoreResult result;
};

struct Stat {
  double mean = 0.0;
  double sd = 0.0;  // n - 1 denominator
  double median = 0.0;
  double ci_low = 0.0;   // 2.5th percentile
  double ci_high = 0.0;  // 97.5th percentile
  std::size_t n = 0;
};

Stat summarize(const std::vector<double>& values);

struct EvaluationReport {
  std::string task;
  // model label -> repeats, in insertion order of add()
  std::vector<std::pair<std::string, std::vector<RepeatScore>>> models;

  void add(const std::string& model, RepeatScore score);
  const std::vector<RepeatScore>& model(const std::string& name) const;

  /// Mean per-perturbation Spearman averaged over all repeats of a model.
  double mean_spearman(const std::string& model) const;

  /// One row per (model, group, repeat, perturbation-or-OVERALL).
  std::string to_csv() const;
  /// Aggregate block: per model and group, mean/sd/median/95% interval of the
  /// per-perturbation means and of the overall metrics across repeats.
  std::string summary_json() const;
};

}  // namespace leap::evaluate
