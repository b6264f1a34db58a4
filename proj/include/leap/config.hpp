#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "leap/damae.hpp"
#include "leap/dataset.hpp"
#include "leap/regress.hpp"

namespace leap {

struct PathsConfig {
  std::filesystem::path expression;
  std::filesystem::path metadata;
  std::filesystem::path responses;
  std::filesystem::path output_dir = "leap_out";
};

struct CurationConfig {
  // Study tags from highest to lowest priority; empty means the table must
  // hold a single study.
  std::vector<std::string> study_priority;
  std::size_t min_samples = 1;
  std::optional<double> min_label_sd;
  std::vector<std::string> exclude_samples;
};

struct PreprocessConfig {
  std::size_t k_per_dataset = 5000;
  // "full": statistics over the whole corpus; "train": over each training split.
  std::string fit_population = "full";
};

struct RepresentationConfig {
  damae::DamaeConfig damae;
  std::size_t count = 5;
  // Explicit seeds; derived from the master seed when empty.
  std::vector<std::uint64_t> seeds;
  // "all": every sample in the corpus (transductive); "train": training split only.
  std::string corpus = "all";
};

struct TaskConfig {
  std::string challenge = "repeated_holdout";  // | leave_one_tissue_out | transfer
  double test_fraction = 0.2;
  std::size_t repeats = 10;
  std::size_t test_subset_size = 10;
  std::size_t n_bootstrap = 1000;
  std::size_t removed_per_repeat = 10;
  std::string train_domain_tag;
  std::string test_domain_tag;
  bool baseline_knn = false;
  std::size_t knn_k = 5;
  // "first" | "all" | "none": which per-split ensemble bundles `run` writes.
  std::string save_bundles = "first";
};

struct PredictConfig {
  std::filesystem::path bundle;
  std::filesystem::path expression;
  std::vector<std::string> perturbations;
  std::filesystem::path output;
  std::vector<std::size_t> representations_subset;
};

struct EvaluateConfig {
  std::filesystem::path truth;
  std::filesystem::path predictions;
};

struct RunConfig {
  PathsConfig paths;
  SyntheticSpec synthetic;
  CurationConfig curation;
  PreprocessConfig preprocess;
  RepresentationConfig representation;
  regress::TuneConfig tune;
  TaskConfig task;
  PredictConfig predict;
  EvaluateConfig evaluate;
  std::vector<std::string> ablation_steps = {"single_model", "fold_ensemble", "full_leap"};
  std::uint64_t master_seed = 0;
  int workers = 1;

  // Seeds actually used, derived from master_seed unless given explicitly.
  std::vector<std::uint64_t> representation_seeds() const;
  std::uint64_t tune_seed() const;
  std::uint64_t split_seed() const;

  void validate() const;
};

/// Parses a JSON config; missing keys take the defaults above. Relative
/// paths resolve against `base_dir`.
RunConfig parse_config(const std::string& json_text, const std::filesystem::path& base_dir = {});
RunConfig load_config(const std::filesystem::path& path);
/// Full JSON rendering including every default.
std::string to_json(const RunConfig& cfg);

}  // namespace leap
