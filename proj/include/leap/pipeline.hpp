#pragma once

// Stage orchestration behind the command-line subcommands. Every command
// takes a RunConfig, writes its artifacts under paths.output_dir and records
// a manifest.json with the seeds, config hash and per-stage timings.

#include <chrono>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "leap/config.hpp"
#include "leap/ensemble.hpp"
#include "leap/evaluate.hpp"

namespace leap::pipeline {

inline constexpr const char* kVersion = "0.3.0";

struct StageTiming {
  std::string name;
  double seconds = 0.0;
};

class Context {
 public:
  explicit Context(RunConfig config, std::ostream* log = nullptr);

  const RunConfig& config() const { return config_; }
  void log(const std::string& line);
  void warn(const std::string& line);
  void cache_hit(const std::string& what);

  /// Runs `f` as a named stage: logs it, times it and prefixes any error with the stage name.
  template <typename F>
  decltype(auto) stage(const std::string& name, F&& f);

  const std::vector<std::string>& warnings() const { return warnings_; }
  const std::vector<std::string>& cache_hits() const { return cache_hits_; }
  const std::vector<StageTiming>& timings() const { return timings_; }

  /// Hash of the config with the worker count blanked out.
  std::string config_hash() const;
  void write_manifest(const std::string& command, const std::string& status,
                      const std::vector<std::string>& outputs) const;

 private:
  [[noreturn]] void rethrow_in_stage(const std::string& name);
  RunConfig config_;
  std::ostream* log_;
  std::vector<std::string> warnings_;
  std::vector<std::string> cache_hits_;
  std::vector<StageTiming> timings_;
};

template <typename F>
decltype(auto) Context::stage(const std::string& name, F&& f) {
  log("stage " + name);
  auto start = std::chrono::steady_clock::now();
  auto finish = [&] {
    timings_.push_back({name, std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count()});
  };
  try {
    if constexpr (std::is_void_v<decltype(f())>) {
      f();
      finish();
    } else {
      decltype(auto) out = f();
      finish();
      return out;
    }
  } catch (...) {
    rethrow_in_stage(name);
  }
}

/// Curated, log-transformed corpus with the selected gene panel.
struct Corpus {
  ExpressionMatrix log_expression;  // all samples, all genes, annotated
  ResponseTable responses;          // curated
  std::vector<std::string> genes;   // selected panel
  std::vector<std::string> labeled_samples;  // in expression order
};

Corpus load_corpus(Context& ctx);

/// DAMAE models for every configured seed on `standardized`, served from the
/// on-disk cache when an identical training job already ran.
std::vector<damae::DamaeModel> representations(Context& ctx, const ExpressionMatrix& standardized,
                                               const PreprocessModel& preprocess);

evaluate::SplitPlan make_plan(const RunConfig& cfg, const Corpus& corpus);

struct ExperimentResult {
  evaluate::EvaluationReport report;
  std::vector<std::string> bundles;  // files written
};

/// Scores every step on the same splits. Known steps: full_leap,
/// fold_ensemble, single_model, one_representation_25, knn_baseline,
/// fit_population_{full,train}, damae_corpus_{all,train},
/// grouping_{by_sample,grouped_by_tissue,leave_one_tissue_out}.
ExperimentResult run_experiment(Context& ctx, const Corpus& corpus, const std::vector<std::string>& steps,
                                const std::string& task_name, bool save_bundles);

// Subcommands. Each returns the list of files it wrote.
std::vector<std::string> cmd_synth(Context& ctx);
std::vector<std::string> cmd_preprocess(Context& ctx);
std::vector<std::string> cmd_train_damae(Context& ctx);
std::vector<std::string> cmd_fit(Context& ctx);
std::vector<std::string> cmd_predict(Context& ctx);
std::vector<std::string> cmd_evaluate(Context& ctx);
std::vector<std::string> cmd_run(Context& ctx);
std::vector<std::string> cmd_ablate(Context& ctx);

/// Runs a subcommand, writing manifest.json on success and a FAILED marker
/// plus a failed manifest on error (the error is rethrown).
std::vector<std::string> execute(Context& ctx, const std::string& command);

}  // namespace leap::pipeline
