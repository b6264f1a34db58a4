// leap: command-line front end for the pipeline stages.

#include <cstdlib>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "leap/config.hpp"
#include "leap/error.hpp"
#include "leap/pipeline.hpp"

namespace {

enum Exit { ok = 0, failure = 1, validation = 2, numerical = 3, io_error = 4 };

int workers_from_env() {
  if (const char* env = std::getenv("LEAP_WORKERS")) {
    try {
      return std::stoi(env);
    } catch (const std::exception&) {
      throw leap::ValidationError(std::string("LEAP_WORKERS is not an integer: ") + env);
    }
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"leap: drug response prediction from transcriptomic representations"};
  app.require_subcommand(1, 1);

  std::string config_path, output_dir, baseline, bundle, expression, out, truth, predictions;
  std::optional<std::uint64_t> seed;
  int workers = 0;
  std::vector<std::size_t> subset;
  std::vector<std::string> perturbations, steps;
  bool print_defaults = false;

  auto common = [&](CLI::App* sub, bool needs_config) {
    auto* opt = sub->add_option("--config", config_path, "JSON config file");
    if (needs_config) opt->required();
    sub->add_option("--seed", seed, "override master_seed");
    sub->add_option("--workers", workers, "OpenMP worker count (default: LEAP_WORKERS or config)")
        ->check(CLI::PositiveNumber);
    sub->add_option("--output-dir", output_dir, "override paths.output_dir");
  };

  auto* synth = app.add_subcommand("synth", "generate a synthetic corpus with planted signal");
  common(synth, false);
  auto* pre = app.add_subcommand("preprocess", "curate, select genes and standardize");
  common(pre, true);
  auto* damae = app.add_subcommand("train-damae", "train (or load cached) autoencoder representations");
  common(damae, true);
  auto* fit = app.add_subcommand("fit", "fit the full ensemble on every labeled sample");
  common(fit, true);
  auto* predict = app.add_subcommand("predict", "predict responses from a saved bundle");
  common(predict, false);
  predict->add_option("--bundle", bundle, "model bundle");
  predict->add_option("--expression", expression, "raw TPM expression CSV");
  predict->add_option("--perturbations", perturbations, "perturbation ids (default: all in bundle)");
  predict->add_option("--representations-subset", subset, "representation indices to average over");
  predict->add_option("--out", out, "predictions CSV");
  auto* evaluate = app.add_subcommand("evaluate", "score a predictions file against truth");
  common(evaluate, false);
  evaluate->add_option("--truth", truth, "responses CSV");
  evaluate->add_option("--predictions", predictions, "predictions CSV");
  auto* run = app.add_subcommand("run", "run the configured evaluation challenge");
  common(run, true);
  run->add_option("--baseline", baseline, "add a baseline model")->check(CLI::IsMember({"knn"}));
  auto* ablate = app.add_subcommand("ablate", "score ablation steps on shared splits");
  common(ablate, true);
  ablate->add_option("--baseline", baseline, "add a baseline model")->check(CLI::IsMember({"knn"}));
  ablate->add_option("--steps", steps, "ablation steps (default: from config)");
  auto* defaults = app.add_subcommand("config", "print the full default config");
  defaults->add_flag("--defaults", print_defaults, "print defaults (the only mode)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? ok : validation;
  }

  try {
    if (defaults->parsed()) {
      std::cout << leap::to_json(leap::RunConfig{});
      return ok;
    }
    CLI::App* sub = app.get_subcommands().front();
    leap::RunConfig cfg = config_path.empty() ? leap::parse_config("{}") : leap::load_config(config_path);
    if (seed) {
      cfg.master_seed = *seed;
      cfg.synthetic.seed = *seed;
    }
    if (!output_dir.empty()) cfg.paths.output_dir = output_dir;
    if (workers == 0) workers = workers_from_env();
    if (workers > 0) cfg.workers = workers;
    if (baseline == "knn") cfg.task.baseline_knn = true;
    if (!bundle.empty()) cfg.predict.bundle = bundle;
    if (!expression.empty()) cfg.predict.expression = expression;
    if (!perturbations.empty()) cfg.predict.perturbations = perturbations;
    if (!subset.empty()) cfg.predict.representations_subset = subset;
    if (!out.empty()) cfg.predict.output = out;
    if (!truth.empty()) cfg.evaluate.truth = truth;
    if (!predictions.empty()) cfg.evaluate.predictions = predictions;
    if (!steps.empty()) cfg.ablation_steps = steps;
    cfg.validate();

    leap::pipeline::Context ctx(std::move(cfg), &std::cerr);
    for (const auto& f : leap::pipeline::execute(ctx, sub->get_name())) std::cout << f << '\n';
    return ok;
  } catch (const leap::ValidationError& e) {
    std::cerr << "leap: invalid input: " << e.what() << '\n';
    return validation;
  } catch (const leap::NumericalError& e) {
    std::cerr << "leap: numerical failure: " << e.what() << '\n';
    return numerical;
  } catch (const leap::IoError& e) {
    std::cerr << "leap: i/o error: " << e.what() << '\n';
    return io_error;
  } catch (const std::exception& e) {
    std::cerr << "leap: " << e.what() << '\n';
    return failure;
  }
}
