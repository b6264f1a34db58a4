#include "leap/pipeline.hpp"

#include <algorithm>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <iostream>
#include <set>
#include <sstream>

#include "json.hpp"
#include "leap/error.hpp"
#include "leap/io.hpp"
#include "leap/kernels.hpp"
#include "leap/metrics.hpp"
#include "leap/preprocess.hpp"
#include "leap/serialize.hpp"

namespace leap::pipeline {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

Context::Context(RunConfig config, std::ostream* log) : config_(std::move(config)), log_(log) {}

void Context::log(const std::string& line) {
  if (log_) *log_ << "[leap] " << line << '\n' << std::flush;
}

void Context::warn(const std::string& line) {
  warnings_.push_back(line);
  log("warning: " + line);
}

void Context::cache_hit(const std::string& what) {
  cache_hits_.push_back(what);
  log("cache hit: " + what);
}

void Context::rethrow_in_stage(const std::string& name) {
  const std::string prefix = "stage " + name + ": ";
  try {
    throw;
  } catch (const ParseError& e) {
    throw ParseError(prefix + e.what());
  } catch (const ValidationError& e) {
    throw ValidationError(prefix + e.what());
  } catch (const NumericalError& e) {
    throw NumericalError(prefix + e.what());
  } catch (const IoError& e) {
    throw IoError(prefix + e.what());
  }
}

std::string Context::config_hash() const {
  RunConfig c = config_;
  c.workers = 1;
  return sha256_hex(to_json(c));
}

void Context::write_manifest(const std::string& command, const std::string& status,
                             const std::vector<std::string>& outputs) const {
  json m;
  m["command"] = command;
  m["status"] = status;
  m["version"] = kVersion;
  m["config_hash"] = config_hash();
  m["master_seed"] = config_.master_seed;
  m["workers"] = config_.workers;
  m["seeds"] = {{"representations", config_.representation_seeds()},
                {"tune", config_.tune_seed()},
                {"split", config_.split_seed()},
                {"synthetic", config_.synthetic.seed}};
  const std::time_t now = std::time(nullptr);
  char stamp[32];
  std::strftime(stamp, sizeof stamp, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
  m["finished_at"] = stamp;
  json stages = json::array();
  double total = 0.0;
  for (const auto& t : timings_) {
    stages.push_back({{"name", t.name}, {"seconds", t.seconds}});
    total += t.seconds;
  }
  m["stages"] = stages;
  m["wall_clock_seconds"] = total;
  m["cache_hits"] = cache_hits_;
  m["warnings"] = warnings_;
  m["outputs"] = outputs;
  fs::create_directories(config_.paths.output_dir);
  io::write_file(config_.paths.output_dir / "manifest.json", m.dump(2) + "\n");
}

// --- corpus ------------------------------------------------------------------

namespace {

std::vector<std::string> ordered_subset(const std::vector<std::string>& order, const std::set<std::string>& keep) {
  std::vector<std::string> out;
  for (const auto& id : order)
    if (keep.count(id)) out.push_back(id);
  return out;
}

ResponseTable curate(Context& ctx, ResponseTable table, const ExpressionMatrix& expr) {
  const auto& cur = ctx.config().curation;
  table.validate();
  table = aggregate_within_study(table);
  std::vector<std::string> priority = cur.study_priority;
  if (priority.empty()) {
    std::set<std::string> studies;
    for (const auto& r : table.records) studies.insert(r.study_tag);
    if (studies.size() > 1)
      throw ValidationError("responses span " + std::to_string(studies.size()) +
                            " studies; set curation.study_priority");
    priority.assign(studies.begin(), studies.end());
  }
  table = dedup_across_studies(table, priority);

  const std::set<std::string> excluded(cur.exclude_samples.begin(), cur.exclude_samples.end());
  ResponseTable kept;
  std::set<std::string> missing;
  for (auto& r : table.records) {
    if (excluded.count(r.sample_id)) continue;
    if (!expr.sample_index(r.sample_id)) {
      missing.insert(r.sample_id);
      continue;
    }
    kept.records.push_back(std::move(r));
  }
  if (!missing.empty())
    ctx.warn(std::to_string(missing.size()) + " labeled samples have no expression profile; their labels are dropped");
  const std::size_t before = kept.perturbations().size();
  kept = filter_perturbations(kept, cur.min_samples, cur.min_label_sd);
  const std::size_t after = kept.perturbations().size();
  if (after < before) ctx.log("curation kept " + std::to_string(after) + " of " + std::to_string(before) + " perturbations");
  if (kept.records.empty()) throw ValidationError("no response records survive curation");
  return kept;
}

}  // namespace

Corpus load_corpus(Context& ctx) {
  const auto& cfg = ctx.config();
  if (cfg.paths.expression.empty()) throw ValidationError("paths.expression is not set");
  if (cfg.paths.responses.empty()) throw ValidationError("paths.responses is not set");
  Corpus c;
  auto raw = ctx.stage("load", [&] {
    std::optional<fs::path> meta;
    if (!cfg.paths.metadata.empty()) meta = cfg.paths.metadata;
    return io::load_expression(cfg.paths.expression, meta);
  });
  auto responses = ctx.stage("load_responses", [&] { return io::load_responses(cfg.paths.responses); });
  if (!cfg.curation.exclude_samples.empty()) {
    const std::set<std::string> excluded(cfg.curation.exclude_samples.begin(), cfg.curation.exclude_samples.end());
    std::vector<std::string> keep;
    for (const auto& id : raw.sample_ids())
      if (!excluded.count(id)) keep.push_back(id);
    raw = raw.select_samples(keep);
  }
  c.responses = ctx.stage("curate", [&] { return curate(ctx, std::move(responses), raw); });
  c.log_expression = ctx.stage("log_transform", [&] { return log_transform(raw); });
  auto selection = ctx.stage("select_genes", [&] {
    return select_genes(split_by_dataset(c.log_expression), cfg.preprocess.k_per_dataset);
  });
  if (!selection.dropped_uncommon.empty())
    ctx.warn(std::to_string(selection.dropped_uncommon.size()) + " genes missing from some dataset were dropped");
  c.genes = std::move(selection.genes);
  std::set<std::string> labeled;
  for (const auto& r : c.responses.records) labeled.insert(r.sample_id);
  c.labeled_samples = ordered_subset(c.log_expression.sample_ids(), labeled);
  ctx.log("corpus: " + std::to_string(c.log_expression.n_samples()) + " samples, " +
          std::to_string(c.genes.size()) + " genes, " + std::to_string(c.labeled_samples.size()) + " labeled");
  return c;
}

// --- representations -----------------------------------------------------------

namespace {

std::string damae_job_key(const ExpressionMatrix& data, const damae::DamaeConfig& cfg, std::uint64_t seed) {
  BinaryWriter w;
  w.str("damae-job-v1");
  w.strs(data.sample_ids());
  w.strs(data.gene_ids());
  w.matrix(data.values());
  w.u64(cfg.hidden_dim);
  w.u64(cfg.latent_dim);
  w.f64(cfg.dropout);
  w.f64(cfg.mask_rate);
  w.u32(static_cast<std::uint32_t>(cfg.mask_mode));
  w.f64(cfg.noise_sd);
  w.u64(cfg.max_epochs);
  w.u64(cfg.patience);
  w.f64(cfg.min_delta);
  w.f64(cfg.holdout_fraction);
  w.u64(cfg.batch_size);
  w.f64(cfg.optimizer.learning_rate);
  w.f64(cfg.optimizer.beta1);
  w.f64(cfg.optimizer.beta2);
  w.f64(cfg.optimizer.epsilon);
  w.u64(seed);
  return sha256_hex(w.bytes());
}

}  // namespace

std::vector<damae::DamaeModel> representations(Context& ctx, const ExpressionMatrix& standardized,
                                               const PreprocessModel& preprocess) {
  const auto& cfg = ctx.config();
  const auto seeds = cfg.representation_seeds();
  const fs::path cache_dir = cfg.paths.output_dir / "cache";
  std::vector<damae::DamaeModel> models(seeds.size());
  std::vector<std::string> keys(seeds.size());
  std::vector<std::uint64_t> todo_seeds;
  std::vector<std::size_t> todo_slots;
  for (std::size_t i = 0; i < seeds.size(); ++i) {
    keys[i] = damae_job_key(standardized, cfg.representation.damae, seeds[i]);
    const fs::path file = cache_dir / ("damae-" + keys[i].substr(0, 24) + ".bin");
    if (fs::exists(file)) {
      const Bundle b = Bundle::load(file);
      if (b.has("key") && b.get("key") == keys[i]) {
        BinaryReader r(b.get("model"));
        models[i] = damae::read_model(r);
        r.expect_done("cached damae model");
        ctx.cache_hit("damae seed " + std::to_string(seeds[i]) + " (" + file.filename().string() + ")");
        continue;
      }
    }
    todo_seeds.push_back(seeds[i]);
    todo_slots.push_back(i);
  }
  if (!todo_seeds.empty()) {
    ctx.log("training " + std::to_string(todo_seeds.size()) + " damae model(s) on " +
            std::to_string(standardized.n_samples()) + " x " + std::to_string(standardized.n_genes()));
    auto trained = damae::train_seed_ensemble(standardized, cfg.representation.damae, todo_seeds);
    fs::create_directories(cache_dir);
    for (std::size_t j = 0; j < trained.size(); ++j) {
      const std::size_t i = todo_slots[j];
      for (const auto& w : trained[j].log.warnings) ctx.warn("damae seed " + std::to_string(seeds[i]) + ": " + w);
      ctx.log("damae seed " + std::to_string(seeds[i]) + ": " + std::to_string(trained[j].log.epochs.size()) +
              " epochs, best " + std::to_string(trained[j].log.best_epoch) + ", validation " +
              io::format_real(trained[j].log.best_validation_loss()));
      models[i] = std::move(trained[j]);
      models[i].preprocess_fingerprint = fingerprint(preprocess);
      BinaryWriter w;
      damae::write_model(w, models[i]);
      Bundle b;
      b.put("key", keys[i]);
      b.put("model", w.take());
      b.save(cache_dir / ("damae-" + keys[i].substr(0, 24) + ".bin"));
    }
  }
  for (auto& m : models) m.preprocess_fingerprint = fingerprint(preprocess);
  return models;
}

// --- splits ------------------------------------------------------------------------

evaluate::SplitPlan make_plan(const RunConfig& cfg, const Corpus& corpus) {
  const auto& t = cfg.task;
  const auto& expr = corpus.log_expression;
  if (t.challenge == "repeated_holdout")
    return evaluate::plan_repeated_holdout(corpus.labeled_samples, t.test_fraction, t.repeats, cfg.split_seed());
  if (t.challenge == "leave_one_tissue_out") {
    if (!expr.has_tissue()) throw ValidationError("leave_one_tissue_out needs tissue metadata");
    std::vector<std::string> tissues;
    for (const auto& id : corpus.labeled_samples) tissues.push_back(expr.tissue()[*expr.sample_index(id)]);
    return evaluate::plan_leave_one_tissue_out(corpus.labeled_samples, tissues, t.test_subset_size, t.n_bootstrap,
                                               cfg.split_seed());
  }
  if (t.train_domain_tag.empty() || t.test_domain_tag.empty())
    throw ValidationError("transfer needs task.train_domain_tag and task.test_domain_tag");
  if (expr.dataset_tag().empty()) throw ValidationError("transfer needs dataset_tag metadata");
  std::vector<std::string> train, test;
  for (const auto& id : corpus.labeled_samples) {
    const auto& tag = expr.dataset_tag()[*expr.sample_index(id)];
    if (tag == t.train_domain_tag) train.push_back(id);
    else if (tag == t.test_domain_tag) test.push_back(id);
  }
  return evaluate::plan_transfer(train, test, t.removed_per_repeat, t.repeats, cfg.split_seed());
}

// --- experiments -------------------------------------------------------------------

namespace {

enum class Predictor { all, first_representation, refit, knn };

struct Variant {
  std::string fit_population;
  std::string corpus;
  regress::Grouping grouping;
  bool one_representation = false;

  std::string key() const {
    return fit_population + "|" + corpus + "|" + regress::to_string(grouping) + "|" + (one_representation ? "1" : "R");
  }
};

struct Step {
  std::string name;
  Predictor predictor = Predictor::all;
  Variant variant;
};

Step resolve_step(const RunConfig& cfg, const std::string& name) {
  Step s{name, Predictor::all, {cfg.preprocess.fit_population, cfg.representation.corpus, cfg.tune.grouping, false}};
  if (name == "full_leap") return s;
  if (name == "fold_ensemble") { s.predictor = Predictor::first_representation; return s; }
  if (name == "single_model") { s.predictor = Predictor::refit; return s; }
  if (name == "knn_baseline") { s.predictor = Predictor::knn; return s; }
  if (name == "one_representation_25") { s.variant.one_representation = true; return s; }
  if (name == "fit_population_full") { s.variant.fit_population = "full"; return s; }
  if (name == "fit_population_train") { s.variant.fit_population = "train"; return s; }
  if (name == "damae_corpus_all") { s.variant.corpus = "all"; return s; }
  if (name == "damae_corpus_train") { s.variant.corpus = "train"; return s; }
  const std::string g = "grouping_";
  if (name.rfind(g, 0) == 0) {
    s.variant.grouping = regress::grouping_from_string(name.substr(g.size()));
    return s;
  }
  throw ValidationError("unknown ablation step '" + name + "'");
}

struct Standardized {
  PreprocessModel model;
  ExpressionMatrix all;  // every corpus sample
};

}  // namespace

ExperimentResult run_experiment(Context& ctx, const Corpus& corpus, const std::vector<std::string>& step_names,
                                const std::string& task_name, bool save_bundles) {
  const auto& cfg = ctx.config();
  if (step_names.empty()) throw ValidationError("no steps to run");
  std::vector<Step> steps;
  bool need_refit = false;
  for (const auto& n : step_names) {
    steps.push_back(resolve_step(cfg, n));
    need_refit = need_refit || steps.back().predictor == Predictor::refit;
  }
  const auto plan = ctx.stage("plan", [&] {
    auto p = make_plan(cfg, corpus);
    p.validate();
    return p;
  });
  ctx.log("plan: " + std::to_string(plan.train_sets.size()) + " training set(s), " +
          std::to_string(plan.repeats.size()) + " repeat(s)");

  ExperimentResult result;
  result.report.task = task_name;
  const auto& all_ids = corpus.log_expression.sample_ids();

  std::map<std::string, Standardized> full_std;  // fit_population=full, shared across splits
  auto standardize = [&](const std::string& population, const std::vector<std::string>& train) {
    const std::vector<std::string>& fit_ids = population == "full" ? all_ids : train;
    auto model = fit_preprocess(corpus.log_expression.select_samples(fit_ids), corpus.genes, population);
    for (const auto& g : model.dropped_gene_ids) ctx.warn("constant gene dropped at preprocess fit: " + g);
    auto all = apply_preprocess(model, corpus.log_expression);
    return Standardized{std::move(model), std::move(all)};
  };

  for (std::size_t ts = 0; ts < plan.train_sets.size(); ++ts) {
    const auto& train = plan.train_sets[ts];
    std::set<std::string> test_union_set;
    for (const auto& rep : plan.repeats)
      if (rep.train_set == ts) test_union_set.insert(rep.test.begin(), rep.test.end());
    if (test_union_set.empty()) continue;
    const auto test_union = ordered_subset(all_ids, test_union_set);
    const auto train_responses = corpus.responses.restrict_samples(train);
    const std::string split = "split " + std::to_string(ts);

    std::map<std::string, Standardized> split_std;
    auto standardized_for = [&](const std::string& population) -> const Standardized& {
      if (population == "full") {
        auto it = full_std.find("full");
        if (it == full_std.end()) it = full_std.emplace("full", standardize("full", train)).first;
        return it->second;
      }
      auto it = split_std.find(population);
      if (it == split_std.end()) it = split_std.emplace(population, standardize(population, train)).first;
      return it->second;
    };

    std::map<std::string, LeapEnsemble> ensembles;
    std::map<std::string, PredictionTable> predictions;
    std::vector<std::string> scored_perts;
    bool have_perts = false;

    for (const auto& step : steps) {
      const auto& stdz = standardized_for(step.predictor == Predictor::knn ? cfg.preprocess.fit_population
                                                                          : step.variant.fit_population);
      const auto train_x = stdz.all.select_samples(train);
      const auto test_x = stdz.all.select_samples(test_union);
      if (step.predictor == Predictor::knn) continue;
      const auto key = step.variant.key();
      if (!ensembles.count(key)) {
        auto reps = ctx.stage(split + " representations", [&] {
          const auto& corpus_x = step.variant.corpus == "all" ? stdz.all : train_x;
          return representations(ctx, corpus_x, stdz.model);
        });
        if (step.variant.one_representation) {
          auto first = reps.front();
          reps.assign(cfg.representation.count, first);
        }
        regress::TuneConfig tune = cfg.tune;
        tune.grouping = step.variant.grouping;
        tune.refit_full = need_refit;
        tune.seed = cfg.tune_seed();
        FitOptions options;
        options.vary_folds_across_representations = step.variant.one_representation;
        auto ens = ctx.stage(split + " fit", [&] {
          return fit_leap(train_x, train_responses, stdz.model, std::move(reps), tune, options);
        });
        for (const auto& w : ens.warnings) ctx.warn(split + ": " + w);
        ensembles.emplace(key, std::move(ens));
      }
      const auto& ens = ensembles.at(key);
      if (!have_perts) {
        scored_perts = ens.perturbations();
        have_perts = true;
      }
      predictions[step.name] = ctx.stage(split + " predict " + step.name, [&] {
        switch (step.predictor) {
          case Predictor::first_representation: return predict_partial(ens, test_x, scored_perts, {0});
          case Predictor::refit: return predict_refit(ens, test_x, scored_perts, 0);
          default: return predict(ens, test_x, scored_perts);
        }
      });
    }
    if (!have_perts) {
      std::map<std::string, std::size_t> counts;
      for (const auto& r : train_responses.records) ++counts[r.perturbation_id];
      for (const auto& [p, n] : counts)
        if (n >= cfg.tune.n_folds) scored_perts.push_back(p);
    }
    for (const auto& step : steps) {
      if (step.predictor != Predictor::knn) continue;
      const auto& stdz = standardized_for(cfg.preprocess.fit_population);
      predictions[step.name] = ctx.stage(split + " predict " + step.name, [&] {
        return predict_knn_baseline(stdz.all.select_samples(train), train_responses,
                                    stdz.all.select_samples(test_union), scored_perts, cfg.task.knn_k);
      });
    }

    const std::set<std::string> scored_set(scored_perts.begin(), scored_perts.end());
    for (const auto& rep : plan.repeats) {
      if (rep.train_set != ts) continue;
      ResponseTable truth;
      for (auto& r : corpus.responses.restrict_samples(rep.test).records)
        if (scored_set.count(r.perturbation_id)) truth.records.push_back(std::move(r));
      if (truth.records.empty()) {
        ctx.warn("repeat " + rep.label + " (" + rep.group + ") has no scorable labels");
        continue;
      }
      for (const auto& step : steps)
        result.report.add(step.name, {rep.group, rep.label, evaluate::score(truth, predictions.at(step.name))});
    }

    if (save_bundles && !ensembles.empty() && (cfg.task.save_bundles == "all" || ts == 0)) {
      const fs::path file = cfg.paths.output_dir / "bundles" / ("split_" + std::to_string(ts) + ".leap");
      fs::create_directories(file.parent_path());
      to_bundle(ensembles.begin()->second, to_json(cfg)).save(file);
      result.bundles.push_back(file.string());
    }
  }
  return result;
}

// --- commands -------------------------------------------------------------------------

namespace {

std::vector<std::string> write_report(Context& ctx, const evaluate::EvaluationReport& report) {
  const auto& out = ctx.config().paths.output_dir;
  fs::create_directories(out);
  io::write_file(out / "report.csv", report.to_csv());
  io::write_file(out / "summary.json", report.summary_json());
  for (const auto& [name, repeats] : report.models) {
    (void)repeats;
    ctx.log(name + ": mean per-perturbation spearman " + io::format_real(report.mean_spearman(name)));
  }
  return {(out / "report.csv").string(), (out / "summary.json").string()};
}

std::vector<std::string> labeled_in_order(const Corpus& c) { return c.labeled_samples; }

struct FullFit {
  Standardized stdz;
  LeapEnsemble ensemble;
};

FullFit fit_all_labeled(Context& ctx, const Corpus& corpus) {
  const auto& cfg = ctx.config();
  const auto train = labeled_in_order(corpus);
  const auto& fit_ids = cfg.preprocess.fit_population == "full" ? corpus.log_expression.sample_ids() : train;
  auto model = ctx.stage("preprocess", [&] {
    return fit_preprocess(corpus.log_expression.select_samples(fit_ids), corpus.genes, cfg.preprocess.fit_population);
  });
  auto all = apply_preprocess(model, corpus.log_expression);
  const auto train_x = all.select_samples(train);
  auto reps = ctx.stage("representations", [&] {
    return representations(ctx, cfg.representation.corpus == "all" ? all : train_x, model);
  });
  regress::TuneConfig tune = cfg.tune;
  tune.seed = cfg.tune_seed();
  auto ens = ctx.stage("fit", [&] { return fit_leap(train_x, corpus.responses, model, std::move(reps), tune); });
  for (const auto& w : ens.warnings) ctx.warn(w);
  return {{std::move(model), std::move(all)}, std::move(ens)};
}

}  // namespace

std::vector<std::string> cmd_synth(Context& ctx) {
  const auto& cfg = ctx.config();
  auto data = ctx.stage("synthesize", [&] { return generate_synthetic(cfg.synthetic); });
  const auto& out = cfg.paths.output_dir;
  fs::create_directories(out);
  const auto expr_path = out / "expression.csv", meta_path = out / "metadata.csv", resp_path = out / "responses.csv",
             latent_path = out / "latent.csv";
  ctx.stage("write", [&] {
    io::write_expression(expr_path, data.expression);
    io::write_metadata(meta_path, data.expression);
    io::write_responses(resp_path, data.responses);
    std::vector<std::string> dims;
    for (std::size_t j = 0; j < data.latent.cols(); ++j) dims.push_back("latent_" + std::to_string(j));
    io::write_expression(latent_path, ExpressionMatrix::make(data.expression.sample_ids(), dims, data.latent,
                                                             Stage::latent));
  });

  // Ground truth: how much label variance the latent factors explain.
  std::map<std::string, std::vector<double>> by_pert;
  for (const auto& r : data.responses.records) by_pert[r.perturbation_id].push_back(r.value);
  std::vector<double> sds;
  for (const auto& [p, v] : by_pert) sds.push_back(metrics::sample_sd(v));
  std::ostringstream s;
  s << "synthetic corpus: " << data.expression.n_samples() << " samples, " << data.expression.n_genes() << " genes, "
    << by_pert.size() << " perturbations, " << cfg.synthetic.n_tissues << " tissues, " << data.responses.records.size()
    << " labels; target R^2 " << cfg.synthetic.signal_r2 << ", mean label sd " << metrics::mean(sds);
  ctx.log(s.str());
  return {expr_path.string(), meta_path.string(), resp_path.string(), latent_path.string()};
}

std::vector<std::string> cmd_preprocess(Context& ctx) {
  const auto& cfg = ctx.config();
  const auto corpus = load_corpus(ctx);
  auto model = ctx.stage("preprocess", [&] {
    return fit_preprocess(corpus.log_expression, corpus.genes, "full");
  });
  const auto& out = cfg.paths.output_dir;
  fs::create_directories(out);
  io::write_expression(out / "standardized.csv", apply_preprocess(model, corpus.log_expression));
  io::write_responses(out / "curated_responses.csv", corpus.responses);
  BinaryWriter w;
  write_preprocess(w, model);
  Bundle b;
  b.put("preprocess", w.take());
  b.save(out / "preprocess.bin");
  return {(out / "standardized.csv").string(), (out / "curated_responses.csv").string(),
          (out / "preprocess.bin").string()};
}

std::vector<std::string> cmd_train_damae(Context& ctx) {
  const auto& cfg = ctx.config();
  const auto corpus = load_corpus(ctx);
  auto model = ctx.stage("preprocess", [&] { return fit_preprocess(corpus.log_expression, corpus.genes, "full"); });
  const auto all = apply_preprocess(model, corpus.log_expression);
  auto reps = ctx.stage("representations", [&] { return representations(ctx, all, model); });
  Bundle b;
  BinaryWriter pw;
  write_preprocess(pw, model);
  b.put("preprocess", pw.take());
  json logs = json::array();
  for (std::size_t r = 0; r < reps.size(); ++r) {
    BinaryWriter w;
    damae::write_model(w, reps[r]);
    b.put("damae/" + std::to_string(r), w.take());
    json curve = json::array();
    for (const auto& e : reps[r].log.epochs) curve.push_back({e.train_loss, e.validation_loss});
    logs.push_back({{"seed", reps[r].config.seed},
                    {"initial_validation_loss", reps[r].log.initial_validation_loss},
                    {"best_epoch", reps[r].log.best_epoch},
                    {"stopped_early", reps[r].log.stopped_early},
                    {"epochs", curve}});
  }
  const auto& out = cfg.paths.output_dir;
  fs::create_directories(out);
  b.save(out / "damae.bin");
  io::write_file(out / "damae_training.json", logs.dump(1) + "\n");
  return {(out / "damae.bin").string(), (out / "damae_training.json").string()};
}

std::vector<std::string> cmd_fit(Context& ctx) {
  const auto& cfg = ctx.config();
  const auto corpus = load_corpus(ctx);
  auto fit = fit_all_labeled(ctx, corpus);
  const auto file = cfg.paths.output_dir / "model.leap";
  fs::create_directories(cfg.paths.output_dir);
  ctx.stage("save", [&] { to_bundle(fit.ensemble, to_json(cfg)).save(file); });
  return {file.string()};
}

std::vector<std::string> cmd_predict(Context& ctx) {
  const auto& cfg = ctx.config();
  const auto& p = cfg.predict;
  if (p.bundle.empty()) throw ValidationError("predict needs a bundle");
  if (p.expression.empty()) throw ValidationError("predict needs an expression file");
  auto ens = ctx.stage("load_bundle", [&] { return from_bundle(Bundle::load(p.bundle)); });
  auto expr = ctx.stage("load", [&] { return io::load_expression(p.expression); });
  const auto x = ctx.stage("preprocess", [&] { return apply_preprocess(ens.preprocess, log_transform(expr)); });
  const auto perts = p.perturbations.empty() ? ens.perturbations() : p.perturbations;
  auto table = ctx.stage("predict", [&] {
    return p.representations_subset.empty() ? predict(ens, x, perts)
                                            : predict_partial(ens, x, perts, p.representations_subset);
  });
  const fs::path out = p.output.empty() ? cfg.paths.output_dir / "predictions.csv" : p.output;
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  io::write_predictions(out, table);
  return {out.string()};
}

std::vector<std::string> cmd_evaluate(Context& ctx) {
  const auto& cfg = ctx.config();
  const fs::path truth_path = cfg.evaluate.truth.empty() ? cfg.paths.responses : cfg.evaluate.truth;
  if (truth_path.empty()) throw ValidationError("evaluate needs a truth file");
  if (cfg.evaluate.predictions.empty()) throw ValidationError("evaluate needs a predictions file");
  const auto truth = io::load_responses(truth_path);
  const auto preds = io::load_predictions(cfg.evaluate.predictions);
  std::set<std::pair<std::string, std::string>> predicted;
  for (const auto& r : preds.records) predicted.insert({r.sample_id, r.perturbation_id});
  ResponseTable scored;
  for (const auto& r : truth.records)
    if (predicted.count({r.sample_id, r.perturbation_id})) scored.records.push_back(r);
  if (scored.records.size() < truth.records.size())
    ctx.warn(std::to_string(truth.records.size() - scored.records.size()) + " truth records have no prediction");
  evaluate::EvaluationReport report;
  report.task = "evaluate";
  report.add("predictions", {"all", "0", ctx.stage("score", [&] { return evaluate::score(scored, preds); })});
  return write_report(ctx, report);
}

std::vector<std::string> cmd_run(Context& ctx) {
  const auto& cfg = ctx.config();
  const auto corpus = load_corpus(ctx);
  std::vector<std::string> steps = {"full_leap"};
  if (cfg.task.baseline_knn) steps.push_back("knn_baseline");
  auto res = run_experiment(ctx, corpus, steps, cfg.task.challenge, cfg.task.save_bundles != "none");
  auto files = write_report(ctx, res.report);
  files.insert(files.end(), res.bundles.begin(), res.bundles.end());
  return files;
}

std::vector<std::string> cmd_ablate(Context& ctx) {
  const auto& cfg = ctx.config();
  const auto corpus = load_corpus(ctx);
  auto steps = cfg.ablation_steps;
  if (cfg.task.baseline_knn && std::find(steps.begin(), steps.end(), "knn_baseline") == steps.end())
    steps.push_back("knn_baseline");
  auto res = run_experiment(ctx, corpus, steps, "ablation/" + cfg.task.challenge, false);
  return write_report(ctx, res.report);
}

std::vector<std::string> execute(Context& ctx, const std::string& command) {
  const auto& out = ctx.config().paths.output_dir;
  set_workers(ctx.config().workers);
  try {
    std::vector<std::string> files;
    if (command == "synth") files = cmd_synth(ctx);
    else if (command == "preprocess") files = cmd_preprocess(ctx);
    else if (command == "train-damae") files = cmd_train_damae(ctx);
    else if (command == "fit") files = cmd_fit(ctx);
    else if (command == "predict") files = cmd_predict(ctx);
    else if (command == "evaluate") files = cmd_evaluate(ctx);
    else if (command == "run") files = cmd_run(ctx);
    else if (command == "ablate") files = cmd_ablate(ctx);
    else throw ValidationError("unknown command '" + command + "'");
    fs::remove(out / "FAILED");
    ctx.write_manifest(command, "ok", files);
    return files;
  } catch (const std::exception& e) {
    try {
      fs::create_directories(out);
      io::write_file(out / "FAILED", command + ": " + e.what() + "\n");
      ctx.write_manifest(command, "failed", {});
    } catch (...) {
    }
    throw;
  }
}

}  // namespace leap::pipeline
