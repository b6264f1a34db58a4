#include "leap/config.hpp"

#include "json.hpp"
#include "leap/error.hpp"
#include "leap/io.hpp"
#include "leap/rng.hpp"

namespace leap {

using json = nlohmann::ordered_json;

std::vector<std::uint64_t> RunConfig::representation_seeds() const {
  if (!representation.seeds.empty()) return representation.seeds;
  std::vector<std::uint64_t> seeds;
  for (std::size_t r = 0; r < representation.count; ++r) seeds.push_back(derive_seed(master_seed, "damae", r));
  return seeds;
}

std::uint64_t RunConfig::tune_seed() const { return derive_seed(master_seed, "tune"); }
std::uint64_t RunConfig::split_seed() const { return derive_seed(master_seed, "split"); }

void RunConfig::validate() const {
  representation.damae.validate();
  tune.validate();
  if (representation.count < 1) throw ValidationError("config: representation.count must be >= 1");
  if (!representation.seeds.empty() && representation.seeds.size() != representation.count)
    throw ValidationError("config: representation.seeds must list representation.count seeds");
  if (preprocess.fit_population != "full" && preprocess.fit_population != "train")
    throw ValidationError("config: preprocess.fit_population must be 'full' or 'train'");
  if (representation.corpus != "all" && representation.corpus != "train")
    throw ValidationError("config: representation.corpus must be 'all' or 'train'");
  if (task.challenge != "repeated_holdout" && task.challenge != "leave_one_tissue_out" && task.challenge != "transfer")
    throw ValidationError("config: unknown task.challenge '" + task.challenge + "'");
  if (task.save_bundles != "first" && task.save_bundles != "all" && task.save_bundles != "none")
    throw ValidationError("config: task.save_bundles must be first, all or none");
  if (workers < 1) throw ValidationError("config: workers must be >= 1");
}

namespace {

template <typename T>
void get(const json& j, const char* key, T& out) {
  if (!j.contains(key) || j.at(key).is_null()) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ValidationError(std::string("config: bad value for '") + key + "': " + e.what());
  }
}

void get_path(const json& j, const char* key, std::filesystem::path& out, const std::filesystem::path& base) {
  std::string s;
  get(j, key, s);
  if (s.empty()) return;
  std::filesystem::path p(s);
  out = (p.is_relative() && !base.empty()) ? base / p : p;
}

const json& section(const json& root, const char* key) {
  static const json empty = json::object();
  if (!root.contains(key)) return empty;
  if (!root.at(key).is_object()) throw ValidationError(std::string("config: '") + key + "' must be an object");
  return root.at(key);
}

}  // namespace

RunConfig parse_config(const std::string& json_text, const std::filesystem::path& base_dir) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("config: ") + e.what());
  }
  if (!root.is_object()) throw ValidationError("config: top level must be an object");
  RunConfig c;

  const auto& paths = section(root, "paths");
  get_path(paths, "expression", c.paths.expression, base_dir);
  get_path(paths, "metadata", c.paths.metadata, base_dir);
  get_path(paths, "responses", c.paths.responses, base_dir);
  get_path(paths, "output_dir", c.paths.output_dir, base_dir);

  get(root, "master_seed", c.master_seed);
  get(root, "workers", c.workers);
  c.synthetic.seed = c.master_seed;

  const auto& syn = section(root, "synthetic");
  get(syn, "n_samples", c.synthetic.n_samples);
  get(syn, "n_genes", c.synthetic.n_genes);
  get(syn, "n_latent", c.synthetic.n_latent);
  get(syn, "n_perturbations", c.synthetic.n_perturbations);
  get(syn, "n_tissues", c.synthetic.n_tissues);
  get(syn, "signal_r2", c.synthetic.signal_r2);
  get(syn, "noise_sd_expression", c.synthetic.noise_sd_expression);
  get(syn, "label_missing_rate", c.synthetic.label_missing_rate);
  get(syn, "active_latents", c.synthetic.active_latents);
  get(syn, "seed", c.synthetic.seed);

  const auto& cur = section(root, "curation");
  get(cur, "study_priority", c.curation.study_priority);
  get(cur, "min_samples", c.curation.min_samples);
  if (cur.contains("min_label_sd") && !cur.at("min_label_sd").is_null()) {
    double v = 0.0;
    get(cur, "min_label_sd", v);
    c.curation.min_label_sd = v;
  }
  get(cur, "exclude_samples", c.curation.exclude_samples);

  const auto& pre = section(root, "preprocess");
  get(pre, "k_per_dataset", c.preprocess.k_per_dataset);
  get(pre, "fit_population", c.preprocess.fit_population);

  const auto& rep = section(root, "representation");
  auto& d = c.representation.damae;
  get(rep, "count", c.representation.count);
  get(rep, "seeds", c.representation.seeds);
  get(rep, "corpus", c.representation.corpus);
  get(rep, "hidden_dim", d.hidden_dim);
  get(rep, "latent_dim", d.latent_dim);
  get(rep, "dropout", d.dropout);
  get(rep, "mask_rate", d.mask_rate);
  std::string mode = "bernoulli";
  get(rep, "mask_mode", mode);
  if (mode == "bernoulli") d.mask_mode = damae::MaskMode::bernoulli;
  else if (mode == "exact_count") d.mask_mode = damae::MaskMode::exact_count;
  else throw ValidationError("config: representation.mask_mode must be bernoulli or exact_count");
  get(rep, "noise_sd", d.noise_sd);
  get(rep, "max_epochs", d.max_epochs);
  get(rep, "patience", d.patience);
  get(rep, "min_delta", d.min_delta);
  get(rep, "holdout_fraction", d.holdout_fraction);
  get(rep, "batch_size", d.batch_size);
  get(rep, "learning_rate", d.optimizer.learning_rate);
  get(rep, "beta1", d.optimizer.beta1);
  get(rep, "beta2", d.optimizer.beta2);
  get(rep, "epsilon", d.optimizer.epsilon);

  const auto& tune = section(root, "tune");
  get(tune, "n_folds", c.tune.n_folds);
  std::string grouping = regress::to_string(c.tune.grouping);
  get(tune, "grouping", grouping);
  c.tune.grouping = regress::grouping_from_string(grouping);
  get(tune, "n_alphas", c.tune.n_alphas);
  get(tune, "alpha_eps", c.tune.alpha_eps);
  get(tune, "l1_ratio", c.tune.l1_ratio);
  get(tune, "cd_tolerance", c.tune.cd_tolerance);
  get(tune, "cd_max_passes", c.tune.cd_max_passes);

  const auto& task = section(root, "task");
  get(task, "challenge", c.task.challenge);
  get(task, "test_fraction", c.task.test_fraction);
  get(task, "repeats", c.task.repeats);
  get(task, "test_subset_size", c.task.test_subset_size);
  get(task, "n_bootstrap", c.task.n_bootstrap);
  get(task, "removed_per_repeat", c.task.removed_per_repeat);
  get(task, "train_domain_tag", c.task.train_domain_tag);
  get(task, "test_domain_tag", c.task.test_domain_tag);
  get(task, "baseline_knn", c.task.baseline_knn);
  get(task, "knn_k", c.task.knn_k);
  get(task, "save_bundles", c.task.save_bundles);

  const auto& pred = section(root, "predict");
  get_path(pred, "bundle", c.predict.bundle, base_dir);
  get_path(pred, "expression", c.predict.expression, base_dir);
  get_path(pred, "output", c.predict.output, base_dir);
  get(pred, "perturbations", c.predict.perturbations);
  get(pred, "representations_subset", c.predict.representations_subset);

  const auto& ev = section(root, "evaluate");
  get_path(ev, "truth", c.evaluate.truth, base_dir);
  get_path(ev, "predictions", c.evaluate.predictions, base_dir);

  const auto& abl = section(root, "ablation");
  get(abl, "steps", c.ablation_steps);

  c.validate();
  return c;
}

RunConfig load_config(const std::filesystem::path& path) {
  return parse_config(io::read_file(path), path.parent_path());
}

std::string to_json(const RunConfig& c) {
  json root;
  root["master_seed"] = c.master_seed;
  root["workers"] = c.workers;
  root["paths"] = {{"expression", c.paths.expression.string()},
                   {"metadata", c.paths.metadata.string()},
                   {"responses", c.paths.responses.string()},
                   {"output_dir", c.paths.output_dir.string()}};
  root["synthetic"] = {{"n_samples", c.synthetic.n_samples},
                       {"n_genes", c.synthetic.n_genes},
                       {"n_latent", c.synthetic.n_latent},
                       {"n_perturbations", c.synthetic.n_perturbations},
                       {"n_tissues", c.synthetic.n_tissues},
                       {"signal_r2", c.synthetic.signal_r2},
                       {"noise_sd_expression", c.synthetic.noise_sd_expression},
                       {"label_missing_rate", c.synthetic.label_missing_rate},
                       {"active_latents", c.synthetic.active_latents},
                       {"seed", c.synthetic.seed}};
  root["curation"] = {{"study_priority", c.curation.study_priority},
                      {"min_samples", c.curation.min_samples},
                      {"min_label_sd", c.curation.min_label_sd ? json(*c.curation.min_label_sd) : json(nullptr)},
                      {"exclude_samples", c.curation.exclude_samples}};
  root["preprocess"] = {{"k_per_dataset", c.preprocess.k_per_dataset},
                        {"fit_population", c.preprocess.fit_population}};
  const auto& d = c.representation.damae;
  root["representation"] = {{"count", c.representation.count},
                            {"seeds", c.representation.seeds},
                            {"corpus", c.representation.corpus},
                            {"hidden_dim", d.hidden_dim},
                            {"latent_dim", d.latent_dim},
                            {"dropout", d.dropout},
                            {"mask_rate", d.mask_rate},
                            {"mask_mode", d.mask_mode == damae::MaskMode::bernoulli ? "bernoulli" : "exact_count"},
                            {"noise_sd", d.noise_sd},
                            {"max_epochs", d.max_epochs},
                            {"patience", d.patience},
                            {"min_delta", d.min_delta},
                            {"holdout_fraction", d.holdout_fraction},
                            {"batch_size", d.batch_size},
                            {"learning_rate", d.optimizer.learning_rate},
                            {"beta1", d.optimizer.beta1},
                            {"beta2", d.optimizer.beta2},
                            {"epsilon", d.optimizer.epsilon}};
  root["tune"] = {{"n_folds", c.tune.n_folds},
                  {"grouping", regress::to_string(c.tune.grouping)},
                  {"n_alphas", c.tune.n_alphas},
                  {"alpha_eps", c.tune.alpha_eps},
                  {"l1_ratio", c.tune.l1_ratio},
                  {"cd_tolerance", c.tune.cd_tolerance},
                  {"cd_max_passes", c.tune.cd_max_passes}};
  root["task"] = {{"challenge", c.task.challenge},
                  {"test_fraction", c.task.test_fraction},
                  {"repeats", c.task.repeats},
                  {"test_subset_size", c.task.test_subset_size},
                  {"n_bootstrap", c.task.n_bootstrap},
                  {"removed_per_repeat", c.task.removed_per_repeat},
                  {"train_domain_tag", c.task.train_domain_tag},
                  {"test_domain_tag", c.task.test_domain_tag},
                  {"baseline_knn", c.task.baseline_knn},
                  {"knn_k", c.task.knn_k},
                  {"save_bundles", c.task.save_bundles}};
  root["predict"] = {{"bundle", c.predict.bundle.string()},
                     {"expression", c.predict.expression.string()},
                     {"perturbations", c.predict.perturbations},
                     {"output", c.predict.output.string()},
                     {"representations_subset", c.predict.representations_subset}};
  root["evaluate"] = {{"truth", c.evaluate.truth.string()}, {"predictions", c.evaluate.predictions.string()}};
  root["ablation"] = {{"steps", c.ablation_steps}};
  return root.dump(2) + "\n";
}

}  // namespace leap
