#include "leap/ensemble.hpp"

#include <exception>

#include "leap/error.hpp"
#include "leap/rng.hpp"

namespace leap {

std::vector<std::string> LeapEnsemble::perturbations() const {
  std::vector<std::string> out;
  for (const auto& [p, f] : fits) out.push_back(p);
  return out;
}

std::size_t LeapEnsemble::regressor_count(const std::string& perturbation) const {
  std::size_t n = 0;
  for (const auto& f : fits.at(perturbation)) n += f.fold_models.size();
  return n;
}

namespace {

struct LabeledRows {
  std::vector<std::size_t> rows;
  std::vector<double> values;
};

std::map<std::string, LabeledRows> labeled_rows(const ExpressionMatrix& expr, const ResponseTable& responses) {
  std::map<std::string, LabeledRows> out;
  std::set<std::pair<std::string, std::string>> seen;
  for (const auto& r : responses.records) {
    auto row = expr.sample_index(r.sample_id);
    if (!row) throw ValidationError("response references sample absent from expression: " + r.sample_id);
    if (!seen.emplace(r.sample_id, r.perturbation_id).second)
      throw ValidationError("duplicate response for (" + r.sample_id + ", " + r.perturbation_id +
                            "); run curation first");
    auto& l = out[r.perturbation_id];
    l.rows.push_back(*row);
    l.values.push_back(r.value);
  }
  return out;
}

void check_known(const LeapEnsemble& ens, const std::vector<std::string>& ids) {
  std::string unknown;
  for (const auto& p : ids)
    if (!ens.fits.count(p)) unknown += (unknown.empty() ? "" : ", ") + p;
  if (!unknown.empty()) throw ValidationError("unknown perturbation ids: " + unknown);
}

template <typename Fn>
void parallel_for(std::size_t n, Fn&& fn) {
  std::vector<std::exception_ptr> errors(n);
  const auto count = static_cast<std::ptrdiff_t>(n);
#pragma omp parallel for schedule(dynamic, 1)
  for (std::ptrdiff_t i = 0; i < count; ++i) {
    try {
      fn(static_cast<std::size_t>(i));
    } catch (...) {
      errors[static_cast<std::size_t>(i)] = std::current_exception();
    }
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

// Averages fold-model outputs over the chosen representations; output is
// sample-major in expression order, perturbations in request order.
PredictionTable average_predictions(const LeapEnsemble& ens, const ExpressionMatrix& expr,
                                    const std::vector<std::string>& ids, const std::vector<std::size_t>& reps) {
  check_known(ens, ids);
  if (reps.empty()) throw ValidationError("predict: representation subset is empty");
  for (auto r : reps)
    if (r >= ens.representations.size())
      throw ValidationError("predict: representation index " + std::to_string(r) + " out of range");
  if (expr.gene_ids() != ens.preprocess.selected_gene_ids)
    throw ValidationError("predict: expression columns do not match the preprocess model");

  std::vector<Matrix> latent(ens.representations.size());
  parallel_for(reps.size(), [&](std::size_t i) {
    latent[reps[i]] = damae::encode(ens.representations[reps[i]], expr).values();
  });

  const std::size_t n = expr.n_samples();
  Matrix values(n, ids.size());
  parallel_for(ids.size(), [&](std::size_t p) {
    const auto& fits = ens.fits.at(ids[p]);
    for (std::size_t s = 0; s < n; ++s) {
      double sum = 0.0;
      std::size_t count = 0;
      for (auto r : reps) {
        const auto row = latent[r].row(s);
        for (const auto& m : fits[r].fold_models) {
          sum += m.predict_row(row);
          ++count;
        }
      }
      values(s, p) = sum / static_cast<double>(count);
    }
  });
  PredictionTable out;
  out.records.reserve(n * ids.size());
  for (std::size_t s = 0; s < n; ++s)
    for (std::size_t p = 0; p < ids.size(); ++p) out.records.push_back({expr.sample_ids()[s], ids[p], values(s, p)});
  return out;
}

}  // namespace

LeapEnsemble fit_leap(const ExpressionMatrix& expr, const ResponseTable& responses, const PreprocessModel& preprocess,
                      std::vector<damae::DamaeModel> representations, const regress::TuneConfig& tune,
                      const FitOptions& options) {
  if (expr.stage() != Stage::standardized) throw ValidationError("fit_leap expects standardized expression");
  if (representations.empty()) throw ValidationError("fit_leap: no representations");
  tune.validate();
  for (const auto& m : representations)
    if (m.input_gene_ids != representations.front().input_gene_ids)
      throw ValidationError("fit_leap: representations disagree on input genes");

  LeapEnsemble ens;
  ens.preprocess = preprocess;
  ens.tune = tune;
  ens.options = options;
  ens.representations = std::move(representations);
  const std::size_t n_reps = ens.representations.size();

  std::vector<Matrix> latent(n_reps);
  parallel_for(n_reps, [&](std::size_t r) { latent[r] = damae::encode(ens.representations[r], expr).values(); });

  const auto labeled = labeled_rows(expr, responses);
  std::vector<std::string> perts;
  for (const auto& [p, l] : labeled) {
    if (l.rows.size() < tune.n_folds) {
      ens.warnings.push_back("skipped " + p + ": " + std::to_string(l.rows.size()) + " labeled samples < " +
                             std::to_string(tune.n_folds) + " folds");
      continue;
    }
    perts.push_back(p);
  }

  const bool tissue_groups = tune.grouping != regress::Grouping::by_sample;
  if (tissue_groups && !expr.has_tissue()) throw ValidationError("fit_leap: tissue grouping requires tissue labels");

  std::vector<std::vector<regress::PerturbationFit>> results(perts.size(),
                                                             std::vector<regress::PerturbationFit>(n_reps));
  parallel_for(perts.size() * n_reps, [&](std::size_t unit) {
    const std::size_t pi = unit / n_reps, r = unit % n_reps;
    const auto& l = labeled.at(perts[pi]);
    std::vector<std::string> ids, groups;
    for (auto row : l.rows) {
      ids.push_back(expr.sample_ids()[row]);
      if (tissue_groups) groups.push_back(expr.tissue()[row]);
    }
    const auto seed = derive_seed(tune.seed, "folds/" + perts[pi], options.vary_folds_across_representations ? r : 0);
    auto fit = regress::tune_and_fit(latent[r].select_rows(l.rows), l.values, ids, tissue_groups ? &groups : nullptr,
                                     tune, seed);
    fit.perturbation_id = perts[pi];
    for (auto& m : fit.fold_models) m.representation = static_cast<std::int64_t>(r);
    if (fit.full_model) fit.full_model->representation = static_cast<std::int64_t>(r);
    results[pi][r] = std::move(fit);
  });
  for (std::size_t pi = 0; pi < perts.size(); ++pi) ens.fits.emplace(perts[pi], std::move(results[pi]));
  return ens;
}

PredictionTable predict(const LeapEnsemble& ens, const ExpressionMatrix& expr,
                        const std::vector<std::string>& perturbation_ids) {
  std::vector<std::size_t> all(ens.representations.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  return average_predictions(ens, expr, perturbation_ids, all);
}

PredictionTable predict_partial(const LeapEnsemble& ens, const ExpressionMatrix& expr,
                                const std::vector<std::string>& perturbation_ids,
                                const std::vector<std::size_t>& representations) {
  return average_predictions(ens, expr, perturbation_ids, representations);
}

PredictionTable predict_refit(const LeapEnsemble& ens, const ExpressionMatrix& expr,
                              const std::vector<std::string>& perturbation_ids, std::size_t representation) {
  check_known(ens, perturbation_ids);
  if (representation >= ens.representations.size()) throw ValidationError("predict_refit: representation out of range");
  const Matrix latent = damae::encode(ens.representations[representation], expr).values();
  PredictionTable out;
  std::vector<const regress::LinearModel*> models;
  for (const auto& p : perturbation_ids) {
    const auto& fit = ens.fits.at(p)[representation];
    if (!fit.full_model) throw ValidationError("predict_refit: ensemble was fit without refit_full");
    models.push_back(&*fit.full_model);
  }
  for (std::size_t s = 0; s < expr.n_samples(); ++s)
    for (std::size_t p = 0; p < perturbation_ids.size(); ++p)
      out.records.push_back({expr.sample_ids()[s], perturbation_ids[p], models[p]->predict_row(latent.row(s))});
  return out;
}

PredictionTable predict_knn_baseline(const ExpressionMatrix& train, const ResponseTable& responses,
                                     const ExpressionMatrix& test, const std::vector<std::string>& perturbation_ids,
                                     std::size_t k) {
  if (train.gene_ids() != test.gene_ids()) throw ValidationError("knn baseline: train/test genes differ");
  const auto labeled = labeled_rows(train, responses);
  std::string unknown;
  for (const auto& p : perturbation_ids)
    if (!labeled.count(p)) unknown += (unknown.empty() ? "" : ", ") + p;
  if (!unknown.empty()) throw ValidationError("knn baseline: no training labels for: " + unknown);

  Matrix values(test.n_samples(), perturbation_ids.size());
  for (std::size_t p = 0; p < perturbation_ids.size(); ++p) {
    const auto& l = labeled.at(perturbation_ids[p]);
    const auto model = regress::fit_knn(train.values().select_rows(l.rows), l.values, std::min(k, l.rows.size()));
    const auto pred = regress::predict_knn(model, test.values());
    for (std::size_t s = 0; s < pred.size(); ++s) values(s, p) = pred[s];
  }
  PredictionTable out;
  for (std::size_t s = 0; s < test.n_samples(); ++s)
    for (std::size_t p = 0; p < perturbation_ids.size(); ++p)
      out.records.push_back({test.sample_ids()[s], perturbation_ids[p], values(s, p)});
  return out;
}

namespace {

void write_tune(BinaryWriter& w, const regress::TuneConfig& t, const FitOptions& o) {
  w.u64(t.n_folds);
  w.u32(static_cast<std::uint32_t>(t.grouping));
  w.u64(t.n_alphas);
  w.f64(t.alpha_eps);
  w.f64(t.l1_ratio);
  w.f64(t.cd_tolerance);
  w.u64(t.cd_max_passes);
  w.boolean(t.refit_full);
  w.u64(t.seed);
  w.boolean(o.vary_folds_across_representations);
}

void read_tune(BinaryReader& r, regress::TuneConfig& t, FitOptions& o) {
  t.n_folds = r.u64();
  const auto g = r.u32();
  if (g > 2) throw ParseError("unknown grouping code");
  t.grouping = static_cast<regress::Grouping>(g);
  t.n_alphas = r.u64();
  t.alpha_eps = r.f64();
  t.l1_ratio = r.f64();
  t.cd_tolerance = r.f64();
  t.cd_max_passes = r.u64();
  t.refit_full = r.boolean();
  t.seed = r.u64();
  o.vary_folds_across_representations = r.boolean();
}

}  // namespace

Bundle to_bundle(const LeapEnsemble& ens, const std::string& config_json) {
  Bundle b;
  b.put("config", config_json);
  {
    BinaryWriter w;
    write_preprocess(w, ens.preprocess);
    b.put("preprocess", w.take());
  }
  for (std::size_t r = 0; r < ens.representations.size(); ++r) {
    BinaryWriter w;
    damae::write_model(w, ens.representations[r]);
    b.put("damae/" + std::to_string(r), w.take());
  }
  BinaryWriter w;
  write_tune(w, ens.tune, ens.options);
  w.u64(ens.representations.size());
  w.strs(ens.warnings);
  w.u64(ens.fits.size());
  for (const auto& [p, fits] : ens.fits) {
    w.str(p);
    for (const auto& f : fits) regress::write_fit(w, f);
  }
  b.put("fits", w.take());
  return b;
}

LeapEnsemble from_bundle(const Bundle& bundle) {
  LeapEnsemble ens;
  {
    BinaryReader r(bundle.get("preprocess"));
    ens.preprocess = read_preprocess(r);
    r.expect_done("preprocess section");
  }
  BinaryReader r(bundle.get("fits"));
  read_tune(r, ens.tune, ens.options);
  const auto n_reps = r.u64();
  ens.warnings = r.strs();
  for (std::uint64_t i = 0; i < n_reps; ++i) {
    BinaryReader dr(bundle.get("damae/" + std::to_string(i)));
    ens.representations.push_back(damae::read_model(dr));
    dr.expect_done("damae section");
  }
  const auto n_perts = r.u64();
  for (std::uint64_t i = 0; i < n_perts; ++i) {
    auto p = r.str();
    std::vector<regress::PerturbationFit> fits;
    for (std::uint64_t k = 0; k < n_reps; ++k) fits.push_back(regress::read_fit(r));
    ens.fits.emplace(std::move(p), std::move(fits));
  }
  r.expect_done("fits section");
  return ens;
}

}  // namespace leap
