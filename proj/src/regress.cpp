#include "leap/regress.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>

#include "leap/error.hpp"
#include "leap/kernels.hpp"
#include "leap/metrics.hpp"
#include "leap/rng.hpp"

namespace leap::regress {

double LinearModel::predict_row(std::span<const double> x) const {
  double s = intercept;
  for (std::size_t j = 0; j < coefficients.size(); ++j) s += coefficients[j] * x[j];
  return s;
}

std::vector<double> LinearModel::predict(const Matrix& x) const {
  if (x.cols() != coefficients.size())
    throw ValidationError("LinearModel::predict: expected " + std::to_string(coefficients.size()) + " features, got " +
                          std::to_string(x.cols()));
  std::vector<double> out(x.rows());
  for (std::size_t r = 0; r < x.rows(); ++r) out[r] = predict_row(x.row(r));
  return out;
}

double soft_threshold(double x, double lambda) {
  if (x > lambda) return x - lambda;
  if (x < -lambda) return x + lambda;
  return 0.0;
}

namespace {

// Column-major centered copy of X plus the statistics needed by coordinate descent.
struct CenteredDesign {
  std::size_t n = 0, p = 0;
  std::vector<double> cols;  // column j at [j*n, (j+1)*n)
  std::vector<double> mean;
  std::vector<double> sq_norm_over_n;
  double y_mean = 0.0;
  std::vector<double> yc;

  std::span<const double> col(std::size_t j) const { return {cols.data() + j * n, n}; }
};

// With intercept=false the design is used as is (means recorded as zero).
CenteredDesign center(const Matrix& x, std::span<const double> y, bool intercept = true) {
  if (x.rows() != y.size()) throw ValidationError("regress: X rows and y length differ");
  CenteredDesign d;
  d.n = x.rows();
  d.p = x.cols();
  d.mean.assign(d.p, 0.0);
  if (intercept) {
    kernels::column_sums(x, d.mean);
    for (double& m : d.mean) m /= static_cast<double>(d.n);
  }
  d.cols.resize(d.n * d.p);
  d.sq_norm_over_n.assign(d.p, 0.0);
  for (std::size_t j = 0; j < d.p; ++j) {
    double ss = 0.0;
    for (std::size_t i = 0; i < d.n; ++i) {
      const double v = x(i, j) - d.mean[j];
      d.cols[j * d.n + i] = v;
      ss += v * v;
    }
    d.sq_norm_over_n[j] = ss / static_cast<double>(d.n);
  }
  d.y_mean = intercept ? metrics::mean(y) : 0.0;
  d.yc.resize(d.n);
  for (std::size_t i = 0; i < d.n; ++i) d.yc[i] = y[i] - d.y_mean;
  return d;
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

void check_finite(const Matrix& x, std::span<const double> y) {
  for (double v : x.flat())
    if (!std::isfinite(v)) throw ValidationError("regress: non-finite feature value");
  for (double v : y)
    if (!std::isfinite(v)) throw ValidationError("regress: non-finite response value");
}

double kkt_from_residual(const CenteredDesign& d, std::span<const double> r, std::span<const double> w, double alpha,
                         double l1_ratio) {
  double worst = 0.0;
  const double l1 = alpha * l1_ratio, l2 = alpha * (1.0 - l1_ratio);
  for (std::size_t j = 0; j < d.p; ++j) {
    const double c = dot(d.col(j), r) / static_cast<double>(d.n) - l2 * w[j];
    const double v = w[j] == 0.0 ? std::max(0.0, std::abs(c) - l1) : std::abs(c - l1 * (w[j] > 0 ? 1.0 : -1.0));
    worst = std::max(worst, v);
  }
  return worst;
}

double objective_from_residual(std::span<const double> r, std::span<const double> w, double alpha, double l1_ratio) {
  double rss = 0.0;
  for (double v : r) rss += v * v;
  double l1 = 0.0, l2 = 0.0;
  for (double v : w) {
    l1 += std::abs(v);
    l2 += v * v;
  }
  return rss / (2.0 * static_cast<double>(r.size())) + alpha * l1_ratio * l1 + 0.5 * alpha * (1.0 - l1_ratio) * l2;
}

std::vector<double> residual(const Matrix& x, std::span<const double> y, const LinearModel& m) {
  std::vector<double> r(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) r[i] = y[i] - m.predict_row(x.row(i));
  return r;
}

}  // namespace

std::optional<std::vector<double>> alpha_path(const Matrix& x, std::span<const double> y, std::size_t n_alphas,
                                              double eps, double l1_ratio) {
  if (y.size() < 2) throw ValidationError("alpha_path: need at least 2 responses");
  if (n_alphas < 1) throw ValidationError("alpha_path: n_alphas must be >= 1");
  if (!(eps > 0.0 && eps < 1.0)) throw ValidationError("alpha_path: eps must be in (0,1)");
  if (!(l1_ratio > 0.0 && l1_ratio <= 1.0)) throw ValidationError("alpha_path: l1_ratio must be in (0,1]");
  if (std::all_of(y.begin(), y.end(), [&](double v) { return v == y[0]; })) return std::nullopt;
  const auto d = center(x, y);
  double alpha_max = 0.0;
  for (std::size_t j = 0; j < d.p; ++j)
    alpha_max = std::max(alpha_max, std::abs(dot(d.col(j), d.yc)) / static_cast<double>(d.n));
  alpha_max /= l1_ratio;
  std::vector<double> alphas(n_alphas);
  if (n_alphas == 1) {
    alphas[0] = alpha_max;
    return alphas;
  }
  const double log_hi = std::log10(alpha_max > 0.0 ? alpha_max : 1.0);
  const double log_lo = log_hi + std::log10(eps);
  for (std::size_t i = 0; i < n_alphas; ++i) {
    const double t = static_cast<double>(i) / static_cast<double>(n_alphas - 1);
    alphas[i] = alpha_max > 0.0 ? std::pow(10.0, log_hi + t * (log_lo - log_hi)) : 0.0;
  }
  alphas[0] = alpha_max;
  return alphas;
}

LinearModel fit_lasso(const Matrix& x, std::span<const double> y, double alpha, const LassoOptions& options,
                      const std::vector<double>* warm_start) {
  if (x.rows() < 2) throw ValidationError("fit_lasso: need at least 2 rows");
  if (!(alpha >= 0.0)) throw ValidationError("fit_lasso: alpha must be >= 0");
  if (!(options.l1_ratio > 0.0 && options.l1_ratio <= 1.0))
    throw ValidationError("fit_lasso: l1_ratio must be in (0,1]");
  check_finite(x, y);
  const auto d = center(x, y, options.fit_intercept);
  const double n = static_cast<double>(d.n);
  const double l1 = alpha * options.l1_ratio, l2 = alpha * (1.0 - options.l1_ratio);

  std::vector<double> w(d.p, 0.0);
  if (warm_start) {
    if (warm_start->size() != d.p) throw ValidationError("fit_lasso: warm start has wrong length");
    w = *warm_start;
  }
  std::vector<double> r = d.yc;
  for (std::size_t j = 0; j < d.p; ++j) {
    if (w[j] == 0.0) continue;
    const auto c = d.col(j);
    for (std::size_t i = 0; i < d.n; ++i) r[i] -= w[j] * c[i];
  }

  LinearModel model;
  model.alpha = alpha;
  model.converged = false;
  for (std::size_t pass = 1; pass <= options.max_passes; ++pass) {
    double max_change = 0.0;
    for (std::size_t j = 0; j < d.p; ++j) {
      const double z = d.sq_norm_over_n[j];
      if (z == 0.0) {
        w[j] = 0.0;
        continue;
      }
      const auto c = d.col(j);
      const double rho = dot(c, r) / n + z * w[j];
      const double updated = soft_threshold(rho, l1) / (z + l2);
      const double delta = updated - w[j];
      if (delta != 0.0) {
        for (std::size_t i = 0; i < d.n; ++i) r[i] -= delta * c[i];
        w[j] = updated;
        max_change = std::max(max_change, std::abs(delta));
      }
    }
    model.passes = pass;
    if (options.objective_trace) options.objective_trace->push_back(objective_from_residual(r, w, alpha, options.l1_ratio));
    if (max_change < options.tolerance && kkt_from_residual(d, r, w, alpha, options.l1_ratio) <= options.tolerance) {
      model.converged = true;
      break;
    }
  }
  model.intercept = d.y_mean - dot(d.mean, w);
  model.coefficients = std::move(w);
  for (double v : model.coefficients)
    if (!std::isfinite(v)) throw NumericalError("fit_lasso: non-finite coefficient");
  return model;
}

double kkt_violation(const Matrix& x, std::span<const double> y, const LinearModel& model, double l1_ratio,
                     bool fit_intercept) {
  const auto d = center(x, y, fit_intercept);
  const auto r = residual(x, y, model);
  return kkt_from_residual(d, r, model.coefficients, model.alpha, l1_ratio);
}

double lasso_objective(const Matrix& x, std::span<const double> y, const LinearModel& model, double l1_ratio) {
  return objective_from_residual(residual(x, y, model), model.coefficients, model.alpha, l1_ratio);
}

// --- KNN ---------------------------------------------------------------------

KnnModel fit_knn(Matrix x, std::vector<double> y, std::size_t k) {
  if (x.rows() != y.size()) throw ValidationError("fit_knn: X rows and y length differ");
  if (k < 1 || k > x.rows())
    throw ValidationError("fit_knn: k=" + std::to_string(k) + " exceeds training size " + std::to_string(x.rows()));
  return {std::move(x), std::move(y), k};
}

std::vector<double> predict_knn(const KnnModel& model, const Matrix& queries) {
  if (queries.cols() != model.x.cols()) throw ValidationError("predict_knn: feature dimension mismatch");
  Matrix dist;
  kernels::sq_distances(queries, model.x, dist);
  std::vector<double> out(queries.rows());
  const auto rows = static_cast<std::ptrdiff_t>(queries.rows());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t q = 0; q < rows; ++q) {
    const auto qi = static_cast<std::size_t>(q);
    std::vector<std::size_t> idx(model.x.rows());
    std::iota(idx.begin(), idx.end(), 0);
    std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(model.k), idx.end(),
                      [&](std::size_t a, std::size_t b) {
                        const double da = dist(qi, a), db = dist(qi, b);
                        return da != db ? da < db : a < b;
                      });
    double s = 0.0;
    for (std::size_t i = 0; i < model.k; ++i) s += model.y[idx[i]];
    out[qi] = s / static_cast<double>(model.k);
  }
  return out;
}

// --- tuning ------------------------------------------------------------------

const char* to_string(Grouping g) {
  switch (g) {
    case Grouping::by_sample: return "by_sample";
    case Grouping::grouped_by_tissue: return "grouped_by_tissue";
    case Grouping::leave_one_tissue_out: return "leave_one_tissue_out";
  }
  return "?";
}

Grouping grouping_from_string(const std::string& s) {
  if (s == "by_sample") return Grouping::by_sample;
  if (s == "grouped_by_tissue") return Grouping::grouped_by_tissue;
  if (s == "leave_one_tissue_out") return Grouping::leave_one_tissue_out;
  throw ValidationError("unknown CV grouping: " + s);
}

void TuneConfig::validate() const {
  if (n_folds < 2) throw ValidationError("tune: n_folds must be >= 2");
  if (n_alphas < 1) throw ValidationError("tune: n_alphas must be >= 1");
  if (!(alpha_eps > 0.0 && alpha_eps < 1.0)) throw ValidationError("tune: alpha_eps must be in (0,1)");
  if (!(l1_ratio > 0.0 && l1_ratio <= 1.0)) throw ValidationError("tune: l1_ratio must be in (0,1]");
  if (!(cd_tolerance > 0.0)) throw ValidationError("tune: cd_tolerance must be > 0");
  if (cd_max_passes < 1) throw ValidationError("tune: cd_max_passes must be >= 1");
}

std::vector<std::size_t> assign_folds(const std::vector<std::string>& sample_ids,
                                      const std::vector<std::string>* groups, const TuneConfig& cfg,
                                      std::uint64_t seed) {
  const std::size_t n = sample_ids.size();
  std::vector<std::size_t> fold(n, 0);
  if (cfg.grouping == Grouping::by_sample) {
    if (n < cfg.n_folds)
      throw ValidationError("assign_folds: " + std::to_string(n) + " samples for " + std::to_string(cfg.n_folds) +
                            " folds");
    std::vector<std::pair<std::uint64_t, std::size_t>> keyed(n);
    for (std::size_t i = 0; i < n; ++i) keyed[i] = {derive_seed(seed, sample_ids[i]), i};
    std::sort(keyed.begin(), keyed.end(), [&](const auto& a, const auto& b) {
      return a.first != b.first ? a.first < b.first : sample_ids[a.second] < sample_ids[b.second];
    });
    for (std::size_t r = 0; r < n; ++r) fold[keyed[r].second] = r % cfg.n_folds;
    return fold;
  }

  if (!groups || groups->size() != n) throw ValidationError("assign_folds: tissue grouping needs one label per sample");
  std::map<std::string, std::size_t> counts;
  for (const auto& g : *groups) ++counts[g];
  if (counts.size() < 2) throw ValidationError("assign_folds: tissue grouping needs at least 2 distinct tissues");

  std::map<std::string, std::size_t> fold_of_tissue;
  if (cfg.grouping == Grouping::leave_one_tissue_out) {
    std::size_t f = 0;
    for (const auto& [t, c] : counts) fold_of_tissue[t] = f++;
  } else {
    const std::size_t k = std::min(cfg.n_folds, counts.size());
    std::vector<std::pair<std::string, std::size_t>> tissues(counts.begin(), counts.end());
    std::stable_sort(tissues.begin(), tissues.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
    std::vector<std::size_t> load(k, 0);
    for (const auto& [t, c] : tissues) {
      const auto f = static_cast<std::size_t>(std::min_element(load.begin(), load.end()) - load.begin());
      fold_of_tissue[t] = f;
      load[f] += c;
    }
  }
  for (std::size_t i = 0; i < n; ++i) fold[i] = fold_of_tissue.at((*groups)[i]);
  return fold;
}

PerturbationFit tune_and_fit(const Matrix& x, std::span<const double> y, const std::vector<std::string>& sample_ids,
                             const std::vector<std::string>* groups, const TuneConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  if (x.rows() != y.size() || sample_ids.size() != y.size())
    throw ValidationError("tune_and_fit: X, y and sample ids must have equal length");
  check_finite(x, y);
  const auto fold = assign_folds(sample_ids, groups, cfg, seed);
  const std::size_t n_folds = *std::max_element(fold.begin(), fold.end()) + 1;

  std::vector<std::vector<std::size_t>> train_idx(n_folds), test_idx(n_folds);
  for (std::size_t i = 0; i < fold.size(); ++i)
    for (std::size_t f = 0; f < n_folds; ++f) (fold[i] == f ? test_idx : train_idx)[f].push_back(i);

  PerturbationFit fit;
  const double y_mean = metrics::mean(y);
  auto constant_models = [&](double value) {
    std::vector<LinearModel> models(n_folds);
    for (std::size_t f = 0; f < n_folds; ++f) {
      models[f].coefficients.assign(x.cols(), 0.0);
      models[f].intercept = value;
      models[f].fold_id = static_cast<std::int64_t>(f);
    }
    return models;
  };

  const auto path = alpha_path(x, y, cfg.n_alphas, cfg.alpha_eps, cfg.l1_ratio);
  if (!path) {
    fit.degenerate = true;
    fit.fold_models = constant_models(y_mean);
    fit.warnings.push_back("constant training response; using the mean predictor");
    if (cfg.refit_full) fit.full_model = fit.fold_models.front();
    return fit;
  }
  fit.alphas = *path;

  LassoOptions opts;
  opts.tolerance = cfg.cd_tolerance;
  opts.max_passes = cfg.cd_max_passes;
  opts.l1_ratio = cfg.l1_ratio;

  const std::size_t n_alphas = fit.alphas.size();
  std::vector<std::vector<LinearModel>> models(n_alphas, std::vector<LinearModel>(n_folds));
  std::vector<std::vector<double>> scores(n_alphas, std::vector<double>(n_folds, 0.0));
  for (std::size_t f = 0; f < n_folds; ++f) {
    if (train_idx[f].size() < 2) throw ValidationError("tune_and_fit: fold " + std::to_string(f) + " leaves <2 training rows");
    const Matrix x_train = x.select_rows(train_idx[f]);
    const Matrix x_test = x.select_rows(test_idx[f]);
    std::vector<double> y_train, y_test;
    for (auto i : train_idx[f]) y_train.push_back(y[i]);
    for (auto i : test_idx[f]) y_test.push_back(y[i]);
    bool warned = false;
    const std::vector<double>* warm = nullptr;
    for (std::size_t a = 0; a < n_alphas; ++a) {
      auto& m = models[a][f];
      m = fit_lasso(x_train, y_train, fit.alphas[a], opts, warm);
      m.fold_id = static_cast<std::int64_t>(f);
      warm = &m.coefficients;
      std::optional<double> s;
      if (y_test.size() >= 2) s = metrics::spearman(y_test, m.predict(x_test));
      if (!s && y_test.size() >= 2 && std::all_of(y_test.begin(), y_test.end(), [&](double v) { return v == y_test[0]; }) &&
          !warned) {
        fit.warnings.push_back("fold " + std::to_string(f) + " has constant truth; scored as 0");
        warned = true;
      }
      scores[a][f] = s.value_or(0.0);
    }
  }
  fit.alpha_scores.resize(n_alphas);
  std::size_t best = 0;
  for (std::size_t a = 0; a < n_alphas; ++a) {
    fit.alpha_scores[a] = metrics::mean(scores[a]);
    if (fit.alpha_scores[a] > fit.alpha_scores[best]) best = a;  // ties keep the larger alpha
  }
  fit.best_alpha = fit.alphas[best];
  fit.cv_score = fit.alpha_scores[best];
  fit.fold_models = std::move(models[best]);
  if (cfg.refit_full) {
    fit.full_model = fit_lasso(x, y, fit.best_alpha, opts);
  }
  return fit;
}

namespace {

void write_linear(BinaryWriter& w, const LinearModel& m) {
  w.f64s(m.coefficients);
  w.f64(m.intercept);
  w.f64(m.alpha);
  w.u64(static_cast<std::uint64_t>(m.fold_id));
  w.u64(static_cast<std::uint64_t>(m.representation));
  w.boolean(m.converged);
  w.u64(m.passes);
}

LinearModel read_linear(BinaryReader& r) {
  LinearModel m;
  m.coefficients = r.f64s();
  m.intercept = r.f64();
  m.alpha = r.f64();
  m.fold_id = static_cast<std::int64_t>(r.u64());
  m.representation = static_cast<std::int64_t>(r.u64());
  m.converged = r.boolean();
  m.passes = r.u64();
  return m;
}

}  // namespace

void write_fit(BinaryWriter& w, const PerturbationFit& fit) {
  w.str(fit.perturbation_id);
  w.f64(fit.best_alpha);
  w.f64(fit.cv_score);
  w.boolean(fit.degenerate);
  w.f64s(fit.alphas);
  w.f64s(fit.alpha_scores);
  w.u64(fit.fold_models.size());
  for (const auto& m : fit.fold_models) write_linear(w, m);
  w.boolean(fit.full_model.has_value());
  if (fit.full_model) write_linear(w, *fit.full_model);
  w.strs(fit.warnings);
}

PerturbationFit read_fit(BinaryReader& r) {
  PerturbationFit fit;
  fit.perturbation_id = r.str();
  fit.best_alpha = r.f64();
  fit.cv_score = r.f64();
  fit.degenerate = r.boolean();
  fit.alphas = r.f64s();
  fit.alpha_scores = r.f64s();
  const auto n = r.u64();
  for (std::uint64_t i = 0; i < n; ++i) fit.fold_models.push_back(read_linear(r));
  if (r.boolean()) fit.full_model = read_linear(r);
  fit.warnings = r.strs();
  return fit;
}

}  // namespace leap::regress
