#include "leap/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>
#include <set>
#include <tuple>
#include <utility>

#include "leap/error.hpp"
#include "leap/rng.hpp"

namespace leap {

const char* to_string(Stage s) {
  switch (s) {
    case Stage::raw_tpm: return "raw_tpm";
    case Stage::log_tpm: return "log_tpm";
    case Stage::standardized: return "standardized";
    case Stage::latent: return "latent";
  }
  return "?";
}

namespace {

std::unordered_map<std::string, std::size_t> index_ids(const std::vector<std::string>& ids, const char* what) {
  std::unordered_map<std::string, std::size_t> pos;
  pos.reserve(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (!pos.emplace(ids[i], i).second) throw ValidationError(std::string("duplicate ") + what + " id \"" + ids[i] + "\"");
  }
  return pos;
}

}  // namespace

ExpressionMatrix ExpressionMatrix::make(std::vector<std::string> sample_ids, std::vector<std::string> gene_ids,
                                        Matrix values, Stage stage, std::vector<std::string> tissue,
                                        std::vector<std::string> dataset_tag) {
  ExpressionMatrix m;
  m.sample_pos_ = index_ids(sample_ids, "sample");
  m.gene_pos_ = index_ids(gene_ids, "gene");
  if (values.rows() != sample_ids.size() || values.cols() != gene_ids.size())
    throw ValidationError("expression values shape does not match ids");
  if (!tissue.empty() && tissue.size() != sample_ids.size())
    throw ValidationError("tissue annotation length does not match sample count");
  if (!dataset_tag.empty() && dataset_tag.size() != sample_ids.size())
    throw ValidationError("dataset_tag annotation length does not match sample count");
  for (std::size_t r = 0; r < values.rows(); ++r) {
    for (std::size_t c = 0; c < values.cols(); ++c) {
      const double v = values(r, c);
      if (!std::isfinite(v))
        throw ValidationError("non-finite expression value for sample " + sample_ids[r] + ", gene " + gene_ids[c]);
      if (stage == Stage::raw_tpm && v < 0.0)
        throw ValidationError("negative raw TPM for sample " + sample_ids[r] + ", gene " + gene_ids[c]);
    }
  }
  m.sample_ids_ = std::move(sample_ids);
  m.gene_ids_ = std::move(gene_ids);
  m.values_ = std::move(values);
  m.tissue_ = std::move(tissue);
  m.dataset_tag_ = std::move(dataset_tag);
  m.stage_ = stage;
  return m;
}

std::optional<std::size_t> ExpressionMatrix::sample_index(const std::string& id) const {
  auto it = sample_pos_.find(id);
  if (it == sample_pos_.end()) return std::nullopt;
  return it->second;
}

std::optional<std::size_t> ExpressionMatrix::gene_index(const std::string& id) const {
  auto it = gene_pos_.find(id);
  if (it == gene_pos_.end()) return std::nullopt;
  return it->second;
}

ExpressionMatrix ExpressionMatrix::select_sample_rows(const std::vector<std::size_t>& rows) const {
  std::vector<std::string> ids, tis, tags;
  ids.reserve(rows.size());
  for (auto r : rows) {
    ids.push_back(sample_ids_.at(r));
    if (has_tissue()) tis.push_back(tissue_[r]);
    if (!dataset_tag_.empty()) tags.push_back(dataset_tag_[r]);
  }
  return make(std::move(ids), gene_ids_, values_.select_rows(rows), stage_, std::move(tis), std::move(tags));
}

ExpressionMatrix ExpressionMatrix::select_samples(const std::vector<std::string>& ids) const {
  std::vector<std::size_t> rows;
  rows.reserve(ids.size());
  for (const auto& id : ids) {
    auto r = sample_index(id);
    if (!r) throw ValidationError("unknown sample id: " + id);
    rows.push_back(*r);
  }
  return select_sample_rows(rows);
}

ExpressionMatrix ExpressionMatrix::with_annotations(std::vector<std::string> tissue,
                                                    std::vector<std::string> dataset_tag) const {
  return make(sample_ids_, gene_ids_, values_, stage_, std::move(tissue), std::move(dataset_tag));
}

void ResponseTable::validate() const {
  for (const auto& r : records) {
    if (!std::isfinite(r.value))
      throw ValidationError("non-finite response for sample " + r.sample_id + ", perturbation " + r.perturbation_id);
  }
}

std::vector<std::string> ResponseTable::perturbations() const {
  std::set<std::string> ids;
  for (const auto& r : records) ids.insert(r.perturbation_id);
  return {ids.begin(), ids.end()};
}

ResponseTable ResponseTable::restrict_samples(const std::vector<std::string>& sample_ids) const {
  std::set<std::string> keep(sample_ids.begin(), sample_ids.end());
  ResponseTable out;
  for (const auto& r : records)
    if (keep.count(r.sample_id)) out.records.push_back(r);
  return out;
}

double median(std::vector<double> values) {
  if (values.empty()) throw ValidationError("median of empty set");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  if (n % 2 == 1) return values[n / 2];
  return 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

ResponseTable aggregate_within_study(const ResponseTable& table) {
  table.validate();
  using Key = std::tuple<std::string, std::string, std::string>;
  std::map<Key, std::vector<double>> groups;
  std::vector<Key> order;
  for (const auto& r : table.records) {
    Key k{r.study_tag, r.sample_id, r.perturbation_id};
    auto [it, inserted] = groups.try_emplace(k);
    if (inserted) order.push_back(k);
    it->second.push_back(r.value);
  }
  // First-appearance order keeps the output stable with respect to the input.
  ResponseTable out;
  out.records.reserve(order.size());
  for (const auto& k : order) {
    const auto& [study, sample, pert] = k;
    out.records.push_back({sample, pert, median(groups[k]), study});
  }
  return out;
}

ResponseTable dedup_across_studies(const ResponseTable& table, const std::vector<std::string>& priority) {
  std::map<std::string, std::size_t> rank;
  for (std::size_t i = 0; i < priority.size(); ++i) rank.emplace(priority[i], i);
  using Key = std::pair<std::string, std::string>;
  std::map<Key, std::size_t> best;  // key -> record index
  for (std::size_t i = 0; i < table.records.size(); ++i) {
    const auto& r = table.records[i];
    auto rk = rank.find(r.study_tag);
    if (rk == rank.end()) throw ValidationError("study tag not in priority list: " + r.study_tag);
    Key k{r.sample_id, r.perturbation_id};
    auto it = best.find(k);
    if (it == best.end() || rk->second < rank.at(table.records[it->second].study_tag)) best[k] = i;
  }
  std::vector<bool> keep(table.records.size(), false);
  for (const auto& [k, i] : best) keep[i] = true;
  ResponseTable out;
  for (std::size_t i = 0; i < table.records.size(); ++i)
    if (keep[i]) out.records.push_back(table.records[i]);
  return out;
}

ResponseTable filter_perturbations(const ResponseTable& table, std::size_t min_samples,
                                   std::optional<double> min_label_sd) {
  if (min_samples < 1) throw ValidationError("min_samples must be >= 1");
  std::map<std::string, std::set<std::string>> samples;
  std::map<std::string, std::vector<double>> values;
  for (const auto& r : table.records) {
    samples[r.perturbation_id].insert(r.sample_id);
    values[r.perturbation_id].push_back(r.value);
  }
  std::set<std::string> keep;
  for (const auto& [pert, ids] : samples) {
    if (ids.size() < min_samples) continue;
    if (min_label_sd) {
      const auto& v = values[pert];
      const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
      double ss = 0.0;
      for (double x : v) ss += (x - mean) * (x - mean);
      const double sd = std::sqrt(ss / static_cast<double>(v.size()));
      if (!(sd > *min_label_sd)) continue;
    }
    keep.insert(pert);
  }
  ResponseTable out;
  for (const auto& r : table.records)
    if (keep.count(r.perturbation_id)) out.records.push_back(r);
  return out;
}

// --- synthetic ---------------------------------------------------------------

void SyntheticSpec::validate() const {
  if (n_samples < 2) throw ValidationError("synthetic: n_samples must be >= 2");
  if (n_genes < 1) throw ValidationError("synthetic: n_genes must be >= 1");
  if (n_latent < 1 || n_latent > n_genes) throw ValidationError("synthetic: need 1 <= n_latent <= n_genes");
  if (n_latent + 2 > n_samples) throw ValidationError("synthetic: need n_latent + 2 <= n_samples");
  if (n_tissues < 1 || n_tissues > n_samples) throw ValidationError("synthetic: need 1 <= n_tissues <= n_samples");
  if (!(signal_r2 > 0.0 && signal_r2 < 1.0)) throw ValidationError("synthetic: signal_r2 must be in (0,1)");
  if (!(noise_sd_expression >= 0.0)) throw ValidationError("synthetic: noise_sd_expression must be >= 0");
  if (!(label_missing_rate >= 0.0 && label_missing_rate < 1.0))
    throw ValidationError("synthetic: label_missing_rate must be in [0,1)");
  if (active_latents < 1 || active_latents > n_latent)
    throw ValidationError("synthetic: need 1 <= active_latents <= n_latent");
}

namespace {

std::string padded(const char* prefix, std::size_t i, std::size_t n) {
  const int width = static_cast<int>(std::to_string(n > 0 ? n - 1 : 0).size());
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s%0*zu", prefix, width, i);
  return buf;
}

// Removes from v its projection onto span{1, columns of z} (modified Gram-Schmidt).
void residualize(std::vector<double>& v, const Matrix& z) {
  const std::size_t n = z.rows();
  std::vector<std::vector<double>> basis;
  auto add = [&](std::vector<double> b) {
    for (const auto& q : basis) {
      double d = 0.0;
      for (std::size_t i = 0; i < n; ++i) d += q[i] * b[i];
      for (std::size_t i = 0; i < n; ++i) b[i] -= d * q[i];
    }
    double nrm = 0.0;
    for (double x : b) nrm += x * x;
    nrm = std::sqrt(nrm);
    if (nrm < 1e-10) return;
    for (double& x : b) x /= nrm;
    basis.push_back(std::move(b));
  };
  add(std::vector<double>(n, 1.0));
  for (std::size_t c = 0; c < z.cols(); ++c) add(z.column(c));
  for (const auto& q : basis) {
    double d = 0.0;
    for (std::size_t i = 0; i < n; ++i) d += q[i] * v[i];
    for (std::size_t i = 0; i < n; ++i) v[i] -= d * q[i];
  }
}

double centered_ss(const std::vector<double>& v) {
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return ss;
}

}  // namespace

SyntheticData generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  const std::size_t n = spec.n_samples, g = spec.n_genes, k = spec.n_latent, np = spec.n_perturbations;

  Rng tissue_rng(derive_seed(spec.seed, "synthetic/tissue"));
  std::vector<std::size_t> tissue_of(n);
  for (std::size_t i = 0; i < n; ++i) tissue_of[i] = i % spec.n_tissues;
  tissue_rng.shuffle(tissue_of);
  Matrix offsets(spec.n_tissues, k);
  for (double& x : offsets.flat()) x = 0.75 * tissue_rng.normal();

  Rng latent_rng(derive_seed(spec.seed, "synthetic/latent"));
  Matrix z(n, k);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < k; ++j) z(i, j) = latent_rng.normal() + offsets(tissue_of[i], j);

  // log2 expression = baseline + Z * loadings + noise; raw = 2^softplus(log2 expression) - 1.
  Rng gene_rng(derive_seed(spec.seed, "synthetic/genes"));
  Matrix loadings(k, g);
  std::vector<double> baseline(g);
  for (std::size_t j = 0; j < g; ++j) {
    baseline[j] = gene_rng.uniform(2.0, 8.0);
    const double scale = gene_rng.uniform(0.5, 1.5) / std::sqrt(static_cast<double>(k));
    for (std::size_t l = 0; l < k; ++l) loadings(l, j) = scale * gene_rng.normal();
  }
  Rng noise_rng(derive_seed(spec.seed, "synthetic/expression-noise"));
  Matrix raw(n, g);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < g; ++j) {
      double lg = baseline[j];
      for (std::size_t l = 0; l < k; ++l) lg += z(i, l) * loadings(l, j);
      lg += spec.noise_sd_expression * noise_rng.normal();
      const double sp = lg > 30.0 ? lg : std::log1p(std::exp(lg));
      raw(i, j) = std::exp2(sp) - 1.0;
    }
  }

  std::vector<std::string> sample_ids(n), gene_ids(g), tissue(n), tags(n, "synthetic");
  for (std::size_t i = 0; i < n; ++i) {
    sample_ids[i] = padded("S", i, n);
    tissue[i] = padded("tissue_", tissue_of[i], spec.n_tissues);
  }
  for (std::size_t j = 0; j < g; ++j) gene_ids[j] = padded("G", j, g);

  SyntheticData out;
  out.expression = ExpressionMatrix::make(sample_ids, gene_ids, std::move(raw), Stage::raw_tpm, tissue, tags);
  out.coefficients = Matrix(np, k);

  for (std::size_t p = 0; p < np; ++p) {
    Rng prng(derive_seed(spec.seed, "synthetic/perturbation", p));
    std::vector<std::size_t> dims(k);
    std::iota(dims.begin(), dims.end(), 0);
    prng.shuffle(dims);
    for (std::size_t a = 0; a < spec.active_latents; ++a) {
      double c = prng.normal();
      c += c >= 0 ? 0.25 : -0.25;
      out.coefficients(p, dims[a]) = c;
    }
    const double intercept = prng.normal();
    std::vector<double> signal(n, intercept);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t l = 0; l < k; ++l) signal[i] += z(i, l) * out.coefficients(p, l);
    std::vector<double> noise(n);
    for (double& e : noise) e = prng.normal();
    // Noise orthogonal to [1, Z] makes the OLS R^2 on Z exactly signal_r2.
    residualize(noise, z);
    const double target_ss = centered_ss(signal) * (1.0 - spec.signal_r2) / spec.signal_r2;
    const double scale = std::sqrt(target_ss / centered_ss(noise));
    const std::string pid = padded("P", p, np);
    for (std::size_t i = 0; i < n; ++i) {
      if (spec.label_missing_rate > 0.0 && prng.bernoulli(spec.label_missing_rate)) continue;
      out.responses.records.push_back({sample_ids[i], pid, signal[i] + scale * noise[i], "synthetic"});
    }
  }
  out.latent = std::move(z);
  return out;
}

}  // namespace leap
