#include "leap/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>

#include "leap/error.hpp"

namespace leap {

ExpressionMatrix log_transform(const ExpressionMatrix& m) {
  if (m.stage() != Stage::raw_tpm) throw ValidationError("log_transform expects raw_tpm input");
  Matrix out(m.n_samples(), m.n_genes());
  const auto in = m.values().flat();
  auto dst = out.flat();
  for (std::size_t i = 0; i < in.size(); ++i) {
    if (in[i] < 0.0) throw ValidationError("log_transform: negative TPM value");
    dst[i] = std::log2(in[i] + 1.0);
  }
  return ExpressionMatrix::make(m.sample_ids(), m.gene_ids(), std::move(out), Stage::log_tpm, m.tissue(),
                                m.dataset_tag());
}

namespace {

// Two-pass population mean and variance of one column.
std::pair<double, double> column_moments(const Matrix& v, std::size_t col) {
  const std::size_t n = v.rows();
  double sum = 0.0;
  for (std::size_t r = 0; r < n; ++r) sum += v(r, col);
  const double mean = sum / static_cast<double>(n);
  double ss = 0.0;
  for (std::size_t r = 0; r < n; ++r) {
    const double d = v(r, col) - mean;
    ss += d * d;
  }
  return {mean, ss / static_cast<double>(n)};
}

}  // namespace

std::vector<ExpressionMatrix> split_by_dataset(const ExpressionMatrix& m) {
  if (m.dataset_tag().empty()) return {m};
  std::map<std::string, std::vector<std::size_t>> rows;
  for (std::size_t r = 0; r < m.n_samples(); ++r) rows[m.dataset_tag()[r]].push_back(r);
  std::vector<ExpressionMatrix> out;
  for (const auto& [tag, idx] : rows) out.push_back(m.select_sample_rows(idx));
  return out;
}

GeneSelection select_genes(const std::vector<ExpressionMatrix>& matrices, std::size_t k_per_dataset) {
  if (matrices.empty()) throw ValidationError("select_genes: no datasets");
  std::set<std::string> common(matrices[0].gene_ids().begin(), matrices[0].gene_ids().end());
  std::set<std::string> all = common;
  for (const auto& m : matrices) {
    if (m.stage() != Stage::log_tpm) throw ValidationError("select_genes expects log_tpm input");
    if (m.n_samples() == 0) throw ValidationError("select_genes: empty dataset");
    std::set<std::string> genes(m.gene_ids().begin(), m.gene_ids().end());
    all.insert(genes.begin(), genes.end());
    std::set<std::string> keep;
    std::set_intersection(common.begin(), common.end(), genes.begin(), genes.end(), std::inserter(keep, keep.end()));
    common = std::move(keep);
  }
  if (k_per_dataset < 1 || k_per_dataset > common.size())
    throw ValidationError("select_genes: k_per_dataset must be in [1, " + std::to_string(common.size()) + "]");

  GeneSelection result;
  std::set_difference(all.begin(), all.end(), common.begin(), common.end(), std::back_inserter(result.dropped_uncommon));

  std::set<std::string> chosen;
  for (const auto& m : matrices) {
    std::vector<std::pair<double, const std::string*>> ranked;
    ranked.reserve(common.size());
    for (const auto& g : common) ranked.emplace_back(column_moments(m.values(), *m.gene_index(g)).second, &g);
    std::partial_sort(ranked.begin(), ranked.begin() + static_cast<std::ptrdiff_t>(k_per_dataset), ranked.end(),
                      [](const auto& a, const auto& b) {
                        if (a.first != b.first) return a.first > b.first;
                        return *a.second < *b.second;
                      });
    for (std::size_t i = 0; i < k_per_dataset; ++i) chosen.insert(*ranked[i].second);
  }
  result.genes.assign(chosen.begin(), chosen.end());
  return result;
}

PreprocessModel fit_preprocess(const ExpressionMatrix& m, const std::vector<std::string>& genes,
                               std::string population_tag) {
  if (m.stage() != Stage::log_tpm) throw ValidationError("fit_preprocess expects log_tpm input");
  if (m.n_samples() == 0) throw ValidationError("fit_preprocess: no samples");
  PreprocessModel model;
  model.fit_population_tag = std::move(population_tag);
  for (const auto& g : genes) {
    auto col = m.gene_index(g);
    if (!col) throw ValidationError("fit_preprocess: gene not in matrix: " + g);
    const auto [mean, var] = column_moments(m.values(), *col);
    const double sd = std::sqrt(var);
    if (!(sd > 0.0)) {
      model.dropped_gene_ids.push_back(g);
      continue;
    }
    model.selected_gene_ids.push_back(g);
    model.per_gene_mean.push_back(mean);
    model.per_gene_sd.push_back(sd);
  }
  if (model.selected_gene_ids.empty()) throw ValidationError("fit_preprocess: all selected genes are constant");
  return model;
}

ExpressionMatrix apply_preprocess(const PreprocessModel& model, const ExpressionMatrix& m) {
  if (m.stage() != Stage::log_tpm) throw ValidationError("apply_preprocess expects log_tpm input");
  std::vector<std::size_t> cols;
  std::string missing;
  for (const auto& g : model.selected_gene_ids) {
    auto c = m.gene_index(g);
    if (!c) {
      missing += (missing.empty() ? "" : ", ") + g;
      continue;
    }
    cols.push_back(*c);
  }
  if (!missing.empty()) throw ValidationError("apply_preprocess: missing genes: " + missing);
  Matrix out(m.n_samples(), cols.size());
  for (std::size_t r = 0; r < m.n_samples(); ++r)
    for (std::size_t j = 0; j < cols.size(); ++j)
      out(r, j) = (m.values()(r, cols[j]) - model.per_gene_mean[j]) / model.per_gene_sd[j];
  return ExpressionMatrix::make(m.sample_ids(), model.selected_gene_ids, std::move(out), Stage::standardized,
                                m.tissue(), m.dataset_tag());
}

}  // namespace leap

namespace leap {

void write_preprocess(BinaryWriter& w, const PreprocessModel& model) {
  w.strs(model.selected_gene_ids);
  w.f64s(model.per_gene_mean);
  w.f64s(model.per_gene_sd);
  w.str(model.fit_population_tag);
  w.strs(model.dropped_gene_ids);
}

PreprocessModel read_preprocess(BinaryReader& r) {
  PreprocessModel m;
  m.selected_gene_ids = r.strs();
  m.per_gene_mean = r.f64s();
  m.per_gene_sd = r.f64s();
  m.fit_population_tag = r.str();
  m.dropped_gene_ids = r.strs();
  if (m.per_gene_mean.size() != m.selected_gene_ids.size() || m.per_gene_sd.size() != m.selected_gene_ids.size())
    throw ParseError("preprocess model vectors are not aligned");
  return m;
}

std::string fingerprint(const PreprocessModel& model) {
  BinaryWriter w;
  write_preprocess(w, model);
  return sha256_hex(w.bytes());
}

}  // namespace leap
