#include <gtest/gtest.h>

#include "leap/error.hpp"
#include "leap/preprocess.hpp"
#include "oracles.hpp"

using namespace leap;

namespace {

ExpressionMatrix make(const Matrix& v, Stage stage, const std::string& prefix = "G") {
  std::vector<std::string> s, g;
  for (std::size_t i = 0; i < v.rows(); ++i) s.push_back("S" + std::to_string(i));
  for (std::size_t j = 0; j < v.cols(); ++j) g.push_back(prefix + std::to_string(100 + j));
  return ExpressionMatrix::make(s, g, v, stage);
}

TEST(LogTransform, KnownValues) {
  auto m = log_transform(make(Matrix(1, 3, {0, 1, 1023}), Stage::raw_tpm));
  EXPECT_EQ(m.values()(0, 0), 0.0);
  EXPECT_EQ(m.values()(0, 1), 1.0);
  EXPECT_NEAR(m.values()(0, 2), 10.0, 1e-12);
  EXPECT_EQ(m.stage(), Stage::log_tpm);
  EXPECT_THROW(log_transform(m), ValidationError);
}

TEST(SelectGenes, AllAndIdentical) {
  auto m = make(oracle::random_matrix(20, 8, 1), Stage::log_tpm);
  EXPECT_EQ(select_genes({m}, 8).genes, m.gene_ids());
  EXPECT_EQ(select_genes({m, m}, 3).genes.size(), 3u);
}

TEST(SelectGenes, MatchesSortOracle) {
  std::vector<ExpressionMatrix> sets;
  for (std::uint64_t s = 0; s < 3; ++s) {
    Matrix v = oracle::random_matrix(30, 120, 10 + s);
    Rng rng(s);
    for (std::size_t j = 0; j < v.cols(); ++j) {
      const double scale = rng.uniform(0.1, 3.0);
      for (std::size_t i = 0; i < v.rows(); ++i) v(i, j) *= scale;
    }
    sets.push_back(make(v, Stage::log_tpm));
  }
  std::set<std::string> expected;
  for (const auto& m : sets) {
    std::vector<std::pair<double, std::string>> var;
    for (std::size_t j = 0; j < m.n_genes(); ++j) var.push_back({-oracle::population_variance(m.values().column(j)), m.gene_ids()[j]});
    std::sort(var.begin(), var.end());
    for (std::size_t k = 0; k < 50; ++k) expected.insert(var[k].second);
  }
  auto got = select_genes(sets, 50).genes;
  EXPECT_EQ(got, std::vector<std::string>(expected.begin(), expected.end()));
}

TEST(SelectGenes, DropsGenesMissingFromADataset) {
  auto a = make(oracle::random_matrix(5, 4, 1), Stage::log_tpm);
  auto b = ExpressionMatrix::make({"T1", "T2"}, {"G100", "G101", "X"}, oracle::random_matrix(2, 3, 2), Stage::log_tpm);
  auto sel = select_genes({a, b}, 2);
  EXPECT_THROW(select_genes({a, b}, 3), ValidationError);
  EXPECT_EQ(sel.genes, (std::vector<std::string>{"G100", "G101"}));
  EXPECT_EQ(sel.dropped_uncommon, (std::vector<std::string>{"G102", "G103", "X"}));
}

TEST(Fit, ConstantDroppedAndPopulationSd) {
  auto m = make(Matrix(3, 2, {1, 0, 1, 2, 1, 1}), Stage::log_tpm);
  auto model = fit_preprocess(m, m.gene_ids());
  EXPECT_EQ(model.selected_gene_ids, std::vector<std::string>{"G101"});
  EXPECT_EQ(model.dropped_gene_ids, std::vector<std::string>{"G100"});
  EXPECT_DOUBLE_EQ(model.per_gene_mean[0], 1.0);
  EXPECT_NEAR(model.per_gene_sd[0], std::sqrt(2.0 / 3.0), 1e-15);
  auto two = make(Matrix(2, 1, {0, 2}), Stage::log_tpm);
  auto m2 = fit_preprocess(two, two.gene_ids());
  EXPECT_DOUBLE_EQ(m2.per_gene_mean[0], 1.0);
  EXPECT_DOUBLE_EQ(m2.per_gene_sd[0], 1.0);
  auto flat = make(Matrix(3, 1, {4, 4, 4}), Stage::log_tpm);
  EXPECT_THROW(fit_preprocess(flat, flat.gene_ids()), ValidationError);
}

TEST(Fit, MatchesTwoPassAndStandardizes) {
  auto m = make(oracle::random_matrix(40, 15, 3, 5.0), Stage::log_tpm);
  auto model = fit_preprocess(m, m.gene_ids());
  for (std::size_t j = 0; j < m.n_genes(); ++j) {
    const auto col = m.values().column(j);
    double mean = 0;
    for (double v : col) mean += v;
    mean /= double(col.size());
    EXPECT_NEAR(model.per_gene_mean[j], mean, 1e-12);
    EXPECT_NEAR(model.per_gene_sd[j], std::sqrt(oracle::population_variance(col)), 1e-12);
  }
  auto z = apply_preprocess(model, m);
  for (std::size_t j = 0; j < z.n_genes(); ++j) {
    const auto col = z.values().column(j);
    double mean = 0;
    for (double v : col) mean += v;
    EXPECT_NEAR(mean / double(col.size()), 0.0, 1e-10);
    EXPECT_NEAR(oracle::population_variance(col), 1.0, 1e-10);
  }
  auto unseen = make(oracle::random_matrix(7, 15, 4), Stage::log_tpm);
  auto zu = apply_preprocess(model, unseen);
  for (std::size_t i = 0; i < 7; ++i)
    for (std::size_t j = 0; j < 15; ++j)
      EXPECT_EQ(zu.values()(i, j), (unseen.values()(i, j) - model.per_gene_mean[j]) / model.per_gene_sd[j]);
  Matrix at_mean(1, 15);
  for (std::size_t j = 0; j < 15; ++j) at_mean(0, j) = model.per_gene_mean[j];
  const auto zero = apply_preprocess(model, make(at_mean, Stage::log_tpm));
  for (double v : zero.values().flat()) EXPECT_EQ(v, 0.0);
}

TEST(Apply, MissingGenesNamed) {
  auto m = make(oracle::random_matrix(5, 3, 1), Stage::log_tpm);
  auto model = fit_preprocess(m, m.gene_ids());
  auto other = make(oracle::random_matrix(2, 2, 2), Stage::log_tpm);
  try {
    apply_preprocess(model, other);
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("G102"), std::string::npos) << e.what();
  }
}

TEST(Serialize, PreprocessRoundTripAndFingerprint) {
  auto m = make(oracle::random_matrix(9, 6, 8), Stage::log_tpm);
  auto model = fit_preprocess(m, m.gene_ids(), "full");
  BinaryWriter w;
  write_preprocess(w, model);
  BinaryReader r(w.bytes());
  EXPECT_EQ(read_preprocess(r), model);
  auto other = model;
  other.per_gene_mean[0] += 1e-9;
  EXPECT_NE(fingerprint(model), fingerprint(other));
}

}  // namespace
