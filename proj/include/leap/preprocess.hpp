#pragma once

#include <string>
#include <vector>

#include "leap/dataset.hpp"

namespace leap {

/// Per-gene standardization statistics fitted on a reference population.
struct PreprocessModel {
  std::vector<std::string> selected_gene_ids;
  std::vector<double> per_gene_mean;
  std::vector<double> per_gene_sd;
  std::string fit_population_tag;
  // Genes excluded at fit time because they were constant.
  std::vector<std::string> dropped_gene_ids;

  bool operator==(const PreprocessModel&) const = default;
};

/// x -> log2(x + 1); input must be raw TPM.
ExpressionMatrix log_transform(const ExpressionMatrix& m);

struct GeneSelection {
  std::vector<std::string> genes;  // sorted lexicographically
  // Genes absent from at least one dataset, excluded before ranking.
  std::vector<std::string> dropped_uncommon;
};

/// Union of the top-k most variable genes of each dataset.
///
/// Genes are first intersected across datasets. Variance uses the population
/// denominator; ties at the cut-off go to the lexicographically smaller id.
GeneSelection select_genes(const std::vector<ExpressionMatrix>& matrices, std::size_t k_per_dataset);

/// Splits a matrix into one block per dataset_tag (a single block when untagged).
std::vector<ExpressionMatrix> split_by_dataset(const ExpressionMatrix& m);

PreprocessModel fit_preprocess(const ExpressionMatrix& m, const std::vector<std::string>& genes,
                               std::string population_tag = "");

/// (x - mean) / sd per selected gene, columns in model order.
ExpressionMatrix apply_preprocess(const PreprocessModel& model, const ExpressionMatrix& m);

}  // namespace leap

#include "leap/serialize.hpp"

namespace leap {

void write_preprocess(BinaryWriter& w, const PreprocessModel& model);
PreprocessModel read_preprocess(BinaryReader& r);
// Content hash identifying a fitted preprocess model.
std::string fingerprint(const PreprocessModel& model);

}  // namespace leap
