#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "leap/matrix.hpp"

namespace leap {

enum class Stage { raw_tpm, log_tpm, standardized, latent };

const char* to_string(Stage s);

/// Samples x genes expression values with per-sample annotations.
///
/// Construct through ExpressionMatrix::make, which validates the invariants
/// (unique ids, matching shape, finite values, non-negative raw TPM).
class ExpressionMatrix {
 public:
  ExpressionMatrix() = default;

  static ExpressionMatrix make(std::vector<std::string> sample_ids, std::vector<std::string> gene_ids,
                               Matrix values, Stage stage, std::vector<std::string> tissue = {},
                               std::vector<std::string> dataset_tag = {});

  const std::vector<std::string>& sample_ids() const { return sample_ids_; }
  const std::vector<std::string>& gene_ids() const { return gene_ids_; }
  const Matrix& values() const { return values_; }
  // Empty when the annotation is absent.
  const std::vector<std::string>& tissue() const { return tissue_; }
  const std::vector<std::string>& dataset_tag() const { return dataset_tag_; }
  Stage stage() const { return stage_; }

  std::size_t n_samples() const { return sample_ids_.size(); }
  std::size_t n_genes() const { return gene_ids_.size(); }
  bool has_tissue() const { return !tissue_.empty(); }

  std::optional<std::size_t> sample_index(const std::string& id) const;
  std::optional<std::size_t> gene_index(const std::string& id) const;

  ExpressionMatrix select_samples(const std::vector<std::string>& ids) const;
  ExpressionMatrix select_sample_rows(const std::vector<std::size_t>& rows) const;
  ExpressionMatrix with_annotations(std::vector<std::string> tissue, std::vector<std::string> dataset_tag) const;

 private:
  std::vector<std::string> sample_ids_;
  std::vector<std::string> gene_ids_;
  Matrix values_;
  std::vector<std::string> tissue_;
  std::vector<std::string> dataset_tag_;
  Stage stage_ = Stage::raw_tpm;
  std::unordered_map<std::string, std::size_t> sample_pos_;
  std::unordered_map<std::string, std::size_t> gene_pos_;
};

struct ResponseRecord {
  std::string sample_id;
  std::string perturbation_id;
  double value = 0.0;
  std::string study_tag;

  bool operator==(const ResponseRecord&) const = default;
};

/// Sparse (sample, perturbation) observations.
struct ResponseTable {
  std::vector<ResponseRecord> records;

  bool operator==(const ResponseTable&) const = default;

  void validate() const;
  // Distinct perturbation ids in lexicographic order.
  std::vector<std::string> perturbations() const;
  ResponseTable restrict_samples(const std::vector<std::string>& sample_ids) const;
};

struct Prediction {
  std::string sample_id;
  std::string perturbation_id;
  double value = 0.0;

  bool operator==(const Prediction&) const = default;
};

/// Predicted responses, one per requested (sample, perturbation) pair.
struct PredictionTable {
  std::vector<Prediction> records;

  bool operator==(const PredictionTable&) const = default;
};

// --- curation -------------------------------------------------------------

/// Collapses duplicate (study, sample, perturbation) records to their median.
ResponseTable aggregate_within_study(const ResponseTable& table);

/// Keeps, per (sample, perturbation), only the record of the highest-priority study.
ResponseTable dedup_across_studies(const ResponseTable& table, const std::vector<std::string>& priority);

/// Drops perturbations observed in fewer than min_samples distinct samples or,
/// when min_label_sd is set, whose population sd is not strictly above it.
ResponseTable filter_perturbations(const ResponseTable& table, std::size_t min_samples,
                                   std::optional<double> min_label_sd);

// Median with the even-count convention (mean of the two middle values).
double median(std::vector<double> values);

// --- synthetic data ---------------------------------------------------------

struct SyntheticSpec {
  std::size_t n_samples = 300;
  std::size_t n_genes = 200;
  std::size_t n_latent = 16;
  std::size_t n_perturbations = 20;
  std::size_t n_tissues = 3;
  double signal_r2 = 0.5;
  double noise_sd_expression = 0.5;
  // Fraction of (sample, perturbation) labels left unobserved.
  double label_missing_rate = 0.0;
  // Expected number of nonzero coefficients per perturbation.
  std::size_t active_latents = 4;
  std::uint64_t seed = 0;

  void validate() const;
};

struct SyntheticData {
  ExpressionMatrix expression;  // raw_tpm, with tissue and dataset_tag
  ResponseTable responses;
  Matrix latent;                // n_samples x n_latent, tissue offsets included
  Matrix coefficients;          // n_perturbations x n_latent
};

SyntheticData generate_synthetic(const SyntheticSpec& spec);

}  // namespace leap
