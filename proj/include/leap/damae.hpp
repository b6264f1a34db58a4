#pragma once

// Data-augmented masked autoencoder: VIME-style corruption plus Gaussian
// noise on each batch, trained to reconstruct the clean batch, with
// holdout-based early stopping.

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "leap/dataset.hpp"
#include "leap/nn.hpp"
#include "leap/rng.hpp"

namespace leap::damae {

enum class MaskMode : std::uint32_t {
  bernoulli = 0,    // each entry masked independently with probability mask_rate
  exact_count = 1,  // round(mask_rate * cols) entries masked in every row
};

struct DamaeConfig {
  std::size_t hidden_dim = 512;
  std::size_t latent_dim = 256;
  double dropout = 0.2;
  double mask_rate = 0.3;
  MaskMode mask_mode = MaskMode::bernoulli;
  double noise_sd = 0.01;
  std::size_t max_epochs = 3000;
  std::size_t patience = 20;
  double min_delta = 1e-5;
  double holdout_fraction = 0.1;
  std::size_t batch_size = 128;
  nn::AdamConfig optimizer;
  std::uint64_t seed = 0;

  void validate() const;
};

struct EpochRecord {
  double train_loss = 0.0;
  double validation_loss = 0.0;
};

struct TrainingLog {
  double initial_validation_loss = 0.0;  // before the first update
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;  // 1-based index into epochs
  bool stopped_early = false;
  std::vector<std::string> warnings;

  double best_validation_loss() const { return epochs.at(best_epoch - 1).validation_loss; }
};

struct DamaeModel {
  nn::DenseNet encoder;  // input -> hidden -> latent
  nn::DenseNet decoder;  // latent -> hidden -> input
  DamaeConfig config;
  std::vector<std::string> input_gene_ids;
  std::string preprocess_fingerprint;
  TrainingLog log;

  std::size_t latent_dim() const { return encoder.output_dim(); }
};

struct Corruption {
  Matrix corrupted;
  Matrix mask;  // 1 where the entry was replaced
};

/// Replaces masked entries by the same column of a uniformly drawn other row.
Corruption corrupt(const Matrix& batch, double mask_rate, Rng& rng, MaskMode mode = MaskMode::bernoulli);

/// batch + iid N(0, noise_sd^2).
Matrix augment(const Matrix& batch, double noise_sd, Rng& rng);

/// Builds the untrained encoder/decoder pair for the given shape.
DamaeModel initialize(std::size_t input_dim, const DamaeConfig& config);

/// Early-stopping validation rows (sorted), round(holdout_fraction * n) and at least 1.
std::vector<std::size_t> holdout_rows(std::size_t n, const DamaeConfig& config);

DamaeModel train(const ExpressionMatrix& data, const DamaeConfig& config);

/// Latent embedding (stage=latent), dropout off.
ExpressionMatrix encode(const DamaeModel& model, const ExpressionMatrix& m);
Matrix reconstruct(const DamaeModel& model, const Matrix& standardized);

/// One model per seed on the same data; seeds run in parallel.
std::vector<DamaeModel> train_seed_ensemble(const ExpressionMatrix& data, const DamaeConfig& base,
                                            const std::vector<std::uint64_t>& seeds);

void write_model(BinaryWriter& w, const DamaeModel& model);
DamaeModel read_model(BinaryReader& r);

}  // namespace leap::damae
