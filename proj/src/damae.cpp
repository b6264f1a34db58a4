#include "leap/damae.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <numeric>
#include <set>

#include "leap/error.hpp"

namespace leap::damae {

void DamaeConfig::validate() const {
  if (hidden_dim == 0 || latent_dim == 0) throw ValidationError("damae: layer sizes must be positive");
  if (!(mask_rate >= 0.0 && mask_rate < 1.0)) throw ValidationError("damae: mask_rate must be in [0,1)");
  if (!(noise_sd >= 0.0)) throw ValidationError("damae: noise_sd must be >= 0");
  if (!(holdout_fraction > 0.0 && holdout_fraction < 0.5))
    throw ValidationError("damae: holdout_fraction must be in (0, 0.5)");
  if (patience < 1) throw ValidationError("damae: patience must be >= 1");
  if (max_epochs < 1) throw ValidationError("damae: max_epochs must be >= 1");
  if (batch_size < 2) throw ValidationError("damae: batch_size must be >= 2");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ValidationError("damae: dropout must be in [0,1)");
  if (!(min_delta >= 0.0)) throw ValidationError("damae: min_delta must be >= 0");
}

Corruption corrupt(const Matrix& batch, double mask_rate, Rng& rng, MaskMode mode) {
  if (batch.rows() < 2) throw ValidationError("corrupt: batch needs at least 2 rows to draw donors");
  if (!(mask_rate >= 0.0 && mask_rate < 1.0)) throw ValidationError("corrupt: mask_rate must be in [0,1)");
  Corruption c{batch, Matrix(batch.rows(), batch.cols())};
  const std::size_t rows = batch.rows(), cols = batch.cols();
  if (mode == MaskMode::bernoulli) {
    for (std::size_t i = 0; i < rows; ++i)
      for (std::size_t j = 0; j < cols; ++j)
        if (rng.bernoulli(mask_rate)) c.mask(i, j) = 1.0;
  } else {
    const auto per_row = static_cast<std::size_t>(std::llround(mask_rate * static_cast<double>(cols)));
    std::vector<std::size_t> idx(cols);
    for (std::size_t i = 0; i < rows; ++i) {
      std::iota(idx.begin(), idx.end(), 0);
      // Partial Fisher-Yates: the first per_row slots form a uniform subset.
      for (std::size_t k = 0; k < per_row; ++k) std::swap(idx[k], idx[k + rng.below(cols - k)]);
      for (std::size_t k = 0; k < per_row; ++k) c.mask(i, idx[k]) = 1.0;
    }
  }
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j)
      if (c.mask(i, j) != 0.0) {
        std::size_t donor = rng.below(rows - 1);
        if (donor >= i) ++donor;
        c.corrupted(i, j) = batch(donor, j);
      }
  return c;
}

Matrix augment(const Matrix& batch, double noise_sd, Rng& rng) {
  if (!(noise_sd >= 0.0)) throw ValidationError("augment: noise_sd must be >= 0");
  Matrix out = batch;
  if (noise_sd == 0.0) return out;
  for (double& v : out.flat()) v += noise_sd * rng.normal();
  return out;
}

DamaeModel initialize(std::size_t input_dim, const DamaeConfig& config) {
  config.validate();
  if (input_dim == 0) throw ValidationError("damae: input dimension must be positive");
  using nn::Activation;
  DamaeModel m;
  m.config = config;
  m.encoder = nn::DenseNet(input_dim,
                           {{config.hidden_dim, Activation::relu, config.dropout},
                            {config.latent_dim, Activation::identity, 0.0}},
                           derive_seed(config.seed, "damae/encoder"));
  m.decoder = nn::DenseNet(config.latent_dim,
                           {{config.hidden_dim, Activation::relu, config.dropout},
                            {input_dim, Activation::identity, 0.0}},
                           derive_seed(config.seed, "damae/decoder"));
  return m;
}

Matrix reconstruct(const DamaeModel& model, const Matrix& standardized) {
  return model.decoder.predict(model.encoder.predict(standardized));
}

std::vector<std::size_t> holdout_rows(std::size_t n, const DamaeConfig& config) {
  const std::size_t n_val =
      std::min(n, std::max<std::size_t>(std::llround(config.holdout_fraction * static_cast<double>(n)), 1));
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng split_rng(derive_seed(config.seed, "damae/holdout"));
  split_rng.shuffle(order);
  std::vector<std::size_t> rows(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_val));
  std::sort(rows.begin(), rows.end());
  return rows;
}

DamaeModel train(const ExpressionMatrix& data, const DamaeConfig& config) {
  if (data.stage() != Stage::standardized) throw ValidationError("damae::train expects standardized input");
  config.validate();
  const std::size_t n = data.n_samples();
  const std::size_t n_val =
      std::max<std::size_t>(std::llround(config.holdout_fraction * static_cast<double>(n)), 1);
  if (n < n_val + 2) throw ValidationError("damae::train: too few samples for a holdout split");

  DamaeModel model = initialize(data.n_genes(), config);
  model.input_gene_ids = data.gene_ids();
  if (n < 2 * config.batch_size)
    model.log.warnings.push_back("fewer than 2 * batch_size rows (" + std::to_string(n) + ")");

  const auto val_rows = holdout_rows(n, config);
  std::vector<std::size_t> train_rows;
  for (std::size_t i = 0, v = 0; i < n; ++i) {
    if (v < val_rows.size() && val_rows[v] == i) ++v;
    else train_rows.push_back(i);
  }
  const Matrix validation = data.values().select_rows(val_rows);

  Rng shuffle_rng(derive_seed(config.seed, "damae/shuffle"));
  Rng mask_rng(derive_seed(config.seed, "damae/mask"));
  Rng noise_rng(derive_seed(config.seed, "damae/noise"));
  auto enc_opt = nn::AdamState::for_net(model.encoder, config.optimizer);
  auto dec_opt = nn::AdamState::for_net(model.decoder, config.optimizer);

  auto validation_loss = [&]() { return nn::mse_loss(reconstruct(model, validation), validation); };
  model.log.initial_validation_loss = validation_loss();

  nn::DenseNet best_encoder = model.encoder, best_decoder = model.decoder;
  double best_loss = std::numeric_limits<double>::infinity();  // strict minimum, for restoring weights
  double reference = 0.0;                                      // patience reference
  std::size_t wait = 0;

  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    shuffle_rng.shuffle(train_rows);
    // Batches of batch_size; a trailing single row joins the previous batch.
    std::vector<std::pair<std::size_t, std::size_t>> batches;
    for (std::size_t start = 0; start < train_rows.size(); start += config.batch_size)
      batches.emplace_back(start, std::min(train_rows.size(), start + config.batch_size));
    if (batches.size() > 1 && batches.back().second - batches.back().first < 2) {
      batches[batches.size() - 2].second = batches.back().second;
      batches.pop_back();
    }
    double loss_sum = 0.0;
    std::size_t entries = 0;
    for (std::size_t b = 0; b < batches.size(); ++b) {
      const auto [lo, hi] = batches[b];
      const std::vector<std::size_t> rows(train_rows.begin() + static_cast<std::ptrdiff_t>(lo),
                                          train_rows.begin() + static_cast<std::ptrdiff_t>(hi));
      const Matrix clean = data.values().select_rows(rows);
      const Matrix noisy = augment(corrupt(clean, config.mask_rate, mask_rng, config.mask_mode).corrupted,
                                   config.noise_sd, noise_rng);
      nn::ForwardCache enc_cache, dec_cache;
      const Matrix latent = model.encoder.forward(noisy, true, &enc_cache);
      const Matrix recon = model.decoder.forward(latent, true, &dec_cache);
      const double loss = nn::mse_loss(recon, clean);
      if (!std::isfinite(loss))
        throw NumericalError("damae::train: non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                             std::to_string(b));
      const auto dec_grads = model.decoder.backward(dec_cache, nn::mse_grad(recon, clean));
      const auto enc_grads = model.encoder.backward(enc_cache, dec_grads.input);
      nn::adam_step(model.decoder, dec_grads, dec_opt);
      nn::adam_step(model.encoder, enc_grads, enc_opt);
      loss_sum += loss * static_cast<double>(clean.size());
      entries += clean.size();
    }
    const double val = validation_loss();
    if (!std::isfinite(val))
      throw NumericalError("damae::train: non-finite validation loss at epoch " + std::to_string(epoch));
    model.log.epochs.push_back({loss_sum / static_cast<double>(entries), val});

    if (val < best_loss) {
      best_loss = val;
      model.log.best_epoch = epoch;
      best_encoder = model.encoder;
      best_decoder = model.decoder;
    }
    if (epoch == 1 || reference - val > config.min_delta) {
      reference = val;
      wait = 0;
    } else if (++wait >= config.patience) {
      model.log.stopped_early = true;
      break;
    }
  }
  model.encoder = std::move(best_encoder);
  model.decoder = std::move(best_decoder);
  return model;
}

ExpressionMatrix encode(const DamaeModel& model, const ExpressionMatrix& m) {
  if (m.stage() != Stage::standardized) throw ValidationError("damae::encode expects standardized input");
  if (m.n_genes() != model.encoder.input_dim())
    throw ValidationError("damae::encode: input has " + std::to_string(m.n_genes()) + " genes, model expects " +
                          std::to_string(model.encoder.input_dim()));
  if (!model.input_gene_ids.empty() && m.gene_ids() != model.input_gene_ids)
    throw ValidationError("damae::encode: gene order does not match the model");
  std::vector<std::string> dims(model.latent_dim());
  for (std::size_t i = 0; i < dims.size(); ++i) dims[i] = "latent_" + std::to_string(i);
  return ExpressionMatrix::make(m.sample_ids(), std::move(dims), model.encoder.predict(m.values()), Stage::latent,
                                m.tissue(), m.dataset_tag());
}

std::vector<DamaeModel> train_seed_ensemble(const ExpressionMatrix& data, const DamaeConfig& base,
                                            const std::vector<std::uint64_t>& seeds) {
  std::set<std::uint64_t> unique(seeds.begin(), seeds.end());
  if (unique.size() != seeds.size()) throw ValidationError("train_seed_ensemble: duplicate seeds");
  std::vector<DamaeModel> models(seeds.size());
  std::vector<std::exception_ptr> errors(seeds.size());
  const auto count = static_cast<std::ptrdiff_t>(seeds.size());
#pragma omp parallel for schedule(dynamic, 1)
  for (std::ptrdiff_t i = 0; i < count; ++i) {
    try {
      auto cfg = base;
      cfg.seed = seeds[static_cast<std::size_t>(i)];
      models[static_cast<std::size_t>(i)] = train(data, cfg);
    } catch (...) {
      errors[static_cast<std::size_t>(i)] = std::current_exception();
    }
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return models;
}

namespace {

void write_config(BinaryWriter& w, const DamaeConfig& c) {
  w.u64(c.hidden_dim);
  w.u64(c.latent_dim);
  w.f64(c.dropout);
  w.f64(c.mask_rate);
  w.u32(static_cast<std::uint32_t>(c.mask_mode));
  w.f64(c.noise_sd);
  w.u64(c.max_epochs);
  w.u64(c.patience);
  w.f64(c.min_delta);
  w.f64(c.holdout_fraction);
  w.u64(c.batch_size);
  w.f64(c.optimizer.learning_rate);
  w.f64(c.optimizer.beta1);
  w.f64(c.optimizer.beta2);
  w.f64(c.optimizer.epsilon);
  w.u64(c.seed);
}

DamaeConfig read_config(BinaryReader& r) {
  DamaeConfig c;
  c.hidden_dim = r.u64();
  c.latent_dim = r.u64();
  c.dropout = r.f64();
  c.mask_rate = r.f64();
  const auto mode = r.u32();
  if (mode > 1) throw ParseError("unknown mask mode");
  c.mask_mode = static_cast<MaskMode>(mode);
  c.noise_sd = r.f64();
  c.max_epochs = r.u64();
  c.patience = r.u64();
  c.min_delta = r.f64();
  c.holdout_fraction = r.f64();
  c.batch_size = r.u64();
  c.optimizer.learning_rate = r.f64();
  c.optimizer.beta1 = r.f64();
  c.optimizer.beta2 = r.f64();
  c.optimizer.epsilon = r.f64();
  c.seed = r.u64();
  return c;
}

}  // namespace

void write_model(BinaryWriter& w, const DamaeModel& model) {
  write_config(w, model.config);
  w.strs(model.input_gene_ids);
  w.str(model.preprocess_fingerprint);
  model.encoder.write(w);
  model.decoder.write(w);
  w.f64(model.log.initial_validation_loss);
  w.u64(model.log.epochs.size());
  for (const auto& e : model.log.epochs) {
    w.f64(e.train_loss);
    w.f64(e.validation_loss);
  }
  w.u64(model.log.best_epoch);
  w.boolean(model.log.stopped_early);
  w.strs(model.log.warnings);
}

DamaeModel read_model(BinaryReader& r) {
  DamaeModel m;
  m.config = read_config(r);
  m.input_gene_ids = r.strs();
  m.preprocess_fingerprint = r.str();
  m.encoder = nn::DenseNet::read(r);
  m.decoder = nn::DenseNet::read(r);
  if (m.encoder.output_dim() != m.decoder.input_dim()) throw ParseError("damae: encoder/decoder latent mismatch");
  m.log.initial_validation_loss = r.f64();
  const auto n = r.u64();
  for (std::uint64_t i = 0; i < n; ++i) {
    EpochRecord e;
    e.train_loss = r.f64();
    e.validation_loss = r.f64();
    m.log.epochs.push_back(e);
  }
  m.log.best_epoch = r.u64();
  m.log.stopped_early = r.boolean();
  m.log.warnings = r.strs();
  return m;
}

}  // namespace leap::damae
