#pragma once

// Small dense feed-forward network with analytic gradients, Adam, and a
// central-difference gradient checker. All arithmetic is 64-bit.

#include <cstdint>
#include <functional>
#include <vector>

#include "leap/matrix.hpp"
#include "leap/rng.hpp"
#include "leap/serialize.hpp"

namespace leap::nn {

enum class Activation : std::uint32_t { relu = 0, identity = 1 };

struct LayerSpec {
  std::size_t out_dim;
  Activation activation;
  double dropout = 0.0;  // applied to the layer's output while training
};

struct DenseLayer {
  Matrix weight;  // in x out
  std::vector<double> bias;
  Activation activation = Activation::identity;
  double dropout = 0.0;

  std::size_t in_dim() const { return weight.rows(); }
  std::size_t out_dim() const { return weight.cols(); }
};

struct LayerGrad {
  Matrix weight;
  std::vector<double> bias;
};

struct Gradients {
  std::vector<LayerGrad> layers;
  Matrix input;  // d loss / d input batch
};

class DenseNet;

/// Everything backward() needs from one forward pass.
struct ForwardCache {
  const DenseNet* net = nullptr;
  std::uint64_t generation = 0;
  std::vector<Matrix> inputs;  // input to each layer
  std::vector<Matrix> pre;     // pre-activation of each layer
  std::vector<Matrix> masks;   // scaled keep-masks; empty when no dropout was applied
};

class DenseNet {
 public:
  DenseNet() = default;
  // Kaiming-uniform weights (fan-in), zero biases.
  DenseNet(std::size_t input_dim, const std::vector<LayerSpec>& layers, std::uint64_t seed);

  std::size_t input_dim() const { return layers_.empty() ? 0 : layers_.front().in_dim(); }
  std::size_t output_dim() const { return layers_.empty() ? 0 : layers_.back().out_dim(); }
  std::size_t parameter_count() const;

  const std::vector<DenseLayer>& layers() const { return layers_; }
  // Mutable access invalidates outstanding caches.
  std::vector<DenseLayer>& mutable_layers() {
    ++generation_;
    return layers_;
  }
  std::uint64_t generation() const { return generation_; }

  /// Forward pass. With training=true, inverted dropout draws masks from the
  /// net's own generator. Pass a cache to enable backward().
  Matrix forward(const Matrix& batch, bool training, ForwardCache* cache = nullptr);
  Matrix predict(const Matrix& batch) const;

  Gradients backward(const ForwardCache& cache, const Matrix& loss_grad) const;

  void write(BinaryWriter& w) const;
  static DenseNet read(BinaryReader& r);

  bool operator==(const DenseNet& other) const;

 private:
  std::vector<DenseLayer> layers_;
  Rng rng_;
  std::uint64_t generation_ = 0;
};

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  AdamConfig config;
  std::uint64_t step_count = 0;
  std::vector<LayerGrad> first_moment;
  std::vector<LayerGrad> second_moment;

  static AdamState for_net(const DenseNet& net, AdamConfig config);
};

/// One bias-corrected Adam update. Throws NumericalError on a non-finite gradient.
void adam_step(DenseNet& net, const Gradients& grads, AdamState& state);

/// Mean squared error over all entries and its gradient w.r.t. prediction.
double mse_loss(const Matrix& prediction, const Matrix& target);
Matrix mse_grad(const Matrix& prediction, const Matrix& target);

struct GradCheckOptions {
  double step = 1e-4;
  // 0 checks every parameter; otherwise a seeded sample of this many.
  std::size_t max_params = 0;
  std::uint64_t seed = 0;
  // Lets tests corrupt the analytic gradients before comparison.
  std::function<void(Gradients&)> mutate_analytic;
};

/// Max relative error |a - n| / max(|a| + |n|, 1e-6) between analytic and
/// central-difference gradients of the MSE loss. Dropout is not applied.
double grad_check(DenseNet& net, const Matrix& batch, const Matrix& target, const GradCheckOptions& options = {});

}  // namespace leap::nn
