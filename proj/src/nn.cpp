#include "leap/nn.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "leap/error.hpp"
#include "leap/kernels.hpp"

namespace leap::nn {

DenseNet::DenseNet(std::size_t input_dim, const std::vector<LayerSpec>& specs, std::uint64_t seed)
    : rng_(derive_seed(seed, "nn/dropout")) {
  Rng init(derive_seed(seed, "nn/init"));
  std::size_t in = input_dim;
  for (const auto& s : specs) {
    if (in == 0 || s.out_dim == 0) throw ValidationError("DenseNet: zero-sized layer");
    if (!(s.dropout >= 0.0 && s.dropout < 1.0)) throw ValidationError("DenseNet: dropout must be in [0,1)");
    DenseLayer layer;
    layer.weight = Matrix(in, s.out_dim);
    layer.bias.assign(s.out_dim, 0.0);
    layer.activation = s.activation;
    layer.dropout = s.dropout;
    const double gain = s.activation == Activation::relu ? 2.0 : 1.0;
    const double bound = std::sqrt(3.0 * gain / static_cast<double>(in));
    for (double& w : layer.weight.flat()) w = init.uniform(-bound, bound);
    layers_.push_back(std::move(layer));
    in = s.out_dim;
  }
}

std::size_t DenseNet::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers_) n += l.weight.size() + l.bias.size();
  return n;
}

namespace {

void affine_activate(const DenseLayer& layer, const Matrix& in, Matrix& pre, Matrix& out) {
  kernels::gemm_nn(in, layer.weight, pre);
  for (std::size_t r = 0; r < pre.rows(); ++r) {
    auto row = pre.row(r);
    for (std::size_t j = 0; j < row.size(); ++j) row[j] += layer.bias[j];
  }
  out = pre;
  if (layer.activation == Activation::relu)
    for (double& v : out.flat()) v = v > 0.0 ? v : 0.0;
}

}  // namespace

Matrix DenseNet::forward(const Matrix& batch, bool training, ForwardCache* cache) {
  if (batch.cols() != input_dim())
    throw ValidationError("DenseNet::forward: batch has " + std::to_string(batch.cols()) + " columns, expected " +
                          std::to_string(input_dim()));
  if (cache) {
    cache->net = this;
    cache->generation = generation_;
    cache->inputs.clear();
    cache->pre.clear();
    cache->masks.clear();
  }
  Matrix current = batch;
  for (const auto& layer : layers_) {
    Matrix pre, out;
    affine_activate(layer, current, pre, out);
    Matrix mask;
    if (training && layer.dropout > 0.0) {
      const double keep = 1.0 - layer.dropout;
      mask = Matrix(out.rows(), out.cols());
      for (double& m : mask.flat()) m = rng_.bernoulli(keep) ? 1.0 / keep : 0.0;
      auto o = out.flat();
      const auto mk = mask.flat();
      for (std::size_t i = 0; i < o.size(); ++i) o[i] *= mk[i];
    }
    if (cache) {
      cache->inputs.push_back(std::move(current));
      cache->pre.push_back(std::move(pre));
      cache->masks.push_back(std::move(mask));
    }
    current = std::move(out);
  }
  return current;
}

Matrix DenseNet::predict(const Matrix& batch) const {
  if (batch.cols() != input_dim())
    throw ValidationError("DenseNet::predict: batch has " + std::to_string(batch.cols()) + " columns, expected " +
                          std::to_string(input_dim()));
  Matrix current = batch;
  for (const auto& layer : layers_) {
    Matrix pre, out;
    affine_activate(layer, current, pre, out);
    current = std::move(out);
  }
  return current;
}

Gradients DenseNet::backward(const ForwardCache& cache, const Matrix& loss_grad) const {
  if (cache.net != this || cache.generation != generation_ || cache.pre.size() != layers_.size())
    throw ValidationError("DenseNet::backward: stale or foreign forward cache");
  if (loss_grad.rows() != cache.pre.back().rows() || loss_grad.cols() != output_dim())
    throw ValidationError("DenseNet::backward: loss gradient shape mismatch");
  Gradients g;
  g.layers.resize(layers_.size());
  Matrix delta = loss_grad;
  for (std::size_t li = layers_.size(); li-- > 0;) {
    const auto& layer = layers_[li];
    auto d = delta.flat();
    if (!cache.masks[li].empty()) {
      const auto mk = cache.masks[li].flat();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] *= mk[i];
    }
    if (layer.activation == Activation::relu) {
      const auto pre = cache.pre[li].flat();
      for (std::size_t i = 0; i < d.size(); ++i)
        if (!(pre[i] > 0.0)) d[i] = 0.0;
    }
    kernels::gemm_tn(cache.inputs[li], delta, g.layers[li].weight);
    g.layers[li].bias.assign(layer.out_dim(), 0.0);
    kernels::column_sums(delta, g.layers[li].bias);
    Matrix next;
    kernels::gemm_nt(delta, layer.weight, next);
    delta = std::move(next);
  }
  g.input = std::move(delta);
  return g;
}

void DenseNet::write(BinaryWriter& w) const {
  w.u64(layers_.size());
  for (const auto& l : layers_) {
    w.u32(static_cast<std::uint32_t>(l.activation));
    w.f64(l.dropout);
    w.matrix(l.weight);
    w.f64s(l.bias);
  }
}

DenseNet DenseNet::read(BinaryReader& r) {
  DenseNet net;
  const auto n = r.u64();
  for (std::uint64_t i = 0; i < n; ++i) {
    DenseLayer l;
    const auto act = r.u32();
    if (act > 1) throw ParseError("unknown activation code");
    l.activation = static_cast<Activation>(act);
    l.dropout = r.f64();
    l.weight = r.matrix();
    l.bias = r.f64s();
    if (l.bias.size() != l.weight.cols()) throw ParseError("layer bias/weight shape mismatch");
    if (!net.layers_.empty() && net.layers_.back().out_dim() != l.in_dim()) throw ParseError("layer dimensions do not chain");
    net.layers_.push_back(std::move(l));
  }
  return net;
}

bool DenseNet::operator==(const DenseNet& other) const {
  if (layers_.size() != other.layers_.size()) return false;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const auto& a = layers_[i];
    const auto& b = other.layers_[i];
    if (a.activation != b.activation || a.dropout != b.dropout || !(a.weight == b.weight) || a.bias != b.bias)
      return false;
  }
  return true;
}

AdamState AdamState::for_net(const DenseNet& net, AdamConfig config) {
  AdamState s;
  s.config = config;
  for (const auto& l : net.layers()) {
    s.first_moment.push_back({Matrix(l.weight.rows(), l.weight.cols()), std::vector<double>(l.bias.size(), 0.0)});
    s.second_moment.push_back({Matrix(l.weight.rows(), l.weight.cols()), std::vector<double>(l.bias.size(), 0.0)});
  }
  return s;
}

void adam_step(DenseNet& net, const Gradients& grads, AdamState& state) {
  const auto& layers = net.layers();
  if (grads.layers.size() != layers.size() || state.first_moment.size() != layers.size())
    throw ValidationError("adam_step: gradient/optimizer shape mismatch");
  for (std::size_t li = 0; li < layers.size(); ++li) {
    const auto& g = grads.layers[li];
    if (g.weight.rows() != layers[li].weight.rows() || g.weight.cols() != layers[li].weight.cols() ||
        g.bias.size() != layers[li].bias.size())
      throw ValidationError("adam_step: gradient shape mismatch in layer " + std::to_string(li));
    for (double v : g.weight.flat())
      if (!std::isfinite(v)) throw NumericalError("adam_step: non-finite weight gradient in layer " + std::to_string(li));
    for (double v : g.bias)
      if (!std::isfinite(v)) throw NumericalError("adam_step: non-finite bias gradient in layer " + std::to_string(li));
  }
  const auto& c = state.config;
  ++state.step_count;
  const double t = static_cast<double>(state.step_count);
  const double corr1 = 1.0 - std::pow(c.beta1, t);
  const double corr2 = 1.0 - std::pow(c.beta2, t);
  auto update = [&](std::span<double> p, std::span<const double> g, std::span<double> m, std::span<double> v) {
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g[i];
      v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g[i] * g[i];
      const double mhat = m[i] / corr1;
      const double vhat = v[i] / corr2;
      p[i] -= c.learning_rate * mhat / (std::sqrt(vhat) + c.epsilon);
    }
  };
  auto& mut = net.mutable_layers();
  for (std::size_t li = 0; li < mut.size(); ++li) {
    update(mut[li].weight.flat(), grads.layers[li].weight.flat(), state.first_moment[li].weight.flat(),
           state.second_moment[li].weight.flat());
    update(mut[li].bias, grads.layers[li].bias, state.first_moment[li].bias, state.second_moment[li].bias);
  }
}

double mse_loss(const Matrix& prediction, const Matrix& target) {
  if (prediction.rows() != target.rows() || prediction.cols() != target.cols())
    throw ValidationError("mse_loss: shape mismatch");
  const auto p = prediction.flat();
  const auto t = target.flat();
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) s += (p[i] - t[i]) * (p[i] - t[i]);
  return s / static_cast<double>(p.size());
}

Matrix mse_grad(const Matrix& prediction, const Matrix& target) {
  if (prediction.rows() != target.rows() || prediction.cols() != target.cols())
    throw ValidationError("mse_grad: shape mismatch");
  Matrix g(prediction.rows(), prediction.cols());
  const double scale = 2.0 / static_cast<double>(prediction.size());
  const auto p = prediction.flat();
  const auto t = target.flat();
  auto out = g.flat();
  for (std::size_t i = 0; i < p.size(); ++i) out[i] = scale * (p[i] - t[i]);
  return g;
}

double grad_check(DenseNet& net, const Matrix& batch, const Matrix& target, const GradCheckOptions& options) {
  ForwardCache cache;
  const Matrix out = net.forward(batch, false, &cache);
  Gradients analytic = net.backward(cache, mse_grad(out, target));
  if (options.mutate_analytic) options.mutate_analytic(analytic);

  // Flat addressing of (layer, is_bias, index).
  struct Slot {
    std::size_t layer;
    bool bias;
    std::size_t index;
  };
  std::vector<Slot> slots;
  for (std::size_t li = 0; li < net.layers().size(); ++li) {
    for (std::size_t i = 0; i < net.layers()[li].weight.size(); ++i) slots.push_back({li, false, i});
    for (std::size_t i = 0; i < net.layers()[li].bias.size(); ++i) slots.push_back({li, true, i});
  }
  if (options.max_params > 0 && options.max_params < slots.size()) {
    Rng rng(derive_seed(options.seed, "nn/grad-check"));
    rng.shuffle(slots);
    slots.resize(options.max_params);
  }

  double worst = 0.0;
  for (const auto& s : slots) {
    auto param = [&]() -> double& {
      auto& l = net.mutable_layers()[s.layer];
      return s.bias ? l.bias[s.index] : l.weight.flat()[s.index];
    };
    const double original = param();
    param() = original + options.step;
    const double plus = mse_loss(net.predict(batch), target);
    param() = original - options.step;
    const double minus = mse_loss(net.predict(batch), target);
    param() = original;
    const double numeric = (plus - minus) / (2.0 * options.step);
    const auto& g = analytic.layers[s.layer];
    const double a = s.bias ? g.bias[s.index] : g.weight.flat()[s.index];
    const double rel = std::abs(a - numeric) / std::max(std::abs(a) + std::abs(numeric), 1e-6);
    worst = std::max(worst, rel);
  }
  return worst;
}

}  // namespace leap::nn
