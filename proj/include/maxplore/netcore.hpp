#pragma once

// Minimal feed-forward network with hand-rolled backpropagation, three loss
// heads (gaussian NLL, cross-entropy, huber) and adaptive-gradient optimizers.
// Parameters are plain doubles; training is bitwise deterministic given seed,
// data order and config.

#include <cmath>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "maxplore/common.hpp"
#include "maxplore/divergence.hpp"

namespace maxplore {

enum class Activation : std::uint32_t { tanh_fn = 0, swish = 1 };
enum class HeadKind : std::uint32_t { linear = 0, categorical_logits = 1, gaussian_diag = 2 };
enum class LossKind { nll_gaussian, cross_entropy, huber };

struct MlpSpec {
  int input_dim = 0;
  std::vector<int> hidden;
  int output_dim = 0;  // classes (categorical), values (linear) or state dims (gaussian)
  Activation activation = Activation::tanh_fn;
  HeadKind head = HeadKind::linear;
  double logvar_lo = std::log(1e-8);
  double logvar_hi = 0.0;  // ln(1.0), normalized state units

  int raw_output_dim() const {
    return head == HeadKind::gaussian_diag ? 2 * output_dim : output_dim;
  }

  std::vector<int> layer_dims() const {
    std::vector<int> dims;
    dims.push_back(input_dim);
    for (int h : hidden) dims.push_back(h);
    dims.push_back(raw_output_dim());
    return dims;
  }

  void validate() const {
    if (input_dim <= 0 || output_dim <= 0)
      throw ValidationError("MlpSpec: input and output dims must be positive");
    for (int h : hidden) {
      if (h <= 0) throw ValidationError("MlpSpec: hidden widths must be positive");
    }
    if (!(logvar_lo <= logvar_hi))
      throw ValidationError("MlpSpec: logvar_lo must not exceed logvar_hi");
  }
};

enum class OptimizerKind { adam, rmsprop_momentum };

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::adam;
  double learning_rate = 1e-3;
  double weight_decay = 0.0;
  double grad_clip = 0.0;  // global L2 norm cap; 0 disables
  double momentum = 0.9;   // rmsprop only
  double rmsprop_alpha = 0.99;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double eps = 1e-8;

  void validate() const {
    if (!(learning_rate > 0.0)) throw ValidationError("OptimizerConfig: learning rate must be > 0");
    if (weight_decay < 0.0) throw ValidationError("OptimizerConfig: weight decay must be >= 0");
    if (grad_clip < 0.0) throw ValidationError("OptimizerConfig: grad clip must be >= 0 (0 = off)");
  }
};

// Per-parameter moment state; one instance per trained network.
class Optimizer {
 public:
  explicit Optimizer(OptimizerConfig cfg) : cfg_(cfg) { cfg_.validate(); }

  const OptimizerConfig& config() const { return cfg_; }

  void apply(std::vector<double>& params, std::vector<double>& grads) {
    if (m_.size() != params.size()) {
      m_.assign(params.size(), 0.0);
      v_.assign(params.size(), 0.0);
      step_ = 0;
    }
    if (cfg_.weight_decay > 0.0) {
      for (std::size_t i = 0; i < params.size(); ++i) grads[i] += cfg_.weight_decay * params[i];
    }
    if (cfg_.grad_clip > 0.0) {
      double sq = 0.0;
      for (double g : grads) sq += g * g;
      const double norm = std::sqrt(sq);
      if (norm > cfg_.grad_clip) {
        const double scale = cfg_.grad_clip / norm;
        for (double& g : grads) g *= scale;
      }
    }
    ++step_;
    switch (cfg_.kind) {
      case OptimizerKind::adam: {
        const double bc1 = 1.0 - std::pow(cfg_.adam_beta1, static_cast<double>(step_));
        const double bc2 = 1.0 - std::pow(cfg_.adam_beta2, static_cast<double>(step_));
        for (std::size_t i = 0; i < params.size(); ++i) {
          m_[i] = cfg_.adam_beta1 * m_[i] + (1.0 - cfg_.adam_beta1) * grads[i];
          v_[i] = cfg_.adam_beta2 * v_[i] + (1.0 - cfg_.adam_beta2) * grads[i] * grads[i];
          params[i] -= cfg_.learning_rate * (m_[i] / bc1) / (std::sqrt(v_[i] / bc2) + cfg_.eps);
        }
        break;
      }
      case OptimizerKind::rmsprop_momentum: {
        for (std::size_t i = 0; i < params.size(); ++i) {
          v_[i] = cfg_.rmsprop_alpha * v_[i] + (1.0 - cfg_.rmsprop_alpha) * grads[i] * grads[i];
          m_[i] = cfg_.momentum * m_[i] + grads[i] / (std::sqrt(v_[i]) + cfg_.eps);
          params[i] -= cfg_.learning_rate * m_[i];
        }
        break;
      }
    }
  }

 private:
  OptimizerConfig cfg_;
  std::vector<double> m_;
  std::vector<double> v_;
  std::uint64_t step_ = 0;
};

class Mlp {
 public:
  Mlp(MlpSpec spec, std::uint64_t seed) : spec_(std::move(spec)) {
    spec_.validate();
    dims_ = spec_.layer_dims();
    std::size_t count = 0;
    for (std::size_t l = 0; l + 1 < dims_.size(); ++l) {
      offsets_.push_back(count);
      count += static_cast<std::size_t>(dims_[l + 1]) * dims_[l] + dims_[l + 1];
    }
    params_.assign(count, 0.0);
    Rng rng(seed);
    glorot_init(rng);
  }

  const MlpSpec& spec() const { return spec_; }
  std::vector<double>& params() { return params_; }
  const std::vector<double>& params() const { return params_; }
  std::size_t param_count() const { return params_.size(); }

  void zero_params() { std::fill(params_.begin(), params_.end(), 0.0); }

  void reinitialize(std::uint64_t seed) {
    Rng rng(seed);
    glorot_init(rng);
  }

  // Raw pre-head outputs (logits / values / [mean, logvar-unclamped]).
  std::vector<double> forward_raw(std::span<const double> input) const {
    check_input(input);
    std::vector<double> cur(input.begin(), input.end());
    std::size_t off = 0;
    for (std::size_t l = 0; l + 1 < dims_.size(); ++l) {
      const int in = dims_[l];
      const int out = dims_[l + 1];
      std::vector<double> next(static_cast<std::size_t>(out));
      for (int o = 0; o < out; ++o) {
        const double* w = &params_[off + static_cast<std::size_t>(o) * in];
        double acc = params_[off + static_cast<std::size_t>(out) * in + o];
        for (int i = 0; i < in; ++i) acc += w[i] * cur[i];
        next[o] = acc;
      }
      off += static_cast<std::size_t>(out) * in + out;
      const bool last = (l + 2 == dims_.size());
      if (!last) {
        for (double& x : next) x = activate(x);
      }
      cur = std::move(next);
    }
    return cur;
  }

  std::vector<double> forward_linear(std::span<const double> input) const {
    if (spec_.head != HeadKind::linear) throw ValidationError("forward_linear: head mismatch");
    return forward_raw(input);
  }

  CategoricalDist forward_categorical(std::span<const double> input) const {
    if (spec_.head != HeadKind::categorical_logits)
      throw ValidationError("forward_categorical: head mismatch");
    CategoricalDist d;
    d.probs = softmax(forward_raw(input));
    return d;
  }

  GaussianDiag forward_gaussian(std::span<const double> input) const {
    if (spec_.head != HeadKind::gaussian_diag)
      throw ValidationError("forward_gaussian: head mismatch");
    const auto raw = forward_raw(input);
    GaussianDiag g;
    const int d = spec_.output_dim;
    g.mean.assign(raw.begin(), raw.begin() + d);
    g.var.resize(d);
    for (int k = 0; k < d; ++k) g.var[k] = std::exp(clamp_logvar(raw[d + k]));
    return g;
  }

  double batch_loss(const std::vector<std::vector<double>>& inputs,
                    const std::vector<std::vector<double>>& targets, LossKind loss) const {
    return run_batch(inputs, &targets, nullptr, loss, nullptr);
  }

  double batch_loss(const std::vector<std::vector<double>>& inputs,
                    const std::vector<int>& class_targets, LossKind loss) const {
    return run_batch(inputs, nullptr, &class_targets, loss, nullptr);
  }

  std::vector<double> batch_gradient(const std::vector<std::vector<double>>& inputs,
                                     const std::vector<std::vector<double>>& targets,
                                     LossKind loss) const {
    std::vector<double> g(params_.size(), 0.0);
    run_batch(inputs, &targets, nullptr, loss, &g);
    return g;
  }

  std::vector<double> batch_gradient(const std::vector<std::vector<double>>& inputs,
                                     const std::vector<int>& class_targets, LossKind loss) const {
    std::vector<double> g(params_.size(), 0.0);
    run_batch(inputs, nullptr, &class_targets, loss, &g);
    return g;
  }

  // One optimizer step; returns the pre-update mean batch loss.
  double train_step(const std::vector<std::vector<double>>& inputs,
                    const std::vector<std::vector<double>>& targets, LossKind loss,
                    Optimizer& opt) {
    std::vector<double> g(params_.size(), 0.0);
    const double l = run_batch(inputs, &targets, nullptr, loss, &g);
    opt.apply(params_, g);
    return l;
  }

  double train_step(const std::vector<std::vector<double>>& inputs,
                    const std::vector<int>& class_targets, LossKind loss, Optimizer& opt) {
    std::vector<double> g(params_.size(), 0.0);
    const double l = run_batch(inputs, nullptr, &class_targets, loss, &g);
    opt.apply(params_, g);
    return l;
  }

  // Binary layout (little-endian):
  //   char[8]  "MXNET001"
  //   u32      activation, head
  //   u32      n_dims, dims[n_dims]        (input, hidden..., output_dim)
  //   f64      logvar_lo, logvar_hi
  //   u64      param_count
  //   f64      params[param_count]
  void save(std::ostream& os) const {
    os.write("MXNET001", 8);
    write_u32(os, static_cast<std::uint32_t>(spec_.activation));
    write_u32(os, static_cast<std::uint32_t>(spec_.head));
    write_u32(os, static_cast<std::uint32_t>(spec_.hidden.size() + 2));
    write_u32(os, static_cast<std::uint32_t>(spec_.input_dim));
    for (int h : spec_.hidden) write_u32(os, static_cast<std::uint32_t>(h));
    write_u32(os, static_cast<std::uint32_t>(spec_.output_dim));
    write_f64(os, spec_.logvar_lo);
    write_f64(os, spec_.logvar_hi);
    const std::uint64_t n = params_.size();
    os.write(reinterpret_cast<const char*>(&n), sizeof(n));
    os.write(reinterpret_cast<const char*>(params_.data()),
             static_cast<std::streamsize>(n * sizeof(double)));
    if (!os) throw StateError("Mlp::save: stream failure");
  }

  static Mlp load(std::istream& is) {
    char magic[8];
    is.read(magic, 8);
    if (!is || std::memcmp(magic, "MXNET001", 8) != 0)
      throw ValidationError("Mlp::load: bad magic");
    MlpSpec spec;
    spec.activation = static_cast<Activation>(read_u32(is));
    spec.head = static_cast<HeadKind>(read_u32(is));
    const std::uint32_t ndims = read_u32(is);
    if (ndims < 2) throw ValidationError("Mlp::load: bad layer count");
    std::vector<int> dims(ndims);
    for (auto& d : dims) d = static_cast<int>(read_u32(is));
    spec.input_dim = dims.front();
    spec.output_dim = dims.back();
    spec.hidden.assign(dims.begin() + 1, dims.end() - 1);
    spec.logvar_lo = read_f64(is);
    spec.logvar_hi = read_f64(is);
    std::uint64_t n = 0;
    is.read(reinterpret_cast<char*>(&n), sizeof(n));
    Mlp net(spec, 0);
    if (n != net.params_.size()) throw ValidationError("Mlp::load: parameter count mismatch");
    is.read(reinterpret_cast<char*>(net.params_.data()),
            static_cast<std::streamsize>(n * sizeof(double)));
    if (!is) throw ValidationError("Mlp::load: truncated stream");
    return net;
  }

  double clamp_logvar(double raw) const {
    return std::min(std::max(raw, spec_.logvar_lo), spec_.logvar_hi);
  }

 private:
  static void write_u32(std::ostream& os, std::uint32_t v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(v));
  }
  static void write_f64(std::ostream& os, double v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(v));
  }
  static std::uint32_t read_u32(std::istream& is) {
    std::uint32_t v = 0;
    is.read(reinterpret_cast<char*>(&v), sizeof(v));
    return v;
  }
  static double read_f64(std::istream& is) {
    double v = 0;
    is.read(reinterpret_cast<char*>(&v), sizeof(v));
    return v;
  }

  void check_input(std::span<const double> input) const {
    if (static_cast<int>(input.size()) != spec_.input_dim)
      throw ValidationError("Mlp: input dimension mismatch");
  }

  void glorot_init(Rng& rng) {
    std::size_t off = 0;
    for (std::size_t l = 0; l + 1 < dims_.size(); ++l) {
      const int in = dims_[l];
      const int out = dims_[l + 1];
      const double bound = std::sqrt(6.0 / static_cast<double>(in + out));
      for (int i = 0; i < out * in; ++i) params_[off + i] = rng.uniform(-bound, bound);
      for (int i = 0; i < out; ++i) params_[off + static_cast<std::size_t>(out) * in + i] = 0.0;
      off += static_cast<std::size_t>(out) * in + out;
    }
  }

  double activate(double x) const {
    if (spec_.activation == Activation::tanh_fn) return std::tanh(x);
    const double s = 1.0 / (1.0 + std::exp(-x));
    return x * s;  // swish
  }

  double activate_grad(double x) const {
    if (spec_.activation == Activation::tanh_fn) {
      const double t = std::tanh(x);
      return 1.0 - t * t;
    }
    const double s = 1.0 / (1.0 + std::exp(-x));
    return s * (1.0 + x * (1.0 - s));
  }

  static std::vector<double> softmax(std::vector<double> logits) {
    double mx = logits[0];
    for (double v : logits) mx = std::max(mx, v);
    double sum = 0.0;
    for (double& v : logits) {
      v = std::exp(v - mx);
      sum += v;
    }
    for (double& v : logits) v /= sum;
    return logits;
  }

  // Forward + loss (+ optional mean gradient) over a batch. Accumulation
  // order is fixed, keeping training bitwise reproducible.
  double run_batch(const std::vector<std::vector<double>>& inputs,
                   const std::vector<std::vector<double>>* targets,
                   const std::vector<int>* class_targets, LossKind loss,
                   std::vector<double>* grad_out) const {
    if (inputs.empty()) throw ValidationError("netcore: empty batch");
    if (loss == LossKind::cross_entropy) {
      if (spec_.head != HeadKind::categorical_logits || class_targets == nullptr ||
          class_targets->size() != inputs.size())
        throw ValidationError("netcore: cross-entropy needs categorical head and class targets");
    } else {
      if (targets == nullptr || targets->size() != inputs.size())
        throw ValidationError("netcore: vector targets required");
      if (loss == LossKind::nll_gaussian && spec_.head != HeadKind::gaussian_diag)
        throw ValidationError("netcore: nll-gaussian needs gaussian head");
      if (loss == LossKind::huber && spec_.head != HeadKind::linear)
        throw ValidationError("netcore: huber needs linear head");
    }

    const std::size_t layers = dims_.size() - 1;
    const double inv_n = 1.0 / static_cast<double>(inputs.size());
    double total_loss = 0.0;

    std::vector<std::vector<double>> pre(layers);   // pre-activation per layer
    std::vector<std::vector<double>> post(layers + 1);
    for (std::size_t s = 0; s < inputs.size(); ++s) {
      check_input(inputs[s]);
      post[0].assign(inputs[s].begin(), inputs[s].end());
      std::size_t off = 0;
      for (std::size_t l = 0; l < layers; ++l) {
        const int in = dims_[l];
        const int out = dims_[l + 1];
        pre[l].assign(static_cast<std::size_t>(out), 0.0);
        for (int o = 0; o < out; ++o) {
          const double* w = &params_[off + static_cast<std::size_t>(o) * in];
          double acc = params_[off + static_cast<std::size_t>(out) * in + o];
          for (int i = 0; i < in; ++i) acc += w[i] * post[l][i];
          pre[l][o] = acc;
        }
        off += static_cast<std::size_t>(out) * in + out;
        post[l + 1].resize(pre[l].size());
        if (l + 1 < layers) {
          for (std::size_t i = 0; i < pre[l].size(); ++i) post[l + 1][i] = activate(pre[l][i]);
        } else {
          post[l + 1] = pre[l];
        }
      }

      const std::vector<double>& raw = post[layers];
      std::vector<double> draw(raw.size(), 0.0);
      total_loss += head_loss_grad(raw, targets ? &(*targets)[s] : nullptr,
                                   class_targets ? (*class_targets)[s] : -1, loss,
                                   grad_out ? &draw : nullptr);

      if (grad_out) {
        // backward
        std::vector<double> delta = std::move(draw);
        for (std::size_t l = layers; l-- > 0;) {
          const int in = dims_[l];
          const int out = dims_[l + 1];
          const std::size_t layer_off = offsets_[l];
          for (int o = 0; o < out; ++o) {
            const double d = delta[o] * inv_n;
            double* gw = &(*grad_out)[layer_off + static_cast<std::size_t>(o) * in];
            for (int i = 0; i < in; ++i) gw[i] += d * post[l][i];
            (*grad_out)[layer_off + static_cast<std::size_t>(out) * in + o] += d;
          }
          if (l > 0) {
            std::vector<double> prev(static_cast<std::size_t>(in), 0.0);
            for (int i = 0; i < in; ++i) {
              double acc = 0.0;
              for (int o = 0; o < out; ++o)
                acc += params_[layer_off + static_cast<std::size_t>(o) * in + i] * delta[o];
              prev[i] = acc * activate_grad(pre[l - 1][i]);
            }
            delta = std::move(prev);
          }
        }
      }
    }

    total_loss *= inv_n;
    if (!std::isfinite(total_loss)) throw NumericError("netcore: non-finite loss");
    if (grad_out && !all_finite(*grad_out)) throw NumericError("netcore: non-finite gradient");
    return total_loss;
  }

  // Per-sample loss and (optionally) its gradient w.r.t. the raw outputs.
  double head_loss_grad(const std::vector<double>& raw, const std::vector<double>* target,
                        int class_target, LossKind loss, std::vector<double>* draw) const {
    switch (loss) {
      case LossKind::cross_entropy: {
        if (class_target < 0 || class_target >= spec_.output_dim)
          throw ValidationError("netcore: class target out of range");
        double mx = raw[0];
        for (double v : raw) mx = std::max(mx, v);
        double sum = 0.0;
        for (double v : raw) sum += std::exp(v - mx);
        const double lse = mx + std::log(sum);
        if (draw) {
          for (std::size_t k = 0; k < raw.size(); ++k)
            (*draw)[k] = std::exp(raw[k] - lse) - (static_cast<int>(k) == class_target ? 1.0 : 0.0);
        }
        return lse - raw[static_cast<std::size_t>(class_target)];
      }
      case LossKind::huber: {
        if (target->size() != raw.size())
          throw ValidationError("netcore: huber target dimension mismatch");
        double l = 0.0;
        for (std::size_t k = 0; k < raw.size(); ++k) {
          const double e = raw[k] - (*target)[k];
          if (std::abs(e) <= 1.0) {
            l += 0.5 * e * e;
            if (draw) (*draw)[k] = e;
          } else {
            l += std::abs(e) - 0.5;
            if (draw) (*draw)[k] = e > 0.0 ? 1.0 : -1.0;
          }
        }
        return l;
      }
      case LossKind::nll_gaussian: {
        const int d = spec_.output_dim;
        if (static_cast<int>(target->size()) != d)
          throw ValidationError("netcore: nll target dimension mismatch");
        double l = 0.0;
        constexpr double kLog2Pi = 1.8378770664093453;
        for (int k = 0; k < d; ++k) {
          const double mu = raw[static_cast<std::size_t>(k)];
          const double rawlv = raw[static_cast<std::size_t>(d + k)];
          const double lv = clamp_logvar(rawlv);
          const double inv_var = std::exp(-lv);
          const double e = (*target)[static_cast<std::size_t>(k)] - mu;
          l += 0.5 * (e * e * inv_var + lv + kLog2Pi);
          if (draw) {
            (*draw)[static_cast<std::size_t>(k)] = -e * inv_var;
            // Clamp subgradient: outside the bounds the gradient passes only
            // when the step would move the raw value back into range.
            double glv = 0.5 * (1.0 - e * e * inv_var);
            if (rawlv > spec_.logvar_hi && glv < 0.0) glv = 0.0;
            if (rawlv < spec_.logvar_lo && glv > 0.0) glv = 0.0;
            (*draw)[static_cast<std::size_t>(d + k)] = glv;
          }
        }
        return l;
      }
    }
    throw ValidationError("netcore: unknown loss");
  }

  MlpSpec spec_;
  std::vector<int> dims_;
  std::vector<std::size_t> offsets_;
  std::vector<double> params_;
};

}  // namespace maxplore
