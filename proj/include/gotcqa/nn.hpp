#pragma once

// Parameters, transformer building blocks, Adam, and the central-difference
// gradient checker.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "gotcqa/error.hpp"
#include "gotcqa/rng.hpp"
#include "gotcqa/tensor.hpp"

namespace gotcqa {

enum class Init { Xavier, Zeros, Ones };

struct NamedParameter {
  std::string name;
  Tensor tensor;
};

/// Owns every trainable tensor of a model, in registration order.
class ParameterStore {
 public:
  Tensor add(std::string name, Shape shape, Init init, Rng& rng) {
    for (const auto& p : params_)
      if (p.name == name) fail(Errc::ConfigError, "parameter '" + name + "' registered twice");
    const auto n = shape_size(shape);
    std::vector<double> data(n, init == Init::Ones ? 1.0 : 0.0);
    if (init == Init::Xavier) {
      const double fan_in = shape.size() == 2 ? static_cast<double>(shape[0]) : static_cast<double>(n);
      const double fan_out = shape.size() == 2 ? static_cast<double>(shape[1]) : static_cast<double>(n);
      const double bound = std::sqrt(6.0 / (fan_in + fan_out));
      for (auto& v : data) v = rng.uniform(-bound, bound);
    }
    Tensor t(std::move(shape), std::move(data), /*requires_grad=*/true);
    params_.push_back({std::move(name), t});
    return t;
  }

  const std::vector<NamedParameter>& params() const { return params_; }
  std::vector<NamedParameter>& params() { return params_; }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.tensor.size();
    return n;
  }

  const NamedParameter* find(std::string_view name) const {
    for (const auto& p : params_)
      if (p.name == name) return &p;
    return nullptr;
  }

  void zero_grad() {
    for (auto& p : params_) p.tensor.zero_grad();
  }

  std::vector<Tensor> tensors() const {
    std::vector<Tensor> out;
    for (const auto& p : params_) out.push_back(p.tensor);
    return out;
  }

 private:
  std::vector<NamedParameter> params_;
};

// ---------------------------------------------------------------------------
// Layers

struct Linear {
  Tensor weight;  // [in x out]
  Tensor bias;    // [out]; unused when has_bias is false
  bool has_bias = true;

  Linear() = default;
  Linear(ParameterStore& store, const std::string& name, std::size_t in, std::size_t out, Rng& rng, bool with_bias = true)
      : weight(store.add(name + ".weight", {in, out}, Init::Xavier, rng)), has_bias(with_bias) {
    if (with_bias) bias = store.add(name + ".bias", {out}, Init::Zeros, rng);
  }

  Tensor operator()(const Tensor& x) const { return has_bias ? linear(x, weight, bias) : matmul(x, weight); }
};

struct LayerNorm {
  Tensor gain;
  Tensor bias;

  LayerNorm() = default;
  LayerNorm(ParameterStore& store, const std::string& name, std::size_t d, Rng& rng)
      : gain(store.add(name + ".gain", {d}, Init::Ones, rng)), bias(store.add(name + ".bias", {d}, Init::Zeros, rng)) {}

  Tensor operator()(const Tensor& x) const { return layer_norm(x, gain, bias); }
};

/// Multi-head scaled dot-product attention with input and output projections.
/// Queries come from `q_src`, keys and values from `kv_src`.
struct MultiHeadAttention {
  Linear query, key, value, output;
  std::size_t heads = 1;

  MultiHeadAttention() = default;
  MultiHeadAttention(ParameterStore& store, const std::string& name, std::size_t d, std::size_t n_heads, Rng& rng)
      : heads(n_heads) {
    if (n_heads == 0 || d % n_heads != 0)
      fail(Errc::HeadDivisibility, "model dimension " + std::to_string(d) + " not divisible by " + std::to_string(n_heads) + " heads");
    query = Linear(store, name + ".query", d, d, rng);
    // A key bias shifts every score of a query row equally, which softmax
    // cancels, so the key projection has none.
    key = Linear(store, name + ".key", d, d, rng, /*with_bias=*/false);
    value = Linear(store, name + ".value", d, d, rng);
    output = Linear(store, name + ".output", d, d, rng);
  }

  Tensor operator()(const Tensor& q_src, const Tensor& kv_src, bool causal = false) const {
    const auto d = query.weight.rows();
    if (q_src.cols() != d || kv_src.cols() != d)
      fail(Errc::ShapeMismatch, "attention inputs " + shape_string(q_src.shape()) + ", " + shape_string(kv_src.shape()) +
                                    " do not match model dimension " + std::to_string(d));
    if (d % heads != 0) fail(Errc::HeadDivisibility, "model dimension not divisible by head count");
    const auto dh = d / heads;
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
    const Tensor q = query(q_src), k = key(kv_src), v = value(kv_src);
    std::vector<Tensor> per_head;
    per_head.reserve(heads);
    for (std::size_t h = 0; h < heads; ++h) {
      const Tensor qh = slice_cols(q, h * dh, dh), kh = slice_cols(k, h * dh, dh), vh = slice_cols(v, h * dh, dh);
      per_head.push_back(matmul(softmax_rows(scale(matmul_nt(qh, kh), inv_sqrt), causal), vh));
    }
    return output(heads == 1 ? per_head.front() : concat_cols(per_head));
  }
};

/// Attention sublayer then feed-forward sublayer, each with a skip
/// connection followed by layer normalization.
struct EncoderLayer {
  MultiHeadAttention attention;
  LayerNorm attention_norm;
  Linear ff_in, ff_out;
  LayerNorm ff_norm;

  EncoderLayer() = default;
  EncoderLayer(ParameterStore& store, const std::string& name, std::size_t d, std::size_t heads, std::size_t ff_dim, Rng& rng)
      : attention(store, name + ".attn", d, heads, rng),
        attention_norm(store, name + ".attn_norm", d, rng),
        ff_in(store, name + ".ff_in", d, ff_dim, rng),
        ff_out(store, name + ".ff_out", ff_dim, d, rng),
        ff_norm(store, name + ".ff_norm", d, rng) {}

  /// Self-attention when `kv` is null, cross-attention over `*kv` otherwise.
  Tensor operator()(const Tensor& x, const Tensor* kv = nullptr, bool causal = false) const {
    const Tensor h = attention_norm(add(x, attention(x, kv ? *kv : x, causal)));
    return ff_norm(add(h, ff_out(gelu(ff_in(h)))));
  }
};

// ---------------------------------------------------------------------------
// Optimization

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// One bias-corrected Adam update of `w` in place. `t` is the 1-based step.
inline void adam_update(std::span<double> w, std::span<const double> g, std::span<double> m, std::span<double> v,
                        std::size_t t, double lr, const AdamConfig& cfg) {
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
  for (std::size_t i = 0; i < w.size(); ++i) {
    m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
    v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
    w[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + cfg.eps);
  }
}

class Adam {
 public:
  explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

  /// Applies accumulated gradients of every parameter; parameters that never
  /// received a gradient are left untouched. `lr` overrides the configured rate.
  void step(ParameterStore& store, std::optional<double> lr = std::nullopt) {
    auto& params = store.params();
    if (m_.size() != params.size()) {
      m_.clear();
      v_.clear();
      for (const auto& p : params) {
        m_.emplace_back(p.tensor.size(), 0.0);
        v_.emplace_back(p.tensor.size(), 0.0);
      }
    }
    ++t_;
    for (std::size_t i = 0; i < params.size(); ++i) {
      auto& p = params[i].tensor;
      if (!p.has_grad()) continue;
      adam_update(p.mutable_data(), p.grad(), m_[i], v_[i], t_, lr.value_or(cfg_.lr), cfg_);
    }
  }

  std::size_t steps() const { return t_; }
  const AdamConfig& config() const { return cfg_; }

 private:
  AdamConfig cfg_;
  std::vector<std::vector<double>> m_, v_;
  std::size_t t_ = 0;
};

/// Rescales all gradients so their global L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
inline double clip_grad_norm(ParameterStore& store, double max_norm) {
  double sq = 0.0;
  for (const auto& p : store.params())
    for (double g : p.tensor.grad()) sq += g * g;
  const double norm = std::sqrt(sq);
  if (max_norm > 0 && norm > max_norm) {
    const double f = max_norm / norm;
    for (auto& p : store.params()) {
      if (!p.tensor.has_grad()) continue;
      auto& grad = p.tensor.node()->grad;
      for (double& g : grad) g *= f;
    }
  }
  return norm;
}

// ---------------------------------------------------------------------------
// Gradient verification

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t coordinates = 0;
  std::size_t worst_tensor = 0;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

/// Compares reverse-mode gradients of a scalar function with central
/// differences at step `h`. `loss_fn` must rebuild the computation from the
/// current contents of `inputs` on every call; inputs are perturbed in place
/// and restored. Error per coordinate is
/// |analytic - numeric| / max(|analytic|, |numeric|, 1e-8).
/// With `max_coords` > 0 only that many coordinates per tensor are probed,
/// drawn without replacement from `sample_seed`.
///
/// Richardson mode combines the central differences at h and h/2 as
/// (4 D(h/2) - D(h)) / 3, cancelling the O(h^2) truncation term; a larger h
/// then keeps rounding noise on near-zero gradients small.
enum class FdScheme { Central, Richardson };

struct FdOptions {
  double h = 1e-5;
  FdScheme scheme = FdScheme::Central;
  std::size_t max_coords = 0;
  std::uint64_t sample_seed = 0;
};

inline GradCheckReport finite_diff_report(const std::function<Tensor()>& loss_fn, std::vector<Tensor> inputs, const FdOptions& opt) {
  const double h = opt.h;
  if (!(h > 0) || !std::isfinite(h)) fail(Errc::InvalidStep, "finite-difference step must be positive and finite");
  std::vector<bool> had_grad_flag;
  for (auto& t : inputs) {
    had_grad_flag.push_back(t.requires_grad());
    t.set_requires_grad(true);
    t.zero_grad();
  }
  {
    Tape tape;
    TapeScope scope(tape);
    Tensor loss = loss_fn();
    backward(loss);
  }
  std::vector<std::vector<double>> analytic;
  for (auto& t : inputs) {
    if (t.has_grad())
      analytic.emplace_back(t.grad().begin(), t.grad().end());
    else
      analytic.emplace_back(t.size(), 0.0);
  }

  GradCheckReport report;
  NoGradScope no_grad;
  Rng sampler(opt.sample_seed);
  for (std::size_t ti = 0; ti < inputs.size(); ++ti) {
    auto data = inputs[ti].mutable_data();
    std::vector<std::size_t> coords(data.size());
    for (std::size_t i = 0; i < coords.size(); ++i) coords[i] = i;
    if (opt.max_coords > 0 && coords.size() > opt.max_coords) {
      sampler.shuffle(std::span<std::size_t>(coords));
      coords.resize(opt.max_coords);
    }
    for (std::size_t i : coords) {
      const double saved = data[i];
      const auto central = [&](double step) {
        data[i] = saved + step;
        const double fp = loss_fn().item();
        data[i] = saved - step;
        const double fm = loss_fn().item();
        data[i] = saved;
        return (fp - fm) / (2.0 * step);
      };
      const double numeric =
          opt.scheme == FdScheme::Central ? central(h) : (4.0 * central(h / 2) - central(h)) / 3.0;
      const double a = analytic[ti][i];
      const double err = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-8});
      ++report.coordinates;
      if (err > report.max_rel_error) {
        report.max_rel_error = err;
        report.worst_tensor = ti;
        report.worst_index = i;
        report.worst_analytic = a;
        report.worst_numeric = numeric;
      }
    }
  }
  for (std::size_t ti = 0; ti < inputs.size(); ++ti) {
    inputs[ti].zero_grad();
    inputs[ti].set_requires_grad(had_grad_flag[ti]);
  }
  return report;
}

inline GradCheckReport finite_diff_report(const std::function<Tensor()>& loss_fn, std::vector<Tensor> inputs, double h) {
  return finite_diff_report(loss_fn, std::move(inputs), FdOptions{h});
}

inline double finite_diff_check(const std::function<Tensor()>& loss_fn, std::vector<Tensor> inputs, double h) {
  return finite_diff_report(loss_fn, std::move(inputs), h).max_rel_error;
}

/// Point form: `fn` maps the tensors in `point` to a scalar.
inline double finite_diff_check(const std::function<Tensor(const std::vector<Tensor>&)>& fn,
                                const std::vector<Tensor>& point, double h) {
  std::vector<Tensor> vars;
  for (const auto& p : point) vars.push_back(p.detach());
  return finite_diff_check([&] { return fn(vars); }, vars, h);
}

}  // namespace gotcqa
