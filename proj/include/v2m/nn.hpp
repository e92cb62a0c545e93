#pragma once

// Model building blocks on top of the autodiff tensor: parameter registry,
// linear/layernorm/attention/ffn layers, rotary positions, sinusoidal
// embeddings, and the decoupled-weight-decay adaptive optimizer.

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "v2m/rng.hpp"
#include "v2m/tensor.hpp"

namespace v2m {

inline void nn_check(bool ok, const std::string& msg) {
  if (!ok) throw std::runtime_error(msg);
}

// named learnable tensors in stable creation order
struct ParamRegistry {
  std::vector<std::pair<std::string, Tensor>> items;

  // init_std == 0 creates a zero-initialized parameter and draws nothing
  // from the rng, so optional zero-init layers never shift the stream
  Tensor add(const std::string& name, Shape shape, double init_std, Rng& rng) {
    for (const auto& [n, t] : items)
      nn_check(n != name, "parameter '" + name + "' registered twice");
    Tensor t = Tensor::zeros(shape, true);
    if (init_std > 0.0)
      for (double& x : t.data()) x = init_std * rng.gaussian();
    items.emplace_back(name, t);
    return t;
  }

  Tensor* find(const std::string& name) {
    for (auto& [n, t] : items)
      if (n == name) return &t;
    return nullptr;
  }

  void zero_grad() {
    for (auto& [n, t] : items) t.zero_grad();
  }

  int64_t total() const {
    int64_t n = 0;
    for (const auto& [name, t] : items) n += t.numel();
    return n;
  }
};

// [1 x d] row repeated T times; the matmul keeps gradients flowing back to
// the row as column sums
inline Tensor tile_rows(const Tensor& row, int t_rows) {
  return matmul(Tensor::full({t_rows, 1}, 1.0), row);
}

// [1 x 1] scalar spread to [T x d]
inline Tensor tile_scalar(const Tensor& s, int t_rows, int d) {
  return matmul(Tensor::full({t_rows, 1}, 1.0), matmul(s, Tensor::full({1, d}, 1.0)));
}

// constant [1 x dim]: first half sines, second half cosines over a
// log-spaced frequency ladder
inline Tensor sinusoidal_embedding(double pos, int dim) {
  nn_check(dim >= 2 && dim % 2 == 0,
           "sinusoidal embedding dim must be even and >= 2, got " +
               std::to_string(dim));
  const int half = dim / 2;
  std::vector<double> v(dim);
  for (int i = 0; i < half; ++i) {
    const double freq = std::pow(10000.0, -static_cast<double>(i) / half);
    v[i] = std::sin(pos * freq);
    v[half + i] = std::cos(pos * freq);
  }
  return Tensor::leaf({1, dim}, std::move(v));
}

// diffusion timesteps t in [0,1] are spread across the ladder
inline Tensor timestep_embedding(double t, int dim) {
  return sinusoidal_embedding(1000.0 * t, dim);
}

// rotary positions: adjacent value pairs rotated by position-dependent
// angles; position 0 is the identity
inline Tensor rope_apply(const Tensor& x, const std::vector<int>& positions) {
  nn_check(x.shape().size() == 2, "rope: need a 2-d input, got " + shape_str(x.shape()));
  const int t_rows = x.shape()[0];
  const int dh = x.shape()[1];
  nn_check(dh % 2 == 0, "rope: head dim " + std::to_string(dh) + " is odd");
  nn_check(static_cast<int>(positions.size()) == t_rows,
           "rope: " + std::to_string(positions.size()) + " positions for " +
               std::to_string(t_rows) + " rows");
  const int half = dh / 2;
  std::vector<double> cs(static_cast<size_t>(t_rows) * half);
  std::vector<double> sn(cs.size());
  for (int r = 0; r < t_rows; ++r)
    for (int i = 0; i < half; ++i) {
      const double theta =
          positions[r] * std::pow(10000.0, -2.0 * i / static_cast<double>(dh));
      cs[static_cast<size_t>(r) * half + i] = std::cos(theta);
      sn[static_cast<size_t>(r) * half + i] = std::sin(theta);
    }
  Tensor cos_col = Tensor::leaf({t_rows * half, 1}, std::move(cs));
  Tensor sin_col = Tensor::leaf({t_rows * half, 1}, std::move(sn));

  Tensor pairs = reshape(x, {t_rows * half, 2});
  Tensor even = slice(pairs, 1, 0, 1);
  Tensor odd = slice(pairs, 1, 1, 1);
  Tensor even_rot = sub(mul(even, cos_col), mul(odd, sin_col));
  Tensor odd_rot = add(mul(even, sin_col), mul(odd, cos_col));
  return reshape(concat({even_rot, odd_rot}, 1), {t_rows, dh});
}

struct Linear {
  Tensor w, b;

  Linear() = default;
  Linear(ParamRegistry& reg, const std::string& name, int in, int out, Rng& rng,
         bool zero_init = false) {
    const double std = zero_init ? 0.0 : 1.0 / std::sqrt(static_cast<double>(in));
    w = reg.add(name + ".w", {in, out}, std, rng);
    b = reg.add(name + ".b", {1, out}, 0.0, rng);
  }

  Tensor operator()(const Tensor& x) const { return broadcast_add(matmul(x, w), b); }
};

struct LayerNorm {
  Tensor gamma, beta;

  LayerNorm() = default;
  LayerNorm(ParamRegistry& reg, const std::string& name, int d, Rng& rng) {
    gamma = reg.add(name + ".gamma", {1, d}, 0.0, rng);
    for (double& x : gamma.data()) x = 1.0;
    beta = reg.add(name + ".beta", {1, d}, 0.0, rng);
  }

  Tensor operator()(const Tensor& x) const {
    Tensor n = layer_norm(x, 1);
    return broadcast_add(mul(n, tile_rows(gamma, x.shape()[0])), beta);
  }
};

// multi-head attention; output projection starts at zero so a fresh block
// leaves its residual stream untouched
struct Attention {
  int n_heads = 1;
  int d_head = 1;
  bool causal = false;
  bool rotary = false;
  Linear wq, wk, wv, wo;

  Attention() = default;
  Attention(ParamRegistry& reg, const std::string& name, int d_model, int heads,
            Rng& rng, bool causal_mask = false, bool use_rope = false)
      : n_heads(heads), causal(causal_mask), rotary(use_rope) {
    nn_check(d_model % heads == 0,
             "attention: d_model " + std::to_string(d_model) +
                 " not divisible by " + std::to_string(heads) + " heads");
    d_head = d_model / heads;
    nn_check(!use_rope || d_head % 2 == 0,
             "attention: rotary positions need an even head dim, got " +
                 std::to_string(d_head));
    wq = Linear(reg, name + ".wq", d_model, d_model, rng);
    wk = Linear(reg, name + ".wk", d_model, d_model, rng);
    wv = Linear(reg, name + ".wv", d_model, d_model, rng);
    wo = Linear(reg, name + ".wo", d_model, d_model, rng, /*zero_init=*/true);
  }

  Tensor operator()(const Tensor& x, const Tensor& memory,
                    const std::vector<int>& positions = {}) const {
    const int t_rows = x.shape()[0];
    const int s_rows = memory.shape()[0];
    Tensor q = wq(x), k = wk(memory), v = wv(memory);

    Tensor mask;
    if (causal) {
      std::vector<double> m(static_cast<size_t>(t_rows) * s_rows, 0.0);
      for (int i = 0; i < t_rows; ++i)
        for (int j = i + 1; j < s_rows; ++j)
          m[static_cast<size_t>(i) * s_rows + j] = -1e9;
      mask = Tensor::leaf({t_rows, s_rows}, std::move(m));
    }

    std::vector<int> pos = positions;
    if (rotary && pos.empty()) {
      pos.resize(t_rows);
      for (int i = 0; i < t_rows; ++i) pos[i] = i;
    }

    std::vector<Tensor> heads;
    heads.reserve(n_heads);
    for (int h = 0; h < n_heads; ++h) {
      Tensor qh = slice(q, 1, h * d_head, d_head);
      Tensor kh = slice(k, 1, h * d_head, d_head);
      if (rotary) {
        qh = rope_apply(qh, pos);
        kh = rope_apply(kh, pos);
      }
      Tensor scores = scale(matmul(qh, transpose(kh)), 1.0 / std::sqrt(d_head));
      if (causal) scores = add(scores, mask);
      Tensor att = softmax(scores, 1);
      heads.push_back(matmul(att, slice(v, 1, h * d_head, d_head)));
    }
    return wo(concat(heads, 1));
  }

  Tensor self(const Tensor& x, const std::vector<int>& positions = {}) const {
    return (*this)(x, x, positions);
  }
};

struct Ffn {
  Linear w1, w2;

  Ffn() = default;
  Ffn(ParamRegistry& reg, const std::string& name, int d_model, int mult, Rng& rng) {
    w1 = Linear(reg, name + ".w1", d_model, d_model * mult, rng);
    w2 = Linear(reg, name + ".w2", d_model * mult, d_model, rng, /*zero_init=*/true);
  }

  Tensor operator()(const Tensor& x) const { return w2(gelu(w1(x))); }
};

// decoupled weight decay, adaptive moments, inverse-square-root decay
struct AdamW {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-3;
  uint64_t step = 0;
  std::vector<std::vector<double>> m, v;

  void init(const ParamRegistry& reg) {
    m.clear();
    v.clear();
    for (const auto& [name, t] : reg.items) {
      m.emplace_back(t.numel(), 0.0);
      v.emplace_back(t.numel(), 0.0);
    }
  }

  void update(ParamRegistry& reg) {
    nn_check(m.size() == reg.items.size(), "optimizer state does not match registry");
    ++step;
    const double lr_t = lr / std::sqrt(1.0 + static_cast<double>(step) / 1e6);
    const double c1 = 1.0 - std::pow(beta1, static_cast<double>(step));
    const double c2 = 1.0 - std::pow(beta2, static_cast<double>(step));
    for (size_t i = 0; i < reg.items.size(); ++i) {
      Tensor& p = reg.items[i].second;
      const std::vector<double>& g = p.grad();
      if (g.empty()) continue;  // parameter unused by this loss
      std::vector<double>& data = p.data();
      for (size_t j = 0; j < data.size(); ++j) {
        data[j] -= lr_t * weight_decay * data[j];
        m[i][j] = beta1 * m[i][j] + (1.0 - beta1) * g[j];
        v[i][j] = beta2 * v[i][j] + (1.0 - beta2) * g[j] * g[j];
        data[j] -= lr_t * (m[i][j] / c1) / (std::sqrt(v[i][j] / c2) + eps);
      }
    }
  }
};

}  // namespace v2m
