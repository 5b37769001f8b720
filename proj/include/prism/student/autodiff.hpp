#pragma once

#include <cassert>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numbers>
#include <span>
#include <vector>

#include "prism/common.hpp"
#include "prism/student/tensor.hpp"

namespace prism::student {

// Reverse-mode tape over dense matrices. Each op records its output value
// and, when any input needs a gradient, a closure that pushes the output
// gradient back to its inputs. Parameter nodes alias external storage and
// accumulate their gradients straight into the caller's gradient tensors.
template <typename T>
class Tape {
 public:
  struct Var {
    std::uint32_t id;
  };

  explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) { nodes_.reserve(256); }
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool grad_enabled() const { return grad_enabled_; }

  Var constant(Tensor<T> value) { return push(std::move(value), false, nullptr); }

  Var parameter(const Tensor<T>& value, Tensor<T>* grad) {
    Node n;
    n.external = &value;
    n.external_grad = grad;
    n.requires_grad = grad_enabled_ && grad != nullptr;
    nodes_.push_back(std::move(n));
    return {static_cast<std::uint32_t>(nodes_.size() - 1)};
  }

  const Tensor<T>& value(Var v) const {
    const auto& n = nodes_[v.id];
    return n.external ? *n.external : n.value;
  }

  bool requires_grad(Var v) const { return nodes_[v.id].requires_grad; }

  // out[r] = table[ids[r]]
  Var gather_rows(Var table, std::vector<int> ids) {
    const auto& t = value(table);
    Tensor<T> out(ids.size(), t.cols());
    for (std::size_t r = 0; r < ids.size(); ++r) std::copy_n(t.row(static_cast<std::size_t>(ids[r])), t.cols(), out.row(r));
    return push(std::move(out), requires_grad(table), [this, table, ids = std::move(ids)](std::uint32_t self) {
      const auto& g = grad(self);
      auto& tg = grad(table.id);
      for (std::size_t r = 0; r < ids.size(); ++r) {
        T* dst = tg.row(static_cast<std::size_t>(ids[r]));
        const T* src = g.row(r);
        for (std::size_t c = 0; c < g.cols(); ++c) dst[c] += src[c];
      }
    });
  }

  Var add(Var a, Var b) {
    Tensor<T> out = value(a);
    out.mat() += value(b).mat();
    return push(std::move(out), requires_grad(a) || requires_grad(b), [this, a, b](std::uint32_t self) {
      const auto& g = grad(self);
      if (requires_grad(a)) grad(a.id).mat() += g.mat();
      if (requires_grad(b)) grad(b.id).mat() += g.mat();
    });
  }

  // Adds a 1 x C row to every row of a.
  Var add_row(Var a, Var row) {
    Tensor<T> out = value(a);
    out.mat().rowwise() += value(row).mat().row(0);
    return push(std::move(out), requires_grad(a) || requires_grad(row), [this, a, row](std::uint32_t self) {
      const auto& g = grad(self);
      if (requires_grad(a)) grad(a.id).mat() += g.mat();
      if (requires_grad(row)) grad(row.id).mat() += g.mat().colwise().sum();
    });
  }

  // x * w + bias
  Var linear(Var x, Var w, Var bias) {
    const auto& xv = value(x);
    const auto& wv = value(w);
    Tensor<T> out(xv.rows(), wv.cols());
    out.mat().noalias() = xv.mat() * wv.mat();
    out.mat().rowwise() += value(bias).mat().row(0);
    bool rg = requires_grad(x) || requires_grad(w) || requires_grad(bias);
    return push(std::move(out), rg, [this, x, w, bias](std::uint32_t self) {
      const auto& g = grad(self);
      if (requires_grad(x)) grad(x.id).mat().noalias() += g.mat() * value(w).mat().transpose();
      if (requires_grad(w)) grad(w.id).mat().noalias() += value(x).mat().transpose() * g.mat();
      if (requires_grad(bias)) grad(bias.id).mat() += g.mat().colwise().sum();
    });
  }

  // Row-wise layer normalisation with learned gain and bias (both 1 x C).
  Var layer_norm(Var x, Var gain, Var bias, T eps = T(1e-5)) {
    const auto& xv = value(x);
    const auto& gv = value(gain);
    const auto& bv = value(bias);
    const std::size_t n = xv.rows(), c = xv.cols();
    Tensor<T> out(n, c), xhat(n, c);
    std::vector<T> rstd(n);
    for (std::size_t r = 0; r < n; ++r) {
      const T* in = xv.row(r);
      T mu = 0;
      for (std::size_t j = 0; j < c; ++j) mu += in[j];
      mu /= T(c);
      T var = 0;
      for (std::size_t j = 0; j < c; ++j) var += (in[j] - mu) * (in[j] - mu);
      var /= T(c);
      rstd[r] = T(1) / std::sqrt(var + eps);
      for (std::size_t j = 0; j < c; ++j) {
        xhat(r, j) = (in[j] - mu) * rstd[r];
        out(r, j) = xhat(r, j) * gv(0, j) + bv(0, j);
      }
    }
    bool rg = requires_grad(x) || requires_grad(gain) || requires_grad(bias);
    return push(std::move(out), rg,
                [this, x, gain, bias, xhat = std::move(xhat), rstd = std::move(rstd)](std::uint32_t self) {
                  const auto& g = grad(self);
                  const auto& gv = value(gain);
                  const std::size_t n = g.rows(), c = g.cols();
                  if (requires_grad(gain)) grad(gain.id).mat() += (g.mat().array() * xhat.mat().array()).colwise().sum().matrix();
                  if (requires_grad(bias)) grad(bias.id).mat() += g.mat().colwise().sum();
                  if (!requires_grad(x)) return;
                  auto& xg = grad(x.id);
                  std::vector<T> dxhat(c);
                  for (std::size_t r = 0; r < n; ++r) {
                    T mean_d = 0, mean_dx = 0;
                    for (std::size_t j = 0; j < c; ++j) {
                      dxhat[j] = g(r, j) * gv(0, j);
                      mean_d += dxhat[j];
                      mean_dx += dxhat[j] * xhat(r, j);
                    }
                    mean_d /= T(c);
                    mean_dx /= T(c);
                    for (std::size_t j = 0; j < c; ++j) xg(r, j) += rstd[r] * (dxhat[j] - mean_d - xhat(r, j) * mean_dx);
                  }
                });
  }

  // tanh approximation of GELU
  Var gelu(Var x) {
    static constexpr T kC = T(0.7978845608028654);  // sqrt(2/pi)
    static constexpr T kA = T(0.044715);
    const auto& xv = value(x);
    Tensor<T> out(xv.rows(), xv.cols());
    for (std::size_t i = 0; i < xv.size(); ++i) {
      T v = xv.data()[i];
      out.data()[i] = T(0.5) * v * (T(1) + std::tanh(kC * (v + kA * v * v * v)));
    }
    return push(std::move(out), requires_grad(x), [this, x](std::uint32_t self) {
      const auto& g = grad(self);
      const auto& xv = value(x);
      auto& xg = grad(x.id);
      for (std::size_t i = 0; i < xv.size(); ++i) {
        T v = xv.data()[i];
        T t = std::tanh(kC * (v + kA * v * v * v));
        T d = T(0.5) * (T(1) + t) + T(0.5) * v * (T(1) - t * t) * kC * (T(1) + T(3) * kA * v * v);
        xg.data()[i] += g.data()[i] * d;
      }
    });
  }

  // Scaled dot-product attention over `heads` column blocks. q is n x D,
  // k and v are m x D. With `causal`, query i only sees keys j <= i.
  Var attention(Var q, Var k, Var v, std::size_t heads, bool causal) {
    const auto& qv = value(q);
    const auto& kv = value(k);
    const auto& vv = value(v);
    const std::size_t n = qv.rows(), m = kv.rows(), d = qv.cols();
    const std::size_t dh = d / heads;
    const T scale = T(1) / std::sqrt(T(dh));
    Tensor<T> out(n, d);
    Tensor<T> probs(heads * n, m);
    const auto Q = qv.mat();
    const auto K = kv.mat();
    const auto V = vv.mat();
    auto O = out.mat();
    auto P = probs.mat();
    for (std::size_t h = 0; h < heads; ++h) {
      const auto c0 = static_cast<Eigen::Index>(h * dh);
      const auto w = static_cast<Eigen::Index>(dh);
      auto Ph = P.middleRows(static_cast<Eigen::Index>(h * n), static_cast<Eigen::Index>(n));
      Ph.noalias() = Q.middleCols(c0, w) * K.middleCols(c0, w).transpose();
      Ph *= scale;
      for (std::size_t i = 0; i < n; ++i) {
        T* row = probs.row(h * n + i);
        std::size_t visible = causal ? std::min(i + 1, m) : m;
        T mx = -std::numeric_limits<T>::infinity();
        for (std::size_t j = 0; j < visible; ++j) mx = std::max(mx, row[j]);
        T sum = 0;
        for (std::size_t j = 0; j < visible; ++j) {
          row[j] = std::exp(row[j] - mx);
          sum += row[j];
        }
        for (std::size_t j = 0; j < visible; ++j) row[j] /= sum;
        for (std::size_t j = visible; j < m; ++j) row[j] = 0;
      }
      O.middleCols(c0, w).noalias() = Ph * V.middleCols(c0, w);
    }
    bool rg = requires_grad(q) || requires_grad(k) || requires_grad(v);
    return push(std::move(out), rg, [this, q, k, v, heads, n, m, dh, scale, probs = std::move(probs)](std::uint32_t self) {
      const auto& g = grad(self);
      const auto Q = value(q).mat();
      const auto K = value(k).mat();
      const auto V = value(v).mat();
      const auto G = g.mat();
      const auto P = probs.mat();
      Tensor<T> dP(n, m);
      auto dPm = dP.mat();
      for (std::size_t h = 0; h < heads; ++h) {
        const auto c0 = static_cast<Eigen::Index>(h * dh);
        const auto w = static_cast<Eigen::Index>(dh);
        const auto Ph = P.middleRows(static_cast<Eigen::Index>(h * n), static_cast<Eigen::Index>(n));
        if (requires_grad(v)) grad(v.id).mat().middleCols(c0, w).noalias() += Ph.transpose() * G.middleCols(c0, w);
        if (!requires_grad(q) && !requires_grad(k)) continue;
        dPm.noalias() = G.middleCols(c0, w) * V.middleCols(c0, w).transpose();
        // softmax backward: dS = P * (dP - rowsum(dP * P))
        for (std::size_t i = 0; i < n; ++i) {
          const T* p = probs.row(h * n + i);
          T* dp = dP.row(i);
          T dot = 0;
          for (std::size_t j = 0; j < m; ++j) dot += dp[j] * p[j];
          for (std::size_t j = 0; j < m; ++j) dp[j] = p[j] * (dp[j] - dot) * scale;
        }
        if (requires_grad(q)) grad(q.id).mat().middleCols(c0, w).noalias() += dPm * K.middleCols(c0, w);
        if (requires_grad(k)) grad(k.id).mat().middleCols(c0, w).noalias() += dPm.transpose() * Q.middleCols(c0, w);
      }
    });
  }

  // Inverted dropout; identity when rate is 0 or no RNG is given.
  Var dropout(Var x, double rate, Rng* rng) {
    if (rate <= 0.0 || rng == nullptr) return x;
    const auto& xv = value(x);
    Tensor<T> mask(xv.rows(), xv.cols());
    const T inv = T(1.0 / (1.0 - rate));
    for (std::size_t i = 0; i < mask.size(); ++i) mask.data()[i] = rng->uniform() >= rate ? inv : T(0);
    Tensor<T> out(xv.rows(), xv.cols());
    out.mat() = xv.mat().cwiseProduct(mask.mat());
    return push(std::move(out), requires_grad(x), [this, x, mask = std::move(mask)](std::uint32_t self) {
      grad(x.id).mat() += grad(self).mat().cwiseProduct(mask.mat());
    });
  }

  // Sum over rows of -log softmax(logits[r])[targets[r]], skipping rows
  // whose target equals `ignore`. Returns a 1 x 1 node.
  Var cross_entropy_sum(Var logits, std::vector<int> targets, int ignore) {
    const auto& lv = value(logits);
    const std::size_t n = lv.rows(), c = lv.cols();
    Tensor<T> probs(n, c);
    T total = 0;
    for (std::size_t r = 0; r < n; ++r) {
      if (targets[r] == ignore) continue;
      const T* z = lv.row(r);
      T mx = *std::max_element(z, z + c);
      T sum = 0;
      for (std::size_t j = 0; j < c; ++j) {
        probs(r, j) = std::exp(z[j] - mx);
        sum += probs(r, j);
      }
      for (std::size_t j = 0; j < c; ++j) probs(r, j) /= sum;
      total += (mx + std::log(sum)) - z[targets[r]];
    }
    Tensor<T> out(1, 1, total);
    return push(std::move(out), requires_grad(logits),
                [this, logits, targets = std::move(targets), ignore, probs = std::move(probs)](std::uint32_t self) {
                  const T g = grad(self)(0, 0);
                  auto& lg = grad(logits.id);
                  for (std::size_t r = 0; r < targets.size(); ++r) {
                    if (targets[r] == ignore) continue;
                    T* dst = lg.row(r);
                    const T* p = probs.row(r);
                    for (std::size_t j = 0; j < lg.cols(); ++j) dst[j] += g * p[j];
                    dst[targets[r]] -= g;
                  }
                });
  }

  // Seeds d(out)/d(out) = seed and runs every recorded closure in reverse.
  void backward(Var out, T seed = T(1)) {
    if (!grad_enabled_) return;
    auto& g = grad(out.id);
    std::fill(g.storage().begin(), g.storage().end(), seed);
    for (std::size_t i = out.id + 1; i-- > 0;) {
      auto& node = nodes_[i];
      if (node.backward && !node.grad.empty()) node.backward(static_cast<std::uint32_t>(i));
    }
  }

 private:
  struct Node {
    Tensor<T> value;
    const Tensor<T>* external = nullptr;
    Tensor<T> grad;
    Tensor<T>* external_grad = nullptr;
    bool requires_grad = false;
    std::function<void(std::uint32_t)> backward;
  };

  Var push(Tensor<T> value, bool requires_grad, std::function<void(std::uint32_t)> back) {
    Node n;
    n.value = std::move(value);
    n.requires_grad = grad_enabled_ && requires_grad;
    if (n.requires_grad) n.backward = std::move(back);
    nodes_.push_back(std::move(n));
    return {static_cast<std::uint32_t>(nodes_.size() - 1)};
  }

  Tensor<T>& grad(std::uint32_t id) {
    auto& n = nodes_[id];
    if (n.external_grad) return *n.external_grad;
    if (n.grad.empty()) {
      const auto& v = n.external ? *n.external : n.value;
      n.grad = Tensor<T>(v.rows(), v.cols());
    }
    return n.grad;
  }

  bool grad_enabled_;
  std::vector<Node> nodes_;
};

}  // namespace prism::student
