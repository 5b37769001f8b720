#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "prism/student/config.hpp"
#include "prism/student/model.hpp"

namespace prism::student {

// AdamW with decoupled weight decay and global-norm clipping. Decay skips
// 1-row tensors (biases, norm parameters). The unknown-user row of W_u is
// pinned to zero after every step.
template <typename T>
class AdamW {
 public:
  explicit AdamW(const TrainingConfig& cfg) : cfg_(cfg) {}

  // Returns the pre-clip global gradient norm.
  double step(Model<T>& model) {
    auto& params = model.params();
    if (m_.empty()) {
      params.for_each([&](const std::string&, Param<T>& p) {
        m_.emplace_back(p.value.size(), 0.0);
        v_.emplace_back(p.value.size(), 0.0);
      });
    }
    // Frozen W_u and the reserved zero row take no gradient.
    auto& wu = params.user_embedding;
    wu.ensure_grad();
    if (!cfg_.train_user_embedding) {
      wu.grad.set_zero();
      wu.value.set_zero();
    }
    std::fill_n(wu.grad.row(Model<T>::kUnknownUser), wu.grad.cols(), T(0));

    double sq = 0.0;
    params.for_each([&](const std::string&, Param<T>& p) {
      p.ensure_grad();
      for (T g : p.grad.storage()) sq += static_cast<double>(g) * static_cast<double>(g);
    });
    const double norm = std::sqrt(sq);
    if (!std::isfinite(norm)) throw Error("non-finite gradient norm at optimizer step " + std::to_string(t_ + 1));
    const double scale = (cfg_.grad_clip > 0 && norm > cfg_.grad_clip) ? cfg_.grad_clip / norm : 1.0;

    ++t_;
    const double lr = cfg_.learning_rate;
    const double b1 = cfg_.beta1, b2 = cfg_.beta2;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
    std::size_t k = 0;
    params.for_each([&](const std::string& name, Param<T>& p) {
      auto& m = m_[k];
      auto& v = v_[k];
      ++k;
      if (lr == 0.0) return;
      if (&p == &wu && !cfg_.train_user_embedding) return;
      const bool decay = p.value.rows() > 1 && cfg_.weight_decay > 0;
      T* w = p.value.data();
      const T* g = p.grad.data();
      for (std::size_t i = 0; i < p.value.size(); ++i) {
        const double gi = static_cast<double>(g[i]) * scale;
        m[i] = b1 * m[i] + (1 - b1) * gi;
        v[i] = b2 * v[i] + (1 - b2) * gi * gi;
        double wi = static_cast<double>(w[i]);
        if (decay) wi -= lr * cfg_.weight_decay * wi;
        wi -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + cfg_.adam_eps);
        w[i] = static_cast<T>(wi);
      }
      if (!p.value.all_finite()) throw Error("parameter '" + name + "' became non-finite at optimizer step " + std::to_string(t_));
    });
    std::fill_n(wu.value.row(Model<T>::kUnknownUser), wu.value.cols(), T(0));
    return norm;
  }

  std::size_t steps() const { return t_; }

 private:
  TrainingConfig cfg_;
  std::size_t t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

}  // namespace prism::student
