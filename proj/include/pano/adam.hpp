#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "pano/nets.hpp"
#include "pano/tensor.hpp"

namespace pano {

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adam with bias correction. Moment buffers align with the store's entry
/// order; a missing gradient is treated as zero.
template <typename S>
class Adam {
 public:
  Adam(ParamStore<S>& store, AdamConfig cfg) : store_(&store), cfg_(cfg) {
    m_.reserve(store.entry_count());
    v_.reserve(store.entry_count());
    for (std::size_t i = 0; i < store.entry_count(); ++i) {
      m_.emplace_back(store.entry(i).value.shape());
      v_.emplace_back(store.entry(i).value.shape());
    }
  }

  /// grads[i] pairs with store entry i; empty tensors mean zero gradient.
  void step(const std::vector<Tensor<S>>& grads) {
    if (grads.size() != m_.size()) throw std::invalid_argument("adam: gradient count mismatch");
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < m_.size(); ++i) {
      auto& theta = store_->entry(i).value;
      auto& m = m_[i];
      auto& v = v_[i];
      const bool has = !grads[i].empty();
      for (std::int64_t j = 0; j < theta.size(); ++j) {
        const double gj = has ? static_cast<double>(grads[i][j]) : 0.0;
        const double mj = cfg_.beta1 * static_cast<double>(m[j]) + (1.0 - cfg_.beta1) * gj;
        const double vj = cfg_.beta2 * static_cast<double>(v[j]) + (1.0 - cfg_.beta2) * gj * gj;
        m[j] = static_cast<S>(mj);
        v[j] = static_cast<S>(vj);
        theta[j] -= static_cast<S>(cfg_.lr * (mj / bc1) / (std::sqrt(vj / bc2) + cfg_.eps));
      }
    }
  }

  std::int64_t t() const { return t_; }
  void set_t(std::int64_t t) { t_ = t; }
  const AdamConfig& config() const { return cfg_; }
  std::vector<Tensor<S>>& moments_m() { return m_; }
  std::vector<Tensor<S>>& moments_v() { return v_; }

 private:
  ParamStore<S>* store_;
  AdamConfig cfg_;
  std::int64_t t_ = 0;
  std::vector<Tensor<S>> m_, v_;
};

}  // namespace pano
