#pragma once

// Central finite-difference gradient oracle shared by the graph and nets
// tests: analytic gradients must match (L(t+h)-L(t-h))/2h on randomly probed
// parameters. The loss builder reruns the whole forward pass per probe, so it
// must be a pure function of the parameter tensors it captures.

#include <cmath>
#include <functional>
#include <vector>

#include "pano/graph.hpp"
#include "pano/rng.hpp"
#include "pano/tensor.hpp"

namespace fd {

template <typename S>
struct ProbeResult {
  double max_rel_error = 0;
  int probes = 0;
};

template <typename S>
double relative_error(double analytic, double numeric) {
  const double scale = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
  return std::abs(analytic - numeric) / scale;
}

/// Probes `count` random coordinates of each tensor in `params`.
template <typename S>
ProbeResult<S> check_gradients(const std::function<typename pano::Graph<S>::Var(pano::Graph<S>&)>& make_loss,
                               const std::vector<pano::Tensor<S>*>& params, int count, double step,
                               std::uint64_t seed) {
  ProbeResult<S> result;
  const auto eval = [&]() {
    pano::Graph<S> g;
    return static_cast<double>(g.value(make_loss(g))[0]);
  };

  pano::Graph<S> g;
  auto loss = make_loss(g);
  g.backward(loss);

  pano::Rng rng(seed);
  for (pano::Tensor<S>* t : params) {
    const pano::Tensor<S>* grad = g.gradient_of(t);
    for (int k = 0; k < count; ++k) {
      const auto idx = static_cast<std::int64_t>(pano::uniform_int(rng, 0, t->size() - 1));
      const double analytic = grad ? static_cast<double>((*grad)[idx]) : 0.0;
      const S saved = (*t)[idx];
      (*t)[idx] = saved + static_cast<S>(step);
      const double up = eval();
      (*t)[idx] = saved - static_cast<S>(step);
      const double down = eval();
      (*t)[idx] = saved;
      const double numeric = (up - down) / (2.0 * step);
      result.max_rel_error = std::max(result.max_rel_error, relative_error<S>(analytic, numeric));
      ++result.probes;
    }
  }
  return result;
}

template <typename S>
pano::Tensor<S> random_tensor(std::vector<int> shape, pano::Rng& rng, double lo = -1.0, double hi = 1.0) {
  pano::Tensor<S> t(std::move(shape));
  for (std::int64_t i = 0; i < t.size(); ++i) t[i] = static_cast<S>(pano::uniform_range(rng, lo, hi));
  return t;
}

}  // namespace fd
