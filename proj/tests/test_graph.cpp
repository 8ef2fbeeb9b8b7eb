#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "fd_check.hpp"
#include "pano/graph.hpp"

using namespace pano;
using D = double;

namespace {
Rng& test_rng() {
  static Rng rng(20240811);
  return rng;
}
}  // namespace

TEST_CASE("forward values of the basic ops") {
  Graph<D> g;

  SUBCASE("relu / sigmoid") {
    auto x = g.constant(Tensor<D>({3}, (Eigen::ArrayXd(3) << -1.0, 0.0, 2.0).finished()));
    CHECK(g.value(relu(g, x))[0] == 0.0);
    CHECK(g.value(relu(g, x))[2] == 2.0);
    CHECK(g.value(sigmoid(g, x))[1] == doctest::Approx(0.5));
  }
  SUBCASE("conv3x3 identity kernel") {
    auto rng = test_rng();
    auto img = fd::random_tensor<D>({4, 5, 2}, rng);
    Tensor<D> w({3, 3, 2, 2});
    // center tap copies channels through
    w[( (1 * 3 + 1) * 2 + 0) * 2 + 0] = 1.0;
    w[( (1 * 3 + 1) * 2 + 1) * 2 + 1] = 1.0;
    Tensor<D> b({2});
    auto out = conv3x3(g, g.constant(img), g.constant(w), g.constant(b));
    for (std::int64_t i = 0; i < img.size(); ++i) CHECK(g.value(out)[i] == doctest::Approx(img[i]));
  }
  SUBCASE("tconv2x doubles each dimension") {
    auto rng = test_rng();
    auto img = fd::random_tensor<D>({3, 4, 2}, rng);
    auto w = fd::random_tensor<D>({2, 2, 2, 3}, rng);
    Tensor<D> b({3});
    auto out = tconv2x(g, g.constant(img), g.constant(w), g.constant(b));
    CHECK(g.value(out).shape() == std::vector<int>{6, 8, 3});
  }
  SUBCASE("avgpool2 of constants") {
    auto out = avgpool2(g, g.constant(Tensor<D>::full({4, 4, 1}, 0.3)));
    CHECK(g.value(out).shape() == std::vector<int>{2, 2, 1});
    CHECK(g.value(out)[0] == doctest::Approx(0.3));
  }
  SUBCASE("adaptive pooling uses floor/ceil cell boundaries") {
    // 6 -> 4: cells cover rows [0,2),[1,3),[3,5),[4,6)
    Tensor<D> img({6, 1, 1});
    for (int i = 0; i < 6; ++i) img[i] = i;
    auto out = adaptive_avgpool(g, g.constant(img), 4, 1);
    CHECK(g.value(out)[0] == doctest::Approx(0.5));
    CHECK(g.value(out)[1] == doctest::Approx(1.5));
    CHECK(g.value(out)[2] == doctest::Approx(3.5));
    CHECK(g.value(out)[3] == doctest::Approx(4.5));
  }
  SUBCASE("softmax cross entropy on uniform logits is log(n)") {
    auto logits = g.constant(Tensor<D>({128}));
    auto loss = softmax_cross_entropy(g, logits, 0);
    CHECK(g.value(loss)[0] == doctest::Approx(std::log(128.0)));
  }
  SUBCASE("paste overwrites listed pixels only") {
    auto base = g.constant(Tensor<D>::full({2, 2, 1}, 1.0));
    auto patch = g.constant(Tensor<D>::full({1, 1, 1}, 5.0));
    auto pairs = std::make_shared<const std::vector<std::pair<int, int>>>(
        std::vector<std::pair<int, int>>{{3, 0}});
    auto out = paste(g, base, patch, pairs);
    CHECK(g.value(out)[0] == 1.0);
    CHECK(g.value(out)[3] == 5.0);
  }
  SUBCASE("slot_write keeps other slots") {
    auto vec = g.constant(Tensor<D>::full({6}, 2.0));
    auto feat = g.constant(Tensor<D>::full({2}, 9.0));
    auto out = slot_write(g, vec, feat, 1);
    CHECK(g.value(out)[1] == 2.0);
    CHECK(g.value(out)[2] == 9.0);
    CHECK(g.value(out)[3] == 9.0);
    CHECK(g.value(out)[4] == 2.0);
  }
}

TEST_CASE("gradients match central differences (double, 1e-6)") {
  auto& rng = test_rng();
  constexpr double kTol = 1e-6;
  constexpr double kStep = 1e-5;

  SUBCASE("conv3x3") {
    auto x = fd::random_tensor<D>({5, 6, 3}, rng);
    auto w = fd::random_tensor<D>({3, 3, 3, 4}, rng);
    auto b = fd::random_tensor<D>({4}, rng);
    auto proj = fd::random_tensor<D>({5, 6, 4}, rng);
    const auto make = [&](Graph<D>& g) {
      return weighted_sum(g, conv3x3(g, g.parameter(&x), g.parameter(&w), g.parameter(&b)), proj);
    };
    const auto r = fd::check_gradients<D>(make, {&x, &w, &b}, 20, kStep, rng());
    CHECK(r.max_rel_error < kTol);
  }
  SUBCASE("conv1x1") {
    auto x = fd::random_tensor<D>({4, 4, 3}, rng);
    auto w = fd::random_tensor<D>({3, 2}, rng);
    auto b = fd::random_tensor<D>({2}, rng);
    auto proj = fd::random_tensor<D>({4, 4, 2}, rng);
    const auto make = [&](Graph<D>& g) {
      return weighted_sum(g, conv1x1(g, g.parameter(&x), g.parameter(&w), g.parameter(&b)), proj);
    };
    CHECK(fd::check_gradients<D>(make, {&x, &w, &b}, 20, kStep, rng()).max_rel_error < kTol);
  }
  SUBCASE("tconv2x") {
    auto x = fd::random_tensor<D>({3, 4, 2}, rng);
    auto w = fd::random_tensor<D>({2, 2, 2, 3}, rng);
    auto b = fd::random_tensor<D>({3}, rng);
    auto proj = fd::random_tensor<D>({6, 8, 3}, rng);
    const auto make = [&](Graph<D>& g) {
      return weighted_sum(g, tconv2x(g, g.parameter(&x), g.parameter(&w), g.parameter(&b)), proj);
    };
    CHECK(fd::check_gradients<D>(make, {&x, &w, &b}, 20, kStep, rng()).max_rel_error < kTol);
  }
  SUBCASE("pooling family") {
    auto x = fd::random_tensor<D>({8, 12, 2}, rng);
    auto proj2 = fd::random_tensor<D>({4, 6, 2}, rng);
    const auto make_avg = [&](Graph<D>& g) { return weighted_sum(g, avgpool2(g, g.parameter(&x)), proj2); };
    CHECK(fd::check_gradients<D>(make_avg, {&x}, 20, kStep, rng()).max_rel_error < kTol);

    auto proj3 = fd::random_tensor<D>({2, 3, 2}, rng);
    const auto make_area = [&](Graph<D>& g) { return weighted_sum(g, avgpool_to(g, g.parameter(&x), 2, 3), proj3); };
    CHECK(fd::check_gradients<D>(make_area, {&x}, 20, kStep, rng()).max_rel_error < kTol);

    auto proj4 = fd::random_tensor<D>({3, 5, 2}, rng);
    const auto make_adaptive = [&](Graph<D>& g) {
      return weighted_sum(g, adaptive_avgpool(g, g.parameter(&x), 3, 5), proj4);
    };
    CHECK(fd::check_gradients<D>(make_adaptive, {&x}, 20, kStep, rng()).max_rel_error < kTol);

    auto projg = fd::random_tensor<D>({2}, rng);
    const auto make_gap = [&](Graph<D>& g) { return weighted_sum(g, global_avgpool(g, g.parameter(&x)), projg); };
    CHECK(fd::check_gradients<D>(make_gap, {&x}, 20, kStep, rng()).max_rel_error < kTol);
  }
  SUBCASE("fully connected + nonlinearities") {
    auto x = fd::random_tensor<D>({10}, rng);
    auto w1 = fd::random_tensor<D>({10, 7}, rng);
    auto b1 = fd::random_tensor<D>({7}, rng);
    auto w2 = fd::random_tensor<D>({7, 4}, rng);
    auto b2 = fd::random_tensor<D>({4}, rng);
    auto proj = fd::random_tensor<D>({4}, rng);
    const auto make = [&](Graph<D>& g) {
      auto h = relu(g, fully_connected(g, g.parameter(&x), g.parameter(&w1), g.parameter(&b1)));
      auto out = sigmoid(g, fully_connected(g, h, g.parameter(&w2), g.parameter(&b2)));
      return weighted_sum(g, out, proj);
    };
    CHECK(fd::check_gradients<D>(make, {&x, &w1, &b1, &w2, &b2}, 20, kStep, rng()).max_rel_error < kTol);
  }
  SUBCASE("concat") {
    auto a = fd::random_tensor<D>({3, 3, 2}, rng);
    auto b = fd::random_tensor<D>({3, 3, 1}, rng);
    auto proj = fd::random_tensor<D>({3, 3, 3}, rng);
    const auto make = [&](Graph<D>& g) {
      return weighted_sum(g, concat_channels(g, g.parameter(&a), g.parameter(&b)), proj);
    };
    CHECK(fd::check_gradients<D>(make, {&a, &b}, 20, kStep, rng()).max_rel_error < kTol);
  }
  SUBCASE("paste routes gradients by write recency") {
    auto base = fd::random_tensor<D>({3, 4, 2}, rng);
    auto patch = fd::random_tensor<D>({2, 2, 2}, rng);
    auto proj = fd::random_tensor<D>({3, 4, 2}, rng);
    auto pairs = std::make_shared<const std::vector<std::pair<int, int>>>(
        std::vector<std::pair<int, int>>{{0, 0}, {1, 1}, {4, 2}, {5, 3}});
    const auto make = [&](Graph<D>& g) {
      return weighted_sum(g, paste(g, g.parameter(&base), g.parameter(&patch), pairs), proj);
    };
    CHECK(fd::check_gradients<D>(make, {&base, &patch}, 20, kStep, rng()).max_rel_error < kTol);
  }
  SUBCASE("slot_write") {
    auto vec = fd::random_tensor<D>({12}, rng);
    auto feat = fd::random_tensor<D>({4}, rng);
    auto proj = fd::random_tensor<D>({12}, rng);
    const auto make = [&](Graph<D>& g) {
      return weighted_sum(g, slot_write(g, g.parameter(&vec), g.parameter(&feat), 2), proj);
    };
    CHECK(fd::check_gradients<D>(make, {&vec, &feat}, 20, kStep, rng()).max_rel_error < kTol);
  }
  SUBCASE("l1 loss with a mask") {
    auto pred = fd::random_tensor<D>({4, 4, 3}, rng);
    auto target = fd::random_tensor<D>({4, 4, 3}, rng);
    Tensor<std::uint8_t> mask({4, 4});
    auto& mrng = test_rng();
    for (std::int64_t i = 0; i < mask.size(); ++i) mask[i] = uniform_real(mrng) < 0.5 ? 1 : 0;
    const auto make = [&](Graph<D>& g) { return l1_loss(g, g.parameter(&pred), target, &mask); };
    CHECK(fd::check_gradients<D>(make, {&pred}, 20, kStep, rng()).max_rel_error < kTol);
  }
  SUBCASE("softmax cross entropy (label and distribution)") {
    auto logits = fd::random_tensor<D>({9}, rng);
    const auto make_label = [&](Graph<D>& g) { return softmax_cross_entropy(g, g.parameter(&logits), 3); };
    CHECK(fd::check_gradients<D>(make_label, {&logits}, 20, kStep, rng()).max_rel_error < kTol);

    std::vector<double> dist(9, 0.0);
    double total = 0;
    auto& drng = test_rng();
    for (auto& v : dist) {
      v = uniform_real(drng);
      total += v;
    }
    for (auto& v : dist) v /= total;
    const auto make_dist = [&](Graph<D>& g) {
      return softmax_cross_entropy_dist(g, g.parameter(&logits), dist);
    };
    CHECK(fd::check_gradients<D>(make_dist, {&logits}, 20, kStep, rng()).max_rel_error < kTol);
  }
  SUBCASE("composed chain through paste and pooling") {
    // mimics the episode wiring: conv output pasted into a buffer, pooled,
    // convolved again, reduced to a scalar
    auto patch = fd::random_tensor<D>({2, 2, 2}, rng);
    auto w = fd::random_tensor<D>({3, 3, 2, 2}, rng);
    auto b = fd::random_tensor<D>({2}, rng);
    auto proj = fd::random_tensor<D>({2, 4, 2}, rng);
    auto pairs = std::make_shared<const std::vector<std::pair<int, int>>>(
        std::vector<std::pair<int, int>>{{5, 0}, {6, 1}, {9, 2}, {10, 3}});
    const auto make = [&](Graph<D>& g) {
      auto canvas = g.constant(Tensor<D>({4, 8, 2}));
      auto pasted = paste(g, canvas, g.parameter(&patch), pairs);
      auto conv = relu(g, conv3x3(g, pasted, g.parameter(&w), g.parameter(&b)));
      return weighted_sum(g, avgpool2(g, conv), proj);
    };
    CHECK(fd::check_gradients<D>(make, {&patch, &w, &b}, 20, kStep, rng()).max_rel_error < kTol);
  }
}

TEST_CASE("parameter nodes are shared within a graph") {
  Graph<D> g;
  Tensor<D> w({2, 2});
  w[0] = 1.0;
  auto a = g.parameter(&w);
  auto b = g.parameter(&w);
  CHECK(a.id == b.id);
}

TEST_CASE("backward accumulates across shared uses") {
  // L = sum(w * c1) + sum(w * c2): dL/dw = c1 + c2
  Tensor<D> w({3});
  w[0] = 0.5;
  w[1] = -0.25;
  w[2] = 2.0;
  Tensor<D> c1({3}), c2({3});
  c1[0] = 1;
  c1[1] = 2;
  c1[2] = 3;
  c2[0] = 10;
  c2[1] = 20;
  c2[2] = 30;
  Graph<D> g;
  auto p = g.parameter(&w);
  auto l1 = weighted_sum(g, p, c1);
  auto l2 = weighted_sum(g, p, c2);
  auto total = sum_scalars(g, {l1, l2});
  g.backward(total);
  const Tensor<D>* grad = g.gradient_of(&w);
  REQUIRE(grad != nullptr);
  CHECK((*grad)[0] == doctest::Approx(11.0));
  CHECK((*grad)[1] == doctest::Approx(22.0));
  CHECK((*grad)[2] == doctest::Approx(33.0));
}
