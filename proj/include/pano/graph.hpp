#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <stdexcept>
#include <unordered_map>
#include <utility>
#include <vector>

#include "pano/tensor.hpp"

namespace pano {

/// Define-by-run reverse-mode tape. Ops are free functions taking the graph
/// and value handles; nodes are created in topological order, so backward is
/// a single reverse sweep over nodes that received a gradient.
template <typename S>
class Graph {
 public:
  struct Var {
    std::int32_t id = -1;
    bool valid() const { return id >= 0; }
  };

  /// Leaf with no gradient tracking.
  Var constant(Tensor<S> value) {
    nodes_.push_back(Node{std::move(value), nullptr, {}, nullptr, false});
    return Var{static_cast<std::int32_t>(nodes_.size() - 1)};
  }

  /// Leaf bound to externally owned storage (network parameters). One node
  /// per distinct pointer; repeated calls return the same handle so shared
  /// weights accumulate gradients across uses.
  Var parameter(const Tensor<S>* shared) {
    auto it = param_nodes_.find(shared);
    if (it != param_nodes_.end()) return Var{it->second};
    nodes_.push_back(Node{Tensor<S>{}, shared, {}, nullptr, true});
    const auto id = static_cast<std::int32_t>(nodes_.size() - 1);
    param_nodes_.emplace(shared, id);
    return Var{id};
  }

  const Tensor<S>& value(Var v) const {
    const Node& n = nodes_[static_cast<size_t>(v.id)];
    return n.ref ? *n.ref : n.owned;
  }

  bool requires_grad(Var v) const { return nodes_[static_cast<size_t>(v.id)].requires_grad; }

  /// Gradient buffer of a node, allocated on first use.
  Tensor<S>& grad(Var v) {
    Node& n = nodes_[static_cast<size_t>(v.id)];
    if (n.grad.empty()) n.grad = Tensor<S>(value(v).shape());
    return n.grad;
  }

  bool has_grad(Var v) const { return !nodes_[static_cast<size_t>(v.id)].grad.empty(); }

  /// Seed d(root)=1 and sweep the tape once. root must be scalar.
  void backward(Var root) {
    if (value(root).size() != 1) throw std::invalid_argument("backward: root must be a scalar");
    grad(root)[0] = S(1);
    for (std::int32_t id = root.id; id >= 0; --id) {
      Node& n = nodes_[static_cast<size_t>(id)];
      if (!n.grad.empty() && n.backward) n.backward(*this, Var{id});
    }
  }

  /// Gradient of a parameter leaf after backward; null when untouched.
  const Tensor<S>* gradient_of(const Tensor<S>* shared) const {
    auto it = param_nodes_.find(shared);
    if (it == param_nodes_.end()) return nullptr;
    const Node& n = nodes_[static_cast<size_t>(it->second)];
    return n.grad.empty() ? nullptr : &n.grad;
  }

  using BackwardFn = std::function<void(Graph&, Var)>;

  /// Result node; requires_grad is inherited from the parents the op names.
  Var make(Tensor<S> value, BackwardFn backward, std::initializer_list<Var> parents) {
    bool rg = false;
    for (Var p : parents) rg = rg || requires_grad(p);
    return make_with_grad(std::move(value), std::move(backward), rg);
  }

  Var make_with_grad(Tensor<S> value, BackwardFn backward, bool needs_grad) {
    nodes_.push_back(Node{std::move(value), nullptr, {}, needs_grad ? std::move(backward) : nullptr, needs_grad});
    return Var{static_cast<std::int32_t>(nodes_.size() - 1)};
  }

  size_t node_count() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor<S> owned;
    const Tensor<S>* ref = nullptr;
    Tensor<S> grad;
    BackwardFn backward;
    bool requires_grad = false;
  };

  std::vector<Node> nodes_;
  std::unordered_map<const Tensor<S>*, std::int32_t> param_nodes_;
};

template <typename S>
using Var = typename Graph<S>::Var;

// ---------------------------------------------------------------------------
// elementwise ops
// ---------------------------------------------------------------------------

template <typename S>
Var<S> relu(Graph<S>& g, Var<S> x) {
  const Tensor<S>& xv = g.value(x);
  Tensor<S> out(xv.shape());
  out.array() = xv.array().max(S(0));
  return g.make(
      std::move(out),
      [x](Graph<S>& g2, Var<S> self) {
        if (!g2.requires_grad(x)) return;
        const auto& xv2 = g2.value(x).array();
        g2.grad(x).array() += g2.grad(self).array() * (xv2 > S(0)).template cast<S>();
      },
      {x});
}

template <typename S>
Var<S> sigmoid(Graph<S>& g, Var<S> x) {
  const Tensor<S>& xv = g.value(x);
  Tensor<S> out(xv.shape());
  out.array() = S(1) / (S(1) + (-xv.array()).exp());
  return g.make(
      std::move(out),
      [x](Graph<S>& g2, Var<S> self) {
        if (!g2.requires_grad(x)) return;
        const auto& y = g2.value(self).array();
        g2.grad(x).array() += g2.grad(self).array() * y * (S(1) - y);
      },
      {x});
}

template <typename S>
Var<S> add(Graph<S>& g, Var<S> a, Var<S> b) {
  const Tensor<S>& av = g.value(a);
  const Tensor<S>& bv = g.value(b);
  if (!av.same_shape(bv)) throw std::invalid_argument("add: shape mismatch");
  Tensor<S> out(av.shape());
  out.array() = av.array() + bv.array();
  return g.make(
      std::move(out),
      [a, b](Graph<S>& g2, Var<S> self) {
        if (g2.requires_grad(a)) g2.grad(a).array() += g2.grad(self).array();
        if (g2.requires_grad(b)) g2.grad(b).array() += g2.grad(self).array();
      },
      {a, b});
}

template <typename S>
Var<S> scale(Graph<S>& g, Var<S> x, S k) {
  Tensor<S> out(g.value(x).shape());
  out.array() = g.value(x).array() * k;
  return g.make(
      std::move(out),
      [x, k](Graph<S>& g2, Var<S> self) {
        if (g2.requires_grad(x)) g2.grad(x).array() += g2.grad(self).array() * k;
      },
      {x});
}

/// Sum of scalar nodes.
template <typename S>
Var<S> sum_scalars(Graph<S>& g, const std::vector<Var<S>>& terms) {
  if (terms.empty()) throw std::invalid_argument("sum_scalars: empty");
  S total = 0;
  for (Var<S> t : terms) total += g.value(t)[0];
  auto captured = terms;
  bool rg = false;
  for (Var<S> t : terms) rg = rg || g.requires_grad(t);
  return g.make_with_grad(
      Tensor<S>::scalar(total),
      [captured](Graph<S>& g2, Var<S> self) {
        const S up = g2.grad(self)[0];
        for (Var<S> t : captured)
          if (g2.requires_grad(t)) g2.grad(t)[0] += up;
      },
      rg);
}

/// Same data, new shape.
template <typename S>
Var<S> reshape(Graph<S>& g, Var<S> x, std::vector<int> shape) {
  Tensor<S> out = g.value(x).reshaped(std::move(shape));
  return g.make(
      std::move(out),
      [x](Graph<S>& g2, Var<S> self) {
        if (g2.requires_grad(x)) g2.grad(x).array() += g2.grad(self).array();
      },
      {x});
}

// ---------------------------------------------------------------------------
// convolution / pooling (HWC layout)
// ---------------------------------------------------------------------------

namespace graph_detail {

/// col(y*W+x, (ky*3+kx)*C + c) = x(y+ky-1, x+kx-1, c), zero outside.
template <typename S>
void im2col_3x3(const Tensor<S>& x, Tensor<S>& col) {
  const int h = x.dim(0), w = x.dim(1), ch = x.dim(2);
  col.array().setZero();
  S* colp = col.data();
  const S* xp = x.data();
  const int row_len = 9 * ch;
  for (int y = 0; y < h; ++y) {
    for (int ky = 0; ky < 3; ++ky) {
      const int sy = y + ky - 1;
      if (sy < 0 || sy >= h) continue;
      for (int kx = 0; kx < 3; ++kx) {
        const int x_lo = kx == 0 ? 1 : 0;        // first x with sx >= 0
        const int x_hi = kx == 2 ? w - 1 : w;    // one past last x with sx < w
        if (x_hi <= x_lo) continue;
        const S* src = xp + (static_cast<std::int64_t>(sy) * w + (x_lo + kx - 1)) * ch;
        S* dst = colp + (static_cast<std::int64_t>(y) * w + x_lo) * row_len + (ky * 3 + kx) * ch;
        for (int xx = x_lo; xx < x_hi; ++xx, src += ch, dst += row_len)
          for (int c = 0; c < ch; ++c) dst[c] = src[c];
      }
    }
  }
}

/// Scatter-add the column layout back onto an HWC gradient.
template <typename S>
void col2im_3x3(const Tensor<S>& col, Tensor<S>& dx) {
  const int h = dx.dim(0), w = dx.dim(1), ch = dx.dim(2);
  const S* colp = col.data();
  S* dxp = dx.data();
  const int row_len = 9 * ch;
  for (int y = 0; y < h; ++y) {
    for (int ky = 0; ky < 3; ++ky) {
      const int sy = y + ky - 1;
      if (sy < 0 || sy >= h) continue;
      for (int kx = 0; kx < 3; ++kx) {
        const int x_lo = kx == 0 ? 1 : 0;
        const int x_hi = kx == 2 ? w - 1 : w;
        if (x_hi <= x_lo) continue;
        S* dst = dxp + (static_cast<std::int64_t>(sy) * w + (x_lo + kx - 1)) * ch;
        const S* src = colp + (static_cast<std::int64_t>(y) * w + x_lo) * row_len + (ky * 3 + kx) * ch;
        for (int xx = x_lo; xx < x_hi; ++xx, src += row_len, dst += ch)
          for (int c = 0; c < ch; ++c) dst[c] += src[c];
      }
    }
  }
}

}  // namespace graph_detail

/// 3x3 convolution, stride 1, zero ("same") padding.
/// weight shape (3,3,Cin,Cout) flattened kernel-major; bias (Cout).
template <typename S>
Var<S> conv3x3(Graph<S>& g, Var<S> x, Var<S> weight, Var<S> bias) {
  const Tensor<S>& xv = g.value(x);
  const Tensor<S>& wv = g.value(weight);
  const int h = xv.dim(0), w = xv.dim(1), cin = xv.dim(2);
  if (wv.rank() != 4 || wv.dim(0) != 3 || wv.dim(1) != 3 || wv.dim(2) != cin)
    throw std::invalid_argument("conv3x3: weight shape mismatch");
  const int cout = wv.dim(3);
  const std::int64_t pixels = static_cast<std::int64_t>(h) * w;

  Tensor<S> col({static_cast<int>(pixels), 9 * cin});
  graph_detail::im2col_3x3(xv, col);
  Tensor<S> out({h, w, cout});
  out.as_matrix(pixels, cout).noalias() = col.as_matrix(pixels, 9 * cin) * wv.as_matrix(9 * cin, cout);
  const auto& bv = g.value(bias);
  out.as_matrix(pixels, cout).rowwise() += ConstMatMap<S>(bv.data(), 1, cout).row(0);

  return g.make(
      std::move(out),
      [x, weight, bias, h, w, cin, cout, pixels](Graph<S>& g2, Var<S> self) {
        const Tensor<S>& dy = g2.grad(self);
        auto dym = dy.as_matrix(pixels, cout);
        if (g2.requires_grad(weight) || g2.requires_grad(x)) {
          // the column matrix is rebuilt instead of cached: it is the largest
          // intermediate and episodes hold many conv nodes at once
          Tensor<S> col2({static_cast<int>(pixels), 9 * cin});
          graph_detail::im2col_3x3(g2.value(x), col2);
          if (g2.requires_grad(weight)) {
            g2.grad(weight).as_matrix(9 * cin, cout).noalias() +=
                col2.as_matrix(pixels, 9 * cin).transpose() * dym;
          }
          if (g2.requires_grad(x)) {
            Tensor<S> dcol({static_cast<int>(pixels), 9 * cin});
            dcol.as_matrix(pixels, 9 * cin).noalias() =
                dym * g2.value(weight).as_matrix(9 * cin, cout).transpose();
            graph_detail::col2im_3x3(dcol, g2.grad(x));
          }
        }
        if (g2.requires_grad(bias))
          MatMap<S>(g2.grad(bias).data(), 1, cout).row(0) += dym.colwise().sum();
      },
      {x, weight, bias});
}

/// 1x1 convolution: per-pixel linear map. weight (Cin,Cout), bias (Cout).
template <typename S>
Var<S> conv1x1(Graph<S>& g, Var<S> x, Var<S> weight, Var<S> bias) {
  const Tensor<S>& xv = g.value(x);
  const Tensor<S>& wv = g.value(weight);
  const int h = xv.dim(0), w = xv.dim(1), cin = xv.dim(2);
  if (wv.rank() != 2 || wv.dim(0) != cin) throw std::invalid_argument("conv1x1: weight shape mismatch");
  const int cout = wv.dim(1);
  const std::int64_t pixels = static_cast<std::int64_t>(h) * w;

  Tensor<S> out({h, w, cout});
  out.as_matrix(pixels, cout).noalias() = xv.as_matrix(pixels, cin) * wv.as_matrix(cin, cout);
  out.as_matrix(pixels, cout).rowwise() += ConstMatMap<S>(g.value(bias).data(), 1, cout).row(0);

  return g.make(
      std::move(out),
      [x, weight, bias, cin, cout, pixels](Graph<S>& g2, Var<S> self) {
        auto dym = g2.grad(self).as_matrix(pixels, cout);
        if (g2.requires_grad(weight))
          g2.grad(weight).as_matrix(cin, cout).noalias() +=
              g2.value(x).as_matrix(pixels, cin).transpose() * dym;
        if (g2.requires_grad(x))
          g2.grad(x).as_matrix(pixels, cin).noalias() +=
              dym * g2.value(weight).as_matrix(cin, cout).transpose();
        if (g2.requires_grad(bias))
          MatMap<S>(g2.grad(bias).data(), 1, cout).row(0) += dym.colwise().sum();
      },
      {x, weight, bias});
}

/// Transposed convolution, kernel 2, stride 2 (exact 2x upscale).
/// weight (Cin,2,2,Cout): out(2y+ky, 2x+kx, co) = sum_ci in(y,x,ci) * w(ci,ky,kx,co).
template <typename S>
Var<S> tconv2x(Graph<S>& g, Var<S> x, Var<S> weight, Var<S> bias) {
  const Tensor<S>& xv = g.value(x);
  const Tensor<S>& wv = g.value(weight);
  const int h = xv.dim(0), w = xv.dim(1), cin = xv.dim(2);
  if (wv.rank() != 4 || wv.dim(0) != cin || wv.dim(1) != 2 || wv.dim(2) != 2)
    throw std::invalid_argument("tconv2x: weight shape mismatch");
  const int cout = wv.dim(3);
  const std::int64_t pixels = static_cast<std::int64_t>(h) * w;

  Tensor<S> res({static_cast<int>(pixels), 4 * cout});
  res.as_matrix(pixels, 4 * cout).noalias() = xv.as_matrix(pixels, cin) * wv.as_matrix(cin, 4 * cout);

  Tensor<S> out({2 * h, 2 * w, cout});
  const auto& bv = g.value(bias);
  for (int y = 0; y < h; ++y)
    for (int xx = 0; xx < w; ++xx) {
      const S* r = res.data() + (static_cast<std::int64_t>(y) * w + xx) * 4 * cout;
      for (int ky = 0; ky < 2; ++ky)
        for (int kx = 0; kx < 2; ++kx) {
          S* o = out.data() + ((static_cast<std::int64_t>(2 * y + ky)) * 2 * w + 2 * xx + kx) * cout;
          const S* rr = r + (ky * 2 + kx) * cout;
          for (int c = 0; c < cout; ++c) o[c] = rr[c] + bv[c];
        }
    }

  return g.make(
      std::move(out),
      [x, weight, bias, h, w, cin, cout, pixels](Graph<S>& g2, Var<S> self) {
        const Tensor<S>& dy = g2.grad(self);
        Tensor<S> dres({static_cast<int>(pixels), 4 * cout});
        for (int y = 0; y < h; ++y)
          for (int xx = 0; xx < w; ++xx) {
            S* r = dres.data() + (static_cast<std::int64_t>(y) * w + xx) * 4 * cout;
            for (int ky = 0; ky < 2; ++ky)
              for (int kx = 0; kx < 2; ++kx) {
                const S* o = dy.data() + ((static_cast<std::int64_t>(2 * y + ky)) * 2 * w + 2 * xx + kx) * cout;
                S* rr = r + (ky * 2 + kx) * cout;
                for (int c = 0; c < cout; ++c) rr[c] = o[c];
              }
          }
        if (g2.requires_grad(weight))
          g2.grad(weight).as_matrix(cin, 4 * cout).noalias() +=
              g2.value(x).as_matrix(pixels, cin).transpose() * dres.as_matrix(pixels, 4 * cout);
        if (g2.requires_grad(x))
          g2.grad(x).as_matrix(pixels, cin).noalias() +=
              dres.as_matrix(pixels, 4 * cout) * g2.value(weight).as_matrix(cin, 4 * cout).transpose();
        if (g2.requires_grad(bias)) {
          Tensor<S>& db = g2.grad(bias);
          const std::int64_t opix = 4 * pixels;
          for (std::int64_t p = 0; p < opix; ++p)
            for (int c = 0; c < cout; ++c) db[c] += dy[p * cout + c];
        }
      },
      {x, weight, bias});
}

/// 2x2 average pooling (input dims must be even).
template <typename S>
Var<S> avgpool2(Graph<S>& g, Var<S> x) {
  const Tensor<S>& xv = g.value(x);
  const int h = xv.dim(0), w = xv.dim(1), ch = xv.dim(2);
  if (h % 2 || w % 2) throw std::invalid_argument("avgpool2: odd input dims");
  Tensor<S> out({h / 2, w / 2, ch});
  for (int y = 0; y < h / 2; ++y)
    for (int xx = 0; xx < w / 2; ++xx)
      for (int c = 0; c < ch; ++c)
        out(y, xx, c) = (xv(2 * y, 2 * xx, c) + xv(2 * y, 2 * xx + 1, c) + xv(2 * y + 1, 2 * xx, c) +
                         xv(2 * y + 1, 2 * xx + 1, c)) /
                        S(4);
  return g.make(
      std::move(out),
      [x, h, w, ch](Graph<S>& g2, Var<S> self) {
        if (!g2.requires_grad(x)) return;
        const Tensor<S>& dy = g2.grad(self);
        Tensor<S>& dx = g2.grad(x);
        for (int y = 0; y < h / 2; ++y)
          for (int xx = 0; xx < w / 2; ++xx)
            for (int c = 0; c < ch; ++c) {
              const S v = dy(y, xx, c) / S(4);
              dx(2 * y, 2 * xx, c) += v;
              dx(2 * y, 2 * xx + 1, c) += v;
              dx(2 * y + 1, 2 * xx, c) += v;
              dx(2 * y + 1, 2 * xx + 1, c) += v;
            }
      },
      {x});
}

/// Area-average downsample by integer factors (matrix skip connections).
template <typename S>
Var<S> avgpool_to(Graph<S>& g, Var<S> x, int out_h, int out_w) {
  const Tensor<S>& xv = g.value(x);
  const int h = xv.dim(0), w = xv.dim(1), ch = xv.dim(2);
  if (h % out_h || w % out_w) throw std::invalid_argument("avgpool_to: output must divide input");
  const int fy = h / out_h, fx = w / out_w;
  Tensor<S> out({out_h, out_w, ch});
  const S inv = S(1) / static_cast<S>(fy * fx);
  for (int oy = 0; oy < out_h; ++oy)
    for (int ox = 0; ox < out_w; ++ox)
      for (int c = 0; c < ch; ++c) {
        S acc = 0;
        for (int dy = 0; dy < fy; ++dy)
          for (int dx = 0; dx < fx; ++dx) acc += xv(oy * fy + dy, ox * fx + dx, c);
        out(oy, ox, c) = acc * inv;
      }
  return g.make(
      std::move(out),
      [x, out_h, out_w, fy, fx, ch](Graph<S>& g2, Var<S> self) {
        if (!g2.requires_grad(x)) return;
        const Tensor<S>& dy = g2.grad(self);
        Tensor<S>& dx = g2.grad(x);
        const S inv2 = S(1) / static_cast<S>(fy * fx);
        for (int oy = 0; oy < out_h; ++oy)
          for (int ox = 0; ox < out_w; ++ox)
            for (int c = 0; c < ch; ++c) {
              const S v = dy(oy, ox, c) * inv2;
              for (int dy2 = 0; dy2 < fy; ++dy2)
                for (int dx2 = 0; dx2 < fx; ++dx2) dx(oy * fy + dy2, ox * fx + dx2, c) += v;
            }
      },
      {x});
}

/// Adaptive average pooling; cell i covers [floor(i*H/out), ceil((i+1)*H/out)).
template <typename S>
Var<S> adaptive_avgpool(Graph<S>& g, Var<S> x, int out_h, int out_w) {
  const Tensor<S>& xv = g.value(x);
  const int h = xv.dim(0), w = xv.dim(1), ch = xv.dim(2);
  const auto lo = [](int i, int in, int out) { return (i * in) / out; };
  const auto hi = [](int i, int in, int out) { return ((i + 1) * in + out - 1) / out; };
  Tensor<S> out({out_h, out_w, ch});
  for (int oy = 0; oy < out_h; ++oy) {
    const int y0 = lo(oy, h, out_h), y1 = hi(oy, h, out_h);
    for (int ox = 0; ox < out_w; ++ox) {
      const int x0 = lo(ox, w, out_w), x1 = hi(ox, w, out_w);
      const S inv = S(1) / static_cast<S>((y1 - y0) * (x1 - x0));
      for (int c = 0; c < ch; ++c) {
        S acc = 0;
        for (int y = y0; y < y1; ++y)
          for (int xx = x0; xx < x1; ++xx) acc += xv(y, xx, c);
        out(oy, ox, c) = acc * inv;
      }
    }
  }
  return g.make(
      std::move(out),
      [x, out_h, out_w, h, w, ch, lo, hi](Graph<S>& g2, Var<S> self) {
        if (!g2.requires_grad(x)) return;
        const Tensor<S>& dy = g2.grad(self);
        Tensor<S>& dx = g2.grad(x);
        for (int oy = 0; oy < out_h; ++oy) {
          const int y0 = lo(oy, h, out_h), y1 = hi(oy, h, out_h);
          for (int ox = 0; ox < out_w; ++ox) {
            const int x0 = lo(ox, w, out_w), x1 = hi(ox, w, out_w);
            const S inv = S(1) / static_cast<S>((y1 - y0) * (x1 - x0));
            for (int c = 0; c < ch; ++c) {
              const S v = dy(oy, ox, c) * inv;
              for (int y = y0; y < y1; ++y)
                for (int xx = x0; xx < x1; ++xx) dx(y, xx, c) += v;
            }
          }
        }
      },
      {x});
}

/// Mean over pixels, (H,W,C) -> (C).
template <typename S>
Var<S> global_avgpool(Graph<S>& g, Var<S> x) {
  const Tensor<S>& xv = g.value(x);
  const int ch = xv.dim(2);
  const std::int64_t pixels = static_cast<std::int64_t>(xv.dim(0)) * xv.dim(1);
  Tensor<S> out({ch});
  MatMap<S>(out.data(), 1, ch).row(0) = xv.as_matrix(pixels, ch).colwise().mean();
  return g.make(
      std::move(out),
      [x, ch, pixels](Graph<S>& g2, Var<S> self) {
        if (!g2.requires_grad(x)) return;
        const Tensor<S>& dy = g2.grad(self);
        auto dxm = g2.grad(x).as_matrix(pixels, ch);
        const S inv = S(1) / static_cast<S>(pixels);
        dxm.rowwise() += ConstMatMap<S>(dy.data(), 1, ch).row(0) * inv;
      },
      {x});
}

/// Channel concatenation of two HWC tensors.
template <typename S>
Var<S> concat_channels(Graph<S>& g, Var<S> a, Var<S> b) {
  const Tensor<S>& av = g.value(a);
  const Tensor<S>& bv = g.value(b);
  if (av.dim(0) != bv.dim(0) || av.dim(1) != bv.dim(1))
    throw std::invalid_argument("concat_channels: spatial dims mismatch");
  const int h = av.dim(0), w = av.dim(1), ca = av.dim(2), cb = bv.dim(2);
  Tensor<S> out({h, w, ca + cb});
  const std::int64_t pixels = static_cast<std::int64_t>(h) * w;
  for (std::int64_t p = 0; p < pixels; ++p) {
    for (int c = 0; c < ca; ++c) out[p * (ca + cb) + c] = av[p * ca + c];
    for (int c = 0; c < cb; ++c) out[p * (ca + cb) + ca + c] = bv[p * cb + c];
  }
  return g.make(
      std::move(out),
      [a, b, ca, cb, pixels](Graph<S>& g2, Var<S> self) {
        const Tensor<S>& dy = g2.grad(self);
        if (g2.requires_grad(a)) {
          Tensor<S>& da = g2.grad(a);
          for (std::int64_t p = 0; p < pixels; ++p)
            for (int c = 0; c < ca; ++c) da[p * ca + c] += dy[p * (ca + cb) + c];
        }
        if (g2.requires_grad(b)) {
          Tensor<S>& db = g2.grad(b);
          for (std::int64_t p = 0; p < pixels; ++p)
            for (int c = 0; c < cb; ++c) db[p * cb + c] += dy[p * (ca + cb) + ca + c];
        }
      },
      {a, b});
}

// ---------------------------------------------------------------------------
// fully connected
// ---------------------------------------------------------------------------

/// y = x . W + b with x treated as flat; weight (in,out), bias (out).
template <typename S>
Var<S> fully_connected(Graph<S>& g, Var<S> x, Var<S> weight, Var<S> bias) {
  const Tensor<S>& xv = g.value(x);
  const Tensor<S>& wv = g.value(weight);
  const std::int64_t in = xv.size();
  if (wv.rank() != 2 || wv.dim(0) != in) throw std::invalid_argument("fully_connected: weight shape mismatch");
  const int out_dim = wv.dim(1);
  Tensor<S> out({out_dim});
  MatMap<S>(out.data(), 1, out_dim).noalias() =
      ConstMatMap<S>(xv.data(), 1, in) * wv.as_matrix(in, out_dim);
  out.array() += g.value(bias).array();
  return g.make(
      std::move(out),
      [x, weight, bias, in, out_dim](Graph<S>& g2, Var<S> self) {
        const Tensor<S>& dy = g2.grad(self);
        if (g2.requires_grad(weight))
          g2.grad(weight).as_matrix(in, out_dim).noalias() +=
              ConstMatMap<S>(g2.value(x).data(), in, 1) * ConstMatMap<S>(dy.data(), 1, out_dim);
        if (g2.requires_grad(x))
          MatMap<S>(g2.grad(x).data(), 1, in).noalias() +=
              ConstMatMap<S>(dy.data(), 1, out_dim) * g2.value(weight).as_matrix(in, out_dim).transpose();
        if (g2.requires_grad(bias)) g2.grad(bias).array() += dy.array();
      },
      {x, weight, bias});
}

// ---------------------------------------------------------------------------
// memory scatter ops
// ---------------------------------------------------------------------------

/// Overwrite matrix pixels listed in (dst,src) pairs with patch content.
/// Gradient flows to the patch at written pixels and to the previous matrix
/// elsewhere (newest-write-wins, so older writes under the footprint get no
/// gradient through this op).
template <typename S>
Var<S> paste(Graph<S>& g, Var<S> matrix, Var<S> patch,
             std::shared_ptr<const std::vector<std::pair<int, int>>> pairs) {
  const Tensor<S>& mv = g.value(matrix);
  const Tensor<S>& pv = g.value(patch);
  const int ch = mv.dim(2);
  Tensor<S> out = mv;
  for (const auto& [dst, src] : *pairs)
    for (int c = 0; c < ch; ++c) out[static_cast<std::int64_t>(dst) * ch + c] = pv[static_cast<std::int64_t>(src) * ch + c];
  return g.make(
      std::move(out),
      [matrix, patch, pairs, ch](Graph<S>& g2, Var<S> self) {
        const Tensor<S>& dy = g2.grad(self);
        if (g2.requires_grad(patch)) {
          Tensor<S>& dp = g2.grad(patch);
          for (const auto& [dst, src] : *pairs)
            for (int c = 0; c < ch; ++c) dp[static_cast<std::int64_t>(src) * ch + c] += dy[static_cast<std::int64_t>(dst) * ch + c];
        }
        if (g2.requires_grad(matrix)) {
          Tensor<S>& dm = g2.grad(matrix);
          Tensor<S> masked = dy;
          for (const auto& [dst, src] : *pairs)
            for (int c = 0; c < ch; ++c) masked[static_cast<std::int64_t>(dst) * ch + c] = S(0);
          dm.array() += masked.array();
        }
      },
      {matrix, patch});
}

/// Overwrite one slot of a flat slotted vector with a feature block.
template <typename S>
Var<S> slot_write(Graph<S>& g, Var<S> vec, Var<S> feat, int slot) {
  const Tensor<S>& vv = g.value(vec);
  const Tensor<S>& fv = g.value(feat);
  const int f = static_cast<int>(fv.size());
  const std::int64_t base = static_cast<std::int64_t>(slot) * f;
  if (base + f > vv.size()) throw std::out_of_range("slot_write: slot out of range");
  Tensor<S> out = vv;
  for (int j = 0; j < f; ++j) out[base + j] = fv[j];
  return g.make(
      std::move(out),
      [vec, feat, base, f](Graph<S>& g2, Var<S> self) {
        const Tensor<S>& dy = g2.grad(self);
        if (g2.requires_grad(feat)) {
          Tensor<S>& df = g2.grad(feat);
          for (int j = 0; j < f; ++j) df[j] += dy[base + j];
        }
        if (g2.requires_grad(vec)) {
          Tensor<S>& dv = g2.grad(vec);
          for (std::int64_t i = 0; i < dy.size(); ++i)
            if (i < base || i >= base + f) dv[i] += dy[i];
        }
      },
      {vec, feat});
}

// ---------------------------------------------------------------------------
// losses
// ---------------------------------------------------------------------------

/// Mean absolute difference against a constant target over mask-true pixels
/// (all channels). Returns 0 for an empty mask.
template <typename S>
Var<S> l1_loss(Graph<S>& g, Var<S> pred, const Tensor<S>& target, const Tensor<std::uint8_t>* pixel_mask = nullptr) {
  const Tensor<S>& pv = g.value(pred);
  if (!pv.same_shape(target)) throw std::invalid_argument("l1_loss: shape mismatch");
  const int ch = pv.rank() == 3 ? pv.dim(2) : 1;
  const std::int64_t pixels = pv.size() / ch;
  std::int64_t count = 0;
  S acc = 0;
  for (std::int64_t p = 0; p < pixels; ++p) {
    if (pixel_mask && !(*pixel_mask)[p]) continue;
    count += ch;
    for (int c = 0; c < ch; ++c) acc += std::abs(pv[p * ch + c] - target[p * ch + c]);
  }
  const S denom = count ? static_cast<S>(count) : S(1);
  auto target_copy = std::make_shared<Tensor<S>>(target);
  std::shared_ptr<Tensor<std::uint8_t>> mask_copy;
  if (pixel_mask) mask_copy = std::make_shared<Tensor<std::uint8_t>>(*pixel_mask);
  return g.make(
      Tensor<S>::scalar(acc / denom),
      [pred, target_copy, mask_copy, ch, pixels, denom](Graph<S>& g2, Var<S> self) {
        if (!g2.requires_grad(pred)) return;
        const S up = g2.grad(self)[0] / denom;
        const Tensor<S>& pv2 = g2.value(pred);
        Tensor<S>& dp = g2.grad(pred);
        for (std::int64_t p = 0; p < pixels; ++p) {
          if (mask_copy && !(*mask_copy)[p]) continue;
          for (int c = 0; c < ch; ++c) {
            const S d = pv2[p * ch + c] - (*target_copy)[p * ch + c];
            dp[p * ch + c] += d > S(0) ? up : (d < S(0) ? -up : S(0));
          }
        }
      },
      {pred});
}

/// Dot product with a constant weighting, reducing any tensor to a scalar.
template <typename S>
Var<S> weighted_sum(Graph<S>& g, Var<S> x, const Tensor<S>& weights) {
  const Tensor<S>& xv = g.value(x);
  if (xv.size() != weights.size()) throw std::invalid_argument("weighted_sum: size mismatch");
  auto wcopy = std::make_shared<Tensor<S>>(weights);
  return g.make(
      Tensor<S>::scalar((xv.array() * weights.array()).sum()),
      [x, wcopy](Graph<S>& g2, Var<S> self) {
        if (!g2.requires_grad(x)) return;
        g2.grad(x).array() += g2.grad(self)[0] * wcopy->array();
      },
      {x});
}

/// -log softmax(logits)[label].
template <typename S>
Var<S> softmax_cross_entropy(Graph<S>& g, Var<S> logits, int label) {
  const Tensor<S>& lv = g.value(logits);
  const std::int64_t n = lv.size();
  if (label < 0 || label >= n) throw std::out_of_range("softmax_cross_entropy: label out of range");
  const S m = lv.array().maxCoeff();
  const S lse = m + std::log((lv.array() - m).exp().sum());
  return g.make(
      Tensor<S>::scalar(lse - lv[label]),
      [logits, label, lse](Graph<S>& g2, Var<S> self) {
        if (!g2.requires_grad(logits)) return;
        const S up = g2.grad(self)[0];
        const Tensor<S>& lv2 = g2.value(logits);
        Tensor<S>& dl = g2.grad(logits);
        dl.array() += up * (lv2.array() - lse).exp();
        dl[label] -= up;
      },
      {logits});
}

/// Cross-entropy against a full target distribution (sensitivity variant of
/// the attention loss): -sum_i q_i log softmax(logits)_i.
template <typename S>
Var<S> softmax_cross_entropy_dist(Graph<S>& g, Var<S> logits, const std::vector<double>& target) {
  const Tensor<S>& lv = g.value(logits);
  const std::int64_t n = lv.size();
  if (static_cast<std::int64_t>(target.size()) != n)
    throw std::invalid_argument("softmax_cross_entropy_dist: size mismatch");
  const S m = lv.array().maxCoeff();
  const S lse = m + std::log((lv.array() - m).exp().sum());
  S loss = 0;
  for (std::int64_t i = 0; i < n; ++i) loss += static_cast<S>(target[static_cast<size_t>(i)]) * (lse - lv[i]);
  auto tcopy = std::make_shared<std::vector<double>>(target);
  return g.make(
      Tensor<S>::scalar(loss),
      [logits, tcopy, lse, n](Graph<S>& g2, Var<S> self) {
        if (!g2.requires_grad(logits)) return;
        const S up = g2.grad(self)[0];
        const Tensor<S>& lv2 = g2.value(logits);
        Tensor<S>& dl = g2.grad(logits);
        dl.array() += up * (lv2.array() - lse).exp();  // sum_i q_i = 1
        for (std::int64_t i = 0; i < n; ++i) dl[i] -= up * static_cast<S>((*tcopy)[static_cast<size_t>(i)]);
      },
      {logits});
}

/// Numerically stable softmax of a plain tensor (no graph).
template <typename S>
std::vector<double> softmax_values(const Tensor<S>& logits) {
  const double m = static_cast<double>(logits.array().maxCoeff());
  std::vector<double> p(static_cast<size_t>(logits.size()));
  double sum = 0;
  for (std::int64_t i = 0; i < logits.size(); ++i) {
    p[static_cast<size_t>(i)] = std::exp(static_cast<double>(logits[i]) - m);
    sum += p[static_cast<size_t>(i)];
  }
  for (auto& v : p) v /= sum;
  return p;
}

}  // namespace pano
