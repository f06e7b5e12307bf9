// confp/autodiff.hpp

// Copyright 2026  confp authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <atomic>
#include <cmath>
#include <functional>
#include <memory>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "confp/common.hpp"
#include "confp/rng.hpp"
#include "confp/tensor.hpp"

namespace confp::ad {

// Reverse-mode autodiff over a define-by-run DAG. Each operation records a
// backward closure; Backward() walks the graph once in reverse topological
// order and accumulates into every reachable differentiable leaf.

inline std::atomic<bool>& FiniteCheckFlag() {
  static std::atomic<bool> flag{false};
  return flag;
}
inline void SetFiniteChecks(bool on) { FiniteCheckFlag().store(on); }
inline bool FiniteChecksEnabled() { return FiniteCheckFlag().load(); }

template <typename Real>
class Node {
 public:
  Tensor<Real> value;
  Tensor<Real> grad;
  bool grad_alloc = false;
  bool requires_grad = false;
  std::string name;  // set for parameters
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;

  const Tensor<Real>& Grad() const {
    static const Tensor<Real> empty;
    return grad_alloc ? grad : empty;
  }

  void Accumulate(const Tensor<Real>& g) {
    if (!requires_grad) return;
    if (!grad_alloc) {
      grad = Tensor<Real>::Zeros(value.shape);
      grad_alloc = true;
    }
    for (std::size_t i = 0; i < grad.data.size(); ++i) grad.data[i] += g.data[i];
  }
};

template <typename Real>
using Var = std::shared_ptr<Node<Real>>;

template <typename Real>
Var<Real> Constant(Tensor<Real> t) {
  auto n = std::make_shared<Node<Real>>();
  n->value = std::move(t);
  return n;
}

template <typename Real>
Var<Real> Parameter(Tensor<Real> t, std::string name) {
  auto n = std::make_shared<Node<Real>>();
  n->value = std::move(t);
  n->requires_grad = true;
  n->name = std::move(name);
  return n;
}

template <typename Real, typename F>
Var<Real> MakeNode(const char* op, Tensor<Real> value, std::vector<Var<Real>> parents, F&& fn) {
  if (FiniteChecksEnabled() && !value.AllFinite())
    throw DomainError(std::string(op) + ": produced non-finite values");
  auto n = std::make_shared<Node<Real>>();
  n->value = std::move(value);
  n->parents = std::move(parents);
  for (const auto& p : n->parents)
    if (p->requires_grad) n->requires_grad = true;
  if (n->requires_grad) n->backward_fn = std::forward<F>(fn);
  return n;
}

// --- raw kernels ------------------------------------------------------------

template <typename Real>
Tensor<Real> MatMulRaw(const Tensor<Real>& a, const Tensor<Real>& b, bool trans_a, bool trans_b) {
  const int m = trans_a ? a.cols() : a.rows();
  const int k = trans_a ? a.rows() : a.cols();
  const int kb = trans_b ? b.cols() : b.rows();
  const int n = trans_b ? b.rows() : b.cols();
  if (k != kb)
    throw ShapeError("matmul: inner dimensions differ, " + ShapePair(a, b));
  Tensor<Real> c({m, n});
  // ikj order keeps the inner loop contiguous for the untransposed case.
  for (int i = 0; i < m; ++i) {
    Real* crow = &c.data[static_cast<std::size_t>(i) * n];
    for (int kk = 0; kk < k; ++kk) {
      const Real av = trans_a ? a.at(kk, i) : a.at(i, kk);
      if (av == Real(0)) continue;
      if (!trans_b) {
        const Real* brow = &b.data[static_cast<std::size_t>(kk) * n];
        for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
      } else {
        for (int j = 0; j < n; ++j) crow[j] += av * b.at(j, kk);
      }
    }
  }
  return c;
}

// --- core ops ---------------------------------------------------------------

template <typename Real>
Var<Real> MatMul(Var<Real> a, Var<Real> b) {
  if (a->value.rank() != 2 || b->value.rank() != 2)
    throw ShapeError("matmul: expects rank-2 operands, " + ShapePair(a->value, b->value));
  Tensor<Real> out = MatMulRaw(a->value, b->value, false, false);
  return MakeNode("matmul", std::move(out), {a, b}, [](Node<Real>& self) {
    auto& a = *self.parents[0];
    auto& b = *self.parents[1];
    if (a.requires_grad) a.Accumulate(MatMulRaw(self.grad, b.value, false, true));
    if (b.requires_grad) b.Accumulate(MatMulRaw(a.value, self.grad, true, false));
  });
}

/// Elementwise add; the right operand may also be a row vector broadcast over
/// the left operand's rows (bias add).
template <typename Real>
Var<Real> Add(Var<Real> a, Var<Real> b) {
  const auto& ta = a->value;
  const auto& tb = b->value;
  const bool broadcast = !ta.same_shape(tb);
  if (broadcast && !(ta.rank() == 2 && tb.cols() == ta.cols() && tb.rows() == 1))
    throw ShapeError("add: incompatible shapes " + ShapePair(ta, tb));
  Tensor<Real> out = ta;
  if (!broadcast) {
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] += tb.data[i];
  } else {
    for (int i = 0; i < ta.rows(); ++i)
      for (int j = 0; j < ta.cols(); ++j) out.at(i, j) += tb.data[static_cast<std::size_t>(j)];
  }
  return MakeNode("add", std::move(out), {a, b}, [broadcast](Node<Real>& self) {
    auto& a = *self.parents[0];
    auto& b = *self.parents[1];
    if (a.requires_grad) a.Accumulate(self.grad);
    if (!b.requires_grad) return;
    if (!broadcast) {
      b.Accumulate(self.grad);
    } else {
      Tensor<Real> gb = Tensor<Real>::Zeros(b.value.shape);
      for (int i = 0; i < self.grad.rows(); ++i)
        for (int j = 0; j < self.grad.cols(); ++j)
          gb.data[static_cast<std::size_t>(j)] += self.grad.at(i, j);
      b.Accumulate(gb);
    }
  });
}

/// Elementwise product of same-shape tensors.
template <typename Real>
Var<Real> Mul(Var<Real> a, Var<Real> b) {
  if (!a->value.same_shape(b->value))
    throw ShapeError("mul: shapes differ, " + ShapePair(a->value, b->value));
  Tensor<Real> out = a->value;
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] *= b->value.data[i];
  return MakeNode("mul", std::move(out), {a, b}, [](Node<Real>& self) {
    auto& a = *self.parents[0];
    auto& b = *self.parents[1];
    if (a.requires_grad) {
      Tensor<Real> ga = self.grad;
      for (std::size_t i = 0; i < ga.data.size(); ++i) ga.data[i] *= b.value.data[i];
      a.Accumulate(ga);
    }
    if (b.requires_grad) {
      Tensor<Real> gb = self.grad;
      for (std::size_t i = 0; i < gb.data.size(); ++i) gb.data[i] *= a.value.data[i];
      b.Accumulate(gb);
    }
  });
}

template <typename Real>
Var<Real> Scale(Var<Real> a, double c) {
  Tensor<Real> out = a->value;
  for (auto& v : out.data) v = static_cast<Real>(v * c);
  return MakeNode("scale", std::move(out), {a}, [c](Node<Real>& self) {
    Tensor<Real> g = self.grad;
    for (auto& v : g.data) v = static_cast<Real>(v * c);
    self.parents[0]->Accumulate(g);
  });
}

template <typename Real>
Var<Real> Sub(Var<Real> a, Var<Real> b) {
  return Add(std::move(a), Scale(std::move(b), -1.0));
}

template <typename Real>
Var<Real> Transpose(Var<Real> a) {
  if (a->value.rank() != 2) throw ShapeError("transpose: expects rank-2 input");
  const int m = a->value.rows(), n = a->value.cols();
  Tensor<Real> out({n, m});
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) out.at(j, i) = a->value.at(i, j);
  return MakeNode("transpose", std::move(out), {a}, [](Node<Real>& self) {
    const int m = self.grad.rows(), n = self.grad.cols();
    Tensor<Real> g({n, m});
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j) g.at(j, i) = self.grad.at(i, j);
    self.parents[0]->Accumulate(g);
  });
}

template <typename Real>
Var<Real> Reshape(Var<Real> a, std::vector<int> shape) {
  if (Tensor<Real>::Numel(shape) != a->value.numel())
    throw ShapeError("reshape: element count mismatch for " + a->value.ShapeStr());
  Tensor<Real> out(std::move(shape), a->value.data);
  return MakeNode("reshape", std::move(out), {a}, [](Node<Real>& self) {
    Tensor<Real> g(self.parents[0]->value.shape, self.grad.data);
    self.parents[0]->Accumulate(g);
  });
}

/// Contiguous slice along axis 0 or 1 of a rank-2 tensor.
template <typename Real>
Var<Real> Slice(Var<Real> a, int axis, int start, int len) {
  if (a->value.rank() != 2) throw ShapeError("slice: expects rank-2 input");
  const int m = a->value.rows(), n = a->value.cols();
  const int bound = axis == 0 ? m : n;
  if (axis < 0 || axis > 1 || start < 0 || len <= 0 || start + len > bound)
    throw ShapeError("slice: range [" + std::to_string(start) + ", " +
                     std::to_string(start + len) + ") on axis " + std::to_string(axis) +
                     " of " + a->value.ShapeStr());
  Tensor<Real> out(axis == 0 ? std::vector<int>{len, n} : std::vector<int>{m, len});
  for (int i = 0; i < out.rows(); ++i)
    for (int j = 0; j < out.cols(); ++j)
      out.at(i, j) = axis == 0 ? a->value.at(start + i, j) : a->value.at(i, start + j);
  return MakeNode("slice", std::move(out), {a}, [axis, start](Node<Real>& self) {
    Tensor<Real> g = Tensor<Real>::Zeros(self.parents[0]->value.shape);
    for (int i = 0; i < self.grad.rows(); ++i)
      for (int j = 0; j < self.grad.cols(); ++j) {
        if (axis == 0)
          g.at(start + i, j) = self.grad.at(i, j);
        else
          g.at(i, start + j) = self.grad.at(i, j);
      }
    self.parents[0]->Accumulate(g);
  });
}

template <typename Real>
Var<Real> Concat(int axis, std::vector<Var<Real>> parts) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  if (axis < 0 || axis > 1) throw ShapeError("concat: axis must be 0 or 1");
  int rows = parts[0]->value.rows(), cols = parts[0]->value.cols();
  int total = 0;
  for (const auto& p : parts) {
    if (p->value.rank() != 2) throw ShapeError("concat: expects rank-2 inputs");
    if (axis == 0 && p->value.cols() != cols)
      throw ShapeError("concat: column mismatch");
    if (axis == 1 && p->value.rows() != rows)
      throw ShapeError("concat: row mismatch");
    total += axis == 0 ? p->value.rows() : p->value.cols();
  }
  Tensor<Real> out(axis == 0 ? std::vector<int>{total, cols} : std::vector<int>{rows, total});
  int off = 0;
  for (const auto& p : parts) {
    for (int i = 0; i < p->value.rows(); ++i)
      for (int j = 0; j < p->value.cols(); ++j) {
        if (axis == 0)
          out.at(off + i, j) = p->value.at(i, j);
        else
          out.at(i, off + j) = p->value.at(i, j);
      }
    off += axis == 0 ? p->value.rows() : p->value.cols();
  }
  return MakeNode("concat", std::move(out), std::move(parts), [axis](Node<Real>& self) {
    int off = 0;
    for (auto& parent : self.parents) {
      auto& p = *parent;
      const int pr = p.value.rows(), pc = p.value.cols();
      if (p.requires_grad) {
        Tensor<Real> g(p.value.shape);
        for (int i = 0; i < pr; ++i)
          for (int j = 0; j < pc; ++j)
            g.at(i, j) = axis == 0 ? self.grad.at(off + i, j) : self.grad.at(i, off + j);
        p.Accumulate(g);
      }
      off += axis == 0 ? pr : pc;
    }
  });
}

namespace detail {

template <typename Real>
void CheckAxis(const Tensor<Real>& t, int axis, const char* op) {
  if (t.rank() != 2 || (axis != 0 && axis != 1))
    throw ShapeError(std::string(op) + ": expects rank-2 input and axis 0/1, got " +
                     t.ShapeStr() + " axis " + std::to_string(axis));
}

}  // namespace detail

/// Numerically stable softmax along the given axis.
template <typename Real>
Var<Real> Softmax(Var<Real> a, int axis = 1) {
  detail::CheckAxis(a->value, axis, "softmax");
  const int m = a->value.rows(), n = a->value.cols();
  Tensor<Real> out({m, n});
  const int outer = axis == 1 ? m : n;
  const int inner = axis == 1 ? n : m;
  auto idx = [&](int o, int i) { return axis == 1 ? std::pair{o, i} : std::pair{i, o}; };
  for (int o = 0; o < outer; ++o) {
    double mx = -HUGE_VAL;
    for (int i = 0; i < inner; ++i) {
      auto [r, c] = idx(o, i);
      mx = std::max(mx, static_cast<double>(a->value.at(r, c)));
    }
    double denom = 0.0;
    for (int i = 0; i < inner; ++i) {
      auto [r, c] = idx(o, i);
      const double e = std::exp(static_cast<double>(a->value.at(r, c)) - mx);
      out.at(r, c) = static_cast<Real>(e);
      denom += e;
    }
    for (int i = 0; i < inner; ++i) {
      auto [r, c] = idx(o, i);
      out.at(r, c) = static_cast<Real>(out.at(r, c) / denom);
    }
  }
  return MakeNode("softmax", std::move(out), {a}, [axis](Node<Real>& self) {
    const auto& y = self.value;
    const int m = y.rows(), n = y.cols();
    Tensor<Real> g({m, n});
    const int outer = axis == 1 ? m : n;
    const int inner = axis == 1 ? n : m;
    auto idx = [&](int o, int i) { return axis == 1 ? std::pair{o, i} : std::pair{i, o}; };
    for (int o = 0; o < outer; ++o) {
      double dot = 0.0;
      for (int i = 0; i < inner; ++i) {
        auto [r, c] = idx(o, i);
        dot += static_cast<double>(self.grad.at(r, c)) * y.at(r, c);
      }
      for (int i = 0; i < inner; ++i) {
        auto [r, c] = idx(o, i);
        g.at(r, c) = static_cast<Real>(y.at(r, c) * (self.grad.at(r, c) - dot));
      }
    }
    self.parents[0]->Accumulate(g);
  });
}

/// log(softmax(x)) with max-subtraction; backward uses the cached probabilities.
template <typename Real>
Var<Real> LogSoftmax(Var<Real> a, int axis = 1) {
  detail::CheckAxis(a->value, axis, "log_softmax");
  const int m = a->value.rows(), n = a->value.cols();
  Tensor<Real> out({m, n});
  auto probs = std::make_shared<Tensor<Real>>(std::vector<int>{m, n});
  const int outer = axis == 1 ? m : n;
  const int inner = axis == 1 ? n : m;
  auto idx = [&](int o, int i) { return axis == 1 ? std::pair{o, i} : std::pair{i, o}; };
  for (int o = 0; o < outer; ++o) {
    double mx = -HUGE_VAL;
    for (int i = 0; i < inner; ++i) {
      auto [r, c] = idx(o, i);
      mx = std::max(mx, static_cast<double>(a->value.at(r, c)));
    }
    double denom = 0.0;
    for (int i = 0; i < inner; ++i) {
      auto [r, c] = idx(o, i);
      denom += std::exp(static_cast<double>(a->value.at(r, c)) - mx);
    }
    const double log_denom = std::log(denom) + mx;
    for (int i = 0; i < inner; ++i) {
      auto [r, c] = idx(o, i);
      const double ls = static_cast<double>(a->value.at(r, c)) - log_denom;
      out.at(r, c) = static_cast<Real>(ls);
      probs->at(r, c) = static_cast<Real>(std::exp(ls));
    }
  }
  return MakeNode("log_softmax", std::move(out), {a}, [axis, probs](Node<Real>& self) {
    const int m = probs->rows(), n = probs->cols();
    Tensor<Real> g({m, n});
    const int outer = axis == 1 ? m : n;
    const int inner = axis == 1 ? n : m;
    auto idx = [&](int o, int i) { return axis == 1 ? std::pair{o, i} : std::pair{i, o}; };
    for (int o = 0; o < outer; ++o) {
      double gsum = 0.0;
      for (int i = 0; i < inner; ++i) {
        auto [r, c] = idx(o, i);
        gsum += static_cast<double>(self.grad.at(r, c));
      }
      for (int i = 0; i < inner; ++i) {
        auto [r, c] = idx(o, i);
        g.at(r, c) = static_cast<Real>(self.grad.at(r, c) - probs->at(r, c) * gsum);
      }
    }
    self.parents[0]->Accumulate(g);
  });
}

/// Per-row layer norm with learned scale/offset (row vectors).
template <typename Real>
Var<Real> LayerNorm(Var<Real> x, Var<Real> gamma, Var<Real> beta, double eps = 1e-8) {
  const auto& t = x->value;
  if (t.rank() != 2) throw ShapeError("layer_norm: expects rank-2 input");
  const int m = t.rows(), n = t.cols();
  if (gamma->value.cols() != n || beta->value.cols() != n)
    throw ShapeError("layer_norm: scale/offset width mismatch");
  Tensor<Real> out({m, n});
  auto xhat = std::make_shared<Tensor<Real>>(std::vector<int>{m, n});
  auto inv_std = std::make_shared<std::vector<double>>(static_cast<std::size_t>(m));
  for (int i = 0; i < m; ++i) {
    double mean = 0.0;
    for (int j = 0; j < n; ++j) mean += t.at(i, j);
    mean /= n;
    double var = 0.0;
    for (int j = 0; j < n; ++j) {
      const double d = t.at(i, j) - mean;
      var += d * d;
    }
    var /= n;
    const double istd = 1.0 / std::sqrt(var + eps);
    (*inv_std)[static_cast<std::size_t>(i)] = istd;
    for (int j = 0; j < n; ++j) {
      const double xh = (t.at(i, j) - mean) * istd;
      xhat->at(i, j) = static_cast<Real>(xh);
      out.at(i, j) = static_cast<Real>(xh * gamma->value.data[static_cast<std::size_t>(j)] +
                                       beta->value.data[static_cast<std::size_t>(j)]);
    }
  }
  return MakeNode("layer_norm", std::move(out), {x, gamma, beta},
                  [xhat, inv_std](Node<Real>& self) {
    auto& x = *self.parents[0];
    auto& gamma = *self.parents[1];
    auto& beta = *self.parents[2];
    const int m = xhat->rows(), n = xhat->cols();
    if (x.requires_grad) {
      Tensor<Real> gx({m, n});
      for (int i = 0; i < m; ++i) {
        double mean_gg = 0.0, mean_ggx = 0.0;
        for (int j = 0; j < n; ++j) {
          const double gg = static_cast<double>(self.grad.at(i, j)) *
                            gamma.value.data[static_cast<std::size_t>(j)];
          mean_gg += gg;
          mean_ggx += gg * xhat->at(i, j);
        }
        mean_gg /= n;
        mean_ggx /= n;
        const double istd = (*inv_std)[static_cast<std::size_t>(i)];
        for (int j = 0; j < n; ++j) {
          const double gg = static_cast<double>(self.grad.at(i, j)) *
                            gamma.value.data[static_cast<std::size_t>(j)];
          gx.at(i, j) = static_cast<Real>(istd * (gg - mean_gg - xhat->at(i, j) * mean_ggx));
        }
      }
      x.Accumulate(gx);
    }
    if (gamma.requires_grad) {
      Tensor<Real> gg = Tensor<Real>::Zeros(gamma.value.shape);
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j)
          gg.data[static_cast<std::size_t>(j)] += self.grad.at(i, j) * xhat->at(i, j);
      gamma.Accumulate(gg);
    }
    if (beta.requires_grad) {
      Tensor<Real> gb = Tensor<Real>::Zeros(beta.value.shape);
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) gb.data[static_cast<std::size_t>(j)] += self.grad.at(i, j);
      beta.Accumulate(gb);
    }
  });
}

template <typename Real>
Var<Real> Sigmoid(Var<Real> a) {
  Tensor<Real> out = a->value;
  for (auto& v : out.data) v = static_cast<Real>(1.0 / (1.0 + std::exp(-static_cast<double>(v))));
  return MakeNode("sigmoid", std::move(out), {a}, [](Node<Real>& self) {
    Tensor<Real> g = self.grad;
    for (std::size_t i = 0; i < g.data.size(); ++i) {
      const Real y = self.value.data[i];
      g.data[i] *= y * (Real(1) - y);
    }
    self.parents[0]->Accumulate(g);
  });
}

/// x * sigmoid(x).
template <typename Real>
Var<Real> Swish(Var<Real> a) {
  Tensor<Real> out = a->value;
  for (auto& v : out.data) {
    const double s = 1.0 / (1.0 + std::exp(-static_cast<double>(v)));
    v = static_cast<Real>(v * s);
  }
  return MakeNode("swish", std::move(out), {a}, [](Node<Real>& self) {
    Tensor<Real> g = self.grad;
    const auto& x = self.parents[0]->value;
    for (std::size_t i = 0; i < g.data.size(); ++i) {
      const double s = 1.0 / (1.0 + std::exp(-static_cast<double>(x.data[i])));
      g.data[i] = static_cast<Real>(g.data[i] * (s * (1.0 + x.data[i] * (1.0 - s))));
    }
    self.parents[0]->Accumulate(g);
  });
}

template <typename Real>
Var<Real> Relu(Var<Real> a) {
  Tensor<Real> out = a->value;
  for (auto& v : out.data) v = v > Real(0) ? v : Real(0);
  return MakeNode("relu", std::move(out), {a}, [](Node<Real>& self) {
    Tensor<Real> g = self.grad;
    const auto& x = self.parents[0]->value;
    for (std::size_t i = 0; i < g.data.size(); ++i)
      if (x.data[i] <= Real(0)) g.data[i] = Real(0);
    self.parents[0]->Accumulate(g);
  });
}

/// Gated linear unit along axis 1: [a | b] -> a * sigmoid(b).
template <typename Real>
Var<Real> Glu(Var<Real> x, int axis = 1) {
  const auto& t = x->value;
  if (t.rank() != 2 || axis != 1) throw ShapeError("glu: expects rank-2 input, axis 1");
  if (t.cols() % 2 != 0) throw ShapeError("glu: width must be even, got " + t.ShapeStr());
  const int m = t.rows(), h = t.cols() / 2;
  Tensor<Real> out({m, h});
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < h; ++j) {
      const double s = 1.0 / (1.0 + std::exp(-static_cast<double>(t.at(i, h + j))));
      out.at(i, j) = static_cast<Real>(t.at(i, j) * s);
    }
  return MakeNode("glu", std::move(out), {x}, [h](Node<Real>& self) {
    const auto& t = self.parents[0]->value;
    const int m = t.rows();
    Tensor<Real> g = Tensor<Real>::Zeros(t.shape);
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < h; ++j) {
        const double s = 1.0 / (1.0 + std::exp(-static_cast<double>(t.at(i, h + j))));
        const double go = self.grad.at(i, j);
        g.at(i, j) = static_cast<Real>(go * s);
        g.at(i, h + j) = static_cast<Real>(go * t.at(i, j) * s * (1.0 - s));
      }
    self.parents[0]->Accumulate(g);
  });
}

/// Depthwise 1-D convolution over time (rows) with zero same-padding.
/// x: [T x C], kernel: [K x C] (K odd), bias: row vector [1 x C].
template <typename Real>
Var<Real> DepthwiseConv1d(Var<Real> x, Var<Real> kernel, Var<Real> bias) {
  const auto& t = x->value;
  const auto& w = kernel->value;
  if (t.rank() != 2 || w.rank() != 2 || w.cols() != t.cols())
    throw ShapeError("depthwise_conv1d: incompatible shapes " + ShapePair(t, w));
  if (w.rows() % 2 == 0) throw ShapeError("depthwise_conv1d: kernel size must be odd");
  if (bias->value.cols() != t.cols())
    throw ShapeError("depthwise_conv1d: bias width mismatch");
  const int T = t.rows(), C = t.cols(), K = w.rows(), P = (K - 1) / 2;
  Tensor<Real> out({T, C});
  for (int tt = 0; tt < T; ++tt)
    for (int c = 0; c < C; ++c) {
      double acc = bias->value.data[static_cast<std::size_t>(c)];
      for (int k = 0; k < K; ++k) {
        const int src = tt + k - P;
        if (src >= 0 && src < T) acc += static_cast<double>(w.at(k, c)) * t.at(src, c);
      }
      out.at(tt, c) = static_cast<Real>(acc);
    }
  return MakeNode("depthwise_conv1d", std::move(out), {x, kernel, bias},
                  [](Node<Real>& self) {
    auto& x = *self.parents[0];
    auto& kernel = *self.parents[1];
    auto& bias = *self.parents[2];
    const int T = x.value.rows(), C = x.value.cols(), K = kernel.value.rows(), P = (K - 1) / 2;
    if (x.requires_grad) {
      Tensor<Real> gx = Tensor<Real>::Zeros(x.value.shape);
      for (int u = 0; u < T; ++u)
        for (int c = 0; c < C; ++c) {
          double acc = 0.0;
          for (int k = 0; k < K; ++k) {
            const int tt = u - k + P;
            if (tt >= 0 && tt < T)
              acc += static_cast<double>(kernel.value.at(k, c)) * self.grad.at(tt, c);
          }
          gx.at(u, c) = static_cast<Real>(acc);
        }
      x.Accumulate(gx);
    }
    if (kernel.requires_grad) {
      Tensor<Real> gw = Tensor<Real>::Zeros(kernel.value.shape);
      for (int k = 0; k < K; ++k)
        for (int c = 0; c < C; ++c) {
          double acc = 0.0;
          for (int tt = 0; tt < T; ++tt) {
            const int src = tt + k - P;
            if (src >= 0 && src < T)
              acc += static_cast<double>(self.grad.at(tt, c)) * x.value.at(src, c);
          }
          gw.at(k, c) = static_cast<Real>(acc);
        }
      kernel.Accumulate(gw);
    }
    if (bias.requires_grad) {
      Tensor<Real> gb = Tensor<Real>::Zeros(bias.value.shape);
      for (int tt = 0; tt < T; ++tt)
        for (int c = 0; c < C; ++c) gb.data[static_cast<std::size_t>(c)] += self.grad.at(tt, c);
      bias.Accumulate(gb);
    }
  });
}

/// Inverted dropout: surviving activations are scaled by 1/(1-rate) during
/// training; eval mode returns the input node unchanged (bit-exact identity).
template <typename Real>
Var<Real> Dropout(Var<Real> a, double rate, Rng& rng, bool training) {
  if (rate < 0.0 || rate >= 1.0) throw DomainError("dropout: rate must be in [0, 1)");
  if (!training || rate == 0.0) return a;
  const double keep = 1.0 - rate;
  auto mask = std::make_shared<std::vector<Real>>(a->value.numel());
  Tensor<Real> out = a->value;
  for (std::size_t i = 0; i < out.data.size(); ++i) {
    const Real m = rng.Uniform() < keep ? static_cast<Real>(1.0 / keep) : Real(0);
    (*mask)[i] = m;
    out.data[i] *= m;
  }
  return MakeNode("dropout", std::move(out), {a}, [mask](Node<Real>& self) {
    Tensor<Real> g = self.grad;
    for (std::size_t i = 0; i < g.data.size(); ++i) g.data[i] *= (*mask)[i];
    self.parents[0]->Accumulate(g);
  });
}

/// Mean along an axis: axis 0 -> [1 x n], axis 1 -> [m x 1].
template <typename Real>
Var<Real> Mean(Var<Real> a, int axis) {
  detail::CheckAxis(a->value, axis, "mean");
  const int m = a->value.rows(), n = a->value.cols();
  Tensor<Real> out(axis == 0 ? std::vector<int>{1, n} : std::vector<int>{m, 1});
  if (axis == 0) {
    for (int j = 0; j < n; ++j) {
      double acc = 0.0;
      for (int i = 0; i < m; ++i) acc += a->value.at(i, j);
      out.data[static_cast<std::size_t>(j)] = static_cast<Real>(acc / m);
    }
  } else {
    for (int i = 0; i < m; ++i) {
      double acc = 0.0;
      for (int j = 0; j < n; ++j) acc += a->value.at(i, j);
      out.data[static_cast<std::size_t>(i)] = static_cast<Real>(acc / n);
    }
  }
  return MakeNode("mean", std::move(out), {a}, [axis](Node<Real>& self) {
    const auto& shape = self.parents[0]->value.shape;
    const int m = shape[0], n = shape[1];
    Tensor<Real> g({m, n});
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j)
        g.at(i, j) = axis == 0 ? static_cast<Real>(self.grad.data[static_cast<std::size_t>(j)] / m)
                               : static_cast<Real>(self.grad.data[static_cast<std::size_t>(i)] / n);
    self.parents[0]->Accumulate(g);
  });
}

template <typename Real>
Var<Real> SumAll(Var<Real> a) {
  double acc = 0.0;
  for (Real v : a->value.data) acc += v;
  Tensor<Real> out({1, 1});
  out.data[0] = static_cast<Real>(acc);
  return MakeNode("sum_all", std::move(out), {a}, [](Node<Real>& self) {
    Tensor<Real> g = Tensor<Real>::Full(self.parents[0]->value.shape, self.grad.data[0]);
    self.parents[0]->Accumulate(g);
  });
}

/// Row-wise l2 normalization (axis 1).
template <typename Real>
Var<Real> L2Normalize(Var<Real> a, int axis = 1) {
  const auto& t = a->value;
  if (t.rank() != 2 || axis != 1) throw ShapeError("l2_normalize: expects rank-2 input, axis 1");
  const int m = t.rows(), n = t.cols();
  Tensor<Real> out({m, n});
  auto norms = std::make_shared<std::vector<double>>(static_cast<std::size_t>(m));
  for (int i = 0; i < m; ++i) {
    double ss = 0.0;
    for (int j = 0; j < n; ++j) ss += static_cast<double>(t.at(i, j)) * t.at(i, j);
    const double r = std::max(std::sqrt(ss), 1e-30);
    (*norms)[static_cast<std::size_t>(i)] = r;
    for (int j = 0; j < n; ++j) out.at(i, j) = static_cast<Real>(t.at(i, j) / r);
  }
  return MakeNode("l2_normalize", std::move(out), {a}, [norms](Node<Real>& self) {
    const auto& y = self.value;
    const int m = y.rows(), n = y.cols();
    Tensor<Real> g({m, n});
    for (int i = 0; i < m; ++i) {
      double dot = 0.0;
      for (int j = 0; j < n; ++j) dot += static_cast<double>(self.grad.at(i, j)) * y.at(i, j);
      const double r = (*norms)[static_cast<std::size_t>(i)];
      for (int j = 0; j < n; ++j)
        g.at(i, j) = static_cast<Real>((self.grad.at(i, j) - y.at(i, j) * dot) / r);
    }
    self.parents[0]->Accumulate(g);
  });
}

/// Multi-head scaled dot-product attention composed from primitive ops.
/// q, k, v: [T x d] with d divisible by n_heads.
template <typename Real>
Var<Real> ScaledDotProductAttention(Var<Real> q, Var<Real> k, Var<Real> v, int n_heads) {
  const int d = q->value.cols();
  if (n_heads <= 0 || d % n_heads != 0)
    throw ShapeError("attention: width " + std::to_string(d) + " not divisible by " +
                     std::to_string(n_heads) + " heads");
  if (!q->value.same_shape(k->value) || !q->value.same_shape(v->value))
    throw ShapeError("attention: q/k/v shapes differ");
  const int dh = d / n_heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  std::vector<Var<Real>> heads;
  heads.reserve(static_cast<std::size_t>(n_heads));
  for (int h = 0; h < n_heads; ++h) {
    auto qh = Slice(q, 1, h * dh, dh);
    auto kh = Slice(k, 1, h * dh, dh);
    auto vh = Slice(v, 1, h * dh, dh);
    auto scores = Scale(MatMul(qh, Transpose(kh)), inv_sqrt);
    heads.push_back(MatMul(Softmax(scores, 1), vh));
  }
  return n_heads == 1 ? heads[0] : Concat(1, std::move(heads));
}

/// Reverse pass from a scalar root; gradients accumulate on every
/// differentiable node reachable from it.
template <typename Real>
void Backward(const Var<Real>& root) {
  if (root->value.numel() != 1)
    throw ShapeError("backward: root must be scalar, got " + root->value.ShapeStr());
  // Iterative post-order DFS for reverse topological order.
  std::vector<Node<Real>*> order;
  std::unordered_set<Node<Real>*> visited;
  std::vector<std::pair<Node<Real>*, std::size_t>> stack;
  stack.emplace_back(root.get(), 0);
  visited.insert(root.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node<Real>* p = node->parents[next++].get();
      if (visited.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  Tensor<Real> seed({1, 1});
  seed.data[0] = Real(1);
  if (root->requires_grad) root->Accumulate(seed);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<Real>* node = *it;
    if (node->requires_grad && node->grad_alloc && node->backward_fn)
      node->backward_fn(*node);
  }
}

}  // namespace confp::ad
