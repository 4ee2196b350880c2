// Copyright 2026 The SMAE Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Reverse-mode differentiation over a single-use tape.
//
// A Tape records every operation applied to Vars created from it. Nodes are
// appended in creation order, which is a valid topological order, so
// backward() walks the node list once from the loss down to index 0.
// Parameter leaves reference external storage (the model's tensors) and carry
// a parameter id; backward() returns one gradient per registered id.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include "smae/error.hpp"
#include "smae/tensor.hpp"

namespace smae::ad {

class Tape;

/// Handle to a node on a Tape. Cheap to copy; only valid while the tape lives.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape() const { return tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

  inline const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

using GradientMap = std::map<std::size_t, Tensor>;
using BackwardFn = std::function<void(Tape&, std::size_t self)>;

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value) {
    return push(Node{std::move(value), nullptr, {}, false, std::nullopt, {}});
  }

  /// Leaf referencing caller-owned storage; `storage` must outlive the tape.
  Var parameter(const Tensor& storage, std::size_t param_id) {
    return push(Node{{}, &storage, {}, true, param_id, {}});
  }

  /// Non-differentiable leaf referencing caller-owned storage.
  Var reference(const Tensor& storage) {
    return push(Node{{}, &storage, {}, false, std::nullopt, {}});
  }

  /// Leaf owning its value (used by grad_check and tests).
  Var parameter_owned(Tensor value, std::size_t param_id) {
    return push(Node{std::move(value), nullptr, {}, true, param_id, {}});
  }

  Var record(Tensor value, bool requires_grad, BackwardFn fn) {
    if (check_finite_) {
      for (double v : value.data()) {
        if (!std::isfinite(v)) {
          raise<ContractError>("non-finite value produced at tape node ", nodes_.size());
        }
      }
    }
    if (!requires_grad) fn = nullptr;
    return push(Node{std::move(value), nullptr, {}, requires_grad, std::nullopt, std::move(fn)});
  }

  const Tensor& value(std::size_t id) const {
    const Node& n = nodes_[id];
    return n.external ? *n.external : n.value;
  }

  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }

  /// Gradient buffer of a node, allocated as zeros on first touch.
  Tensor& grad(std::size_t id) {
    Node& n = nodes_[id];
    if (n.grad.size() == 0 && value(id).size() != 0) n.grad = Tensor(value(id).shape());
    return n.grad;
  }

  bool has_grad(std::size_t id) const { return nodes_[id].grad.size() != 0; }

  /// Gradient accumulated at an intermediate node by the last backward().
  Tensor grad_of(Var v) const {
    const Node& n = nodes_[v.id()];
    return n.grad.size() ? n.grad : Tensor(value(v.id()).shape());
  }

  std::size_t size() const { return nodes_.size(); }

  /// Debug mode: every recorded value is scanned for NaN/Inf.
  void set_check_finite(bool on) { check_finite_ = on; }

  GradientMap backward(Var loss) {
    if (loss.tape() != this) raise<ContractError>("loss belongs to a different tape");
    if (value(loss.id()).size() != 1) {
      raise<ContractError>("backward needs a scalar loss, got shape ",
                           shape_str(value(loss.id()).shape()));
    }
    for (auto& n : nodes_) n.grad = Tensor();
    grad(loss.id())[0] = 1.0;
    for (std::size_t i = loss.id() + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (!n.requires_grad || !n.backward || n.grad.size() == 0) continue;
      n.backward(*this, i);
    }
    GradientMap out;
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
      const Node& n = nodes_[i];
      if (!n.param_id) continue;
      auto [it, inserted] = out.try_emplace(*n.param_id, value(i).shape());
      if (n.grad.size()) {
        auto dst = it->second.data();
        auto src = n.grad.data();
        for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += src[k];
      }
    }
    return out;
  }

 private:
  struct Node {
    Tensor value;
    const Tensor* external;
    Tensor grad;
    bool requires_grad;
    std::optional<std::size_t> param_id;
    BackwardFn backward;
  };

  Var push(Node n) {
    nodes_.push_back(std::move(n));
    return Var(this, nodes_.size() - 1);
  }

  std::vector<Node> nodes_;
  bool check_finite_ = false;
};

inline const Tensor& Var::value() const { return tape_->value(id_); }

namespace detail {

inline Tape& same_tape(const Var& a, const Var& b) {
  if (a.tape() != b.tape()) raise<ContractError>("operands live on different tapes");
  return *a.tape();
}

inline void require_same_shape(const char* op, const Var& a, const Var& b) {
  if (a.shape() != b.shape()) {
    raise<ShapeError>(op, ": shape mismatch ", shape_str(a.shape()), " vs ",
                      shape_str(b.shape()));
  }
}

inline void accumulate(Tape& t, const Var& v, std::span<const double> g) {
  if (!t.requires_grad(v.id())) return;
  auto dst = t.grad(v.id()).data();
  for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i];
}

// C[m,n] += A[m,k] * B[k,n]
inline void gemm_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
                    std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    double* ci = c + i * n;
    const double* ai = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = ai[p];
      if (av == 0.0) continue;
      const double* bp = b + p * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += av * bp[j];
    }
  }
}

// C[m,k] += A[m,n] * B[k,n]^T
inline void gemm_nt(const double* a, const double* b, double* c, std::size_t m, std::size_t n,
                    std::size_t k) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* ai = a + i * n;
    double* ci = c + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double* bp = b + p * n;
      double s = 0.0;
      for (std::size_t j = 0; j < n; ++j) s += ai[j] * bp[j];
      ci[p] += s;
    }
  }
}

// C[k,n] += A[m,k]^T * B[m,n]
inline void gemm_tn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
                    std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* ai = a + i * k;
    const double* bi = b + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = ai[p];
      if (av == 0.0) continue;
      double* cp = c + p * n;
      for (std::size_t j = 0; j < n; ++j) cp[j] += av * bi[j];
    }
  }
}

constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluA = 0.044715;

}  // namespace detail

inline double gelu_value(double x) {
  const double u = detail::kGeluC * (x + detail::kGeluA * x * x * x);
  return 0.5 * x * (1.0 + std::tanh(u));
}

inline double gelu_derivative(double x) {
  const double u = detail::kGeluC * (x + detail::kGeluA * x * x * x);
  const double t = std::tanh(u);
  const double du = detail::kGeluC * (1.0 + 3.0 * detail::kGeluA * x * x);
  return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du;
}

/// Matrix product of 2-D tensors.
inline Var matmul(const Var& a, const Var& b) {
  Tape& t = detail::same_tape(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.rank() != 2 || bv.rank() != 2 || av.dim(1) != bv.dim(0)) {
    raise<ShapeError>("matmul: incompatible shapes ", shape_str(av.shape()), " and ",
                      shape_str(bv.shape()));
  }
  const std::size_t m = av.dim(0), k = av.dim(1), n = bv.dim(1);
  Tensor out({m, n});
  detail::gemm_nn(av.data().data(), bv.data().data(), out.data().data(), m, k, n);
  const bool rg = t.requires_grad(a.id()) || t.requires_grad(b.id());
  return t.record(std::move(out), rg, [a, b, m, k, n](Tape& tp, std::size_t self) {
    const double* g = tp.grad(self).data().data();
    if (tp.requires_grad(a.id())) {
      detail::gemm_nt(g, b.value().data().data(), tp.grad(a.id()).data().data(), m, n, k);
    }
    if (tp.requires_grad(b.id())) {
      detail::gemm_tn(a.value().data().data(), g, tp.grad(b.id()).data().data(), m, k, n);
    }
  });
}

inline Var add(const Var& a, const Var& b) {
  Tape& t = detail::same_tape(a, b);
  detail::require_same_shape("add", a, b);
  Tensor out = a.value();
  auto o = out.data();
  auto bv = b.value().data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] += bv[i];
  const bool rg = t.requires_grad(a.id()) || t.requires_grad(b.id());
  return t.record(std::move(out), rg, [a, b](Tape& tp, std::size_t self) {
    auto g = tp.grad(self).data();
    detail::accumulate(tp, a, g);
    detail::accumulate(tp, b, g);
  });
}

inline Var sub(const Var& a, const Var& b) {
  Tape& t = detail::same_tape(a, b);
  detail::require_same_shape("sub", a, b);
  Tensor out = a.value();
  auto o = out.data();
  auto bv = b.value().data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] -= bv[i];
  const bool rg = t.requires_grad(a.id()) || t.requires_grad(b.id());
  return t.record(std::move(out), rg, [a, b](Tape& tp, std::size_t self) {
    auto g = tp.grad(self).data();
    detail::accumulate(tp, a, g);
    if (tp.requires_grad(b.id())) {
      auto dst = tp.grad(b.id()).data();
      for (std::size_t i = 0; i < g.size(); ++i) dst[i] -= g[i];
    }
  });
}

/// Elementwise product.
inline Var mul(const Var& a, const Var& b) {
  Tape& t = detail::same_tape(a, b);
  detail::require_same_shape("mul", a, b);
  Tensor out = a.value();
  auto o = out.data();
  auto bv = b.value().data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] *= bv[i];
  const bool rg = t.requires_grad(a.id()) || t.requires_grad(b.id());
  return t.record(std::move(out), rg, [a, b](Tape& tp, std::size_t self) {
    auto g = tp.grad(self).data();
    if (tp.requires_grad(a.id())) {
      auto dst = tp.grad(a.id()).data();
      auto bv = b.value().data();
      for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i] * bv[i];
    }
    if (tp.requires_grad(b.id())) {
      auto dst = tp.grad(b.id()).data();
      auto av = a.value().data();
      for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i] * av[i];
    }
  });
}

inline Var scale(const Var& a, double c) {
  Tape& t = *a.tape();
  Tensor out = a.value();
  for (double& v : out.data()) v *= c;
  return t.record(std::move(out), t.requires_grad(a.id()), [a, c](Tape& tp, std::size_t self) {
    auto g = tp.grad(self).data();
    auto dst = tp.grad(a.id()).data();
    for (std::size_t i = 0; i < g.size(); ++i) dst[i] += c * g[i];
  });
}

inline Var operator+(const Var& a, const Var& b) { return add(a, b); }
inline Var operator-(const Var& a, const Var& b) { return sub(a, b); }
inline Var operator*(const Var& a, const Var& b) { return mul(a, b); }

/// x[..., n] + bias[n], with the bias repeated over every leading index.
inline Var add_bias(const Var& x, const Var& bias) {
  Tape& t = detail::same_tape(x, bias);
  const std::size_t n = x.value().cols();
  if (bias.value().size() != n) {
    raise<ShapeError>("add_bias: bias ", shape_str(bias.shape()), " does not match trailing extent of ",
                      shape_str(x.shape()));
  }
  Tensor out = x.value();
  auto o = out.data();
  auto bv = bias.value().data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] += bv[i % n];
  const bool rg = t.requires_grad(x.id()) || t.requires_grad(bias.id());
  return t.record(std::move(out), rg, [x, bias, n](Tape& tp, std::size_t self) {
    auto g = tp.grad(self).data();
    detail::accumulate(tp, x, g);
    if (tp.requires_grad(bias.id())) {
      auto dst = tp.grad(bias.id()).data();
      for (std::size_t i = 0; i < g.size(); ++i) dst[i % n] += g[i];
    }
  });
}

/// Tanh-approximation GELU.
inline Var gelu(const Var& x) {
  Tape& t = *x.tape();
  Tensor out = x.value();
  for (double& v : out.data()) v = gelu_value(v);
  return t.record(std::move(out), t.requires_grad(x.id()), [x](Tape& tp, std::size_t self) {
    auto g = tp.grad(self).data();
    auto xv = x.value().data();
    auto dst = tp.grad(x.id()).data();
    for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i] * gelu_derivative(xv[i]);
  });
}

/// Normalizes each trailing-axis row to zero mean / unit variance, then applies
/// gain and bias. A zero-variance row with eps == 0 normalizes to zeros.
inline Var layer_norm(const Var& x, const Var& gain, const Var& bias, double eps = 1e-5) {
  Tape& t = *x.tape();
  const Tensor& xv = x.value();
  const std::size_t n = xv.cols();
  if (n == 0) raise<ShapeError>("layer_norm: empty normalized axis");
  if (gain.value().size() != n || bias.value().size() != n) {
    raise<ShapeError>("layer_norm: gain/bias must have ", n, " entries");
  }
  const std::size_t rows = xv.size() / n;
  Tensor out(xv.shape());
  Tensor xhat(xv.shape());
  std::vector<double> rstd(rows);
  auto gv = gain.value().data();
  auto bv = bias.value().data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = xv.data().data() + r * n;
    double mean = 0.0;
    for (std::size_t j = 0; j < n; ++j) mean += xr[j];
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t j = 0; j < n; ++j) var += (xr[j] - mean) * (xr[j] - mean);
    var /= static_cast<double>(n);
    const double denom = var + eps;
    const double rs = denom > 0.0 ? 1.0 / std::sqrt(denom) : 0.0;
    rstd[r] = rs;
    for (std::size_t j = 0; j < n; ++j) {
      const double h = (xr[j] - mean) * rs;
      xhat[r * n + j] = h;
      out[r * n + j] = gv[j] * h + bv[j];
    }
  }
  const bool rg =
      t.requires_grad(x.id()) || t.requires_grad(gain.id()) || t.requires_grad(bias.id());
  return t.record(
      std::move(out), rg,
      [x, gain, bias, n, rows, xhat = std::move(xhat), rstd = std::move(rstd)](Tape& tp,
                                                                               std::size_t self) {
        auto g = tp.grad(self).data();
        if (tp.requires_grad(gain.id())) {
          auto dg = tp.grad(gain.id()).data();
          for (std::size_t i = 0; i < g.size(); ++i) dg[i % n] += g[i] * xhat[i];
        }
        if (tp.requires_grad(bias.id())) {
          auto db = tp.grad(bias.id()).data();
          for (std::size_t i = 0; i < g.size(); ++i) db[i % n] += g[i];
        }
        if (tp.requires_grad(x.id())) {
          auto gv = gain.value().data();
          auto dx = tp.grad(x.id()).data();
          std::vector<double> dh(n);
          for (std::size_t r = 0; r < rows; ++r) {
            double mean_dh = 0.0, mean_dh_h = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
              dh[j] = g[r * n + j] * gv[j];
              mean_dh += dh[j];
              mean_dh_h += dh[j] * xhat[r * n + j];
            }
            mean_dh /= static_cast<double>(n);
            mean_dh_h /= static_cast<double>(n);
            for (std::size_t j = 0; j < n; ++j) {
              dx[r * n + j] += rstd[r] * (dh[j] - mean_dh - xhat[r * n + j] * mean_dh_h);
            }
          }
        }
      });
}

/// Softmax along `axis` with max subtraction.
inline Var softmax(const Var& x, std::size_t axis) {
  Tape& t = *x.tape();
  const Tensor& xv = x.value();
  if (axis >= xv.rank()) raise<ShapeError>("softmax: axis ", axis, " out of range");
  std::size_t outer = 1, inner = 1;
  const std::size_t n = xv.dim(axis);
  for (std::size_t i = 0; i < axis; ++i) outer *= xv.dim(i);
  for (std::size_t i = axis + 1; i < xv.rank(); ++i) inner *= xv.dim(i);
  Tensor out(xv.shape());
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t in = 0; in < inner; ++in) {
      const std::size_t base = o * n * inner + in;
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < n; ++j) mx = std::max(mx, xv[base + j * inner]);
      double s = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        const double e = std::exp(xv[base + j * inner] - mx);
        out[base + j * inner] = e;
        s += e;
      }
      for (std::size_t j = 0; j < n; ++j) out[base + j * inner] /= s;
    }
  }
  Tensor y = out;
  return t.record(std::move(out), t.requires_grad(x.id()),
                  [x, y = std::move(y), outer, inner, n](Tape& tp, std::size_t self) {
                    auto g = tp.grad(self).data();
                    auto dx = tp.grad(x.id()).data();
                    for (std::size_t o = 0; o < outer; ++o) {
                      for (std::size_t in = 0; in < inner; ++in) {
                        const std::size_t base = o * n * inner + in;
                        double dot = 0.0;
                        for (std::size_t j = 0; j < n; ++j) {
                          dot += g[base + j * inner] * y[base + j * inner];
                        }
                        for (std::size_t j = 0; j < n; ++j) {
                          const std::size_t k = base + j * inner;
                          dx[k] += y[k] * (g[k] - dot);
                        }
                      }
                    }
                  });
}

inline Var transpose(const Var& x) {
  Tape& t = *x.tape();
  const Tensor& xv = x.value();
  if (xv.rank() != 2) raise<ShapeError>("transpose expects rank 2, got ", shape_str(xv.shape()));
  const std::size_t m = xv.dim(0), n = xv.dim(1);
  Tensor out({n, m});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out(j, i) = xv(i, j);
  return t.record(std::move(out), t.requires_grad(x.id()), [x, m, n](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad(self);
    Tensor& dx = tp.grad(x.id());
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) dx(i, j) += g(j, i);
  });
}

inline Var reshape(const Var& x, Shape shape) {
  Tape& t = *x.tape();
  Tensor out = x.value().reshaped(std::move(shape));
  return t.record(std::move(out), t.requires_grad(x.id()), [x](Tape& tp, std::size_t self) {
    detail::accumulate(tp, x, tp.grad(self).data());
  });
}

/// Rows [begin, end) along the leading axis.
inline Var slice_rows(const Var& x, std::size_t begin, std::size_t end) {
  Tape& t = *x.tape();
  const Tensor& xv = x.value();
  if (begin > end || end > xv.rows()) {
    raise<ShapeError>("slice_rows: [", begin, ",", end, ") out of range for ",
                      shape_str(xv.shape()));
  }
  const std::size_t stride = xv.size() / std::max<std::size_t>(xv.rows(), 1);
  Shape shape = xv.shape();
  shape[0] = end - begin;
  std::vector<double> data(xv.data().begin() + begin * stride, xv.data().begin() + end * stride);
  Tensor out(std::move(shape), std::move(data));
  return t.record(std::move(out), t.requires_grad(x.id()),
                  [x, begin, stride](Tape& tp, std::size_t self) {
                    auto g = tp.grad(self).data();
                    auto dx = tp.grad(x.id()).data();
                    for (std::size_t i = 0; i < g.size(); ++i) dx[begin * stride + i] += g[i];
                  });
}

/// out[i] = x[indices[i]] along the leading axis; repeated indices accumulate
/// gradient.
inline Var gather_rows(const Var& x, std::vector<std::size_t> indices) {
  Tape& t = *x.tape();
  const Tensor& xv = x.value();
  const std::size_t stride = xv.size() / std::max<std::size_t>(xv.rows(), 1);
  Shape shape = xv.shape();
  shape[0] = indices.size();
  Tensor out(shape);
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= xv.rows()) {
      raise<ShapeError>("gather_rows: index ", indices[i], " out of range for ",
                        shape_str(xv.shape()));
    }
    std::copy_n(xv.data().begin() + indices[i] * stride, stride, out.data().begin() + i * stride);
  }
  return t.record(std::move(out), t.requires_grad(x.id()),
                  [x, stride, indices = std::move(indices)](Tape& tp, std::size_t self) {
                    auto g = tp.grad(self).data();
                    auto dx = tp.grad(x.id()).data();
                    for (std::size_t i = 0; i < indices.size(); ++i) {
                      for (std::size_t j = 0; j < stride; ++j) {
                        dx[indices[i] * stride + j] += g[i * stride + j];
                      }
                    }
                  });
}

/// Stacks tensors along the leading axis; trailing extents must agree.
inline Var concat_rows(const std::vector<Var>& parts) {
  if (parts.empty()) raise<ShapeError>("concat_rows: no inputs");
  Tape& t = *parts.front().tape();
  Shape tail(parts.front().shape().begin() + 1, parts.front().shape().end());
  std::size_t rows = 0;
  bool rg = false;
  for (const auto& p : parts) {
    if (p.tape() != &t) raise<ContractError>("concat_rows: operands on different tapes");
    Shape pt(p.shape().begin() + 1, p.shape().end());
    if (pt != tail) raise<ShapeError>("concat_rows: trailing shape mismatch ", shape_str(p.shape()));
    rows += p.value().rows();
    rg = rg || t.requires_grad(p.id());
  }
  Shape shape = parts.front().shape();
  shape[0] = rows;
  std::vector<double> data;
  data.reserve(shape_size(shape));
  for (const auto& p : parts) {
    auto d = p.value().data();
    data.insert(data.end(), d.begin(), d.end());
  }
  return t.record(Tensor(std::move(shape), std::move(data)), rg,
                  [parts](Tape& tp, std::size_t self) {
                    auto g = tp.grad(self).data();
                    std::size_t off = 0;
                    for (const auto& p : parts) {
                      const std::size_t len = p.value().size();
                      detail::accumulate(tp, p, g.subspan(off, len));
                      off += len;
                    }
                  });
}

inline Var sum(const Var& x) {
  Tape& t = *x.tape();
  double s = 0.0;
  for (double v : x.value().data()) s += v;
  return t.record(Tensor::scalar(s), t.requires_grad(x.id()), [x](Tape& tp, std::size_t self) {
    const double g = tp.grad(self)[0];
    for (double& d : tp.grad(x.id()).data()) d += g;
  });
}

inline Var mean(const Var& x) {
  const std::size_t n = x.value().size();
  if (n == 0) raise<ShapeError>("mean of an empty tensor");
  return scale(sum(x), 1.0 / static_cast<double>(n));
}

/// Multi-head scaled dot-product self-attention over `batch` independent
/// sequences.
///
/// `qkv` has shape [batch * tokens, 3 * width] with the query, key and value
/// blocks side by side; each block is split into `heads` equal slices.
/// Returns the head-concatenated attention output [batch * tokens, width].
inline Var multi_head_attention(const Var& qkv, std::size_t batch, std::size_t heads) {
  Tape& t = *qkv.tape();
  const Tensor& xv = qkv.value();
  if (xv.rank() != 2 || batch == 0 || xv.dim(0) % batch != 0 || xv.dim(1) % 3 != 0) {
    raise<ShapeError>("attention: bad qkv shape ", shape_str(xv.shape()), " for batch ", batch);
  }
  const std::size_t tokens = xv.dim(0) / batch;
  const std::size_t width = xv.dim(1) / 3;
  if (heads == 0 || width % heads != 0) {
    raise<ShapeError>("attention: width ", width, " not divisible by ", heads, " heads");
  }
  const std::size_t dh = width / heads;
  const std::size_t ld = 3 * width;
  const double inv = 1.0 / std::sqrt(static_cast<double>(dh));
  Tensor out({batch * tokens, width});
  // Attention probabilities per (sequence, head), each tokens x tokens.
  std::vector<double> probs(batch * heads * tokens * tokens);
  const double* x = xv.data().data();
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t h = 0; h < heads; ++h) {
      double* p = probs.data() + (b * heads + h) * tokens * tokens;
      for (std::size_t i = 0; i < tokens; ++i) {
        const double* q = x + (b * tokens + i) * ld + h * dh;
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < tokens; ++j) {
          const double* k = x + (b * tokens + j) * ld + width + h * dh;
          double s = 0.0;
          for (std::size_t d = 0; d < dh; ++d) s += q[d] * k[d];
          s *= inv;
          p[i * tokens + j] = s;
          mx = std::max(mx, s);
        }
        double z = 0.0;
        for (std::size_t j = 0; j < tokens; ++j) {
          p[i * tokens + j] = std::exp(p[i * tokens + j] - mx);
          z += p[i * tokens + j];
        }
        double* o = out.data().data() + (b * tokens + i) * width + h * dh;
        for (std::size_t j = 0; j < tokens; ++j) {
          p[i * tokens + j] /= z;
          const double pij = p[i * tokens + j];
          const double* v = x + (b * tokens + j) * ld + 2 * width + h * dh;
          for (std::size_t d = 0; d < dh; ++d) o[d] += pij * v[d];
        }
      }
    }
  }
  return t.record(
      std::move(out), t.requires_grad(qkv.id()),
      [qkv, batch, heads, tokens, width, dh, ld, inv, probs = std::move(probs)](Tape& tp,
                                                                              std::size_t self) {
        const double* g = tp.grad(self).data().data();
        const double* x = qkv.value().data().data();
        double* dx = tp.grad(qkv.id()).data().data();
        std::vector<double> dp(tokens);
        for (std::size_t b = 0; b < batch; ++b) {
          for (std::size_t h = 0; h < heads; ++h) {
            const double* p = probs.data() + (b * heads + h) * tokens * tokens;
            for (std::size_t i = 0; i < tokens; ++i) {
              const double* go = g + (b * tokens + i) * width + h * dh;
              double dot = 0.0;
              for (std::size_t j = 0; j < tokens; ++j) {
                const double* v = x + (b * tokens + j) * ld + 2 * width + h * dh;
                double* dv = dx + (b * tokens + j) * ld + 2 * width + h * dh;
                const double pij = p[i * tokens + j];
                double s = 0.0;
                for (std::size_t d = 0; d < dh; ++d) {
                  s += go[d] * v[d];
                  dv[d] += pij * go[d];
                }
                dp[j] = s;
                dot += s * pij;
              }
              const double* q = x + (b * tokens + i) * ld + h * dh;
              double* dq = dx + (b * tokens + i) * ld + h * dh;
              for (std::size_t j = 0; j < tokens; ++j) {
                const double ds = p[i * tokens + j] * (dp[j] - dot) * inv;
                if (ds == 0.0) continue;
                const double* k = x + (b * tokens + j) * ld + width + h * dh;
                double* dk = dx + (b * tokens + j) * ld + width + h * dh;
                for (std::size_t d = 0; d < dh; ++d) {
                  dq[d] += ds * k[d];
                  dk[d] += ds * q[d];
                }
              }
            }
          }
        }
      });
}

/// Mean over rows of -log softmax(scores[r])[labels[r]].
/// -log softmax(scores)[label]. The arg-max term is kept out of the sum so a
/// confident correct score keeps full relative precision via log1p.
inline double negative_log_softmax(std::span<const double> scores, std::size_t label) {
  const std::size_t top = static_cast<std::size_t>(std::max_element(scores.begin(), scores.end()) - scores.begin());
  const double mx = scores[top];
  double rest = 0.0;
  for (std::size_t j = 0; j < scores.size(); ++j)
    if (j != top) rest += std::exp(scores[j] - mx);
  return (mx - scores[label]) + std::log1p(rest);
}

inline Var cross_entropy(const Var& scores, const std::vector<std::size_t>& labels) {
  Tape& t = *scores.tape();
  const Tensor& sv = scores.value();
  if (sv.rank() != 2 || sv.dim(0) != labels.size()) {
    raise<ShapeError>("cross_entropy: scores ", shape_str(sv.shape()), " vs ", labels.size(),
                      " labels");
  }
  const std::size_t rows = sv.dim(0), c = sv.dim(1);
  Tensor probs({rows, c});
  double total = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    if (labels[r] >= c) {
      raise<ContractError>("cross_entropy: label ", labels[r], " out of range for ", c,
                           " classes");
    }
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < c; ++j) mx = std::max(mx, sv(r, j));
    double z = 0.0;
    for (std::size_t j = 0; j < c; ++j) z += std::exp(sv(r, j) - mx);
    for (std::size_t j = 0; j < c; ++j) probs(r, j) = std::exp(sv(r, j) - mx) / z;
    total += negative_log_softmax(sv.row(r), labels[r]);
  }
  const double inv = 1.0 / static_cast<double>(rows);
  return t.record(Tensor::scalar(total * inv), t.requires_grad(scores.id()),
                  [scores, labels, probs = std::move(probs), inv, c](Tape& tp, std::size_t self) {
                    const double g = tp.grad(self)[0] * inv;
                    Tensor& ds = tp.grad(scores.id());
                    for (std::size_t r = 0; r < labels.size(); ++r) {
                      for (std::size_t j = 0; j < c; ++j) {
                        ds(r, j) += g * (probs(r, j) - (j == labels[r] ? 1.0 : 0.0));
                      }
                    }
                  });
}

/// Builds the scalar to be differentiated from parameter leaves on `tape`.
using ScalarFn = std::function<Var(Tape& tape, std::span<const Var> params)>;

/// Central-difference gradient check, one entry per parameter tensor.
///
/// Each entry is the max over that tensor's coordinates of
/// |g_ad - g_fd| / max(1e-8, |g_ad| + |g_fd|).
inline std::vector<double> grad_check_per_tensor(const ScalarFn& f, std::vector<Tensor> params,
                                                 double eps) {
  if (!(eps > 0.0)) raise<ContractError>("grad_check: eps must be positive, got ", eps);
  GradientMap analytic;
  {
    Tape tape;
    std::vector<Var> vars;
    for (std::size_t i = 0; i < params.size(); ++i) vars.push_back(tape.parameter(params[i], i));
    Var loss = f(tape, vars);
    analytic = tape.backward(loss);
  }
  auto evaluate = [&]() {
    Tape tape;
    std::vector<Var> vars;
    for (std::size_t i = 0; i < params.size(); ++i) vars.push_back(tape.parameter(params[i], i));
    return f(tape, vars).value()[0];
  };
  std::vector<double> worst(params.size(), 0.0);
  for (std::size_t p = 0; p < params.size(); ++p) {
    const Tensor& ga = analytic.at(p);
    for (std::size_t i = 0; i < params[p].size(); ++i) {
      const double saved = params[p][i];
      params[p][i] = saved + eps;
      const double fp = evaluate();
      params[p][i] = saved - eps;
      const double fm = evaluate();
      params[p][i] = saved;
      const double fd = (fp - fm) / (2.0 * eps);
      const double err = std::abs(ga[i] - fd) / std::max(1e-8, std::abs(ga[i]) + std::abs(fd));
      worst[p] = std::max(worst[p], err);
    }
  }
  return worst;
}

/// Max relative error over all coordinates of all parameters.
inline double grad_check(const ScalarFn& f, std::vector<Tensor> params, double eps) {
  auto per = grad_check_per_tensor(f, std::move(params), eps);
  return per.empty() ? 0.0 : *std::max_element(per.begin(), per.end());
}

}  // namespace smae::ad
