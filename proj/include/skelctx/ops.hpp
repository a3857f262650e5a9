#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "skelctx/tensor.hpp"

namespace skelctx {

namespace detail {

// Matrix view of a tensor: all leading axes folded into rows, last axis = cols.
inline std::size_t mat_cols(const Tensor& t) {
  if (t.rank() == 0) throw std::invalid_argument("rank-0 tensor has no matrix view");
  return t.shape().back();
}
inline std::size_t mat_rows(const Tensor& t) {
  std::size_t c = mat_cols(t);
  return c == 0 ? 0 : t.numel() / c;
}

inline void require(bool cond, const char* msg) {
  if (!cond) throw std::invalid_argument(msg);
}

// C[n x m] += A[n x k] * B[k x m]
inline void gemm_nn(const double* a, const double* b, double* c, std::size_t n,
                    std::size_t k, std::size_t m) {
  for (std::size_t i = 0; i < n; ++i) {
    double* ci = c + i * m;
    const double* ai = a + i * k;
    for (std::size_t l = 0; l < k; ++l) {
      const double av = ai[l];
      const double* bl = b + l * m;
      for (std::size_t j = 0; j < m; ++j) ci[j] += av * bl[j];
    }
  }
}

// C[n x m] += A[n x k] * B[m x k]^T
inline void gemm_nt(const double* a, const double* b, double* c, std::size_t n,
                    std::size_t k, std::size_t m) {
  for (std::size_t i = 0; i < n; ++i) {
    const double* ai = a + i * k;
    double* ci = c + i * m;
    for (std::size_t j = 0; j < m; ++j) {
      const double* bj = b + j * k;
      double acc = 0.0;
      for (std::size_t l = 0; l < k; ++l) acc += ai[l] * bj[l];
      ci[j] += acc;
    }
  }
}

// C[k x m] += A[n x k]^T * B[n x m]
inline void gemm_tn(const double* a, const double* b, double* c, std::size_t n,
                    std::size_t k, std::size_t m) {
  for (std::size_t l = 0; l < n; ++l) {
    const double* al = a + l * k;
    const double* bl = b + l * m;
    for (std::size_t i = 0; i < k; ++i) {
      const double av = al[i];
      double* ci = c + i * m;
      for (std::size_t j = 0; j < m; ++j) ci[j] += av * bl[j];
    }
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise
// ---------------------------------------------------------------------------

inline Tensor add(const Tensor& a, const Tensor& b) {
  detail::require(a.shape() == b.shape(), "add: shape mismatch");
  std::vector<double> out(a.numel());
  const auto& ad = a.data();
  const auto& bd = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = ad[i] + bd[i];
  auto an = a.node(), bn = b.node();
  const bool ag = a.requires_grad(), bg = b.requires_grad();
  return detail::make_op_result(a.shape(), std::move(out), {a, b},
                                [an, bn, ag, bg](detail::TensorNode& o) {
                                  if (ag) {
                                    an->ensure_grad();
                                    for (std::size_t i = 0; i < o.grad.size(); ++i)
                                      an->grad[i] += o.grad[i];
                                  }
                                  if (bg) {
                                    bn->ensure_grad();
                                    for (std::size_t i = 0; i < o.grad.size(); ++i)
                                      bn->grad[i] += o.grad[i];
                                  }
                                });
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
  detail::require(a.shape() == b.shape(), "sub: shape mismatch");
  std::vector<double> out(a.numel());
  const auto& ad = a.data();
  const auto& bd = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = ad[i] - bd[i];
  auto an = a.node(), bn = b.node();
  const bool ag = a.requires_grad(), bg = b.requires_grad();
  return detail::make_op_result(a.shape(), std::move(out), {a, b},
                                [an, bn, ag, bg](detail::TensorNode& o) {
                                  if (ag) {
                                    an->ensure_grad();
                                    for (std::size_t i = 0; i < o.grad.size(); ++i)
                                      an->grad[i] += o.grad[i];
                                  }
                                  if (bg) {
                                    bn->ensure_grad();
                                    for (std::size_t i = 0; i < o.grad.size(); ++i)
                                      bn->grad[i] -= o.grad[i];
                                  }
                                });
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
  detail::require(a.shape() == b.shape(), "mul: shape mismatch");
  std::vector<double> out(a.numel());
  const auto& ad = a.data();
  const auto& bd = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = ad[i] * bd[i];
  auto an = a.node(), bn = b.node();
  const bool ag = a.requires_grad(), bg = b.requires_grad();
  return detail::make_op_result(a.shape(), std::move(out), {a, b},
                                [an, bn, ag, bg](detail::TensorNode& o) {
                                  if (ag) {
                                    an->ensure_grad();
                                    for (std::size_t i = 0; i < o.grad.size(); ++i)
                                      an->grad[i] += o.grad[i] * bn->data[i];
                                  }
                                  if (bg) {
                                    bn->ensure_grad();
                                    for (std::size_t i = 0; i < o.grad.size(); ++i)
                                      bn->grad[i] += o.grad[i] * an->data[i];
                                  }
                                });
}

inline Tensor scale(const Tensor& a, double s) {
  std::vector<double> out(a.numel());
  const auto& ad = a.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = ad[i] * s;
  auto an = a.node();
  const bool ag = a.requires_grad();
  return detail::make_op_result(a.shape(), std::move(out), {a},
                                [an, ag, s](detail::TensorNode& o) {
                                  if (!ag) return;
                                  an->ensure_grad();
                                  for (std::size_t i = 0; i < o.grad.size(); ++i)
                                    an->grad[i] += o.grad[i] * s;
                                });
}

inline Tensor neg(const Tensor& a) { return scale(a, -1.0); }

inline Tensor tanh(const Tensor& a) {
  std::vector<double> out(a.numel());
  const auto& ad = a.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(ad[i]);
  auto an = a.node();
  const bool ag = a.requires_grad();
  return detail::make_op_result(a.shape(), std::move(out), {a},
                                [an, ag](detail::TensorNode& o) {
                                  if (!ag) return;
                                  an->ensure_grad();
                                  for (std::size_t i = 0; i < o.grad.size(); ++i) {
                                    const double y = o.data[i];
                                    an->grad[i] += o.grad[i] * (1.0 - y * y);
                                  }
                                });
}

inline Tensor relu(const Tensor& a) {
  std::vector<double> out(a.numel());
  const auto& ad = a.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = ad[i] > 0.0 ? ad[i] : 0.0;
  auto an = a.node();
  const bool ag = a.requires_grad();
  return detail::make_op_result(a.shape(), std::move(out), {a},
                                [an, ag](detail::TensorNode& o) {
                                  if (!ag) return;
                                  an->ensure_grad();
                                  for (std::size_t i = 0; i < o.grad.size(); ++i)
                                    if (an->data[i] > 0.0) an->grad[i] += o.grad[i];
                                });
}

// y = x / s for a learnable scalar s (temperature).
inline Tensor div_by_scalar(const Tensor& x, const Tensor& s) {
  detail::require(s.numel() == 1, "div_by_scalar: divisor must be scalar");
  const double sv = s.value();
  detail::require(sv != 0.0, "div_by_scalar: zero divisor");
  std::vector<double> out(x.numel());
  const auto& xd = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xd[i] / sv;
  auto xn = x.node(), sn = s.node();
  const bool xg = x.requires_grad(), sg = s.requires_grad();
  return detail::make_op_result(x.shape(), std::move(out), {x, s},
                                [xn, sn, xg, sg, sv](detail::TensorNode& o) {
                                  if (xg) {
                                    xn->ensure_grad();
                                    for (std::size_t i = 0; i < o.grad.size(); ++i)
                                      xn->grad[i] += o.grad[i] / sv;
                                  }
                                  if (sg) {
                                    sn->ensure_grad();
                                    double acc = 0.0;
                                    for (std::size_t i = 0; i < o.grad.size(); ++i)
                                      acc += o.grad[i] * xn->data[i];
                                    sn->grad[0] += -acc / (sv * sv);
                                  }
                                });
}

// ---------------------------------------------------------------------------
// Shape
// ---------------------------------------------------------------------------

inline Tensor reshape(const Tensor& x, std::vector<std::size_t> new_shape) {
  detail::require(detail::shape_numel(new_shape) == x.numel(),
                  "reshape: element count mismatch");
  std::vector<double> out = x.data();
  auto xn = x.node();
  const bool xg = x.requires_grad();
  return detail::make_op_result(std::move(new_shape), std::move(out), {x},
                                [xn, xg](detail::TensorNode& o) {
                                  if (!xg) return;
                                  xn->ensure_grad();
                                  for (std::size_t i = 0; i < o.grad.size(); ++i)
                                    xn->grad[i] += o.grad[i];
                                });
}

// ---------------------------------------------------------------------------
// Linear algebra
// ---------------------------------------------------------------------------

inline Tensor matmul(const Tensor& a, const Tensor& b) {
  detail::require(a.rank() == 2 && b.rank() == 2, "matmul: expects 2-D tensors");
  const std::size_t n = a.dim(0), k = a.dim(1), m = b.dim(1);
  detail::require(b.dim(0) == k, "matmul: inner dimension mismatch");
  std::vector<double> out(n * m, 0.0);
  detail::gemm_nn(a.data().data(), b.data().data(), out.data(), n, k, m);
  auto an = a.node(), bn = b.node();
  const bool ag = a.requires_grad(), bg = b.requires_grad();
  return detail::make_op_result(
      {n, m}, std::move(out), {a, b}, [an, bn, ag, bg, n, k, m](detail::TensorNode& o) {
        if (ag) {
          an->ensure_grad();
          detail::gemm_nt(o.grad.data(), bn->data.data(), an->grad.data(), n, m, k);
        }
        if (bg) {
          bn->ensure_grad();
          detail::gemm_tn(an->data.data(), o.grad.data(), bn->grad.data(), n, k, m);
        }
      });
}

// a [n x k] times b^T for b [m x k]; the shape used by x * W^T projections.
inline Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  detail::require(a.rank() == 2 && b.rank() == 2, "matmul_nt: expects 2-D tensors");
  const std::size_t n = a.dim(0), k = a.dim(1), m = b.dim(0);
  detail::require(b.dim(1) == k, "matmul_nt: inner dimension mismatch");
  std::vector<double> out(n * m, 0.0);
  detail::gemm_nt(a.data().data(), b.data().data(), out.data(), n, k, m);
  auto an = a.node(), bn = b.node();
  const bool ag = a.requires_grad(), bg = b.requires_grad();
  return detail::make_op_result(
      {n, m}, std::move(out), {a, b}, [an, bn, ag, bg, n, k, m](detail::TensorNode& o) {
        if (ag) {
          an->ensure_grad();
          detail::gemm_nn(o.grad.data(), bn->data.data(), an->grad.data(), n, m, k);
        }
        if (bg) {
          bn->ensure_grad();
          detail::gemm_tn(o.grad.data(), an->data.data(), bn->grad.data(), n, m, k);
        }
      });
}

// y[k] = M[k x d] . v[d]
inline Tensor matvec(const Tensor& m, const Tensor& v) {
  detail::require(m.rank() == 2 && v.rank() == 1, "matvec: expects matrix and vector");
  const std::size_t rows = m.dim(0), d = m.dim(1);
  detail::require(v.dim(0) == d, "matvec: dimension mismatch");
  std::vector<double> out(rows, 0.0);
  const double* md = m.data().data();
  const double* vd = v.data().data();
  for (std::size_t i = 0; i < rows; ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < d; ++j) acc += md[i * d + j] * vd[j];
    out[i] = acc;
  }
  auto mn = m.node(), vn = v.node();
  const bool mg = m.requires_grad(), vg = v.requires_grad();
  return detail::make_op_result(
      {rows}, std::move(out), {m, v}, [mn, vn, mg, vg, rows, d](detail::TensorNode& o) {
        if (mg) {
          mn->ensure_grad();
          for (std::size_t i = 0; i < rows; ++i)
            for (std::size_t j = 0; j < d; ++j)
              mn->grad[i * d + j] += o.grad[i] * vn->data[j];
        }
        if (vg) {
          vn->ensure_grad();
          for (std::size_t i = 0; i < rows; ++i)
            for (std::size_t j = 0; j < d; ++j)
              vn->grad[j] += o.grad[i] * mn->data[i * d + j];
        }
      });
}

// Adds a length-C bias to every row of the matrix view of x.
inline Tensor add_bias(const Tensor& x, const Tensor& b) {
  const std::size_t cols = detail::mat_cols(x), rows = detail::mat_rows(x);
  detail::require(b.rank() == 1 && b.dim(0) == cols, "add_bias: bias length mismatch");
  std::vector<double> out(x.numel());
  const auto& xd = x.data();
  const auto& bd = b.data();
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] = xd[r * cols + c] + bd[c];
  auto xn = x.node(), bn = b.node();
  const bool xg = x.requires_grad(), bg = b.requires_grad();
  return detail::make_op_result(x.shape(), std::move(out), {x, b},
                                [xn, bn, xg, bg, rows, cols](detail::TensorNode& o) {
                                  if (xg) {
                                    xn->ensure_grad();
                                    for (std::size_t i = 0; i < o.grad.size(); ++i)
                                      xn->grad[i] += o.grad[i];
                                  }
                                  if (bg) {
                                    bn->ensure_grad();
                                    for (std::size_t r = 0; r < rows; ++r)
                                      for (std::size_t c = 0; c < cols; ++c)
                                        bn->grad[c] += o.grad[r * cols + c];
                                  }
                                });
}

// y = x W^T + b over the matrix view of x; W is [out x in].
inline Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  const std::size_t in = detail::mat_cols(x);
  detail::require(w.rank() == 2 && w.dim(1) == in, "linear: weight shape mismatch");
  Tensor x2 = x.rank() == 2 ? x : reshape(x, {detail::mat_rows(x), in});
  Tensor y = matmul_nt(x2, w);
  if (b.defined()) y = add_bias(y, b);
  if (x.rank() != 2) {
    std::vector<std::size_t> shape = x.shape();
    shape.back() = w.dim(0);
    y = reshape(y, shape);
  }
  return y;
}

// ---------------------------------------------------------------------------
// Reductions
// ---------------------------------------------------------------------------

inline Tensor sum(const Tensor& x) {
  double acc = 0.0;
  for (double v : x.data()) acc += v;
  auto xn = x.node();
  const bool xg = x.requires_grad();
  return detail::make_op_result({1}, {acc}, {x}, [xn, xg](detail::TensorNode& o) {
    if (!xg) return;
    xn->ensure_grad();
    const double g = o.grad[0];
    for (double& v : xn->grad) v += g;
  });
}

inline Tensor mean_all(const Tensor& x) { return scale(sum(x), 1.0 / double(x.numel())); }

// Mean over all leading axes; returns the length-C channel vector.
inline Tensor mean_rows(const Tensor& x) {
  const std::size_t cols = detail::mat_cols(x), rows = detail::mat_rows(x);
  detail::require(rows > 0, "mean_rows: empty tensor");
  std::vector<double> out(cols, 0.0);
  const auto& xd = x.data();
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) out[c] += xd[r * cols + c];
  for (double& v : out) v /= double(rows);
  auto xn = x.node();
  const bool xg = x.requires_grad();
  return detail::make_op_result({cols}, std::move(out), {x},
                                [xn, xg, rows, cols](detail::TensorNode& o) {
                                  if (!xg) return;
                                  xn->ensure_grad();
                                  for (std::size_t r = 0; r < rows; ++r)
                                    for (std::size_t c = 0; c < cols; ++c)
                                      xn->grad[r * cols + c] += o.grad[c] / double(rows);
                                });
}

// ---------------------------------------------------------------------------
// Softmax / losses / normalization
// ---------------------------------------------------------------------------

inline Tensor softmax(const Tensor& x, std::size_t axis) {
  detail::require(axis < x.rank(), "softmax: axis out of range");
  const auto& shape = x.shape();
  const std::size_t len = shape[axis];
  detail::require(len > 0, "softmax: empty axis");
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= shape[i];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) inner *= shape[i];
  std::vector<double> out(x.numel());
  const auto& xd = x.data();
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t in = 0; in < inner; ++in) {
      const std::size_t base = o * len * inner + in;
      double mx = xd[base];
      for (std::size_t a = 1; a < len; ++a) mx = std::max(mx, xd[base + a * inner]);
      double denom = 0.0;
      for (std::size_t a = 0; a < len; ++a) {
        const double e = std::exp(xd[base + a * inner] - mx);
        out[base + a * inner] = e;
        denom += e;
      }
      for (std::size_t a = 0; a < len; ++a) out[base + a * inner] /= denom;
    }
  }
  auto xn = x.node();
  const bool xg = x.requires_grad();
  return detail::make_op_result(
      shape, std::move(out), {x}, [xn, xg, outer, inner, len](detail::TensorNode& o) {
        if (!xg) return;
        xn->ensure_grad();
        for (std::size_t ou = 0; ou < outer; ++ou) {
          for (std::size_t in = 0; in < inner; ++in) {
            const std::size_t base = ou * len * inner + in;
            double dot = 0.0;
            for (std::size_t a = 0; a < len; ++a) {
              const std::size_t i = base + a * inner;
              dot += o.grad[i] * o.data[i];
            }
            for (std::size_t a = 0; a < len; ++a) {
              const std::size_t i = base + a * inner;
              xn->grad[i] += o.data[i] * (o.grad[i] - dot);
            }
          }
        }
      });
}

// Mean negative log-likelihood of integer targets under row-wise softmax.
inline Tensor cross_entropy(const Tensor& logits, const std::vector<std::size_t>& targets) {
  detail::require(logits.rank() == 2, "cross_entropy: logits must be 2-D");
  const std::size_t n = logits.dim(0), k = logits.dim(1);
  detail::require(targets.size() == n, "cross_entropy: one target per row required");
  for (std::size_t t : targets)
    detail::require(t < k, "cross_entropy: target index out of range");
  detail::require(n > 0, "cross_entropy: empty batch");
  const auto& xd = logits.data();
  double loss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double* row = xd.data() + i * k;
    double mx = row[0];
    for (std::size_t j = 1; j < k; ++j) mx = std::max(mx, row[j]);
    double denom = 0.0;
    for (std::size_t j = 0; j < k; ++j) denom += std::exp(row[j] - mx);
    loss += (mx + std::log(denom)) - row[targets[i]];
  }
  loss /= double(n);
  auto xn = logits.node();
  const bool xg = logits.requires_grad();
  return detail::make_op_result(
      {1}, {loss}, {logits}, [xn, xg, targets, n, k](detail::TensorNode& o) {
        if (!xg) return;
        xn->ensure_grad();
        const double g = o.grad[0] / double(n);
        for (std::size_t i = 0; i < n; ++i) {
          const double* row = xn->data.data() + i * k;
          double mx = row[0];
          for (std::size_t j = 1; j < k; ++j) mx = std::max(mx, row[j]);
          double denom = 0.0;
          for (std::size_t j = 0; j < k; ++j) denom += std::exp(row[j] - mx);
          for (std::size_t j = 0; j < k; ++j) {
            const double p = std::exp(row[j] - mx) / denom;
            xn->grad[i * k + j] += g * (p - (j == targets[i] ? 1.0 : 0.0));
          }
        }
      });
}

// Layer normalization over the last axis; gamma/beta optional (pass default
// Tensor{} for the plain normalized form).
inline Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                         double eps = 1e-5) {
  const std::size_t cols = detail::mat_cols(x), rows = detail::mat_rows(x);
  detail::require(cols >= 1, "layer_norm: empty last axis");
  detail::require(eps > 0.0, "layer_norm: eps must be positive");
  const bool affine = gamma.defined();
  if (affine) {
    detail::require(gamma.rank() == 1 && gamma.dim(0) == cols, "layer_norm: gamma shape");
    detail::require(beta.defined() && beta.rank() == 1 && beta.dim(0) == cols,
                    "layer_norm: beta shape");
  }
  std::vector<double> out(x.numel());
  std::vector<double> xhat(x.numel());
  std::vector<double> inv_std(rows);
  const auto& xd = x.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = xd.data() + r * cols;
    double mean = 0.0;
    for (std::size_t c = 0; c < cols; ++c) mean += row[c];
    mean /= double(cols);
    double var = 0.0;
    for (std::size_t c = 0; c < cols; ++c) {
      const double d = row[c] - mean;
      var += d * d;
    }
    var /= double(cols);
    const double is = 1.0 / std::sqrt(var + eps);
    inv_std[r] = is;
    for (std::size_t c = 0; c < cols; ++c) {
      const double h = (row[c] - mean) * is;
      xhat[r * cols + c] = h;
      out[r * cols + c] = affine ? gamma.data()[c] * h + beta.data()[c] : h;
    }
  }
  auto xn = x.node();
  auto gn = affine ? gamma.node() : nullptr;
  auto bn = affine ? beta.node() : nullptr;
  const bool xg = x.requires_grad();
  const bool gg = affine && gamma.requires_grad();
  const bool bg = affine && beta.requires_grad();
  std::vector<Tensor> inputs = {x};
  if (affine) {
    inputs.push_back(gamma);
    inputs.push_back(beta);
  }
  return detail::make_op_result(
      x.shape(), std::move(out), std::move(inputs),
      [xn, gn, bn, xg, gg, bg, rows, cols, xhat = std::move(xhat),
       inv_std = std::move(inv_std)](detail::TensorNode& o) {
        if (gg) {
          gn->ensure_grad();
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < cols; ++c)
              gn->grad[c] += o.grad[r * cols + c] * xhat[r * cols + c];
        }
        if (bg) {
          bn->ensure_grad();
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < cols; ++c) bn->grad[c] += o.grad[r * cols + c];
        }
        if (!xg) return;
        xn->ensure_grad();
        std::vector<double> grow(cols);
        for (std::size_t r = 0; r < rows; ++r) {
          double gmean = 0.0, gx_mean = 0.0;
          for (std::size_t c = 0; c < cols; ++c) {
            double g = o.grad[r * cols + c];
            if (gn) g *= gn->data[c];
            grow[c] = g;
            gmean += g;
            gx_mean += g * xhat[r * cols + c];
          }
          gmean /= double(cols);
          gx_mean /= double(cols);
          for (std::size_t c = 0; c < cols; ++c)
            xn->grad[r * cols + c] +=
                inv_std[r] * (grow[c] - gmean - xhat[r * cols + c] * gx_mean);
        }
      });
}

// Rows scaled to unit L2 norm; rows with norm below eps are just divided by eps.
inline Tensor l2_normalize_rows(const Tensor& x, double eps = 1e-12) {
  const std::size_t cols = detail::mat_cols(x), rows = detail::mat_rows(x);
  std::vector<double> out(x.numel());
  std::vector<double> norms(rows);
  const auto& xd = x.data();
  for (std::size_t r = 0; r < rows; ++r) {
    double sq = 0.0;
    for (std::size_t c = 0; c < cols; ++c) sq += xd[r * cols + c] * xd[r * cols + c];
    const double n = std::max(std::sqrt(sq), eps);
    norms[r] = n;
    for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] = xd[r * cols + c] / n;
  }
  auto xn = x.node();
  const bool xg = x.requires_grad();
  return detail::make_op_result(
      x.shape(), std::move(out), {x},
      [xn, xg, rows, cols, eps, norms = std::move(norms)](detail::TensorNode& o) {
        if (!xg) return;
        xn->ensure_grad();
        for (std::size_t r = 0; r < rows; ++r) {
          const double n = norms[r];
          if (n <= eps) {
            for (std::size_t c = 0; c < cols; ++c)
              xn->grad[r * cols + c] += o.grad[r * cols + c] / eps;
            continue;
          }
          double dot = 0.0;
          for (std::size_t c = 0; c < cols; ++c)
            dot += o.grad[r * cols + c] * o.data[r * cols + c];
          for (std::size_t c = 0; c < cols; ++c)
            xn->grad[r * cols + c] +=
                (o.grad[r * cols + c] - o.data[r * cols + c] * dot) / n;
        }
      });
}

// ---------------------------------------------------------------------------
// Indexing
// ---------------------------------------------------------------------------

// Selects rows of a [R x C] table; repeated ids accumulate gradient.
inline Tensor gather_rows(const Tensor& table, const std::vector<std::size_t>& ids) {
  detail::require(table.rank() == 2, "gather_rows: table must be 2-D");
  const std::size_t rows = table.dim(0), cols = table.dim(1);
  for (std::size_t id : ids)
    detail::require(id < rows, "gather_rows: row index out of range");
  std::vector<double> out(ids.size() * cols);
  const auto& td = table.data();
  for (std::size_t i = 0; i < ids.size(); ++i)
    std::copy_n(td.data() + ids[i] * cols, cols, out.data() + i * cols);
  auto tn = table.node();
  const bool tg = table.requires_grad();
  return detail::make_op_result({ids.size(), cols}, std::move(out), {table},
                                [tn, tg, ids, cols](detail::TensorNode& o) {
                                  if (!tg) return;
                                  tn->ensure_grad();
                                  for (std::size_t i = 0; i < ids.size(); ++i)
                                    for (std::size_t c = 0; c < cols; ++c)
                                      tn->grad[ids[i] * cols + c] += o.grad[i * cols + c];
                                });
}

inline Tensor slice_cols(const Tensor& x, std::size_t c0, std::size_t c1) {
  detail::require(x.rank() == 2, "slice_cols: expects 2-D tensor");
  const std::size_t rows = x.dim(0), cols = x.dim(1);
  detail::require(c0 < c1 && c1 <= cols, "slice_cols: bad column range");
  const std::size_t w = c1 - c0;
  std::vector<double> out(rows * w);
  const auto& xd = x.data();
  for (std::size_t r = 0; r < rows; ++r)
    std::copy_n(xd.data() + r * cols + c0, w, out.data() + r * w);
  auto xn = x.node();
  const bool xg = x.requires_grad();
  return detail::make_op_result({rows, w}, std::move(out), {x},
                                [xn, xg, rows, cols, c0, w](detail::TensorNode& o) {
                                  if (!xg) return;
                                  xn->ensure_grad();
                                  for (std::size_t r = 0; r < rows; ++r)
                                    for (std::size_t c = 0; c < w; ++c)
                                      xn->grad[r * cols + c0 + c] += o.grad[r * w + c];
                                });
}

inline Tensor concat_cols(const std::vector<Tensor>& parts) {
  detail::require(!parts.empty(), "concat_cols: no inputs");
  const std::size_t rows = parts[0].dim(0);
  std::size_t total = 0;
  for (const Tensor& p : parts) {
    detail::require(p.rank() == 2 && p.dim(0) == rows, "concat_cols: row mismatch");
    total += p.dim(1);
  }
  std::vector<double> out(rows * total);
  std::size_t off = 0;
  for (const Tensor& p : parts) {
    const std::size_t w = p.dim(1);
    for (std::size_t r = 0; r < rows; ++r)
      std::copy_n(p.data().data() + r * w, w, out.data() + r * total + off);
    off += w;
  }
  std::vector<std::shared_ptr<detail::TensorNode>> nodes;
  std::vector<std::size_t> widths;
  std::vector<bool> grads;
  for (const Tensor& p : parts) {
    nodes.push_back(p.node());
    widths.push_back(p.dim(1));
    grads.push_back(p.requires_grad());
  }
  return detail::make_op_result(
      {rows, total}, std::move(out), parts,
      [nodes, widths, grads, rows, total](detail::TensorNode& o) {
        std::size_t off = 0;
        for (std::size_t pi = 0; pi < nodes.size(); ++pi) {
          const std::size_t w = widths[pi];
          if (grads[pi]) {
            nodes[pi]->ensure_grad();
            for (std::size_t r = 0; r < rows; ++r)
              for (std::size_t c = 0; c < w; ++c)
                nodes[pi]->grad[r * w + c] += o.grad[r * total + off + c];
          }
          off += w;
        }
      });
}

// Stacks K rank-1 tensors of equal length into a [K x d] matrix.
inline Tensor stack_rows(const std::vector<Tensor>& rows) {
  detail::require(!rows.empty(), "stack_rows: no inputs");
  const std::size_t d = rows[0].numel();
  for (const Tensor& r : rows)
    detail::require(r.rank() == 1 && r.numel() == d, "stack_rows: length mismatch");
  std::vector<double> out(rows.size() * d);
  for (std::size_t i = 0; i < rows.size(); ++i)
    std::copy_n(rows[i].data().data(), d, out.data() + i * d);
  std::vector<std::shared_ptr<detail::TensorNode>> nodes;
  std::vector<bool> grads;
  for (const Tensor& r : rows) {
    nodes.push_back(r.node());
    grads.push_back(r.requires_grad());
  }
  return detail::make_op_result({rows.size(), d}, std::move(out), rows,
                                [nodes, grads, d](detail::TensorNode& o) {
                                  for (std::size_t i = 0; i < nodes.size(); ++i) {
                                    if (!grads[i]) continue;
                                    nodes[i]->ensure_grad();
                                    for (std::size_t c = 0; c < d; ++c)
                                      nodes[i]->grad[c] += o.grad[i * d + c];
                                  }
                                });
}

// ---------------------------------------------------------------------------
// Pipeline-specific structured ops
// ---------------------------------------------------------------------------

// d[i,j,c] = q[i,c] - k[j,c]; the broadcast expansion behind pairwise
// differential attention.
inline Tensor pairwise_diff(const Tensor& q, const Tensor& k) {
  detail::require(q.rank() == 2 && k.rank() == 2 && q.shape() == k.shape(),
                  "pairwise_diff: expects matching N x C tensors");
  const std::size_t n = q.dim(0), ch = q.dim(1);
  std::vector<double> out(n * n * ch);
  const auto& qd = q.data();
  const auto& kd = k.data();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t c = 0; c < ch; ++c)
        out[(i * n + j) * ch + c] = qd[i * ch + c] - kd[j * ch + c];
  auto qn = q.node(), kn = k.node();
  const bool qg = q.requires_grad(), kg = k.requires_grad();
  return detail::make_op_result({n, n, ch}, std::move(out), {q, k},
                                [qn, kn, qg, kg, n, ch](detail::TensorNode& o) {
                                  for (std::size_t i = 0; i < n; ++i)
                                    for (std::size_t j = 0; j < n; ++j)
                                      for (std::size_t c = 0; c < ch; ++c) {
                                        const double g = o.grad[(i * n + j) * ch + c];
                                        if (qg) {
                                          qn->ensure_grad();
                                          qn->grad[i * ch + c] += g;
                                        }
                                        if (kg) {
                                          kn->ensure_grad();
                                          kn->grad[j * ch + c] -= g;
                                        }
                                      }
                                });
}

// out[i,c] = (1/N) sum_j a[i,j,c] * v[j,c]; per-channel attention applied to
// per-joint values, averaged over the partner-joint axis.
inline Tensor pairwise_contract(const Tensor& a, const Tensor& v) {
  detail::require(a.rank() == 3, "pairwise_contract: attention must be N x N x C");
  const std::size_t n = a.dim(0), ch = a.dim(2);
  detail::require(a.dim(1) == n, "pairwise_contract: attention must be square");
  detail::require(v.rank() == 2 && v.dim(0) == n && v.dim(1) == ch,
                  "pairwise_contract: value shape mismatch");
  std::vector<double> out(n * ch, 0.0);
  const auto& ad = a.data();
  const auto& vd = v.data();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t c = 0; c < ch; ++c)
        out[i * ch + c] += ad[(i * n + j) * ch + c] * vd[j * ch + c];
  for (double& x : out) x /= double(n);
  auto an = a.node(), vn = v.node();
  const bool ag = a.requires_grad(), vg = v.requires_grad();
  return detail::make_op_result(
      {n, ch}, std::move(out), {a, v}, [an, vn, ag, vg, n, ch](detail::TensorNode& o) {
        const double inv_n = 1.0 / double(n);
        if (ag) an->ensure_grad();
        if (vg) vn->ensure_grad();
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < n; ++j)
            for (std::size_t c = 0; c < ch; ++c) {
              const double g = o.grad[i * ch + c] * inv_n;
              if (ag) an->grad[(i * n + j) * ch + c] += g * vn->data[j * ch + c];
              if (vg) vn->grad[j * ch + c] += g * an->data[(i * n + j) * ch + c];
            }
      });
}

// y[t,i,c] = sum_j A[i,j] x[t,j,c] for a constant V x V mixing matrix.
inline Tensor adjacency_mix(const Tensor& x, const std::vector<double>& mix,
                            std::size_t v) {
  detail::require(x.rank() == 3 && x.dim(1) == v, "adjacency_mix: expects T x V x C");
  detail::require(mix.size() == v * v, "adjacency_mix: mixing matrix must be V x V");
  const std::size_t t = x.dim(0), ch = x.dim(2);
  std::vector<double> out(x.numel(), 0.0);
  const auto& xd = x.data();
  for (std::size_t f = 0; f < t; ++f) {
    const double* xf = xd.data() + f * v * ch;
    double* yf = out.data() + f * v * ch;
    for (std::size_t i = 0; i < v; ++i)
      for (std::size_t j = 0; j < v; ++j) {
        const double a = mix[i * v + j];
        if (a == 0.0) continue;
        const double* xj = xf + j * ch;
        double* yi = yf + i * ch;
        for (std::size_t c = 0; c < ch; ++c) yi[c] += a * xj[c];
      }
  }
  auto xn = x.node();
  const bool xg = x.requires_grad();
  return detail::make_op_result(x.shape(), std::move(out), {x},
                                [xn, xg, mix, t, v, ch](detail::TensorNode& o) {
                                  if (!xg) return;
                                  xn->ensure_grad();
                                  for (std::size_t f = 0; f < t; ++f) {
                                    const double* gf = o.grad.data() + f * v * ch;
                                    double* df = xn->grad.data() + f * v * ch;
                                    for (std::size_t i = 0; i < v; ++i)
                                      for (std::size_t j = 0; j < v; ++j) {
                                        const double a = mix[i * v + j];
                                        if (a == 0.0) continue;
                                        const double* gi = gf + i * ch;
                                        double* dj = df + j * ch;
                                        for (std::size_t c = 0; c < ch; ++c)
                                          dj[c] += a * gi[c];
                                      }
                                  }
                                });
}

// Strided 1-D convolution along the frame axis, independent per joint.
// x: [T x V x Cin], w: [Cout x K x Cin], b: [Cout]; zero padding of K/2 frames.
inline Tensor temporal_conv(const Tensor& x, const Tensor& w, const Tensor& b,
                            std::size_t stride) {
  detail::require(x.rank() == 3, "temporal_conv: input must be T x V x C");
  detail::require(w.rank() == 3, "temporal_conv: weight must be Cout x K x Cin");
  detail::require(stride >= 1, "temporal_conv: stride must be >= 1");
  const std::size_t t = x.dim(0), v = x.dim(1), cin = x.dim(2);
  const std::size_t cout = w.dim(0), k = w.dim(1);
  detail::require(w.dim(2) == cin, "temporal_conv: channel mismatch");
  detail::require(b.rank() == 1 && b.dim(0) == cout, "temporal_conv: bias mismatch");
  const std::size_t pad = k / 2;
  detail::require(t + 2 * pad >= k, "temporal_conv: input shorter than kernel");
  const std::size_t tout = (t + 2 * pad - k) / stride + 1;
  std::vector<double> out(tout * v * cout);
  const double* xd = x.data().data();
  const double* wd = w.data().data();
  const double* bd = b.data().data();
  for (std::size_t to = 0; to < tout; ++to)
    for (std::size_t jv = 0; jv < v; ++jv) {
      double* orow = out.data() + (to * v + jv) * cout;
      for (std::size_t co = 0; co < cout; ++co) orow[co] = bd[co];
      for (std::size_t kk = 0; kk < k; ++kk) {
        const std::ptrdiff_t tf = std::ptrdiff_t(to * stride + kk) - std::ptrdiff_t(pad);
        if (tf < 0 || tf >= std::ptrdiff_t(t)) continue;
        const double* xrow = xd + (std::size_t(tf) * v + jv) * cin;
        for (std::size_t co = 0; co < cout; ++co) {
          const double* wrow = wd + (co * k + kk) * cin;
          double acc = 0.0;
          for (std::size_t ci = 0; ci < cin; ++ci) acc += wrow[ci] * xrow[ci];
          orow[co] += acc;
        }
      }
    }
  auto xn = x.node(), wn = w.node(), bn = b.node();
  const bool xg = x.requires_grad(), wg = w.requires_grad(), bg = b.requires_grad();
  return detail::make_op_result(
      {tout, v, cout}, std::move(out), {x, w, b},
      [xn, wn, bn, xg, wg, bg, t, v, cin, cout, k, pad, stride,
       tout](detail::TensorNode& o) {
        if (bg) bn->ensure_grad();
        if (wg) wn->ensure_grad();
        if (xg) xn->ensure_grad();
        for (std::size_t to = 0; to < tout; ++to)
          for (std::size_t jv = 0; jv < v; ++jv) {
            const double* grow = o.grad.data() + (to * v + jv) * cout;
            if (bg)
              for (std::size_t co = 0; co < cout; ++co) bn->grad[co] += grow[co];
            for (std::size_t kk = 0; kk < k; ++kk) {
              const std::ptrdiff_t tf =
                  std::ptrdiff_t(to * stride + kk) - std::ptrdiff_t(pad);
              if (tf < 0 || tf >= std::ptrdiff_t(t)) continue;
              const std::size_t xoff = (std::size_t(tf) * v + jv) * cin;
              for (std::size_t co = 0; co < cout; ++co) {
                const double g = grow[co];
                if (g == 0.0) continue;
                if (wg) {
                  double* wrow = wn->grad.data() + (co * k + kk) * cin;
                  const double* xrow = xn->data.data() + xoff;
                  for (std::size_t ci = 0; ci < cin; ++ci) wrow[ci] += g * xrow[ci];
                }
                if (xg) {
                  const double* wrow = wn->data.data() + (co * k + kk) * cin;
                  double* xrow = xn->grad.data() + xoff;
                  for (std::size_t ci = 0; ci < cin; ++ci) xrow[ci] += g * wrow[ci];
                }
              }
            }
          }
      });
}

// y[r,c] = w[r] * x[r,c] over the matrix view; the importance-map reweighting.
inline Tensor scale_channels(const Tensor& x, const Tensor& w) {
  const std::size_t cols = detail::mat_cols(x), rows = detail::mat_rows(x);
  detail::require(w.numel() == rows, "scale_channels: one weight per row required");
  std::vector<double> out(x.numel());
  const auto& xd = x.data();
  const auto& wd = w.data();
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] = wd[r] * xd[r * cols + c];
  auto xn = x.node(), wn = w.node();
  const bool xg = x.requires_grad(), wg = w.requires_grad();
  return detail::make_op_result(x.shape(), std::move(out), {x, w},
                                [xn, wn, xg, wg, rows, cols](detail::TensorNode& o) {
                                  if (xg) xn->ensure_grad();
                                  if (wg) wn->ensure_grad();
                                  for (std::size_t r = 0; r < rows; ++r)
                                    for (std::size_t c = 0; c < cols; ++c) {
                                      const double g = o.grad[r * cols + c];
                                      if (xg)
                                        xn->grad[r * cols + c] += g * wn->data[r];
                                      if (wg)
                                        wn->grad[r] += g * xn->data[r * cols + c];
                                    }
                                });
}

// sum_t || a[t,:] - b ||_2 for a [T x V] and broadcast row b [V].
// Zero-distance rows contribute zero subgradient.
inline Tensor rows_l2_diff_sum(const Tensor& a, const Tensor& b) {
  detail::require(a.rank() == 2, "rows_l2_diff_sum: expects T x V");
  const std::size_t t = a.dim(0), v = a.dim(1);
  detail::require(b.rank() == 1 && b.dim(0) == v, "rows_l2_diff_sum: row length mismatch");
  const auto& ad = a.data();
  const auto& bd = b.data();
  std::vector<double> dist(t);
  double total = 0.0;
  for (std::size_t r = 0; r < t; ++r) {
    double sq = 0.0;
    for (std::size_t c = 0; c < v; ++c) {
      const double d = ad[r * v + c] - bd[c];
      sq += d * d;
    }
    dist[r] = std::sqrt(sq);
    total += dist[r];
  }
  auto an = a.node(), bn = b.node();
  const bool ag = a.requires_grad(), bg = b.requires_grad();
  return detail::make_op_result(
      {1}, {total}, {a, b},
      [an, bn, ag, bg, t, v, dist = std::move(dist)](detail::TensorNode& o) {
        const double g = o.grad[0];
        if (ag) an->ensure_grad();
        if (bg) bn->ensure_grad();
        for (std::size_t r = 0; r < t; ++r) {
          if (dist[r] == 0.0) continue;
          const double s = g / dist[r];
          for (std::size_t c = 0; c < v; ++c) {
            const double d = an->data[r * v + c] - bn->data[c];
            if (ag) an->grad[r * v + c] += s * d;
            if (bg) bn->grad[c] -= s * d;
          }
        }
      });
}

}  // namespace skelctx
