#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <thread>
#include <unordered_set>
#include <vector>

namespace chunkstack::ad {

template <typename T>
struct Node;

template <typename T>
using NodePtr = std::shared_ptr<Node<T>>;

// A value in the computation graph. Leaves hold inputs or trainable
// parameters; op nodes keep their parents and a closure that routes the
// output gradient back to them. The tape is the implicit DAG of parents.
template <typename T>
struct Node {
  std::vector<int64_t> shape;
  std::vector<T> value;
  std::vector<T> grad;  // sized lazily; empty means "no contribution yet"
  bool requires_grad = false;
  bool backward_done = false;
  std::vector<NodePtr<T>> parents;
  std::function<void(Node<T>&)> backward_fn;

  int64_t numel() const {
    int64_t n = 1;
    for (int64_t d : shape) n *= d;
    return n;
  }
  int64_t rows() const { return shape.empty() ? 1 : shape[0]; }
  int64_t cols() const { return shape.size() < 2 ? numel() : shape[1]; }
};

inline int worker_threads() {
  static int n = [] {
    const char* e = std::getenv("CHUNKSTACK_THREADS");
    if (!e) return 1;
    int v = std::atoi(e);
    return v < 1 ? 1 : v;
  }();
  return n;
}

// Splits [0, n) into contiguous ranges, one per worker. Each worker owns
// disjoint output rows and sums in fixed k-order, so results are bitwise
// identical for any thread count.
template <typename F>
inline void parallel_rows(int64_t n, F&& body) {
  int nt = worker_threads();
  if (nt <= 1 || n < 64) {
    body(int64_t{0}, n);
    return;
  }
  int64_t per = (n + nt - 1) / nt;
  std::vector<std::thread> ws;
  for (int t = 0; t < nt; ++t) {
    int64_t lo = t * per, hi = std::min<int64_t>(n, lo + per);
    if (lo >= hi) break;
    ws.emplace_back([&body, lo, hi] { body(lo, hi); });
  }
  for (auto& w : ws) w.join();
}

template <typename T>
[[noreturn]] inline void fail(const std::string& msg) {
  throw std::runtime_error(msg);
}

inline std::string shape_str(const std::vector<int64_t>& s) {
  std::string r = "[";
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) r += "x";
    r += std::to_string(s[i]);
  }
  return r + "]";
}

template <typename T>
inline void check_finite(const char* op, const std::vector<T>& v) {
  for (T x : v) {
    if (!std::isfinite(static_cast<double>(x)))
      throw std::runtime_error(std::string("non-finite output in kernel '") + op + "'");
  }
}

template <typename T>
NodePtr<T> make_leaf(std::vector<int64_t> shape, std::vector<T> value,
                     bool requires_grad = false) {
  auto n = std::make_shared<Node<T>>();
  n->shape = std::move(shape);
  n->value = std::move(value);
  n->requires_grad = requires_grad;
  if (n->numel() != static_cast<int64_t>(n->value.size()))
    fail<T>("leaf: data length does not match shape " + shape_str(n->shape));
  return n;
}

template <typename T>
NodePtr<T> make_scalar(T v, bool requires_grad = false) {
  return make_leaf<T>({1}, {v}, requires_grad);
}

template <typename T>
void ensure_grad(Node<T>& n) {
  if (n.grad.empty()) n.grad.assign(static_cast<size_t>(n.numel()), T(0));
}

template <typename T>
NodePtr<T> make_op(const char* name, std::vector<int64_t> shape, std::vector<T> value,
                   std::vector<NodePtr<T>> parents,
                   std::function<void(Node<T>&)> backward_fn) {
  check_finite(name, value);
  auto n = std::make_shared<Node<T>>();
  n->shape = std::move(shape);
  n->value = std::move(value);
  for (const auto& p : parents)
    if (p->requires_grad) n->requires_grad = true;
  if (n->requires_grad) {
    n->parents = std::move(parents);
    n->backward_fn = std::move(backward_fn);
  }
  return n;
}

// Reverse-mode sweep from a scalar loss. Visits each node exactly once in
// reverse topological order.
template <typename T>
void backward(const NodePtr<T>& loss) {
  if (loss->numel() != 1) fail<T>("backward: loss must be a scalar");
  if (loss->backward_done) fail<T>("backward: called twice on the same loss without reset");
  loss->backward_done = true;
  if (!loss->requires_grad) return;

  std::vector<Node<T>*> order;
  std::unordered_set<Node<T>*> seen;
  // iterative post-order DFS
  std::vector<std::pair<Node<T>*, size_t>> stack{{loss.get(), 0}};
  seen.insert(loss.get());
  while (!stack.empty()) {
    auto& [node, idx] = stack.back();
    if (idx < node->parents.size()) {
      Node<T>* p = node->parents[idx++].get();
      if (p->requires_grad && seen.insert(p).second) stack.push_back({p, 0});
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  ensure_grad(*loss);
  loss->grad[0] = T(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<T>* n = *it;
    ensure_grad(*n);
    if (n->backward_fn) n->backward_fn(*n);
  }
}

// ---------------------------------------------------------------------------
// raw gemm helpers (fixed left-to-right k summation)

template <typename T>
void gemm_nn(const T* a, const T* b, T* c, int64_t m, int64_t k, int64_t n, bool accumulate) {
  parallel_rows(m, [&](int64_t lo, int64_t hi) {
    for (int64_t i = lo; i < hi; ++i) {
      T* crow = c + i * n;
      if (!accumulate)
        for (int64_t j = 0; j < n; ++j) crow[j] = T(0);
      for (int64_t p = 0; p < k; ++p) {
        T av = a[i * k + p];
        const T* brow = b + p * n;
        for (int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
      }
    }
  });
}

// c[m x n] (+)= a[m x k] * b^T where b is [n x k]
template <typename T>
void gemm_nt(const T* a, const T* b, T* c, int64_t m, int64_t k, int64_t n, bool accumulate) {
  parallel_rows(m, [&](int64_t lo, int64_t hi) {
    for (int64_t i = lo; i < hi; ++i) {
      for (int64_t j = 0; j < n; ++j) {
        T acc = T(0);
        const T* arow = a + i * k;
        const T* brow = b + j * k;
        for (int64_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
        if (accumulate)
          c[i * n + j] += acc;
        else
          c[i * n + j] = acc;
      }
    }
  });
}

// c[k x n] (+)= a^T * b where a is [m x k], b is [m x n]
template <typename T>
void gemm_tn(const T* a, const T* b, T* c, int64_t m, int64_t k, int64_t n, bool accumulate) {
  parallel_rows(k, [&](int64_t lo, int64_t hi) {
    for (int64_t i = lo; i < hi; ++i) {
      for (int64_t j = 0; j < n; ++j) {
        T acc = T(0);
        for (int64_t p = 0; p < m; ++p) acc += a[p * k + i] * b[p * n + j];
        if (accumulate)
          c[i * n + j] += acc;
        else
          c[i * n + j] = acc;
      }
    }
  });
}

// ---------------------------------------------------------------------------
// kernels

namespace ops {

template <typename T>
NodePtr<T> matmul(const NodePtr<T>& a, const NodePtr<T>& b) {
  if (a->shape.size() != 2 || b->shape.size() != 2 || a->shape[1] != b->shape[0])
    fail<T>("matmul: incompatible shapes " + shape_str(a->shape) + " and " + shape_str(b->shape));
  int64_t m = a->shape[0], k = a->shape[1], n = b->shape[1];
  std::vector<T> out(static_cast<size_t>(m * n));
  gemm_nn(a->value.data(), b->value.data(), out.data(), m, k, n, false);
  return make_op<T>("matmul", {m, n}, std::move(out), {a, b}, [m, k, n](Node<T>& self) {
    auto& pa = *self.parents[0];
    auto& pb = *self.parents[1];
    if (pa.requires_grad) {
      ensure_grad(pa);
      gemm_nt(self.grad.data(), pb.value.data(), pa.grad.data(), m, n, k, true);
    }
    if (pb.requires_grad) {
      ensure_grad(pb);
      gemm_tn(pa.value.data(), self.grad.data(), pb.grad.data(), m, k, n, true);
    }
  });
}

template <typename T>
NodePtr<T> add(const NodePtr<T>& a, const NodePtr<T>& b) {
  if (a->shape != b->shape)
    fail<T>("add: shape mismatch " + shape_str(a->shape) + " vs " + shape_str(b->shape));
  std::vector<T> out(a->value.size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = a->value[i] + b->value[i];
  return make_op<T>("add", a->shape, std::move(out), {a, b}, [](Node<T>& self) {
    for (int pi = 0; pi < 2; ++pi) {
      auto& p = *self.parents[pi];
      if (!p.requires_grad) continue;
      ensure_grad(p);
      for (size_t i = 0; i < self.grad.size(); ++i) p.grad[i] += self.grad[i];
    }
  });
}

// Elementwise product; either operand may be a scalar (numel 1) broadcast.
template <typename T>
NodePtr<T> mul(const NodePtr<T>& a, const NodePtr<T>& b) {
  bool as = a->numel() == 1, bs = b->numel() == 1;
  if (!as && !bs && a->shape != b->shape)
    fail<T>("mul: shape mismatch " + shape_str(a->shape) + " vs " + shape_str(b->shape));
  const auto& big = bs ? a : b;
  std::vector<T> out(big->value.size());
  for (size_t i = 0; i < out.size(); ++i)
    out[i] = (as ? a->value[0] : a->value[i]) * (bs ? b->value[0] : b->value[i]);
  return make_op<T>("mul", big->shape, std::move(out), {a, b}, [as, bs](Node<T>& self) {
    auto& pa = *self.parents[0];
    auto& pb = *self.parents[1];
    if (pa.requires_grad) {
      ensure_grad(pa);
      for (size_t i = 0; i < self.grad.size(); ++i) {
        T g = self.grad[i] * (bs ? pb.value[0] : pb.value[i]);
        pa.grad[as ? 0 : i] += g;
      }
    }
    if (pb.requires_grad) {
      ensure_grad(pb);
      for (size_t i = 0; i < self.grad.size(); ++i) {
        T g = self.grad[i] * (as ? pa.value[0] : pa.value[i]);
        pb.grad[bs ? 0 : i] += g;
      }
    }
  });
}

template <typename T>
NodePtr<T> scale_by(const NodePtr<T>& a, T c) {
  std::vector<T> out(a->value.size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = a->value[i] * c;
  return make_op<T>("scale_by", a->shape, std::move(out), {a}, [c](Node<T>& self) {
    auto& p = *self.parents[0];
    ensure_grad(p);
    for (size_t i = 0; i < self.grad.size(); ++i) p.grad[i] += self.grad[i] * c;
  });
}

// x [R x C] + b [C], broadcast over rows.
template <typename T>
NodePtr<T> bias_add(const NodePtr<T>& x, const NodePtr<T>& b) {
  if (x->shape.size() != 2 || b->numel() != x->shape[1])
    fail<T>("bias_add: shape mismatch " + shape_str(x->shape) + " vs " + shape_str(b->shape));
  int64_t r = x->shape[0], c = x->shape[1];
  std::vector<T> out(x->value.size());
  for (int64_t i = 0; i < r; ++i)
    for (int64_t j = 0; j < c; ++j) out[i * c + j] = x->value[i * c + j] + b->value[j];
  return make_op<T>("bias_add", x->shape, std::move(out), {x, b}, [r, c](Node<T>& self) {
    auto& px = *self.parents[0];
    auto& pb = *self.parents[1];
    if (px.requires_grad) {
      ensure_grad(px);
      for (size_t i = 0; i < self.grad.size(); ++i) px.grad[i] += self.grad[i];
    }
    if (pb.requires_grad) {
      ensure_grad(pb);
      for (int64_t i = 0; i < r; ++i)
        for (int64_t j = 0; j < c; ++j) pb.grad[j] += self.grad[i * c + j];
    }
  });
}

template <typename T>
NodePtr<T> relu(const NodePtr<T>& x) {
  std::vector<T> out(x->value.size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = x->value[i] > T(0) ? x->value[i] : T(0);
  return make_op<T>("relu", x->shape, std::move(out), {x}, [](Node<T>& self) {
    auto& p = *self.parents[0];
    ensure_grad(p);
    for (size_t i = 0; i < self.grad.size(); ++i)
      if (p.value[i] > T(0)) p.grad[i] += self.grad[i];
  });
}

template <typename T>
NodePtr<T> sigmoid(const NodePtr<T>& x) {
  std::vector<T> out(x->value.size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = T(1) / (T(1) + std::exp(-x->value[i]));
  return make_op<T>("sigmoid", x->shape, std::move(out), {x}, [](Node<T>& self) {
    auto& p = *self.parents[0];
    ensure_grad(p);
    for (size_t i = 0; i < self.grad.size(); ++i) {
      T s = self.value[i];
      p.grad[i] += self.grad[i] * s * (T(1) - s);
    }
  });
}

template <typename T>
NodePtr<T> tanh_(const NodePtr<T>& x) {
  std::vector<T> out(x->value.size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(x->value[i]);
  return make_op<T>("tanh", x->shape, std::move(out), {x}, [](Node<T>& self) {
    auto& p = *self.parents[0];
    ensure_grad(p);
    for (size_t i = 0; i < self.grad.size(); ++i) {
      T t = self.value[i];
      p.grad[i] += self.grad[i] * (T(1) - t * t);
    }
  });
}

inline constexpr double kGeluAlpha = 0.7978845608028654;  // sqrt(2/pi)
inline constexpr double kGeluBeta = 0.044715;

// gelu, tanh approximation: 0.5 x (1 + tanh(sqrt(2/pi) (x + 0.044715 x^3)))
template <typename T>
NodePtr<T> gelu(const NodePtr<T>& x) {
  constexpr double kAlpha = kGeluAlpha;
  constexpr double kBeta = kGeluBeta;
  std::vector<T> out(x->value.size());
  for (size_t i = 0; i < out.size(); ++i) {
    double v = static_cast<double>(x->value[i]);
    double t = std::tanh(kAlpha * (v + kBeta * v * v * v));
    out[i] = static_cast<T>(0.5 * v * (1.0 + t));
  }
  return make_op<T>("gelu", x->shape, std::move(out), {x}, [](Node<T>& self) {
    auto& p = *self.parents[0];
    ensure_grad(p);
    for (size_t i = 0; i < self.grad.size(); ++i) {
      double v = static_cast<double>(p.value[i]);
      double u = kGeluAlpha * (v + kGeluBeta * v * v * v);
      double t = std::tanh(u);
      double du = kGeluAlpha * (1.0 + 3.0 * kGeluBeta * v * v);
      double d = 0.5 * (1.0 + t) + 0.5 * v * (1.0 - t * t) * du;
      p.grad[i] += self.grad[i] * static_cast<T>(d);
    }
  });
}

// Row-stable softmax over the last dimension.
template <typename T>
NodePtr<T> softmax_lastdim(const NodePtr<T>& x) {
  int64_t r = x->rows(), c = x->cols();
  std::vector<T> out(x->value.size());
  for (int64_t i = 0; i < r; ++i) {
    const T* row = x->value.data() + i * c;
    T* orow = out.data() + i * c;
    T m = row[0];
    for (int64_t j = 1; j < c; ++j) m = std::max(m, row[j]);
    T sum = T(0);
    for (int64_t j = 0; j < c; ++j) {
      orow[j] = std::exp(row[j] - m);
      sum += orow[j];
    }
    for (int64_t j = 0; j < c; ++j) orow[j] /= sum;
  }
  return make_op<T>("softmax", x->shape, std::move(out), {x}, [r, c](Node<T>& self) {
    auto& p = *self.parents[0];
    ensure_grad(p);
    for (int64_t i = 0; i < r; ++i) {
      const T* y = self.value.data() + i * c;
      const T* dy = self.grad.data() + i * c;
      T dot = T(0);
      for (int64_t j = 0; j < c; ++j) dot += dy[j] * y[j];
      for (int64_t j = 0; j < c; ++j) p.grad[i * c + j] += y[j] * (dy[j] - dot);
    }
  });
}

// Layer norm over the last dimension with population variance, then an
// elementwise affine with gain/bias of length C.
template <typename T>
NodePtr<T> layer_norm_lastdim(const NodePtr<T>& x, const NodePtr<T>& gain,
                              const NodePtr<T>& bias, T eps) {
  int64_t r = x->rows(), c = x->cols();
  if (gain->numel() != c || bias->numel() != c)
    fail<T>("layer_norm: gain/bias length must equal last dim of " + shape_str(x->shape));
  std::vector<T> out(x->value.size());
  std::vector<T> xhat(x->value.size());
  std::vector<T> inv_std(static_cast<size_t>(r));
  for (int64_t i = 0; i < r; ++i) {
    const T* row = x->value.data() + i * c;
    T mean = T(0);
    for (int64_t j = 0; j < c; ++j) mean += row[j];
    mean /= static_cast<T>(c);
    T var = T(0);
    for (int64_t j = 0; j < c; ++j) {
      T d = row[j] - mean;
      var += d * d;
    }
    var /= static_cast<T>(c);
    T inv = T(1) / std::sqrt(var + eps);
    inv_std[i] = inv;
    for (int64_t j = 0; j < c; ++j) {
      T xh = (row[j] - mean) * inv;
      xhat[i * c + j] = xh;
      out[i * c + j] = gain->value[j] * xh + bias->value[j];
    }
  }
  return make_op<T>(
      "layer_norm", x->shape, std::move(out), {x, gain, bias},
      [r, c, xhat = std::move(xhat), inv_std = std::move(inv_std)](Node<T>& self) {
        auto& px = *self.parents[0];
        auto& pg = *self.parents[1];
        auto& pb = *self.parents[2];
        if (pg.requires_grad) {
          ensure_grad(pg);
          for (int64_t i = 0; i < r; ++i)
            for (int64_t j = 0; j < c; ++j)
              pg.grad[j] += self.grad[i * c + j] * xhat[i * c + j];
        }
        if (pb.requires_grad) {
          ensure_grad(pb);
          for (int64_t i = 0; i < r; ++i)
            for (int64_t j = 0; j < c; ++j) pb.grad[j] += self.grad[i * c + j];
        }
        if (px.requires_grad) {
          ensure_grad(px);
          for (int64_t i = 0; i < r; ++i) {
            T mean_dxh = T(0), mean_dxh_xh = T(0);
            // dxhat = dy * gain
            for (int64_t j = 0; j < c; ++j) {
              T dxh = self.grad[i * c + j] * pg.value[j];
              mean_dxh += dxh;
              mean_dxh_xh += dxh * xhat[i * c + j];
            }
            mean_dxh /= static_cast<T>(c);
            mean_dxh_xh /= static_cast<T>(c);
            for (int64_t j = 0; j < c; ++j) {
              T dxh = self.grad[i * c + j] * pg.value[j];
              px.grad[i * c + j] +=
                  inv_std[i] * (dxh - mean_dxh - xhat[i * c + j] * mean_dxh_xh);
            }
          }
        }
      });
}

// Row lookup: table [V x H], ids of length L -> [L x H].
template <typename T>
NodePtr<T> embedding(const NodePtr<T>& table, const std::vector<int>& ids) {
  if (table->shape.size() != 2) fail<T>("embedding: table must be 2-d");
  int64_t v = table->shape[0], h = table->shape[1];
  std::vector<T> out(ids.size() * static_cast<size_t>(h));
  for (size_t l = 0; l < ids.size(); ++l) {
    if (ids[l] < 0 || ids[l] >= v)
      fail<T>("embedding: id " + std::to_string(ids[l]) + " out of range for vocab " +
              std::to_string(v));
    std::copy_n(table->value.data() + ids[l] * h, h, out.data() + l * h);
  }
  return make_op<T>("embedding", {static_cast<int64_t>(ids.size()), h}, std::move(out),
                    {table}, [ids, h](Node<T>& self) {
                      auto& p = *self.parents[0];
                      ensure_grad(p);
                      for (size_t l = 0; l < ids.size(); ++l)
                        for (int64_t j = 0; j < h; ++j)
                          p.grad[ids[l] * h + j] += self.grad[l * h + j];
                    });
}

// 1-d convolution along the row axis with zero same-padding.
// x [Tr x Cin], w [K x Cin x Cout], b [Cout] -> [Tr x Cout]. K must be odd.
template <typename T>
NodePtr<T> conv1d_same(const NodePtr<T>& x, const NodePtr<T>& w, const NodePtr<T>& b) {
  if (x->shape.size() != 2 || w->shape.size() != 3 || w->shape[1] != x->shape[1])
    fail<T>("conv1d: incompatible shapes " + shape_str(x->shape) + " and " + shape_str(w->shape));
  int64_t tr = x->shape[0], cin = x->shape[1], k = w->shape[0], cout = w->shape[2];
  if (k % 2 == 0) fail<T>("conv1d: kernel size must be odd for same-padding");
  if (b->numel() != cout) fail<T>("conv1d: bias length mismatch");
  int64_t half = k / 2;
  std::vector<T> out(static_cast<size_t>(tr * cout));
  for (int64_t t = 0; t < tr; ++t)
    for (int64_t co = 0; co < cout; ++co) {
      T acc = b->value[co];
      for (int64_t kk = 0; kk < k; ++kk) {
        int64_t src = t + kk - half;
        if (src < 0 || src >= tr) continue;
        for (int64_t ci = 0; ci < cin; ++ci)
          acc += x->value[src * cin + ci] * w->value[(kk * cin + ci) * cout + co];
      }
      out[t * cout + co] = acc;
    }
  return make_op<T>("conv1d", {tr, cout}, std::move(out), {x, w, b},
                    [tr, cin, k, cout, half](Node<T>& self) {
                      auto& px = *self.parents[0];
                      auto& pw = *self.parents[1];
                      auto& pb = *self.parents[2];
                      if (pb.requires_grad) {
                        ensure_grad(pb);
                        for (int64_t t = 0; t < tr; ++t)
                          for (int64_t co = 0; co < cout; ++co)
                            pb.grad[co] += self.grad[t * cout + co];
                      }
                      if (px.requires_grad) ensure_grad(px);
                      if (pw.requires_grad) ensure_grad(pw);
                      for (int64_t t = 0; t < tr; ++t)
                        for (int64_t kk = 0; kk < k; ++kk) {
                          int64_t src = t + kk - half;
                          if (src < 0 || src >= tr) continue;
                          for (int64_t co = 0; co < cout; ++co) {
                            T g = self.grad[t * cout + co];
                            for (int64_t ci = 0; ci < cin; ++ci) {
                              if (px.requires_grad)
                                px.grad[src * cin + ci] +=
                                    g * pw.value[(kk * cin + ci) * cout + co];
                              if (pw.requires_grad)
                                pw.grad[(kk * cin + ci) * cout + co] +=
                                    g * px.value[src * cin + ci];
                            }
                          }
                        }
                    });
}

// Mean over rows restricted to mask-1 rows. x [Tr x H] -> [H].
template <typename T>
NodePtr<T> masked_mean_rows(const NodePtr<T>& x, const std::vector<int>& mask) {
  int64_t tr = x->rows(), h = x->cols();
  if (static_cast<int64_t>(mask.size()) != tr) fail<T>("masked_mean: mask length mismatch");
  int64_t n = 0;
  for (int m : mask) n += (m != 0);
  if (n == 0) fail<T>("masked_mean: mask selects no rows");
  std::vector<T> out(static_cast<size_t>(h), T(0));
  for (int64_t t = 0; t < tr; ++t) {
    if (!mask[t]) continue;
    for (int64_t j = 0; j < h; ++j) out[j] += x->value[t * h + j];
  }
  T inv = T(1) / static_cast<T>(n);
  for (int64_t j = 0; j < h; ++j) out[j] *= inv;
  return make_op<T>("masked_mean", {h}, std::move(out), {x}, [mask, tr, h, inv](Node<T>& self) {
    auto& p = *self.parents[0];
    ensure_grad(p);
    for (int64_t t = 0; t < tr; ++t) {
      if (!mask[t]) continue;
      for (int64_t j = 0; j < h; ++j) p.grad[t * h + j] += self.grad[j] * inv;
    }
  });
}

// Per-column max over mask-1 rows; ties go to the first maximal row.
template <typename T>
NodePtr<T> masked_max_rows(const NodePtr<T>& x, const std::vector<int>& mask) {
  int64_t tr = x->rows(), h = x->cols();
  if (static_cast<int64_t>(mask.size()) != tr) fail<T>("masked_max: mask length mismatch");
  std::vector<int64_t> arg(static_cast<size_t>(h), -1);
  std::vector<T> out(static_cast<size_t>(h));
  for (int64_t j = 0; j < h; ++j) {
    for (int64_t t = 0; t < tr; ++t) {
      if (!mask[t]) continue;
      T v = x->value[t * h + j];
      if (arg[j] < 0 || v > out[j]) {
        out[j] = v;
        arg[j] = t;
      }
    }
    if (arg[j] < 0) fail<T>("masked_max: mask selects no rows");
  }
  return make_op<T>("masked_max", {h}, std::move(out), {x},
                    [arg = std::move(arg), h](Node<T>& self) {
                      auto& p = *self.parents[0];
                      ensure_grad(p);
                      for (int64_t j = 0; j < h; ++j) p.grad[arg[j] * h + j] += self.grad[j];
                    });
}

// Stack 1-d vectors (or 1 x H rows) into a [T x H] matrix.
template <typename T>
NodePtr<T> concat_rows(const std::vector<NodePtr<T>>& rows) {
  if (rows.empty()) fail<T>("concat_rows: empty input");
  int64_t h = rows[0]->numel();
  std::vector<T> out;
  out.reserve(rows.size() * static_cast<size_t>(h));
  for (const auto& r : rows) {
    if (r->numel() != h) fail<T>("concat_rows: row length mismatch");
    out.insert(out.end(), r->value.begin(), r->value.end());
  }
  return make_op<T>("concat_rows", {static_cast<int64_t>(rows.size()), h}, std::move(out),
                    rows, [h](Node<T>& self) {
                      for (size_t t = 0; t < self.parents.size(); ++t) {
                        auto& p = *self.parents[t];
                        if (!p.requires_grad) continue;
                        ensure_grad(p);
                        for (int64_t j = 0; j < h; ++j) p.grad[j] += self.grad[t * h + j];
                      }
                    });
}

// Concatenate matrices with equal row counts along columns.
template <typename T>
NodePtr<T> concat_cols(const std::vector<NodePtr<T>>& parts) {
  if (parts.empty()) fail<T>("concat_cols: empty input");
  int64_t r = parts[0]->rows();
  int64_t ctot = 0;
  for (const auto& p : parts) {
    if (p->rows() != r) fail<T>("concat_cols: row count mismatch");
    ctot += p->cols();
  }
  std::vector<T> out(static_cast<size_t>(r * ctot));
  std::vector<int64_t> offs;
  int64_t off = 0;
  for (const auto& p : parts) {
    int64_t c = p->cols();
    offs.push_back(off);
    for (int64_t i = 0; i < r; ++i)
      std::copy_n(p->value.data() + i * c, c, out.data() + i * ctot + off);
    off += c;
  }
  return make_op<T>("concat_cols", {r, ctot}, std::move(out), parts,
                    [r, ctot, offs = std::move(offs)](Node<T>& self) {
                      for (size_t pi = 0; pi < self.parents.size(); ++pi) {
                        auto& p = *self.parents[pi];
                        if (!p.requires_grad) continue;
                        ensure_grad(p);
                        int64_t c = p.cols();
                        for (int64_t i = 0; i < r; ++i)
                          for (int64_t j = 0; j < c; ++j)
                            p.grad[i * c + j] += self.grad[i * ctot + offs[pi] + j];
                      }
                    });
}

template <typename T>
NodePtr<T> slice_rows(const NodePtr<T>& x, int64_t r0, int64_t r1) {
  int64_t r = x->rows(), c = x->cols();
  if (r0 < 0 || r1 > r || r0 >= r1) fail<T>("slice_rows: bad range");
  std::vector<T> out(x->value.begin() + r0 * c, x->value.begin() + r1 * c);
  return make_op<T>("slice_rows", {r1 - r0, c}, std::move(out), {x}, [r0, r1, c](Node<T>& self) {
    auto& p = *self.parents[0];
    ensure_grad(p);
    for (int64_t i = 0; i < r1 - r0; ++i)
      for (int64_t j = 0; j < c; ++j) p.grad[(r0 + i) * c + j] += self.grad[i * c + j];
  });
}

template <typename T>
NodePtr<T> slice_cols(const NodePtr<T>& x, int64_t c0, int64_t c1) {
  int64_t r = x->rows(), c = x->cols();
  if (c0 < 0 || c1 > c || c0 >= c1) fail<T>("slice_cols: bad range");
  int64_t w = c1 - c0;
  std::vector<T> out(static_cast<size_t>(r * w));
  for (int64_t i = 0; i < r; ++i)
    std::copy_n(x->value.data() + i * c + c0, w, out.data() + i * w);
  return make_op<T>("slice_cols", {r, w}, std::move(out), {x}, [r, c, c0, w](Node<T>& self) {
    auto& p = *self.parents[0];
    ensure_grad(p);
    for (int64_t i = 0; i < r; ++i)
      for (int64_t j = 0; j < w; ++j) p.grad[i * c + c0 + j] += self.grad[i * w + j];
  });
}

template <typename T>
NodePtr<T> transpose(const NodePtr<T>& x) {
  int64_t r = x->rows(), c = x->cols();
  std::vector<T> out(x->value.size());
  for (int64_t i = 0; i < r; ++i)
    for (int64_t j = 0; j < c; ++j) out[j * r + i] = x->value[i * c + j];
  return make_op<T>("transpose", {c, r}, std::move(out), {x}, [r, c](Node<T>& self) {
    auto& p = *self.parents[0];
    ensure_grad(p);
    for (int64_t i = 0; i < r; ++i)
      for (int64_t j = 0; j < c; ++j) p.grad[i * c + j] += self.grad[j * r + i];
  });
}

// Row r of a matrix as a 1-d vector (a values copy, so bitwise equal).
template <typename T>
NodePtr<T> pick_row(const NodePtr<T>& x, int64_t r) {
  auto s = slice_rows(x, r, r + 1);
  s->shape = {x->cols()};
  return s;
}

// Element i of a 1-d vector as a scalar node.
template <typename T>
NodePtr<T> pick_elem(const NodePtr<T>& x, int64_t i) {
  if (i < 0 || i >= x->numel()) fail<T>("pick_elem: index out of range");
  std::vector<T> out{x->value[static_cast<size_t>(i)]};
  return make_op<T>("pick_elem", {1}, std::move(out), {x}, [i](Node<T>& self) {
    auto& p = *self.parents[0];
    ensure_grad(p);
    p.grad[static_cast<size_t>(i)] += self.grad[0];
  });
}

// Inverted dropout: keeps each element with probability 1 - rate and scales
// survivors by 1/(1 - rate). rng must be caller-owned for reproducibility.
template <typename T, typename RngT>
NodePtr<T> dropout(const NodePtr<T>& x, double rate, RngT& rng) {
  if (rate <= 0.0) return x;
  if (rate >= 1.0) fail<T>("dropout: rate must be < 1");
  T scale = static_cast<T>(1.0 / (1.0 - rate));
  std::vector<T> keep(x->value.size());
  std::vector<T> out(x->value.size());
  for (size_t i = 0; i < out.size(); ++i) {
    keep[i] = rng.next_double() >= rate ? scale : T(0);
    out[i] = x->value[i] * keep[i];
  }
  return make_op<T>("dropout", x->shape, std::move(out), {x},
                    [keep = std::move(keep)](Node<T>& self) {
                      auto& p = *self.parents[0];
                      ensure_grad(p);
                      for (size_t i = 0; i < self.grad.size(); ++i)
                        p.grad[i] += self.grad[i] * keep[i];
                    });
}

// Negative log-softmax of the target logit, computed stably.
template <typename T>
NodePtr<T> cross_entropy(const NodePtr<T>& logits, int target) {
  int64_t n = logits->numel();
  if (n < 2) fail<T>("cross_entropy: need at least 2 classes");
  if (target < 0 || target >= n)
    fail<T>("cross_entropy: target " + std::to_string(target) + " out of range for " +
            std::to_string(n) + " classes");
  T m = logits->value[0];
  for (int64_t j = 1; j < n; ++j) m = std::max(m, logits->value[j]);
  T sum = T(0);
  for (int64_t j = 0; j < n; ++j) sum += std::exp(logits->value[j] - m);
  T lse = m + std::log(sum);
  T loss = lse - logits->value[target];
  return make_op<T>("cross_entropy", {1}, {loss}, {logits}, [target, m, sum, n](Node<T>& self) {
    auto& p = *self.parents[0];
    ensure_grad(p);
    for (int64_t j = 0; j < n; ++j) {
      T prob = std::exp(p.value[j] - m) / sum;
      p.grad[j] += self.grad[0] * (prob - (j == target ? T(1) : T(0)));
    }
  });
}

}  // namespace ops
}  // namespace chunkstack::ad
