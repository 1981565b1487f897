#pragma once
#include <cmath>
#include <cstring>
#include <span>
#include <vector>

#if defined(__AVX__) && defined(__FMA__)
#include <immintrin.h>
#endif

#include "doa/error.hpp"

namespace doa::ad {

// Reverse-mode autodiff over dense 64-bit real matrices (vectors are 1 x n
// or n x 1, scalars 1 x 1). Nodes are recorded on a tape in forward order;
// backward() walks the tape in reverse. Tapes are single-owner and pooled:
// clear() rewinds without releasing buffers.

enum class Op : std::uint8_t {
  leaf,
  matmul,      // A(m,k) * B(k,n)
  matmul_nt,   // A(m,k) * B(n,k)^T
  add,
  sub,
  hadamard,
  scale,       // scalar constant
  add_rowvec,  // broadcast 1 x c over rows
  layernorm,   // per row over columns
  softmax_rows,
  gelu,
  concat_rows,
  concat_cols,
  slice_rows,
  slice_cols,
  gather,      // flat indices -> 1 x L
  reduce_sum,  // -> 1 x 1
  sqrt_elem,
  divide,
  reshape,
};

struct Node {
  Op op = Op::leaf;
  int in0 = -1, in1 = -1, in2 = -1;
  std::size_t rows = 0, cols = 0;
  double scalar = 0.0;
  std::size_t a0 = 0, a1 = 0;
  std::vector<int> parts;       // concat_cols inputs
  std::vector<int> idx;         // gather indices
  const double* ext = nullptr;  // external storage for view leaves
  std::vector<double> val, grad, aux;

  std::size_t size() const { return rows * cols; }
  const double* data() const { return ext ? ext : val.data(); }
};

class Tape {
 public:
  int alloc(Op op, std::size_t rows, std::size_t cols, int in0 = -1,
            int in1 = -1, int in2 = -1) {
    if (used_ == nodes_.size()) nodes_.emplace_back();
    Node& n = nodes_[used_];
    n.op = op;
    n.in0 = in0;
    n.in1 = in1;
    n.in2 = in2;
    n.rows = rows;
    n.cols = cols;
    n.scalar = 0.0;
    n.a0 = n.a1 = 0;
    n.parts.clear();
    n.idx.clear();
    n.ext = nullptr;
    n.val.resize(rows * cols);
    n.aux.clear();
    return static_cast<int>(used_++);
  }

  Node& node(int id) { return nodes_[static_cast<std::size_t>(id)]; }
  const Node& node(int id) const { return nodes_[static_cast<std::size_t>(id)]; }

  std::size_t size() const { return used_; }
  void clear() { used_ = 0; }

  std::span<const double> value(int id) const {
    const Node& n = node(id);
    return {n.data(), n.size()};
  }
  std::span<const double> gradient(int id) const {
    const Node& n = node(id);
    return {n.grad.data(), n.grad.size()};
  }
  double scalar_value(int id) const {
    const Node& n = node(id);
    if (n.size() != 1) throw InvalidArgument("expected scalar node");
    return n.data()[0];
  }

 private:
  std::vector<Node> nodes_;
  std::size_t used_ = 0;
};

// ---- construction helpers ----

// Leaf viewing external memory; the storage must outlive the backward pass.
inline int leaf_view(Tape& t, std::size_t rows, std::size_t cols,
                     const double* data) {
  const int id = t.alloc(Op::leaf, rows, cols);
  Node& n = t.node(id);
  n.ext = data;
  n.val.clear();
  return id;
}

inline int leaf_copy(Tape& t, std::size_t rows, std::size_t cols,
                     const double* data) {
  const int id = t.alloc(Op::leaf, rows, cols);
  Node& n = t.node(id);
  std::memcpy(n.val.data(), data, rows * cols * sizeof(double));
  return id;
}

inline int scalar_const(Tape& t, double v) { return leaf_copy(t, 1, 1, &v); }

// ---- forward ops ----

namespace detail {

#if defined(__AVX__) && defined(__FMA__)
#define DOA_HAVE_AVX_FMA 1
#endif

// Dot product and axpy with a fixed accumulation order and explicit fused
// multiply-adds, so every inlined copy rounds identically and results stay
// bit-reproducible run to run.
inline double dot(const double* a, const double* b, std::size_t n) {
  std::size_t i = 0;
  double s = 0.0;
#ifdef DOA_HAVE_AVX_FMA
  if (n >= 8) {
    __m256d acc0 = _mm256_setzero_pd();
    __m256d acc1 = _mm256_setzero_pd();
    for (; i + 8 <= n; i += 8) {
      acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i),
                             acc0);
      acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 4),
                             _mm256_loadu_pd(b + i + 4), acc1);
    }
    alignas(32) double lane[4];
    _mm256_store_pd(lane, _mm256_add_pd(acc0, acc1));
    s = (lane[0] + lane[1]) + (lane[2] + lane[3]);
  }
#endif
  double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
  for (; i + 4 <= n; i += 4) {
    s0 = std::fma(a[i], b[i], s0);
    s1 = std::fma(a[i + 1], b[i + 1], s1);
    s2 = std::fma(a[i + 2], b[i + 2], s2);
    s3 = std::fma(a[i + 3], b[i + 3], s3);
  }
  s += (s0 + s1) + (s2 + s3);
  for (; i < n; ++i) s = std::fma(a[i], b[i], s);
  return s;
}

// y += a * x
inline void axpy(double* y, double a, const double* x, std::size_t n) {
  std::size_t i = 0;
#ifdef DOA_HAVE_AVX_FMA
  const __m256d av = _mm256_set1_pd(a);
  for (; i + 4 <= n; i += 4) {
    const __m256d yv =
        _mm256_fmadd_pd(av, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i));
    _mm256_storeu_pd(y + i, yv);
  }
#endif
  for (; i < n; ++i) y[i] = std::fma(a, x[i], y[i]);
}

inline void check_same_shape(const Node& a, const Node& b, const char* what) {
  if (a.rows != b.rows || a.cols != b.cols)
    throw InvalidArgument(std::string(what) + ": shape mismatch");
}

}  // namespace detail

inline int matmul(Tape& t, int a, int b) {
  const std::size_t m = t.node(a).rows, k = t.node(a).cols;
  const std::size_t k2 = t.node(b).rows, n = t.node(b).cols;
  if (k != k2) throw InvalidArgument("matmul: inner dimensions disagree");
  const int id = t.alloc(Op::matmul, m, n, a, b);
  const double* pa = t.node(a).data();
  const double* pb = t.node(b).data();
  double* pc = t.node(id).val.data();
  std::fill(pc, pc + m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = pc + i * n;
    for (std::size_t p = 0; p < k; ++p)
      detail::axpy(crow, pa[i * k + p], pb + p * n, n);
  }
  return id;
}

// A (m x k) times B^T where B is (n x k); both operands read contiguously.
inline int matmul_nt(Tape& t, int a, int b) {
  const std::size_t m = t.node(a).rows, k = t.node(a).cols;
  const std::size_t n = t.node(b).rows, k2 = t.node(b).cols;
  if (k != k2) throw InvalidArgument("matmul_nt: inner dimensions disagree");
  const int id = t.alloc(Op::matmul_nt, m, n, a, b);
  const double* pa = t.node(a).data();
  const double* pb = t.node(b).data();
  double* pc = t.node(id).val.data();
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = pa + i * k;
    for (std::size_t j = 0; j < n; ++j)
      pc[i * n + j] = detail::dot(arow, pb + j * k, k);
  }
  return id;
}

inline int add(Tape& t, int a, int b) {
  detail::check_same_shape(t.node(a), t.node(b), "add");
  const Node& na = t.node(a);
  const int id = t.alloc(Op::add, na.rows, na.cols, a, b);
  const double* pa = t.node(a).data();
  const double* pb = t.node(b).data();
  double* pc = t.node(id).val.data();
  const std::size_t n = t.node(id).size();
  for (std::size_t i = 0; i < n; ++i) pc[i] = pa[i] + pb[i];
  return id;
}

inline int sub(Tape& t, int a, int b) {
  detail::check_same_shape(t.node(a), t.node(b), "sub");
  const Node& na = t.node(a);
  const int id = t.alloc(Op::sub, na.rows, na.cols, a, b);
  const double* pa = t.node(a).data();
  const double* pb = t.node(b).data();
  double* pc = t.node(id).val.data();
  const std::size_t n = t.node(id).size();
  for (std::size_t i = 0; i < n; ++i) pc[i] = pa[i] - pb[i];
  return id;
}

inline int hadamard(Tape& t, int a, int b) {
  detail::check_same_shape(t.node(a), t.node(b), "hadamard");
  const Node& na = t.node(a);
  const int id = t.alloc(Op::hadamard, na.rows, na.cols, a, b);
  const double* pa = t.node(a).data();
  const double* pb = t.node(b).data();
  double* pc = t.node(id).val.data();
  const std::size_t n = t.node(id).size();
  for (std::size_t i = 0; i < n; ++i) pc[i] = pa[i] * pb[i];
  return id;
}

inline int scale(Tape& t, int a, double s) {
  const Node& na = t.node(a);
  const int id = t.alloc(Op::scale, na.rows, na.cols, a);
  t.node(id).scalar = s;
  const double* pa = t.node(a).data();
  double* pc = t.node(id).val.data();
  const std::size_t n = t.node(id).size();
  for (std::size_t i = 0; i < n; ++i) pc[i] = s * pa[i];
  return id;
}

inline int add_rowvec(Tape& t, int a, int b) {
  const Node& na = t.node(a);
  const Node& nb = t.node(b);
  if (nb.size() != na.cols)
    throw InvalidArgument("add_rowvec: vector length must match columns");
  const int id = t.alloc(Op::add_rowvec, na.rows, na.cols, a, b);
  const double* pa = t.node(a).data();
  const double* pb = t.node(b).data();
  double* pc = t.node(id).val.data();
  for (std::size_t i = 0; i < na.rows; ++i)
    for (std::size_t j = 0; j < na.cols; ++j)
      pc[i * na.cols + j] = pa[i * na.cols + j] + pb[j];
  return id;
}

inline constexpr double kLayerNormEps = 1e-5;

// Normalizes each row over the feature (column) axis, then applies
// per-feature gain and bias.
inline int layernorm(Tape& t, int x, int gain, int bias,
                     double eps = kLayerNormEps) {
  const Node& nx = t.node(x);
  if (t.node(gain).size() != nx.cols || t.node(bias).size() != nx.cols)
    throw InvalidArgument("layernorm: gain/bias length must match columns");
  const std::size_t r = nx.rows, c = nx.cols;
  const int id = t.alloc(Op::layernorm, r, c, x, gain, bias);
  Node& out = t.node(id);
  out.scalar = eps;
  out.aux.resize(r * c + r);  // normalized values, then per-row inv-std
  const double* px = t.node(x).data();
  const double* pg = t.node(gain).data();
  const double* pb = t.node(bias).data();
  double* py = out.aux.data();
  double* pinv = out.aux.data() + r * c;
  double* po = out.val.data();
  const double ic = 1.0 / static_cast<double>(c);
  for (std::size_t i = 0; i < r; ++i) {
    const double* xr = px + i * c;
    double mean = 0.0;
    for (std::size_t j = 0; j < c; ++j) mean += xr[j];
    mean *= ic;
    double var = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      const double d = xr[j] - mean;
      var += d * d;
    }
    var *= ic;
    const double inv = 1.0 / std::sqrt(var + eps);
    pinv[i] = inv;
    for (std::size_t j = 0; j < c; ++j) {
      const double y = (xr[j] - mean) * inv;
      py[i * c + j] = y;
      po[i * c + j] = y * pg[j] + pb[j];
    }
  }
  return id;
}

inline int softmax_rows(Tape& t, int x) {
  const Node& nx = t.node(x);
  const std::size_t r = nx.rows, c = nx.cols;
  const int id = t.alloc(Op::softmax_rows, r, c, x);
  const double* px = t.node(x).data();
  double* po = t.node(id).val.data();
  for (std::size_t i = 0; i < r; ++i) {
    const double* xr = px + i * c;
    double mx = xr[0];
    for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, xr[j]);
    double sum = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      const double e = std::exp(xr[j] - mx);
      po[i * c + j] = e;
      sum += e;
    }
    const double inv = 1.0 / sum;
    for (std::size_t j = 0; j < c; ++j) po[i * c + j] *= inv;
  }
  return id;
}

inline constexpr double kGeluC0 = 0.7978845608028654;  // sqrt(2/pi)
inline constexpr double kGeluC1 = 0.044715;

// GELU, tanh approximation.
inline int gelu(Tape& t, int x) {
  const Node& nx = t.node(x);
  const int id = t.alloc(Op::gelu, nx.rows, nx.cols, x);
  Node& out = t.node(id);
  out.aux.resize(out.size());
  const double* px = t.node(x).data();
  double* po = out.val.data();
  double* pt = out.aux.data();
  const std::size_t n = out.size();
  for (std::size_t i = 0; i < n; ++i) {
    const double v = px[i];
    const double th = std::tanh(kGeluC0 * (v + kGeluC1 * v * v * v));
    pt[i] = th;
    po[i] = 0.5 * v * (1.0 + th);
  }
  return id;
}

inline int concat_rows(Tape& t, int a, int b) {
  const Node& na = t.node(a);
  const Node& nb = t.node(b);
  if (na.cols != nb.cols)
    throw InvalidArgument("concat_rows: column counts disagree");
  const int id = t.alloc(Op::concat_rows, na.rows + nb.rows, na.cols, a, b);
  Node& out = t.node(id);
  out.a0 = t.node(a).size();
  std::memcpy(out.val.data(), t.node(a).data(),
              t.node(a).size() * sizeof(double));
  std::memcpy(out.val.data() + out.a0, t.node(b).data(),
              t.node(b).size() * sizeof(double));
  return id;
}

inline int concat_cols(Tape& t, const std::vector<int>& parts) {
  if (parts.empty()) throw InvalidArgument("concat_cols: no inputs");
  const std::size_t r = t.node(parts[0]).rows;
  std::size_t c = 0;
  for (int p : parts) {
    if (t.node(p).rows != r)
      throw InvalidArgument("concat_cols: row counts disagree");
    c += t.node(p).cols;
  }
  const int id = t.alloc(Op::concat_cols, r, c);
  t.node(id).parts = parts;
  double* po = t.node(id).val.data();
  std::size_t off = 0;
  for (int p : parts) {
    const Node& np = t.node(p);
    const double* pp = np.data();
    for (std::size_t i = 0; i < r; ++i)
      std::memcpy(po + i * c + off, pp + i * np.cols,
                  np.cols * sizeof(double));
    off += np.cols;
  }
  return id;
}

inline int slice_rows(Tape& t, int a, std::size_t r0, std::size_t r1) {
  const Node& na = t.node(a);
  if (!(r0 < r1 && r1 <= na.rows))
    throw InvalidArgument("slice_rows: bad range");
  const int id = t.alloc(Op::slice_rows, r1 - r0, na.cols, a);
  Node& out = t.node(id);
  out.a0 = r0;
  out.a1 = r1;
  std::memcpy(out.val.data(), t.node(a).data() + r0 * na.cols,
              (r1 - r0) * na.cols * sizeof(double));
  return id;
}

inline int slice_row(Tape& t, int a, std::size_t r) {
  return slice_rows(t, a, r, r + 1);
}

inline int slice_cols(Tape& t, int a, std::size_t c0, std::size_t c1) {
  const Node& na = t.node(a);
  if (!(c0 < c1 && c1 <= na.cols))
    throw InvalidArgument("slice_cols: bad range");
  const std::size_t c = c1 - c0;
  const int id = t.alloc(Op::slice_cols, na.rows, c, a);
  Node& out = t.node(id);
  out.a0 = c0;
  out.a1 = c1;
  const double* pa = t.node(a).data();
  double* po = out.val.data();
  const std::size_t ac = t.node(a).cols;
  for (std::size_t i = 0; i < out.rows; ++i)
    std::memcpy(po + i * c, pa + i * ac + c0, c * sizeof(double));
  return id;
}

// Flat-index gather into a 1 x L row; duplicate indices accumulate in the
// backward scatter.
inline int gather(Tape& t, int a, const std::vector<int>& idx) {
  const Node& na = t.node(a);
  for (int i : idx)
    if (i < 0 || static_cast<std::size_t>(i) >= na.size())
      throw InvalidArgument("gather: index out of range");
  const int id = t.alloc(Op::gather, 1, idx.size(), a);
  t.node(id).idx = idx;
  const double* pa = t.node(a).data();
  double* po = t.node(id).val.data();
  for (std::size_t i = 0; i < idx.size(); ++i)
    po[i] = pa[static_cast<std::size_t>(idx[i])];
  return id;
}

inline int reduce_sum(Tape& t, int a) {
  const int id = t.alloc(Op::reduce_sum, 1, 1, a);
  const double* pa = t.node(a).data();
  const std::size_t n = t.node(a).size();
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += pa[i];
  t.node(id).val[0] = s;
  return id;
}

// Elementwise sqrt; the derivative at 0 is taken as 0 (subgradient), which
// keeps exact-match losses finite.
inline int sqrt_elem(Tape& t, int a) {
  const Node& na = t.node(a);
  const int id = t.alloc(Op::sqrt_elem, na.rows, na.cols, a);
  const double* pa = t.node(a).data();
  double* po = t.node(id).val.data();
  const std::size_t n = t.node(id).size();
  for (std::size_t i = 0; i < n; ++i)
    po[i] = pa[i] > 0.0 ? std::sqrt(pa[i]) : 0.0;
  return id;
}

inline int divide(Tape& t, int a, int b) {
  detail::check_same_shape(t.node(a), t.node(b), "divide");
  const Node& na = t.node(a);
  const int id = t.alloc(Op::divide, na.rows, na.cols, a, b);
  const double* pa = t.node(a).data();
  const double* pb = t.node(b).data();
  double* pc = t.node(id).val.data();
  const std::size_t n = t.node(id).size();
  for (std::size_t i = 0; i < n; ++i) pc[i] = pa[i] / pb[i];
  return id;
}

inline int reshape(Tape& t, int a, std::size_t rows, std::size_t cols) {
  const Node& na = t.node(a);
  if (na.size() != rows * cols) throw InvalidArgument("reshape: size mismatch");
  const int id = t.alloc(Op::reshape, rows, cols, a);
  std::memcpy(t.node(id).val.data(), t.node(a).data(),
              rows * cols * sizeof(double));
  return id;
}

// x (n x d) * w^T (out x d stored row-major) + b
inline int linear(Tape& t, int x, int w, int b) {
  return add_rowvec(t, matmul_nt(t, x, w), b);
}

// ---- backward ----

inline void backward(Tape& t, int loss) {
  if (t.node(loss).size() != 1)
    throw InvalidArgument("backward: loss must be scalar");
  const int n = loss;
  for (int id = 0; id <= n; ++id) {
    Node& nd = t.node(id);
    nd.grad.assign(nd.size(), 0.0);
  }
  t.node(loss).grad[0] = 1.0;

  for (int id = n; id >= 0; --id) {
    Node& nd = t.node(id);
    const double* g = nd.grad.data();
    switch (nd.op) {
      case Op::leaf:
        break;
      case Op::matmul: {
        Node& a = t.node(nd.in0);
        Node& b = t.node(nd.in1);
        const std::size_t m = a.rows, k = a.cols, c = b.cols;
        const double* pa = a.data();
        const double* pb = b.data();
        double* ga = a.grad.data();
        double* gb = b.grad.data();
        for (std::size_t i = 0; i < m; ++i) {
          const double* grow = g + i * c;
          for (std::size_t p = 0; p < k; ++p)
            ga[i * k + p] += detail::dot(grow, pb + p * c, c);
          const double* arow = pa + i * k;
          for (std::size_t p = 0; p < k; ++p)
            detail::axpy(gb + p * c, arow[p], grow, c);
        }
        break;
      }
      case Op::matmul_nt: {
        Node& a = t.node(nd.in0);
        Node& b = t.node(nd.in1);
        const std::size_t m = a.rows, k = a.cols, c = b.rows;
        const double* pa = a.data();
        const double* pb = b.data();
        double* ga = a.grad.data();
        double* gb = b.grad.data();
        for (std::size_t i = 0; i < m; ++i) {
          const double* grow = g + i * c;
          double* garow = ga + i * k;
          const double* arow = pa + i * k;
          for (std::size_t j = 0; j < c; ++j) {
            const double gv = grow[j];
            if (gv == 0.0) continue;
            detail::axpy(garow, gv, pb + j * k, k);
            detail::axpy(gb + j * k, gv, arow, k);
          }
        }
        break;
      }
      case Op::add: {
        Node& a = t.node(nd.in0);
        Node& b = t.node(nd.in1);
        for (std::size_t i = 0; i < nd.size(); ++i) {
          a.grad[i] += g[i];
          b.grad[i] += g[i];
        }
        break;
      }
      case Op::sub: {
        Node& a = t.node(nd.in0);
        Node& b = t.node(nd.in1);
        for (std::size_t i = 0; i < nd.size(); ++i) {
          a.grad[i] += g[i];
          b.grad[i] -= g[i];
        }
        break;
      }
      case Op::hadamard: {
        Node& a = t.node(nd.in0);
        Node& b = t.node(nd.in1);
        const double* pa = a.data();
        const double* pb = b.data();
        for (std::size_t i = 0; i < nd.size(); ++i) {
          a.grad[i] += g[i] * pb[i];
          b.grad[i] += g[i] * pa[i];
        }
        break;
      }
      case Op::scale: {
        Node& a = t.node(nd.in0);
        for (std::size_t i = 0; i < nd.size(); ++i)
          a.grad[i] += nd.scalar * g[i];
        break;
      }
      case Op::add_rowvec: {
        Node& a = t.node(nd.in0);
        Node& b = t.node(nd.in1);
        for (std::size_t i = 0; i < nd.rows; ++i)
          for (std::size_t j = 0; j < nd.cols; ++j) {
            a.grad[i * nd.cols + j] += g[i * nd.cols + j];
            b.grad[j] += g[i * nd.cols + j];
          }
        break;
      }
      case Op::layernorm: {
        Node& x = t.node(nd.in0);
        Node& gain = t.node(nd.in1);
        Node& bias = t.node(nd.in2);
        const std::size_t r = nd.rows, c = nd.cols;
        const double* py = nd.aux.data();
        const double* pinv = nd.aux.data() + r * c;
        const double* pg = gain.data();
        const double ic = 1.0 / static_cast<double>(c);
        for (std::size_t i = 0; i < r; ++i) {
          const double* grow = g + i * c;
          const double* yrow = py + i * c;
          double m1 = 0.0, m2 = 0.0;
          for (std::size_t j = 0; j < c; ++j) {
            const double hg = grow[j] * pg[j];
            m1 += hg;
            m2 += hg * yrow[j];
          }
          m1 *= ic;
          m2 *= ic;
          const double inv = pinv[i];
          for (std::size_t j = 0; j < c; ++j) {
            const double hg = grow[j] * pg[j];
            x.grad[i * c + j] += inv * (hg - m1 - yrow[j] * m2);
            gain.grad[j] += grow[j] * yrow[j];
            bias.grad[j] += grow[j];
          }
        }
        break;
      }
      case Op::softmax_rows: {
        Node& x = t.node(nd.in0);
        const std::size_t r = nd.rows, c = nd.cols;
        const double* py = nd.val.data();
        for (std::size_t i = 0; i < r; ++i) {
          const double* grow = g + i * c;
          const double* yrow = py + i * c;
          double dot = 0.0;
          for (std::size_t j = 0; j < c; ++j) dot += grow[j] * yrow[j];
          for (std::size_t j = 0; j < c; ++j)
            x.grad[i * c + j] += yrow[j] * (grow[j] - dot);
        }
        break;
      }
      case Op::gelu: {
        Node& x = t.node(nd.in0);
        const double* px = x.data();
        const double* pt = nd.aux.data();
        for (std::size_t i = 0; i < nd.size(); ++i) {
          const double v = px[i];
          const double th = pt[i];
          const double du = kGeluC0 * (1.0 + 3.0 * kGeluC1 * v * v);
          const double d = 0.5 * (1.0 + th) + 0.5 * v * (1.0 - th * th) * du;
          x.grad[i] += g[i] * d;
        }
        break;
      }
      case Op::concat_rows: {
        Node& a = t.node(nd.in0);
        Node& b = t.node(nd.in1);
        for (std::size_t i = 0; i < a.size(); ++i) a.grad[i] += g[i];
        for (std::size_t i = 0; i < b.size(); ++i) b.grad[i] += g[nd.a0 + i];
        break;
      }
      case Op::concat_cols: {
        std::size_t off = 0;
        for (int pid : nd.parts) {
          Node& p = t.node(pid);
          for (std::size_t i = 0; i < p.rows; ++i)
            for (std::size_t j = 0; j < p.cols; ++j)
              p.grad[i * p.cols + j] += g[i * nd.cols + off + j];
          off += p.cols;
        }
        break;
      }
      case Op::slice_rows: {
        Node& a = t.node(nd.in0);
        const std::size_t base = nd.a0 * a.cols;
        for (std::size_t i = 0; i < nd.size(); ++i) a.grad[base + i] += g[i];
        break;
      }
      case Op::slice_cols: {
        Node& a = t.node(nd.in0);
        for (std::size_t i = 0; i < nd.rows; ++i)
          for (std::size_t j = 0; j < nd.cols; ++j)
            a.grad[i * a.cols + nd.a0 + j] += g[i * nd.cols + j];
        break;
      }
      case Op::gather: {
        Node& a = t.node(nd.in0);
        for (std::size_t i = 0; i < nd.idx.size(); ++i)
          a.grad[static_cast<std::size_t>(nd.idx[i])] += g[i];
        break;
      }
      case Op::reduce_sum: {
        Node& a = t.node(nd.in0);
        for (std::size_t i = 0; i < a.size(); ++i) a.grad[i] += g[0];
        break;
      }
      case Op::sqrt_elem: {
        Node& a = t.node(nd.in0);
        const double* py = nd.val.data();
        for (std::size_t i = 0; i < nd.size(); ++i)
          if (py[i] > 0.0) a.grad[i] += g[i] * 0.5 / py[i];
        break;
      }
      case Op::divide: {
        Node& a = t.node(nd.in0);
        Node& b = t.node(nd.in1);
        const double* pb = b.data();
        const double* py = nd.val.data();
        for (std::size_t i = 0; i < nd.size(); ++i) {
          a.grad[i] += g[i] / pb[i];
          b.grad[i] -= g[i] * py[i] / pb[i];
        }
        break;
      }
      case Op::reshape: {
        Node& a = t.node(nd.in0);
        for (std::size_t i = 0; i < nd.size(); ++i) a.grad[i] += g[i];
        break;
      }
    }
  }
}

}  // namespace doa::ad
