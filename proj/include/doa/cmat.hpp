#pragma once
#include <cmath>
#include <complex>
#include <vector>

#include "doa/error.hpp"

namespace doa {

using cplx = std::complex<double>;
using CVec = std::vector<cplx>;

// Dense row-major complex matrix. Sized for array-processing work
// (element counts of a few dozen), not for large linear algebra.
struct CMat {
  std::size_t rows = 0, cols = 0;
  std::vector<cplx> a;

  CMat() = default;
  CMat(std::size_t r, std::size_t c) : rows(r), cols(c), a(r * c) {}

  cplx& operator()(std::size_t i, std::size_t j) { return a[i * cols + j]; }
  const cplx& operator()(std::size_t i, std::size_t j) const {
    return a[i * cols + j];
  }

  static CMat identity(std::size_t n) {
    CMat m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  bool operator==(const CMat& o) const {
    return rows == o.rows && cols == o.cols && a == o.a;
  }
};

inline CMat matmul(const CMat& x, const CMat& y) {
  if (x.cols != y.rows) throw InvalidArgument("cmat matmul: dimension mismatch");
  CMat z(x.rows, y.cols);
  for (std::size_t i = 0; i < x.rows; ++i) {
    for (std::size_t p = 0; p < x.cols; ++p) {
      const cplx v = x(i, p);
      if (v == cplx{}) continue;
      for (std::size_t j = 0; j < y.cols; ++j) z(i, j) += v * y(p, j);
    }
  }
  return z;
}

inline CVec matvec(const CMat& x, const CVec& v) {
  if (x.cols != v.size()) throw InvalidArgument("cmat matvec: dimension mismatch");
  CVec out(x.rows);
  for (std::size_t i = 0; i < x.rows; ++i) {
    cplx s = 0.0;
    for (std::size_t j = 0; j < x.cols; ++j) s += x(i, j) * v[j];
    out[i] = s;
  }
  return out;
}

inline CMat adjoint(const CMat& x) {
  CMat z(x.cols, x.rows);
  for (std::size_t i = 0; i < x.rows; ++i)
    for (std::size_t j = 0; j < x.cols; ++j) z(j, i) = std::conj(x(i, j));
  return z;
}

inline cplx trace(const CMat& x) {
  cplx t = 0.0;
  for (std::size_t i = 0; i < std::min(x.rows, x.cols); ++i) t += x(i, i);
  return t;
}

// max_ij |x - x^H|
inline double hermitian_error(const CMat& x) {
  if (x.rows != x.cols) throw InvalidArgument("hermitian_error: not square");
  double e = 0.0;
  for (std::size_t i = 0; i < x.rows; ++i)
    for (std::size_t j = 0; j < x.cols; ++j)
      e = std::max(e, std::abs(x(i, j) - std::conj(x(j, i))));
  return e;
}

inline double frobenius_norm(const CMat& x) {
  double s = 0.0;
  for (const cplx& v : x.a) s += std::norm(v);
  return std::sqrt(s);
}

}  // namespace doa
