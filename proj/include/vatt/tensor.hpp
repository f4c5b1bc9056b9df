#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace vatt {

using Vec = std::vector<double>;

[[noreturn]] inline void fail(const std::string& msg) {
  throw std::runtime_error(msg);
}

inline void check_finite(std::span<const double> v, const char* what) {
  for (double x : v)
    if (!std::isfinite(x)) fail(std::string(what) + ": non-finite value");
}

// Dense row-major matrix of doubles. All training math runs in double
// precision; file formats may narrow to float32 on disk.
struct Mat {
  std::size_t rows = 0, cols = 0;
  Vec a;

  Mat() = default;
  Mat(std::size_t r, std::size_t c, double fill = 0.0)
      : rows(r), cols(c), a(r * c, fill) {}

  double& operator()(std::size_t i, std::size_t j) { return a[i * cols + j]; }
  double operator()(std::size_t i, std::size_t j) const { return a[i * cols + j]; }

  std::span<double> row(std::size_t i) { return {a.data() + i * cols, cols}; }
  std::span<const double> row(std::size_t i) const {
    return {a.data() + i * cols, cols};
  }

  std::size_t size() const { return a.size(); }
  void zero() { a.assign(a.size(), 0.0); }

  bool same_shape(const Mat& o) const { return rows == o.rows && cols == o.cols; }
};

inline double dot(std::span<const double> u, std::span<const double> v) {
  if (u.size() != v.size()) fail("dot: length mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) s += u[i] * v[i];
  return s;
}

inline double nrm2(std::span<const double> v) { return std::sqrt(dot(v, v)); }

inline void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  if (x.size() != y.size()) fail("axpy: length mismatch");
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

// y = A x
inline Vec matvec(const Mat& m, std::span<const double> x) {
  if (x.size() != m.cols) fail("matvec: dimension mismatch");
  Vec y(m.rows, 0.0);
  for (std::size_t i = 0; i < m.rows; ++i) y[i] = dot(m.row(i), x);
  return y;
}

// y = A^T x
inline Vec matvec_t(const Mat& m, std::span<const double> x) {
  if (x.size() != m.rows) fail("matvec_t: dimension mismatch");
  Vec y(m.cols, 0.0);
  for (std::size_t i = 0; i < m.rows; ++i) axpy(x[i], m.row(i), y);
  return y;
}

// A += alpha * x y^T
inline void add_outer(Mat& m, double alpha, std::span<const double> x,
                      std::span<const double> y) {
  if (x.size() != m.rows || y.size() != m.cols) fail("add_outer: dimension mismatch");
  for (std::size_t i = 0; i < m.rows; ++i) axpy(alpha * x[i], y, m.row(i));
}

// C = A B
inline Mat matmul(const Mat& a, const Mat& b) {
  if (a.cols != b.rows) fail("matmul: dimension mismatch");
  Mat c(a.rows, b.cols);
  for (std::size_t i = 0; i < a.rows; ++i)
    for (std::size_t k = 0; k < a.cols; ++k) {
      double v = a(i, k);
      if (v == 0.0) continue;
      axpy(v, b.row(k), c.row(i));
    }
  return c;
}

// C = A B^T
inline Mat matmul_nt(const Mat& a, const Mat& b) {
  if (a.cols != b.cols) fail("matmul_nt: dimension mismatch");
  Mat c(a.rows, b.rows);
  for (std::size_t i = 0; i < a.rows; ++i)
    for (std::size_t j = 0; j < b.rows; ++j) c(i, j) = dot(a.row(i), b.row(j));
  return c;
}

// C = A^T B
inline Mat matmul_tn(const Mat& a, const Mat& b) {
  if (a.rows != b.rows) fail("matmul_tn: dimension mismatch");
  Mat c(a.cols, b.cols);
  for (std::size_t k = 0; k < a.rows; ++k)
    for (std::size_t i = 0; i < a.cols; ++i) {
      double v = a(k, i);
      if (v == 0.0) continue;
      axpy(v, b.row(k), c.row(i));
    }
  return c;
}

inline Mat transpose(const Mat& a) {
  Mat t(a.cols, a.rows);
  for (std::size_t i = 0; i < a.rows; ++i)
    for (std::size_t j = 0; j < a.cols; ++j) t(j, i) = a(i, j);
  return t;
}

// Solves A X = B for symmetric positive definite A via Cholesky.
// Throws if A is not positive definite (e.g. a rank-deficient Gram matrix
// with zero ridge).
inline Mat chol_solve(Mat a, Mat b) {
  if (a.rows != a.cols) fail("chol_solve: A must be square");
  if (b.rows != a.rows) fail("chol_solve: B row count mismatch");
  const std::size_t n = a.rows;
  // in-place lower Cholesky
  for (std::size_t j = 0; j < n; ++j) {
    double d = a(j, j);
    for (std::size_t k = 0; k < j; ++k) d -= a(j, k) * a(j, k);
    if (d <= 0.0 || !std::isfinite(d))
      fail("chol_solve: matrix not positive definite (increase the ridge term)");
    d = std::sqrt(d);
    a(j, j) = d;
    for (std::size_t i = j + 1; i < n; ++i) {
      double s = a(i, j);
      for (std::size_t k = 0; k < j; ++k) s -= a(i, k) * a(j, k);
      a(i, j) = s / d;
    }
  }
  // forward/back substitution per column of B
  Mat x = b;
  for (std::size_t c = 0; c < b.cols; ++c) {
    for (std::size_t i = 0; i < n; ++i) {
      double s = x(i, c);
      for (std::size_t k = 0; k < i; ++k) s -= a(i, k) * x(k, c);
      x(i, c) = s / a(i, i);
    }
    for (std::size_t ii = n; ii-- > 0;) {
      double s = x(ii, c);
      for (std::size_t k = ii + 1; k < n; ++k) s -= a(k, ii) * x(k, c);
      x(ii, c) = s / a(ii, ii);
    }
  }
  return x;
}

inline Vec concat(std::span<const double> u, std::span<const double> v) {
  Vec out;
  out.reserve(u.size() + v.size());
  out.insert(out.end(), u.begin(), u.end());
  out.insert(out.end(), v.begin(), v.end());
  return out;
}

}  // namespace vatt
