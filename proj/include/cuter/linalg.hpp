#pragma once

// Dense real matrices, a cyclic Jacobi eigensolver for the symmetric case and
// the norms used by the spectral code (nuclear, spectral, infinity).

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <vector>

#include "cuter/error.hpp"

namespace cuter {

// Row-major dense matrix with value semantics.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  static Matrix identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) noexcept {
    assert(r < rows_ && c < cols_);
    return data_[r * cols_ + c];
  }
  double operator()(std::size_t r, std::size_t c) const noexcept {
    assert(r < rows_ && c < cols_);
    return data_[r * cols_ + c];
  }

  std::span<double> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const noexcept {
    return {data_.data() + r * cols_, cols_};
  }

  std::vector<double>& data() noexcept { return data_; }
  const std::vector<double>& data() const noexcept { return data_; }

  Matrix transposed() const {
    Matrix t(cols_, rows_);
    for (std::size_t r = 0; r < rows_; ++r)
      for (std::size_t c = 0; c < cols_; ++c) t(c, r) = (*this)(r, c);
    return t;
  }

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

inline Matrix operator*(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) throw Error(ErrorKind::invalid_input, "matrix product shape mismatch");
  Matrix out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      for (std::size_t j = 0; j < b.cols(); ++j) out(i, j) += aik * b(k, j);
    }
  return out;
}

inline double frobenius_norm(const Matrix& m) {
  double s = 0.0;
  for (double x : m.data()) s += x * x;
  return std::sqrt(s);
}

// Maximum absolute row sum. Defined for any matrix.
inline double inf_norm(const Matrix& m) {
  double best = 0.0;
  for (std::size_t r = 0; r < m.rows(); ++r) {
    double s = 0.0;
    for (double x : m.row(r)) s += std::abs(x);
    best = std::max(best, s);
  }
  return best;
}

// Square matrix whose stored entries are exactly symmetric. All mutation goes
// through set(), which writes both triangles.
class SymMatrix {
 public:
  SymMatrix() = default;
  explicit SymMatrix(std::size_t n, double fill = 0.0) : m_(n, n, fill) {
    if (n == 0) throw Error(ErrorKind::invalid_input, "symmetric matrix must have n >= 1");
  }

  // Throws unless m is square with m(i,j) == m(j,i) bit for bit.
  static SymMatrix from(Matrix m) {
    if (m.rows() != m.cols() || m.rows() == 0)
      throw Error(ErrorKind::invalid_input, "symmetric matrix must be square and non-empty");
    for (std::size_t i = 0; i < m.rows(); ++i)
      for (std::size_t j = i + 1; j < m.cols(); ++j)
        if (!(m(i, j) == m(j, i)) && !(std::isnan(m(i, j)) && std::isnan(m(j, i))))
          throw Error(ErrorKind::invalid_input, "matrix is not symmetric");
    SymMatrix s;
    s.m_ = std::move(m);
    return s;
  }

  static SymMatrix identity(std::size_t n) { return from(Matrix::identity(n)); }

  static SymMatrix diagonal(std::span<const double> d) {
    SymMatrix s(d.size());
    for (std::size_t i = 0; i < d.size(); ++i) s.set(i, i, d[i]);
    return s;
  }

  std::size_t size() const noexcept { return m_.rows(); }
  double operator()(std::size_t i, std::size_t j) const noexcept { return m_(i, j); }
  void set(std::size_t i, std::size_t j, double v) noexcept {
    m_(i, j) = v;
    m_(j, i) = v;
  }
  std::span<const double> row(std::size_t i) const noexcept { return m_.row(i); }

  const Matrix& matrix() const noexcept { return m_; }

  friend bool operator==(const SymMatrix&, const SymMatrix&) = default;

 private:
  Matrix m_;
};

inline SymMatrix operator+(const SymMatrix& a, const SymMatrix& b) {
  if (a.size() != b.size()) throw Error(ErrorKind::invalid_input, "size mismatch");
  Matrix m = a.matrix();
  for (std::size_t k = 0; k < m.data().size(); ++k) m.data()[k] += b.matrix().data()[k];
  return SymMatrix::from(std::move(m));
}

inline SymMatrix operator*(double s, const SymMatrix& a) {
  Matrix m = a.matrix();
  for (double& x : m.data()) x *= s;
  return SymMatrix::from(std::move(m));
}

inline double frobenius_norm(const SymMatrix& m) { return frobenius_norm(m.matrix()); }
inline double inf_norm(const SymMatrix& m) { return inf_norm(m.matrix()); }

// Frobenius inner product <A, B> = sum_ij A_ij B_ij.
inline double inner(const SymMatrix& a, const SymMatrix& b) {
  const auto& x = a.matrix().data();
  const auto& y = b.matrix().data();
  return std::inner_product(x.begin(), x.end(), y.begin(), 0.0);
}

struct EigenDecomposition {
  std::vector<double> values;  // ascending
  Matrix vectors;              // column k pairs with values[k]
};

namespace detail {

struct JacobiResult {
  std::vector<double> diag;
  Matrix vectors_t;  // row k is the k-th eigenvector; empty unless requested
};

// Cyclic Jacobi. Stops once the off-diagonal Frobenius norm drops to
// 1e-12 * ||M||_F or after 100 sweeps.
inline JacobiResult jacobi(const SymMatrix& m, bool want_vectors) {
  const std::size_t n = m.size();
  for (double x : m.matrix().data())
    if (!std::isfinite(x)) throw Error(ErrorKind::invalid_input, "non-finite matrix entry");

  std::vector<double> a = m.matrix().data();
  Matrix vt = want_vectors ? Matrix::identity(n) : Matrix();
  const double tol = 1e-12 * frobenius_norm(m);
  constexpr int max_sweeps = 100;

  auto off_norm = [&] {
    double s = 0.0;
    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) s += a[p * n + q] * a[p * n + q];
    return std::sqrt(2.0 * s);
  };

  for (int sweep = 0; sweep < max_sweeps && off_norm() > tol; ++sweep) {
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = a[p * n + q];
        if (apq == 0.0) continue;
        const double app = a[p * n + p];
        const double aqq = a[q * n + q];
        const double theta = (aqq - app) / (2.0 * apq);
        const double t = (theta >= 0.0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;

        double* rp = a.data() + p * n;
        double* rq = a.data() + q * n;
        for (std::size_t k = 0; k < n; ++k) {
          if (k == p || k == q) continue;
          const double akp = rp[k];
          const double akq = rq[k];
          const double np = c * akp - s * akq;
          const double nq = s * akp + c * akq;
          rp[k] = np;
          rq[k] = nq;
          a[k * n + p] = np;
          a[k * n + q] = nq;
        }
        rp[p] = app - t * apq;
        rq[q] = aqq + t * apq;
        rp[q] = 0.0;
        rq[p] = 0.0;

        if (want_vectors) {
          double* vp = vt.data().data() + p * n;
          double* vq = vt.data().data() + q * n;
          for (std::size_t k = 0; k < n; ++k) {
            const double x = vp[k];
            const double y = vq[k];
            vp[k] = c * x - s * y;
            vq[k] = s * x + c * y;
          }
        }
      }
    }
  }

  JacobiResult r;
  r.diag.resize(n);
  for (std::size_t i = 0; i < n; ++i) r.diag[i] = a[i * n + i];
  r.vectors_t = std::move(vt);
  return r;
}

}  // namespace detail

// Eigenvalues ascending, orthonormal eigenvectors. Each eigenvector's first
// component with magnitude above 1e-12 is made positive.
inline EigenDecomposition sym_eigendecomposition(const SymMatrix& m) {
  auto raw = detail::jacobi(m, true);
  const std::size_t n = m.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t x, std::size_t y) { return raw.diag[x] < raw.diag[y]; });

  EigenDecomposition out;
  out.values.resize(n);
  out.vectors = Matrix(n, n);
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t src = order[k];
    out.values[k] = raw.diag[src];
    double sign = 1.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double x = raw.vectors_t(src, i);
      if (std::abs(x) > 1e-12) {
        sign = x > 0.0 ? 1.0 : -1.0;
        break;
      }
    }
    for (std::size_t i = 0; i < n; ++i) out.vectors(i, k) = sign * raw.vectors_t(src, i);
  }
  return out;
}

// Ascending eigenvalues without accumulating eigenvectors.
inline std::vector<double> sym_eigenvalues(const SymMatrix& m) {
  auto raw = detail::jacobi(m, false);
  std::sort(raw.diag.begin(), raw.diag.end());
  return raw.diag;
}

// Sum of singular values; for a symmetric matrix these are |eigenvalues|.
inline double nuclear_norm(const SymMatrix& m) {
  double s = 0.0;
  for (double l : sym_eigenvalues(m)) s += std::abs(l);
  return s;
}

inline double spectral_norm(const SymMatrix& m) {
  const auto ev = sym_eigenvalues(m);
  return std::max(std::abs(ev.front()), std::abs(ev.back()));
}

// U sign(Lambda) U^T. Eigenvalues within 1e-12 * max|lambda| of zero count as
// zero, so exactly singular inputs map their null space to 0.
inline SymMatrix nuclear_norm_subgradient(const SymMatrix& m) {
  const auto ed = sym_eigendecomposition(m);
  const std::size_t n = m.size();
  double scale = 0.0;
  for (double l : ed.values) scale = std::max(scale, std::abs(l));
  const double zero_tol = 1e-12 * scale;

  std::vector<double> sgn(n);
  for (std::size_t k = 0; k < n; ++k)
    sgn[k] = std::abs(ed.values[k]) <= zero_tol ? 0.0 : (ed.values[k] > 0.0 ? 1.0 : -1.0);

  Matrix g(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i; j < n; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < n; ++k) s += ed.vectors(i, k) * sgn[k] * ed.vectors(j, k);
      g(i, j) = s;
      g(j, i) = s;
    }
  return SymMatrix::from(std::move(g));
}

}  // namespace cuter
