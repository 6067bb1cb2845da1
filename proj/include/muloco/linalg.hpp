#pragma once

// Dense real matrix kernel: arithmetic, norms, a deterministic one-sided
// Jacobi SVD used as the spectral oracle, and the Newton-Schulz
// orthogonalization at the heart of Muon.

#include <cstddef>
#include <initializer_list>
#include <vector>

#include "muloco/errors.hpp"

namespace muloco {

// Row-major dense matrix of 64-bit reals. Data-carrying constructors reject
// non-finite entries.
class Matrix {
  public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols);  // zero-filled
    Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);
    Matrix(std::initializer_list<std::initializer_list<double>> rows);

    static Matrix identity(std::size_t n);

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }
    // min(rows, cols); derived, not stored
    std::size_t min_dim() const { return rows_ < cols_ ? rows_ : cols_; }

    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator[](std::size_t i) const { return data_[i]; }
    double& operator[](std::size_t i) { return data_[i]; }

    const std::vector<double>& data() const { return data_; }
    std::vector<double>& data() { return data_; }

    bool same_shape(const Matrix& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }
    bool all_finite() const;

  private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

Matrix transpose(const Matrix& a);
Matrix matmul(const Matrix& a, const Matrix& b);
Matrix operator+(const Matrix& a, const Matrix& b);
Matrix operator-(const Matrix& a, const Matrix& b);
Matrix operator*(double s, const Matrix& a);
Matrix hadamard(const Matrix& a, const Matrix& b);
bool bitwise_equal(const Matrix& a, const Matrix& b);

double frobenius_norm(const Matrix& a);
double frobenius_inner(const Matrix& a, const Matrix& b);
// <a,b>_F / (|a|_F |b|_F); throws ContractError if either argument is zero.
double cosine_sim(const Matrix& a, const Matrix& b);
// Sum of singular values, computed via svd().
double nuclear_norm(const Matrix& a);

// Thin SVD a = u * diag(sigma) * v^T with u: m x r, v: n x r, r = min(m, n),
// sigma non-increasing and non-negative.
struct Svd {
    Matrix u;
    std::vector<double> sigma;
    Matrix v;
};

// One-sided Jacobi with cyclic sweeps; rotations stop once every column pair
// is orthogonal to 1e-12 relative. Deterministic for fixed input. Throws
// NumericalError if 60 sweeps are not enough (pathological input).
Svd svd(const Matrix& a);

// U V^T of the SVD; the nearest orthonormal factor. |result|_F = sqrt(r).
Matrix orthonormal_factor(const Svd& s);

// Quintic Newton-Schulz iteration X <- a X + b (XX^T) X + c (XX^T)^2 X after
// pre-normalizing X0 = m / |m|_F, run on the transpose for tall inputs so the
// Gram product stays small. Zero input returns a zero matrix (documented
// degenerate convention). Throws NumericalError on non-finite intermediates.
Matrix newton_schulz(const Matrix& m, int iterations = 5);

// Coefficients of the Newton-Schulz quintic.
inline constexpr double kNewtonSchulzA = 3.4445;
inline constexpr double kNewtonSchulzB = -4.7750;
inline constexpr double kNewtonSchulzC = 2.0315;

}  // namespace muloco
