#include "muloco/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>

namespace muloco {

namespace {

void require(bool cond, const char* msg) {
    if (!cond) throw ContractError(msg);
}

}  // namespace

Matrix::Matrix(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), data_(rows * cols, 0.0) {
    require(rows > 0 && cols > 0, "Matrix: dimensions must be positive");
}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
    require(rows > 0 && cols > 0, "Matrix: dimensions must be positive");
    require(data_.size() == rows * cols, "Matrix: data length must equal rows*cols");
    if (!all_finite()) throw ContractError("Matrix: non-finite entry rejected");
}

Matrix::Matrix(std::initializer_list<std::initializer_list<double>> rows) {
    rows_ = rows.size();
    require(rows_ > 0, "Matrix: empty initializer");
    cols_ = rows.begin()->size();
    data_.reserve(rows_ * cols_);
    for (const auto& r : rows) {
        require(r.size() == cols_, "Matrix: ragged initializer");
        data_.insert(data_.end(), r.begin(), r.end());
    }
    if (!all_finite()) throw ContractError("Matrix: non-finite entry rejected");
}

Matrix Matrix::identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
}

bool Matrix::all_finite() const {
    for (double x : data_) {
        if (!std::isfinite(x)) return false;
    }
    return true;
}

Matrix transpose(const Matrix& a) {
    Matrix t(a.cols(), a.rows());
    for (std::size_t r = 0; r < a.rows(); ++r)
        for (std::size_t c = 0; c < a.cols(); ++c) t(c, r) = a(r, c);
    return t;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
    require(a.cols() == b.rows(), "matmul: inner dimensions differ");
    Matrix out(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t k = 0; k < a.cols(); ++k) {
            const double aik = a(i, k);
            if (aik == 0.0) continue;
            for (std::size_t j = 0; j < b.cols(); ++j) out(i, j) += aik * b(k, j);
        }
    }
    return out;
}

Matrix operator+(const Matrix& a, const Matrix& b) {
    require(a.same_shape(b), "operator+: shape mismatch");
    Matrix out(a.rows(), a.cols());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + b[i];
    return out;
}

Matrix operator-(const Matrix& a, const Matrix& b) {
    require(a.same_shape(b), "operator-: shape mismatch");
    Matrix out(a.rows(), a.cols());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] - b[i];
    return out;
}

Matrix operator*(double s, const Matrix& a) {
    Matrix out(a.rows(), a.cols());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = s * a[i];
    return out;
}

Matrix hadamard(const Matrix& a, const Matrix& b) {
    require(a.same_shape(b), "hadamard: shape mismatch");
    Matrix out(a.rows(), a.cols());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] * b[i];
    return out;
}

bool bitwise_equal(const Matrix& a, const Matrix& b) {
    if (!a.same_shape(b)) return false;
    return std::memcmp(a.data().data(), b.data().data(), a.size() * sizeof(double)) == 0;
}

double frobenius_norm(const Matrix& a) {
    double s = 0.0;
    for (double x : a.data()) s += x * x;
    return std::sqrt(s);
}

double frobenius_inner(const Matrix& a, const Matrix& b) {
    require(a.same_shape(b), "frobenius_inner: shape mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

double cosine_sim(const Matrix& a, const Matrix& b) {
    require(a.same_shape(b), "cosine_sim: shape mismatch");
    const double na = frobenius_norm(a);
    const double nb = frobenius_norm(b);
    if (na == 0.0 || nb == 0.0) throw ContractError("cosine_sim: zero argument has no direction");
    double c = frobenius_inner(a, b) / (na * nb);
    return std::clamp(c, -1.0, 1.0);
}

double nuclear_norm(const Matrix& a) {
    const Svd s = svd(a);
    return std::accumulate(s.sigma.begin(), s.sigma.end(), 0.0);
}

namespace {

constexpr double kJacobiTol = 1e-12;
constexpr int kJacobiSweepCap = 60;

// One-sided Jacobi on a tall-or-square matrix (m >= n): orthogonalizes the
// columns of b in place, accumulating the right rotations into v.
void jacobi_orthogonalize(Matrix& b, Matrix& v) {
    const std::size_t n = b.cols();
    const std::size_t m = b.rows();
    for (int sweep = 0; sweep < kJacobiSweepCap; ++sweep) {
        bool rotated = false;
        for (std::size_t p = 0; p + 1 < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                double alpha = 0.0, beta = 0.0, gamma = 0.0;
                for (std::size_t i = 0; i < m; ++i) {
                    const double bp = b(i, p), bq = b(i, q);
                    alpha += bp * bp;
                    beta += bq * bq;
                    gamma += bp * bq;
                }
                if (alpha == 0.0 || beta == 0.0) continue;
                if (std::abs(gamma) <= kJacobiTol * std::sqrt(alpha * beta)) continue;
                rotated = true;
                const double zeta = (beta - alpha) / (2.0 * gamma);
                const double t = (zeta >= 0.0 ? 1.0 : -1.0) / (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double s = c * t;
                for (std::size_t i = 0; i < m; ++i) {
                    const double bp = b(i, p), bq = b(i, q);
                    b(i, p) = c * bp - s * bq;
                    b(i, q) = s * bp + c * bq;
                }
                for (std::size_t i = 0; i < n; ++i) {
                    const double vp = v(i, p), vq = v(i, q);
                    v(i, p) = c * vp - s * vq;
                    v(i, q) = s * vp + c * vq;
                }
            }
        }
        if (!rotated) return;
    }
    throw NumericalError("svd: Jacobi failed to converge within the sweep cap");
}

// Deterministic orthonormal completion for zero singular directions: walk the
// standard basis and keep the first vector with enough mass after projecting
// out the existing columns.
void complete_column(Matrix& u, std::size_t col) {
    const std::size_t m = u.rows();
    const std::size_t n = u.cols();
    for (std::size_t e = 0; e < m; ++e) {
        std::vector<double> cand(m, 0.0);
        cand[e] = 1.0;
        for (std::size_t j = 0; j < n; ++j) {
            if (j == col) continue;
            double dot = 0.0;
            for (std::size_t i = 0; i < m; ++i) dot += cand[i] * u(i, j);
            for (std::size_t i = 0; i < m; ++i) cand[i] -= dot * u(i, j);
        }
        double norm = 0.0;
        for (double x : cand) norm += x * x;
        norm = std::sqrt(norm);
        if (norm > 0.5) {
            for (std::size_t i = 0; i < m; ++i) u(i, col) = cand[i] / norm;
            return;
        }
    }
    throw NumericalError("svd: failed to complete an orthonormal basis");
}

}  // namespace

Svd svd(const Matrix& a) {
    if (!a.all_finite()) throw ContractError("svd: non-finite input");
    if (a.rows() < a.cols()) {
        Svd s = svd(transpose(a));
        std::swap(s.u, s.v);
        return s;
    }
    const std::size_t m = a.rows();
    const std::size_t n = a.cols();
    Matrix b = a;
    Matrix v = Matrix::identity(n);
    jacobi_orthogonalize(b, v);

    std::vector<double> sigma(n, 0.0);
    for (std::size_t j = 0; j < n; ++j) {
        double s2 = 0.0;
        for (std::size_t i = 0; i < m; ++i) s2 += b(i, j) * b(i, j);
        sigma[j] = std::sqrt(s2);
    }

    // Sort descending, ties broken by original column index.
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t x, std::size_t y) { return sigma[x] > sigma[y]; });

    Svd out;
    out.u = Matrix(m, n);
    out.v = Matrix(n, n);
    out.sigma.resize(n);
    for (std::size_t j = 0; j < n; ++j) {
        const std::size_t src = order[j];
        out.sigma[j] = sigma[src];
        for (std::size_t i = 0; i < n; ++i) out.v(i, j) = v(i, src);
        if (sigma[src] > 0.0) {
            for (std::size_t i = 0; i < m; ++i) out.u(i, j) = b(i, src) / sigma[src];
        }
    }
    for (std::size_t j = 0; j < n; ++j) {
        if (out.sigma[j] == 0.0) complete_column(out.u, j);
    }
    return out;
}

Matrix orthonormal_factor(const Svd& s) { return matmul(s.u, transpose(s.v)); }

Matrix newton_schulz(const Matrix& m, int iterations) {
    require(iterations >= 1, "newton_schulz: iterations must be >= 1");
    const double norm = frobenius_norm(m);
    if (norm == 0.0) return Matrix(m.rows(), m.cols());

    // Work on the wide orientation so XX^T is the small Gram matrix.
    const bool tall = m.rows() > m.cols();
    Matrix x = tall ? transpose(m) : m;
    x = (1.0 / norm) * x;

    for (int it = 0; it < iterations; ++it) {
        const Matrix xt = transpose(x);
        const Matrix g = matmul(x, xt);
        const Matrix g2 = matmul(g, g);
        Matrix poly(g.rows(), g.cols());
        for (std::size_t i = 0; i < g.size(); ++i)
            poly[i] = kNewtonSchulzB * g[i] + kNewtonSchulzC * g2[i];
        const Matrix bx = matmul(poly, x);
        for (std::size_t i = 0; i < x.size(); ++i) x[i] = kNewtonSchulzA * x[i] + bx[i];
        if (!x.all_finite()) throw NumericalError("newton_schulz: non-finite intermediate");
    }
    return tall ? transpose(x) : x;
}

}  // namespace muloco
