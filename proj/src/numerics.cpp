#include "selfdebias/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "selfdebias/errors.hpp"

namespace selfdebias {

DenseMatrix DenseMatrix::identity(std::size_t n) {
    DenseMatrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
}

double DenseMatrix::asymmetry() const {
    double worst = 0.0;
    for (std::size_t i = 0; i < rows_; ++i) {
        for (std::size_t j = i + 1; j < cols_; ++j) {
            worst = std::max(worst, std::abs((*this)(i, j) - (*this)(j, i)));
        }
    }
    return worst;
}

double DenseMatrix::max_abs() const {
    double m = 0.0;
    for (double v : data_) m = std::max(m, std::abs(v));
    return m;
}

double DenseMatrix::frobenius_norm() const {
    double s = 0.0;
    for (double v : data_) s += v * v;
    return std::sqrt(s);
}

double DenseMatrix::inf_norm() const {
    double worst = 0.0;
    for (std::size_t i = 0; i < rows_; ++i) {
        double s = 0.0;
        const double* r = row(i);
        for (std::size_t j = 0; j < cols_; ++j) s += std::abs(r[j]);
        worst = std::max(worst, s);
    }
    return worst;
}

DenseMatrix DenseMatrix::multiply(const DenseMatrix& other) const {
    if (cols_ != other.rows_) throw dimension_error("matrix multiply: inner dimensions differ");
    DenseMatrix out(rows_, other.cols_);
    for (std::size_t i = 0; i < rows_; ++i) {
        const double* a = row(i);
        double* o = out.row(i);
        for (std::size_t k = 0; k < cols_; ++k) {
            const double aik = a[k];
            if (aik == 0.0) continue;
            const double* b = other.row(k);
            for (std::size_t j = 0; j < other.cols_; ++j) o[j] += aik * b[j];
        }
    }
    return out;
}

DenseMatrix DenseMatrix::transposed() const {
    DenseMatrix out(cols_, rows_);
    for (std::size_t i = 0; i < rows_; ++i)
        for (std::size_t j = 0; j < cols_; ++j) out(j, i) = (*this)(i, j);
    return out;
}

namespace {

double off_diagonal_frobenius(const DenseMatrix& a) {
    double s = 0.0;
    const std::size_t n = a.rows();
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) s += a(i, j) * a(i, j);
    return std::sqrt(2.0 * s);
}

}  // namespace

EighResult jacobi_eigh(const DenseMatrix& m) {
    if (!m.is_square()) throw dimension_error("jacobi_eigh: matrix is not square");
    const double sym_tol = 1e-10 * std::max(1.0, m.max_abs());
    if (m.asymmetry() > sym_tol) throw config_error("jacobi_eigh: matrix is not symmetric");

    const std::size_t n = m.rows();
    DenseMatrix a = m;
    DenseMatrix v = DenseMatrix::identity(n);
    if (n == 0) return {{}, v};

    const double target = 1e-12 * std::max(a.frobenius_norm(), 1e-300);
    const int max_sweeps = 64;
    for (int sweep = 0; sweep < max_sweeps; ++sweep) {
        const double off = off_diagonal_frobenius(a);
        if (off <= target) break;
        // Rotations below this threshold cannot help this sweep.
        const double skip = off / (static_cast<double>(n) * static_cast<double>(n));
        for (std::size_t p = 0; p + 1 < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                const double apq = a(p, q);
                if (std::abs(apq) <= skip * 1e-4) continue;
                const double app = a(p, p);
                const double aqq = a(q, q);
                const double theta = (aqq - app) / (2.0 * apq);
                const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                                 (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;

                double* rp = a.row(p);
                double* rq = a.row(q);
                for (std::size_t k = 0; k < n; ++k) {
                    const double akp = rp[k];
                    const double akq = rq[k];
                    rp[k] = c * akp - s * akq;
                    rq[k] = s * akp + c * akq;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double apk = a(k, p);
                    const double aqk = a(k, q);
                    a(k, p) = c * apk - s * aqk;
                    a(k, q) = s * apk + c * aqk;
                }
                a(p, p) = app - t * apq;
                a(q, q) = aqq + t * apq;
                a(p, q) = 0.0;
                a(q, p) = 0.0;

                for (std::size_t k = 0; k < n; ++k) {
                    const double vkp = v(k, p);
                    const double vkq = v(k, q);
                    v(k, p) = c * vkp - s * vkq;
                    v(k, q) = s * vkp + c * vkq;
                }
            }
        }
    }

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&a](std::size_t i, std::size_t j) { return a(i, i) < a(j, j); });

    EighResult out;
    out.eigenvalues.resize(n);
    out.eigenvectors = DenseMatrix(n, n);
    for (std::size_t j = 0; j < n; ++j) {
        out.eigenvalues[j] = a(order[j], order[j]);
        for (std::size_t i = 0; i < n; ++i) out.eigenvectors(i, j) = v(i, order[j]);
    }
    return out;
}

DenseMatrix sqrtm_psd(const DenseMatrix& m) {
    EighResult eig = jacobi_eigh(m);
    const std::size_t n = m.rows();
    std::vector<double> roots(n);
    for (std::size_t i = 0; i < n; ++i) {
        double lambda = eig.eigenvalues[i];
        if (lambda < -1e-6) throw numerical_error("sqrtm_psd: matrix is not positive semi-definite");
        roots[i] = std::sqrt(std::max(lambda, 0.0));
    }
    // S = V * diag(sqrt(lambda)) * V^T
    DenseMatrix s(n, n);
    for (std::size_t k = 0; k < n; ++k) {
        if (roots[k] == 0.0) continue;
        for (std::size_t i = 0; i < n; ++i) {
            const double w = roots[k] * eig.eigenvectors(i, k);
            if (w == 0.0) continue;
            double* r = s.row(i);
            for (std::size_t j = 0; j < n; ++j) r[j] += w * eig.eigenvectors(j, k);
        }
    }
    // Symmetrize away rounding drift.
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            const double avg = 0.5 * (s(i, j) + s(j, i));
            s(i, j) = avg;
            s(j, i) = avg;
        }
    }
    return s;
}

void ProbVector::validate() const {
    double sum = 0.0;
    for (double p : probs) {
        if (!(p >= 0.0)) throw numerical_error("ProbVector: negative or NaN entry");
        sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-9) throw numerical_error("ProbVector: entries do not sum to 1");
}

double dot(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw dimension_error("dot: size mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

double norm2(std::span<const double> v) { return std::sqrt(dot(v, v)); }

double squared_distance(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw dimension_error("squared_distance: size mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return s;
}

void normalize_in_place(std::vector<double>& v) {
    const double n = norm2(v);
    if (n == 0.0) throw numerical_error("normalize: zero vector");
    for (double& x : v) x /= n;
}

std::vector<double> normalized(std::vector<double> v) {
    normalize_in_place(v);
    return v;
}

bool all_finite(std::span<const double> v) {
    for (double x : v)
        if (!std::isfinite(x)) return false;
    return true;
}

double cosine_sim(std::span<const double> a, std::span<const double> b) {
    const double na = norm2(a);
    const double nb = norm2(b);
    if (na == 0.0 || nb == 0.0) throw numerical_error("cosine_sim: degenerate (zero-norm) vector");
    return dot(a, b) / (na * nb);
}

ProbVector softmax_scaled(std::span<const double> scores, double alpha) {
    if (scores.empty()) throw data_error("softmax_scaled: empty scores");
    if (!(alpha > 0.0)) throw config_error("softmax_scaled: alpha must be positive");
    if (!all_finite(scores)) throw numerical_error("softmax_scaled: non-finite score");

    const double m = *std::max_element(scores.begin(), scores.end());
    ProbVector out;
    out.probs.resize(scores.size());
    double z = 0.0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        out.probs[i] = std::exp(alpha * scores[i] - alpha * m);
        z += out.probs[i];
    }
    for (double& p : out.probs) p /= z;
    return out;
}

}  // namespace selfdebias
