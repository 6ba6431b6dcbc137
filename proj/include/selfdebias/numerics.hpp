#pragma once

#include <cstddef>
#include <span>
#include <utility>
#include <vector>

namespace selfdebias {

// Dense row-major matrix of doubles. Small and boring on purpose: everything
// in this project is at most a few thousand square.
class DenseMatrix {
public:
    DenseMatrix() = default;
    DenseMatrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    static DenseMatrix identity(std::size_t n);

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }

    double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

    double* row(std::size_t i) { return data_.data() + i * cols_; }
    const double* row(std::size_t i) const { return data_.data() + i * cols_; }

    std::vector<double>& data() { return data_; }
    const std::vector<double>& data() const { return data_; }

    bool is_square() const { return rows_ == cols_; }
    // max |a_ij - a_ji|
    double asymmetry() const;
    double max_abs() const;
    double frobenius_norm() const;
    // infinity norm (max absolute row sum)
    double inf_norm() const;

    DenseMatrix multiply(const DenseMatrix& other) const;
    DenseMatrix transposed() const;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

struct EighResult {
    std::vector<double> eigenvalues;  // ascending
    DenseMatrix eigenvectors;         // column j pairs with eigenvalues[j]
};

// Cyclic Jacobi eigensolver for symmetric matrices. Converges when the
// off-diagonal Frobenius norm drops below 1e-12 * ||m||_F.
EighResult jacobi_eigh(const DenseMatrix& m);

// Symmetric PSD square root via eigendecomposition. Eigenvalues in
// [-1e-6, 0) are treated as rounding noise and clamped to zero; anything
// below -1e-6 is rejected as genuinely indefinite.
DenseMatrix sqrtm_psd(const DenseMatrix& m);

// Probability vector: entries >= 0 summing to 1 within 1e-9.
struct ProbVector {
    std::vector<double> probs;

    std::size_t size() const { return probs.size(); }
    double operator[](std::size_t i) const { return probs[i]; }
    // Throws if the invariants do not hold.
    void validate() const;
};

double cosine_sim(std::span<const double> a, std::span<const double> b);

// softmax(alpha * scores) with max-shift, so adding a constant to all scores
// leaves the result bit-identical.
ProbVector softmax_scaled(std::span<const double> scores, double alpha);

// Small vector helpers shared across modules.
double dot(std::span<const double> a, std::span<const double> b);
double norm2(std::span<const double> v);
double squared_distance(std::span<const double> a, std::span<const double> b);
void normalize_in_place(std::vector<double>& v);
std::vector<double> normalized(std::vector<double> v);
bool all_finite(std::span<const double> v);

}  // namespace selfdebias
