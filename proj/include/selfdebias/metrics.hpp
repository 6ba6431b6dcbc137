#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "selfdebias/discovery.hpp"
#include "selfdebias/numerics.hpp"

namespace selfdebias {

// Ground-truth classifier surrogate: nearest mode embedding by cosine
// similarity, ties resolved to the lowest index.
int classify_oracle(std::span<const double> z, const Points& mode_embeddings);

// L2 distance between the target class distribution and the empirical one.
double fairness_discrepancy(const std::vector<int>& labels, const ProbVector& target);

// (max class frequency - 1/k) / (1 - 1/k): 0 at perfect balance, 1 at
// total collapse onto one class.
double deviation_ratio(const std::vector<int>& labels, int k);

// Squared 2-Wasserstein distance between Gaussians fitted to the two sets.
// Covariances of sets smaller than dim+1 are regularized by 1e-6 * I.
double frechet_distance(const Points& set_a, const Points& set_b);

struct EvalResult {
    double fd = 0.0;        // hard-label fairness discrepancy
    double fd_soft = 0.0;   // soft-assignment variant
    double deviation_ratio = 0.0;
    double frechet = 0.0;
    std::vector<std::size_t> histogram;  // counts per mode
    double entropy = 0.0;                // of the empirical class distribution, nats
    std::size_t n = 0;
};

EvalResult evaluate(const Points& final_embeddings, const Points& mode_embeddings,
                    const ProbVector& class_target, const Points& reference_embeddings,
                    double soft_alpha = 8.0);

}  // namespace selfdebias
