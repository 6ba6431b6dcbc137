#include "selfdebias/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "selfdebias/errors.hpp"

namespace selfdebias {

int classify_oracle(std::span<const double> z, const Points& mode_embeddings) {
    if (mode_embeddings.empty()) throw config_error("classify_oracle: no mode embeddings");
    int best = 0;
    double best_cos = -2.0;
    for (std::size_t m = 0; m < mode_embeddings.size(); ++m) {
        const double c = cosine_sim(z, mode_embeddings[m]);
        if (c > best_cos) {  // strict: ties keep the lowest index
            best_cos = c;
            best = static_cast<int>(m);
        }
    }
    return best;
}

namespace {

std::vector<double> class_frequencies(const std::vector<int>& labels, std::size_t k) {
    if (labels.empty()) throw data_error("metrics: empty label list");
    std::vector<double> freq(k, 0.0);
    for (int l : labels) {
        if (l < 0 || static_cast<std::size_t>(l) >= k)
            throw dimension_error("metrics: label outside target support");
        freq[l] += 1.0;
    }
    for (double& f : freq) f /= static_cast<double>(labels.size());
    return freq;
}

}  // namespace

double fairness_discrepancy(const std::vector<int>& labels, const ProbVector& target) {
    const auto freq = class_frequencies(labels, target.size());
    double s = 0.0;
    for (std::size_t i = 0; i < freq.size(); ++i) {
        const double d = target[i] - freq[i];
        s += d * d;
    }
    return std::sqrt(s);
}

double deviation_ratio(const std::vector<int>& labels, int k) {
    if (k < 2) throw config_error("deviation_ratio: need at least 2 classes");
    const auto freq = class_frequencies(labels, static_cast<std::size_t>(k));
    const double top = *std::max_element(freq.begin(), freq.end());
    const double base = 1.0 / static_cast<double>(k);
    return (top - base) / (1.0 - base);
}

namespace {

struct Gaussian {
    std::vector<double> mean;
    DenseMatrix cov;
};

Gaussian fit_gaussian(const Points& set) {
    const std::size_t n = set.size();
    const std::size_t d = set.front().size();
    Gaussian g;
    g.mean.assign(d, 0.0);
    for (const auto& x : set)
        for (std::size_t j = 0; j < d; ++j) g.mean[j] += x[j];
    for (double& m : g.mean) m /= static_cast<double>(n);

    g.cov = DenseMatrix(d, d);
    std::vector<double> c(d);
    for (const auto& x : set) {
        for (std::size_t j = 0; j < d; ++j) c[j] = x[j] - g.mean[j];
        for (std::size_t i = 0; i < d; ++i) {
            if (c[i] == 0.0) continue;
            double* row = g.cov.row(i);
            for (std::size_t j = i; j < d; ++j) row[j] += c[i] * c[j];
        }
    }
    for (std::size_t i = 0; i < d; ++i) {
        for (std::size_t j = i; j < d; ++j) {
            const double v = g.cov(i, j) / static_cast<double>(n);
            g.cov(i, j) = v;
            g.cov(j, i) = v;
        }
    }
    if (n < d + 1) {
        for (std::size_t i = 0; i < d; ++i) g.cov(i, i) += 1e-6;
    }
    return g;
}

}  // namespace

double frechet_distance(const Points& set_a, const Points& set_b) {
    if (set_a.size() < 2 || set_b.size() < 2)
        throw data_error("frechet_distance: each set needs at least 2 samples");
    if (set_a.front().size() != set_b.front().size())
        throw dimension_error("frechet_distance: dimension mismatch");

    const Gaussian ga = fit_gaussian(set_a);
    const Gaussian gb = fit_gaussian(set_b);

    double d2 = squared_distance(ga.mean, gb.mean);
    for (std::size_t i = 0; i < ga.cov.rows(); ++i) d2 += ga.cov(i, i) + gb.cov(i, i);

    const DenseMatrix root_a = sqrtm_psd(ga.cov);
    DenseMatrix inner = root_a.multiply(gb.cov).multiply(root_a);
    // Symmetrize: the product accumulates rounding skew.
    for (std::size_t i = 0; i < inner.rows(); ++i) {
        for (std::size_t j = i + 1; j < inner.cols(); ++j) {
            const double avg = 0.5 * (inner(i, j) + inner(j, i));
            inner(i, j) = avg;
            inner(j, i) = avg;
        }
    }
    const DenseMatrix cross = sqrtm_psd(inner);
    for (std::size_t i = 0; i < cross.rows(); ++i) d2 -= 2.0 * cross(i, i);

    if (d2 < -1e-8) throw numerical_error("frechet_distance: negative distance beyond tolerance");
    return std::max(0.0, d2);
}

EvalResult evaluate(const Points& final_embeddings, const Points& mode_embeddings,
                    const ProbVector& class_target, const Points& reference_embeddings,
                    double soft_alpha) {
    if (final_embeddings.empty()) throw data_error("evaluate: empty batch");
    if (reference_embeddings.empty()) throw config_error("evaluate: missing reference set");
    if (class_target.size() != mode_embeddings.size())
        throw dimension_error("evaluate: target length must match mode count");

    const std::size_t k = mode_embeddings.size();
    EvalResult r;
    r.n = final_embeddings.size();
    r.histogram.assign(k, 0);

    std::vector<int> labels;
    labels.reserve(final_embeddings.size());
    std::vector<double> soft_mean(k, 0.0);
    std::vector<double> cosines(k);
    for (const auto& z : final_embeddings) {
        const int label = classify_oracle(z, mode_embeddings);
        labels.push_back(label);
        ++r.histogram[label];
        for (std::size_t m = 0; m < k; ++m) cosines[m] = cosine_sim(z, mode_embeddings[m]);
        const ProbVector p = softmax_scaled(cosines, soft_alpha);
        for (std::size_t m = 0; m < k; ++m) soft_mean[m] += p[m];
    }
    for (double& v : soft_mean) v /= static_cast<double>(final_embeddings.size());

    r.fd = fairness_discrepancy(labels, class_target);
    double s = 0.0;
    for (std::size_t m = 0; m < k; ++m) {
        const double d = class_target[m] - soft_mean[m];
        s += d * d;
    }
    r.fd_soft = std::sqrt(s);
    r.deviation_ratio = deviation_ratio(labels, static_cast<int>(k));
    r.frechet = frechet_distance(final_embeddings, reference_embeddings);
    r.entropy = 0.0;
    for (std::size_t m = 0; m < k; ++m) {
        const double f = static_cast<double>(r.histogram[m]) / static_cast<double>(r.n);
        if (f > 0.0) r.entropy -= f * std::log(f);
    }
    return r;
}

}  // namespace selfdebias
