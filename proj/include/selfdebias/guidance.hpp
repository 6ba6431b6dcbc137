#pragma once

#include <cstdint>
#include <vector>

#include "selfdebias/discovery.hpp"
#include "selfdebias/numerics.hpp"
#include "selfdebias/projector.hpp"
#include "selfdebias/surrogate.hpp"

namespace selfdebias {

struct GuidanceConfig {
    double gamma = 0.05;   // per-sample step size
    int inner_steps = 1;
    std::vector<int> guided_timesteps;  // default filled with [10, 40]
    double alpha = 8.0;    // soft-assignment temperature, shared with discovery
    int batch_size = 100;
    bool enabled = true;
    // When a step increases the KL, halve it up to this many times; if it
    // still increases, the batch is left unedited for that inner step.
    bool backtrack = true;
    int max_halvings = 5;

    static std::vector<int> default_window(int lo = 10, int hi = 40);
    void validate() const;
    bool is_guided(int t) const;
};

double kl_divergence(const ProbVector& p, const ProbVector& u);

struct BatchGradResult {
    double loss = 0.0;                         // KL(P_t || target)
    ProbVector batch_dist;                     // P_t
    std::vector<std::vector<double>> h_grads;  // exact dKL/dh_i per sample
};

// Differentiates KL(mean_i soft_assign(forward(h_i, t)) || target) through
// the soft assignment, the cosine similarities, and the frozen projector.
BatchGradResult batch_grad_h(const std::vector<std::vector<double>>& h_batch, int t,
                             const ProjectorParams& params, const Points& leaf_centroids,
                             const ProbVector& target, double alpha);

struct DebiasStepResult {
    std::vector<std::vector<double>> h_batch;
    std::vector<double> kl_trace;  // KL after each inner step
    double kl_initial = 0.0;
    bool monotone = true;          // trace non-increasing within 1e-6
};

// h <- h - gamma * N * grad, repeated inner_steps times with the gradient
// recomputed each iteration. The batch-size factor undoes the 1/N dilution
// of the batch-mean coupling so the per-sample edit strength is independent
// of how many samples share the batch.
DebiasStepResult debias_step(const std::vector<std::vector<double>>& h_batch, int t,
                             const GuidanceConfig& config, const ProjectorParams& params,
                             const Points& leaf_centroids, const ProbVector& target);

struct GuidanceTraceRow {
    int batch = 0;
    int t = 0;
    double kl_before = 0.0;
    double kl_after = 0.0;
    double mean_edit_norm = 0.0;
    double max_edit_norm = 0.0;
};

struct GuidedSamplingResult {
    Points final_embeddings;
    std::vector<int> true_modes;
    std::vector<int> oracle_labels;
    std::vector<std::size_t> pre_histogram;   // hidden true-mode counts
    std::vector<std::size_t> post_histogram;  // oracle labels of the finals
    std::vector<GuidanceTraceRow> trace;
    bool kl_monotone = true;
};

// Runs n trajectories in batches of batch_size, editing h at every guided
// timestep and feeding the edit into the next denoise step. Noise streams
// depend only on (seed, trajectory, timestep), so a disabled-guidance run is
// bit-identical to plain sampling with the same seed.
GuidedSamplingResult guided_sampling(const GeneratorConfig& gen_config,
                                     const GuidanceConfig& guidance,
                                     const ProjectorParams& params, const ClusterTree& tree,
                                     const TargetDistribution& target,
                                     const EmbeddingDecoder& decoder, std::size_t n,
                                     std::uint64_t seed);

}  // namespace selfdebias
