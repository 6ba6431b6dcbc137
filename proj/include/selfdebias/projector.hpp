#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "selfdebias/numerics.hpp"
#include "selfdebias/surrogate.hpp"

namespace selfdebias {

// Time-conditioned two-layer MLP mapping latent activations to the unit
// sphere of the semantic space:
//   zhat = normalize(w2 * relu(w1 * [h, time_embedding(t)] + b1) + b2)
// Exact analytic gradients are provided for both parameters and inputs; the
// input gradient is what the guidance chain differentiates through.

struct ProjectorParams {
    int latent_dim = 0;
    int time_embed_dim = 32;
    int hidden = 256;
    int embed_dim = 0;

    DenseMatrix w1;           // hidden x (latent_dim + time_embed_dim)
    std::vector<double> b1;   // hidden
    DenseMatrix w2;           // embed_dim x hidden
    std::vector<double> b2;   // embed_dim

    int input_dim() const { return latent_dim + time_embed_dim; }
    void validate() const;
};

ProjectorParams init_projector(int latent_dim, int embed_dim, int hidden, int time_embed_dim,
                               std::uint64_t seed);

// Gradients with the same shapes as the parameters.
struct ProjectorGrads {
    DenseMatrix w1;
    std::vector<double> b1;
    DenseMatrix w2;
    std::vector<double> b2;

    static ProjectorGrads zeros_like(const ProjectorParams& p);
    void add_scaled(const ProjectorGrads& other, double s);
};

std::vector<double> timestep_embedding(int t, int dim);

struct ForwardCache {
    std::vector<double> input;       // [h, time embedding]
    std::vector<double> pre_act;     // w1 * input + b1
    std::vector<double> hidden_act;  // relu(pre_act)
    std::vector<double> pre_norm;    // w2 * hidden_act + b2
    double pre_norm_length = 0.0;
    std::vector<double> zhat;        // unit norm output
};

std::vector<double> projector_forward(const ProjectorParams& params, std::span<const double> h,
                                      int t);
ForwardCache projector_forward_cached(const ProjectorParams& params, std::span<const double> h,
                                      int t);

struct BackwardResult {
    ProjectorGrads param_grads;
    std::vector<double> h_grad;  // latent_dim entries; time branch discarded
};

BackwardResult projector_backward(const ProjectorParams& params, const ForwardCache& cache,
                                  std::span<const double> upstream);

// Input-gradient-only variant used on the guidance hot path.
std::vector<double> projector_backward_input(const ProjectorParams& params,
                                             const ForwardCache& cache,
                                             std::span<const double> upstream);

struct NtXentResult {
    double loss = 0.0;
    std::vector<std::vector<double>> zhat_grads;  // dloss/dzhat_i
};

// Normalized temperature-scaled cross entropy over cosine-similarity logits;
// positives are the aligned pairs (zhat_i, z_i), negatives everything else in
// the batch.
NtXentResult nt_xent_loss(const std::vector<std::vector<double>>& zhat,
                          const std::vector<std::vector<double>>& z, double tau);

struct TrainConfig {
    double learning_rate = 1e-4;
    int epochs = 30;
    int batch_size = 256;
    double tau = 0.1;
    int patience = 5;
    double validation_fraction = 0.1;
    int hidden = 256;
    int time_embed_dim = 32;
    std::uint64_t seed = 1;

    void validate() const;
};

struct EpochLog {
    int epoch = 0;  // 0 is the pre-training evaluation row
    double train_loss = 0.0;
    double val_cosine = 0.0;
};

struct TrainResult {
    ProjectorParams params;  // parameters of the best validation epoch
    std::vector<EpochLog> log;
    int best_epoch = 0;
    double best_val_cosine = 0.0;
};

TrainResult train_projector(const Dataset& dataset, const TrainConfig& config, int latent_dim,
                            int embed_dim);

}  // namespace selfdebias
