#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "selfdebias/numerics.hpp"

namespace selfdebias {

// Synthetic stand-in for the diffusion model: latent trajectories fall into
// attractor basins around configured mode means while an annealed noise
// schedule keeps early steps exploratory and late steps committed.

struct ModeSpec {
    std::vector<double> mean;  // latent_dim entries
    double weight = 0.0;
};

struct NoiseSchedule {
    // sigma[t] is the noise applied when stepping *to* timestep t.
    std::vector<double> sigma;  // indexed 0..steps

    static NoiseSchedule linear(int steps, double sigma_max = 1.0, double sigma_min = 0.05,
                                double sigma_final = 0.0);
    static NoiseSchedule constant(int steps, double value);
};

struct GeneratorConfig {
    int latent_dim = 32;
    int embed_dim = 512;
    int steps = 50;
    double attraction_rate = 0.12;
    std::vector<ModeSpec> modes;
    // Optional coarse-group id per mode, for two-level synthetic structure.
    std::vector<int> hierarchy;
    NoiseSchedule noise_schedule;
    std::uint64_t seed = 1;
    std::vector<int> capture_timesteps = {10, 20, 25, 30, 40};

    void validate() const;
    int coarse_group(int mode) const;  // mode's coarse id, or the mode itself
};

struct TrajectoryState {
    std::int64_t trajectory_id = 0;
    int t = 0;                   // current timestep; steps..0, finished at 0
    std::vector<double> h;       // latent vector at timestep t
    int true_mode = -1;          // hidden oracle label fixed at sampling time
};

// Frozen nonlinear map from final latents to the unit-norm semantic space.
// Stands in for an image encoder: deterministic given the config seed, and
// rejection-sampled until the configured mode means land at pairwise cosine
// similarity below 0.5.
class EmbeddingDecoder {
public:
    static EmbeddingDecoder build(const GeneratorConfig& config);

    std::vector<double> embed(std::span<const double> h) const;
    const std::vector<std::vector<double>>& mode_embeddings() const { return mode_embeddings_; }

private:
    DenseMatrix w_;             // embed_dim x latent_dim
    std::vector<double> bias_;  // embed_dim
    std::vector<std::vector<double>> mode_embeddings_;
};

std::vector<TrajectoryState> sample_initial(const GeneratorConfig& config, std::size_t n,
                                            std::int64_t first_trajectory_id = 0);

// One reverse step t -> t-1. If h_override is given it replaces the state's
// latent before the dynamics are applied; the noise draw depends only on
// (seed, trajectory, t-1), so edits never perturb the random stream.
void denoise_step(const GeneratorConfig& config, TrajectoryState& state,
                  std::optional<std::span<const double>> h_override = std::nullopt);

int nearest_mode(const GeneratorConfig& config, std::span<const double> h);

std::vector<double> decode_embedding(const EmbeddingDecoder& decoder, const TrajectoryState& state);

struct CaptureRecord {
    std::int64_t trajectory_id = 0;
    int t = 0;
    std::vector<double> h;
};

struct TrajectoryRecord {
    std::int64_t trajectory_id = 0;
    int true_mode = -1;
    std::vector<double> z;  // semantic embedding of the finished trajectory
};

struct Dataset {
    std::vector<int> capture_timesteps;
    std::vector<TrajectoryRecord> trajectories;
    std::vector<CaptureRecord> samples;  // n * |capture_timesteps| records
};

// Runs n unguided trajectories to completion, recording h at each captured
// timestep plus the final embedding.
Dataset generate_dataset(const GeneratorConfig& config, std::size_t n,
                         const std::vector<int>& capture_timesteps,
                         const EmbeddingDecoder& decoder);

// Preset configurations used by the CLI and the test harness.
GeneratorConfig two_mode_config(double weight0, double separation = 8.0, std::uint64_t seed = 1);
GeneratorConfig hierarchical_config(std::uint64_t seed = 1);            // 2 coarse x 2 subgroups
GeneratorConfig three_subgroup_config(std::uint64_t seed = 1);          // 2 coarse x 3 subgroups

}  // namespace selfdebias
