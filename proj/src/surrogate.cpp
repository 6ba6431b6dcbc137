#include "selfdebias/surrogate.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "selfdebias/errors.hpp"
#include "selfdebias/rng.hpp"

namespace selfdebias {

namespace {

// Purpose tags for independent random streams.
enum class Stream : std::uint64_t { kModeChoice = 1, kNoise = 2, kDecoder = 3 };

std::uint64_t traj_key(const GeneratorConfig& config, std::int64_t trajectory_id, Stream s) {
    return stream_key(config.seed, static_cast<std::uint64_t>(trajectory_id),
                      static_cast<std::uint64_t>(s));
}

}  // namespace

NoiseSchedule NoiseSchedule::linear(int steps, double sigma_max, double sigma_min,
                                    double sigma_final) {
    NoiseSchedule s;
    s.sigma.resize(steps + 1);
    s.sigma[0] = sigma_final;
    for (int t = 1; t <= steps; ++t) {
        s.sigma[t] = steps > 1 ? sigma_min + (sigma_max - sigma_min) * double(t - 1) / double(steps - 1)
                               : sigma_max;
    }
    return s;
}

NoiseSchedule NoiseSchedule::constant(int steps, double value) {
    NoiseSchedule s;
    s.sigma.assign(steps + 1, value);
    return s;
}

void GeneratorConfig::validate() const {
    if (latent_dim < 2) throw config_error("generator: latent_dim must be >= 2");
    if (embed_dim < 2) throw config_error("generator: embed_dim must be >= 2");
    if (steps < 1) throw config_error("generator: steps must be >= 1");
    if (!(attraction_rate > 0.0 && attraction_rate <= 1.0))
        throw config_error("generator: attraction_rate must be in (0, 1]");
    if (modes.size() < 2) throw config_error("generator: at least 2 modes required");
    double wsum = 0.0;
    for (const auto& m : modes) {
        if (static_cast<int>(m.mean.size()) != latent_dim)
            throw dimension_error("generator: mode mean has wrong dimension");
        if (!all_finite(m.mean)) throw numerical_error("generator: non-finite mode mean");
        if (m.weight < 0.0) throw config_error("generator: negative mode weight");
        wsum += m.weight;
    }
    if (std::abs(wsum - 1.0) > 1e-9) throw config_error("generator: mode weights must sum to 1");
    if (!hierarchy.empty() && hierarchy.size() != modes.size())
        throw config_error("generator: hierarchy must give one coarse id per mode");
    if (noise_schedule.sigma.size() != static_cast<std::size_t>(steps + 1))
        throw config_error("generator: noise schedule must have steps+1 entries");
    // Noise must not grow as denoising proceeds (t decreasing). sigma == 0 is
    // allowed so noise-free configurations stay expressible.
    for (int t = 0; t <= steps; ++t) {
        const double s = noise_schedule.sigma[t];
        if (!(s >= 0.0)) throw config_error("generator: sigma must be non-negative");
        if (t > 0 && noise_schedule.sigma[t] < noise_schedule.sigma[t - 1] - 1e-12)
            throw config_error("generator: sigma must be non-increasing in denoising order");
    }
    for (int t : capture_timesteps) {
        if (t < 1 || t > steps) throw config_error("generator: capture timestep outside [1, steps]");
    }
}

int GeneratorConfig::coarse_group(int mode) const {
    if (hierarchy.empty()) return mode;
    return hierarchy[mode];
}

EmbeddingDecoder EmbeddingDecoder::build(const GeneratorConfig& config) {
    config.validate();
    const int d = config.latent_dim;
    const int e = config.embed_dim;
    const double scale = 1.0 / std::sqrt(static_cast<double>(d));

    for (int attempt = 0; attempt < 100; ++attempt) {
        SeqRng rng(stream_key(config.seed, static_cast<std::uint64_t>(Stream::kDecoder),
                              static_cast<std::uint64_t>(attempt)));
        EmbeddingDecoder dec;
        dec.w_ = DenseMatrix(e, d);
        for (double& v : dec.w_.data()) v = scale * rng.normal();
        dec.bias_.resize(e);
        for (double& v : dec.bias_) v = 0.05 * rng.normal();

        dec.mode_embeddings_.clear();
        for (const auto& m : config.modes) dec.mode_embeddings_.push_back(dec.embed(m.mean));

        bool separated = true;
        for (std::size_t i = 0; i < dec.mode_embeddings_.size() && separated; ++i) {
            for (std::size_t j = i + 1; j < dec.mode_embeddings_.size(); ++j) {
                if (cosine_sim(dec.mode_embeddings_[i], dec.mode_embeddings_[j]) >= 0.5) {
                    separated = false;
                    break;
                }
            }
        }
        if (separated) return dec;
    }
    throw numerical_error("decoder: mode means not separable after 100 attempts");
}

std::vector<double> EmbeddingDecoder::embed(std::span<const double> h) const {
    if (h.size() != w_.cols()) throw dimension_error("decoder: latent dimension mismatch");
    std::vector<double> z(w_.rows());
    for (std::size_t i = 0; i < w_.rows(); ++i) {
        const double* row = w_.row(i);
        double s = bias_[i];
        for (std::size_t j = 0; j < h.size(); ++j) s += row[j] * h[j];
        z[i] = std::tanh(s);
    }
    normalize_in_place(z);
    return z;
}

std::vector<TrajectoryState> sample_initial(const GeneratorConfig& config, std::size_t n,
                                            std::int64_t first_trajectory_id) {
    config.validate();
    if (n == 0) throw data_error("sample_initial: empty batch");

    std::vector<TrajectoryState> out;
    out.reserve(n);
    const double sigma0 = config.noise_schedule.sigma[config.steps];
    for (std::size_t i = 0; i < n; ++i) {
        TrajectoryState st;
        st.trajectory_id = first_trajectory_id + static_cast<std::int64_t>(i);
        st.t = config.steps;

        const double u = counter_uniform(traj_key(config, st.trajectory_id, Stream::kModeChoice), 0);
        double acc = 0.0;
        st.true_mode = static_cast<int>(config.modes.size()) - 1;
        for (std::size_t m = 0; m < config.modes.size(); ++m) {
            acc += config.modes[m].weight;
            if (u <= acc) {
                st.true_mode = static_cast<int>(m);
                break;
            }
        }

        const auto& mean = config.modes[st.true_mode].mean;
        st.h.resize(config.latent_dim);
        const std::uint64_t key = traj_key(config, st.trajectory_id, Stream::kNoise);
        const std::uint64_t base = static_cast<std::uint64_t>(config.steps) *
                                   static_cast<std::uint64_t>(config.latent_dim);
        for (int j = 0; j < config.latent_dim; ++j) {
            st.h[j] = mean[j] + sigma0 * counter_normal(key, base + j);
        }
        out.push_back(std::move(st));
    }
    return out;
}

int nearest_mode(const GeneratorConfig& config, std::span<const double> h) {
    int best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t m = 0; m < config.modes.size(); ++m) {
        const double d = squared_distance(h, config.modes[m].mean);
        if (d < best_d) {  // strict: ties stay with the lowest index
            best_d = d;
            best = static_cast<int>(m);
        }
    }
    return best;
}

void denoise_step(const GeneratorConfig& config, TrajectoryState& state,
                  std::optional<std::span<const double>> h_override) {
    if (state.t < 1) throw data_error("denoise_step: trajectory already finished");
    if (h_override && static_cast<int>(h_override->size()) != config.latent_dim)
        throw dimension_error("denoise_step: override has wrong dimension");

    if (h_override) state.h.assign(h_override->begin(), h_override->end());

    const int target_t = state.t - 1;
    const double sigma = config.noise_schedule.sigma[target_t];
    const auto& mean = config.modes[nearest_mode(config, state.h)].mean;
    const double a = config.attraction_rate;
    const std::uint64_t key = traj_key(config, state.trajectory_id, Stream::kNoise);
    const std::uint64_t base = static_cast<std::uint64_t>(target_t) *
                               static_cast<std::uint64_t>(config.latent_dim);
    for (int j = 0; j < config.latent_dim; ++j) {
        const double noise = sigma == 0.0 ? 0.0 : sigma * counter_normal(key, base + j);
        state.h[j] += a * (mean[j] - state.h[j]) + noise;
    }
    state.t = target_t;
}

std::vector<double> decode_embedding(const EmbeddingDecoder& decoder, const TrajectoryState& state) {
    if (state.t != 0) throw data_error("decode_embedding: trajectory not finished");
    return decoder.embed(state.h);
}

Dataset generate_dataset(const GeneratorConfig& config, std::size_t n,
                         const std::vector<int>& capture_timesteps,
                         const EmbeddingDecoder& decoder) {
    config.validate();
    if (capture_timesteps.empty()) throw config_error("generate_dataset: empty capture set");
    for (int t : capture_timesteps)
        if (t < 1 || t > config.steps)
            throw config_error("generate_dataset: capture timestep outside [1, steps]");

    std::vector<int> capture = capture_timesteps;
    std::sort(capture.begin(), capture.end(), std::greater<int>());

    Dataset ds;
    ds.capture_timesteps = capture_timesteps;
    ds.trajectories.reserve(n);
    ds.samples.reserve(n * capture.size());

    auto states = sample_initial(config, n);
    for (auto& st : states) {
        std::size_t next_capture = 0;
        while (st.t > 0) {
            if (next_capture < capture.size() && st.t == capture[next_capture]) {
                ds.samples.push_back({st.trajectory_id, st.t, st.h});
                ++next_capture;
            }
            denoise_step(config, st);
        }
        ds.trajectories.push_back({st.trajectory_id, st.true_mode, decode_embedding(decoder, st)});
    }
    return ds;
}

GeneratorConfig two_mode_config(double weight0, double separation, std::uint64_t seed) {
    GeneratorConfig cfg;
    cfg.seed = seed;
    cfg.noise_schedule = NoiseSchedule::linear(cfg.steps);
    std::vector<double> m0(cfg.latent_dim, 0.0);
    std::vector<double> m1(cfg.latent_dim, 0.0);
    m0[0] = -separation / 2.0;
    m1[0] = separation / 2.0;
    cfg.modes = {{m0, weight0}, {m1, 1.0 - weight0}};
    return cfg;
}

GeneratorConfig hierarchical_config(std::uint64_t seed) {
    GeneratorConfig cfg;
    cfg.seed = seed;
    cfg.noise_schedule = NoiseSchedule::linear(cfg.steps);
    const double coarse = 6.0;   // coarse groups at +/- coarse on axis 0
    const double sub = 3.5;      // subgroups at +/- sub on axis 1
    auto mode = [&](double c, double s) {
        std::vector<double> m(cfg.latent_dim, 0.0);
        m[0] = c;
        m[1] = s;
        return m;
    };
    cfg.modes = {{mode(-coarse, -sub), 0.25},
                 {mode(-coarse, sub), 0.25},
                 {mode(coarse, -sub), 0.25},
                 {mode(coarse, sub), 0.25}};
    cfg.hierarchy = {0, 0, 1, 1};
    return cfg;
}

GeneratorConfig three_subgroup_config(std::uint64_t seed) {
    GeneratorConfig cfg;
    cfg.seed = seed;
    cfg.noise_schedule = NoiseSchedule::linear(cfg.steps);
    const double coarse = 6.0;
    const double sub = 4.0;  // three subgroups per coarse group on a circle
    auto mode = [&](double c, double angle) {
        std::vector<double> m(cfg.latent_dim, 0.0);
        m[0] = c;
        m[1] = sub * std::cos(angle);
        m[2] = sub * std::sin(angle);
        return m;
    };
    const double tau = 2.0 * 3.14159265358979323846;
    cfg.modes = {{mode(-coarse, 0.0), 1.0 / 6},          {mode(-coarse, tau / 3), 1.0 / 6},
                 {mode(-coarse, 2 * tau / 3), 1.0 / 6},  {mode(coarse, tau / 6), 1.0 / 6},
                 {mode(coarse, tau / 2), 1.0 / 6},       {mode(coarse, 5 * tau / 6), 1.0 / 6}};
    cfg.hierarchy = {0, 0, 0, 1, 1, 1};
    return cfg;
}

}  // namespace selfdebias
