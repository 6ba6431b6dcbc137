#include "selfdebias/projector.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_map>

#include "selfdebias/errors.hpp"
#include "selfdebias/rng.hpp"

namespace selfdebias {

namespace {

// y += M * x
void matvec_add(const DenseMatrix& m, std::span<const double> x, std::vector<double>& y) {
    for (std::size_t i = 0; i < m.rows(); ++i) {
        const double* row = m.row(i);
        double s = 0.0;
        for (std::size_t j = 0; j < m.cols(); ++j) s += row[j] * x[j];
        y[i] += s;
    }
}

// y += M^T * x, iterated over rows so memory access stays contiguous.
void matvec_transpose_add(const DenseMatrix& m, std::span<const double> x, std::vector<double>& y) {
    for (std::size_t i = 0; i < m.rows(); ++i) {
        const double xi = x[i];
        if (xi == 0.0) continue;
        const double* row = m.row(i);
        for (std::size_t j = 0; j < m.cols(); ++j) y[j] += xi * row[j];
    }
}

// G += u * w^T
void rank1_add(DenseMatrix& g, std::span<const double> u, std::span<const double> w) {
    for (std::size_t i = 0; i < g.rows(); ++i) {
        const double ui = u[i];
        if (ui == 0.0) continue;
        double* row = g.row(i);
        for (std::size_t j = 0; j < g.cols(); ++j) row[j] += ui * w[j];
    }
}

}  // namespace

void ProjectorParams::validate() const {
    if (latent_dim < 1 || embed_dim < 1 || hidden < 1 || time_embed_dim < 2)
        throw config_error("projector: invalid dimensions");
    if (time_embed_dim % 2 != 0) throw config_error("projector: time_embed_dim must be even");
    if (w1.rows() != static_cast<std::size_t>(hidden) ||
        w1.cols() != static_cast<std::size_t>(input_dim()) ||
        b1.size() != static_cast<std::size_t>(hidden) ||
        w2.rows() != static_cast<std::size_t>(embed_dim) ||
        w2.cols() != static_cast<std::size_t>(hidden) ||
        b2.size() != static_cast<std::size_t>(embed_dim))
        throw dimension_error("projector: inconsistent parameter shapes");
}

ProjectorParams init_projector(int latent_dim, int embed_dim, int hidden, int time_embed_dim,
                               std::uint64_t seed) {
    ProjectorParams p;
    p.latent_dim = latent_dim;
    p.embed_dim = embed_dim;
    p.hidden = hidden;
    p.time_embed_dim = time_embed_dim;
    p.w1 = DenseMatrix(hidden, p.input_dim());
    p.b1.assign(hidden, 0.0);
    p.w2 = DenseMatrix(embed_dim, hidden);
    p.b2.assign(embed_dim, 0.0);

    SeqRng rng(seed, "projector-init");
    const double s1 = std::sqrt(2.0 / p.input_dim());  // He for the relu layer
    for (double& v : p.w1.data()) v = s1 * rng.normal();
    const double s2 = std::sqrt(1.0 / hidden);
    for (double& v : p.w2.data()) v = s2 * rng.normal();
    p.validate();
    return p;
}

ProjectorGrads ProjectorGrads::zeros_like(const ProjectorParams& p) {
    ProjectorGrads g;
    g.w1 = DenseMatrix(p.w1.rows(), p.w1.cols());
    g.b1.assign(p.b1.size(), 0.0);
    g.w2 = DenseMatrix(p.w2.rows(), p.w2.cols());
    g.b2.assign(p.b2.size(), 0.0);
    return g;
}

void ProjectorGrads::add_scaled(const ProjectorGrads& other, double s) {
    for (std::size_t i = 0; i < w1.data().size(); ++i) w1.data()[i] += s * other.w1.data()[i];
    for (std::size_t i = 0; i < b1.size(); ++i) b1[i] += s * other.b1[i];
    for (std::size_t i = 0; i < w2.data().size(); ++i) w2.data()[i] += s * other.w2.data()[i];
    for (std::size_t i = 0; i < b2.size(); ++i) b2[i] += s * other.b2[i];
}

std::vector<double> timestep_embedding(int t, int dim) {
    if (dim < 2 || dim % 2 != 0) throw config_error("timestep_embedding: dim must be even and >= 2");
    if (t < 0) throw config_error("timestep_embedding: t must be >= 0");
    std::vector<double> out(dim);
    const int pairs = dim / 2;
    for (int i = 0; i < pairs; ++i) {
        const double denom = std::pow(10000.0, 2.0 * (i + 1) / dim);
        const double angle = static_cast<double>(t) / denom;
        out[2 * i] = std::sin(angle);
        out[2 * i + 1] = std::cos(angle);
    }
    return out;
}

ForwardCache projector_forward_cached(const ProjectorParams& params, std::span<const double> h,
                                      int t) {
    params.validate();
    if (static_cast<int>(h.size()) != params.latent_dim)
        throw dimension_error("projector: latent input has wrong dimension");

    ForwardCache c;
    c.input.assign(h.begin(), h.end());
    const auto temb = timestep_embedding(t, params.time_embed_dim);
    c.input.insert(c.input.end(), temb.begin(), temb.end());

    c.pre_act = params.b1;
    matvec_add(params.w1, c.input, c.pre_act);
    c.hidden_act.resize(c.pre_act.size());
    for (std::size_t i = 0; i < c.pre_act.size(); ++i)
        c.hidden_act[i] = c.pre_act[i] > 0.0 ? c.pre_act[i] : 0.0;

    c.pre_norm = params.b2;
    matvec_add(params.w2, c.hidden_act, c.pre_norm);
    c.pre_norm_length = norm2(c.pre_norm);
    if (c.pre_norm_length < 1e-12)
        throw numerical_error("projector: output degenerate before normalization");
    c.zhat.resize(c.pre_norm.size());
    for (std::size_t i = 0; i < c.pre_norm.size(); ++i) c.zhat[i] = c.pre_norm[i] / c.pre_norm_length;
    return c;
}

std::vector<double> projector_forward(const ProjectorParams& params, std::span<const double> h,
                                      int t) {
    return projector_forward_cached(params, h, t).zhat;
}

namespace {

// Pull an upstream gradient on zhat back through the normalization and the
// second affine layer; returns the gradient on hidden_act.
std::vector<double> grad_to_hidden(const ProjectorParams& params, const ForwardCache& cache,
                                   std::span<const double> upstream,
                                   std::vector<double>* pre_norm_grad_out) {
    if (upstream.size() != cache.zhat.size())
        throw dimension_error("projector backward: upstream gradient has wrong dimension");
    // d(normalize)/dy = (I - zhat zhat^T) / |y|
    const double proj = dot(upstream, cache.zhat);
    std::vector<double> g_pre_norm(upstream.size());
    for (std::size_t i = 0; i < upstream.size(); ++i)
        g_pre_norm[i] = (upstream[i] - proj * cache.zhat[i]) / cache.pre_norm_length;
    std::vector<double> g_hidden(params.hidden, 0.0);
    matvec_transpose_add(params.w2, g_pre_norm, g_hidden);
    if (pre_norm_grad_out) *pre_norm_grad_out = std::move(g_pre_norm);
    return g_hidden;
}

}  // namespace

BackwardResult projector_backward(const ProjectorParams& params, const ForwardCache& cache,
                                  std::span<const double> upstream) {
    BackwardResult r;
    r.param_grads = ProjectorGrads::zeros_like(params);

    std::vector<double> g_pre_norm;
    std::vector<double> g_hidden = grad_to_hidden(params, cache, upstream, &g_pre_norm);

    r.param_grads.b2 = g_pre_norm;
    rank1_add(r.param_grads.w2, g_pre_norm, cache.hidden_act);

    // relu subgradient: 0 at exactly 0
    for (std::size_t i = 0; i < g_hidden.size(); ++i)
        if (cache.pre_act[i] <= 0.0) g_hidden[i] = 0.0;

    r.param_grads.b1 = g_hidden;
    rank1_add(r.param_grads.w1, g_hidden, cache.input);

    std::vector<double> g_input(cache.input.size(), 0.0);
    matvec_transpose_add(params.w1, g_hidden, g_input);
    r.h_grad.assign(g_input.begin(), g_input.begin() + params.latent_dim);
    return r;
}

std::vector<double> projector_backward_input(const ProjectorParams& params,
                                             const ForwardCache& cache,
                                             std::span<const double> upstream) {
    std::vector<double> g_hidden = grad_to_hidden(params, cache, upstream, nullptr);
    for (std::size_t i = 0; i < g_hidden.size(); ++i)
        if (cache.pre_act[i] <= 0.0) g_hidden[i] = 0.0;
    std::vector<double> g_input(cache.input.size(), 0.0);
    matvec_transpose_add(params.w1, g_hidden, g_input);
    return {g_input.begin(), g_input.begin() + params.latent_dim};
}

NtXentResult nt_xent_loss(const std::vector<std::vector<double>>& zhat,
                          const std::vector<std::vector<double>>& z, double tau) {
    const std::size_t n = zhat.size();
    if (n != z.size()) throw dimension_error("nt_xent: batch sizes differ");
    if (n < 2) throw data_error("nt_xent: need at least 2 samples for negatives");
    if (!(tau > 0.0)) throw config_error("nt_xent: tau must be positive");

    NtXentResult out;
    out.zhat_grads.assign(n, {});

    std::vector<double> z_norms(n);
    for (std::size_t j = 0; j < n; ++j) z_norms[j] = norm2(z[j]);

    std::vector<double> cos_row(n);
    std::vector<double> p_row(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double zhat_norm = norm2(zhat[i]);
        if (zhat_norm == 0.0) throw numerical_error("nt_xent: zero-norm zhat");
        for (std::size_t j = 0; j < n; ++j) {
            if (z_norms[j] == 0.0) throw numerical_error("nt_xent: zero-norm target");
            cos_row[j] = dot(zhat[i], z[j]) / (zhat_norm * z_norms[j]);
        }
        const double m = *std::max_element(cos_row.begin(), cos_row.end());
        double denom = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            p_row[j] = std::exp((cos_row[j] - m) / tau);
            denom += p_row[j];
        }
        for (double& p : p_row) p /= denom;
        out.loss += -std::log(p_row[i]);

        // dloss_i/dcos_ij = (p_ij - [j == i]) / tau, then through the cosine:
        // dcos(a, b)/da = b/(|a||b|) - cos * a/|a|^2
        std::vector<double> g(zhat[i].size(), 0.0);
        for (std::size_t j = 0; j < n; ++j) {
            const double coef = (p_row[j] - (j == i ? 1.0 : 0.0)) / tau;
            if (coef == 0.0) continue;
            const double inv = 1.0 / (zhat_norm * z_norms[j]);
            const double self = cos_row[j] / (zhat_norm * zhat_norm);
            for (std::size_t k = 0; k < g.size(); ++k)
                g[k] += coef * (z[j][k] * inv - self * zhat[i][k]);
        }
        out.zhat_grads[i] = std::move(g);
    }

    out.loss /= static_cast<double>(n);
    const double inv_n = 1.0 / static_cast<double>(n);
    for (auto& g : out.zhat_grads)
        for (double& v : g) v *= inv_n;
    return out;
}

void TrainConfig::validate() const {
    if (!(learning_rate > 0.0)) throw config_error("train: learning_rate must be positive");
    if (epochs < 1) throw config_error("train: epochs must be >= 1");
    if (batch_size < 2) throw config_error("train: batch_size must be >= 2");
    if (!(tau > 0.0)) throw config_error("train: tau must be positive");
    if (patience < 0) throw config_error("train: patience must be >= 0");
    if (!(validation_fraction > 0.0 && validation_fraction < 1.0))
        throw config_error("train: validation_fraction must be in (0, 1)");
    if (hidden < 1 || time_embed_dim < 2 || time_embed_dim % 2 != 0)
        throw config_error("train: invalid network dimensions");
}

namespace {

struct AdamState {
    ProjectorGrads m;
    ProjectorGrads v;
    int step = 0;
};

void adam_update_tensor(std::vector<double>& w, std::vector<double>& m, std::vector<double>& v,
                        const std::vector<double>& g, double lr, double bc1, double bc2) {
    constexpr double beta1 = 0.9;
    constexpr double beta2 = 0.999;
    constexpr double eps = 1e-8;
    for (std::size_t i = 0; i < w.size(); ++i) {
        m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
        v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
        const double mhat = m[i] / bc1;
        const double vhat = v[i] / bc2;
        w[i] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
}

void adam_update(ProjectorParams& p, AdamState& st, const ProjectorGrads& g, double lr) {
    ++st.step;
    const double bc1 = 1.0 - std::pow(0.9, st.step);
    const double bc2 = 1.0 - std::pow(0.999, st.step);
    adam_update_tensor(p.w1.data(), st.m.w1.data(), st.v.w1.data(), g.w1.data(), lr, bc1, bc2);
    adam_update_tensor(p.b1, st.m.b1, st.v.b1, g.b1, lr, bc1, bc2);
    adam_update_tensor(p.w2.data(), st.m.w2.data(), st.v.w2.data(), g.w2.data(), lr, bc1, bc2);
    adam_update_tensor(p.b2, st.m.b2, st.v.b2, g.b2, lr, bc1, bc2);
}

struct Pairing {
    const CaptureRecord* capture;
    const TrajectoryRecord* trajectory;
};

double batch_pass(const ProjectorParams& params, const std::vector<Pairing>& samples,
                  std::span<const std::size_t> idx, double tau, ProjectorGrads* grads_out) {
    std::vector<ForwardCache> caches(idx.size());
    std::vector<std::vector<double>> zhat(idx.size());
    std::vector<std::vector<double>> z(idx.size());
    for (std::size_t k = 0; k < idx.size(); ++k) {
        const Pairing& s = samples[idx[k]];
        caches[k] = projector_forward_cached(params, s.capture->h, s.capture->t);
        zhat[k] = caches[k].zhat;
        z[k] = s.trajectory->z;
    }
    NtXentResult nt = nt_xent_loss(zhat, z, tau);
    if (grads_out) {
        for (std::size_t k = 0; k < idx.size(); ++k) {
            BackwardResult b = projector_backward(params, caches[k], nt.zhat_grads[k]);
            grads_out->add_scaled(b.param_grads, 1.0);
        }
    }
    return nt.loss;
}

}  // namespace

TrainResult train_projector(const Dataset& dataset, const TrainConfig& config, int latent_dim,
                            int embed_dim) {
    config.validate();
    if (dataset.samples.empty()) throw data_error("train: empty dataset");

    std::unordered_map<std::int64_t, const TrajectoryRecord*> by_traj;
    for (const auto& tr : dataset.trajectories) by_traj[tr.trajectory_id] = &tr;

    std::vector<Pairing> samples;
    samples.reserve(dataset.samples.size());
    for (const auto& cap : dataset.samples) {
        auto it = by_traj.find(cap.trajectory_id);
        if (it == by_traj.end()) throw data_error("train: capture record without trajectory");
        samples.push_back({&cap, it->second});
    }

    // Deterministic split: shuffled indices, validation head.
    std::vector<std::size_t> order(samples.size());
    std::iota(order.begin(), order.end(), 0);
    SeqRng split_rng(config.seed, "train-split");
    split_rng.shuffle(order);
    std::size_t n_val = static_cast<std::size_t>(
        std::round(config.validation_fraction * static_cast<double>(samples.size())));
    n_val = std::clamp<std::size_t>(n_val, 1, samples.size() - 1);
    std::vector<std::size_t> val_idx(order.begin(), order.begin() + n_val);
    std::vector<std::size_t> train_idx(order.begin() + n_val, order.end());
    if (train_idx.size() < 2) throw data_error("train: not enough samples to form a batch");

    ProjectorParams params =
        init_projector(latent_dim, embed_dim, config.hidden, config.time_embed_dim, config.seed);

    auto val_cosine = [&](const ProjectorParams& p) {
        double s = 0.0;
        for (std::size_t i : val_idx) {
            const auto zhat = projector_forward(p, samples[i].capture->h, samples[i].capture->t);
            s += cosine_sim(zhat, samples[i].trajectory->z);
        }
        return s / static_cast<double>(val_idx.size());
    };
    auto full_train_loss = [&](const ProjectorParams& p) {
        // Mean per-sample loss over the training batches, no updates.
        double total = 0.0;
        std::size_t counted = 0;
        for (std::size_t start = 0; start < train_idx.size(); start += config.batch_size) {
            const std::size_t end = std::min(train_idx.size(), start + config.batch_size);
            if (end - start < 2) continue;
            std::span<const std::size_t> idx(train_idx.data() + start, end - start);
            total += batch_pass(p, samples, idx, config.tau, nullptr) * double(end - start);
            counted += end - start;
        }
        return total / static_cast<double>(counted);
    };

    TrainResult result;
    result.log.push_back({0, full_train_loss(params), val_cosine(params)});
    result.params = params;
    result.best_epoch = 0;
    result.best_val_cosine = result.log.back().val_cosine;

    AdamState adam;
    adam.m = ProjectorGrads::zeros_like(params);
    adam.v = ProjectorGrads::zeros_like(params);

    int stale_epochs = 0;
    for (int epoch = 1; epoch <= config.epochs; ++epoch) {
        SeqRng epoch_rng(stream_key(config.seed, fnv1a64("train-epoch"), epoch));
        epoch_rng.shuffle(train_idx);

        double loss_sum = 0.0;
        std::size_t loss_count = 0;
        for (std::size_t start = 0; start < train_idx.size(); start += config.batch_size) {
            const std::size_t end = std::min(train_idx.size(), start + config.batch_size);
            if (end - start < 2) continue;  // a 1-sample tail has no negatives
            std::span<const std::size_t> idx(train_idx.data() + start, end - start);
            ProjectorGrads grads = ProjectorGrads::zeros_like(params);
            const double loss = batch_pass(params, samples, idx, config.tau, &grads);
            adam_update(params, adam, grads, config.learning_rate);
            loss_sum += loss * double(end - start);
            loss_count += end - start;
        }

        const double vc = val_cosine(params);
        result.log.push_back({epoch, loss_sum / static_cast<double>(loss_count), vc});

        if (vc > result.best_val_cosine) {
            result.best_val_cosine = vc;
            result.best_epoch = epoch;
            result.params = params;
            stale_epochs = 0;
        } else {
            ++stale_epochs;
            if (stale_epochs > config.patience) break;
        }
    }
    return result;
}

}  // namespace selfdebias
