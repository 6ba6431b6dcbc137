#include "selfdebias/discovery.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <numeric>

#include "selfdebias/errors.hpp"
#include "selfdebias/rng.hpp"

namespace selfdebias {

namespace {

void check_points(const Points& points) {
    if (points.empty()) throw data_error("clustering: empty point set");
    const std::size_t d = points.front().size();
    for (const auto& p : points) {
        if (p.size() != d) throw dimension_error("clustering: inconsistent point dimensions");
        if (!all_finite(p)) throw numerical_error("clustering: non-finite point");
    }
}

// Full pairwise Euclidean distance matrix.
DenseMatrix distance_matrix(const Points& points) {
    const std::size_t n = points.size();
    DenseMatrix d(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            const double dist = std::sqrt(squared_distance(points[i], points[j]));
            d(i, j) = dist;
            d(j, i) = dist;
        }
    }
    return d;
}

double silhouette_from_distances(const DenseMatrix& dist, const std::vector<int>& assignments,
                                 const std::vector<int>& subset, int n_clusters) {
    std::vector<std::size_t> cluster_size(n_clusters, 0);
    for (int idx : subset) ++cluster_size[assignments[idx]];
    for (int c = 0; c < n_clusters; ++c)
        if (cluster_size[c] == 0) throw data_error("silhouette: empty cluster");
    if (n_clusters < 2) throw data_error("silhouette: need at least 2 clusters");

    double total = 0.0;
    std::vector<double> sums(n_clusters);
    for (int i : subset) {
        const int own = assignments[i];
        if (cluster_size[own] == 1) continue;  // singleton scores 0
        std::fill(sums.begin(), sums.end(), 0.0);
        for (int j : subset) {
            if (j == i) continue;
            sums[assignments[j]] += dist(i, j);
        }
        const double a = sums[own] / static_cast<double>(cluster_size[own] - 1);
        double b = std::numeric_limits<double>::infinity();
        for (int c = 0; c < n_clusters; ++c) {
            if (c == own) continue;
            b = std::min(b, sums[c] / static_cast<double>(cluster_size[c]));
        }
        const double denom = std::max(a, b);
        total += denom > 0.0 ? (b - a) / denom : 0.0;
    }
    return total / static_cast<double>(subset.size());
}

}  // namespace

KmeansResult kmeans(const Points& points, int k, std::uint64_t seed) {
    check_points(points);
    const std::size_t n = points.size();
    if (k < 2) throw config_error("kmeans: k must be >= 2");
    if (n < static_cast<std::size_t>(k)) throw config_error("kmeans: fewer points than clusters");
    const std::size_t d = points.front().size();

    // k-means++ seeding
    SeqRng rng(stream_key(seed, fnv1a64("kmeans")));
    Points centroids;
    centroids.reserve(k);
    centroids.push_back(points[rng.below(n)]);
    std::vector<double> d2(n);
    for (int c = 1; c < k; ++c) {
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            double best = std::numeric_limits<double>::infinity();
            for (const auto& cen : centroids) best = std::min(best, squared_distance(points[i], cen));
            d2[i] = best;
            total += best;
        }
        std::size_t pick = 0;
        if (total > 0.0) {
            const double target = rng.uniform() * total;
            double acc = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                acc += d2[i];
                if (acc >= target) {
                    pick = i;
                    break;
                }
            }
        } else {
            pick = rng.below(n);
        }
        centroids.push_back(points[pick]);
    }

    std::vector<int> assign(n, -1);
    for (int iter = 0; iter < 300; ++iter) {
        bool changed = false;
        for (std::size_t i = 0; i < n; ++i) {
            int best = 0;
            double best_d = std::numeric_limits<double>::infinity();
            for (int c = 0; c < k; ++c) {
                const double dd = squared_distance(points[i], centroids[c]);
                if (dd < best_d) {
                    best_d = dd;
                    best = c;
                }
            }
            if (assign[i] != best) {
                assign[i] = best;
                changed = true;
            }
        }
        if (!changed) break;

        std::vector<std::size_t> counts(k, 0);
        Points sums(k, std::vector<double>(d, 0.0));
        for (std::size_t i = 0; i < n; ++i) {
            ++counts[assign[i]];
            for (std::size_t j = 0; j < d; ++j) sums[assign[i]][j] += points[i][j];
        }
        for (int c = 0; c < k; ++c) {
            if (counts[c] == 0) {
                // Re-seed an emptied centroid at the point farthest from its
                // current centroid.
                std::size_t far = 0;
                double far_d = -1.0;
                for (std::size_t i = 0; i < n; ++i) {
                    const double dd = squared_distance(points[i], centroids[assign[i]]);
                    if (dd > far_d) {
                        far_d = dd;
                        far = i;
                    }
                }
                centroids[c] = points[far];
            } else {
                for (std::size_t j = 0; j < d; ++j)
                    centroids[c][j] = sums[c][j] / static_cast<double>(counts[c]);
            }
        }
    }

    for (auto& c : centroids) normalize_in_place(c);
    return {std::move(assign), std::move(centroids)};
}

double silhouette_score(const Points& points, const std::vector<int>& assignments) {
    check_points(points);
    if (assignments.size() != points.size())
        throw dimension_error("silhouette: assignment count mismatch");
    const int n_clusters = assignments.empty() ? 0 : *std::max_element(assignments.begin(),
                                                                       assignments.end()) +
                                                         1;
    std::vector<int> subset(points.size());
    std::iota(subset.begin(), subset.end(), 0);
    return silhouette_from_distances(distance_matrix(points), assignments, subset, n_clusters);
}

SelectKResult select_k(const Points& points, int k_min, int k_max, std::uint64_t seed) {
    check_points(points);
    if (k_min < 2 || k_max < k_min) throw config_error("select_k: invalid k range");
    if (points.size() <= static_cast<std::size_t>(k_max))
        throw config_error("select_k: need more points than the largest k");

    const DenseMatrix dist = distance_matrix(points);
    std::vector<int> subset(points.size());
    std::iota(subset.begin(), subset.end(), 0);

    SelectKResult out;
    double best = -std::numeric_limits<double>::infinity();
    for (int k = k_min; k <= k_max; ++k) {
        const auto km = kmeans(points, k, stream_key(seed, fnv1a64("select-k"), k));
        const double score = silhouette_from_distances(dist, km.assignments, subset, k);
        out.table.emplace_back(k, score);
        if (score > best) {  // strict: ties resolve to the smaller k
            best = score;
            out.k_star = k;
        }
    }
    return out;
}

std::optional<std::pair<std::vector<int>, std::vector<int>>> spectral_split(
    const Points& points, const SpectralSplitOptions& options) {
    check_points(points);
    const std::size_t n = points.size();
    if (n < 4) throw data_error("spectral_split: need at least 4 points");

    // Degenerate cloud: every direction coincides, the Fiedler vector carries
    // no information. Report no-split.
    bool identical = true;
    for (std::size_t i = 1; i < n && identical; ++i)
        identical = cosine_sim(points[0], points[i]) >= 1.0 - 1e-12;
    if (identical) return std::nullopt;

    // Subsample large member sets so the eigenproblem stays a few hundred
    // square; everyone else is assigned to the nearer side centroid below.
    std::vector<std::size_t> sample(n);
    std::iota(sample.begin(), sample.end(), 0);
    const bool capped = options.sample_cap > 0 && n > options.sample_cap;
    if (capped) {
        SeqRng rng(stream_key(options.seed, fnv1a64("spectral-sample")));
        rng.shuffle(sample);
        sample.resize(options.sample_cap);
        std::sort(sample.begin(), sample.end());
    }
    const std::size_t m = sample.size();

    DenseMatrix affinity(m, m);
    std::vector<double> degree(m, 0.0);
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = i + 1; j < m; ++j) {
            const double a = 0.5 * (1.0 + cosine_sim(points[sample[i]], points[sample[j]]));
            affinity(i, j) = a;
            affinity(j, i) = a;
            degree[i] += a;
            degree[j] += a;
        }
    }
    for (std::size_t i = 0; i < m; ++i)
        if (degree[i] == 0.0) throw numerical_error("spectral_split: isolated point (zero affinity row)");

    // L = I - D^{-1/2} A D^{-1/2}
    DenseMatrix lap(m, m);
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < m; ++j) {
            lap(i, j) = (i == j ? 1.0 : 0.0) - affinity(i, j) / std::sqrt(degree[i] * degree[j]);
        }
    }

    const EighResult eig = jacobi_eigh(lap);
    std::vector<int> side(n, -1);
    for (std::size_t i = 0; i < m; ++i) {
        const double v = eig.eigenvectors(i, 1);  // Fiedler component
        side[sample[i]] = v >= 0.0 ? 0 : 1;       // zeros join the positive side
    }

    if (capped) {
        const std::size_t d = points.front().size();
        std::vector<double> c0(d, 0.0), c1(d, 0.0);
        std::size_t n0 = 0, n1 = 0;
        for (std::size_t i : sample) {
            auto& c = side[i] == 0 ? c0 : c1;
            (side[i] == 0 ? n0 : n1) += 1;
            for (std::size_t j = 0; j < d; ++j) c[j] += points[i][j];
        }
        if (n0 == 0 || n1 == 0) return std::nullopt;  // sign split collapsed
        for (std::size_t i = 0; i < n; ++i) {
            if (side[i] >= 0) continue;
            double s0 = 0.0, s1 = 0.0;
            for (std::size_t j = 0; j < d; ++j) {
                s0 += points[i][j] * c0[j];
                s1 += points[i][j] * c1[j];
            }
            // Compare cosines to the side means; ties go to side 0.
            side[i] = (s0 / norm2(c0) >= s1 / norm2(c1)) ? 0 : 1;
        }
    }

    std::pair<std::vector<int>, std::vector<int>> parts;
    for (std::size_t i = 0; i < n; ++i)
        (side[i] == 0 ? parts.first : parts.second).push_back(static_cast<int>(i));
    if (parts.first.empty() || parts.second.empty()) return std::nullopt;
    return parts;
}

void DiscoveryConfig::validate() const {
    if (k_min < 2 || k_max < k_min) throw config_error("discovery: invalid k range");
    if (!(s_min_fraction > 0.0 && s_min_fraction < 1.0))
        throw config_error("discovery: s_min_fraction must be in (0, 1)");
    if (d_max < 1) throw config_error("discovery: d_max must be >= 1");
    if (!(alpha > 0.0)) throw config_error("discovery: alpha must be positive");
    if (cluster_timestep < 1) throw config_error("discovery: cluster_timestep must be >= 1");
}

Points ClusterTree::leaf_centroids() const {
    Points out;
    out.reserve(leaves.size());
    for (int id : leaves) out.push_back(nodes[id].centroid);
    return out;
}

std::vector<int> ClusterTree::leaf_depths() const {
    std::vector<int> out;
    out.reserve(leaves.size());
    for (int id : leaves) out.push_back(nodes[id].depth);
    return out;
}

std::vector<int> ClusterTree::leaf_assignments(std::size_t n_points) const {
    std::vector<int> out(n_points, -1);
    for (std::size_t li = 0; li < leaves.size(); ++li)
        for (int idx : nodes[leaves[li]].members) out[idx] = static_cast<int>(li);
    return out;
}

namespace {

std::vector<double> normalized_mean(const Points& points, const std::vector<int>& members) {
    std::vector<double> c(points.front().size(), 0.0);
    for (int idx : members)
        for (std::size_t j = 0; j < c.size(); ++j) c[j] += points[idx][j];
    normalize_in_place(c);
    return c;
}

void order_leaves(ClusterTree& tree) {
    std::vector<int> leaves;
    for (const auto& node : tree.nodes) {
        bool has_child = false;
        for (const auto& other : tree.nodes)
            if (other.parent == node.id) {
                has_child = true;
                break;
            }
        if (!has_child) leaves.push_back(node.id);
    }
    std::sort(leaves.begin(), leaves.end(), [&tree](int a, int b) {
        if (tree.nodes[a].depth != tree.nodes[b].depth)
            return tree.nodes[a].depth < tree.nodes[b].depth;
        return a < b;
    });
    tree.leaves = std::move(leaves);
}

}  // namespace

DiscoveryResult discover_modes(const Points& points, const DiscoveryConfig& config) {
    config.validate();
    check_points(points);
    const std::size_t n = points.size();

    DiscoveryResult result;
    SelectKResult sel = select_k(points, config.k_min, config.k_max, config.seed);
    result.k_star = sel.k_star;
    result.silhouette_table = sel.table;
    double max_sil = -1.0;
    for (const auto& [k, s] : sel.table) max_sil = std::max(max_sil, s);
    result.low_confidence = max_sil < 0.15;

    const auto stage1 = kmeans(points, sel.k_star,
                               stream_key(config.seed, fnv1a64("select-k"), sel.k_star));

    ClusterTree tree;
    std::deque<int> queue;
    for (int c = 0; c < sel.k_star; ++c) {
        ClusterNode node;
        node.id = static_cast<int>(tree.nodes.size());
        node.parent = -1;
        node.depth = 0;
        for (std::size_t i = 0; i < n; ++i)
            if (stage1.assignments[i] == c) node.members.push_back(static_cast<int>(i));
        node.centroid = normalized_mean(points, node.members);
        queue.push_back(node.id);
        tree.nodes.push_back(std::move(node));
    }

    const double s_min = config.s_min_fraction * static_cast<double>(n);
    const DenseMatrix dist = distance_matrix(points);

    while (!queue.empty()) {
        const int id = queue.front();
        queue.pop_front();
        const auto members = tree.nodes[id].members;  // copy: nodes vector may grow
        const int depth = tree.nodes[id].depth;
        if (depth >= config.d_max) continue;
        if (static_cast<double>(members.size()) < s_min) continue;
        if (members.size() < 4) continue;

        Points sub;
        sub.reserve(members.size());
        for (int idx : members) sub.push_back(points[idx]);
        SpectralSplitOptions opt;
        opt.sample_cap = config.spectral_sample_cap;
        opt.seed = stream_key(config.seed, fnv1a64("spectral-node"), id);
        const auto split = spectral_split(sub, opt);
        if (!split) continue;

        // Both children must clear the size floor, and the cut itself must
        // separate better than noise would.
        if (static_cast<double>(split->first.size()) < s_min ||
            static_cast<double>(split->second.size()) < s_min)
            continue;
        std::vector<int> labels(n, 0);
        for (int local : split->second) labels[members[local]] = 1;
        const double split_sil = silhouette_from_distances(dist, labels, members, 2);
        if (split_sil < config.split_silhouette_min) continue;

        for (int childno = 0; childno < 2; ++childno) {
            const auto& locals = childno == 0 ? split->first : split->second;
            ClusterNode child;
            child.id = static_cast<int>(tree.nodes.size());
            child.parent = id;
            child.depth = depth + 1;
            child.members.reserve(locals.size());
            for (int local : locals) child.members.push_back(members[local]);
            child.centroid = normalized_mean(points, child.members);
            queue.push_back(child.id);
            tree.nodes.push_back(std::move(child));
        }
    }

    order_leaves(tree);
    result.tree = std::move(tree);
    return result;
}

ClusterTree build_cluster_tree(const Points& points, const DiscoveryConfig& config) {
    return discover_modes(points, config).tree;
}

ClusterTree flat_baseline(const Points& points, int k, std::uint64_t seed) {
    check_points(points);
    const auto km = kmeans(points, k, seed);
    ClusterTree tree;
    for (int c = 0; c < k; ++c) {
        ClusterNode node;
        node.id = c;
        node.parent = -1;
        node.depth = 0;
        for (std::size_t i = 0; i < points.size(); ++i)
            if (km.assignments[i] == c) node.members.push_back(static_cast<int>(i));
        node.centroid = normalized_mean(points, node.members);
        tree.nodes.push_back(std::move(node));
    }
    order_leaves(tree);
    return tree;
}

ProbVector soft_assign(std::span<const double> zhat, const Points& leaf_centroids, double alpha) {
    if (leaf_centroids.size() < 2) throw config_error("soft_assign: tree has fewer than 2 leaves");
    std::vector<double> scores(leaf_centroids.size());
    for (std::size_t j = 0; j < leaf_centroids.size(); ++j)
        scores[j] = cosine_sim(zhat, leaf_centroids[j]);
    return softmax_scaled(scores, alpha);
}

ProbVector batch_distribution(const std::vector<ProbVector>& assignments) {
    if (assignments.empty()) throw data_error("batch_distribution: empty batch");
    const std::size_t k = assignments.front().size();
    ProbVector out;
    out.probs.assign(k, 0.0);
    for (const auto& a : assignments) {
        if (a.size() != k) throw dimension_error("batch_distribution: mixed assignment lengths");
        for (std::size_t j = 0; j < k; ++j) out.probs[j] += a.probs[j];
    }
    const double inv = 1.0 / static_cast<double>(assignments.size());
    for (double& p : out.probs) p *= inv;
    return out;
}

TargetDistribution target_distribution(const ClusterTree& tree,
                                       const std::optional<ProbVector>& custom) {
    const std::size_t k = tree.leaf_count();
    if (k == 0) throw data_error("target_distribution: tree has no leaves");
    TargetDistribution out;
    if (custom) {
        if (custom->size() != k)
            throw config_error("target_distribution: custom target length mismatch");
        custom->validate();
        out.probs = *custom;
        out.kind = TargetDistribution::Kind::kCustom;
        return out;
    }
    std::vector<double> w(k);
    double sum = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
        w[j] = 1.0 / (tree.leaf(j).depth + 1.0);
        sum += w[j];
    }
    out.probs.probs.resize(k);
    for (std::size_t j = 0; j < k; ++j) out.probs.probs[j] = w[j] / sum;
    out.kind = TargetDistribution::Kind::kDepthWeightedUniform;
    return out;
}

}  // namespace selfdebias
