#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "selfdebias/numerics.hpp"

namespace selfdebias {

using Points = std::vector<std::vector<double>>;

struct KmeansResult {
    std::vector<int> assignments;
    Points centroids;  // unit norm after convergence
};

KmeansResult kmeans(const Points& points, int k, std::uint64_t seed);

// Mean silhouette over all points; singleton clusters contribute 0.
double silhouette_score(const Points& points, const std::vector<int>& assignments);

struct SelectKResult {
    int k_star = 0;
    std::vector<std::pair<int, double>> table;  // (k, silhouette)
};

SelectKResult select_k(const Points& points, int k_min, int k_max, std::uint64_t seed);

struct SpectralSplitOptions {
    // Cap on the eigenproblem size; larger member sets are subsampled and the
    // remainder assigned to the nearer side centroid. 0 disables the cap.
    std::size_t sample_cap = 384;
    std::uint64_t seed = 0;
};

// Binary partition by the sign of the Fiedler vector of the symmetric
// normalized Laplacian over the shifted-cosine affinity (1 + cos)/2.
// Returns nullopt when the point set is degenerate (all points identical).
std::optional<std::pair<std::vector<int>, std::vector<int>>> spectral_split(
    const Points& points, const SpectralSplitOptions& options = {});

struct DiscoveryConfig {
    int k_min = 2;
    int k_max = 8;
    double s_min_fraction = 0.05;
    int d_max = 3;
    double alpha = 8.0;
    // A stage-2 split must separate this well (silhouette of the 2-way
    // partition) to be kept; stops recursion from carving unstructured noise.
    double split_silhouette_min = 0.15;
    std::size_t spectral_sample_cap = 384;
    int cluster_timestep = 25;  // which captured timestep's projections to cluster
    std::uint64_t seed = 1;

    void validate() const;
};

struct ClusterNode {
    int id = 0;
    int parent = -1;  // -1 for stage-1 roots
    int depth = 0;
    std::vector<int> members;       // indices into the clustered point set
    std::vector<double> centroid;   // normalized mean of member embeddings
};

struct ClusterTree {
    std::vector<ClusterNode> nodes;
    std::vector<int> leaves;  // ordered by (depth, creation order)

    std::size_t leaf_count() const { return leaves.size(); }
    const ClusterNode& leaf(std::size_t i) const { return nodes[leaves[i]]; }
    Points leaf_centroids() const;
    std::vector<int> leaf_depths() const;
    // leaf index for every clustered point
    std::vector<int> leaf_assignments(std::size_t n_points) const;
};

ClusterTree build_cluster_tree(const Points& points, const DiscoveryConfig& config);

// Plain k-means packaged as a one-level tree; the comparison baseline.
ClusterTree flat_baseline(const Points& points, int k, std::uint64_t seed);

struct DiscoveryResult {
    ClusterTree tree;
    int k_star = 0;
    std::vector<std::pair<int, double>> silhouette_table;
    bool low_confidence = false;  // max silhouette < 0.15: no clear structure
};

DiscoveryResult discover_modes(const Points& points, const DiscoveryConfig& config);

// Temperature-scaled softmax over cosine similarities to the leaf centroids.
ProbVector soft_assign(std::span<const double> zhat, const Points& leaf_centroids, double alpha);

ProbVector batch_distribution(const std::vector<ProbVector>& assignments);

struct TargetDistribution {
    ProbVector probs;
    enum class Kind { kDepthWeightedUniform, kCustom } kind = Kind::kDepthWeightedUniform;
};

// Default: leaf j weighted by 1/(depth_j + 1), normalized. A custom vector
// overrides the weighting entirely.
TargetDistribution target_distribution(const ClusterTree& tree,
                                       const std::optional<ProbVector>& custom = std::nullopt);

}  // namespace selfdebias
