#pragma once

#include <cstdint>
#include <vector>

namespace expcast {

struct KMeansResult {
    std::vector<std::size_t> assignment;          // point index -> cluster index
    std::vector<std::vector<double>> centroids;   // in z-scored space
    std::size_t clusters = 0;
};

// Lloyd's algorithm on z-scored points with fixed-seed initialization.
// Deterministic for a given (points, k, seed); k is capped at the point count.
KMeansResult kmeans_zscore(const std::vector<std::vector<double>>& points,
                           std::size_t k,
                           std::uint64_t seed,
                           std::size_t max_iterations = 64);

// For each cluster, up to `per_cluster` member indices nearest its centroid
// (ordered by distance, then index). Concatenated cluster by cluster.
std::vector<std::size_t> representatives_near_centroids(
    const std::vector<std::vector<double>>& points,
    const KMeansResult& result,
    std::size_t per_cluster);

} // namespace expcast
