#include "expcast/kmeans.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "expcast/errors.hpp"

namespace expcast {

namespace {

std::vector<std::vector<double>> zscore(const std::vector<std::vector<double>>& points) {
    const std::size_t n = points.size();
    const std::size_t d = points[0].size();
    std::vector<double> mean(d, 0.0), sd(d, 0.0);
    for (const auto& p : points) {
        for (std::size_t j = 0; j < d; ++j) mean[j] += p[j];
    }
    for (double& m : mean) m /= static_cast<double>(n);
    for (const auto& p : points) {
        for (std::size_t j = 0; j < d; ++j) {
            const double dv = p[j] - mean[j];
            sd[j] += dv * dv;
        }
    }
    for (double& s : sd) s = std::sqrt(s / static_cast<double>(n));
    std::vector<std::vector<double>> z(n, std::vector<double>(d, 0.0));
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < d; ++j) {
            z[i][j] = sd[j] > 0.0 ? (points[i][j] - mean[j]) / sd[j] : 0.0;
        }
    }
    return z;
}

double sq_dist(const std::vector<double>& a, const std::vector<double>& b) {
    double acc = 0.0;
    for (std::size_t j = 0; j < a.size(); ++j) {
        const double d = a[j] - b[j];
        acc += d * d;
    }
    return acc;
}

} // namespace

KMeansResult kmeans_zscore(const std::vector<std::vector<double>>& points,
                           std::size_t k,
                           std::uint64_t seed,
                           std::size_t max_iterations) {
    if (points.empty()) throw ValidationError("kmeans: no points");
    if (k == 0) throw ValidationError("kmeans: k must be >= 1");
    const std::size_t n = points.size();
    k = std::min(k, n);

    const auto z = zscore(points);
    const std::size_t d = z[0].size();

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(seed);
    std::shuffle(order.begin(), order.end(), rng);

    KMeansResult result;
    result.clusters = k;
    result.centroids.assign(k, std::vector<double>(d, 0.0));
    for (std::size_t c = 0; c < k; ++c) result.centroids[c] = z[order[c]];
    result.assignment.assign(n, 0);

    for (std::size_t iter = 0; iter < max_iterations; ++iter) {
        bool changed = false;
        for (std::size_t i = 0; i < n; ++i) {
            std::size_t best = 0;
            double best_d = std::numeric_limits<double>::infinity();
            for (std::size_t c = 0; c < k; ++c) {
                const double dist = sq_dist(z[i], result.centroids[c]);
                if (dist < best_d) {
                    best_d = dist;
                    best = c;
                }
            }
            if (result.assignment[i] != best) {
                result.assignment[i] = best;
                changed = true;
            }
        }
        std::vector<std::vector<double>> sums(k, std::vector<double>(d, 0.0));
        std::vector<std::size_t> counts(k, 0);
        for (std::size_t i = 0; i < n; ++i) {
            ++counts[result.assignment[i]];
            for (std::size_t j = 0; j < d; ++j) sums[result.assignment[i]][j] += z[i][j];
        }
        for (std::size_t c = 0; c < k; ++c) {
            if (counts[c] == 0) continue;  // empty cluster keeps its previous centroid
            for (std::size_t j = 0; j < d; ++j) {
                result.centroids[c][j] = sums[c][j] / static_cast<double>(counts[c]);
            }
        }
        if (!changed && iter > 0) break;
    }

    // Re-derive final assignments against converged centroids for stability.
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t best = 0;
        double best_d = std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < k; ++c) {
            const double dist = sq_dist(z[i], result.centroids[c]);
            if (dist < best_d) {
                best_d = dist;
                best = c;
            }
        }
        result.assignment[i] = best;
    }
    return result;
}

std::vector<std::size_t> representatives_near_centroids(
    const std::vector<std::vector<double>>& points,
    const KMeansResult& result,
    std::size_t per_cluster) {
    const auto z = zscore(points);
    std::vector<std::size_t> out;
    for (std::size_t c = 0; c < result.clusters; ++c) {
        std::vector<std::pair<double, std::size_t>> members;
        for (std::size_t i = 0; i < points.size(); ++i) {
            if (result.assignment[i] == c) {
                members.emplace_back(sq_dist(z[i], result.centroids[c]), i);
            }
        }
        std::sort(members.begin(), members.end());
        for (std::size_t i = 0; i < members.size() && i < per_cluster; ++i) {
            out.push_back(members[i].second);
        }
    }
    return out;
}

} // namespace expcast
