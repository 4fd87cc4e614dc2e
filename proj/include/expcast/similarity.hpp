#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace expcast {

// Fixed-order statistical descriptors of one raw window:
//   [mean, std, slope, lag-1..lag-p autocorr, min, max, skewness].
struct FeatureVector {
    std::vector<double> values;
    std::string schema_version;

    double mean() const { return values[0]; }
    double stddev() const { return values[1]; }
    double slope() const { return values[2]; }
    double autocorr(std::size_t lag) const { return values[2 + lag]; }
    double min() const { return values[values.size() - 3]; }
    double max() const { return values[values.size() - 2]; }
    double skewness() const { return values.back(); }
    std::size_t autocorr_depth() const { return values.size() - 6; }
};

// Field names in schema order, for textualization and prompts.
std::vector<std::string> feature_field_names(std::size_t autocorr_depth);

struct SimilarityConfig {
    double alpha = 0.5;          // weight of the semantic (cosine) term
    double dtw_tau = 1.0;        // DTW scale; calibrated at accumulation time
    bool cosine_clamp = true;    // clamp negative cosine to 0
    std::size_t autocorr_depth = 3;
};

// Deterministic descriptors. Slope is the OLS fit over (index, value);
// lag-k autocorrelation is the Pearson correlation of the lag-k pairs, so a
// perfectly alternating series scores exactly -1. Degenerate variance
// (constant input) yields 0 for std-dependent fields.
FeatureVector extract_features(const std::vector<double>& x, std::size_t autocorr_depth = 3);

// Standard cosine; both-zero inputs are defined as 0. With clamp on,
// negatives collapse to 0 so the score lives in [0, 1].
double cosine_similarity(const FeatureVector& a, const FeatureVector& b, bool clamp_negative = true);

// Classical full-window DTW with |a-b| local cost; returns total alignment cost.
double dtw_distance(const std::vector<double>& a, const std::vector<double>& b);

// exp(-dtw / tau): 1 iff dtw == 0, strictly decreasing in dtw.
double structural_proximity(double dtw, const SimilarityConfig& cfg);

// alpha * semantic + (1 - alpha) * structural, result clamped into [0, 1].
double combine_similarity(double alpha, double semantic, double structural);

// Full composite score of two raw windows. The cosine term is clamped into [0, 1]
// before mixing so the result is always a valid [0, 1] score.
double composite_similarity(const std::vector<double>& xq,
                            const std::vector<double>& xk,
                            const SimilarityConfig& cfg);

// Same, but reuses a precomputed feature vector for the query side.
double composite_similarity(const std::vector<double>& xq,
                            const FeatureVector& fq,
                            const std::vector<double>& xk,
                            const FeatureVector& fk,
                            const SimilarityConfig& cfg);

} // namespace expcast
