#include "expcast/similarity.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "expcast/errors.hpp"

namespace expcast {

std::vector<std::string> feature_field_names(std::size_t autocorr_depth) {
    std::vector<std::string> names = {"mean", "standard deviation", "trend slope"};
    for (std::size_t k = 1; k <= autocorr_depth; ++k) {
        names.push_back("lag-" + std::to_string(k) + " autocorrelation");
    }
    names.push_back("minimum");
    names.push_back("maximum");
    names.push_back("skewness");
    return names;
}

namespace {

double pearson_lag_correlation(const std::vector<double>& x, std::size_t lag) {
    const std::size_t n = x.size();
    if (lag >= n) return 0.0;
    const std::size_t m = n - lag;
    if (m < 2) return 0.0;
    double ma = 0.0, mb = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        ma += x[i];
        mb += x[i + lag];
    }
    ma /= static_cast<double>(m);
    mb /= static_cast<double>(m);
    double cov = 0.0, va = 0.0, vb = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        const double da = x[i] - ma;
        const double db = x[i + lag] - mb;
        cov += da * db;
        va += da * da;
        vb += db * db;
    }
    if (va <= 0.0 || vb <= 0.0) return 0.0;  // degenerate-variance convention
    double r = cov / std::sqrt(va * vb);
    return std::clamp(r, -1.0, 1.0);
}

} // namespace

FeatureVector extract_features(const std::vector<double>& x, std::size_t autocorr_depth) {
    const std::size_t n = x.size();
    if (n < 2) throw ValidationError("extract_features needs at least 2 points");
    if (n <= autocorr_depth) {
        throw ValidationError("extract_features: input length " + std::to_string(n) +
                              " must exceed autocorr depth " + std::to_string(autocorr_depth));
    }

    double mean = 0.0;
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    for (double v : x) {
        mean += v;
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    mean /= static_cast<double>(n);

    double m2 = 0.0, m3 = 0.0;
    for (double v : x) {
        const double d = v - mean;
        m2 += d * d;
        m3 += d * d * d;
    }
    m2 /= static_cast<double>(n);
    m3 /= static_cast<double>(n);
    const double sd = std::sqrt(m2);
    const double skew = sd > 0.0 ? m3 / (sd * sd * sd) : 0.0;

    // OLS slope over (0..n-1, x).
    const double tbar = static_cast<double>(n - 1) / 2.0;
    double sxy = 0.0, sxx = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double dt = static_cast<double>(i) - tbar;
        sxy += dt * (x[i] - mean);
        sxx += dt * dt;
    }
    const double slope = sxx > 0.0 ? sxy / sxx : 0.0;

    FeatureVector fv;
    fv.schema_version = "fv1-p" + std::to_string(autocorr_depth);
    fv.values.reserve(6 + autocorr_depth);
    fv.values.push_back(mean);
    fv.values.push_back(sd);
    fv.values.push_back(slope);
    for (std::size_t k = 1; k <= autocorr_depth; ++k) {
        fv.values.push_back(pearson_lag_correlation(x, k));
    }
    fv.values.push_back(lo);
    fv.values.push_back(hi);
    fv.values.push_back(skew);
    return fv;
}

double cosine_similarity(const FeatureVector& a, const FeatureVector& b, bool clamp_negative) {
    if (a.schema_version != b.schema_version) {
        throw ValidationError("cosine_similarity: schema mismatch (" + a.schema_version + " vs " +
                              b.schema_version + ")");
    }
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.values.size(); ++i) {
        dot += a.values[i] * b.values[i];
        na += a.values[i] * a.values[i];
        nb += b.values[i] * b.values[i];
    }
    if (na == 0.0 || nb == 0.0) return 0.0;  // degenerate convention, not an error
    double c = dot / (std::sqrt(na) * std::sqrt(nb));
    c = std::clamp(c, -1.0, 1.0);
    return clamp_negative ? std::max(c, 0.0) : c;
}

double dtw_distance(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.empty() || b.empty()) throw ValidationError("dtw_distance: inputs must be nonempty");
    const std::size_t n = a.size(), m = b.size();
    const double inf = std::numeric_limits<double>::infinity();
    // Rolling single-row DP over the full (no band) cost matrix.
    std::vector<double> prev(m, inf), cur(m, inf);
    for (std::size_t j = 0; j < m; ++j) {
        const double cost = std::fabs(a[0] - b[j]);
        prev[j] = cost + (j == 0 ? 0.0 : prev[j - 1]);
    }
    for (std::size_t i = 1; i < n; ++i) {
        for (std::size_t j = 0; j < m; ++j) {
            const double cost = std::fabs(a[i] - b[j]);
            double best = prev[j];                                   // insertion
            if (j > 0) best = std::min(best, std::min(cur[j - 1], prev[j - 1]));
            cur[j] = cost + best;
        }
        std::swap(prev, cur);
    }
    return prev[m - 1];
}

double structural_proximity(double dtw, const SimilarityConfig& cfg) {
    if (dtw < 0.0) throw ValidationError("structural_proximity: dtw must be non-negative");
    if (cfg.dtw_tau <= 0.0) throw ValidationError("structural_proximity: dtw_tau must be positive");
    return std::exp(-dtw / cfg.dtw_tau);
}

double combine_similarity(double alpha, double semantic, double structural) {
    const double s = alpha * semantic + (1.0 - alpha) * structural;
    return std::clamp(s, 0.0, 1.0);
}

double composite_similarity(const std::vector<double>& xq,
                            const FeatureVector& fq,
                            const std::vector<double>& xk,
                            const FeatureVector& fk,
                            const SimilarityConfig& cfg) {
    const double semantic = std::clamp(cosine_similarity(fq, fk, cfg.cosine_clamp), 0.0, 1.0);
    const double structural = structural_proximity(dtw_distance(xq, xk), cfg);
    return combine_similarity(cfg.alpha, semantic, structural);
}

double composite_similarity(const std::vector<double>& xq,
                            const std::vector<double>& xk,
                            const SimilarityConfig& cfg) {
    return composite_similarity(xq, extract_features(xq, cfg.autocorr_depth), xk,
                                extract_features(xk, cfg.autocorr_depth), cfg);
}

} // namespace expcast
