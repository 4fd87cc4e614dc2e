#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "expcast/similarity.hpp"

namespace expcast {

enum class MemoryKind { pattern, wisdom_pos, wisdom_neg, law };
enum class Phase { train, test };

std::string to_string(MemoryKind k);
MemoryKind memory_kind_from_string(const std::string& s);

// One persisted experience record. Confidence is the only field the test
// phase may touch.
struct MemoryEntry {
    std::uint64_t id = 0;
    MemoryKind kind = MemoryKind::pattern;
    std::vector<double> anchor_series;   // the lookback the entry was derived from
    std::string summary_text;
    FeatureVector features;
    std::uint64_t confidence = 0;
    Phase created_phase = Phase::train;
};

enum class LawType { non_negativity, range, max_step };
enum class StepReference { vs_last_observation, vs_previous_prediction };

std::string to_string(LawType t);
std::string to_string(StepReference r);

// A compiled, machine-checkable constraint on predictions.
struct GeneralLaw {
    std::uint64_t id = 0;
    LawType law_type = LawType::non_negativity;
    double range_lo = 0.0;
    double range_hi = 0.0;
    double step_limit = 0.0;
    StepReference step_reference = StepReference::vs_last_observation;
    std::string description_text;
};

struct RetrievalResult {
    std::uint64_t entry_id = 0;
    double similarity = 0.0;      // composite S in [0, 1]
    double adjusted_score = 0.0;  // S + beta * ln(1 + confidence)
    std::size_t rank = 0;
};

enum class FilterTier { replace, merge, insert };

// Tier boundaries follow strict/weak inequalities: S* > 0.95 replaces,
// 0.8 < S* <= 0.95 merges, S* <= 0.8 inserts as new.
FilterTier classify_filter_tier(double s_star);

struct WisdomOutcome {
    FilterTier tier = FilterTier::insert;
    std::uint64_t entry_id = 0;
    double s_star = 0.0;  // 0 when the store had no same-kind entries
};

// Fuses two overlapping wisdom texts into one; typically LLM-backed.
using FusionCallback = std::function<std::string(const std::string&, const std::string&)>;

// Hierarchical memory: pattern/wisdom entries plus compiled general laws.
// Ids are store-wide unique and strictly increasing in insertion order.
// Single-writer contract: concurrent reads are fine, writes are not.
class MemoryStore {
public:
    explicit MemoryStore(SimilarityConfig cfg = {});

    Phase phase() const { return phase_; }
    void set_phase(Phase p) { phase_ = p; }

    const SimilarityConfig& similarity_config() const { return similarity_; }
    void set_similarity_config(const SimilarityConfig& cfg) { similarity_ = cfg; }

    std::uint64_t insert_pattern(std::vector<double> anchor_series,
                                 std::string summary_text,
                                 FeatureVector features);

    // Runs the candidate through the replace/merge/preserve filter against
    // same-kind entries. A failing (or missing) fusion callback degrades the
    // merge tier to a plain insert with a warning.
    WisdomOutcome insert_wisdom_filtered(MemoryKind kind,
                                         std::vector<double> anchor_series,
                                         std::string summary_text,
                                         FeatureVector features,
                                         const FusionCallback& fuse);

    std::uint64_t insert_law(GeneralLaw law);

    // Top-k same-kind entries by adjusted_score = S + beta*ln(1+confidence),
    // ties broken by ascending id. Empty store yields an empty list.
    std::vector<RetrievalResult> retrieve(const std::vector<double>& query,
                                          MemoryKind kind,
                                          std::size_t k,
                                          double beta) const;

    void bump_confidence(const std::vector<std::uint64_t>& ids);

    const std::vector<MemoryEntry>& entries() const { return entries_; }
    const std::vector<GeneralLaw>& laws() const { return laws_; }
    const MemoryEntry& entry(std::uint64_t id) const;

    std::size_t count(MemoryKind kind) const;

    // FNV digest of all immutable content (ids, kinds, anchors, texts, laws).
    // Confidence is included only when requested; the test stream must leave
    // the exclude-confidence digest untouched.
    std::uint64_t content_digest(bool include_confidence) const;

    void persist(const std::string& path) const;
    static MemoryStore load(const std::string& path);

private:
    std::uint64_t next_id();
    void require_train_phase(const char* op) const;

    SimilarityConfig similarity_;
    Phase phase_ = Phase::train;
    std::uint64_t next_id_ = 0;
    std::vector<MemoryEntry> entries_;
    std::vector<GeneralLaw> laws_;
};

} // namespace expcast
