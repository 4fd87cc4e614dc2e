#include "expcast/memory.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <json.hpp>

#include "expcast/errors.hpp"
#include "expcast/util.hpp"

namespace expcast {

using nlohmann::json;

namespace {
constexpr const char* kSchemaVersion = "mem1";
}

std::string to_string(MemoryKind k) {
    switch (k) {
        case MemoryKind::pattern: return "pattern";
        case MemoryKind::wisdom_pos: return "wisdom_pos";
        case MemoryKind::wisdom_neg: return "wisdom_neg";
        case MemoryKind::law: return "law";
    }
    return "pattern";
}

MemoryKind memory_kind_from_string(const std::string& s) {
    if (s == "pattern") return MemoryKind::pattern;
    if (s == "wisdom_pos") return MemoryKind::wisdom_pos;
    if (s == "wisdom_neg") return MemoryKind::wisdom_neg;
    if (s == "law") return MemoryKind::law;
    throw ParseError("unknown memory kind: " + s);
}

std::string to_string(LawType t) {
    switch (t) {
        case LawType::non_negativity: return "non_negativity";
        case LawType::range: return "range";
        case LawType::max_step: return "max_step";
    }
    return "non_negativity";
}

std::string to_string(StepReference r) {
    return r == StepReference::vs_last_observation ? "vs_last_observation" : "vs_previous_prediction";
}

FilterTier classify_filter_tier(double s_star) {
    if (s_star > 0.95) return FilterTier::replace;
    if (s_star > 0.8) return FilterTier::merge;
    return FilterTier::insert;
}

MemoryStore::MemoryStore(SimilarityConfig cfg) : similarity_(cfg) {}

std::uint64_t MemoryStore::next_id() { return next_id_++; }

void MemoryStore::require_train_phase(const char* op) const {
    if (phase_ != Phase::train) {
        throw ValidationError(std::string("train/test separation: ") + op +
                              " is forbidden during the test phase");
    }
}

std::uint64_t MemoryStore::insert_pattern(std::vector<double> anchor_series,
                                          std::string summary_text,
                                          FeatureVector features) {
    require_train_phase("insert_pattern");
    if (anchor_series.empty()) throw ValidationError("insert_pattern: anchor_series is empty");
    if (summary_text.empty()) throw ValidationError("insert_pattern: summary_text is empty");
    MemoryEntry e;
    e.id = next_id();
    e.kind = MemoryKind::pattern;
    e.anchor_series = std::move(anchor_series);
    e.summary_text = std::move(summary_text);
    e.features = std::move(features);
    e.confidence = 0;
    e.created_phase = Phase::train;
    entries_.push_back(std::move(e));
    return entries_.back().id;
}

WisdomOutcome MemoryStore::insert_wisdom_filtered(MemoryKind kind,
                                                  std::vector<double> anchor_series,
                                                  std::string summary_text,
                                                  FeatureVector features,
                                                  const FusionCallback& fuse) {
    require_train_phase("insert_wisdom_filtered");
    if (kind != MemoryKind::wisdom_pos && kind != MemoryKind::wisdom_neg) {
        throw ValidationError("insert_wisdom_filtered: kind must be wisdom_pos or wisdom_neg");
    }
    if (anchor_series.empty()) throw ValidationError("insert_wisdom_filtered: anchor_series is empty");

    // Max composite similarity against existing same-kind entries, ties to lowest id.
    MemoryEntry* best = nullptr;
    double s_star = 0.0;
    for (auto& e : entries_) {
        if (e.kind != kind) continue;
        const double s = composite_similarity(anchor_series, features, e.anchor_series, e.features,
                                              similarity_);
        if (!best || s > s_star) {
            best = &e;
            s_star = s;
        }
    }

    WisdomOutcome out;
    out.s_star = best ? s_star : 0.0;
    out.tier = best ? classify_filter_tier(s_star) : FilterTier::insert;

    if (out.tier == FilterTier::replace) {
        best->anchor_series = std::move(anchor_series);
        best->summary_text = std::move(summary_text);
        best->features = std::move(features);
        best->confidence = 0;  // new content has no track record
        out.entry_id = best->id;
        return out;
    }

    if (out.tier == FilterTier::merge) {
        std::string merged;
        bool fused = false;
        if (fuse) {
            try {
                merged = fuse(best->summary_text, summary_text);
                fused = !merged.empty();
            } catch (const std::exception& ex) {
                log_warn(std::string("wisdom fusion failed (") + ex.what() +
                         "); preserving candidate as new entry");
            }
        } else {
            log_warn("wisdom fusion callback unavailable; preserving candidate as new entry");
        }
        if (fused) {
            best->summary_text = std::move(merged);
            out.entry_id = best->id;
            return out;
        }
        out.tier = FilterTier::insert;  // degraded mode
    }

    MemoryEntry e;
    e.id = next_id();
    e.kind = kind;
    e.anchor_series = std::move(anchor_series);
    e.summary_text = std::move(summary_text);
    e.features = std::move(features);
    e.confidence = 0;
    e.created_phase = Phase::train;
    entries_.push_back(std::move(e));
    out.entry_id = entries_.back().id;
    return out;
}

std::uint64_t MemoryStore::insert_law(GeneralLaw law) {
    require_train_phase("insert_law");
    if (law.law_type == LawType::range && law.range_lo > law.range_hi) {
        throw ValidationError("insert_law: range lo > hi");
    }
    if (law.law_type == LawType::max_step && law.step_limit <= 0.0) {
        throw ValidationError("insert_law: max_step limit must be positive");
    }
    law.id = next_id();
    laws_.push_back(std::move(law));
    return laws_.back().id;
}

std::vector<RetrievalResult> MemoryStore::retrieve(const std::vector<double>& query,
                                                   MemoryKind kind,
                                                   std::size_t k,
                                                   double beta) const {
    if (k == 0) throw ValidationError("retrieve: k must be >= 1");
    std::vector<RetrievalResult> scored;
    FeatureVector fq;
    bool have_fq = false;
    for (const auto& e : entries_) {
        if (e.kind != kind) continue;
        if (!have_fq) {
            fq = extract_features(query, similarity_.autocorr_depth);
            have_fq = true;
        }
        RetrievalResult r;
        r.entry_id = e.id;
        r.similarity = composite_similarity(query, fq, e.anchor_series, e.features, similarity_);
        const double bonus = e.confidence > 0
                                 ? beta * std::log1p(static_cast<double>(e.confidence))
                                 : 0.0;
        r.adjusted_score = r.similarity + bonus;
        scored.push_back(r);
    }
    std::sort(scored.begin(), scored.end(), [](const RetrievalResult& a, const RetrievalResult& b) {
        if (a.adjusted_score != b.adjusted_score) return a.adjusted_score > b.adjusted_score;
        return a.entry_id < b.entry_id;
    });
    if (scored.size() > k) scored.resize(k);
    for (std::size_t i = 0; i < scored.size(); ++i) scored[i].rank = i;
    return scored;
}

void MemoryStore::bump_confidence(const std::vector<std::uint64_t>& ids) {
    for (std::uint64_t id : ids) {
        auto it = std::find_if(entries_.begin(), entries_.end(),
                               [id](const MemoryEntry& e) { return e.id == id; });
        if (it == entries_.end()) {
            throw ValidationError("bump_confidence: unknown entry id " + std::to_string(id));
        }
        it->confidence += 1;
    }
}

const MemoryEntry& MemoryStore::entry(std::uint64_t id) const {
    auto it = std::find_if(entries_.begin(), entries_.end(),
                           [id](const MemoryEntry& e) { return e.id == id; });
    if (it == entries_.end()) throw ValidationError("unknown entry id " + std::to_string(id));
    return *it;
}

std::size_t MemoryStore::count(MemoryKind kind) const {
    if (kind == MemoryKind::law) return laws_.size();
    return static_cast<std::size_t>(
        std::count_if(entries_.begin(), entries_.end(),
                      [kind](const MemoryEntry& e) { return e.kind == kind; }));
}

std::uint64_t MemoryStore::content_digest(bool include_confidence) const {
    std::string blob;
    for (const auto& e : entries_) {
        blob += std::to_string(e.id) + "|" + to_string(e.kind) + "|" + e.summary_text + "|";
        for (double v : e.anchor_series) blob += fmt4(v) + ",";
        if (include_confidence) blob += "|c=" + std::to_string(e.confidence);
        blob += "\n";
    }
    for (const auto& l : laws_) {
        blob += std::to_string(l.id) + "|" + to_string(l.law_type) + "|" + fmt4(l.range_lo) + "|" +
                fmt4(l.range_hi) + "|" + fmt4(l.step_limit) + "|" + to_string(l.step_reference) +
                "|" + l.description_text + "\n";
    }
    return fnv1a64(blob);
}

namespace {

json entry_to_json(const MemoryEntry& e) {
    json j;
    j["record"] = "entry";
    j["id"] = e.id;
    j["kind"] = to_string(e.kind);
    j["anchor"] = e.anchor_series;
    j["summary"] = e.summary_text;
    j["features"] = e.features.values;
    j["feature_schema"] = e.features.schema_version;
    j["confidence"] = e.confidence;
    j["created_phase"] = e.created_phase == Phase::train ? "train" : "test";
    return j;
}

json law_to_json(const GeneralLaw& l) {
    json j;
    j["record"] = "law";
    j["id"] = l.id;
    j["law_type"] = to_string(l.law_type);
    if (l.law_type == LawType::range) {
        j["lo"] = l.range_lo;
        j["hi"] = l.range_hi;
    } else if (l.law_type == LawType::max_step) {
        j["limit"] = l.step_limit;
        j["reference"] = to_string(l.step_reference);
    }
    j["description"] = l.description_text;
    return j;
}

MemoryEntry entry_from_json(const json& j) {
    MemoryEntry e;
    e.id = j.at("id").get<std::uint64_t>();
    e.kind = memory_kind_from_string(j.at("kind").get<std::string>());
    e.anchor_series = j.at("anchor").get<std::vector<double>>();
    e.summary_text = j.at("summary").get<std::string>();
    e.features.values = j.at("features").get<std::vector<double>>();
    e.features.schema_version = j.at("feature_schema").get<std::string>();
    e.confidence = j.at("confidence").get<std::uint64_t>();
    e.created_phase = j.at("created_phase").get<std::string>() == "test" ? Phase::test : Phase::train;
    return e;
}

GeneralLaw law_from_json(const json& j) {
    GeneralLaw l;
    l.id = j.at("id").get<std::uint64_t>();
    const std::string t = j.at("law_type").get<std::string>();
    if (t == "non_negativity") {
        l.law_type = LawType::non_negativity;
    } else if (t == "range") {
        l.law_type = LawType::range;
        l.range_lo = j.at("lo").get<double>();
        l.range_hi = j.at("hi").get<double>();
    } else if (t == "max_step") {
        l.law_type = LawType::max_step;
        l.step_limit = j.at("limit").get<double>();
        l.step_reference = j.at("reference").get<std::string>() == "vs_previous_prediction"
                               ? StepReference::vs_previous_prediction
                               : StepReference::vs_last_observation;
    } else {
        throw ParseError("unknown law_type: " + t);
    }
    l.description_text = j.value("description", "");
    return l;
}

} // namespace

void MemoryStore::persist(const std::string& path) const {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw ValidationError("cannot open memory file for writing: " + path);

    json header;
    header["record"] = "header";
    header["schema_version"] = kSchemaVersion;
    header["dtw_tau"] = similarity_.dtw_tau;
    header["alpha"] = similarity_.alpha;
    header["cosine_clamp"] = similarity_.cosine_clamp;
    header["autocorr_depth"] = similarity_.autocorr_depth;
    header["next_id"] = next_id_;
    out << header.dump() << "\n";

    // One record per line, merged across entries and laws in id order.
    std::size_t ei = 0, li = 0;
    while (ei < entries_.size() || li < laws_.size()) {
        const bool take_entry =
            li >= laws_.size() || (ei < entries_.size() && entries_[ei].id < laws_[li].id);
        if (take_entry) {
            out << entry_to_json(entries_[ei++]).dump() << "\n";
        } else {
            out << law_to_json(laws_[li++]).dump() << "\n";
        }
    }
    if (!out) throw ValidationError("failed while writing memory file: " + path);
}

MemoryStore MemoryStore::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open memory file: " + path);

    MemoryStore store;
    std::string line;
    std::size_t line_no = 0;
    bool saw_header = false;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& ex) {
            throw ParseError("memory file " + path + " line " + std::to_string(line_no) + ": " +
                             ex.what());
        }
        try {
            const std::string record = j.at("record").get<std::string>();
            if (record == "header") {
                SimilarityConfig cfg;
                cfg.dtw_tau = j.at("dtw_tau").get<double>();
                cfg.alpha = j.at("alpha").get<double>();
                cfg.cosine_clamp = j.value("cosine_clamp", true);
                cfg.autocorr_depth = j.value("autocorr_depth", std::size_t{3});
                store.similarity_ = cfg;
                store.next_id_ = j.value("next_id", std::uint64_t{0});
                saw_header = true;
            } else if (record == "entry") {
                store.entries_.push_back(entry_from_json(j));
            } else if (record == "law") {
                store.laws_.push_back(law_from_json(j));
            } else {
                throw ParseError("unknown record type: " + record);
            }
        } catch (const json::exception& ex) {
            throw ParseError("memory file " + path + " line " + std::to_string(line_no) + ": " +
                             ex.what());
        }
    }
    if (!saw_header) {
        throw ParseError("memory file " + path + " line 1: missing header record");
    }
    // next_id must clear every persisted id even with an older header.
    for (const auto& e : store.entries_) store.next_id_ = std::max(store.next_id_, e.id + 1);
    for (const auto& l : store.laws_) store.next_id_ = std::max(store.next_id_, l.id + 1);
    return store;
}

} // namespace expcast
