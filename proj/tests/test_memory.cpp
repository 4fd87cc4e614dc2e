#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <unistd.h>

#include "expcast/errors.hpp"
#include "expcast/memory.hpp"

using namespace expcast;

namespace {

std::vector<double> noisy_series(std::mt19937_64& rng, std::size_t n, double base) {
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    std::vector<double> x(n);
    for (std::size_t i = 0; i < n; ++i) x[i] = base + std::sin(0.3 * double(i)) + dist(rng);
    return x;
}

MemoryStore seeded_store(std::mt19937_64& rng, std::size_t entries) {
    SimilarityConfig cfg;
    cfg.dtw_tau = 5.0;
    MemoryStore store(cfg);
    for (std::size_t i = 0; i < entries; ++i) {
        auto anchor = noisy_series(rng, 12, double(i % 7));
        store.insert_pattern(anchor, "pattern " + std::to_string(i),
                             extract_features(anchor, cfg.autocorr_depth));
    }
    return store;
}

std::string temp_path(const char* name) {
    return std::string("/tmp/expcast_test_") + name + "_" + std::to_string(::getpid());
}

} // namespace

TEST_CASE("insert_pattern assigns monotone ids starting at zero confidence") {
    std::mt19937_64 rng(1);
    MemoryStore store;
    const auto a = noisy_series(rng, 10, 0.0);
    const auto b = noisy_series(rng, 10, 1.0);
    const auto id0 = store.insert_pattern(a, "first", extract_features(a));
    const auto id1 = store.insert_pattern(b, "second", extract_features(b));
    CHECK(id0 == 0);
    CHECK(id1 == 1);
    CHECK(store.entry(id0).confidence == 0);
    CHECK(store.entry(id1).confidence == 0);
    CHECK(store.entry(id0).created_phase == Phase::train);
}

TEST_CASE("test-phase insertion is rejected") {
    std::mt19937_64 rng(2);
    MemoryStore store;
    store.set_phase(Phase::test);
    const auto a = noisy_series(rng, 10, 0.0);
    CHECK_THROWS_WITH_AS(store.insert_pattern(a, "x", extract_features(a)),
                         doctest::Contains("train/test separation"), ValidationError);
    CHECK_THROWS_AS(store.insert_wisdom_filtered(MemoryKind::wisdom_pos, a, "x",
                                                 extract_features(a), nullptr),
                    ValidationError);
    CHECK_THROWS_AS(store.insert_law(GeneralLaw{}), ValidationError);
}

TEST_CASE("filter tiers follow the strict/weak boundaries") {
    CHECK(classify_filter_tier(0.50) == FilterTier::insert);
    CHECK(classify_filter_tier(0.80) == FilterTier::insert);   // exactly 0.8 preserves
    CHECK(classify_filter_tier(0.81) == FilterTier::merge);
    CHECK(classify_filter_tier(0.95) == FilterTier::merge);    // exactly 0.95 merges
    CHECK(classify_filter_tier(0.951) == FilterTier::replace);
    CHECK(classify_filter_tier(0.97) == FilterTier::replace);
}

TEST_CASE("wisdom filtering: empty store inserts, duplicates replace") {
    std::mt19937_64 rng(3);
    SimilarityConfig cfg;
    cfg.dtw_tau = 5.0;
    MemoryStore store(cfg);
    const auto anchor = noisy_series(rng, 16, 2.0);
    const auto fv = extract_features(anchor, cfg.autocorr_depth);

    auto first = store.insert_wisdom_filtered(MemoryKind::wisdom_pos, anchor, "lesson one", fv,
                                              nullptr);
    CHECK(first.tier == FilterTier::insert);

    // Identical anchor: S* = 1 > 0.95, replaces in place and resets confidence.
    store.bump_confidence({first.entry_id});
    auto second = store.insert_wisdom_filtered(MemoryKind::wisdom_pos, anchor, "lesson two", fv,
                                               nullptr);
    CHECK(second.tier == FilterTier::replace);
    CHECK(second.entry_id == first.entry_id);
    CHECK(store.entry(first.entry_id).summary_text == "lesson two");
    CHECK(store.entry(first.entry_id).confidence == 0);
    CHECK(store.count(MemoryKind::wisdom_pos) == 1);
}

TEST_CASE("wisdom filtering compares same-kind entries only") {
    std::mt19937_64 rng(4);
    SimilarityConfig cfg;
    cfg.dtw_tau = 5.0;
    MemoryStore store(cfg);
    const auto anchor = noisy_series(rng, 16, 2.0);
    const auto fv = extract_features(anchor, cfg.autocorr_depth);
    store.insert_wisdom_filtered(MemoryKind::wisdom_pos, anchor, "good lesson", fv, nullptr);
    // The same anchor under the opposite polarity must not replace it.
    auto out = store.insert_wisdom_filtered(MemoryKind::wisdom_neg, anchor, "bad lesson", fv,
                                            nullptr);
    CHECK(out.tier == FilterTier::insert);
    CHECK(store.count(MemoryKind::wisdom_pos) == 1);
    CHECK(store.count(MemoryKind::wisdom_neg) == 1);
}

TEST_CASE("merge tier fuses texts and degrades to insert when fusion fails") {
    // alpha=0 makes similarity purely structural: S = exp(-DTW). A single
    // +0.1 perturbation pins DTW at 0.1, so S ~ 0.905 lands in the merge band.
    SimilarityConfig cfg;
    cfg.alpha = 0.0;
    cfg.dtw_tau = 1.0;
    MemoryStore store(cfg);
    std::vector<double> a = {0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0};
    std::vector<double> b = a;
    b[4] += 0.1;
    const auto fa = extract_features(a, cfg.autocorr_depth);
    const auto fb = extract_features(b, cfg.autocorr_depth);
    const double s = composite_similarity(b, fb, a, fa, cfg);
    REQUIRE(s > 0.8);
    REQUIRE(s <= 0.95);

    store.insert_wisdom_filtered(MemoryKind::wisdom_neg, a, "avoid overshoot", fa, nullptr);

    SUBCASE("fusion callback merges in place") {
        auto out = store.insert_wisdom_filtered(
            MemoryKind::wisdom_neg, b, "avoid drift", fb,
            [](const std::string& x, const std::string& y) { return x + " | " + y; });
        CHECK(out.tier == FilterTier::merge);
        CHECK(store.count(MemoryKind::wisdom_neg) == 1);
        CHECK(store.entry(out.entry_id).summary_text == "avoid overshoot | avoid drift");
    }
    SUBCASE("fusion failure preserves the candidate as new") {
        auto out = store.insert_wisdom_filtered(
            MemoryKind::wisdom_neg, b, "avoid drift", fb,
            [](const std::string&, const std::string&) -> std::string {
                throw TransportError("fusion backend down");
            });
        CHECK(out.tier == FilterTier::insert);
        CHECK(store.count(MemoryKind::wisdom_neg) == 2);
    }
}

TEST_CASE("retrieve with beta=0 equals brute-force sort with id tie-break") {
    std::mt19937_64 rng(5);
    auto store = seeded_store(rng, 120);
    const auto query = noisy_series(rng, 12, 3.0);

    for (const std::size_t k : {1UL, 3UL, 10UL, 200UL}) {
        const auto got = store.retrieve(query, MemoryKind::pattern, k, 0.0);
        // Oracle: score every entry, stable-sort, truncate.
        std::vector<std::pair<double, std::uint64_t>> oracle;
        const auto fq = extract_features(query, store.similarity_config().autocorr_depth);
        for (const auto& e : store.entries()) {
            oracle.emplace_back(
                composite_similarity(query, fq, e.anchor_series, e.features,
                                     store.similarity_config()),
                e.id);
        }
        std::sort(oracle.begin(), oracle.end(), [](const auto& x, const auto& y) {
            if (x.first != y.first) return x.first > y.first;
            return x.second < y.second;
        });
        const std::size_t expect = std::min(k, oracle.size());
        REQUIRE(got.size() == expect);
        for (std::size_t i = 0; i < expect; ++i) {
            CHECK(got[i].entry_id == oracle[i].second);
            CHECK(got[i].similarity == oracle[i].first);
            CHECK(got[i].adjusted_score == oracle[i].first);
            CHECK(got[i].rank == i);
        }
    }
}

TEST_CASE("retrieve honours the confidence bonus monotonically") {
    std::mt19937_64 rng(6);
    auto store = seeded_store(rng, 10);
    const auto query = noisy_series(rng, 12, 3.0);
    const auto before = store.retrieve(query, MemoryKind::pattern, 10, 0.1);
    // Bump one entry far up; its adjusted score must not decrease.
    const auto target_id = before.back().entry_id;
    for (int i = 0; i < 20; ++i) store.bump_confidence({target_id});
    const auto after = store.retrieve(query, MemoryKind::pattern, 10, 0.1);
    double score_before = 0.0, score_after = 0.0;
    for (const auto& r : before) {
        if (r.entry_id == target_id) score_before = r.adjusted_score;
    }
    for (const auto& r : after) {
        if (r.entry_id == target_id) score_after = r.adjusted_score;
    }
    CHECK(score_after > score_before);
}

TEST_CASE("retrieve on an empty or small store") {
    MemoryStore store;
    const std::vector<double> query = {1.0, 2.0, 3.0, 4.0, 5.0};
    CHECK(store.retrieve(query, MemoryKind::pattern, 3, 0.1).empty());
    std::mt19937_64 rng(7);
    auto small = seeded_store(rng, 2);
    CHECK(small.retrieve(query, MemoryKind::pattern, 5, 0.1).size() == 2);
    CHECK_THROWS_AS(small.retrieve(query, MemoryKind::pattern, 0, 0.1), ValidationError);
}

TEST_CASE("bump_confidence increments and leaves content untouched") {
    std::mt19937_64 rng(8);
    auto store = seeded_store(rng, 5);
    const auto before = store.content_digest(/*include_confidence=*/false);
    store.bump_confidence({0, 2});
    CHECK(store.entry(0).confidence == 1);
    CHECK(store.entry(1).confidence == 0);
    CHECK(store.entry(2).confidence == 1);
    CHECK(store.content_digest(false) == before);
    CHECK_THROWS_WITH_AS(store.bump_confidence({999}), doctest::Contains("999"), ValidationError);
}

TEST_CASE("persist/load round trip is an identity") {
    const std::string path = temp_path("memory_roundtrip");

    SUBCASE("empty store") {
        MemoryStore store;
        store.persist(path);
        const auto loaded = MemoryStore::load(path);
        CHECK(loaded.entries().empty());
        CHECK(loaded.laws().empty());
    }

    SUBCASE("populated store with laws and confidences") {
        std::mt19937_64 rng(9);
        SimilarityConfig cfg;
        cfg.dtw_tau = 7.25;
        cfg.alpha = 0.3;
        MemoryStore store(cfg);
        for (int i = 0; i < 3; ++i) {
            auto anchor = noisy_series(rng, 12, double(i));
            store.insert_pattern(anchor, "p" + std::to_string(i),
                                 extract_features(anchor, cfg.autocorr_depth));
        }
        GeneralLaw law;
        law.law_type = LawType::range;
        law.range_lo = 3.1;
        law.range_hi = 12.0;
        law.description_text = "operating range";
        store.insert_law(law);
        store.bump_confidence({1});

        store.persist(path);
        const auto loaded = MemoryStore::load(path);
        CHECK(loaded.similarity_config().dtw_tau == 7.25);
        CHECK(loaded.similarity_config().alpha == 0.3);
        REQUIRE(loaded.entries().size() == 3);
        for (std::size_t i = 0; i < 3; ++i) {
            CHECK(loaded.entries()[i].id == store.entries()[i].id);
            CHECK(loaded.entries()[i].summary_text == store.entries()[i].summary_text);
            CHECK(loaded.entries()[i].anchor_series == store.entries()[i].anchor_series);
            CHECK(loaded.entries()[i].features.values == store.entries()[i].features.values);
            CHECK(loaded.entries()[i].confidence == store.entries()[i].confidence);
        }
        REQUIRE(loaded.laws().size() == 1);
        CHECK(loaded.laws()[0].range_lo == 3.1);
        CHECK(loaded.laws()[0].range_hi == 12.0);
        CHECK(loaded.content_digest(true) == store.content_digest(true));

        // New inserts after a reload continue the id sequence.
        auto reloaded = MemoryStore::load(path);
        auto anchor = noisy_series(rng, 12, 9.0);
        const auto next = reloaded.insert_pattern(anchor, "later",
                                                  extract_features(anchor, cfg.autocorr_depth));
        CHECK(next > 3);
    }
    std::remove(path.c_str());
}

TEST_CASE("load rejects a file without its header record") {
    const std::string path = temp_path("memory_headerless");
    {
        std::ofstream out(path);
        out << R"({"record":"entry","id":0,"kind":"pattern","anchor":[1.0],"summary":"x",)"
            << R"("features":[1.0],"feature_schema":"fv1-p3","confidence":0,)"
            << R"("created_phase":"train"})" << "\n";
    }
    CHECK_THROWS_WITH_AS(MemoryStore::load(path), doctest::Contains("missing header"), ParseError);
    std::remove(path.c_str());
}

TEST_CASE("load reports the offending line of a truncated record") {
    const std::string path = temp_path("memory_truncated");
    {
        std::mt19937_64 rng(10);
        auto store = seeded_store(rng, 2);
        store.persist(path);
    }
    // Chop the final record in half.
    FILE* f = fopen(path.c_str(), "r");
    REQUIRE(f);
    std::string contents;
    char buf[4096];
    std::size_t n;
    while ((n = fread(buf, 1, sizeof(buf), f)) > 0) contents.append(buf, n);
    fclose(f);
    contents.resize(contents.size() - 40);
    f = fopen(path.c_str(), "w");
    fwrite(contents.data(), 1, contents.size(), f);
    fclose(f);

    CHECK_THROWS_WITH_AS(MemoryStore::load(path), doctest::Contains("line 3"), ParseError);
    std::remove(path.c_str());
}
