#include <doctest.h>

#include <atomic>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <random>
#include <thread>
#include <unistd.h>

#include <httplib.h>
#include <json.hpp>

#include "expcast/errors.hpp"
#include "expcast/llm/http_backend.hpp"
#include "expcast/llm/mock_backend.hpp"
#include "expcast/llm/prompts.hpp"
#include "expcast/util.hpp"

using namespace expcast;
using nlohmann::json;

namespace {

ForecastInstance small_instance(std::size_t L = 8, std::size_t H = 4, double base = 10.0) {
    ForecastInstance inst;
    inst.id = "test-00007";
    for (std::size_t i = 0; i < L; ++i) inst.lookback.push_back(base + double(i));
    for (std::size_t i = 0; i < H; ++i) inst.target.push_back(base + double(L + i));
    for (std::size_t i = 0; i < L + H; ++i) {
        inst.timestamps.push_back(std::int64_t(i) * 3600);
        inst.iso_timestamps.push_back("2020-01-01T0" + std::to_string(i % 10) + ":00:00");
    }
    inst.dynamic_context.history_rows = L;
    inst.dynamic_context.names = {"load"};
    for (std::size_t i = 0; i < L + H; ++i) {
        inst.dynamic_context.rows.push_back({100.0 + double(i)});
    }
    inst.static_context["region"] = "north";
    return inst;
}

PromptBundle simple_bundle(std::size_t horizon = 3) {
    PromptBundle b;
    b.role_block = "forecaster";
    b.memory_block = "none";
    b.context_block = "target=1.0000\ntarget=2.0000\n";
    b.answer_contract = horizon;
    return b;
}

} // namespace

TEST_CASE("parse_answer handles the strict block format") {
    CHECK(parse_answer({"<answer>1.0, 2.0</answer>", {}}, 2) == std::vector<double>{1.0, 2.0});
    CHECK(parse_answer({"text before <answer>3 4 5</answer> after", {}}, 3) ==
          std::vector<double>{3.0, 4.0, 5.0});
    // The LAST well-formed block wins.
    CHECK(parse_answer({"<answer>9,9</answer> revised: <answer>1.5,2.5</answer>", {}}, 2) ==
          std::vector<double>{1.5, 2.5});
}

TEST_CASE("parse_answer error paths") {
    CHECK_THROWS_WITH_AS(parse_answer({"no block here", {}}, 2), doctest::Contains("no answer"),
                         ParseError);
    CHECK_THROWS_AS(parse_answer({"<answer>1.0</answer>", {}}, 2), ParseError);
    try {
        parse_answer({"<answer>1.0</answer>", {}}, 2);
    } catch (const ParseError& ex) {
        const std::string msg = ex.what();
        CHECK(msg.find("2") != std::string::npos);
        CHECK(msg.find("1") != std::string::npos);
    }
    CHECK_THROWS_AS(parse_answer({"<answer>1.0, nan</answer>", {}}, 2), ParseError);
    CHECK_THROWS_AS(parse_answer({"<answer>1.0, abc</answer>", {}}, 2), ParseError);
    // An unterminated trailing block does not hide an earlier complete one.
    CHECK(parse_answer({"<answer>1,2</answer> <answer>7,8", {}}, 2) ==
          std::vector<double>{1.0, 2.0});
}

TEST_CASE("serialize_answer round-trips at 4-decimal precision") {
    std::mt19937_64 rng(2024);
    std::uniform_real_distribution<double> dist(-1000.0, 1000.0);
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<double> v(1 + rng() % 24);
        for (double& x : v) x = dist(rng);
        const auto parsed = parse_answer({serialize_answer(v), {}}, v.size());
        REQUIRE(parsed.size() == v.size());
        for (std::size_t i = 0; i < v.size(); ++i) {
            CHECK(std::fabs(parsed[i] - v[i]) <= 5.0001e-5);
        }
    }
}

TEST_CASE("forecast prompt carries the four context sub-blocks in order") {
    const auto inst = small_instance();
    const auto fv = extract_features(inst.lookback, 3);
    const auto bundle = build_forecast_prompt(inst, {}, {}, {}, {}, fv);

    const std::string& ctx = bundle.context_block;
    const auto p1 = ctx.find("(1) Historical data");
    const auto p2 = ctx.find("(2) Known future covariates");
    const auto p3 = ctx.find("(3) Statistical summary");
    const auto p4 = ctx.find("(4) Shape description");
    REQUIRE(p1 != std::string::npos);
    REQUIRE(p2 != std::string::npos);
    REQUIRE(p3 != std::string::npos);
    REQUIRE(p4 != std::string::npos);
    CHECK(p1 < p2);
    CHECK(p2 < p3);
    CHECK(p3 < p4);

    // Statistical summary names the four headline stats.
    CHECK(ctx.find("mean") != std::string::npos);
    CHECK(ctx.find("standard deviation") != std::string::npos);
    CHECK(ctx.find("trend slope") != std::string::npos);
    CHECK(ctx.find("lag-1 correlation") != std::string::npos);

    // Memory-free ablation wording and the feedback invariant.
    CHECK(bundle.memory_block.find("No retrieved experience") != std::string::npos);
    CHECK(bundle.feedback_block.empty());
    CHECK(bundle.answer_contract == 4);
}

TEST_CASE("forecast prompt assembly is deterministic") {
    const auto inst = small_instance();
    const auto fv = extract_features(inst.lookback, 3);
    std::vector<RetrievedItem> pats = {{3, 0.91, "steady climb then plateau"}};
    std::vector<RetrievedItem> pos = {{10, 0.77, "trust the covariate trend"}};
    std::vector<RetrievedItem> neg = {{11, 0.55, "never extrapolate spikes"}};
    const auto a = build_forecast_prompt(inst, pats, pos, neg, {}, fv);
    const auto b = build_forecast_prompt(inst, pats, pos, neg, {}, fv);
    CHECK(render_prompt(a) == render_prompt(b));
    CHECK(bundle_digest(a) == bundle_digest(b));
    CHECK(a.memory_block.find("steady climb") != std::string::npos);
    CHECK(a.memory_block.find("(Good, id 10)") != std::string::npos);
    CHECK(a.memory_block.find("(Bad, id 11)") != std::string::npos);
}

TEST_CASE("retry prompt names the violated bound in the feedback block") {
    const auto inst = small_instance();
    const auto fv = extract_features(inst.lookback, 3);
    GeneralLaw law;
    law.id = 8;
    law.law_type = LawType::range;
    law.range_lo = 36.12;
    law.range_hi = 65.29;
    LawViolation v{8, LawType::range, 4, 70.0, "strictly bounded within [36.1200, 65.2900]"};
    const auto bundle = build_forecast_prompt(inst, {}, {}, {}, {law}, fv, {v});
    CHECK(!bundle.feedback_block.empty());
    CHECK(bundle.feedback_block.find("strictly bounded within [36.1200, 65.2900]") !=
          std::string::npos);
    CHECK(bundle.feedback_block.find("law 8") != std::string::npos);
    CHECK(bundle.feedback_block.find("step 4") != std::string::npos);
    CHECK(bundle.feedback_block.find("70.0000") != std::string::npos);
    // Laws also render as hard constraints in the memory section.
    CHECK(bundle.memory_block.find("Hard constraints") != std::string::npos);
}

TEST_CASE("summary prompt asks for trend, volatility and peaks over the window") {
    const std::vector<double> y = {5.5, 6.25, 7.125};
    const auto bundle = build_summary_prompt(y);
    const auto text = render_prompt(bundle);
    CHECK(text.find("trend") != std::string::npos);
    CHECK(text.find("volatility") != std::string::npos);
    CHECK(text.find("peak") != std::string::npos);
    CHECK(text.find("5.5000, 6.2500, 7.1250") != std::string::npos);
    CHECK(bundle.answer_contract == 0);
}

TEST_CASE("fusion prompt contains both source texts verbatim") {
    const auto bundle = build_fusion_prompt("lesson alpha text", "lesson beta text");
    CHECK(bundle.context_block.find("lesson alpha text") != std::string::npos);
    CHECK(bundle.context_block.find("lesson beta text") != std::string::npos);
}

TEST_CASE("law prompt lists every textualized sample") {
    const std::vector<std::string> samples = {"sample one stats", "sample two stats",
                                              "sample three stats"};
    const auto bundle = build_law_prompt(samples);
    for (const auto& s : samples) {
        CHECK(bundle.context_block.find(s) != std::string::npos);
    }
    CHECK(bundle.role_block.find("non_negativity") != std::string::npos);
    CHECK(bundle.role_block.find("max_step") != std::string::npos);
}

TEST_CASE("wisdom prompt separates polarities") {
    const std::vector<TrajectorySample> group = {{"rationale A", 0.5}, {"rationale B", 2.0}};
    const auto pos = build_wisdom_prompt(group, true);
    const auto neg = build_wisdom_prompt(group, false);
    CHECK(pos.role_block.find("successful") != std::string::npos);
    CHECK(neg.role_block.find("failed") != std::string::npos);
    CHECK(neg.role_block.find("preventative") != std::string::npos);
    CHECK(pos.context_block.find("rationale A") != std::string::npos);
    CHECK(pos.context_block.find("rationale B") != std::string::npos);
}

TEST_CASE("mock sequence mode replays scripted replies and reports underrun") {
    auto mock = MockBackend::from_json(json{{"mode", "sequence"},
                                            {"replies", json::array({"only reply"})}});
    SamplingParams params;
    const auto bundle = simple_bundle();
    CHECK(mock.complete(bundle, params, 0).rationale_text == "only reply");
    CHECK_THROWS_WITH_AS(mock.complete(bundle, params, 1), doctest::Contains("underrun"),
                         ConfigError);
}

TEST_CASE("mock rules mode is a pure function of bundle, seed and index") {
    auto mock = MockBackend::from_json(json{
        {"mode", "rules"},
        {"rules", json::array({
            json{{"when", json{{"feedback_present", true}}},
                 {"reply", json{{"behavior", "answer"}, {"values", {1.0, 1.0, 1.0}}}}},
            json{{"reply", json{{"behavior", "repeat_last"}, {"offset", 0.5}}}},
        })}});
    SamplingParams params;
    params.seed = 7;
    const auto bundle = simple_bundle();
    const auto r1 = mock.complete(bundle, params, 0).rationale_text;
    const auto r2 = mock.complete(bundle, params, 0).rationale_text;
    CHECK(r1 == r2);
    CHECK(parse_answer({r1, {}}, 3) == std::vector<double>{2.5, 2.5, 2.5});

    PromptBundle retry = bundle;
    retry.feedback_block = "violated";
    const auto r3 = mock.complete(retry, params, 0).rationale_text;
    CHECK(parse_answer({r3, {}}, 3) == std::vector<double>{1.0, 1.0, 1.0});
}

TEST_CASE("mock behaviors derive answers from the prompt text") {
    SamplingParams params;
    SUBCASE("extrapolate_linear continues the last step") {
        auto mock = MockBackend::from_json(
            json{{"rules", json::array({json{{"reply", json{{"behavior", "extrapolate_linear"}}}}})}});
        PromptBundle b = simple_bundle(3);
        b.context_block = "target=1.0000\ntarget=3.0000\n";
        const auto reply = mock.complete(b, params, 0);
        CHECK(parse_answer(reply, 3) == std::vector<double>{5.0, 7.0, 9.0});
    }
    SUBCASE("echo_continuation replays the top retrieved pattern") {
        auto mock = MockBackend::from_json(json{
            {"rules",
             json::array({json{{"when", json{{"memory_contains", "continuation:"}}},
                               {"reply", json{{"behavior", "echo_continuation"}}}},
                          json{{"reply", json{{"behavior", "drift"}, {"rate", 1.0}}}}})}});
        PromptBundle b = simple_bundle(3);
        b.memory_block = "[1] (similarity 0.9) rising; continuation: 4.5, 5.5, 6.5\n"
                         "[2] (similarity 0.8) flat; continuation: 9.0, 9.0, 9.0\n";
        CHECK(parse_answer(mock.complete(b, params, 0), 3) ==
              std::vector<double>{4.5, 5.5, 6.5});
        // Without memory the default drift rule answers instead.
        PromptBundle free = simple_bundle(3);
        free.memory_block = "No retrieved experience available.\n";
        CHECK(parse_answer(mock.complete(free, params, 0), 3) ==
              std::vector<double>{3.0, 4.0, 5.0});
    }
    SUBCASE("law_from_stats spans the observed minima and maxima") {
        auto mock = MockBackend::from_json(
            json{{"rules", json::array({json{{"reply", json{{"behavior", "law_from_stats"}}}}})}});
        PromptBundle b;
        b.role_block = "induce laws";
        b.context_block = "Sample 1: minimum 2.0000, maximum 8.0000.\n"
                          "Sample 2: minimum 1.5000, maximum 9.5000.\n";
        const auto reply = mock.complete(b, params, 0).rationale_text;
        const auto at = reply.find('{');
        REQUIRE(at != std::string::npos);
        const json law = json::parse(reply.substr(at));
        CHECK(law.at("type") == "range");
        CHECK(law.at("lo").get<double>() == doctest::Approx(1.5));
        CHECK(law.at("hi").get<double>() == doctest::Approx(9.5));
    }
}

TEST_CASE("gateway rejects empty completions") {
    LambdaBackend empty([](const PromptBundle&, const SamplingParams&, int) {
        return LlmReply{"", {}};
    });
    CHECK_THROWS_AS(complete(empty, simple_bundle(), SamplingParams{}, 0), TransportError);
}

TEST_CASE("http backend retries 429 then succeeds, sending the credential") {
    setenv("EXPCAST_TEST_KEY", "secret-key-123", 1);

    httplib::Server server;
    std::atomic<int> hits{0};
    std::string seen_auth;
    server.Post("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
        const int n = ++hits;
        seen_auth = req.get_header_value("Authorization");
        if (n == 1) {
            res.status = 429;
            res.set_content("rate limited", "text/plain");
            return;
        }
        json body;
        body["choices"] = json::array(
            {json{{"message", json{{"role", "assistant"}, {"content", "hello from stub"}}}}});
        body["usage"] = json{{"prompt_tokens", 11}, {"completion_tokens", 3}};
        res.set_content(body.dump(), "application/json");
    });
    const int port = server.bind_to_any_port("127.0.0.1");
    REQUIRE(port > 0);
    std::thread listener([&] { server.listen_after_bind(); });
    server.wait_until_ready();

    const std::string audit_path =
        "/tmp/expcast_test_audit_" + std::to_string(::getpid()) + ".jsonl";
    HttpBackendConfig cfg;
    cfg.base_url = "http://127.0.0.1:" + std::to_string(port);
    cfg.api_key_env = "EXPCAST_TEST_KEY";
    cfg.backoff_base_ms = 1;
    cfg.audit_path = audit_path;
    HttpBackend backend(cfg);

    const auto reply = backend.complete(simple_bundle(), SamplingParams{}, 0);
    CHECK(reply.rationale_text == "hello from stub");
    CHECK(reply.usage.prompt_tokens == 11);
    CHECK(hits.load() == 2);
    CHECK(seen_auth == "Bearer secret-key-123");

    // Audit log exists and never leaks the credential.
    std::ifstream audit(audit_path);
    REQUIRE(audit.good());
    std::string contents((std::istreambuf_iterator<char>(audit)),
                         std::istreambuf_iterator<char>());
    CHECK(contents.find("hello from stub") != std::string::npos);
    CHECK(contents.find("target=1.0000") != std::string::npos);  // request body logged
    CHECK(contents.find("secret-key-123") == std::string::npos);

    server.stop();
    listener.join();
    std::remove(audit_path.c_str());
}

TEST_CASE("http backend surfaces exhausted retries and client errors") {
    httplib::Server server;
    std::atomic<int> hits{0};
    server.Post("/v1/chat/completions", [&](const httplib::Request&, httplib::Response& res) {
        ++hits;
        res.status = 503;
        res.set_content("down", "text/plain");
    });
    server.Post("/bad/chat/completions", [&](const httplib::Request&, httplib::Response& res) {
        ++hits;
        res.status = 400;
        res.set_content("bad request", "text/plain");
    });
    const int port = server.bind_to_any_port("127.0.0.1");
    std::thread listener([&] { server.listen_after_bind(); });
    server.wait_until_ready();

    HttpBackendConfig cfg;
    cfg.base_url = "http://127.0.0.1:" + std::to_string(port);
    cfg.api_key_env = "";
    cfg.backoff_base_ms = 1;
    cfg.max_attempts = 3;

    SUBCASE("503 keeps retrying then throws") {
        HttpBackend backend(cfg);
        hits = 0;
        CHECK_THROWS_AS(backend.complete(simple_bundle(), SamplingParams{}, 0), TransportError);
        CHECK(hits.load() == 3);
    }
    SUBCASE("400 fails fast") {
        cfg.chat_path = "/bad/chat/completions";
        HttpBackend backend(cfg);
        hits = 0;
        CHECK_THROWS_AS(backend.complete(simple_bundle(), SamplingParams{}, 0), TransportError);
        CHECK(hits.load() == 1);
    }

    server.stop();
    listener.join();
}
