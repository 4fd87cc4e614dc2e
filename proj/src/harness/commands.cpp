#include "expcast/harness/commands.hpp"

#include <cstdio>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "expcast/errors.hpp"
#include "expcast/util.hpp"

namespace expcast {

using nlohmann::json;

namespace {

bool file_exists(const std::string& path) {
    std::ifstream f(path);
    return f.good();
}

// Backends key their determinism on (digest, seed, sample index); an unset
// sampling seed inherits the run seed.
RunConfig with_resolved_seed(RunConfig cfg) {
    if (!cfg.sampling.seed) cfg.sampling.seed = cfg.seed;
    return cfg;
}

// Run-time similarity knobs (alpha, clamp) follow the current config; the
// feature schema and the calibrated dtw_tau stay with the loaded memory
// unless the config pins tau explicitly.
void apply_similarity_overrides(MemoryStore& store, const RunConfig& cfg) {
    SimilarityConfig sim = store.similarity_config();
    sim.alpha = cfg.similarity.alpha;
    sim.cosine_clamp = cfg.similarity.cosine_clamp;
    if (cfg.dtw_tau_pinned) sim.dtw_tau = cfg.similarity.dtw_tau;
    store.set_similarity_config(sim);
}

} // namespace

void cmd_ingest(const IngestOptions& options) {
    ingest_csv(options);
    std::cout << "wrote canonical dataset to " << options.output_path << "\n";
}

void cmd_accumulate(const RunConfig& raw_cfg) {
    const RunConfig cfg = with_resolved_seed(raw_cfg);
    validate_run_config(cfg);
    const DatasetSplits splits = load_csv_dataset(cfg.dataset);
    if (splits.train.empty()) throw ValidationError("train split produced no windows");

    MemoryStore store(cfg.similarity);
    store.set_phase(Phase::train);
    auto backend = make_backend(cfg);

    AccumulationManifest manifest =
        accumulate_experience(splits.train, store, *backend, cfg.sampling, cfg.accumulation,
                              cfg.inference, cfg.seed, /*calibrate_tau=*/!cfg.dtw_tau_pinned);
    manifest.config_snapshot = run_config_to_json(cfg);
    manifest.test_target_start = splits.test_target_start;

    store.persist(cfg.memory_path);
    write_manifest(manifest, cfg.memory_path + ".manifest.json");

    std::cout << "accumulated memory -> " << cfg.memory_path << "\n"
              << "  patterns:   " << manifest.pattern_count << "\n"
              << "  wisdom_pos: " << manifest.wisdom_pos_count << "\n"
              << "  wisdom_neg: " << manifest.wisdom_neg_count << "\n"
              << "  laws:       " << manifest.law_count << "\n"
              << "  dtw_tau:    " << fmt4(manifest.dtw_tau) << " (" << manifest.dtw_tau_source
              << ")\n"
              << "  error_tau:  " << fmt4(manifest.error_tau) << " (" << manifest.error_tau_source
              << ")\n";
}

void cmd_forecast(const RunConfig& raw_cfg, const std::string& memory_out) {
    const RunConfig cfg = with_resolved_seed(raw_cfg);
    validate_run_config(cfg);
    if (!file_exists(cfg.memory_path)) {
        throw ValidationError("memory file not found: " + cfg.memory_path +
                              "; run `expcast accumulate` first");
    }
    MemoryStore store = MemoryStore::load(cfg.memory_path);
    store.set_phase(Phase::test);
    apply_similarity_overrides(store, cfg);
    const DatasetSplits splits = load_csv_dataset(cfg.dataset);
    if (splits.test.empty()) throw ValidationError("test split produced no windows");
    auto backend = make_backend(cfg);

    // Stamp the effective similarity scale (the calibrated tau travels with
    // the memory file, not the config).
    json snapshot = run_config_to_json(cfg);
    snapshot["similarity"]["dtw_tau"] = store.similarity_config().dtw_tau;
    RunReport report = run_test_stream(splits.test, store, *backend, cfg.inference, cfg.sampling,
                                       std::move(snapshot));
    write_run_report(report, cfg.report_path);
    if (!memory_out.empty()) store.persist(memory_out);

    std::cout << "forecast report -> " << cfg.report_path << "\n"
              << "  instances: " << report.evaluated << " (excluded " << report.exclusions << ")\n"
              << "  mse: " << fmt4(report.aggregate_mse) << "\n"
              << "  mae: " << fmt4(report.aggregate_mae) << "\n"
              << "  confidence bumps: " << report.total_bumps << "\n";
}

void cmd_evaluate(const std::vector<std::string>& report_paths, const std::string& out_path) {
    std::string table = "report\tinstances\tmse\tmae\n";
    for (const auto& path : report_paths) {
        const RunReport report = read_run_report(path);
        MetricPair sum;
        std::size_t n = 0;
        for (const auto& o : report.outcomes) {
            if (o.truth.empty()) continue;
            const MetricPair m = compute_metrics(o.final_prediction, o.truth);
            sum.mse += m.mse;
            sum.mae += m.mae;
            ++n;
        }
        const double m1 = n ? sum.mse / static_cast<double>(n) : 0.0;
        const double m2 = n ? sum.mae / static_cast<double>(n) : 0.0;
        table += path + "\t" + std::to_string(n) + "\t" + fmt4(m1) + "\t" + fmt4(m2) + "\n";
    }
    std::cout << table;
    if (!out_path.empty()) {
        std::ofstream out(out_path, std::ios::trunc);
        if (!out) throw ValidationError("cannot open output file: " + out_path);
        out << table;
    }
}

std::vector<AblationRow> cmd_ablate(const RunConfig& raw_cfg) {
    const RunConfig cfg = with_resolved_seed(raw_cfg);
    validate_run_config(cfg);
    if (!file_exists(cfg.memory_path)) {
        throw ValidationError("memory file not found: " + cfg.memory_path +
                              "; run `expcast accumulate` first");
    }
    const DatasetSplits splits = load_csv_dataset(cfg.dataset);
    if (splits.test.empty()) throw ValidationError("test split produced no windows");

    struct Variant {
        const char* name;
        void (*apply)(InferenceConfig&);
    };
    const Variant variants[] = {
        {"no-pattern", [](InferenceConfig& c) { c.use_pattern = false; }},
        {"no-wisdom", [](InferenceConfig& c) { c.use_wisdom = false; }},
        {"no-law", [](InferenceConfig& c) { c.use_law = false; }},
        {"no-adapt", [](InferenceConfig& c) { c.use_adapt = false; }},
        {"no-all",
         [](InferenceConfig& c) {
             c.use_pattern = c.use_wisdom = c.use_law = c.use_adapt = false;
         }},
    };

    std::vector<AblationRow> rows;
    for (const auto& variant : variants) {
        RunConfig vcfg = cfg;
        variant.apply(vcfg.inference);
        // Fresh store and backend per variant: confidence evolution and mock
        // call state must not leak across rows.
        MemoryStore store = MemoryStore::load(vcfg.memory_path);
        store.set_phase(Phase::test);
        apply_similarity_overrides(store, vcfg);
        auto backend = make_backend(vcfg);
        json snapshot = run_config_to_json(vcfg);
        snapshot["similarity"]["dtw_tau"] = store.similarity_config().dtw_tau;
        const RunReport report = run_test_stream(splits.test, store, *backend, vcfg.inference,
                                                 vcfg.sampling, std::move(snapshot));
        rows.push_back({variant.name, report.aggregate_mse, report.aggregate_mae, report.evaluated,
                        report.total_bumps});
    }

    std::string table = "variant\tmse\tmae\tinstances\tbumps\n";
    json doc;
    doc["record"] = "ablation";
    doc["config"] = run_config_to_json(cfg);
    doc["rows"] = json::array();
    for (const auto& r : rows) {
        table += std::string(r.variant) + "\t" + fmt4(r.mse) + "\t" + fmt4(r.mae) + "\t" +
                 std::to_string(r.instances) + "\t" + std::to_string(r.total_bumps) + "\n";
        doc["rows"].push_back(json{{"variant", r.variant},
                                   {"mse", r.mse},
                                   {"mae", r.mae},
                                   {"instances", r.instances},
                                   {"bumps", r.total_bumps}});
    }
    std::cout << table;
    std::ofstream out(cfg.report_path, std::ios::trunc);
    if (!out) throw ValidationError("cannot open report file for writing: " + cfg.report_path);
    out << doc.dump(2) << "\n";
    return rows;
}

namespace {

struct CliOverrides {
    std::string config_path;
    std::string backend_kind;
    std::string mock_script;
    std::int64_t seed = -1;
    bool no_pattern = false, no_wisdom = false, no_law = false, no_adapt = false;
    std::int64_t k = -1, m = -1;
    double alpha = -1.0;
    std::string aggregate;
    std::string memory_path, report_path, memory_out;
    bool parallel_samples = false;

    RunConfig resolve() const {
        RunConfig cfg = config_path.empty() ? RunConfig{} : load_run_config(config_path);
        if (!backend_kind.empty()) cfg.backend.kind = backend_kind;
        if (!mock_script.empty()) cfg.backend.mock_script = mock_script;
        if (seed >= 0) cfg.seed = static_cast<std::uint64_t>(seed);
        if (no_pattern) cfg.inference.use_pattern = false;
        if (no_wisdom) cfg.inference.use_wisdom = false;
        if (no_law) cfg.inference.use_law = false;
        if (no_adapt) cfg.inference.use_adapt = false;
        if (k > 0) cfg.inference.k = static_cast<std::size_t>(k);
        if (m > 0) cfg.inference.trajectory_count = static_cast<std::size_t>(m);
        if (alpha >= 0.0) cfg.similarity.alpha = alpha;
        if (aggregate == "mean") cfg.inference.aggregate = InferenceConfig::Aggregate::mean;
        if (aggregate == "select") cfg.inference.aggregate = InferenceConfig::Aggregate::select;
        if (!memory_path.empty()) cfg.memory_path = memory_path;
        if (!report_path.empty()) cfg.report_path = report_path;
        if (parallel_samples) cfg.inference.parallel_samples = true;
        return cfg;
    }

    void attach(CLI::App* sub) {
        sub->add_option("--config", config_path, "run configuration file (JSON)");
        sub->add_option("--backend", backend_kind, "backend kind: http or mock")
            ->check(CLI::IsMember({"http", "mock"}));
        sub->add_option("--mock-script", mock_script, "mock backend script file");
        sub->add_option("--seed", seed, "run seed");
        sub->add_flag("--no-pattern", no_pattern, "disable historical-pattern retrieval");
        sub->add_flag("--no-wisdom", no_wisdom, "disable reasoning-wisdom retrieval");
        sub->add_flag("--no-law", no_law, "disable law checking and reflection");
        sub->add_flag("--no-adapt", no_adapt, "disable dynamic confidence adaptation");
        sub->add_option("--k", k, "retrieved items per memory kind");
        sub->add_option("--m", m, "sampled trajectories per instance");
        sub->add_option("--alpha", alpha, "similarity mixing weight in [0,1]");
        sub->add_option("--aggregate", aggregate, "trajectory aggregation: select or mean")
            ->check(CLI::IsMember({"select", "mean"}));
        sub->add_option("--memory", memory_path, "memory file path override");
        sub->add_option("--report", report_path, "report file path override");
        sub->add_flag("--parallel-samples", parallel_samples,
                      "sample the M trajectories concurrently");
    }
};

} // namespace

int run_cli(int argc, const char* const* argv) {
    CLI::App app{"memory-driven time series forecasting engine"};
    app.require_subcommand(1);

    IngestOptions ingest;
    auto* sub_ingest = app.add_subcommand("ingest", "reshape a native CSV into the canonical layout");
    sub_ingest->add_option("--in", ingest.input_path, "input CSV")->required();
    sub_ingest->add_option("--out", ingest.output_path, "output CSV")->required();
    sub_ingest->add_option("--timestamp-col", ingest.timestamp_column,
                           "timestamp column name (default: first column)");
    sub_ingest->add_option("--target-col", ingest.target_column, "target column")->required();
    sub_ingest->add_option("--covariate-cols", ingest.covariate_columns,
                           "covariate columns")->delimiter(',');

    CliOverrides acc_opts;
    auto* sub_acc = app.add_subcommand("accumulate", "build memory from the train split");
    acc_opts.attach(sub_acc);

    CliOverrides fc_opts;
    auto* sub_fc = app.add_subcommand("forecast", "run the experience-conditioned test stream");
    fc_opts.attach(sub_fc);
    sub_fc->add_option("--memory-out", fc_opts.memory_out,
                       "write the evolved memory (updated confidences) here");

    std::vector<std::string> eval_reports;
    std::string eval_out;
    auto* sub_eval = app.add_subcommand("evaluate", "print an MSE/MAE table from run reports");
    sub_eval->add_option("--report", eval_reports, "report file(s)")->required();
    sub_eval->add_option("--out", eval_out, "also write the table to this file");

    CliOverrides ab_opts;
    auto* sub_ab = app.add_subcommand("ablate", "run the ablation variant matrix");
    ab_opts.attach(sub_ab);

    try {
        app.parse(argc, argv);
        if (sub_ingest->parsed()) {
            cmd_ingest(ingest);
        } else if (sub_acc->parsed()) {
            cmd_accumulate(acc_opts.resolve());
        } else if (sub_fc->parsed()) {
            cmd_forecast(fc_opts.resolve(), fc_opts.memory_out);
        } else if (sub_eval->parsed()) {
            cmd_evaluate(eval_reports, eval_out);
        } else if (sub_ab->parsed()) {
            cmd_ablate(ab_opts.resolve());
        }
        return 0;
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    } catch (const ValidationError& ex) {
        std::cerr << "error: " << ex.what() << "\n";
        return 1;
    } catch (const TransportError& ex) {
        std::cerr << "transport error: " << ex.what() << "\n";
        return 2;
    } catch (const std::exception& ex) {
        std::cerr << "internal error: " << ex.what() << "\n";
        return 3;
    }
}

} // namespace expcast
