// icl: command line front end of the demonstration-configuration harness.

#include <csignal>
#include <fstream>
#include <iostream>
#include <thread>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "icl/config.hpp"
#include "icl/error.hpp"
#include "icl/experiment.hpp"
#include "icl/manipulate.hpp"
#include "icl/metrics.hpp"
#include "icl/stub_server.hpp"
#include "icl/synthetic.hpp"
#include "icl/text_embedder.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

constexpr int kExitValidation = 2;
constexpr int kExitFailure = 1;

struct RunFlags {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string output;
    std::optional<int> workers;
    std::optional<std::size_t> query_count;
    std::string oracle_endpoint;
    std::vector<int> shots;
    std::optional<std::size_t> stop_after;
    bool fresh = false;
    bool quiet = false;
};

icl::ExperimentConfig load_with_overrides(const RunFlags& f) {
    auto cfg = icl::load_config(f.config);
    if (f.seed) cfg.seed = *f.seed;
    if (!f.output.empty()) cfg.output_dir = f.output;
    if (f.workers) cfg.workers = *f.workers;
    if (f.query_count) {
        cfg.subset.count = *f.query_count;
        cfg.subset.ids.clear();
    }
    if (!f.oracle_endpoint.empty()) cfg.oracle.endpoint = f.oracle_endpoint;
    if (!f.shots.empty()) cfg.shots = f.shots;
    return cfg;
}

int cmd_validate(const RunFlags& f) {
    auto cfg = load_with_overrides(f);
    icl::validate_config(cfg);
    const auto data = icl::load_experiment_data(cfg);
    for (const auto& w : data.warnings) std::cerr << "warning: " << w << '\n';
    std::cout << "config ok\n"
              << "  support samples: " << data.support->size() << '\n'
              << "  queries: " << data.query_ids.size() << (data.same_split ? " (leave-one-out)" : "") << '\n'
              << "  arms: ";
    for (std::size_t i = 0; i < cfg.arms.size(); ++i) std::cout << (i ? ", " : "") << cfg.arms[i].label();
    std::cout << "\n  shots:";
    for (int s : cfg.shots) std::cout << ' ' << s;
    std::cout << "\n  oracle: " << icl::to_string(cfg.oracle.kind) << '\n'
              << "  fingerprint: " << icl::fingerprint(cfg) << '\n';
    return 0;
}

int cmd_run(const RunFlags& f) {
    auto cfg = load_with_overrides(f);
    icl::RunOptions opts;
    opts.fresh = f.fresh;
    opts.stop_after = f.stop_after;
    if (!f.quiet)
        opts.progress = [](std::size_t done, std::size_t total) {
            if (done == total || done % 100 == 0) std::cerr << "\r" << done << "/" << total << std::flush;
        };
    const auto summary = icl::run_experiment(cfg, opts);
    if (!f.quiet) std::cerr << '\n';
    for (const auto& w : summary.warnings) std::cerr << "warning: " << w << '\n';
    std::cout << icl::render_csv(summary.report.aggregates);
    std::cerr << "rows: " << summary.report.rows.size() << "/" << summary.total_tasks << " (" << summary.executed
              << " new, " << summary.resumed << " resumed, " << summary.failed << " failed)\n"
              << "network calls: " << summary.network_calls << '\n'
              << "report: " << (summary.output_dir / icl::kReportJsonName).string() << '\n';
    return summary.report.partial ? 3 : 0;
}

int cmd_report(const std::string& input, const std::string& format, const std::string& metric,
               const std::string& out, const std::string& config) {
    icl::EvalReport report;
    if (fs::path(input).extension() == ".jsonl") {
        std::optional<icl::ExperimentConfig> cfg;
        if (!config.empty()) cfg = icl::load_config(config);
        report = icl::report_from_row_log(input, cfg ? &*cfg : nullptr);
    } else {
        report = icl::load_report(input);
    }
    const auto fmt = icl::report_format_from_string(format);
    if (!out.empty()) {
        if (fmt == icl::ReportFormat::csv && metric != "accuracy") {
            std::ofstream o(out, std::ios::binary | std::ios::trunc);
            o << icl::render_csv(report.aggregates, metric);
        } else {
            icl::emit_report(report, fmt, out);
        }
        return 0;
    }
    switch (fmt) {
    case icl::ReportFormat::json: std::cout << icl::render_json(report); break;
    case icl::ReportFormat::csv: std::cout << icl::render_csv(report.aggregates, metric); break;
    case icl::ReportFormat::plotdata: std::cout << icl::render_plotdata(report.aggregates); break;
    }
    return 0;
}

struct ProbeFlags {
    std::string config;
    std::string mode = "new_mapping";
    std::vector<std::string> map;
    double fraction = 0.5;
    std::string out;
    int shots = 8;
    std::string strategy = "RS";
    std::optional<std::size_t> query_count;
};

int cmd_probe(const ProbeFlags& f) {
    auto cfg = icl::load_config(f.config);
    json spec = {{"mode", f.mode}, {"correct_fraction", f.fraction}};
    if (!f.map.empty()) {
        json mapping = json::object();
        for (const auto& m : f.map) {
            const auto eq = m.find('=');
            if (eq == std::string::npos) throw icl::ValidationError("--map expects from=to, got '" + m + "'");
            mapping[m.substr(0, eq)] = m.substr(eq + 1);
        }
        spec["mapping"] = mapping;
    } else if (f.mode == "new_mapping") {
        spec["mapping"] = {{"yes", "tiger"}, {"no", "lion"}};
    }
    const auto probe = icl::probe_from_json(spec);

    icl::ArmSpec arm;
    arm.strategy.kind = icl::strategy_kind_from_string(f.strategy);
    arm.strategy.seed = cfg.seed;
    arm.probe = probe;
    cfg.arms = {arm};
    cfg.shots = {f.shots};
    if (f.query_count) cfg.subset.count = *f.query_count;
    cfg.oracle = icl::OracleSpec{};
    icl::validate_config(cfg);

    const fs::path out = f.out.empty() ? fs::path("probe") : fs::path(f.out);
    fs::create_directories(out);
    icl::Experiment exp(cfg);
    const auto& ctx = *exp.arms().front();
    icl::write_dataset_dump(out / "probe_support.ndjson", *ctx.support.set);
    {
        std::ofstream o(out / "probe.json", std::ios::binary | std::ios::trunc);
        json meta = {{"probe", icl::to_json(probe)},
                     {"support_size", ctx.support.set->size()},
                     {"strategy", icl::to_json(arm.strategy)},
                     {"shots", f.shots}};
        if (probe.mode == icl::ProbeMode::new_mapping) meta["inverse_mapping"] = icl::invert_mapping(probe.mapping);
        o << meta.dump(2) << '\n';
    }
    std::size_t written = 0, correct_total = 0, demos_total = 0;
    {
        std::ofstream o(out / "sequences.jsonl", std::ios::binary | std::ios::trunc);
        for (auto qid : exp.data().query_ids) {
            if (!ctx.queries.set->contains(qid)) continue;
            const auto seq = exp.build_sequence_for(ctx, f.shots, qid);
            json demos = json::array();
            for (const auto& d : seq.demos) {
                const auto& original = ctx.support.set->at(d.sample_id);
                const bool correct = d.answer == original.canonical_answer;
                correct_total += correct;
                ++demos_total;
                demos.push_back({{"sample_id", d.sample_id},
                                 {"question", d.question},
                                 {"answer", d.answer},
                                 {"correct", correct}});
            }
            const auto prompt = icl::serialize(seq, cfg.prompt_template);
            o << json{{"query_id", qid},
                      {"expected", ctx.scoring_queries->at(qid).canonical_answer},
                      {"demos", demos},
                      {"log", seq.log},
                      {"text", prompt.text},
                      {"image_refs", prompt.image_refs}}
                     .dump()
              << '\n';
            ++written;
        }
    }
    std::cout << "probe " << f.mode << ": " << ctx.support.set->size() << " yes/no support samples, " << written
              << " sequences, " << correct_total << "/" << demos_total << " demonstrations keep their answer\n"
              << "written to " << out.string() << '\n';
    return 0;
}

struct IngestFlags {
    std::string kind = "synthetic";
    std::string records, questions, annotations;
    std::string modality;
    std::string endpoint;
    std::string out;
    std::size_t batch = 64;
    int timeout_ms = 10000;
};

int cmd_ingest(const IngestFlags& f) {
    icl::DatasetPaths paths;
    paths.records = f.records;
    paths.questions = f.questions;
    paths.annotations = f.annotations;
    const auto set = icl::load_vqa_dataset(paths, icl::dataset_kind_from_string(f.kind));
    icl::EmbeddingServiceOptions opts;
    opts.endpoint = f.endpoint;
    if (const char* env = std::getenv("ICL_EMBED_ENDPOINT"); opts.endpoint.empty() && env) opts.endpoint = env;
    opts.timeout = std::chrono::milliseconds(f.timeout_ms);
    const icl::RemoteEmbeddingClient client(opts);
    const auto table = icl::ingest_embeddings(set, icl::modality_from_string(f.modality), client, f.batch);
    icl::write_embeddings(f.out, table);
    std::cout << "wrote " << table.size() << " x " << table.dim << " " << icl::to_string(table.modality)
              << " embeddings to " << f.out << '\n';
    return 0;
}

volatile std::sig_atomic_t g_stop_requested = 0;

void on_signal(int) { g_stop_requested = 1; }

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"In-context demonstration configuration harness"};
    app.require_subcommand(1);

    RunFlags vflags;
    auto* validate = app.add_subcommand("validate", "Check a config and every file it references");
    validate->add_option("config", vflags.config, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);

    RunFlags rflags;
    auto* run = app.add_subcommand("run", "Run every arm x shot x query cell and write reports");
    run->add_option("config", rflags.config, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
    run->add_option("--seed", rflags.seed, "Override the config seed");
    run->add_option("-o,--output", rflags.output, "Override output_dir");
    run->add_option("-j,--workers", rflags.workers, "Worker threads");
    run->add_option("-n,--query-count", rflags.query_count, "Use the first N queries");
    run->add_option("--oracle-endpoint", rflags.oracle_endpoint, "Override the remote oracle endpoint");
    run->add_option("--shots", rflags.shots, "Override the shot grid")->delimiter(',');
    run->add_option("--stop-after", rflags.stop_after, "Stop after N new rows (resume later)");
    run->add_flag("--fresh", rflags.fresh, "Discard a row log from a different config");
    run->add_flag("-q,--quiet", rflags.quiet, "No progress output");

    std::string rinput, rformat = "csv", rmetric = "accuracy", rout, rconfig;
    auto* report = app.add_subcommand("report", "Render a report.json or rows.jsonl");
    report->add_option("input", rinput, "report.json or rows.jsonl")->required()->check(CLI::ExistingFile);
    report->add_option("-f,--format", rformat, "json | csv | plotdata")
        ->check(CLI::IsMember({"json", "csv", "plotdata"}));
    report->add_option("-m,--metric", rmetric, "csv metric: accuracy | copy_rate")
        ->check(CLI::IsMember({"accuracy", "copy_rate"}));
    report->add_option("-o,--out", rout, "Write to a file instead of stdout");
    report->add_option("-c,--config", rconfig, "Config for arm order when reading a row log");

    ProbeFlags pflags;
    auto* probe = app.add_subcommand("probe", "Build a TR/TL probe over the yes/no subset");
    probe->add_option("config", pflags.config, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
    probe->add_option("--mode", pflags.mode, "standard | mismatch | new_mapping")
        ->check(CLI::IsMember({"standard", "mismatch", "new_mapping"}));
    probe->add_option("--map", pflags.map, "Answer mapping entry from=to (repeatable)");
    probe->add_option("--fraction", pflags.fraction, "Correct fraction for mismatch probes");
    probe->add_option("--strategy", pflags.strategy, "Retrieval strategy");
    probe->add_option("--shots", pflags.shots, "Demonstrations per sequence");
    probe->add_option("-n,--query-count", pflags.query_count, "Use the first N queries");
    probe->add_option("-o,--out", pflags.out, "Output directory");

    IngestFlags iflags;
    auto* ingest = app.add_subcommand("ingest-embeddings", "Embed a dataset through an embedding service");
    ingest->add_option("--kind", iflags.kind, "vqav2 | vizwiz | okvqa | synthetic");
    ingest->add_option("--records", iflags.records, "Records file (vizwiz, synthetic)");
    ingest->add_option("--questions", iflags.questions, "Questions JSON (vqav2, okvqa)");
    ingest->add_option("--annotations", iflags.annotations, "Annotations JSON (vqav2, okvqa)");
    ingest->add_option("--modality", iflags.modality, "image | question | question_answer")->required();
    ingest->add_option("--endpoint", iflags.endpoint, "Embedding service URL (or $ICL_EMBED_ENDPOINT)");
    ingest->add_option("--batch", iflags.batch, "Items per request");
    ingest->add_option("--timeout-ms", iflags.timeout_ms, "Per-request timeout");
    ingest->add_option("-o,--out", iflags.out, "Output .icle file")->required();

    icl::StubOptions sopts;
    std::string smode = "echo";
    auto* stub = app.add_subcommand("serve-stub", "Serve the test inference endpoints");
    stub->add_option("--host", sopts.host, "Bind address");
    stub->add_option("-p,--port", sopts.port, "Port (0 picks one)");
    stub->add_option("--mode", smode, "echo | fixed | fail_first | malformed")
        ->check(CLI::IsMember({"echo", "fixed", "fail_first", "malformed"}));
    stub->add_option("--answer", sopts.fixed_answer, "Answer for fixed and fail_first");
    stub->add_option("--fail-count", sopts.fail_count, "Initial 503 responses in fail_first");
    stub->add_option("--delay-ms", sopts.delay_ms, "Delay added to /generate");
    stub->add_option("--embed-dim", sopts.embed_dim, "Dimension of /embed vectors");

    icl::SyntheticOptions synth;
    std::string synth_out;
    auto* make_synth = app.add_subcommand("make-synthetic", "Generate a synthetic dataset bundle");
    make_synth->add_option("-o,--out", synth_out, "Output directory")->required();
    make_synth->add_option("--samples", synth.samples, "Number of samples");
    make_synth->add_option("--dim", synth.dim, "Embedding dimension");
    make_synth->add_option("--seed", synth.seed, "Generator seed");
    make_synth->add_option("--image-size", synth.image_size, "PPM side length (0: no images)");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*validate) return cmd_validate(vflags);
        if (*run) return cmd_run(rflags);
        if (*report) return cmd_report(rinput, rformat, rmetric, rout, rconfig);
        if (*probe) return cmd_probe(pflags);
        if (*ingest) return cmd_ingest(iflags);
        if (*stub) {
            sopts.mode = icl::stub_mode_from_string(smode);
            icl::StubServer server(sopts);
            std::signal(SIGINT, on_signal);
            std::signal(SIGTERM, on_signal);
            server.start();
            std::cout << "listening on " << server.endpoint() << std::endl;
            while (!g_stop_requested) std::this_thread::sleep_for(std::chrono::milliseconds(100));
            server.stop();
            return 0;
        }
        if (*make_synth) {
            const auto bundle = icl::make_synthetic(synth);
            icl::write_synthetic_bundle(bundle, synth_out, synth);
            std::cout << "wrote " << bundle.set.size() << " samples to " << synth_out << '\n';
            return 0;
        }
    } catch (const icl::ValidationError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitValidation;
    } catch (const icl::Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitFailure;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitFailure;
    }
    return 0;
}
