#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "icl/config.hpp"
#include "icl/metrics.hpp"
#include "icl/oracle.hpp"
#include "icl/prompt.hpp"
#include "icl/sequence.hpp"
#include "icl/strategies.hpp"

namespace icl {

/// Everything loaded from disk for one config.
struct ExperimentData {
    std::shared_ptr<const SupportSet> support;
    std::shared_ptr<const SupportSet> queries;
    Corpus support_corpus;
    Corpus query_corpus;
    bool same_split = false;
    /// Embeds question and (question, answer) texts into the precomputed spaces.
    std::shared_ptr<const TextEmbedder> text_embedder;
    std::map<SampleId, std::set<std::string>> key_tokens;
    /// Queries to run, in file order.
    std::vector<SampleId> query_ids;
    std::vector<std::string> warnings;
};

ExperimentData load_experiment_data(const ExperimentConfig& config);

/// Per-arm retrieval state: probes change the support and query sets.
struct ArmContext {
    ArmSpec arm;
    std::string label;
    Corpus support;
    Corpus queries;
    /// Queries scored under this arm (answers mapped for new_mapping probes).
    std::shared_ptr<const SupportSet> scoring_queries;
    std::unique_ptr<ReplacementPool> pool;
    std::shared_ptr<const Oracle> oracle;
};

/// Outcome of one (arm, shots, query) pipeline run.
struct QueryOutcome {
    QueryResult result;
    std::optional<InContextSequence> sequence;
    std::optional<PromptText> prompt;
};

class Experiment {
  public:
    /// `oracle` replaces the configured one when given (tests, probes).
    Experiment(ExperimentConfig config, std::shared_ptr<const Oracle> oracle = nullptr);
    Experiment(ExperimentConfig config, ExperimentData data, std::shared_ptr<const Oracle> oracle = nullptr);

    const ExperimentConfig& config() const noexcept { return config_; }
    const ExperimentData& data() const noexcept { return data_; }
    const std::vector<std::unique_ptr<ArmContext>>& arms() const noexcept { return arms_; }
    const std::vector<std::string>& stop_sequences() const noexcept { return stop_; }

    /// retrieve -> manipulate; no generation.
    InContextSequence build_sequence_for(const ArmContext& arm, int shots, SampleId query_id) const;

    /// retrieve -> manipulate -> serialize -> generate -> score. Errors of
    /// the query itself become a failed row.
    QueryOutcome run_query(const ArmContext& arm, int shots, SampleId query_id) const;

  private:
    void init_arms(std::shared_ptr<const Oracle> oracle);
    std::string pseudo_answer(const ArmContext& arm, const VqaSample& query, const DemonstrationList& round1) const;
    InContextSequence manipulate(const ArmContext& arm, InContextSequence seq, const VqaSample& query,
                                 Rng& rng) const;
    std::string blur_query_image(const std::string& image_ref) const;

    ExperimentConfig config_;
    ExperimentData data_;
    std::vector<std::unique_ptr<ArmContext>> arms_;
    std::vector<std::string> stop_;
};

struct RunOptions {
    /// Stop after this many newly completed rows (interruption testing).
    std::optional<std::size_t> stop_after;
    /// Discard an existing row log whose fingerprint differs.
    bool fresh = false;
    std::shared_ptr<const Oracle> oracle;
    std::function<void(std::size_t done, std::size_t total)> progress;
};

struct RunSummary {
    EvalReport report;
    std::size_t total_tasks = 0;
    std::size_t executed = 0; // rows computed by this invocation
    std::size_t resumed = 0;  // rows taken from an earlier invocation
    std::size_t failed = 0;
    std::size_t network_calls = 0;
    std::vector<std::string> warnings;
    std::filesystem::path output_dir;
};

inline constexpr const char* kRowLogName = "rows.jsonl";
inline constexpr const char* kReportJsonName = "report.json";
inline constexpr const char* kReportCsvName = "report.csv";
inline constexpr const char* kReportPlotName = "report.plotdata.csv";
inline constexpr const char* kPromptDumpName = "prompts.jsonl";

/// Runs every (arm, shots, query) cell, streaming rows to
/// <output_dir>/rows.jsonl and writing the reports. An existing row log
/// with the same fingerprint is resumed.
RunSummary run_experiment(const ExperimentConfig& config, const RunOptions& options = {});

/// Builds a report from a row log (complete or partial).
EvalReport report_from_row_log(const std::filesystem::path& row_log, const ExperimentConfig* config = nullptr);

} // namespace icl
