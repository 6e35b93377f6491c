#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "icl/dataset.hpp"

namespace icl {

/// min(1, 3 * #matches / 10) over exactly ten normalized ground-truth answers.
double vqa_accuracy(std::string_view prediction, std::span<const std::string> gt_answers);

/// Number of ground-truth answers equal to the prediction.
int vqa_matches(std::string_view prediction, std::span<const std::string> gt_answers);

struct QueryResult {
    SampleId query_id = 0;
    std::string arm;
    int shots = 0;
    std::string prediction;     // normalized
    std::string raw_prediction;
    std::vector<SampleId> demo_ids;
    std::vector<std::string> demo_answers; // normalized
    std::optional<double> accuracy;        // absent when the query failed
    bool copied = false;
    std::size_t prompt_chars = 0;
    std::size_t prompt_tokens = 0; // estimate
    std::string error;

    bool failed() const noexcept { return !accuracy.has_value(); }
    bool operator==(const QueryResult&) const = default;
};

nlohmann::json to_json(const QueryResult& r);
QueryResult query_result_from_json(const nlohmann::json& j);

/// Scores a raw model answer for one query. Normalization of the
/// prediction follows `normalize` (off leaves only whitespace trimming).
QueryResult score_query(const VqaSample& query, std::string arm, int shots, std::string raw_prediction,
                        std::vector<SampleId> demo_ids, std::vector<std::string> demo_answers, bool normalize = true);

/// Fraction of rows with copied == true. Throws on an empty list.
double copy_rate(std::span<const QueryResult> rows);

struct CellAggregate {
    std::size_t count = 0;  // scored rows
    std::size_t failed = 0; // rows with an error
    double accuracy = 0.0;  // mean x 100, 2 decimals
    double copy_rate = 0.0; // x 100, 2 decimals

    bool operator==(const CellAggregate&) const = default;
};

struct ArmAggregate {
    std::string arm;
    std::map<int, CellAggregate> cells; // absent shots are missing cells
    std::optional<double> average_accuracy;
    std::optional<double> average_copy_rate;

    bool operator==(const ArmAggregate&) const = default;
};

struct Aggregates {
    std::vector<int> shots;
    std::vector<ArmAggregate> arms; // in first-seen order of `arm_order`
    std::size_t failed = 0;

    bool operator==(const Aggregates&) const = default;
};

/// Rounds half away from zero to two decimals.
double round2(double x);

/// Per (arm, shots) means over scored rows, as percentages rounded to two
/// decimals. The average column is the mean of the rounded cells present.
/// Cells without rows are absent. Arms appear in `arm_order`, then any
/// others in name order.
Aggregates aggregate(std::span<const QueryResult> rows, const std::vector<int>& shots,
                     const std::vector<std::string>& arm_order = {});

nlohmann::json to_json(const Aggregates& a);
Aggregates aggregates_from_json(const nlohmann::json& j);

struct EvalReport {
    std::string fingerprint;
    std::vector<QueryResult> rows; // sorted by (arm order, shots, query_id)
    Aggregates aggregates;
    bool partial = false;
};

nlohmann::json to_json(const EvalReport& r);
EvalReport report_from_json(const nlohmann::json& j);
EvalReport load_report(const std::filesystem::path& path);

enum class ReportFormat { json, csv, plotdata };

ReportFormat report_format_from_string(std::string_view s);
std::string_view to_string(ReportFormat f);

/// Aggregate grid: strategy, <n>-shot..., average. Empty cells are blank.
std::string render_csv(const Aggregates& a, std::string_view metric = "accuracy");
/// Long form: strategy, shots, metric, value (one line per present cell and metric).
std::string render_plotdata(const Aggregates& a);
std::string render_json(const EvalReport& r);

void emit_report(const EvalReport& report, ReportFormat format, const std::filesystem::path& path);

/// Parses a grid produced by render_csv back into (arm, column) -> value.
std::map<std::pair<std::string, std::string>, double> parse_csv_grid(const std::string& csv);

} // namespace icl
