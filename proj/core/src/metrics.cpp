#include "icl/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "icl/error.hpp"

namespace icl {

int vqa_matches(std::string_view prediction, std::span<const std::string> gt_answers) {
    if (gt_answers.size() != kNumGroundTruth)
        throw ValidationError("vqa_accuracy expects " + std::to_string(kNumGroundTruth) + " ground-truth answers, got " +
                              std::to_string(gt_answers.size()));
    return static_cast<int>(std::count(gt_answers.begin(), gt_answers.end(), prediction));
}

double vqa_accuracy(std::string_view prediction, std::span<const std::string> gt_answers) {
    const int sigma = vqa_matches(prediction, gt_answers);
    return std::min(1.0, 3.0 * sigma / 10.0);
}

nlohmann::json to_json(const QueryResult& r) {
    nlohmann::json j = {{"query_id", r.query_id},
                        {"arm", r.arm},
                        {"shots", r.shots},
                        {"prediction", r.prediction},
                        {"raw_prediction", r.raw_prediction},
                        {"demo_ids", r.demo_ids},
                        {"demo_answers", r.demo_answers},
                        {"accuracy", nullptr},
                        {"copied", r.copied},
                        {"prompt_chars", r.prompt_chars},
                        {"prompt_tokens", r.prompt_tokens}};
    if (r.accuracy) j["accuracy"] = *r.accuracy;
    if (!r.error.empty()) j["error"] = r.error;
    return j;
}

QueryResult query_result_from_json(const nlohmann::json& j) {
    QueryResult r;
    r.query_id = j.at("query_id").get<SampleId>();
    r.arm = j.at("arm").get<std::string>();
    r.shots = j.at("shots").get<int>();
    r.prediction = j.value("prediction", "");
    r.raw_prediction = j.value("raw_prediction", "");
    r.demo_ids = j.value("demo_ids", std::vector<SampleId>{});
    r.demo_answers = j.value("demo_answers", std::vector<std::string>{});
    if (j.contains("accuracy") && !j["accuracy"].is_null()) r.accuracy = j["accuracy"].get<double>();
    r.copied = j.value("copied", false);
    r.prompt_chars = j.value("prompt_chars", std::size_t{0});
    r.prompt_tokens = j.value("prompt_tokens", std::size_t{0});
    r.error = j.value("error", "");
    return r;
}

QueryResult score_query(const VqaSample& query, std::string arm, int shots, std::string raw_prediction,
                        std::vector<SampleId> demo_ids, std::vector<std::string> demo_answers, bool normalize) {
    QueryResult r;
    r.query_id = query.sample_id;
    r.arm = std::move(arm);
    r.shots = shots;
    r.raw_prediction = std::move(raw_prediction);
    if (normalize) {
        r.prediction = normalize_answer(r.raw_prediction);
        for (auto& a : demo_answers) a = normalize_answer(a);
    } else {
        r.prediction = r.raw_prediction;
    }
    r.demo_ids = std::move(demo_ids);
    r.demo_answers = std::move(demo_answers);
    r.accuracy = vqa_accuracy(r.prediction, query.gt_answers);
    r.copied = std::find(r.demo_answers.begin(), r.demo_answers.end(), r.prediction) != r.demo_answers.end();
    return r;
}

double copy_rate(std::span<const QueryResult> rows) {
    if (rows.empty()) throw ValidationError("copy_rate of an empty result list");
    const auto copied = std::count_if(rows.begin(), rows.end(), [](const QueryResult& r) { return r.copied; });
    return static_cast<double>(copied) / static_cast<double>(rows.size());
}

double round2(double x) { return std::round(x * 100.0) / 100.0; }

namespace {

/// num / den rounded half away from zero, for non-negative operands.
long long rounded_ratio(long long num, long long den) { return (2 * num + den) / (2 * den); }

} // namespace

Aggregates aggregate(std::span<const QueryResult> rows, const std::vector<int>& shots,
                     const std::vector<std::string>& arm_order) {
    Aggregates out;
    out.shots = shots;

    std::vector<std::string> arms = arm_order;
    std::set<std::string> known(arms.begin(), arms.end());
    std::set<std::string> extra;
    for (const auto& r : rows)
        if (!known.count(r.arm)) extra.insert(r.arm);
    arms.insert(arms.end(), extra.begin(), extra.end());

    // Accuracies are multiples of 0.1, so integer thousandths make every
    // fold exact and independent of row order.
    struct Acc {
        long long n = 0, failed = 0, copied = 0, milli = 0;
    };
    std::map<std::pair<std::string, int>, Acc> acc;
    for (const auto& r : rows) {
        auto& a = acc[{r.arm, r.shots}];
        if (r.failed()) {
            ++a.failed;
            ++out.failed;
            continue;
        }
        ++a.n;
        a.milli += std::llround(*r.accuracy * 1000.0);
        a.copied += r.copied ? 1 : 0;
    }

    for (const auto& arm : arms) {
        ArmAggregate agg{arm, {}, std::nullopt, std::nullopt};
        long long acc_sum = 0, copy_sum = 0, present = 0;
        for (int s : shots) {
            auto it = acc.find({arm, s});
            if (it == acc.end()) continue;
            const auto& a = it->second;
            CellAggregate cell;
            cell.count = static_cast<std::size_t>(a.n);
            cell.failed = static_cast<std::size_t>(a.failed);
            if (a.n == 0) {
                agg.cells[s] = cell;
                continue;
            }
            // Percentages in hundredths.
            const long long acc_h = rounded_ratio(a.milli * 10, a.n);
            const long long copy_h = rounded_ratio(a.copied * 10000, a.n);
            cell.accuracy = static_cast<double>(acc_h) / 100.0;
            cell.copy_rate = static_cast<double>(copy_h) / 100.0;
            agg.cells[s] = cell;
            acc_sum += acc_h;
            copy_sum += copy_h;
            ++present;
        }
        if (present > 0) {
            agg.average_accuracy = static_cast<double>(rounded_ratio(acc_sum, present)) / 100.0;
            agg.average_copy_rate = static_cast<double>(rounded_ratio(copy_sum, present)) / 100.0;
        }
        out.arms.push_back(std::move(agg));
    }
    return out;
}

nlohmann::json to_json(const Aggregates& a) {
    nlohmann::json arms = nlohmann::json::array();
    for (const auto& arm : a.arms) {
        nlohmann::json cells = nlohmann::json::object();
        for (const auto& [s, c] : arm.cells)
            cells[std::to_string(s)] = {{"count", c.count},
                                        {"failed", c.failed},
                                        {"accuracy", c.count ? nlohmann::json(c.accuracy) : nlohmann::json()},
                                        {"copy_rate", c.count ? nlohmann::json(c.copy_rate) : nlohmann::json()}};
        nlohmann::json entry = {{"arm", arm.arm}, {"cells", cells}};
        entry["average_accuracy"] = arm.average_accuracy ? nlohmann::json(*arm.average_accuracy) : nlohmann::json();
        entry["average_copy_rate"] = arm.average_copy_rate ? nlohmann::json(*arm.average_copy_rate) : nlohmann::json();
        arms.push_back(std::move(entry));
    }
    return {{"shots", a.shots}, {"arms", arms}, {"failed", a.failed}};
}

Aggregates aggregates_from_json(const nlohmann::json& j) {
    Aggregates a;
    a.shots = j.at("shots").get<std::vector<int>>();
    a.failed = j.value("failed", std::size_t{0});
    for (const auto& arm : j.at("arms")) {
        ArmAggregate agg;
        agg.arm = arm.at("arm").get<std::string>();
        for (const auto& [k, c] : arm.at("cells").items()) {
            CellAggregate cell;
            cell.count = c.at("count").get<std::size_t>();
            cell.failed = c.at("failed").get<std::size_t>();
            if (!c.at("accuracy").is_null()) cell.accuracy = c["accuracy"].get<double>();
            if (!c.at("copy_rate").is_null()) cell.copy_rate = c["copy_rate"].get<double>();
            agg.cells[std::stoi(k)] = cell;
        }
        if (!arm.at("average_accuracy").is_null()) agg.average_accuracy = arm["average_accuracy"].get<double>();
        if (!arm.at("average_copy_rate").is_null()) agg.average_copy_rate = arm["average_copy_rate"].get<double>();
        a.arms.push_back(std::move(agg));
    }
    return a;
}

} // namespace icl
