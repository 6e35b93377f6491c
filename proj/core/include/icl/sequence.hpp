#pragma once

#include <optional>
#include <string>
#include <vector>

#include "icl/dataset.hpp"
#include "icl/strategies.hpp"

namespace icl {

struct Demonstration {
    SampleId sample_id = 0;
    std::string image_ref;
    std::string question;
    std::string answer;
    AnswerType answer_type = AnswerType::unknown;
    double score = 0.0;

    bool operator==(const Demonstration&) const = default;
};

/// The query never carries its answer.
struct QueryItem {
    SampleId sample_id = 0;
    std::string image_ref;
    std::string question;

    bool operator==(const QueryItem&) const = default;
};

/// n demonstrations followed by one query, plus an optional leading
/// instruction. Every transform appends one entry to `log`.
struct InContextSequence {
    std::vector<Demonstration> demos;
    QueryItem query;
    std::optional<std::string> instruction;
    StrategySpec provenance;
    std::vector<std::string> log;

    std::size_t shots() const noexcept { return demos.size(); }
};

/// Materializes retrieved ids into triplets using each sample's canonical answer.
InContextSequence build_sequence(const SupportSet& support, const DemonstrationList& list, const VqaSample& query);

} // namespace icl
