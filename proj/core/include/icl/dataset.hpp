#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

namespace icl {

using SampleId = std::uint64_t;

/// Number of ground-truth annotations every sample carries after loading.
inline constexpr std::size_t kNumGroundTruth = 10;

enum class AnswerType { yes_no, number, other, unknown };
enum class DatasetKind { vqav2, vizwiz, okvqa, synthetic };

std::string_view to_string(AnswerType t);
AnswerType answer_type_from_string(std::string_view s);
std::string_view to_string(DatasetKind k);
DatasetKind dataset_kind_from_string(std::string_view s);

/// category -> tags. Image categories are object/attribute/relation/class,
/// question categories are object/relation/attribute/interrogative.
using TagSet = std::map<std::string, std::set<std::string>>;

struct VqaSample {
    SampleId sample_id = 0;
    std::string image_ref;
    std::string question;
    std::vector<std::string> gt_answers;
    std::string canonical_answer;
    AnswerType answer_type = AnswerType::unknown;
    TagSet image_tags;
    TagSet question_tags;

    bool operator==(const VqaSample&) const = default;
};

/// Ordered, immutable collection of samples with unique ids.
class SupportSet {
  public:
    SupportSet(std::vector<VqaSample> samples, DatasetKind kind);

    std::span<const VqaSample> samples() const noexcept { return samples_; }
    std::size_t size() const noexcept { return samples_.size(); }
    DatasetKind kind() const noexcept { return kind_; }

    bool contains(SampleId id) const { return by_id_.count(id) != 0; }
    const VqaSample& at(SampleId id) const;
    std::size_t position(SampleId id) const;

  private:
    std::vector<VqaSample> samples_;
    DatasetKind kind_;
    std::unordered_map<SampleId, std::size_t> by_id_;
};

/// File locations for one split. Which fields are used depends on the kind:
/// vqav2/okvqa read `questions` + `annotations`, vizwiz reads `records`
/// (a JSON array), synthetic reads `records` (newline-delimited JSON).
struct DatasetPaths {
    std::filesystem::path questions;
    std::filesystem::path annotations;
    std::filesystem::path records;
    /// When set, image refs are resolved against this directory and missing
    /// files produce warnings.
    std::filesystem::path image_root;
};

struct LoadOptions {
    bool normalize_answers = true;
};

/// Loads a split and brings every sample to the canonical form: exactly 10
/// answers (padded by repetition), modal canonical answer. Warnings for
/// missing image files are appended to `warnings` when given.
SupportSet load_vqa_dataset(const DatasetPaths& paths, DatasetKind kind, const LoadOptions& options = {},
                            std::vector<std::string>* warnings = nullptr);

/// Lowercase, trim, strip punctuation (keeping decimal points inside
/// numbers), drop the articles a/an/the, collapse whitespace.
std::string normalize_answer(std::string_view raw);

/// Most frequent element, ties broken by lexicographic order.
std::string modal_answer(std::span<const std::string> answers);

/// Repeats the list cyclically up to 10 entries. Throws on empty or > 10.
std::vector<std::string> pad_answers(std::vector<std::string> answers);

nlohmann::json to_json(const VqaSample& s);
VqaSample sample_from_json(const nlohmann::json& j);

/// Writes one VqaSample per line.
void write_dataset_dump(const std::filesystem::path& path, const SupportSet& set);

/// Samples whose canonical answer is "yes" or "no".
SupportSet yes_no_subset(const SupportSet& set);

} // namespace icl
