#pragma once

#include <map>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "icl/dataset.hpp"
#include "icl/error.hpp"
#include "icl/rng.hpp"
#include "icl/sequence.hpp"
#include "icl/similarity_index.hpp"

namespace icl {

/// Instructions bundled with the harness.
namespace instructions {
inline constexpr std::string_view instruct1 =
    "According to the previous question and answer pair, answer the final question.";
inline constexpr std::string_view instruct2 = "Consider the semantic relationship between the question and the image.";
inline constexpr std::string_view instruct3 =
    "You will be engaged in a two-phase task. Phase 1: Absorb the information from a series of image-text pairs. "
    "Phase 2: Use that context, combined with an upcoming image and your own database of knowledge, to accurately "
    "answer a subsequent question.";
} // namespace instructions

enum class MismatchMode { MI, MA, MQA };

/// Replacement material drawn from a support set: distinct image refs, all
/// (question, answer) sources, and the answer label spaces.
class ReplacementPool {
  public:
    explicit ReplacementPool(const SupportSet& support);

    const std::vector<std::string>& images() const noexcept { return images_; }
    /// Distinct answers sharing `type`; the global pool when the dataset has
    /// no type information or `type` is unknown.
    const std::vector<std::string>& label_space(AnswerType type) const;
    const SupportSet& support() const noexcept { return *support_; }

  private:
    const SupportSet* support_;
    std::vector<std::string> images_;
    std::map<AnswerType, std::vector<std::string>> by_type_;
    std::vector<std::string> all_answers_;
    bool typed_ = false;
};

/// MI replaces every demo image, MA every demo answer (with a different
/// answer of the same label space), MQA every (question, answer) pair jointly.
InContextSequence mismatch(InContextSequence seq, MismatchMode mode, const ReplacementPool& pool, Rng& rng);

enum class ReorderBy { question, image };

/// SI-Q / SQ-I: sort demonstrations by similarity of their `by` embedding to
/// the query's, ascending left to right; ties by sample_id.
InContextSequence reorder_cross_modal(InContextSequence seq, ReorderBy by, const SimilarityIndex& demo_index,
                                      std::span<const float> query_vector);

InContextSequence reverse(InContextSequence seq);

InContextSequence prepend_instruction(InContextSequence seq, std::string instruction);

/// Thrown by to_declarative for question forms outside the rule table.
class UnsupportedPattern : public Error {
  public:
    using Error::Error;
};

inline constexpr std::string_view kMaskToken = "[MASK]";

/// Rewrites a question as a declarative sentence with one [MASK] slot.
/// Handles how many / what color / what / where / is-are / does-do forms.
std::string to_declarative(std::string_view question);

/// Applies to_declarative to every demo and the query; unsupported
/// questions keep their interrogative form.
InContextSequence declarative_sequence(InContextSequence seq);

// ---------------------------------------------------------------------------
// TR / TL probes

enum class ProbeMode { standard, mismatch, new_mapping };

struct ProbeSpec {
    ProbeMode mode = ProbeMode::standard;
    std::map<std::string, std::string> mapping; // new_mapping only
    double correct_fraction = 0.5;             // mismatch only

    void validate() const;
};

ProbeSpec probe_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ProbeSpec& p);

std::map<std::string, std::string> invert_mapping(const std::map<std::string, std::string>& mapping);

/// Set-level probe transform. standard and mismatch return the set
/// unchanged (mismatch acts per sequence, see apply_mismatch_probe);
/// new_mapping rewrites every answer through the bijection.
SupportSet build_trtl_probe(const SupportSet& support, const ProbeSpec& probe);

/// Rewrites answers of a set through `mapping`; answers outside the domain
/// are left as-is.
SupportSet apply_answer_mapping(const SupportSet& support, const std::map<std::string, std::string>& mapping);

/// Keeps exactly round(fraction * n) demonstration answers and flips the
/// rest to the other yes/no answer, positions chosen under `rng`.
InContextSequence apply_mismatch_probe(InContextSequence seq, double correct_fraction, Rng& rng);

// ---------------------------------------------------------------------------
// Query noise

/// Removes every key token (case-insensitive) from the question. Never
/// returns an empty string: falls back to "?".
std::string degrade_question(std::string_view question, const std::set<std::string>& key_tokens);

/// Default key tokens: everything not in the bundled function-word list.
std::set<std::string> default_key_tokens(std::string_view question);

/// Newline-delimited {sample_id, key_tokens:[...]} annotations.
std::map<SampleId, std::set<std::string>> load_key_token_file(const std::filesystem::path& path);

InContextSequence degrade_query(InContextSequence seq, const std::set<std::string>& key_tokens);

} // namespace icl
