#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "icl/sequence.hpp"

namespace icl {

struct PromptTemplate {
    std::string image_token;
    std::string demo_pattern;  // contains {Q} and {A} once each
    std::string query_pattern; // contains {Q} once, no {A}
    std::string chunk_separator;
    std::string instruction_separator;

    /// Throws ValidationError on slot violations.
    void validate() const;
};

/// "<image>" / "Question:{Q} Short answer:{A}" / "Question:{Q} Short answer:" /
/// "<|endofchunk|>" / "\n".
PromptTemplate default_template();

/// Applies overrides from a JSON object with any of the template field names.
PromptTemplate template_from_json(const nlohmann::json& overrides, PromptTemplate base = default_template());
nlohmann::json to_json(const PromptTemplate& t);

struct PromptText {
    std::string text;
    std::vector<std::string> image_refs; // demo order, then the query
};

/// [instruction + instruction_separator] + demos joined by chunk_separator +
/// chunk_separator + query. Each demo and the query start with image_token.
PromptText serialize(const InContextSequence& seq, const PromptTemplate& tmpl);

/// Inverse of serialize for sequences whose texts avoid template tokens.
struct ParsedPrompt {
    std::optional<std::string> instruction;
    std::vector<std::pair<std::string, std::string>> demos; // (question, answer)
    std::string query_question;
};

ParsedPrompt parse_prompt(const std::string& text, const PromptTemplate& tmpl);

/// Rough token estimate for context-length reporting (4 characters per token).
inline std::size_t estimated_tokens(const PromptText& p) { return (p.text.size() + 3) / 4; }

} // namespace icl
