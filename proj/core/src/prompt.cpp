#include "icl/prompt.hpp"

#include "icl/error.hpp"

namespace icl {

namespace {

constexpr std::string_view kQ = "{Q}";
constexpr std::string_view kA = "{A}";

std::size_t count(std::string_view hay, std::string_view needle) {
    if (needle.empty()) return 0;
    std::size_t n = 0;
    for (auto pos = hay.find(needle); pos != std::string_view::npos; pos = hay.find(needle, pos + needle.size()))
        ++n;
    return n;
}

std::string render_pattern(std::string_view pattern, std::string_view q, std::optional<std::string_view> a) {
    std::string out;
    std::size_t i = 0;
    while (i < pattern.size()) {
        if (pattern.compare(i, kQ.size(), kQ) == 0) {
            out += q;
            i += kQ.size();
        } else if (a && pattern.compare(i, kA.size(), kA) == 0) {
            out += *a;
            i += kA.size();
        } else {
            out.push_back(pattern[i++]);
        }
    }
    return out;
}

/// Literal fragments of a pattern between slots, non-empty only.
std::vector<std::string> literals(std::string_view pattern) {
    std::vector<std::string> out;
    std::string cur;
    std::size_t i = 0;
    while (i < pattern.size()) {
        if (pattern.compare(i, 3, kQ) == 0 || pattern.compare(i, 3, kA) == 0) {
            if (!cur.empty()) out.push_back(cur);
            cur.clear();
            i += 3;
        } else {
            cur.push_back(pattern[i++]);
        }
    }
    if (!cur.empty()) out.push_back(cur);
    return out;
}

void reject_control_tokens(const std::string& field, std::string_view value, const PromptTemplate& t) {
    std::vector<std::string> tokens{t.image_token, t.chunk_separator};
    for (auto& l : literals(t.demo_pattern)) tokens.push_back(l);
    for (auto& l : literals(t.query_pattern)) tokens.push_back(l);
    for (const auto& tok : tokens) {
        // Single spaces and other whitespace-only literals are ordinary text.
        if (tok.find_first_not_of(" \t") == std::string::npos) continue;
        if (value.find(tok) != std::string_view::npos)
            throw ValidationError(field + " contains template control token '" + tok + "'");
    }
}

} // namespace

void PromptTemplate::validate() const {
    if (image_token.empty()) throw ValidationError("template: image_token must be non-empty");
    if (chunk_separator.empty()) throw ValidationError("template: chunk_separator must be non-empty");
    if (count(demo_pattern, kQ) != 1 || count(demo_pattern, kA) != 1)
        throw ValidationError("template: demo_pattern must contain {Q} and {A} exactly once");
    if (count(query_pattern, kQ) != 1 || count(query_pattern, kA) != 0)
        throw ValidationError("template: query_pattern must contain {Q} exactly once and no {A}");
    if (demo_pattern.find(kQ) > demo_pattern.find(kA))
        throw ValidationError("template: demo_pattern must place {Q} before {A}");
}

PromptTemplate default_template() {
    return {"<image>", "Question:{Q} Short answer:{A}", "Question:{Q} Short answer:", "<|endofchunk|>", "\n"};
}

PromptTemplate template_from_json(const nlohmann::json& overrides, PromptTemplate base) {
    if (overrides.is_null()) return base;
    auto set = [&](const char* key, std::string& field) {
        if (overrides.contains(key)) field = overrides.at(key).get<std::string>();
    };
    set("image_token", base.image_token);
    set("demo_pattern", base.demo_pattern);
    set("query_pattern", base.query_pattern);
    set("chunk_separator", base.chunk_separator);
    set("instruction_separator", base.instruction_separator);
    base.validate();
    return base;
}

nlohmann::json to_json(const PromptTemplate& t) {
    return {{"image_token", t.image_token},
            {"demo_pattern", t.demo_pattern},
            {"query_pattern", t.query_pattern},
            {"chunk_separator", t.chunk_separator},
            {"instruction_separator", t.instruction_separator}};
}

PromptText serialize(const InContextSequence& seq, const PromptTemplate& tmpl) {
    tmpl.validate();
    PromptText out;
    if (seq.instruction) {
        if (seq.instruction->find(tmpl.instruction_separator) != std::string::npos && !tmpl.instruction_separator.empty())
            throw ValidationError("instruction contains the instruction separator");
        reject_control_tokens("instruction", *seq.instruction, tmpl);
        out.text += *seq.instruction;
        out.text += tmpl.instruction_separator;
    }
    for (const auto& d : seq.demos) {
        reject_control_tokens("question of demonstration " + std::to_string(d.sample_id), d.question, tmpl);
        reject_control_tokens("answer of demonstration " + std::to_string(d.sample_id), d.answer, tmpl);
        out.text += tmpl.image_token;
        out.text += render_pattern(tmpl.demo_pattern, d.question, d.answer);
        out.text += tmpl.chunk_separator;
        out.image_refs.push_back(d.image_ref);
    }
    reject_control_tokens("query question", seq.query.question, tmpl);
    out.text += tmpl.image_token;
    out.text += render_pattern(tmpl.query_pattern, seq.query.question, std::nullopt);
    out.image_refs.push_back(seq.query.image_ref);
    return out;
}

namespace {

/// Matches `pattern` against `chunk`; slot values are delimited by the
/// literal text that follows them.
std::vector<std::string> match_pattern(std::string_view pattern, std::string_view chunk) {
    std::vector<std::string> values;
    std::size_t p = 0, c = 0;
    while (p < pattern.size()) {
        if (pattern.compare(p, 3, kQ) == 0 || pattern.compare(p, 3, kA) == 0) {
            p += 3;
            // Literal up to the next slot (or end).
            std::size_t next = pattern.size();
            for (std::size_t i = p; i + 3 <= pattern.size(); ++i)
                if (pattern.compare(i, 3, kQ) == 0 || pattern.compare(i, 3, kA) == 0) {
                    next = i;
                    break;
                }
            const auto lit = pattern.substr(p, next - p);
            std::size_t end = lit.empty() ? chunk.size() : chunk.find(lit, c);
            if (end == std::string_view::npos) throw ParseError("prompt chunk does not match template");
            values.emplace_back(chunk.substr(c, end - c));
            c = end;
        } else {
            if (c >= chunk.size() || chunk[c] != pattern[p]) throw ParseError("prompt chunk does not match template");
            ++p;
            ++c;
        }
    }
    if (c != chunk.size()) throw ParseError("trailing text after template match");
    return values;
}

} // namespace

ParsedPrompt parse_prompt(const std::string& text, const PromptTemplate& tmpl) {
    ParsedPrompt out;
    std::string_view rest = text;
    if (!rest.starts_with(tmpl.image_token)) {
        const auto sep = rest.find(tmpl.instruction_separator + tmpl.image_token);
        if (sep == std::string_view::npos) throw ParseError("prompt does not start with an image token");
        out.instruction = std::string(rest.substr(0, sep));
        rest.remove_prefix(sep + tmpl.instruction_separator.size());
    }

    std::vector<std::string_view> chunks;
    for (std::size_t pos; (pos = rest.find(tmpl.chunk_separator)) != std::string_view::npos;) {
        chunks.push_back(rest.substr(0, pos));
        rest.remove_prefix(pos + tmpl.chunk_separator.size());
    }
    chunks.push_back(rest);

    for (std::size_t i = 0; i < chunks.size(); ++i) {
        auto chunk = chunks[i];
        if (!chunk.starts_with(tmpl.image_token)) throw ParseError("chunk without image token");
        chunk.remove_prefix(tmpl.image_token.size());
        const bool last = i + 1 == chunks.size();
        const auto values = match_pattern(last ? tmpl.query_pattern : tmpl.demo_pattern, chunk);
        if (last) {
            out.query_question = values.at(0);
        } else {
            const bool q_first = tmpl.demo_pattern.find(kQ) < tmpl.demo_pattern.find(kA);
            out.demos.emplace_back(values.at(q_first ? 0 : 1), values.at(q_first ? 1 : 0));
        }
    }
    return out;
}

} // namespace icl
