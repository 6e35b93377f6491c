#include "icl/manipulate.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

namespace icl {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Replacement pool

ReplacementPool::ReplacementPool(const SupportSet& support) : support_(&support) {
    std::set<std::string> images, all;
    std::map<AnswerType, std::set<std::string>> typed;
    for (const auto& s : support.samples()) {
        images.insert(s.image_ref);
        all.insert(s.canonical_answer);
        if (s.answer_type != AnswerType::unknown) {
            typed[s.answer_type].insert(s.canonical_answer);
            typed_ = true;
        }
    }
    images_.assign(images.begin(), images.end());
    all_answers_.assign(all.begin(), all.end());
    for (auto& [t, answers] : typed) by_type_[t].assign(answers.begin(), answers.end());
}

const std::vector<std::string>& ReplacementPool::label_space(AnswerType type) const {
    if (typed_ && type != AnswerType::unknown) {
        if (auto it = by_type_.find(type); it != by_type_.end()) return it->second;
    }
    return all_answers_;
}

namespace {

/// Uniform draw from `items` other than `current` (if present). Throws `error` when nothing else exists.
const std::string& draw_other(const std::vector<std::string>& items, const std::string& current, Rng& rng,
                              const char* error) {
    auto it = std::lower_bound(items.begin(), items.end(), current);
    const bool present = it != items.end() && *it == current;
    const std::size_t skip = present ? static_cast<std::size_t>(it - items.begin()) : items.size();
    const std::size_t pool = items.size() - (present ? 1 : 0);
    if (pool == 0) throw ValidationError(error);
    std::size_t pick = rng.uniform(pool);
    if (pick >= skip) ++pick;
    return items[pick];
}

} // namespace

InContextSequence mismatch(InContextSequence seq, MismatchMode mode, const ReplacementPool& pool, Rng& rng) {
    const auto samples = pool.support().samples();
    switch (mode) {
    case MismatchMode::MI:
        for (auto& d : seq.demos) d.image_ref = draw_other(pool.images(), d.image_ref, rng, "no alternative image");
        seq.log.emplace_back("mismatch:MI");
        break;
    case MismatchMode::MA:
        for (auto& d : seq.demos)
            d.answer = draw_other(pool.label_space(d.answer_type), d.answer, rng, "no alternative answer");
        seq.log.emplace_back("mismatch:MA");
        break;
    case MismatchMode::MQA:
        for (auto& d : seq.demos) {
            const bool own = pool.support().contains(d.sample_id);
            const std::size_t skip = own ? pool.support().position(d.sample_id) : samples.size();
            const std::size_t n = samples.size() - (own ? 1 : 0);
            if (n == 0) throw ValidationError("no alternative question-answer pair");
            std::size_t pick = rng.uniform(n);
            if (pick >= skip) ++pick;
            const auto& src = samples[pick];
            d.question = src.question;
            d.answer = src.canonical_answer;
            d.answer_type = src.answer_type;
        }
        seq.log.emplace_back("mismatch:MQA");
        break;
    }
    return seq;
}

// ---------------------------------------------------------------------------
// Ordering

InContextSequence reorder_cross_modal(InContextSequence seq, ReorderBy by, const SimilarityIndex& demo_index,
                                      std::span<const float> query_vector) {
    std::vector<std::pair<double, std::size_t>> keyed;
    keyed.reserve(seq.demos.size());
    for (std::size_t i = 0; i < seq.demos.size(); ++i) {
        auto v = demo_index.vector(seq.demos[i].sample_id);
        if (!v)
            throw ValidationError("demonstration " + std::to_string(seq.demos[i].sample_id) + " has no " +
                                  std::string(to_string(demo_index.modality())) + " embedding");
        keyed.emplace_back(cosine(*v, query_vector), i);
    }
    std::stable_sort(keyed.begin(), keyed.end(), [&](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first < b.first;
        return seq.demos[a.second].sample_id < seq.demos[b.second].sample_id;
    });
    std::vector<Demonstration> out;
    out.reserve(keyed.size());
    for (const auto& [score, i] : keyed) {
        out.push_back(std::move(seq.demos[i]));
        out.back().score = score;
    }
    seq.demos = std::move(out);
    seq.log.emplace_back(by == ReorderBy::question ? "reorder:SI-Q" : "reorder:SQ-I");
    return seq;
}

InContextSequence reverse(InContextSequence seq) {
    std::reverse(seq.demos.begin(), seq.demos.end());
    seq.log.emplace_back("reverse");
    return seq;
}

InContextSequence prepend_instruction(InContextSequence seq, std::string instruction) {
    if (instruction.empty()) throw ValidationError("instruction must be non-empty");
    seq.instruction = std::move(instruction);
    seq.log.emplace_back("instruction");
    return seq;
}

// ---------------------------------------------------------------------------
// Probes

void ProbeSpec::validate() const {
    switch (mode) {
    case ProbeMode::standard: break;
    case ProbeMode::mismatch:
        if (!(correct_fraction >= 0.0 && correct_fraction <= 1.0))
            throw ValidationError("mismatch probe: correct_fraction must be in [0, 1]");
        break;
    case ProbeMode::new_mapping: {
        if (mapping.empty()) throw ValidationError("new_mapping probe needs a mapping");
        std::set<std::string> range;
        for (const auto& [from, to] : mapping) {
            if (!range.insert(to).second) throw ValidationError("new_mapping is not injective: '" + to + "'");
            if (mapping.count(to)) throw ValidationError("new_mapping range overlaps its domain at '" + to + "'");
        }
        break;
    }
    }
}

ProbeSpec probe_from_json(const json& j) {
    ProbeSpec p;
    const auto mode = j.value("mode", std::string("standard"));
    if (mode == "standard")
        p.mode = ProbeMode::standard;
    else if (mode == "mismatch")
        p.mode = ProbeMode::mismatch;
    else if (mode == "new_mapping")
        p.mode = ProbeMode::new_mapping;
    else
        throw ValidationError("unknown probe mode '" + mode + "'");
    if (j.contains("mapping")) p.mapping = j["mapping"].get<std::map<std::string, std::string>>();
    p.correct_fraction = j.value("correct_fraction", 0.5);
    p.validate();
    return p;
}

json to_json(const ProbeSpec& p) {
    json j;
    switch (p.mode) {
    case ProbeMode::standard: j["mode"] = "standard"; break;
    case ProbeMode::mismatch:
        j["mode"] = "mismatch";
        j["correct_fraction"] = p.correct_fraction;
        break;
    case ProbeMode::new_mapping:
        j["mode"] = "new_mapping";
        j["mapping"] = p.mapping;
        break;
    }
    return j;
}

std::map<std::string, std::string> invert_mapping(const std::map<std::string, std::string>& mapping) {
    std::map<std::string, std::string> out;
    for (const auto& [from, to] : mapping)
        if (!out.emplace(to, from).second) throw ValidationError("mapping is not invertible at '" + to + "'");
    return out;
}

SupportSet apply_answer_mapping(const SupportSet& support, const std::map<std::string, std::string>& mapping) {
    auto map_one = [&](const std::string& a) {
        auto it = mapping.find(a);
        return it == mapping.end() ? a : it->second;
    };
    std::vector<VqaSample> out(support.samples().begin(), support.samples().end());
    for (auto& s : out) {
        for (auto& a : s.gt_answers) a = map_one(a);
        s.canonical_answer = map_one(s.canonical_answer);
    }
    return SupportSet(std::move(out), support.kind());
}

SupportSet build_trtl_probe(const SupportSet& support, const ProbeSpec& probe) {
    probe.validate();
    if (probe.mode != ProbeMode::new_mapping) return support;

    std::set<std::string> range;
    for (const auto& [from, to] : probe.mapping) range.insert(to);
    for (const auto& s : support.samples()) {
        if (!probe.mapping.count(s.canonical_answer))
            throw ValidationError("new_mapping probe: sample " + std::to_string(s.sample_id) + " has answer '" +
                                  s.canonical_answer + "' outside the mapping domain");
        for (const auto& a : s.gt_answers)
            if (range.count(a))
                throw ValidationError("new_mapping probe: sample " + std::to_string(s.sample_id) +
                                      " already uses mapped answer '" + a + "'");
    }
    return apply_answer_mapping(support, probe.mapping);
}

InContextSequence apply_mismatch_probe(InContextSequence seq, double correct_fraction, Rng& rng) {
    const std::size_t n = seq.demos.size();
    const auto keep = static_cast<std::size_t>(std::llround(correct_fraction * static_cast<double>(n)));
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(std::span<std::size_t>(order));
    for (std::size_t r = keep; r < n; ++r) {
        auto& d = seq.demos[order[r]];
        if (d.answer == "yes")
            d.answer = "no";
        else if (d.answer == "no")
            d.answer = "yes";
        else
            throw ValidationError("mismatch probe: demonstration answer '" + d.answer + "' is not yes/no");
    }
    seq.log.emplace_back("probe:mismatch");
    return seq;
}

// ---------------------------------------------------------------------------
// Question degradation

namespace {

const std::set<std::string>& function_words() {
    static const std::set<std::string> words{
        "a",     "about", "above", "all",   "am",    "an",    "and",   "any",   "are",   "as",    "at",
        "be",    "been",  "behind", "being", "below", "but",   "by",    "can",   "could", "did",   "do",
        "does",  "down",  "for",   "from",  "had",   "has",   "have",  "he",    "her",   "here",  "him",
        "his",   "how",   "i",     "if",    "in",    "into",  "is",    "it",    "its",   "many",  "may",
        "me",    "might", "much",  "must",  "my",    "near",  "next",  "no",    "not",   "of",    "on",
        "onto",  "or",    "our",   "over",  "shall", "she",   "should", "some", "than",  "that",  "the",
        "their", "them",  "there", "these", "they",  "this",  "those", "to",    "under", "up",    "was",
        "we",    "were",  "what",  "when",  "where", "which", "who",   "whom",  "whose", "why",   "will",
        "with",  "would", "you",   "your"};
    return words;
}

std::string lower(std::string_view s) {
    std::string out(s);
    for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return out;
}

struct Token {
    std::string text;
    bool word;
};

std::vector<Token> tokenize(std::string_view s) {
    std::vector<Token> out;
    std::string cur;
    auto flush = [&] {
        if (!cur.empty()) out.push_back({cur, true});
        cur.clear();
    };
    for (char ch : s) {
        const auto c = static_cast<unsigned char>(ch);
        if (std::isalnum(c) || ch == '\'' || c >= 0x80) {
            cur.push_back(ch);
        } else {
            flush();
            if (!std::isspace(c)) out.push_back({std::string(1, ch), false});
        }
    }
    flush();
    return out;
}

std::string join_tokens(const std::vector<Token>& tokens) {
    std::string out;
    for (const auto& t : tokens) {
        if (t.word && !out.empty()) out.push_back(' ');
        out += t.text;
    }
    return out;
}

} // namespace

std::string degrade_question(std::string_view question, const std::set<std::string>& key_tokens) {
    if (key_tokens.empty()) return std::string(question);
    std::set<std::string> keys;
    for (const auto& k : key_tokens) keys.insert(lower(k));
    std::vector<Token> kept;
    for (auto& t : tokenize(question))
        if (!t.word || !keys.count(lower(t.text))) kept.push_back(std::move(t));
    std::string out = join_tokens(kept);
    bool has_word = std::any_of(kept.begin(), kept.end(), [](const Token& t) { return t.word; });
    return has_word ? out : std::string("?");
}

std::set<std::string> default_key_tokens(std::string_view question) {
    std::set<std::string> out;
    for (const auto& t : tokenize(question))
        if (t.word && !function_words().count(lower(t.text))) out.insert(lower(t.text));
    return out;
}

std::map<SampleId, std::set<std::string>> load_key_token_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    std::map<SampleId, std::set<std::string>> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            const auto j = json::parse(line);
            auto& set = out[j.at("sample_id").get<SampleId>()];
            for (const auto& t : j.at("key_tokens")) set.insert(t.get<std::string>());
        } catch (const json::exception& e) {
            throw ParseError(path.string() + " line " + std::to_string(lineno) + ": " + e.what());
        }
    }
    return out;
}

InContextSequence degrade_query(InContextSequence seq, const std::set<std::string>& key_tokens) {
    seq.query.question = degrade_question(seq.query.question, key_tokens);
    seq.log.emplace_back("noise:question");
    return seq;
}

} // namespace icl
