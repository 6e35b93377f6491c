// Rule-table rewrite of VQA questions into declarative sentences with a
// single [MASK] answer slot.

#include <algorithm>
#include <cctype>
#include <set>
#include <sstream>

#include "icl/manipulate.hpp"

namespace icl {

namespace {

using Words = std::vector<std::string>;

std::string lower(std::string s) {
    for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return s;
}

Words split_question(std::string_view q) {
    std::string cleaned(q);
    while (!cleaned.empty() && (cleaned.back() == '?' || cleaned.back() == '.' ||
                                std::isspace(static_cast<unsigned char>(cleaned.back()))))
        cleaned.pop_back();
    Words out;
    std::istringstream in(cleaned);
    std::string w;
    while (in >> w) out.push_back(w);
    return out;
}

std::string join(const Words& w, std::size_t begin, std::size_t end) {
    std::string out;
    for (std::size_t i = begin; i < end && i < w.size(); ++i) {
        if (!out.empty()) out.push_back(' ');
        out += w[i];
    }
    return out;
}

std::string sentence(std::string s) {
    if (!s.empty()) s[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(s[0])));
    return s;
}

// Undo sentence-initial capitalization, leaving acronyms ("TV") alone.
std::string decapitalize(std::string s) {
    if (s.size() > 1 && std::isupper(static_cast<unsigned char>(s[0])) &&
        !std::isupper(static_cast<unsigned char>(s[1])))
        s[0] = static_cast<char>(std::tolower(static_cast<unsigned char>(s[0])));
    return s;
}

bool is_any(const std::string& w, std::initializer_list<const char*> options) {
    const auto lw = lower(w);
    return std::any_of(options.begin(), options.end(), [&](const char* o) { return lw == o; });
}

bool is_determiner(const std::string& w) {
    return is_any(w, {"the", "a", "an", "his", "her", "its", "their", "my", "your", "our"});
}

bool is_demonstrative(const std::string& w) { return is_any(w, {"this", "that", "these", "those"}); }

bool is_pronoun(const std::string& w) {
    return is_any(w, {"it", "he", "she", "they", "there", "someone", "anyone", "everyone", "anything", "something",
                      "you", "we", "i"});
}

/// Length of the noun phrase starting at `start`.
std::size_t noun_phrase_length(const Words& w, std::size_t start) {
    const std::size_t remaining = w.size() - start;
    if (remaining == 0) return 0;
    if (is_pronoun(w[start])) return 1;
    if (is_demonstrative(w[start])) {
        // "this dog white" -> "this dog"; "this a cat" / "this white" -> "this".
        if (remaining >= 3 && !is_determiner(w[start + 1])) return 2;
        return 1;
    }
    if (is_determiner(w[start])) return remaining >= 2 ? 2 : 1;
    return 1;
}

std::string third_person(const std::string& verb) {
    const auto v = lower(verb);
    auto ends = [&](std::string_view suf) { return v.size() >= suf.size() && v.ends_with(suf); };
    if (v == "have") return "has";
    if (ends("s") || ends("sh") || ends("ch") || ends("x") || ends("z") || ends("o")) return verb + "es";
    if (ends("y") && v.size() > 1 && std::string_view("aeiou").find(v[v.size() - 2]) == std::string_view::npos)
        return verb.substr(0, verb.size() - 1) + "ies";
    return verb + "s";
}

const std::string kMask(kMaskToken);

std::string rewrite(const Words& w) {
    if (w.empty()) throw UnsupportedPattern("empty question");
    const auto first = lower(w[0]);

    // how many <np> (are|is) [there] <rest>
    if (first == "how" && w.size() >= 4 && lower(w[1]) == "many") {
        std::size_t verb = 2;
        while (verb < w.size() && !is_any(w[verb], {"are", "is"})) ++verb;
        if (verb == 2 || verb == w.size()) throw UnsupportedPattern("how-many question without is/are");
        const std::string np = join(w, 2, verb);
        std::size_t rest = verb + 1;
        if (rest < w.size() && lower(w[rest]) == "there") ++rest;
        std::string out = "There " + lower(w[verb]) + " " + kMask + " " + np;
        if (rest < w.size()) out += " " + join(w, rest, w.size());
        return out;
    }

    // what color (is|are) <np>
    if (first == "what" && w.size() >= 4 && lower(w[1]) == "color" && is_any(w[2], {"is", "are"}))
        return "The color of " + join(w, 3, w.size()) + " is " + kMask;

    if (first == "what" && w.size() >= 3) {
        // what (is|are) <x>
        if (is_any(w[1], {"is", "are"})) {
            const auto verb = lower(w[1]);
            if (w.size() >= 4 && lower(w.back()).ends_with("ing"))
                return sentence(join(w, 2, w.size() - 1)) + " " + verb + " " + w.back() + " " + kMask;
            return sentence(join(w, 2, w.size())) + " " + verb + " " + kMask;
        }
        // what (does|do) <np> <verb> [rest]
        if (is_any(w[1], {"does", "do"}) && w.size() >= 4) {
            const bool singular = lower(w[1]) == "does";
            const std::string verb = singular ? third_person(w.back()) : w.back();
            return sentence(join(w, 2, w.size() - 1)) + " " + verb + " " + kMask;
        }
        // what <noun> (is|are) <x>
        if (w.size() >= 4 && is_any(w[2], {"is", "are"})) {
            const auto verb = lower(w[2]);
            const auto noun = w[1];
            if (w.size() == 4 && (is_demonstrative(w[3]) || lower(w[3]) == "it"))
                return sentence(lower(w[3])) + " " + noun + " " + verb + " " + kMask;
            if (is_determiner(w[3]))
                return "The " + noun + " of " + join(w, 3, w.size()) + " " + verb + " " + kMask;
            return "The " + noun + " " + join(w, 3, w.size()) + " " + verb + " " + kMask;
        }
        throw UnsupportedPattern("unsupported what-question form");
    }

    // where (is|are) <x>
    if (first == "where" && w.size() >= 3 && is_any(w[1], {"is", "are"}))
        return sentence(join(w, 2, w.size())) + " " + lower(w[1]) + " " + kMask;

    // (is|are) <np> <predicate>
    if (is_any(w[0], {"is", "are"}) && w.size() >= 3) {
        const std::size_t np = noun_phrase_length(w, 1);
        if (1 + np >= w.size()) throw UnsupportedPattern("yes/no question without a predicate");
        return sentence(join(w, 1, 1 + np)) + " " + first + " " + kMask + " " + join(w, 1 + np, w.size());
    }

    // (does|do) <np> <verb phrase>
    if (is_any(w[0], {"does", "do"}) && w.size() >= 3) {
        const std::size_t np = noun_phrase_length(w, 1);
        if (1 + np >= w.size()) throw UnsupportedPattern("does/do question without a verb phrase");
        return sentence(join(w, 1, 1 + np)) + " " + first + " " + kMask + " " + join(w, 1 + np, w.size());
    }

    throw UnsupportedPattern("no declarative rule for question form starting with '" + w[0] + "'");
}

} // namespace

std::string to_declarative(std::string_view question) {
    if (question.find(kMaskToken) != std::string_view::npos)
        throw UnsupportedPattern("question already contains " + std::string(kMaskToken));
    Words w = split_question(question);
    if (!w.empty()) w[0] = decapitalize(w[0]);
    return rewrite(w);
}

InContextSequence declarative_sequence(InContextSequence seq) {
    auto convert = [](std::string& q) {
        try {
            q = to_declarative(q);
        } catch (const UnsupportedPattern&) {
            // Falls back to the question-answer form.
        }
    };
    for (auto& d : seq.demos) convert(d.question);
    convert(seq.query.question);
    seq.log.emplace_back("declarative");
    return seq;
}

} // namespace icl
