#include "icl/config.hpp"

#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include "icl/error.hpp"
#include "icl/hashing.hpp"

namespace icl {

using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

const std::map<std::string, ManipulationKind>& manipulation_names() {
    static const std::map<std::string, ManipulationKind> names{
        {"MI", ManipulationKind::MI},
        {"MA", ManipulationKind::MA},
        {"MQA", ManipulationKind::MQA},
        {"SI-Q", ManipulationKind::reorder_si_q},
        {"SQ-I", ManipulationKind::reorder_sq_i},
        {"reverse", ManipulationKind::reverse},
        {"instruction", ManipulationKind::instruction},
        {"declarative", ManipulationKind::declarative},
        {"blur_query", ManipulationKind::blur_query},
        {"degrade_question", ManipulationKind::degrade_question},
    };
    return names;
}

std::string instruction_by_name(const std::string& s) {
    if (s == "instruct1") return std::string(instructions::instruct1);
    if (s == "instruct2") return std::string(instructions::instruct2);
    if (s == "instruct3") return std::string(instructions::instruct3);
    return s;
}

std::string instruction_short_name(const std::string& text) {
    if (text == instructions::instruct1) return "Instruct1";
    if (text == instructions::instruct2) return "Instruct2";
    if (text == instructions::instruct3) return "Instruct3";
    return "Instruct:" + sha256_hex(text).substr(0, 8);
}

void interpolate_all(json& j) {
    if (j.is_string()) {
        j = interpolate_env(j.get<std::string>());
    } else if (j.is_array() || j.is_object()) {
        for (auto& v : j) interpolate_all(v);
    }
}

fs::path resolve(const fs::path& base, const json& j, const char* key) {
    if (!j.contains(key) || j[key].is_null()) return {};
    fs::path p = j[key].get<std::string>();
    if (p.empty()) return {};
    return p.is_absolute() ? p : base / p;
}

SplitFiles split_from_json(const json& j, const fs::path& base) {
    SplitFiles s;
    s.dataset.questions = resolve(base, j, "questions");
    s.dataset.annotations = resolve(base, j, "annotations");
    s.dataset.records = resolve(base, j, "records");
    s.dataset.image_root = resolve(base, j, "image_root");
    if (j.contains("embeddings")) {
        for (const auto& [k, v] : j["embeddings"].items()) {
            const auto m = modality_from_string(k);
            s.embeddings[m] = fs::path(v.get<std::string>()).is_absolute() ? fs::path(v.get<std::string>())
                                                                           : base / v.get<std::string>();
        }
    }
    if (j.contains("tags")) {
        s.image_tags = resolve(base, j["tags"], "image");
        s.question_tags = resolve(base, j["tags"], "question");
    }
    return s;
}

/// Role-keyed inputs used for fingerprinting and existence checks.
std::vector<std::pair<std::string, fs::path>> file_roles(const ExperimentConfig& c) {
    std::vector<std::pair<std::string, fs::path>> out;
    auto add_split = [&](const std::string& prefix, const SplitFiles& s) {
        if (!s.dataset.questions.empty()) out.emplace_back(prefix + ".questions", s.dataset.questions);
        if (!s.dataset.annotations.empty()) out.emplace_back(prefix + ".annotations", s.dataset.annotations);
        if (!s.dataset.records.empty()) out.emplace_back(prefix + ".records", s.dataset.records);
        for (const auto& [m, p] : s.embeddings) out.emplace_back(prefix + ".embeddings." + std::string(to_string(m)), p);
        if (!s.image_tags.empty()) out.emplace_back(prefix + ".tags.image", s.image_tags);
        if (!s.question_tags.empty()) out.emplace_back(prefix + ".tags.question", s.question_tags);
    };
    add_split("support", c.support);
    if (!c.queries_from_support) add_split("queries", c.queries);
    if (!c.key_tokens.empty()) out.emplace_back("key_tokens", c.key_tokens);
    return out;
}

std::string_view to_string(TextEmbedderKind k) {
    switch (k) {
    case TextEmbedderKind::automatic: return "auto";
    case TextEmbedderKind::hashing: return "hashing";
    case TextEmbedderKind::precomputed_qa: return "precomputed_qa";
    case TextEmbedderKind::remote: return "remote";
    }
    return "?";
}

TextEmbedderKind text_embedder_kind_from_string(std::string_view s) {
    for (auto k : {TextEmbedderKind::automatic, TextEmbedderKind::hashing, TextEmbedderKind::precomputed_qa,
                   TextEmbedderKind::remote})
        if (to_string(k) == s) return k;
    throw ValidationError("unknown text_embedder kind '" + std::string(s) + "'");
}

} // namespace

std::string Manipulation::label() const {
    switch (kind) {
    case ManipulationKind::MI: return "MI";
    case ManipulationKind::MA: return "MA";
    case ManipulationKind::MQA: return "MQA";
    case ManipulationKind::reorder_si_q: return "SI-Q";
    case ManipulationKind::reorder_sq_i: return "SQ-I";
    case ManipulationKind::reverse: return "reverse";
    case ManipulationKind::instruction: return instruction_short_name(instruction);
    case ManipulationKind::declarative: return "declarative";
    case ManipulationKind::blur_query: return "blur";
    case ManipulationKind::degrade_question: return "noisyQ";
    }
    return "?";
}

Manipulation manipulation_from_json(const json& j) {
    Manipulation m;
    if (j.is_string()) {
        const auto s = j.get<std::string>();
        if (s == "instruct1" || s == "instruct2" || s == "instruct3") {
            m.kind = ManipulationKind::instruction;
            m.instruction = instruction_by_name(s);
            return m;
        }
        auto it = manipulation_names().find(s);
        if (it == manipulation_names().end() || it->second == ManipulationKind::instruction)
            throw ValidationError("unknown manipulation '" + s + "'");
        m.kind = it->second;
        return m;
    }
    if (j.is_object() && j.contains("instruction")) {
        m.kind = ManipulationKind::instruction;
        m.instruction = instruction_by_name(j["instruction"].get<std::string>());
        if (m.instruction.empty()) throw ValidationError("instruction manipulation with empty text");
        return m;
    }
    throw ValidationError("manipulation must be a name or {\"instruction\": text}: " + j.dump());
}

json to_json(const Manipulation& m) {
    if (m.kind == ManipulationKind::instruction) return {{"instruction", m.instruction}};
    for (const auto& [name, kind] : manipulation_names())
        if (kind == m.kind) return name;
    return nullptr;
}

std::string ArmSpec::label() const {
    if (!name.empty()) return name;
    std::string out = strategy.label();
    for (const auto& m : manipulations) out += "+" + m.label();
    if (probe) {
        switch (probe->mode) {
        case ProbeMode::standard: out += "+probe:standard"; break;
        case ProbeMode::mismatch: out += "+probe:mismatch"; break;
        case ProbeMode::new_mapping: out += "+probe:new_mapping"; break;
        }
    }
    return out;
}

ArmSpec arm_from_json(const json& j, std::uint64_t default_seed) {
    ArmSpec a;
    if (j.is_string()) {
        a.strategy.kind = strategy_kind_from_string(j.get<std::string>());
        a.strategy.seed = default_seed;
        return a;
    }
    if (!j.is_object()) throw ValidationError("arm must be a strategy name or an object");
    a.name = j.value("name", "");
    const json& sj = j.contains("strategy") ? j["strategy"] : j;
    if (sj.is_string()) {
        a.strategy.kind = strategy_kind_from_string(sj.get<std::string>());
    } else {
        a.strategy = strategy_from_json(sj);
    }
    if (!sj.is_object() || !sj.contains("seed")) a.strategy.seed = default_seed;
    if (j.contains("manipulations"))
        for (const auto& m : j["manipulations"]) a.manipulations.push_back(manipulation_from_json(m));
    if (j.contains("probe")) a.probe = probe_from_json(j["probe"]);
    return a;
}

json to_json(const ArmSpec& a) {
    json j = {{"name", a.label()}, {"strategy", to_json(a.strategy)}};
    j["strategy"].erase("shots");
    json ms = json::array();
    for (const auto& m : a.manipulations) ms.push_back(to_json(m));
    j["manipulations"] = ms;
    j["probe"] = a.probe ? to_json(*a.probe) : json();
    return j;
}

std::string interpolate_env(std::string_view text) {
    std::string out;
    std::size_t i = 0;
    while (i < text.size()) {
        if (text.compare(i, 2, "${") != 0) {
            out.push_back(text[i++]);
            continue;
        }
        const auto close = text.find('}', i + 2);
        if (close == std::string_view::npos) throw ValidationError("unterminated ${ in '" + std::string(text) + "'");
        std::string expr(text.substr(i + 2, close - i - 2));
        std::optional<std::string> fallback;
        if (auto d = expr.find(":-"); d != std::string::npos) {
            fallback = expr.substr(d + 2);
            expr.resize(d);
        }
        const char* value = std::getenv(expr.c_str());
        if (value != nullptr && *value != '\0')
            out += value;
        else if (fallback)
            out += *fallback;
        else
            throw ValidationError("environment variable " + expr + " is not set");
        i = close + 1;
    }
    return out;
}

ExperimentConfig config_from_json(const json& raw, const fs::path& base_dir) {
    json j = raw;
    interpolate_all(j);
    ExperimentConfig c;
    try {
        if (!j.contains("seed")) throw ValidationError("config: 'seed' is mandatory");
        c.seed = j.at("seed").get<std::uint64_t>();

        const auto& d = j.at("dataset");
        c.kind = dataset_kind_from_string(d.at("kind").get<std::string>());
        c.normalize_answers = d.value("normalize_answers", true);
        c.support = split_from_json(d.at("support"), base_dir);
        if (d.contains("queries") && !d["queries"].is_null()) {
            c.queries = split_from_json(d["queries"], base_dir);
        } else {
            c.queries = c.support;
            c.queries_from_support = true;
        }
        c.key_tokens = resolve(base_dir, j, "key_tokens");

        if (j.contains("shots")) c.shots = j["shots"].get<std::vector<int>>();
        for (const auto& a : j.at("arms")) c.arms.push_back(arm_from_json(a, c.seed));

        if (j.contains("template")) {
            c.template_overrides = j["template"];
            c.prompt_template = template_from_json(c.template_overrides);
        }
        if (j.contains("oracle")) c.oracle = oracle_from_json(j["oracle"]);

        if (j.contains("text_embedder")) {
            const auto& t = j["text_embedder"];
            c.text_embedder.kind = text_embedder_kind_from_string(t.value("kind", "auto"));
            c.text_embedder.dim = t.value("dim", std::size_t{512});
            c.text_embedder.seed = t.value("seed", std::uint64_t{0});
            c.text_embedder.endpoint = t.value("endpoint", "");
        }
        if (j.contains("queries")) {
            const auto& q = j["queries"];
            if (q.contains("count")) c.subset.count = q["count"].get<std::size_t>();
            if (q.contains("ids")) c.subset.ids = q["ids"].get<std::vector<SampleId>>();
        }
        if (j.contains("blur")) {
            c.blur_sigma = j["blur"].value("sigma", 5.0);
            c.blur_dir = resolve(base_dir, j["blur"], "dir");
        }
        c.dump_prompts = j.value("dump_prompts", false);
        c.output_dir = resolve(base_dir, j, "output_dir");
        c.workers = j.value("workers", 1);
        c.scan_threads = j.value("scan_threads", std::size_t{1});
    } catch (const json::exception& e) {
        throw ValidationError(std::string("config: ") + e.what());
    }
    return c;
}

ExperimentConfig load_config(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config " + path.string());
    json j;
    try {
        j = json::parse(in, nullptr, true, /*ignore_comments=*/true);
    } catch (const json::exception& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
    auto base = path.parent_path();
    if (base.empty()) base = ".";
    return config_from_json(j, base);
}

void validate_config(const ExperimentConfig& c) {
    std::vector<std::string> problems;
    if (c.arms.empty()) problems.emplace_back("no arms configured");
    if (c.shots.empty()) problems.emplace_back("empty shot grid");
    for (int s : c.shots)
        if (s < 0) problems.push_back("negative shot count " + std::to_string(s));
    if (std::set<int>(c.shots.begin(), c.shots.end()).size() != c.shots.size())
        problems.emplace_back("duplicate shot counts");
    if (c.workers < 1) problems.emplace_back("workers must be >= 1");
    if (!(c.blur_sigma > 0)) problems.emplace_back("blur sigma must be positive");

    std::set<std::string> labels;
    for (const auto& a : c.arms) {
        if (!labels.insert(a.label()).second) problems.push_back("duplicate arm label '" + a.label() + "'");
        try {
            auto spec = a.strategy;
            spec.shots = c.shots.empty() ? 1 : c.shots.front();
            spec.validate();
            if (a.probe) a.probe->validate();
        } catch (const Error& e) {
            problems.push_back("arm '" + a.label() + "': " + e.what());
        }
        const bool needs_reorder = std::any_of(a.manipulations.begin(), a.manipulations.end(), [](const auto& m) {
            return m.kind == ManipulationKind::reorder_si_q || m.kind == ManipulationKind::reorder_sq_i;
        });
        if (needs_reorder && (!c.support.embeddings.count(Modality::image) ||
                              !c.support.embeddings.count(Modality::question)))
            problems.push_back("arm '" + a.label() + "': SI-Q/SQ-I need image and question embeddings");
    }

    switch (c.kind) {
    case DatasetKind::vqav2:
    case DatasetKind::okvqa:
        if (c.support.dataset.questions.empty() || c.support.dataset.annotations.empty())
            problems.emplace_back("dataset: vqav2/okvqa need 'questions' and 'annotations'");
        break;
    default:
        if (c.support.dataset.records.empty()) problems.emplace_back("dataset: 'records' is required");
    }

    try {
        c.oracle.validate();
    } catch (const Error& e) {
        problems.emplace_back(e.what());
    }
    if (c.text_embedder.kind == TextEmbedderKind::remote && c.text_embedder.endpoint.empty())
        problems.emplace_back("text_embedder: remote requires an endpoint");

    for (const auto& [role, p] : file_roles(c))
        if (!fs::is_regular_file(p)) problems.push_back(role + ": file not found: " + p.string());
    if (!c.support.dataset.image_root.empty() && !fs::is_directory(c.support.dataset.image_root))
        problems.push_back("support.image_root: not a directory: " + c.support.dataset.image_root.string());

    if (!problems.empty()) {
        std::string msg = "invalid config:";
        for (const auto& p : problems) msg += "\n  - " + p;
        throw ValidationError(msg);
    }
}

json canonical_json(const ExperimentConfig& c) {
    json files = json::object();
    for (const auto& [role, p] : file_roles(c)) files[role] = true;
    json arms = json::array();
    for (const auto& a : c.arms) arms.push_back(to_json(a));
    json tmpl = to_json(c.prompt_template);
    return {{"dataset_kind", to_string(c.kind)},
            {"normalize_answers", c.normalize_answers},
            {"queries_from_support", c.queries_from_support},
            {"inputs", files},
            {"arms", arms},
            {"shots", c.shots},
            {"template", tmpl},
            {"oracle", to_json(c.oracle)},
            {"text_embedder",
             {{"kind", to_string(c.text_embedder.kind)},
              {"dim", c.text_embedder.dim},
              {"seed", c.text_embedder.seed},
              {"endpoint", c.text_embedder.endpoint}}},
            {"seed", c.seed},
            {"queries", {{"count", c.subset.count ? json(*c.subset.count) : json()}, {"ids", c.subset.ids}}},
            {"blur_sigma", c.blur_sigma},
            {"dump_prompts", c.dump_prompts}};
}

std::vector<fs::path> referenced_files(const ExperimentConfig& c) {
    std::set<fs::path> out;
    for (const auto& [role, p] : file_roles(c)) out.insert(p);
    return {out.begin(), out.end()};
}

std::string fingerprint(const ExperimentConfig& c) {
    json j = {{"config", canonical_json(c)}, {"checksums", json::object()}};
    for (const auto& [role, p] : file_roles(c)) j["checksums"][role] = sha256_file(p);
    return sha256_hex(j.dump());
}

} // namespace icl
