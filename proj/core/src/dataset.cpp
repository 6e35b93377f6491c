#include "icl/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "icl/error.hpp"

namespace icl {

namespace fs = std::filesystem;
using nlohmann::json;

std::string_view to_string(AnswerType t) {
    switch (t) {
    case AnswerType::yes_no: return "yes_no";
    case AnswerType::number: return "number";
    case AnswerType::other: return "other";
    case AnswerType::unknown: return "unknown";
    }
    return "unknown";
}

AnswerType answer_type_from_string(std::string_view s) {
    if (s == "yes_no" || s == "yes/no") return AnswerType::yes_no;
    if (s == "number") return AnswerType::number;
    if (s == "other") return AnswerType::other;
    return AnswerType::unknown;
}

std::string_view to_string(DatasetKind k) {
    switch (k) {
    case DatasetKind::vqav2: return "vqav2";
    case DatasetKind::vizwiz: return "vizwiz";
    case DatasetKind::okvqa: return "okvqa";
    case DatasetKind::synthetic: return "synthetic";
    }
    return "synthetic";
}

DatasetKind dataset_kind_from_string(std::string_view s) {
    if (s == "vqav2") return DatasetKind::vqav2;
    if (s == "vizwiz") return DatasetKind::vizwiz;
    if (s == "okvqa") return DatasetKind::okvqa;
    if (s == "synthetic") return DatasetKind::synthetic;
    throw ValidationError("unknown dataset kind '" + std::string(s) + "'");
}

SupportSet::SupportSet(std::vector<VqaSample> samples, DatasetKind kind) : samples_(std::move(samples)), kind_(kind) {
    if (samples_.empty()) throw ValidationError("empty dataset");
    by_id_.reserve(samples_.size());
    for (std::size_t i = 0; i < samples_.size(); ++i) {
        if (!by_id_.emplace(samples_[i].sample_id, i).second)
            throw ValidationError("duplicate sample_id " + std::to_string(samples_[i].sample_id));
    }
}

const VqaSample& SupportSet::at(SampleId id) const { return samples_[position(id)]; }

std::size_t SupportSet::position(SampleId id) const {
    auto it = by_id_.find(id);
    if (it == by_id_.end()) throw ValidationError("sample_id " + std::to_string(id) + " not in dataset");
    return it->second;
}

// ---------------------------------------------------------------------------
// Answer canonicalization

std::string normalize_answer(std::string_view raw) {
    std::string lowered;
    lowered.reserve(raw.size());
    for (std::size_t i = 0; i < raw.size(); ++i) {
        const auto c = static_cast<unsigned char>(raw[i]);
        if (std::ispunct(c)) {
            const bool decimal_point = c == '.' && i > 0 && i + 1 < raw.size() &&
                                       std::isdigit(static_cast<unsigned char>(raw[i - 1])) &&
                                       std::isdigit(static_cast<unsigned char>(raw[i + 1]));
            if (!decimal_point) continue;
        }
        lowered.push_back(static_cast<char>(std::tolower(c)));
    }

    std::string out;
    std::istringstream words(lowered);
    std::string word;
    while (words >> word) {
        if (word == "a" || word == "an" || word == "the") continue;
        if (!out.empty()) out.push_back(' ');
        out += word;
    }
    return out;
}

std::string modal_answer(std::span<const std::string> answers) {
    if (answers.empty()) return {};
    std::map<std::string, std::size_t> counts;
    for (const auto& a : answers) ++counts[a];
    // std::map iterates in lexicographic order, so the first maximum wins ties.
    auto best = counts.begin();
    for (auto it = counts.begin(); it != counts.end(); ++it)
        if (it->second > best->second) best = it;
    return best->first;
}

std::vector<std::string> pad_answers(std::vector<std::string> answers) {
    if (answers.empty()) throw ParseError("sample has no answers");
    if (answers.size() > kNumGroundTruth)
        throw ParseError("sample has " + std::to_string(answers.size()) + " answers, expected at most 10");
    const std::size_t original = answers.size();
    for (std::size_t i = original; i < kNumGroundTruth; ++i) answers.push_back(answers[i % original]);
    return answers;
}

// ---------------------------------------------------------------------------
// JSON helpers

namespace {

json read_json_file(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
}

const json& require(const json& record, const char* key, const std::string& where) {
    auto it = record.find(key);
    if (it == record.end()) throw ParseError(where + ": missing field '" + key + "'");
    return *it;
}

std::string require_string(const json& record, const char* key, const std::string& where) {
    const auto& v = require(record, key, where);
    if (!v.is_string()) throw ParseError(where + ": field '" + key + "' is not a string");
    return v.get<std::string>();
}

std::uint64_t require_id(const json& record, const char* key, const std::string& where) {
    const auto& v = require(record, key, where);
    if (!v.is_number_integer()) throw ParseError(where + ": field '" + key + "' is not an integer");
    return v.get<std::uint64_t>();
}

std::vector<std::string> answers_from_objects(const json& arr, const std::string& where) {
    if (!arr.is_array()) throw ParseError(where + ": 'answers' is not an array");
    std::vector<std::string> out;
    for (const auto& a : arr) {
        if (a.is_string())
            out.push_back(a.get<std::string>());
        else
            out.push_back(require_string(a, "answer", where));
    }
    return out;
}

std::string trim(std::string_view s) {
    auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return {};
    auto e = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(b, e - b + 1));
}

void finish_sample(VqaSample& s, std::vector<std::string> raw_answers, const LoadOptions& options) {
    for (auto& a : raw_answers) a = options.normalize_answers ? normalize_answer(a) : trim(a);
    s.gt_answers = pad_answers(std::move(raw_answers));
    s.canonical_answer = modal_answer(s.gt_answers);
}

void resolve_image(VqaSample& s, const fs::path& image_root, std::vector<std::string>* warnings) {
    if (image_root.empty()) return;
    fs::path p = image_root / s.image_ref;
    if (warnings && !fs::exists(p))
        warnings->push_back("sample " + std::to_string(s.sample_id) + ": image not found: " + p.string());
    s.image_ref = p.string();
}

TagSet tagset_from_json(const json& j) {
    TagSet out;
    for (auto it = j.begin(); it != j.end(); ++it) out[it.key()] = it.value().get<std::set<std::string>>();
    return out;
}

std::vector<VqaSample> load_question_annotation_pair(const DatasetPaths& paths,
                                                     const LoadOptions& options) {
    const json questions = read_json_file(paths.questions);
    const json annotations = read_json_file(paths.annotations);
    const auto& qs = require(questions, "questions", paths.questions.string());
    const auto& as = require(annotations, "annotations", paths.annotations.string());
    if (!qs.is_array() || !as.is_array()) throw ParseError("questions/annotations must be arrays");

    std::string subtype = questions.value("data_subtype", std::string{});
    if (subtype.empty()) subtype = "train2014";

    std::unordered_map<std::uint64_t, const json*> by_qid;
    by_qid.reserve(as.size());
    for (std::size_t i = 0; i < as.size(); ++i) {
        const std::string where = paths.annotations.string() + " record " + std::to_string(i);
        by_qid.emplace(require_id(as[i], "question_id", where), &as[i]);
    }

    std::vector<VqaSample> out;
    out.reserve(qs.size());
    for (std::size_t i = 0; i < qs.size(); ++i) {
        const std::string where = paths.questions.string() + " record " + std::to_string(i);
        const auto& q = qs[i];
        VqaSample s;
        s.sample_id = require_id(q, "question_id", where);
        s.question = require_string(q, "question", where);
        const auto image_id = require_id(q, "image_id", where);
        char name[64];
        std::snprintf(name, sizeof(name), "COCO_%s_%012llu.jpg", subtype.c_str(),
                      static_cast<unsigned long long>(image_id));
        s.image_ref = name;

        auto ann = by_qid.find(s.sample_id);
        if (ann == by_qid.end())
            throw ParseError(where + ": no annotation for question_id " + std::to_string(s.sample_id));
        const std::string awhere = "annotation for question_id " + std::to_string(s.sample_id);
        auto answers = answers_from_objects(require(*ann->second, "answers", awhere), awhere);
        if (auto t = ann->second->find("answer_type"); t != ann->second->end() && t->is_string())
            s.answer_type = answer_type_from_string(t->get<std::string>());
        finish_sample(s, std::move(answers), options);
        out.push_back(std::move(s));
    }
    return out;
}

std::vector<VqaSample> load_vizwiz(const DatasetPaths& paths, const LoadOptions& options) {
    const json records = read_json_file(paths.records);
    if (!records.is_array()) throw ParseError(paths.records.string() + ": expected a JSON array");
    std::vector<VqaSample> out;
    out.reserve(records.size());
    for (std::size_t i = 0; i < records.size(); ++i) {
        const std::string where = paths.records.string() + " record " + std::to_string(i);
        const auto& r = records[i];
        VqaSample s;
        s.sample_id = i;
        s.image_ref = require_string(r, "image", where);
        s.question = require_string(r, "question", where);
        auto answers = answers_from_objects(require(r, "answers", where), where);
        if (auto t = r.find("answer_type"); t != r.end() && t->is_string())
            s.answer_type = answer_type_from_string(t->get<std::string>());
        finish_sample(s, std::move(answers), options);
        out.push_back(std::move(s));
    }
    return out;
}

std::vector<VqaSample> load_ndjson(const DatasetPaths& paths, const LoadOptions& options) {
    std::ifstream in(paths.records);
    if (!in) throw IoError("cannot open " + paths.records.string());
    std::vector<VqaSample> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        const std::string where = paths.records.string() + " line " + std::to_string(lineno);
        json j;
        try {
            j = json::parse(line);
        } catch (const json::parse_error& e) {
            throw ParseError(where + ": " + e.what());
        }
        VqaSample s;
        s.sample_id = require_id(j, "sample_id", where);
        s.image_ref = require_string(j, "image_ref", where);
        s.question = require_string(j, "question", where);
        auto answers = require(j, "gt_answers", where);
        if (!answers.is_array()) throw ParseError(where + ": 'gt_answers' is not an array");
        if (auto t = j.find("answer_type"); t != j.end() && t->is_string())
            s.answer_type = answer_type_from_string(t->get<std::string>());
        if (auto t = j.find("tags"); t != j.end() && t->is_object()) {
            if (t->contains("image")) s.image_tags = tagset_from_json((*t)["image"]);
            if (t->contains("question")) s.question_tags = tagset_from_json((*t)["question"]);
        }
        try {
            finish_sample(s, answers.get<std::vector<std::string>>(), options);
        } catch (const ParseError& e) {
            throw ParseError(where + ": " + e.what());
        }
        out.push_back(std::move(s));
    }
    return out;
}

} // namespace

SupportSet load_vqa_dataset(const DatasetPaths& paths, DatasetKind kind, const LoadOptions& options,
                            std::vector<std::string>* warnings) {
    std::vector<VqaSample> samples;
    switch (kind) {
    case DatasetKind::vqav2:
    case DatasetKind::okvqa: samples = load_question_annotation_pair(paths, options); break;
    case DatasetKind::vizwiz: samples = load_vizwiz(paths, options); break;
    case DatasetKind::synthetic: samples = load_ndjson(paths, options); break;
    }
    if (samples.empty()) throw ValidationError("empty dataset");
    for (auto& s : samples) resolve_image(s, paths.image_root, warnings);
    return SupportSet(std::move(samples), kind);
}

json to_json(const VqaSample& s) {
    json j;
    j["sample_id"] = s.sample_id;
    j["image_ref"] = s.image_ref;
    j["question"] = s.question;
    j["gt_answers"] = s.gt_answers;
    j["canonical_answer"] = s.canonical_answer;
    j["answer_type"] = std::string(to_string(s.answer_type));
    if (!s.image_tags.empty() || !s.question_tags.empty()) {
        j["tags"]["image"] = s.image_tags;
        j["tags"]["question"] = s.question_tags;
    }
    return j;
}

VqaSample sample_from_json(const json& j) {
    const std::string where = "sample record";
    VqaSample s;
    s.sample_id = require_id(j, "sample_id", where);
    s.image_ref = require_string(j, "image_ref", where);
    s.question = require_string(j, "question", where);
    s.gt_answers = require(j, "gt_answers", where).get<std::vector<std::string>>();
    s.canonical_answer = j.value("canonical_answer", modal_answer(s.gt_answers));
    s.answer_type = answer_type_from_string(j.value("answer_type", std::string("unknown")));
    if (auto t = j.find("tags"); t != j.end() && t->is_object()) {
        if (t->contains("image")) s.image_tags = tagset_from_json((*t)["image"]);
        if (t->contains("question")) s.question_tags = tagset_from_json((*t)["question"]);
    }
    return s;
}

void write_dataset_dump(const fs::path& path, const SupportSet& set) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    for (const auto& s : set.samples()) out << to_json(s).dump() << '\n';
    if (!out) throw IoError("write failed: " + path.string());
}

SupportSet yes_no_subset(const SupportSet& set) {
    std::vector<VqaSample> out;
    for (const auto& s : set.samples())
        if (s.canonical_answer == "yes" || s.canonical_answer == "no") out.push_back(s);
    return SupportSet(std::move(out), set.kind());
}

} // namespace icl
