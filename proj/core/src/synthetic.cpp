#include "icl/synthetic.hpp"

#include <array>
#include <fstream>

#include <nlohmann/json.hpp>

#include "icl/error.hpp"
#include "icl/image.hpp"
#include "icl/rng.hpp"
#include "icl/text_embedder.hpp"

namespace icl {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

constexpr std::array kObjects{"dog", "cat", "horse", "bus", "pizza", "bicycle", "clock", "giraffe", "boat", "kite"};
constexpr std::array kColors{"red", "white", "black", "brown", "blue", "green", "yellow", "gray"};
constexpr std::array kScenes{"street", "kitchen", "beach", "field", "park", "room"};
constexpr std::array kRelations{"near", "on", "under", "behind"};
constexpr std::array kProps{"tree", "car", "person", "sign", "table", "fence", "grass", "window", "chair", "cup",
                            "building", "sky", "road", "bench", "bag", "lamp"};
constexpr std::array kAdjectives{"small", "large", "old", "wooden", "shiny", "wet", "striped", "bright", "dark",
                                 "round", "tall", "empty"};
constexpr std::array kClasses{"animal", "animal", "animal", "vehicle", "food", "vehicle", "object", "animal", "vehicle",
                              "object"};

template <typename A>
std::string pick(const A& arr, Rng& rng) {
    return arr[rng.uniform(arr.size())];
}

std::array<float, 3> color_rgb(std::string_view c) {
    if (c == "red") return {200, 30, 30};
    if (c == "white") return {240, 240, 240};
    if (c == "black") return {15, 15, 15};
    if (c == "brown") return {120, 80, 40};
    if (c == "blue") return {30, 60, 200};
    if (c == "green") return {40, 170, 60};
    if (c == "yellow") return {230, 210, 40};
    return {128, 128, 128};
}

} // namespace

SyntheticBundle make_synthetic(const SyntheticOptions& options) {
    if (options.samples == 0) throw ValidationError("synthetic: samples must be positive");
    Rng rng(options.seed);
    const HashingTextEmbedder text(options.dim);
    std::vector<VqaSample> samples;
    std::map<SampleId, std::set<std::string>> key_tokens;

    EmbeddingTable image{Modality::image, options.dim, {}, {}};
    EmbeddingTable question{Modality::question, options.dim, {}, {}};
    EmbeddingTable qa{Modality::question_answer, options.dim, {}, {}};

    for (std::size_t i = 0; i < options.samples; ++i) {
        const SampleId id = options.first_id + i;
        const std::size_t obj_idx = rng.uniform(kObjects.size());
        const std::string obj = kObjects[obj_idx];
        const std::size_t color_idx = rng.uniform(kColors.size());
        const std::string color = kColors[color_idx];
        const std::string scene = pick(kScenes, rng);
        const std::string rel = pick(kRelations, rng);
        const std::size_t count = 1 + rng.uniform(5);

        VqaSample s;
        s.sample_id = id;
        char ref[64];
        std::snprintf(ref, sizeof ref, "synth_%06llu.ppm", static_cast<unsigned long long>(id));
        s.image_ref = ref;

        std::string truth;
        std::vector<std::string> distractors;
        std::set<std::string> keys;
        std::string asked;
        switch (i % 3) {
        case 0: { // yes/no
            const bool yes = rng.uniform(2) == 0;
            asked = yes ? color : kColors[(color_idx + 1 + rng.uniform(kColors.size() - 1)) % kColors.size()];
            s.question = "Is the " + obj + " " + asked + "?";
            s.answer_type = AnswerType::yes_no;
            truth = yes ? "yes" : "no";
            distractors = {yes ? "no" : "yes"};
            keys = {obj, asked};
            break;
        }
        case 1:
            s.question = "How many " + obj + "s are there in the " + scene + "?";
            s.answer_type = AnswerType::number;
            truth = std::to_string(count);
            distractors = {std::to_string(count + 1), std::to_string(count == 1 ? 2 : count - 1)};
            keys = {obj + "s", scene};
            break;
        default:
            s.question = "What color is the " + obj + " " + rel + " the " + scene + "?";
            s.answer_type = AnswerType::other;
            truth = color;
            distractors = {kColors[(color_idx + 1) % kColors.size()]};
            keys = {obj, scene};
            break;
        }
        // Seven annotators agree, three pick a distractor.
        for (int k = 0; k < 7; ++k) s.gt_answers.push_back(truth);
        for (int k = 0; k < 3; ++k) s.gt_answers.push_back(distractors[rng.uniform(distractors.size())]);
        rng.shuffle(std::span<std::string>(s.gt_answers));
        s.canonical_answer = modal_answer(s.gt_answers);

        // Scene-graph style annotation: the main object plus surrounding
        // props, at least 16 object/attribute/relation tags per image.
        std::set<std::string> objects{obj, scene};
        while (objects.size() < 7) objects.insert(pick(kProps, rng));
        std::set<std::string> attributes{color};
        while (attributes.size() < 5) attributes.insert(pick(kAdjectives, rng));
        std::set<std::string> relations{obj + " " + rel + " " + scene};
        while (relations.size() < 5)
            relations.insert(pick(kProps, rng) + " " + pick(kRelations, rng) + " " + pick(kProps, rng));
        s.image_tags = {{"object", objects},
                        {"attribute", attributes},
                        {"relation", relations},
                        {"class", {kClasses[obj_idx]}}};
        const char* wh = i % 3 == 0 ? "is" : (i % 3 == 1 ? "how many" : "what color");
        s.question_tags = {{"object", {obj}}, {"interrogative", {wh}}};
        if (i % 3 == 2) s.question_tags["relation"] = {rel};
        if (i % 3 == 0) s.question_tags["attribute"] = {asked};

        auto img = text.embed("image " + obj + " " + color + " " + scene + " " + rel);
        for (auto& v : img) v += static_cast<float>((rng.uniform01() - 0.5) * 0.01);
        image.append(id, img);
        question.append(id, text.embed(s.question));
        qa.append(id, text.embed(qa_text(s.question, s.canonical_answer)));
        key_tokens[id] = keys;
        samples.push_back(std::move(s));
    }

    SyntheticBundle out{SupportSet(std::move(samples), DatasetKind::synthetic), {}, std::move(key_tokens)};
    out.embeddings.emplace(Modality::image, std::move(image));
    out.embeddings.emplace(Modality::question, std::move(question));
    out.embeddings.emplace(Modality::question_answer, std::move(qa));
    return out;
}

void write_synthetic_bundle(const SyntheticBundle& bundle, const fs::path& dir, const SyntheticOptions& options) {
    fs::create_directories(dir);
    write_dataset_dump(dir / "support.ndjson", bundle.set);
    write_embeddings(dir / "emb_image.icle", bundle.embeddings.at(Modality::image));
    write_embeddings(dir / "emb_question.icle", bundle.embeddings.at(Modality::question));
    write_embeddings(dir / "emb_question_answer.icle", bundle.embeddings.at(Modality::question_answer));
    {
        std::ofstream out(dir / "key_tokens.ndjson", std::ios::binary | std::ios::trunc);
        for (const auto& [id, keys] : bundle.key_tokens) out << json{{"sample_id", id}, {"key_tokens", keys}}.dump() << '\n';
        if (!out) throw IoError("cannot write key_tokens.ndjson");
    }
    if (options.image_size > 0) {
        fs::create_directories(dir / "images");
        for (const auto& s : bundle.set.samples()) {
            const auto& attrs = s.image_tags.at("attribute");
            const auto rgb = color_rgb(*attrs.begin());
            const std::size_t n = options.image_size;
            RgbImage img{n, n, std::vector<float>(n * n * 3)};
            for (std::size_t y = 0; y < n; ++y)
                for (std::size_t x = 0; x < n; ++x) {
                    // Object drawn as a centered square on a gray background.
                    const bool inside = x >= n / 4 && x < 3 * n / 4 && y >= n / 4 && y < 3 * n / 4;
                    for (std::size_t c = 0; c < 3; ++c) img.at(x, y, c) = inside ? rgb[c] : 100.0f;
                }
            write_ppm(dir / "images" / s.image_ref, img);
        }
    }
    const json config = {
        {"seed", options.seed},
        {"dataset",
         {{"kind", "synthetic"},
          {"support",
           {{"records", "support.ndjson"},
            {"image_root", options.image_size > 0 ? "images" : ""},
            {"embeddings",
             {{"image", "emb_image.icle"},
              {"question", "emb_question.icle"},
              {"question_answer", "emb_question_answer.icle"}}}}}}},
        {"key_tokens", "key_tokens.ndjson"},
        {"shots", {4, 8, 16}},
        {"arms", {"RS", "SI", "SQ"}},
        {"oracle", {{"kind", "mock_lookup"}}},
        {"output_dir", "out"},
    };
    std::ofstream out(dir / "config.json", std::ios::binary | std::ios::trunc);
    out << config.dump(2) << '\n';
    if (!out) throw IoError("cannot write config.json");
}

} // namespace icl
