#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "icl/dataset.hpp"
#include "icl/embedding.hpp"
#include "icl/manipulate.hpp"
#include "icl/oracle.hpp"
#include "icl/prompt.hpp"
#include "icl/strategies.hpp"

namespace icl {

/// Files of one split: the dataset itself plus optional precomputed
/// embeddings and tag files.
struct SplitFiles {
    DatasetPaths dataset;
    std::map<Modality, std::filesystem::path> embeddings;
    std::filesystem::path image_tags;
    std::filesystem::path question_tags;
};

enum class ManipulationKind {
    MI,
    MA,
    MQA,
    reorder_si_q,
    reorder_sq_i,
    reverse,
    instruction,
    declarative,
    blur_query,
    degrade_question
};

struct Manipulation {
    ManipulationKind kind = ManipulationKind::reverse;
    std::string instruction; // instruction only

    std::string label() const;
    bool operator==(const Manipulation&) const = default;
};

Manipulation manipulation_from_json(const nlohmann::json& j);
nlohmann::json to_json(const Manipulation& m);

/// One experimental arm: a strategy, a chain of manipulations applied in
/// order, and an optional TR/TL probe. Shots come from the grid.
struct ArmSpec {
    std::string name;
    StrategySpec strategy;
    std::vector<Manipulation> manipulations;
    std::optional<ProbeSpec> probe;

    /// `name` when given, else strategy label joined with manipulations.
    std::string label() const;
};

ArmSpec arm_from_json(const nlohmann::json& j, std::uint64_t default_seed);
nlohmann::json to_json(const ArmSpec& a);

enum class TextEmbedderKind { automatic, hashing, precomputed_qa, remote };

struct TextEmbedderSpec {
    TextEmbedderKind kind = TextEmbedderKind::automatic;
    std::size_t dim = 512;
    std::uint64_t seed = 0;
    std::string endpoint;
};

struct QuerySubset {
    std::optional<std::size_t> count; // first N queries in file order
    std::vector<SampleId> ids;         // explicit ids, takes precedence
};

struct ExperimentConfig {
    DatasetKind kind = DatasetKind::synthetic;
    bool normalize_answers = true;
    SplitFiles support;
    SplitFiles queries;
    /// Queries come from the support file itself (leave-one-out retrieval).
    bool queries_from_support = false;
    std::filesystem::path key_tokens;

    std::vector<ArmSpec> arms;
    std::vector<int> shots{4, 8, 16};
    nlohmann::json template_overrides = nlohmann::json::object();
    PromptTemplate prompt_template = default_template();
    OracleSpec oracle;
    TextEmbedderSpec text_embedder;
    std::uint64_t seed = 0;
    QuerySubset subset;
    double blur_sigma = 5.0;
    std::filesystem::path blur_dir; // where blurred query images are written
    bool dump_prompts = false;

    // Execution knobs; not part of the fingerprint.
    std::filesystem::path output_dir;
    int workers = 1;
    std::size_t scan_threads = 1;
};

/// Replaces ${VAR} and ${VAR:-default} with environment values. An unset
/// variable without default is an error.
std::string interpolate_env(std::string_view text);

/// Parses a config object. Relative paths are resolved against `base_dir`.
ExperimentConfig config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir);

/// Reads a JSON config file (comments allowed) with env interpolation.
ExperimentConfig load_config(const std::filesystem::path& path);

/// Semantic checks and existence of every referenced file. Throws
/// ValidationError listing all problems.
void validate_config(const ExperimentConfig& config);

/// Every setting that influences results, in canonical key order.
nlohmann::json canonical_json(const ExperimentConfig& config);

/// Input files referenced by the config, sorted.
std::vector<std::filesystem::path> referenced_files(const ExperimentConfig& config);

/// sha256(canonical config + sha256 of every referenced file).
std::string fingerprint(const ExperimentConfig& config);

} // namespace icl
