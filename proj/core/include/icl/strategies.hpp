#pragma once

#include <array>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "icl/dataset.hpp"
#include "icl/rng.hpp"
#include "icl/similarity_index.hpp"
#include "icl/tag_index.hpp"
#include "icl/text_embedder.hpp"

namespace icl {

enum class StrategyKind { RS, SI, SQ, SQA, SQPA, STI, STQ2, STQ4, DT_I, DC_I, DQ, I_SQ, I_SQA, Q_SI, QA_SI };

std::string_view to_string(StrategyKind k);
StrategyKind strategy_kind_from_string(std::string_view s);

/// Where the best-ranked demonstration ends up. `ascending` puts the most
/// similar demonstration last, next to the query.
enum class Placement { ascending, descending };

struct StrategySpec {
    StrategyKind kind = StrategyKind::RS;
    int shots = 4;
    std::uint64_t seed = 0;
    /// First-round strategy of SQPA, with its own shot count.
    std::shared_ptr<const StrategySpec> sqpa_inner;
    /// SI*: no two demonstrations share an image_ref.
    bool dedup_images = false;
    Placement placement = Placement::ascending;
    /// SQPA: drop round-1 demonstrations from the round-2 candidates.
    bool sqpa_exclude_round1 = false;

    void validate() const;
    std::string label() const;
};

nlohmann::json to_json(const StrategySpec& s);
StrategySpec strategy_from_json(const nlohmann::json& j);

struct DemonstrationList {
    std::vector<ScoredId> items;
    StrategySpec provenance;

    std::vector<SampleId> ids() const;
};

/// Retrieval structures of one split. Members are shared so derived corpora
/// (subsets, relabelled probe sets) can reuse the indices.
struct Corpus {
    std::shared_ptr<const SupportSet> set;
    std::array<std::shared_ptr<const SimilarityIndex>, kNumModalities> indices{};
    std::shared_ptr<const TagIndex> image_tags;
    std::shared_ptr<const TagIndex> question_tags;

    const SimilarityIndex& index(Modality m) const;
    bool has_index(Modality m) const { return indices[static_cast<std::size_t>(m)] != nullptr; }

    /// Same corpus restricted to the samples of `subset`; indices are rebuilt.
    Corpus restricted_to(std::shared_ptr<const SupportSet> subset) const;
};

/// Builds TagIndexes from per-sample inline tags merged with optional tag files.
std::shared_ptr<const TagIndex> build_tag_index(const SupportSet& set, bool image_side,
                                                const std::map<SampleId, TagSet>* file_tags = nullptr);

struct RetrievalContext {
    const Corpus* support = nullptr;
    const Corpus* queries = nullptr;
    /// Embeds (question, answer) text for SQA fallbacks and SQPA round 2.
    const TextEmbedder* text = nullptr;
    /// The query's own id is excluded when both splits are the same dataset.
    bool self_exclude = true;
    std::size_t scan_threads = 1;
};

/// Round-1 hook of SQPA: returns the pseudo answer for `query` given the
/// round-1 demonstrations (already arranged in sequence order).
using PseudoAnswerFn = std::function<std::string(const VqaSample& query, const DemonstrationList& round1)>;

/// Ranked (best-first) retrieval followed by placement. Always returns
/// exactly `spec.shots` demonstrations or throws.
DemonstrationList retrieve(const RetrievalContext& ctx, const VqaSample& query, const StrategySpec& spec, Rng& rng,
                           const PseudoAnswerFn* pseudo = nullptr);

/// Orders a best-first list according to the placement policy.
std::vector<ScoredId> arrange(std::vector<ScoredId> ranked, Placement placement);

// Individual strategies. Each returns a best-first ranking of length n.

std::vector<ScoredId> retrieve_rs(const SupportSet& support, std::size_t n, Rng& rng,
                                  std::optional<SampleId> exclude = std::nullopt);

/// Query-side and index-side modality of every embedding strategy.
std::pair<Modality, Modality> similarity_modalities(StrategyKind k);

std::vector<ScoredId> retrieve_similar(const RetrievalContext& ctx, const VqaSample& query, Modality query_modality,
                                       Modality index_modality, std::size_t n, bool dedup_images = false);

/// SQA-style retrieval keyed on qa_text(question, answer) through the text embedder.
std::vector<ScoredId> retrieve_by_qa_text(const RetrievalContext& ctx, const VqaSample& query,
                                          std::string_view answer, std::size_t n, const IdSet& extra_exclude = {},
                                          bool dedup_images = false);

std::vector<ScoredId> retrieve_sqpa(const RetrievalContext& ctx, const VqaSample& query, const StrategySpec& spec,
                                    Rng& rng, const PseudoAnswerFn& pseudo);

/// STI / STQ2 / STQ4 tag-overlap retrieval.
std::vector<ScoredId> retrieve_tagged(const RetrievalContext& ctx, const VqaSample& query, StrategyKind kind,
                                      std::size_t n);

/// DT_I / DC_I / DQ cluster-diverse retrieval.
std::vector<ScoredId> retrieve_diverse(const RetrievalContext& ctx, const VqaSample& query, StrategyKind kind,
                                       std::size_t n);

/// Tag categories consulted by a tag strategy, in cluster order.
std::vector<std::string> tag_categories(StrategyKind kind);

} // namespace icl
