#include "icl/strategies.hpp"

#include <algorithm>
#include <cctype>
#include <unordered_map>
#include <unordered_set>

#include "icl/error.hpp"

namespace icl {

using nlohmann::json;

namespace {

constexpr std::array<std::pair<StrategyKind, std::string_view>, 15> kKindNames{{
    {StrategyKind::RS, "RS"},       {StrategyKind::SI, "SI"},       {StrategyKind::SQ, "SQ"},
    {StrategyKind::SQA, "SQA"},     {StrategyKind::SQPA, "SQPA"},   {StrategyKind::STI, "STI"},
    {StrategyKind::STQ2, "STQ-2"},  {StrategyKind::STQ4, "STQ-4"},  {StrategyKind::DT_I, "DT-I"},
    {StrategyKind::DC_I, "DC-I"},   {StrategyKind::DQ, "DQ"},       {StrategyKind::I_SQ, "I-SQ"},
    {StrategyKind::I_SQA, "I-SQA"}, {StrategyKind::Q_SI, "Q-SI"},   {StrategyKind::QA_SI, "QA-SI"},
}};

std::string canonical_kind_token(std::string_view s) {
    std::string out;
    for (char c : s)
        if (c != '-' && c != '_') out.push_back(static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
    return out;
}

} // namespace

std::string_view to_string(StrategyKind k) {
    for (const auto& [kind, name] : kKindNames)
        if (kind == k) return name;
    return "RS";
}

StrategyKind strategy_kind_from_string(std::string_view s) {
    const auto token = canonical_kind_token(s);
    for (const auto& [kind, name] : kKindNames)
        if (canonical_kind_token(name) == token) return kind;
    throw ValidationError("unknown strategy '" + std::string(s) + "'");
}

void StrategySpec::validate() const {
    if (shots < 0) throw ValidationError("strategy " + std::string(to_string(kind)) + ": shots must not be negative");
    if (kind == StrategyKind::SQPA) {
        if (!sqpa_inner) throw ValidationError("SQPA requires an inner strategy");
        if (sqpa_inner->kind == StrategyKind::SQPA) throw ValidationError("SQPA inner strategy cannot be SQPA");
        sqpa_inner->validate();
    }
}

std::string StrategySpec::label() const {
    std::string out(to_string(kind));
    if (dedup_images) out += "*";
    if (kind == StrategyKind::SQPA && sqpa_inner)
        out += "(" + std::string(to_string(sqpa_inner->kind)) + "-" + std::to_string(sqpa_inner->shots) + ")";
    return out;
}

json to_json(const StrategySpec& s) {
    json j{{"kind", std::string(to_string(s.kind))},
           {"shots", s.shots},
           {"seed", s.seed},
           {"dedup_images", s.dedup_images},
           {"placement", s.placement == Placement::ascending ? "ascending" : "descending"}};
    if (s.kind == StrategyKind::SQPA) {
        j["exclude_round1"] = s.sqpa_exclude_round1;
        if (s.sqpa_inner) j["inner"] = to_json(*s.sqpa_inner);
    }
    return j;
}

StrategySpec strategy_from_json(const json& j) {
    StrategySpec s;
    try {
        s.kind = strategy_kind_from_string(j.at("kind").get<std::string>());
        s.shots = j.value("shots", 4);
        s.seed = j.value("seed", std::uint64_t{0});
        s.dedup_images = j.value("dedup_images", false);
        const auto placement = j.value("placement", std::string("ascending"));
        if (placement == "ascending")
            s.placement = Placement::ascending;
        else if (placement == "descending")
            s.placement = Placement::descending;
        else
            throw ValidationError("placement must be 'ascending' or 'descending'");
        s.sqpa_exclude_round1 = j.value("exclude_round1", false);
        if (j.contains("inner")) s.sqpa_inner = std::make_shared<StrategySpec>(strategy_from_json(j["inner"]));
    } catch (const json::exception& e) {
        throw ValidationError(std::string("bad strategy spec: ") + e.what());
    }
    return s;
}

std::vector<SampleId> DemonstrationList::ids() const {
    std::vector<SampleId> out;
    out.reserve(items.size());
    for (const auto& it : items) out.push_back(it.id);
    return out;
}

// ---------------------------------------------------------------------------
// Corpus

const SimilarityIndex& Corpus::index(Modality m) const {
    const auto& p = indices[static_cast<std::size_t>(m)];
    if (!p) throw ValidationError("no " + std::string(to_string(m)) + " embeddings loaded");
    return *p;
}

Corpus Corpus::restricted_to(std::shared_ptr<const SupportSet> subset) const {
    Corpus out;
    auto keep = [&](SampleId id) { return subset->contains(id); };
    for (std::size_t m = 0; m < kNumModalities; ++m)
        if (indices[m]) out.indices[m] = std::make_shared<SimilarityIndex>(indices[m]->restricted(keep));
    auto restrict_tags = [&](const std::shared_ptr<const TagIndex>& tags) -> std::shared_ptr<const TagIndex> {
        if (!tags) return nullptr;
        std::map<SampleId, TagSet> kept;
        for (auto id : tags->ids())
            if (keep(id)) kept.emplace(id, tags->tags_of(id));
        return std::make_shared<TagIndex>(kept);
    };
    out.image_tags = restrict_tags(image_tags);
    out.question_tags = restrict_tags(question_tags);
    out.set = std::move(subset);
    return out;
}

std::shared_ptr<const TagIndex> build_tag_index(const SupportSet& set, bool image_side,
                                                const std::map<SampleId, TagSet>* file_tags) {
    std::map<SampleId, TagSet> merged;
    for (const auto& s : set.samples()) {
        const auto& inline_tags = image_side ? s.image_tags : s.question_tags;
        if (!inline_tags.empty()) merged[s.sample_id] = inline_tags;
    }
    if (file_tags) {
        for (const auto& [id, tags] : *file_tags) {
            if (!set.contains(id)) continue;
            auto& dst = merged[id];
            for (const auto& [cat, values] : tags) dst[cat].insert(values.begin(), values.end());
        }
    }
    if (merged.empty()) return nullptr;
    return std::make_shared<TagIndex>(merged);
}

// ---------------------------------------------------------------------------
// Helpers

namespace {

IdSet base_exclude(const RetrievalContext& ctx, const VqaSample& query) {
    IdSet ex;
    if (ctx.self_exclude) ex.insert(query.sample_id);
    return ex;
}

void require_count(const std::vector<ScoredId>& got, std::size_t n, std::string_view what) {
    if (got.size() < n)
        throw ValidationError(std::string(what) + ": support set yields only " + std::to_string(got.size()) +
                              " candidates, " + std::to_string(n) + " requested");
}

/// Top-k with optional image de-duplication: grows the candidate window
/// until n distinct image refs are collected.
std::vector<ScoredId> top_k_maybe_dedup(const RetrievalContext& ctx, const SimilarityIndex& index,
                                        std::span<const float> key, std::size_t n, const IdSet& exclude,
                                        bool dedup_images) {
    if (!dedup_images) return index.top_k(key, n, exclude, ctx.scan_threads);
    const auto& set = *ctx.support->set;
    std::size_t window = n * 2;
    while (true) {
        auto ranked = index.top_k(key, window, exclude, ctx.scan_threads);
        std::vector<ScoredId> out;
        std::unordered_set<std::string> seen;
        for (const auto& r : ranked) {
            if (!seen.insert(set.at(r.id).image_ref).second) continue;
            out.push_back(r);
            if (out.size() == n) return out;
        }
        if (ranked.size() < window) return out; // exhausted
        window *= 2;
    }
}

std::span<const float> query_vector(const RetrievalContext& ctx, const VqaSample& query, Modality m) {
    auto v = ctx.queries->index(m).vector(query.sample_id);
    if (!v)
        throw ValidationError("query " + std::to_string(query.sample_id) + " has no " + std::string(to_string(m)) +
                              " embedding");
    return *v;
}

const TagIndex& tag_index_for(const Corpus& c, bool image_side) {
    const auto& p = image_side ? c.image_tags : c.question_tags;
    if (!p) throw ValidationError(std::string("no ") + (image_side ? "image" : "question") + " tags loaded");
    return *p;
}

TagSet query_tags(const RetrievalContext& ctx, const VqaSample& query, bool image_side,
                  const std::vector<std::string>& categories) {
    TagSet tags;
    const auto& idx = image_side ? ctx.queries->image_tags : ctx.queries->question_tags;
    if (idx && idx->contains(query.sample_id)) tags = idx->tags_of(query.sample_id);
    else tags = image_side ? query.image_tags : query.question_tags;

    bool any = false;
    for (const auto& c : categories)
        if (auto it = tags.find(c); it != tags.end() && !it->second.empty()) any = true;
    if (!any) {
        std::string names;
        for (const auto& c : categories) names += (names.empty() ? "" : ", ") + c;
        throw ValidationError("query " + std::to_string(query.sample_id) + " has no " +
                              (image_side ? "image" : "question") + " tag annotations for categories: " + names);
    }
    return tags;
}

bool image_side_tags(StrategyKind k) {
    return k == StrategyKind::STI || k == StrategyKind::DT_I || k == StrategyKind::DC_I;
}

} // namespace

// ---------------------------------------------------------------------------
// RS

std::vector<ScoredId> retrieve_rs(const SupportSet& support, std::size_t n, Rng& rng, std::optional<SampleId> exclude) {
    const auto samples = support.samples();
    std::size_t skip = samples.size();
    if (exclude && support.contains(*exclude)) skip = support.position(*exclude);
    const std::size_t pool = samples.size() - (skip < samples.size() ? 1 : 0);
    if (n > pool)
        throw ValidationError("RS: cannot draw " + std::to_string(n) + " demonstrations from " +
                              std::to_string(pool) + " samples");

    // Sparse Fisher-Yates over virtual positions [0, pool); position p maps to
    // sample p, shifted past the excluded sample.
    std::unordered_map<std::size_t, std::size_t> swapped;
    auto slot = [&](std::size_t i) {
        auto it = swapped.find(i);
        return it == swapped.end() ? i : it->second;
    };
    std::vector<ScoredId> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t j = i + rng.uniform(pool - i);
        const std::size_t picked = slot(j);
        swapped[j] = slot(i);
        const std::size_t pos = picked >= skip ? picked + 1 : picked;
        out.push_back({samples[pos].sample_id, 0.0});
    }
    return out;
}

// ---------------------------------------------------------------------------
// Embedding similarity

std::pair<Modality, Modality> similarity_modalities(StrategyKind k) {
    switch (k) {
    case StrategyKind::SI: return {Modality::image, Modality::image};
    case StrategyKind::SQ: return {Modality::question, Modality::question};
    case StrategyKind::SQA: return {Modality::question_answer, Modality::question_answer};
    case StrategyKind::I_SQ: return {Modality::question, Modality::image};
    case StrategyKind::I_SQA: return {Modality::question_answer, Modality::image};
    case StrategyKind::Q_SI: return {Modality::image, Modality::question};
    case StrategyKind::QA_SI: return {Modality::image, Modality::question_answer};
    default: throw ValidationError(std::string(to_string(k)) + " is not an embedding-similarity strategy");
    }
}

std::vector<ScoredId> retrieve_similar(const RetrievalContext& ctx, const VqaSample& query, Modality query_modality,
                                       Modality index_modality, std::size_t n, bool dedup_images) {
    const auto& index = ctx.support->index(index_modality);
    std::vector<float> owned;
    std::span<const float> key;
    if (ctx.queries->has_index(query_modality) && ctx.queries->index(query_modality).contains(query.sample_id)) {
        key = query_vector(ctx, query, query_modality);
    } else if (query_modality != Modality::image && ctx.text) {
        owned = ctx.text->embed(query_modality == Modality::question
                                    ? query.question
                                    : qa_text(query.question, query.canonical_answer));
        key = owned;
    } else {
        key = query_vector(ctx, query, query_modality); // throws with a precise message
    }
    auto out = top_k_maybe_dedup(ctx, index, key, n, base_exclude(ctx, query), dedup_images);
    require_count(out, n, "similarity retrieval");
    return out;
}

std::vector<ScoredId> retrieve_by_qa_text(const RetrievalContext& ctx, const VqaSample& query,
                                          std::string_view answer, std::size_t n, const IdSet& extra_exclude,
                                          bool dedup_images) {
    if (!ctx.text) throw ValidationError("no text embedder configured for (question, answer) retrieval");
    const auto key = ctx.text->embed(qa_text(query.question, answer));
    IdSet exclude = base_exclude(ctx, query);
    exclude.insert(extra_exclude.begin(), extra_exclude.end());
    auto out = top_k_maybe_dedup(ctx, ctx.support->index(Modality::question_answer), key, n, exclude, dedup_images);
    require_count(out, n, "SQPA round 2");
    return out;
}

std::vector<ScoredId> retrieve_sqpa(const RetrievalContext& ctx, const VqaSample& query, const StrategySpec& spec,
                                    Rng& rng, const PseudoAnswerFn& pseudo) {
    spec.validate();
    const StrategySpec& inner = *spec.sqpa_inner;
    const DemonstrationList round1 = retrieve(ctx, query, inner, rng, nullptr);

    std::string pseudo_answer;
    try {
        pseudo_answer = pseudo(query, round1);
    } catch (const OracleError& e) {
        std::string ids;
        for (auto id : round1.ids()) ids += (ids.empty() ? "" : ",") + std::to_string(id);
        throw OracleError(std::string(e.what()) + " [SQPA round 1 " + inner.label() + "-" +
                              std::to_string(inner.shots) + " demos: " + ids + "]",
                          e.query_id() ? e.query_id() : std::optional<std::uint64_t>(query.sample_id));
    }

    IdSet extra;
    if (spec.sqpa_exclude_round1)
        for (auto id : round1.ids()) extra.insert(id);
    return retrieve_by_qa_text(ctx, query, pseudo_answer, static_cast<std::size_t>(spec.shots), extra,
                               spec.dedup_images);
}

// ---------------------------------------------------------------------------
// Tags

std::vector<std::string> tag_categories(StrategyKind kind) {
    using namespace tag_category;
    switch (kind) {
    case StrategyKind::STI:
    case StrategyKind::DT_I: return {object, attribute, relation};
    case StrategyKind::DC_I: return {object, attribute, relation, class_};
    case StrategyKind::STQ2: return {object, relation};
    case StrategyKind::STQ4:
    case StrategyKind::DQ: return {object, relation, attribute, interrogative};
    default: throw ValidationError(std::string(to_string(kind)) + " is not a tag strategy");
    }
}

std::vector<ScoredId> retrieve_tagged(const RetrievalContext& ctx, const VqaSample& query, StrategyKind kind,
                                      std::size_t n) {
    if (kind != StrategyKind::STI && kind != StrategyKind::STQ2 && kind != StrategyKind::STQ4)
        throw ValidationError(std::string(to_string(kind)) + " is not a tag-overlap strategy");
    const bool image_side = image_side_tags(kind);
    const auto cats = tag_categories(kind);
    const auto& index = tag_index_for(*ctx.support, image_side);
    const auto tags = query_tags(ctx, query, image_side, cats);
    auto out = index.top_k(tags, n, base_exclude(ctx, query), cats);
    require_count(out, n, to_string(kind));
    return out;
}

namespace {

/// Best non-taken candidate by `scores` (desc), ties by id (asc).
std::optional<ScoredId> best_available(const TagIndex& index, const std::vector<std::size_t>& scores,
                                       const IdSet& excluded) {
    std::optional<ScoredId> best;
    const auto ids = index.ids();
    for (std::size_t r = 0; r < ids.size(); ++r) {
        if (excluded.count(ids[r])) continue;
        const ScoredId cand{ids[r], static_cast<double>(scores[r])};
        if (!best || ranks_before(cand, *best)) best = cand;
    }
    return best;
}

} // namespace

std::vector<ScoredId> retrieve_diverse(const RetrievalContext& ctx, const VqaSample& query, StrategyKind kind,
                                       std::size_t n) {
    if (kind != StrategyKind::DT_I && kind != StrategyKind::DC_I && kind != StrategyKind::DQ)
        throw ValidationError(std::string(to_string(kind)) + " is not a diversity strategy");
    const bool image_side = image_side_tags(kind);
    const auto cats = tag_categories(kind);
    const auto& index = tag_index_for(*ctx.support, image_side);
    const auto tags = query_tags(ctx, query, image_side, cats);
    IdSet taken = base_exclude(ctx, query);
    std::vector<ScoredId> out;

    if (kind == StrategyKind::DT_I) {
        // Flatten the query tags, sort lexicographically, deal round-robin into n clusters.
        std::vector<std::pair<std::string, std::string>> flat; // (tag, category)
        for (const auto& c : cats)
            if (auto it = tags.find(c); it != tags.end())
                for (const auto& t : it->second) flat.emplace_back(t, c);
        std::sort(flat.begin(), flat.end());
        if (flat.size() < n)
            throw ValidationError("DT-I: query " + std::to_string(query.sample_id) + " has " +
                                  std::to_string(flat.size()) + " tags but " + std::to_string(n) +
                                  " clusters were requested; use STI or DC-I instead");
        std::vector<TagSet> clusters(n);
        for (std::size_t i = 0; i < flat.size(); ++i) clusters[i % n][flat[i].second].insert(flat[i].first);
        for (const auto& cluster : clusters) {
            const auto scores = index.overlaps(cluster, cats);
            auto best = best_available(index, scores, taken);
            if (!best) break;
            taken.insert(best->id);
            out.push_back(*best);
        }
        require_count(out, n, "DT-I");
        return out;
    }

    // DC-I / DQ: one cluster per category, quota ceil(n/4) each.
    const std::size_t quota = (n + cats.size() - 1) / cats.size();
    std::vector<ScoredId> picked;
    for (const auto& c : cats) {
        const std::vector<std::string> one{c};
        const auto scores = index.overlaps(tags, one);
        for (std::size_t q = 0; q < quota; ++q) {
            auto best = best_available(index, scores, taken);
            if (!best) break;
            taken.insert(best->id);
            picked.push_back(*best);
        }
    }
    require_count(picked, n, to_string(kind));
    if (picked.size() > n) {
        // Keep the n candidates with the best overlap over all categories,
        // preserving cluster order among the survivors.
        std::vector<ScoredId> global;
        for (const auto& p : picked) global.push_back({p.id, static_cast<double>(index.overlap(p.id, tags, cats))});
        std::sort(global.begin(), global.end(), ranks_before);
        IdSet keep;
        for (std::size_t i = 0; i < n; ++i) keep.insert(global[i].id);
        for (const auto& p : picked)
            if (keep.count(p.id)) out.push_back(p);
    } else {
        out = std::move(picked);
    }
    return out;
}

// ---------------------------------------------------------------------------

std::vector<ScoredId> arrange(std::vector<ScoredId> ranked, Placement placement) {
    if (placement == Placement::ascending) std::reverse(ranked.begin(), ranked.end());
    return ranked;
}

DemonstrationList retrieve(const RetrievalContext& ctx, const VqaSample& query, const StrategySpec& spec, Rng& rng,
                           const PseudoAnswerFn* pseudo) {
    spec.validate();
    if (!ctx.support || !ctx.queries) throw ValidationError("retrieval context is incomplete");
    const auto n = static_cast<std::size_t>(spec.shots);
    DemonstrationList out;
    out.provenance = spec;
    if (n == 0) return out;

    switch (spec.kind) {
    case StrategyKind::RS: {
        std::optional<SampleId> ex;
        if (ctx.self_exclude) ex = query.sample_id;
        // Random order is already the sequence order.
        out.items = retrieve_rs(*ctx.support->set, n, rng, ex);
        return out;
    }
    case StrategyKind::SI:
    case StrategyKind::SQ:
    case StrategyKind::SQA:
    case StrategyKind::I_SQ:
    case StrategyKind::I_SQA:
    case StrategyKind::Q_SI:
    case StrategyKind::QA_SI: {
        const auto [qm, im] = similarity_modalities(spec.kind);
        out.items = retrieve_similar(ctx, query, qm, im, n, spec.dedup_images);
        break;
    }
    case StrategyKind::SQPA:
        if (!pseudo) throw ValidationError("SQPA needs a generation model for its first round");
        out.items = retrieve_sqpa(ctx, query, spec, rng, *pseudo);
        break;
    case StrategyKind::STI:
    case StrategyKind::STQ2:
    case StrategyKind::STQ4: out.items = retrieve_tagged(ctx, query, spec.kind, n); break;
    case StrategyKind::DT_I:
    case StrategyKind::DC_I:
    case StrategyKind::DQ: out.items = retrieve_diverse(ctx, query, spec.kind, n); break;
    }
    out.items = arrange(std::move(out.items), spec.placement);
    return out;
}

} // namespace icl
