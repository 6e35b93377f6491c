#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <unordered_set>
#include <vector>

#include "icl/embedding.hpp"

namespace icl {

struct ScoredId {
    SampleId id = 0;
    double score = 0.0;

    bool operator==(const ScoredId&) const = default;
};

/// Strict ranking order used everywhere: higher score first, then lower id.
inline bool ranks_before(const ScoredId& a, const ScoredId& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.id < b.id;
}

using IdSet = std::unordered_set<SampleId>;

/// dot(u, v) / (|u| |v|). Throws on dimension mismatch or a zero vector.
double cosine(std::span<const float> u, std::span<const float> v);

/// Unrolled float dot product used by the scan.
float dot(const float* a, const float* b, std::size_t n);

/// Exact flat cosine index over one modality. Rows are L2-normalized at
/// build time and stored in ascending sample_id order; the index is
/// immutable afterwards and safe to query from many threads.
class SimilarityIndex {
  public:
    SimilarityIndex() = default;
    explicit SimilarityIndex(EmbeddingTable table);

    Modality modality() const noexcept { return table_.modality; }
    std::size_t dim() const noexcept { return table_.dim; }
    std::size_t size() const noexcept { return table_.size(); }
    std::span<const SampleId> ids() const noexcept { return table_.ids; }

    /// Normalized row for `id`, or nullopt when absent.
    std::optional<std::span<const float>> vector(SampleId id) const;
    bool contains(SampleId id) const { return vector(id).has_value(); }

    /// Exactly min(k, |index \ exclude|) results, best first. `threads > 1`
    /// splits the scan into contiguous chunks; results are identical.
    std::vector<ScoredId> top_k(std::span<const float> query, std::size_t k, const IdSet& exclude = {},
                                std::size_t threads = 1) const;

    /// Copy holding only the rows whose id satisfies `keep`. Rows are copied
    /// verbatim, so scores agree bit-for-bit with the parent index.
    template <typename Pred>
    SimilarityIndex restricted(Pred keep) const {
        SimilarityIndex out;
        out.table_.modality = table_.modality;
        out.table_.dim = table_.dim;
        for (std::size_t i = 0; i < size(); ++i)
            if (keep(table_.ids[i])) out.table_.append(table_.ids[i], table_.row(i));
        return out;
    }

    /// Scores every row against `query` (normalized internally), in id order.
    std::vector<float> score_all(std::span<const float> query) const;

  private:
    EmbeddingTable table_;
};

/// Returns a unit-norm copy of `v`. Throws "zero-norm embedding" on zero input.
std::vector<float> normalized(std::span<const float> v);

} // namespace icl
