#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "icl/dataset.hpp"
#include "icl/similarity_index.hpp"

namespace icl {

namespace tag_category {
inline constexpr const char* object = "object";
inline constexpr const char* attribute = "attribute";
inline constexpr const char* relation = "relation";
inline constexpr const char* class_ = "class";
inline constexpr const char* interrogative = "interrogative";
} // namespace tag_category

/// One-hot tag vocabulary per category plus a bitset per (sample, category).
/// Overlap between two samples is the popcount of the AND of their bitsets,
/// summed over the requested categories. Frozen after construction.
class TagIndex {
  public:
    TagIndex() = default;
    /// Builds from sample tags; samples without any tags are skipped.
    TagIndex(const std::map<SampleId, TagSet>& tags);

    std::size_t size() const noexcept { return ids_.size(); }
    bool contains(SampleId id) const;
    std::span<const SampleId> ids() const noexcept { return ids_; }
    std::vector<std::string> categories() const;
    std::size_t vocabulary_size(const std::string& category) const;

    /// Original tags of `id`; empty set when unknown.
    const TagSet& tags_of(SampleId id) const;

    /// Overlap between the query tags and sample `id`, restricted to
    /// `categories` (all categories when empty). Out-of-vocabulary tags count zero.
    std::size_t overlap(SampleId id, const TagSet& query, std::span<const std::string> categories = {}) const;

    /// Best `k` samples by overlap, ties by ascending id.
    std::vector<ScoredId> top_k(const TagSet& query, std::size_t k, const IdSet& exclude = {},
                                std::span<const std::string> categories = {}) const;

    /// Overlap of every indexed sample, in id order.
    std::vector<std::size_t> overlaps(const TagSet& query, std::span<const std::string> categories = {}) const;

  private:
    using Bits = std::vector<std::uint64_t>;

    struct Category {
        std::map<std::string, std::uint32_t> vocab;
        std::size_t words = 0;
        std::vector<Bits> rows; // parallel to ids_
    };

    Bits encode(const Category& cat, const std::set<std::string>& tags) const;
    std::vector<std::pair<const Category*, Bits>> encode_query(const TagSet& query,
                                                               std::span<const std::string> categories) const;
    std::size_t row_of(SampleId id) const;

    std::vector<SampleId> ids_;
    std::vector<TagSet> tags_;
    std::map<std::string, Category> cats_;
};

/// Plain set-intersection count over categories; used to cross-check the bitset path.
std::size_t tag_overlap(const TagSet& a, const TagSet& b, std::span<const std::string> categories = {});

/// Reads newline-delimited {sample_id, category, tags:[...]} records.
std::map<SampleId, TagSet> load_tag_file(const std::filesystem::path& path);

void write_tag_file(const std::filesystem::path& path, const std::map<SampleId, TagSet>& tags);

} // namespace icl
