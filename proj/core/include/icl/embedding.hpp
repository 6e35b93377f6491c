#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "icl/dataset.hpp"

namespace icl {

enum class Modality : std::uint8_t { image = 0, question = 1, question_answer = 2 };

inline constexpr std::size_t kNumModalities = 3;

std::string_view to_string(Modality m);
Modality modality_from_string(std::string_view s);

/// Embedding file layout (little-endian):
///   "ICLE" | u32 version=1 | u32 count | u32 dim | u8 modality
///   count x { u64 sample_id | dim x f32 }
inline constexpr char kEmbeddingMagic[4] = {'I', 'C', 'L', 'E'};
inline constexpr std::uint32_t kEmbeddingVersion = 1;

/// Row-major table of `ids.size()` vectors of `dim` floats.
struct EmbeddingTable {
    Modality modality = Modality::image;
    std::size_t dim = 0;
    std::vector<SampleId> ids;
    std::vector<float> data;

    std::size_t size() const noexcept { return ids.size(); }
    std::span<const float> row(std::size_t i) const { return {data.data() + i * dim, dim}; }
    std::span<float> row(std::size_t i) { return {data.data() + i * dim, dim}; }

    void append(SampleId id, std::span<const float> v);
};

/// Reads an embedding file. When `expected` is set, the stored modality must match.
EmbeddingTable load_embeddings(const std::filesystem::path& path, std::optional<Modality> expected = std::nullopt);

void write_embeddings(const std::filesystem::path& path, const EmbeddingTable& table);

/// Throws ValidationError listing every id of `table` that is absent from `set`.
void check_ids_in(const EmbeddingTable& table, const SupportSet& set);

/// Throws ValidationError unless all tables share one dimension.
void check_same_dim(std::span<const EmbeddingTable* const> tables);

} // namespace icl
