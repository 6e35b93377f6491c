#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <string>

#include "icl/dataset.hpp"
#include "icl/embedding.hpp"

namespace icl {

struct SyntheticOptions {
    std::size_t samples = 50;
    std::size_t dim = 512;
    std::uint64_t seed = 2024;
    SampleId first_id = 1;
    /// Side length of the PPM images written with the bundle; 0 writes none.
    std::size_t image_size = 16;
};

/// A generated split with every artifact the harness can consume. Question
/// and (question, answer) embeddings come from HashingTextEmbedder(dim) on
/// the exact texts, so lookups through that embedder reproduce the rows.
struct SyntheticBundle {
    SupportSet set;
    std::map<Modality, EmbeddingTable> embeddings;
    std::map<SampleId, std::set<std::string>> key_tokens;
};

SyntheticBundle make_synthetic(const SyntheticOptions& options);

/// Writes support.ndjson, emb_{image,question,question_answer}.icle,
/// key_tokens.ndjson, images/*.ppm and an example config.json into `dir`.
void write_synthetic_bundle(const SyntheticBundle& bundle, const std::filesystem::path& dir,
                            const SyntheticOptions& options);

} // namespace icl
