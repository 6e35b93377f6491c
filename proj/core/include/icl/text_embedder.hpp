#pragma once

#include <atomic>
#include <chrono>
#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "icl/dataset.hpp"
#include "icl/embedding.hpp"

namespace icl {

/// Text used as the retrieval key of a (question, answer) pair.
std::string qa_text(std::string_view question, std::string_view answer);

/// Maps text into the embedding space of the question / question_answer tables.
class TextEmbedder {
  public:
    virtual ~TextEmbedder() = default;
    virtual std::vector<float> embed(std::string_view text) const = 0;
    virtual std::size_t dim() const = 0;
};

/// Deterministic bag-of-words embedder: every lowercased word token is
/// expanded into a pseudo-random dense vector seeded by its hash and the
/// token vectors are summed. Used for desk-scale synthetic data.
class HashingTextEmbedder final : public TextEmbedder {
  public:
    explicit HashingTextEmbedder(std::size_t dim = 512, std::uint64_t seed = 0);
    std::vector<float> embed(std::string_view text) const override;
    std::size_t dim() const override { return dim_; }

  private:
    std::size_t dim_;
    std::uint64_t seed_;
};

/// Exact-text lookup into precomputed vectors. Misses throw.
class PrecomputedTextEmbedder final : public TextEmbedder {
  public:
    explicit PrecomputedTextEmbedder(std::size_t dim) : dim_(dim) {}
    void add(std::string text, std::vector<float> v);
    std::vector<float> embed(std::string_view text) const override;
    std::size_t dim() const override { return dim_; }
    std::size_t size() const { return table_.size(); }
    /// nullptr on a miss.
    const std::vector<float>* find(std::string_view text) const;

  private:
    std::size_t dim_;
    std::unordered_map<std::string, std::vector<float>> table_;
};

/// Builds a lookup keyed by qa_text(question, canonical_answer) from a
/// question_answer embedding table.
PrecomputedTextEmbedder precomputed_qa_embedder(const SupportSet& set, const EmbeddingTable& qa_table);

struct EmbeddingServiceOptions {
    std::string endpoint; // e.g. http://127.0.0.1:8089
    std::chrono::milliseconds timeout{10000};
    int max_retries = 2;
};

/// Client of POST /embed {texts:[...]} | {image_refs:[...]} -> {vectors:[[...]]}.
class RemoteEmbeddingClient {
  public:
    explicit RemoteEmbeddingClient(EmbeddingServiceOptions options);
    std::vector<std::vector<float>> embed_texts(const std::vector<std::string>& texts) const;
    std::vector<std::vector<float>> embed_images(const std::vector<std::string>& image_refs) const;

  private:
    std::vector<std::vector<float>> call(const std::string& field, const std::vector<std::string>& items) const;
    EmbeddingServiceOptions options_;
};

/// TextEmbedder over a remote embedding service. The dimension is learned
/// from the first response when `dim` is 0.
class RemoteTextEmbedder final : public TextEmbedder {
  public:
    RemoteTextEmbedder(EmbeddingServiceOptions options, std::size_t dim);
    std::vector<float> embed(std::string_view text) const override;
    std::size_t dim() const override { return dim_.load(); }

  private:
    RemoteEmbeddingClient client_;
    mutable std::atomic<std::size_t> dim_;
};

/// Embeds one modality of a dataset through the service, in batches.
EmbeddingTable ingest_embeddings(const SupportSet& set, Modality modality, const RemoteEmbeddingClient& client,
                                 std::size_t batch = 64);

} // namespace icl
