#pragma once

#include <chrono>
#include <cstdint>
#include <map>
#include <memory>
#include <semaphore>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "icl/dataset.hpp"
#include "icl/prompt.hpp"
#include "icl/sequence.hpp"
#include "icl/text_embedder.hpp"

namespace icl {

/// Number of HTTP requests issued by this process so far.
std::size_t network_call_count() noexcept;

struct ModelAnswer {
    std::string text;
    double latency_ms = 0.0;
    std::string model_id;
};

struct GenerationRequest {
    SampleId query_id = 0;
    const PromptText* prompt = nullptr;
    const InContextSequence* sequence = nullptr;
};

class Oracle {
  public:
    virtual ~Oracle() = default;
    /// Thread-safe. Throws OracleError carrying the query id.
    virtual ModelAnswer generate(const GenerationRequest& request) const = 0;
    virtual std::string model_id() const = 0;
};

class MockFixedOracle final : public Oracle {
  public:
    explicit MockFixedOracle(std::string answer) : answer_(std::move(answer)) {}
    ModelAnswer generate(const GenerationRequest& request) const override;
    std::string model_id() const override { return "mock_fixed"; }

  private:
    std::string answer_;
};

/// Returns the canonical answer of the query, optionally passed through an
/// answer mapping (new-mapping probes score against mapped labels).
class MockLookupOracle final : public Oracle {
  public:
    explicit MockLookupOracle(const SupportSet& queries, const std::map<std::string, std::string>& mapping = {});
    ModelAnswer generate(const GenerationRequest& request) const override;
    std::string model_id() const override { return "mock_lookup"; }

  private:
    std::unordered_map<SampleId, std::string> table_;
};

/// Short-cut model: answers with the demonstration whose question is most
/// similar to the query question. Ties go to the demo nearest the query.
class MockCopyOracle final : public Oracle {
  public:
    explicit MockCopyOracle(std::shared_ptr<const TextEmbedder> embedder) : embedder_(std::move(embedder)) {}
    ModelAnswer generate(const GenerationRequest& request) const override;
    std::string model_id() const override { return "mock_copy"; }

    /// Index of the demonstration that would be copied.
    std::size_t pick(const InContextSequence& seq) const;

  private:
    std::shared_ptr<const TextEmbedder> embedder_;
};

struct RemoteOracleOptions {
    std::string endpoint;
    std::chrono::milliseconds timeout{30000};
    int max_retries = 3;
    std::chrono::milliseconds backoff{200};
    int max_in_flight = 4;
    int max_new_tokens = 5;
    std::vector<std::string> stop;
};

/// POST /generate {prompt, image_refs, max_new_tokens, stop} -> {text}.
class RemoteHttpOracle final : public Oracle {
  public:
    explicit RemoteHttpOracle(RemoteOracleOptions options);
    ModelAnswer generate(const GenerationRequest& request) const override;
    std::string model_id() const override { return "remote_http:" + options_.endpoint; }

  private:
    RemoteOracleOptions options_;
    mutable std::counting_semaphore<1024> in_flight_;
};

enum class OracleKind { remote_http, mock_copy, mock_lookup, mock_fixed };

std::string_view to_string(OracleKind k);
OracleKind oracle_kind_from_string(std::string_view s);

struct OracleSpec {
    OracleKind kind = OracleKind::mock_lookup;
    std::string endpoint;       // remote_http
    std::string fixed_answer;   // mock_fixed
    int timeout_ms = 30000;
    int max_retries = 3;
    int backoff_ms = 200;
    int max_in_flight = 4;
    int max_new_tokens = 5;

    void validate() const;
};

nlohmann::json to_json(const OracleSpec& s);
OracleSpec oracle_from_json(const nlohmann::json& j);

/// Environment variable that overrides the remote endpoint.
inline constexpr const char* kOracleEndpointEnv = "ICL_ORACLE_ENDPOINT";

struct OracleContext {
    const SupportSet* queries = nullptr;                 // mock_lookup
    std::map<std::string, std::string> answer_mapping;   // mock_lookup under new_mapping
    std::shared_ptr<const TextEmbedder> question_embedder; // mock_copy
    std::vector<std::string> stop;                        // remote_http
};

std::unique_ptr<Oracle> make_oracle(const OracleSpec& spec, const OracleContext& context);

/// Cuts generated text at the first stop sequence and the first newline,
/// then trims surrounding whitespace.
std::string postprocess_answer(std::string_view text, const std::vector<std::string>& stop);

} // namespace icl
