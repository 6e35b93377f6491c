#include "icl/text_embedder.hpp"

#include <cctype>
#include <cmath>
#include <thread>

#include <nlohmann/json.hpp>

#include "http_util.hpp"
#include "icl/error.hpp"
#include "icl/hashing.hpp"

namespace icl {

using nlohmann::json;

std::string qa_text(std::string_view question, std::string_view answer) {
    std::string out(question);
    out.push_back(' ');
    out.append(answer);
    return out;
}

// ---------------------------------------------------------------------------

HashingTextEmbedder::HashingTextEmbedder(std::size_t dim, std::uint64_t seed) : dim_(dim), seed_(seed) {
    if (dim == 0) throw ValidationError("embedder dim must be positive");
}

std::vector<float> HashingTextEmbedder::embed(std::string_view text) const {
    std::vector<double> acc(dim_, 0.0);
    auto add_token = [&](std::string_view token) {
        std::uint64_t state = splitmix64(fnv1a64(token) ^ seed_);
        for (std::size_t i = 0; i < dim_; ++i) {
            state = splitmix64(state);
            // Uniform in [-1, 1).
            acc[i] += static_cast<double>(state >> 11) * 0x1.0p-52 - 1.0;
        }
    };

    std::string token;
    std::size_t tokens = 0;
    for (char ch : text) {
        const auto c = static_cast<unsigned char>(ch);
        if (std::isalnum(c)) {
            token.push_back(static_cast<char>(std::tolower(c)));
        } else if (!token.empty()) {
            add_token(token);
            ++tokens;
            token.clear();
        }
    }
    if (!token.empty()) {
        add_token(token);
        ++tokens;
    }
    if (tokens == 0) add_token("<empty>");

    double ss = 0;
    for (double x : acc) ss += x * x;
    const double inv = ss > 0 ? 1.0 / std::sqrt(ss) : 0.0;
    std::vector<float> out(dim_);
    for (std::size_t i = 0; i < dim_; ++i) out[i] = static_cast<float>(acc[i] * inv);
    return out;
}

// ---------------------------------------------------------------------------

void PrecomputedTextEmbedder::add(std::string text, std::vector<float> v) {
    if (v.size() != dim_) throw ValidationError("precomputed vector has wrong dim");
    table_.insert_or_assign(std::move(text), std::move(v));
}

std::vector<float> PrecomputedTextEmbedder::embed(std::string_view text) const {
    auto it = table_.find(std::string(text));
    if (it == table_.end()) throw ValidationError("no precomputed embedding for text '" + std::string(text) + "'");
    return it->second;
}

const std::vector<float>* PrecomputedTextEmbedder::find(std::string_view text) const {
    auto it = table_.find(std::string(text));
    return it == table_.end() ? nullptr : &it->second;
}

PrecomputedTextEmbedder precomputed_qa_embedder(const SupportSet& set, const EmbeddingTable& qa_table) {
    if (qa_table.modality != Modality::question_answer)
        throw ValidationError("precomputed qa embedder needs a question_answer table");
    PrecomputedTextEmbedder out(qa_table.dim);
    for (std::size_t i = 0; i < qa_table.size(); ++i) {
        if (!set.contains(qa_table.ids[i])) continue;
        const auto& s = set.at(qa_table.ids[i]);
        auto row = qa_table.row(i);
        out.add(qa_text(s.question, s.canonical_answer), {row.begin(), row.end()});
    }
    return out;
}

// ---------------------------------------------------------------------------

RemoteEmbeddingClient::RemoteEmbeddingClient(EmbeddingServiceOptions options) : options_(std::move(options)) {
    if (options_.endpoint.empty()) throw ValidationError("embedding service endpoint is empty");
}

std::vector<std::vector<float>> RemoteEmbeddingClient::call(const std::string& field,
                                                            const std::vector<std::string>& items) const {
    const std::string body = json{{field, items}}.dump();
    detail::HttpResult res;
    for (int attempt = 0;; ++attempt) {
        res = detail::post_json(options_.endpoint, "/embed", body, options_.timeout);
        if (res.status == 200 || !detail::retryable(res) || attempt >= options_.max_retries) break;
        std::this_thread::sleep_for(std::chrono::milliseconds(50) * (1 << attempt));
    }
    if (res.status == 0) throw Error("embedding service unreachable: " + res.error);
    if (res.status != 200) throw Error("embedding service returned HTTP " + std::to_string(res.status));

    std::vector<std::vector<float>> out;
    try {
        out = json::parse(res.body).at("vectors").get<std::vector<std::vector<float>>>();
    } catch (const json::exception& e) {
        throw ParseError(std::string("malformed embedding response: ") + e.what());
    }
    if (out.size() != items.size())
        throw ParseError("embedding service returned " + std::to_string(out.size()) + " vectors for " +
                         std::to_string(items.size()) + " inputs");
    return out;
}

std::vector<std::vector<float>> RemoteEmbeddingClient::embed_texts(const std::vector<std::string>& texts) const {
    return call("texts", texts);
}

std::vector<std::vector<float>> RemoteEmbeddingClient::embed_images(const std::vector<std::string>& refs) const {
    return call("image_refs", refs);
}

RemoteTextEmbedder::RemoteTextEmbedder(EmbeddingServiceOptions options, std::size_t dim)
    : client_(std::move(options)), dim_(dim) {}

std::vector<float> RemoteTextEmbedder::embed(std::string_view text) const {
    auto v = client_.embed_texts({std::string(text)});
    std::size_t expected = 0;
    if (!dim_.compare_exchange_strong(expected, v.at(0).size()) && v[0].size() != expected)
        throw ValidationError("embedding service returned dim " + std::to_string(v[0].size()) + ", expected " +
                              std::to_string(expected));
    return std::move(v[0]);
}

EmbeddingTable ingest_embeddings(const SupportSet& set, Modality modality, const RemoteEmbeddingClient& client,
                                 std::size_t batch) {
    EmbeddingTable table;
    table.modality = modality;
    const auto samples = set.samples();
    for (std::size_t start = 0; start < samples.size(); start += batch) {
        const std::size_t end = std::min(samples.size(), start + batch);
        std::vector<std::string> items;
        for (std::size_t i = start; i < end; ++i) {
            const auto& s = samples[i];
            switch (modality) {
            case Modality::image: items.push_back(s.image_ref); break;
            case Modality::question: items.push_back(s.question); break;
            case Modality::question_answer: items.push_back(qa_text(s.question, s.canonical_answer)); break;
            }
        }
        auto vectors = modality == Modality::image ? client.embed_images(items) : client.embed_texts(items);
        for (std::size_t i = 0; i < vectors.size(); ++i) {
            if (table.dim == 0) table.dim = vectors[i].size();
            table.append(samples[start + i].sample_id, vectors[i]);
        }
    }
    return table;
}

} // namespace icl
