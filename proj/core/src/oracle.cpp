#include "icl/oracle.hpp"

#include <cmath>
#include <cstdlib>
#include <thread>

#include "http_util.hpp"
#include "icl/error.hpp"
#include "icl/similarity_index.hpp"

namespace icl {

namespace {

using Clock = std::chrono::steady_clock;

double elapsed_ms(Clock::time_point start) {
    return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

double safe_cosine(std::span<const float> a, std::span<const float> b) {
    double ab = 0, aa = 0, bb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ab += double(a[i]) * b[i];
        aa += double(a[i]) * a[i];
        bb += double(b[i]) * b[i];
    }
    if (aa == 0 || bb == 0) return 0.0;
    return ab / (std::sqrt(aa) * std::sqrt(bb));
}

} // namespace

ModelAnswer MockFixedOracle::generate(const GenerationRequest&) const { return {answer_, 0.0, model_id()}; }

MockLookupOracle::MockLookupOracle(const SupportSet& queries, const std::map<std::string, std::string>& mapping) {
    table_.reserve(queries.size());
    for (const auto& s : queries.samples()) {
        auto it = mapping.find(s.canonical_answer);
        table_.emplace(s.sample_id, it == mapping.end() ? s.canonical_answer : it->second);
    }
}

ModelAnswer MockLookupOracle::generate(const GenerationRequest& request) const {
    auto it = table_.find(request.query_id);
    if (it == table_.end())
        throw OracleError("mock_lookup: query " + std::to_string(request.query_id) + " not in table",
                          request.query_id);
    return {it->second, 0.0, model_id()};
}

std::size_t MockCopyOracle::pick(const InContextSequence& seq) const {
    if (seq.demos.empty()) throw OracleError("mock_copy: sequence has no demonstrations", seq.query.sample_id);
    const auto q = embedder_->embed(seq.query.question);
    std::size_t best = 0;
    double best_score = -2.0;
    for (std::size_t i = 0; i < seq.demos.size(); ++i) {
        const auto d = embedder_->embed(seq.demos[i].question);
        const double s = safe_cosine(q, d);
        if (s >= best_score) { // later positions are nearer the query
            best_score = s;
            best = i;
        }
    }
    return best;
}

ModelAnswer MockCopyOracle::generate(const GenerationRequest& request) const {
    if (request.sequence == nullptr) throw OracleError("mock_copy: request carries no sequence", request.query_id);
    return {request.sequence->demos[pick(*request.sequence)].answer, 0.0, model_id()};
}

RemoteHttpOracle::RemoteHttpOracle(RemoteOracleOptions options)
    : options_(std::move(options)), in_flight_(std::clamp(options_.max_in_flight, 1, 1024)) {
    if (options_.endpoint.empty()) throw ValidationError("remote_http oracle requires an endpoint");
}

ModelAnswer RemoteHttpOracle::generate(const GenerationRequest& request) const {
    if (request.prompt == nullptr) throw OracleError("remote_http: request carries no prompt", request.query_id);
    const nlohmann::json body = {{"prompt", request.prompt->text},
                                 {"image_refs", request.prompt->image_refs},
                                 {"max_new_tokens", options_.max_new_tokens},
                                 {"stop", options_.stop}};
    const auto payload = body.dump();
    const auto start = Clock::now();

    std::string last_error;
    auto backoff = options_.backoff;
    for (int attempt = 0; attempt <= options_.max_retries; ++attempt) {
        if (attempt > 0) {
            std::this_thread::sleep_for(backoff);
            backoff *= 2;
        }
        detail::HttpResult res;
        {
            in_flight_.acquire();
            try {
                res = detail::post_json(options_.endpoint, "/generate", payload, options_.timeout);
            } catch (...) {
                in_flight_.release();
                throw;
            }
            in_flight_.release();
        }
        if (res.status == 200) {
            nlohmann::json j;
            try {
                j = nlohmann::json::parse(res.body);
            } catch (const nlohmann::json::exception& e) {
                throw OracleError("remote_http: malformed response: " + std::string(e.what()), request.query_id);
            }
            if (!j.is_object() || !j.contains("text") || !j["text"].is_string())
                throw OracleError("remote_http: response lacks a string 'text' field", request.query_id);
            return {j["text"].get<std::string>(), elapsed_ms(start), model_id()};
        }
        last_error = res.status == 0 ? "transport error: " + res.error : "HTTP " + std::to_string(res.status);
        if (!detail::retryable(res)) break;
    }
    throw OracleError("remote_http: " + last_error, request.query_id);
}

std::string_view to_string(OracleKind k) {
    switch (k) {
    case OracleKind::remote_http: return "remote_http";
    case OracleKind::mock_copy: return "mock_copy";
    case OracleKind::mock_lookup: return "mock_lookup";
    case OracleKind::mock_fixed: return "mock_fixed";
    }
    return "?";
}

OracleKind oracle_kind_from_string(std::string_view s) {
    for (auto k : {OracleKind::remote_http, OracleKind::mock_copy, OracleKind::mock_lookup, OracleKind::mock_fixed})
        if (to_string(k) == s) return k;
    throw ValidationError("unknown oracle kind '" + std::string(s) + "'");
}

void OracleSpec::validate() const {
    if (kind == OracleKind::remote_http && endpoint.empty() && std::getenv(kOracleEndpointEnv) == nullptr)
        throw ValidationError("oracle: remote_http requires an endpoint (or $" + std::string(kOracleEndpointEnv) +
                              ")");
    if (timeout_ms <= 0) throw ValidationError("oracle: timeout_ms must be positive");
    if (max_retries < 0) throw ValidationError("oracle: max_retries must be >= 0");
    if (max_in_flight < 1) throw ValidationError("oracle: max_in_flight must be >= 1");
    if (max_new_tokens < 1) throw ValidationError("oracle: max_new_tokens must be >= 1");
}

nlohmann::json to_json(const OracleSpec& s) {
    nlohmann::json j = {{"kind", to_string(s.kind)}};
    switch (s.kind) {
    case OracleKind::remote_http:
        j["endpoint"] = s.endpoint;
        j["timeout_ms"] = s.timeout_ms;
        j["max_retries"] = s.max_retries;
        j["backoff_ms"] = s.backoff_ms;
        j["max_in_flight"] = s.max_in_flight;
        j["max_new_tokens"] = s.max_new_tokens;
        break;
    case OracleKind::mock_fixed: j["answer"] = s.fixed_answer; break;
    default: break;
    }
    return j;
}

OracleSpec oracle_from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw ValidationError("oracle must be an object");
    OracleSpec s;
    s.kind = oracle_kind_from_string(j.at("kind").get<std::string>());
    s.endpoint = j.value("endpoint", "");
    s.fixed_answer = j.value("answer", "");
    s.timeout_ms = j.value("timeout_ms", s.timeout_ms);
    s.max_retries = j.value("max_retries", s.max_retries);
    s.backoff_ms = j.value("backoff_ms", s.backoff_ms);
    s.max_in_flight = j.value("max_in_flight", s.max_in_flight);
    s.max_new_tokens = j.value("max_new_tokens", s.max_new_tokens);
    if (s.kind == OracleKind::mock_fixed && !j.contains("answer"))
        throw ValidationError("oracle: mock_fixed requires 'answer'");
    s.validate();
    return s;
}

std::unique_ptr<Oracle> make_oracle(const OracleSpec& spec, const OracleContext& context) {
    switch (spec.kind) {
    case OracleKind::mock_fixed: return std::make_unique<MockFixedOracle>(spec.fixed_answer);
    case OracleKind::mock_lookup:
        if (context.queries == nullptr) throw ValidationError("mock_lookup oracle needs the query set");
        return std::make_unique<MockLookupOracle>(*context.queries, context.answer_mapping);
    case OracleKind::mock_copy:
        if (!context.question_embedder) throw ValidationError("mock_copy oracle needs a question embedder");
        return std::make_unique<MockCopyOracle>(context.question_embedder);
    case OracleKind::remote_http: {
        RemoteOracleOptions o;
        const char* env = std::getenv(kOracleEndpointEnv);
        o.endpoint = env != nullptr && *env != '\0' ? std::string(env) : spec.endpoint;
        o.timeout = std::chrono::milliseconds(spec.timeout_ms);
        o.max_retries = spec.max_retries;
        o.backoff = std::chrono::milliseconds(spec.backoff_ms);
        o.max_in_flight = spec.max_in_flight;
        o.max_new_tokens = spec.max_new_tokens;
        o.stop = context.stop;
        return std::make_unique<RemoteHttpOracle>(std::move(o));
    }
    }
    throw ValidationError("unknown oracle kind");
}

std::string postprocess_answer(std::string_view text, const std::vector<std::string>& stop) {
    std::size_t cut = text.size();
    for (const auto& s : stop)
        if (!s.empty()) cut = std::min(cut, text.find(s));
    cut = std::min(cut, text.find('\n'));
    auto out = text.substr(0, cut);
    const auto b = out.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = out.find_last_not_of(" \t\r");
    return std::string(out.substr(b, e - b + 1));
}

} // namespace icl
