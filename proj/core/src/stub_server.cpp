#include "icl/stub_server.hpp"

#include <chrono>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "icl/error.hpp"
#include "icl/text_embedder.hpp"

namespace icl {

std::string_view to_string(StubMode m) {
    switch (m) {
    case StubMode::echo: return "echo";
    case StubMode::fixed: return "fixed";
    case StubMode::fail_first: return "fail_first";
    case StubMode::malformed: return "malformed";
    }
    return "?";
}

StubMode stub_mode_from_string(std::string_view s) {
    for (auto m : {StubMode::echo, StubMode::fixed, StubMode::fail_first, StubMode::malformed})
        if (to_string(m) == s) return m;
    throw ValidationError("unknown stub mode '" + std::string(s) + "'");
}

struct StubServer::Impl {
    httplib::Server server;
    HashingTextEmbedder embedder;

    explicit Impl(std::size_t dim) : embedder(dim) {}
};

StubServer::StubServer(StubOptions options)
    : options_(std::move(options)), impl_(std::make_unique<Impl>(options_.embed_dim)) {
    failures_left_ = options_.fail_count;
    auto& srv = impl_->server;

    srv.Get("/health", [](const httplib::Request&, httplib::Response& res) {
        res.set_content(R"({"status":"ok"})", "application/json");
    });

    srv.Post("/generate", [this](const httplib::Request& req, httplib::Response& res) {
        ++served_;
        const int now = ++in_flight_;
        for (int peak = peak_.load(); now > peak && !peak_.compare_exchange_weak(peak, now);) {
        }
        struct Leave {
            std::atomic<int>& counter;
            ~Leave() { --counter; }
        } leave{in_flight_};
        if (options_.delay_ms > 0) std::this_thread::sleep_for(std::chrono::milliseconds(options_.delay_ms));
        nlohmann::json body;
        try {
            body = nlohmann::json::parse(req.body);
        } catch (const nlohmann::json::exception&) {
            res.status = 400;
            res.set_content(R"({"error":"invalid JSON"})", "application/json");
            return;
        }
        std::string text;
        switch (options_.mode) {
        case StubMode::echo: text = body.value("prompt", ""); break;
        case StubMode::fixed: text = options_.fixed_answer; break;
        case StubMode::fail_first:
            if (failures_left_.fetch_sub(1) > 0) {
                res.status = 503;
                res.set_content(R"({"error":"warming up"})", "application/json");
                return;
            }
            text = options_.fixed_answer;
            break;
        case StubMode::malformed: res.set_content("not json", "text/plain"); return;
        }
        res.set_content(nlohmann::json{{"text", text}}.dump(), "application/json");
    });

    srv.Post("/embed", [this](const httplib::Request& req, httplib::Response& res) {
        ++served_;
        try {
            const auto body = nlohmann::json::parse(req.body);
            const auto& items = body.contains("texts") ? body.at("texts") : body.at("image_refs");
            nlohmann::json vectors = nlohmann::json::array();
            for (const auto& item : items) vectors.push_back(impl_->embedder.embed(item.get<std::string>()));
            res.set_content(nlohmann::json{{"vectors", vectors}}.dump(), "application/json");
        } catch (const nlohmann::json::exception& e) {
            res.status = 400;
            res.set_content(nlohmann::json{{"error", e.what()}}.dump(), "application/json");
        }
    });
}

StubServer::~StubServer() { stop(); }

void StubServer::bind() {
    auto& srv = impl_->server;
    if (options_.port == 0) {
        port_ = srv.bind_to_any_port(options_.host);
    } else {
        port_ = srv.bind_to_port(options_.host, options_.port) ? options_.port : -1;
    }
    if (port_ <= 0) throw IoError("stub server: cannot bind " + options_.host + ":" + std::to_string(options_.port));
}

void StubServer::start() {
    bind();
    thread_ = std::thread([this] { impl_->server.listen_after_bind(); });
    impl_->server.wait_until_ready();
}

void StubServer::run() {
    bind();
    impl_->server.listen_after_bind();
}

void StubServer::stop() {
    impl_->server.stop();
    if (thread_.joinable()) thread_.join();
}

} // namespace icl
