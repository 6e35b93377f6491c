#pragma once

#include <atomic>
#include <cstddef>
#include <memory>
#include <string>
#include <thread>

namespace icl {

enum class StubMode { echo, fixed, fail_first, malformed };

std::string_view to_string(StubMode m);
StubMode stub_mode_from_string(std::string_view s);

struct StubOptions {
    std::string host = "127.0.0.1";
    int port = 0; // 0 picks a free port
    StubMode mode = StubMode::echo;
    std::string fixed_answer = "yes";
    int fail_count = 1;      // fail_first: requests answered with 503 before succeeding
    int delay_ms = 0;        // added to every /generate
    std::size_t embed_dim = 512;
};

/// Test inference server.
///   POST /generate: echo returns the prompt as text, fixed returns
///     fixed_answer, fail_first returns 503 fail_count times then behaves
///     like fixed, malformed returns a non-JSON body.
///   POST /embed: hashing embeddings of texts or image_refs.
///   GET /health
class StubServer {
  public:
    explicit StubServer(StubOptions options);
    ~StubServer();
    StubServer(const StubServer&) = delete;
    StubServer& operator=(const StubServer&) = delete;

    /// Binds and starts serving on a background thread.
    void start();
    /// Binds and serves on the calling thread until stop().
    void run();
    void stop();

    int port() const noexcept { return port_; }
    std::string endpoint() const { return "http://" + options_.host + ":" + std::to_string(port_); }
    std::size_t requests_served() const noexcept { return served_.load(); }
    /// Highest number of /generate requests handled at the same time.
    int peak_in_flight() const noexcept { return peak_.load(); }

  private:
    struct Impl;
    void bind();

    StubOptions options_;
    std::unique_ptr<Impl> impl_;
    std::thread thread_;
    int port_ = 0;
    std::atomic<std::size_t> served_{0};
    std::atomic<int> failures_left_{0};
    std::atomic<int> in_flight_{0};
    std::atomic<int> peak_{0};
};

} // namespace icl
