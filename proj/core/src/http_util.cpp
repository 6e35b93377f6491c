#include "http_util.hpp"

#include <atomic>

#include <httplib.h>

#include "icl/oracle.hpp"

namespace icl {

namespace {
std::atomic<std::size_t> g_network_calls{0};
}

std::size_t network_call_count() noexcept { return g_network_calls.load(); }

namespace detail {

HttpResult post_json(const std::string& endpoint, const std::string& path, const std::string& body,
                     std::chrono::milliseconds timeout) {
    ++g_network_calls;
    httplib::Client client(endpoint);
    const auto secs = timeout.count() / 1000;
    const auto usecs = (timeout.count() % 1000) * 1000;
    client.set_connection_timeout(secs, usecs);
    client.set_read_timeout(secs, usecs);
    client.set_write_timeout(secs, usecs);

    HttpResult out;
    auto res = client.Post(path, body, "application/json");
    if (!res) {
        out.error = httplib::to_string(res.error());
        return out;
    }
    out.status = res->status;
    out.body = res->body;
    return out;
}

} // namespace detail
} // namespace icl
