#pragma once

#include <chrono>
#include <string>

namespace icl::detail {

struct HttpResult {
    int status = 0;      // 0 when the connection itself failed
    std::string body;
    std::string error;   // transport error description when status == 0
};

/// One POST of a JSON body. Every call bumps the process-wide network counter.
HttpResult post_json(const std::string& endpoint, const std::string& path, const std::string& body,
                     std::chrono::milliseconds timeout);

inline bool retryable(const HttpResult& r) { return r.status == 0 || r.status == 429 || r.status >= 500; }

} // namespace icl::detail
