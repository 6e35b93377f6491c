#include "icl/similarity_index.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <queue>
#include <string>
#include <thread>

#include "icl/error.hpp"

namespace icl {

double cosine(std::span<const float> u, std::span<const float> v) {
    if (u.size() != v.size())
        throw ValidationError("dimension mismatch: " + std::to_string(u.size()) + " vs " + std::to_string(v.size()));
    double uv = 0, uu = 0, vv = 0;
    for (std::size_t i = 0; i < u.size(); ++i) {
        uv += double(u[i]) * v[i];
        uu += double(u[i]) * u[i];
        vv += double(v[i]) * v[i];
    }
    if (uu == 0.0 || vv == 0.0) throw ValidationError("zero-norm embedding");
    return std::clamp(uv / (std::sqrt(uu) * std::sqrt(vv)), -1.0, 1.0);
}

namespace {

#if defined(__GNUC__)
#define ICL_ALWAYS_INLINE inline __attribute__((always_inline))
#else
#define ICL_ALWAYS_INLINE inline
#endif

// 16 independent partial sums; the compiler maps these onto vector lanes.
ICL_ALWAYS_INLINE float dot_kernel(const float* a, const float* b, std::size_t n) {
    float acc[16] = {};
    std::size_t i = 0;
    for (; i + 16 <= n; i += 16)
        for (std::size_t j = 0; j < 16; ++j) acc[j] += a[i + j] * b[i + j];
    float tail = 0.0f;
    for (; i < n; ++i) tail += a[i] * b[i];
    for (std::size_t j = 0; j < 8; ++j) acc[j] += acc[j + 8];
    for (std::size_t j = 0; j < 4; ++j) acc[j] += acc[j + 4];
    return (acc[0] + acc[2]) + (acc[1] + acc[3]) + tail;
}

} // namespace

float dot(const float* a, const float* b, std::size_t n) { return dot_kernel(a, b, n); }

std::vector<float> normalized(std::span<const float> v) {
    double ss = 0;
    for (float x : v) ss += double(x) * x;
    if (ss == 0.0) throw ValidationError("zero-norm embedding");
    const double inv = 1.0 / std::sqrt(ss);
    std::vector<float> out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = static_cast<float>(v[i] * inv);
    return out;
}

SimilarityIndex::SimilarityIndex(EmbeddingTable table) {
    const std::size_t n = table.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](auto a, auto b) { return table.ids[a] < table.ids[b]; });
    for (std::size_t i = 1; i < n; ++i)
        if (table.ids[order[i]] == table.ids[order[i - 1]])
            throw ValidationError("duplicate embedding id " + std::to_string(table.ids[order[i]]));

    table_.modality = table.modality;
    table_.dim = table.dim;
    table_.ids.reserve(n);
    table_.data.reserve(n * table.dim);
    for (auto pos : order) {
        auto unit = normalized(table.row(pos));
        table_.append(table.ids[pos], unit);
    }
}

std::optional<std::span<const float>> SimilarityIndex::vector(SampleId id) const {
    auto it = std::lower_bound(table_.ids.begin(), table_.ids.end(), id);
    if (it == table_.ids.end() || *it != id) return std::nullopt;
    return table_.row(static_cast<std::size_t>(it - table_.ids.begin()));
}

namespace {

struct WorseOnTop {
    bool operator()(const ScoredId& a, const ScoredId& b) const { return ranks_before(a, b); }
};

using BoundedHeap = std::priority_queue<ScoredId, std::vector<ScoredId>, WorseOnTop>;

#if defined(__x86_64__) && defined(__GNUC__) && defined(__linux__)
__attribute__((target_clones("avx2", "default")))
#endif
void scan_range(const EmbeddingTable& t, const float* q, std::size_t begin, std::size_t end, std::size_t keep,
                BoundedHeap& heap) {
    for (std::size_t i = begin; i < end; ++i) {
        const ScoredId cand{t.ids[i], dot_kernel(t.data.data() + i * t.dim, q, t.dim)};
        if (heap.size() < keep) {
            heap.push(cand);
        } else if (ranks_before(cand, heap.top())) {
            heap.pop();
            heap.push(cand);
        }
    }
}

} // namespace

std::vector<ScoredId> SimilarityIndex::top_k(std::span<const float> query, std::size_t k, const IdSet& exclude,
                                             std::size_t threads) const {
    if (query.size() != dim())
        throw ValidationError("query dim " + std::to_string(query.size()) + " does not match index dim " +
                              std::to_string(dim()));
    if (k == 0 || size() == 0) return {};
    const auto q = normalized(query);

    // Excluded ids can occupy at most |exclude| slots, so over-fetch and filter.
    const std::size_t keep = std::min(size(), k + exclude.size());
    threads = std::max<std::size_t>(1, std::min(threads, size() / 4096 + 1));

    std::vector<BoundedHeap> heaps(threads);
    if (threads == 1) {
        scan_range(table_, q.data(), 0, size(), keep, heaps[0]);
    } else {
        std::vector<std::thread> workers;
        const std::size_t chunk = (size() + threads - 1) / threads;
        for (std::size_t t = 0; t < threads; ++t) {
            const std::size_t b = t * chunk, e = std::min(size(), b + chunk);
            workers.emplace_back([&, b, e, t] { scan_range(table_, q.data(), b, e, keep, heaps[t]); });
        }
        for (auto& w : workers) w.join();
    }

    std::vector<ScoredId> out;
    for (auto& h : heaps) {
        while (!h.empty()) {
            if (!exclude.count(h.top().id)) out.push_back(h.top());
            h.pop();
        }
    }
    std::sort(out.begin(), out.end(), ranks_before);
    if (out.size() > k) out.resize(k);
    return out;
}

std::vector<float> SimilarityIndex::score_all(std::span<const float> query) const {
    if (query.size() != dim()) throw ValidationError("query dim does not match index dim");
    const auto q = normalized(query);
    std::vector<float> out(size());
    for (std::size_t i = 0; i < size(); ++i) out[i] = dot(table_.data.data() + i * dim(), q.data(), dim());
    return out;
}

} // namespace icl
