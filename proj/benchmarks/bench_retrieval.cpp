#include <benchmark/benchmark.h>

#include <map>
#include <memory>

#include "icl/prompt.hpp"
#include "icl/rng.hpp"
#include "icl/similarity_index.hpp"
#include "icl/tag_index.hpp"

namespace {

icl::EmbeddingTable random_table(std::size_t n, std::size_t dim, std::uint64_t seed) {
    icl::Rng rng(seed);
    icl::EmbeddingTable t{icl::Modality::image, dim, {}, {}};
    t.ids.resize(n);
    t.data.resize(n * dim);
    for (std::size_t i = 0; i < n; ++i) t.ids[i] = i;
    for (auto& v : t.data) v = static_cast<float>(rng.uniform01() * 2.0 - 1.0);
    return t;
}

const icl::SimilarityIndex& shared_index(std::size_t n) {
    static std::map<std::size_t, std::unique_ptr<icl::SimilarityIndex>> cache;
    auto& slot = cache[n];
    if (!slot) slot = std::make_unique<icl::SimilarityIndex>(random_table(n, 512, 42));
    return *slot;
}

void BM_TopK(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    const auto k = static_cast<std::size_t>(state.range(1));
    const auto& index = shared_index(n);
    const auto query = random_table(1, 512, 7);
    for (auto _ : state) benchmark::DoNotOptimize(index.top_k(query.row(0), k));
    state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * n));
}
BENCHMARK(BM_TopK)->Args({10000, 16})->Args({100000, 16})->Args({443757, 4})->Args({443757, 16})
    ->Unit(benchmark::kMillisecond);

void BM_TagOverlapTopK(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    icl::Rng rng(3);
    std::map<icl::SampleId, icl::TagSet> tags;
    for (std::size_t i = 0; i < n; ++i)
        tags[i] = {{"object", {"o" + std::to_string(rng.uniform(200)), "o" + std::to_string(rng.uniform(200))}},
                   {"attribute", {"a" + std::to_string(rng.uniform(40))}},
                   {"relation", {"r" + std::to_string(rng.uniform(20))}}};
    const icl::TagIndex index(tags);
    const auto query = tags.begin()->second;
    const std::vector<std::string> cats{"object", "attribute", "relation"};
    for (auto _ : state) benchmark::DoNotOptimize(index.top_k(query, 16, {}, cats));
}
BENCHMARK(BM_TagOverlapTopK)->Arg(10000)->Arg(100000)->Unit(benchmark::kMillisecond);

void BM_Serialize16(benchmark::State& state) {
    icl::InContextSequence seq;
    for (int i = 0; i < 16; ++i)
        seq.demos.push_back({static_cast<icl::SampleId>(i), "img" + std::to_string(i) + ".jpg",
                             "What color is the dog number " + std::to_string(i) + "?", "brown",
                             icl::AnswerType::other, 0.0});
    seq.query = {99, "query.jpg", "What color is the cat?"};
    const auto tmpl = icl::default_template();
    for (auto _ : state) benchmark::DoNotOptimize(icl::serialize(seq, tmpl));
}
BENCHMARK(BM_Serialize16);

} // namespace

BENCHMARK_MAIN();
