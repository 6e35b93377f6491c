#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include <gtest/gtest.h>

#include "icl/embedding.hpp"
#include "icl/error.hpp"
#include "icl/similarity_index.hpp"
#include "test_support.hpp"

using namespace icl;
using icl::testing::TempDir;

namespace {

EmbeddingTable table_from_rows(const std::vector<float>& rows, std::size_t dim, SampleId first_id = 0,
                               Modality m = Modality::image) {
    EmbeddingTable t;
    t.modality = m;
    t.dim = dim;
    for (std::size_t i = 0; i < rows.size() / dim; ++i)
        t.append(first_id + i, std::span<const float>(rows.data() + i * dim, dim));
    return t;
}

/// Double-precision cosine over raw rows, sorted by (score desc, id asc).
std::vector<ScoredId> brute_force(const std::vector<float>& rows, std::size_t dim, std::span<const float> q,
                                  std::size_t k, const IdSet& exclude = {}) {
    std::vector<ScoredId> all;
    double qq = 0;
    for (float x : q) qq += double(x) * x;
    for (std::size_t i = 0; i < rows.size() / dim; ++i) {
        if (exclude.count(i)) continue;
        double d = 0, rr = 0;
        for (std::size_t j = 0; j < dim; ++j) {
            d += double(rows[i * dim + j]) * q[j];
            rr += double(rows[i * dim + j]) * rows[i * dim + j];
        }
        all.push_back({i, d / std::sqrt(qq * rr)});
    }
    std::sort(all.begin(), all.end(), [](const ScoredId& a, const ScoredId& b) {
        return a.score != b.score ? a.score > b.score : a.id < b.id;
    });
    all.resize(std::min(k, all.size()));
    return all;
}

std::vector<char> slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

void spit(const std::filesystem::path& p, const std::vector<char>& bytes) {
    std::ofstream out(p, std::ios::binary);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

} // namespace

TEST(EmbeddingFile, ThreeByFourRoundTrip) {
    TempDir dir("emb-rt");
    std::vector<float> rows(12);
    std::iota(rows.begin(), rows.end(), 1.0f);
    const auto t = table_from_rows(rows, 4, 0, Modality::question);
    write_embeddings(dir / "t.icle", t);
    EXPECT_EQ(std::filesystem::file_size(dir / "t.icle"), 17u + 3 * (8 + 16));
    const auto back = load_embeddings(dir / "t.icle", Modality::question);
    EXPECT_EQ(back.size(), 3u);
    EXPECT_EQ(back.dim, 4u);
    EXPECT_EQ(back.ids, (std::vector<SampleId>{0, 1, 2}));
    EXPECT_EQ(back.data, rows);
}

TEST(EmbeddingFile, TruncatedFile) {
    TempDir dir("emb-trunc");
    const auto t = table_from_rows(std::vector<float>(12, 1.0f), 4);
    write_embeddings(dir / "t.icle", t);
    auto bytes = slurp(dir / "t.icle");
    for (std::size_t cut : {bytes.size() - 1, std::size_t{30}, std::size_t{10}}) {
        spit(dir / "cut.icle", std::vector<char>(bytes.begin(), bytes.begin() + static_cast<long>(cut)));
        try {
            load_embeddings(dir / "cut.icle");
            FAIL() << "expected truncation error at " << cut;
        } catch (const ParseError& e) {
            EXPECT_NE(std::string(e.what()).find("unexpected end of embedding file"), std::string::npos) << e.what();
        }
    }
}

TEST(EmbeddingFile, BadMagicVersionAndModality) {
    TempDir dir("emb-bad");
    const auto t = table_from_rows(std::vector<float>(8, 1.0f), 4);
    write_embeddings(dir / "t.icle", t);
    const auto good = slurp(dir / "t.icle");

    auto bad = good;
    bad[0] = 'X';
    spit(dir / "b.icle", bad);
    EXPECT_THROW(load_embeddings(dir / "b.icle"), ParseError);

    bad = good;
    bad[4] = 2;
    spit(dir / "b.icle", bad);
    EXPECT_THROW(load_embeddings(dir / "b.icle"), ParseError);

    bad = good;
    bad.push_back(0);
    spit(dir / "b.icle", bad);
    EXPECT_THROW(load_embeddings(dir / "b.icle"), ParseError);

    EXPECT_THROW(load_embeddings(dir / "t.icle", Modality::question), ValidationError);
}

TEST(EmbeddingFile, OrphanIdsAndDimDisagreement) {
    const auto set = SupportSet({icl::testing::make_sample(0, "q", "a"), icl::testing::make_sample(1, "q", "b")},
                                DatasetKind::synthetic);
    const auto t = table_from_rows(std::vector<float>(12, 1.0f), 4);
    try {
        check_ids_in(t, set);
        FAIL();
    } catch (const ValidationError& e) {
        EXPECT_NE(std::string(e.what()).find("2"), std::string::npos);
    }
    const auto t2 = table_from_rows(std::vector<float>(10, 1.0f), 5);
    const EmbeddingTable* both[] = {&t, &t2};
    EXPECT_THROW(check_same_dim(both), ValidationError);
}

TEST(Cosine, Examples) {
    const float a[] = {1, 0}, b[] = {0, 1}, c[] = {3, 4}, d[] = {4, 3}, z[] = {0, 0};
    EXPECT_DOUBLE_EQ(cosine(a, a), 1.0);
    EXPECT_DOUBLE_EQ(cosine(a, b), 0.0);
    EXPECT_NEAR(cosine(c, d), 24.0 / 25.0, 1e-12);
    try {
        cosine(a, z);
        FAIL();
    } catch (const ValidationError& e) {
        EXPECT_STREQ(e.what(), "zero-norm embedding");
    }
    const float e3[] = {1, 2, 3};
    EXPECT_THROW(cosine(a, e3), ValidationError);
}

TEST(SimilarityIndex, RowsAreUnitNorm) {
    const auto rows = icl::testing::random_rows(200, 32, 3);
    const SimilarityIndex index(table_from_rows(rows, 32));
    for (auto id : index.ids()) {
        const auto v = *index.vector(id);
        double n = 0;
        for (float x : v) n += double(x) * x;
        EXPECT_NEAR(std::sqrt(n), 1.0, 1e-6);
    }
}

TEST(SimilarityIndex, ScanScoresMatchScoreAllBitwise) {
    for (std::size_t dim : {16u, 100u, 512u}) {
        const auto rows = icl::testing::random_rows(300, dim, 21);
        const SimilarityIndex index(table_from_rows(rows, dim));
        const auto q = icl::testing::random_rows(1, dim, 22);
        const auto all = index.score_all(q);
        const auto ranked = index.top_k(q, index.size());
        ASSERT_EQ(ranked.size(), all.size());
        for (const auto& r : ranked) EXPECT_EQ(r.score, static_cast<double>(all[r.id])) << dim << " " << r.id;
    }
}

TEST(SimilarityIndex, KZeroAndExclusion) {
    const auto rows = icl::testing::random_rows(50, 16, 5);
    const SimilarityIndex index(table_from_rows(rows, 16));
    const std::span<const float> q(rows.data() + 7 * 16, 16);
    EXPECT_TRUE(index.top_k(q, 0).empty());
    EXPECT_EQ(index.top_k(q, 1)[0].id, 7u);
    const auto res = index.top_k(q, 10, {7});
    ASSERT_EQ(res.size(), 10u);
    for (const auto& r : res) EXPECT_NE(r.id, 7u);
    EXPECT_EQ(index.top_k(q, 100, {7, 8, 999}).size(), 48u);
    const std::vector<float> wrong(15, 1.0f);
    EXPECT_THROW(index.top_k(wrong, 3), ValidationError);
}

TEST(SimilarityIndex, MatchesBruteForce) {
    const std::size_t n = 1000, dim = 64;
    const auto rows = icl::testing::random_rows(n, dim, 17);
    const SimilarityIndex index(table_from_rows(rows, dim));
    const auto queries = icl::testing::random_rows(40, dim, 18);
    for (std::size_t qi = 0; qi < 40; ++qi) {
        const std::span<const float> q(queries.data() + qi * dim, dim);
        for (std::size_t k : {1u, 4u, 8u, 16u}) {
            const auto got = index.top_k(q, k);
            const auto want = brute_force(rows, dim, q, k);
            ASSERT_EQ(got.size(), want.size());
            for (std::size_t i = 0; i < k; ++i) {
                EXPECT_EQ(got[i].id, want[i].id) << "query " << qi << " rank " << i;
                EXPECT_NEAR(got[i].score, want[i].score, 1e-5);
            }
        }
    }
}

TEST(SimilarityIndex, FullKIsPermutationOfNonExcluded) {
    const auto rows = icl::testing::random_rows(120, 8, 23);
    const SimilarityIndex index(table_from_rows(rows, 8));
    const IdSet exclude{0, 5, 77};
    const auto res = index.top_k(std::span<const float>(rows.data(), 8), index.size(), exclude);
    ASSERT_EQ(res.size(), 117u);
    std::vector<SampleId> ids;
    for (const auto& r : res) ids.push_back(r.id);
    std::sort(ids.begin(), ids.end());
    std::vector<SampleId> expected;
    for (SampleId i = 0; i < 120; ++i)
        if (!exclude.count(i)) expected.push_back(i);
    EXPECT_EQ(ids, expected);
    EXPECT_TRUE(std::is_sorted(res.begin(), res.end(), ranks_before));
}

TEST(SimilarityIndex, TiesBrokenByAscendingId) {
    std::vector<float> rows;
    for (int i = 0; i < 6; ++i) rows.insert(rows.end(), {1.0f, 1.0f});
    const SimilarityIndex index(table_from_rows(rows, 2, 10));
    const float q[] = {2.0f, 2.0f};
    const auto res = index.top_k(q, 4);
    ASSERT_EQ(res.size(), 4u);
    for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(res[i].id, 10u + i);
}

TEST(SimilarityIndex, ThreadedScanIdentical) {
    const auto rows = icl::testing::random_rows(3000, 32, 29);
    const SimilarityIndex index(table_from_rows(rows, 32));
    const auto queries = icl::testing::random_rows(10, 32, 30);
    for (std::size_t qi = 0; qi < 10; ++qi) {
        const std::span<const float> q(queries.data() + qi * 32, 32);
        EXPECT_EQ(index.top_k(q, 16, {}, 1), index.top_k(q, 16, {}, 4));
    }
}

TEST(SimilarityIndex, NormalizationPreservesArgmax) {
    // Rows already unit-norm: top-1 by raw dot equals top-1 of the index.
    const std::size_t dim = 24, n = 300;
    auto rows = icl::testing::random_rows(n, dim, 31);
    for (std::size_t i = 0; i < n; ++i) {
        const auto v = normalized(std::span<const float>(rows.data() + i * dim, dim));
        std::copy(v.begin(), v.end(), rows.begin() + static_cast<long>(i * dim));
    }
    const SimilarityIndex index(table_from_rows(rows, dim));
    const auto queries = icl::testing::random_rows(50, dim, 32);
    for (std::size_t qi = 0; qi < 50; ++qi) {
        const float* q = queries.data() + qi * dim;
        std::size_t best = 0;
        double best_dot = -1e300;
        for (std::size_t i = 0; i < n; ++i) {
            double d = 0;
            for (std::size_t j = 0; j < dim; ++j) d += double(rows[i * dim + j]) * q[j];
            if (d > best_dot) best_dot = d, best = i;
        }
        EXPECT_EQ(index.top_k(std::span<const float>(q, dim), 1)[0].id, best);
    }
}

TEST(SimilarityIndex, RestrictedKeepsScores) {
    const auto rows = icl::testing::random_rows(100, 16, 37);
    const SimilarityIndex index(table_from_rows(rows, 16));
    const auto even = index.restricted([](SampleId id) { return id % 2 == 0; });
    EXPECT_EQ(even.size(), 50u);
    const std::span<const float> q(rows.data() + 16, 16);
    const auto all = index.top_k(q, 100);
    std::vector<ScoredId> filtered;
    for (const auto& r : all)
        if (r.id % 2 == 0) filtered.push_back(r);
    EXPECT_EQ(even.top_k(q, 50), filtered);
}
