#include <cstdlib>
#include <fstream>

#include <gtest/gtest.h>

#include "icl/config.hpp"
#include "icl/error.hpp"
#include "test_support.hpp"

using namespace icl;
using icl::testing::TempDir;

namespace {

nlohmann::json base_json() {
    return nlohmann::json::parse(R"({
      "seed": 7,
      "dataset": {"kind": "synthetic", "support": {"records": "support.ndjson",
        "embeddings": {"image": "emb_image.icle", "question": "emb_question.icle",
                       "question_answer": "emb_question_answer.icle"}}},
      "arms": ["RS", {"strategy": "SQ", "manipulations": ["MA", "reverse"]}],
      "oracle": {"kind": "mock_lookup"}
    })");
}

void write_bundle(const std::filesystem::path& dir) {
    icl::testing::synthetic_config(dir, 20, 16);
}

std::string message_of(const std::function<void()>& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.what();
    }
    return {};
}

} // namespace

TEST(InterpolateEnv, SetUnsetAndDefaults) {
    ::setenv("ICL_TEST_ENDPOINT", "http://10.0.0.1:9000", 1);
    ::unsetenv("ICL_TEST_MISSING");
    EXPECT_EQ(interpolate_env("${ICL_TEST_ENDPOINT}/x"), "http://10.0.0.1:9000/x");
    EXPECT_EQ(interpolate_env("${ICL_TEST_MISSING:-http://localhost:1}"), "http://localhost:1");
    EXPECT_EQ(interpolate_env("${ICL_TEST_ENDPOINT:-unused}"), "http://10.0.0.1:9000");
    EXPECT_EQ(interpolate_env("no vars"), "no vars");
    EXPECT_THROW(interpolate_env("${ICL_TEST_MISSING}"), ValidationError);
    EXPECT_THROW(interpolate_env("${ICL_TEST_ENDPOINT"), ValidationError);
}

TEST(Config, ParsesArmsAndDefaults) {
    TempDir dir("cfg-parse");
    const auto c = config_from_json(base_json(), dir.path());
    EXPECT_EQ(c.seed, 7u);
    EXPECT_EQ(c.shots, (std::vector<int>{4, 8, 16}));
    ASSERT_EQ(c.arms.size(), 2u);
    EXPECT_EQ(c.arms[0].label(), "RS");
    EXPECT_EQ(c.arms[1].label(), "SQ+MA+reverse");
    EXPECT_EQ(c.arms[1].strategy.seed, 7u);
    EXPECT_EQ(c.support.dataset.records, dir.path() / "support.ndjson");
    EXPECT_EQ(c.oracle.kind, OracleKind::mock_lookup);
    EXPECT_EQ(c.blur_sigma, 5.0);
}

TEST(Config, InterpolatesEndpoint) {
    ::setenv("ICL_TEST_ORACLE", "http://127.0.0.1:8123", 1);
    auto j = base_json();
    j["oracle"] = {{"kind", "remote_http"}, {"endpoint", "${ICL_TEST_ORACLE}"}};
    EXPECT_EQ(config_from_json(j, ".").oracle.endpoint, "http://127.0.0.1:8123");
}

TEST(Config, SeedMandatory) {
    auto j = base_json();
    j.erase("seed");
    EXPECT_NE(message_of([&] { config_from_json(j, "."); }).find("seed"), std::string::npos);
}

TEST(Config, ManipulationNames) {
    for (const char* name : {"MI", "MA", "MQA", "SI-Q", "SQ-I", "reverse", "declarative", "blur_query",
                             "degrade_question", "instruct1", "instruct2", "instruct3"})
        EXPECT_NO_THROW(manipulation_from_json(name)) << name;
    EXPECT_THROW(manipulation_from_json("shuffle"), ValidationError);
    const auto m = manipulation_from_json({{"instruction", "Answer briefly."}});
    EXPECT_EQ(m.instruction, "Answer briefly.");
    EXPECT_EQ(manipulation_from_json("instruct1").label(), "Instruct1");
    EXPECT_EQ(manipulation_from_json(to_json(m)), m);
}

TEST(Config, ValidationListsAllProblems) {
    TempDir dir("cfg-invalid");
    auto j = base_json();
    j["shots"] = {4, 4};
    j["arms"] = {"SQ", "SQ", {{"strategy", "RS"}, {"manipulations", {"SI-Q"}}}};
    j["dataset"]["support"]["embeddings"].erase("image");
    const auto c = config_from_json(j, dir.path());
    const auto msg = message_of([&] { validate_config(c); });
    EXPECT_NE(msg.find("duplicate shot counts"), std::string::npos) << msg;
    EXPECT_NE(msg.find("duplicate arm label 'SQ'"), std::string::npos) << msg;
    EXPECT_NE(msg.find("SI-Q/SQ-I need"), std::string::npos) << msg;
    EXPECT_NE(msg.find("file not found"), std::string::npos) << msg;
}

TEST(Config, ValidBundlePasses) {
    TempDir dir("cfg-valid");
    const auto c = icl::testing::synthetic_config(dir.path(), 20, 16);
    EXPECT_NO_THROW(validate_config(c));
    const auto files = referenced_files(c);
    EXPECT_TRUE(std::is_sorted(files.begin(), files.end()));
    EXPECT_GE(files.size(), 4u);
}

TEST(Config, RemoteOracleNeedsEndpoint) {
    TempDir dir("cfg-remote");
    auto c = icl::testing::synthetic_config(dir.path(), 20, 16);
    c.oracle.kind = OracleKind::remote_http;
    EXPECT_NE(message_of([&] { validate_config(c); }).find("endpoint"), std::string::npos);
}

TEST(Fingerprint, ChangesWithConfigAndData) {
    TempDir dir("cfg-fp");
    const auto c = icl::testing::synthetic_config(dir.path(), 20, 16);
    const auto fp = fingerprint(c);
    EXPECT_EQ(fp.size(), 64u);
    EXPECT_EQ(fingerprint(c), fp);

    auto knobs = c;
    knobs.output_dir = dir / "elsewhere";
    knobs.workers = 8;
    knobs.scan_threads = 4;
    EXPECT_EQ(fingerprint(knobs), fp);

    auto seed = c;
    seed.seed += 1;
    EXPECT_NE(fingerprint(seed), fp);
    auto shots = c;
    shots.shots = {4, 8};
    EXPECT_NE(fingerprint(shots), fp);
    auto tmpl = c;
    tmpl.prompt_template.chunk_separator = "<SEP>";
    EXPECT_NE(fingerprint(tmpl), fp);
    auto arm = c;
    arm.arms[0].manipulations.push_back(manipulation_from_json("reverse"));
    EXPECT_NE(fingerprint(arm), fp);

    {
        std::ofstream out(c.support.dataset.records, std::ios::app);
        out << "\n";
    }
    EXPECT_NE(fingerprint(c), fp);
}

TEST(Fingerprint, MovedDataKeepsFingerprint) {
    TempDir a("cfg-mv-a"), b("cfg-mv-b");
    const auto ca = icl::testing::synthetic_config(a.path(), 20, 16);
    const auto cb = icl::testing::synthetic_config(b.path(), 20, 16);
    EXPECT_EQ(fingerprint(ca), fingerprint(cb));
}

TEST(Config, LoadWithComments) {
    TempDir dir("cfg-comments");
    write_bundle(dir.path());
    {
        std::ofstream out(dir / "c.json");
        out << "// experiment\n" << base_json().dump(2) << "\n";
    }
    const auto c = load_config(dir / "c.json");
    EXPECT_NO_THROW(validate_config(c));
    EXPECT_THROW(load_config(dir / "missing.json"), IoError);
}
