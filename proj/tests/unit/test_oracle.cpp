#include <thread>

#include <gtest/gtest.h>

#include "icl/error.hpp"
#include "icl/oracle.hpp"
#include "icl/stub_server.hpp"
#include "test_support.hpp"

using namespace icl;

namespace {

InContextSequence sequence_with_questions(const std::vector<std::string>& questions, const std::string& query) {
    InContextSequence seq;
    for (std::size_t i = 0; i < questions.size(); ++i)
        seq.demos.push_back({i + 1, "img", questions[i], "answer" + std::to_string(i), AnswerType::other, 0.0});
    seq.query = {100, "q", query};
    return seq;
}

RemoteOracleOptions remote_options(const std::string& endpoint) {
    RemoteOracleOptions o;
    o.endpoint = endpoint;
    o.timeout = std::chrono::milliseconds(5000);
    o.backoff = std::chrono::milliseconds(1);
    o.stop = {"<|endofchunk|>", "Question:"};
    return o;
}

} // namespace

TEST(MockFixed, AlwaysSameAnswer) {
    const MockFixedOracle oracle("unanswerable");
    for (SampleId id = 0; id < 5; ++id) EXPECT_EQ(oracle.generate({id, nullptr, nullptr}).text, "unanswerable");
    EXPECT_EQ(oracle.model_id(), "mock_fixed");
}

TEST(MockLookup, ReturnsCanonicalAnswer) {
    const auto bundle = icl::testing::small_bundle(20);
    const MockLookupOracle oracle(bundle.set);
    for (const auto& s : bundle.set.samples()) EXPECT_EQ(oracle.generate({s.sample_id, nullptr, nullptr}).text, s.canonical_answer);
    try {
        oracle.generate({123456, nullptr, nullptr});
        FAIL();
    } catch (const OracleError& e) {
        EXPECT_EQ(e.query_id(), 123456u);
    }
}

TEST(MockLookup, ThroughMapping) {
    const auto set = SupportSet({icl::testing::make_sample(1, "Is it?", "yes"), icl::testing::make_sample(2, "Is it?", "no"),
                                 icl::testing::make_sample(3, "What?", "cat")},
                                DatasetKind::synthetic);
    const MockLookupOracle oracle(set, {{"yes", "tiger"}, {"no", "lion"}});
    EXPECT_EQ(oracle.generate({1, nullptr, nullptr}).text, "tiger");
    EXPECT_EQ(oracle.generate({2, nullptr, nullptr}).text, "lion");
    EXPECT_EQ(oracle.generate({3, nullptr, nullptr}).text, "cat");
}

TEST(MockCopy, SingleDemo) {
    const MockCopyOracle oracle(std::make_shared<HashingTextEmbedder>(64));
    const auto seq = sequence_with_questions({"Is the cat black?"}, "What is this?");
    EXPECT_EQ(oracle.generate({100, nullptr, &seq}).text, "answer0");
}

TEST(MockCopy, TieGoesToNearestQuery) {
    const MockCopyOracle oracle(std::make_shared<HashingTextEmbedder>(64));
    // Positions are 1-based: identical questions at 2 and 5.
    const auto seq = sequence_with_questions({"How many boats are there?", "What color is the dog?", "Where is the cat?",
                                              "Is it raining?", "What color is the dog?", "What time is it?"},
                                             "What color is the dog?");
    EXPECT_EQ(oracle.pick(seq), 4u);
    EXPECT_EQ(oracle.generate({100, nullptr, &seq}).text, "answer4");
}

TEST(MockCopy, ErrorsAndDeterminism) {
    const MockCopyOracle oracle(std::make_shared<HashingTextEmbedder>(64));
    const auto empty = sequence_with_questions({}, "What?");
    EXPECT_THROW(oracle.generate({100, nullptr, &empty}), OracleError);
    EXPECT_THROW(oracle.generate({100, nullptr, nullptr}), OracleError);
    const auto seq = sequence_with_questions({"What is on the table?", "What is under the bed?", "Is it red?"},
                                             "What is on the bed?");
    EXPECT_EQ(oracle.generate({100, nullptr, &seq}).text, oracle.generate({100, nullptr, &seq}).text);
}

TEST(Postprocess, StopsAndNewlines) {
    const std::vector<std::string> stop{"<|endofchunk|>", "Question:"};
    EXPECT_EQ(postprocess_answer(" white<|endofchunk|><image>Question:", stop), "white");
    EXPECT_EQ(postprocess_answer("two dogs\nQuestion: more", stop), "two dogs");
    EXPECT_EQ(postprocess_answer("yes Question: is", stop), "yes");
    EXPECT_EQ(postprocess_answer("   ", stop), "");
    EXPECT_EQ(postprocess_answer("plain", {}), "plain");
}

TEST(OracleSpecJson, ParsingAndValidation) {
    auto s = oracle_from_json({{"kind", "mock_fixed"}, {"answer", "banana"}});
    EXPECT_EQ(s.kind, OracleKind::mock_fixed);
    EXPECT_EQ(s.fixed_answer, "banana");
    EXPECT_THROW(oracle_from_json({{"kind", "mock_fixed"}}), ValidationError);
    EXPECT_THROW(oracle_from_json({{"kind", "gpt"}}), ValidationError);
    OracleSpec remote;
    remote.kind = OracleKind::remote_http;
    EXPECT_THROW(remote.validate(), ValidationError);
    remote.endpoint = "http://127.0.0.1:1";
    EXPECT_NO_THROW(remote.validate());
    const auto back = oracle_from_json(to_json(remote));
    EXPECT_EQ(back.endpoint, remote.endpoint);
    EXPECT_EQ(back.max_new_tokens, 5);
    EXPECT_EQ(back.max_in_flight, 4);
}

TEST(MockOracles, NoNetworkCalls) {
    const auto bundle = icl::testing::small_bundle(20);
    const auto before = network_call_count();
    OracleContext ctx;
    ctx.queries = &bundle.set;
    ctx.question_embedder = std::make_shared<HashingTextEmbedder>(64);
    for (auto kind : {OracleKind::mock_lookup, OracleKind::mock_copy, OracleKind::mock_fixed}) {
        OracleSpec spec;
        spec.kind = kind;
        spec.fixed_answer = "x";
        const auto oracle = make_oracle(spec, ctx);
        const auto seq = sequence_with_questions({"Is it?"}, "Is it?");
        for (const auto& s : bundle.set.samples()) oracle->generate({s.sample_id, nullptr, &seq});
    }
    EXPECT_EQ(network_call_count(), before);
}

TEST(RemoteOracle, EchoRoundTrip) {
    StubServer stub(StubOptions{});
    stub.start();
    const RemoteHttpOracle oracle(remote_options(stub.endpoint()));
    PromptText prompt{"<image>Question:What? Short answer:", {"a.jpg"}};
    const auto before = network_call_count();
    const auto ans = oracle.generate({7, &prompt, nullptr});
    EXPECT_EQ(ans.text, prompt.text);
    EXPECT_GE(ans.latency_ms, 0.0);
    EXPECT_EQ(network_call_count(), before + 1);
    EXPECT_EQ(stub.requests_served(), 1u);
}

TEST(RemoteOracle, RetriesThenSucceeds) {
    StubOptions so;
    so.mode = StubMode::fail_first;
    so.fail_count = 2;
    so.fixed_answer = "two";
    StubServer stub(so);
    stub.start();
    const RemoteHttpOracle oracle(remote_options(stub.endpoint()));
    PromptText prompt{"p", {"a"}};
    EXPECT_EQ(oracle.generate({1, &prompt, nullptr}).text, "two");
    EXPECT_EQ(stub.requests_served(), 3u);
}

TEST(RemoteOracle, ExhaustedRetriesCarryQueryId) {
    StubOptions so;
    so.mode = StubMode::fail_first;
    so.fail_count = 100;
    StubServer stub(so);
    stub.start();
    auto opts = remote_options(stub.endpoint());
    opts.max_retries = 2;
    const RemoteHttpOracle oracle(opts);
    PromptText prompt{"p", {"a"}};
    try {
        oracle.generate({42, &prompt, nullptr});
        FAIL();
    } catch (const OracleError& e) {
        EXPECT_EQ(e.query_id(), 42u);
        EXPECT_NE(std::string(e.what()).find("503"), std::string::npos) << e.what();
    }
    EXPECT_EQ(stub.requests_served(), 3u);
}

TEST(RemoteOracle, MalformedResponse) {
    StubOptions so;
    so.mode = StubMode::malformed;
    StubServer stub(so);
    stub.start();
    const RemoteHttpOracle oracle(remote_options(stub.endpoint()));
    PromptText prompt{"p", {"a"}};
    try {
        oracle.generate({9, &prompt, nullptr});
        FAIL();
    } catch (const OracleError& e) {
        EXPECT_EQ(e.query_id(), 9u);
        EXPECT_NE(std::string(e.what()).find("malformed"), std::string::npos);
    }
}

TEST(RemoteOracle, UnreachableEndpoint) {
    std::string endpoint;
    {
        StubServer stub(StubOptions{});
        stub.start();
        endpoint = stub.endpoint();
    }
    auto opts = remote_options(endpoint);
    opts.max_retries = 1;
    const RemoteHttpOracle oracle(opts);
    PromptText prompt{"p", {"a"}};
    EXPECT_THROW(oracle.generate({3, &prompt, nullptr}), OracleError);
}

TEST(RemoteOracle, InFlightBound) {
    StubOptions so;
    so.mode = StubMode::fixed;
    so.delay_ms = 40;
    StubServer stub(so);
    stub.start();
    auto opts = remote_options(stub.endpoint());
    opts.max_in_flight = 2;
    const RemoteHttpOracle oracle(opts);
    PromptText prompt{"p", {"a"}};
    std::vector<std::thread> threads;
    for (int i = 0; i < 8; ++i)
        threads.emplace_back([&, i] { oracle.generate({static_cast<SampleId>(i), &prompt, nullptr}); });
    for (auto& t : threads) t.join();
    EXPECT_EQ(stub.requests_served(), 8u);
    EXPECT_LE(stub.peak_in_flight(), 2);
    EXPECT_GE(stub.peak_in_flight(), 1);
}

TEST(StubServer, EmbedEndpoint) {
    StubOptions so;
    so.embed_dim = 16;
    StubServer stub(so);
    stub.start();
    EmbeddingServiceOptions eo;
    eo.endpoint = stub.endpoint();
    const RemoteEmbeddingClient client(eo);
    const auto vecs = client.embed_texts({"a dog", "a cat"});
    ASSERT_EQ(vecs.size(), 2u);
    EXPECT_EQ(vecs[0], HashingTextEmbedder(16).embed("a dog"));
    const RemoteTextEmbedder text(eo, 0);
    EXPECT_EQ(text.embed("a cat"), vecs[1]);
    EXPECT_EQ(text.dim(), 16u);
}
