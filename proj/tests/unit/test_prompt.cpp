#include <gtest/gtest.h>

#include "icl/error.hpp"
#include "icl/manipulate.hpp"
#include "icl/prompt.hpp"
#include "test_support.hpp"

using namespace icl;

namespace {

InContextSequence one_demo() {
    InContextSequence seq;
    seq.demos.push_back({1, "img1.jpg", "What color is the dog?", "white", AnswerType::other, 0.0});
    seq.query = {2, "img2.jpg", "What is this?"};
    return seq;
}

std::size_t occurrences(const std::string& hay, const std::string& needle) {
    std::size_t n = 0;
    for (auto p = hay.find(needle); p != std::string::npos; p = hay.find(needle, p + needle.size())) ++n;
    return n;
}

} // namespace

TEST(Prompt, DefaultTemplateExample) {
    const auto p = serialize(one_demo(), default_template());
    EXPECT_EQ(p.text,
              "<image>Question:What color is the dog? Short answer:white<|endofchunk|><image>Question:What is this? "
              "Short answer:");
    EXPECT_EQ(p.image_refs, (std::vector<std::string>{"img1.jpg", "img2.jpg"}));
}

TEST(Prompt, NoDemonstrations) {
    InContextSequence seq;
    seq.query = {2, "q.jpg", "What is this?"};
    const auto p = serialize(seq, default_template());
    EXPECT_EQ(p.text, "<image>Question:What is this? Short answer:");
    EXPECT_EQ(p.image_refs.size(), 1u);
}

TEST(Prompt, InstructionComesFirst) {
    const auto seq = prepend_instruction(one_demo(), std::string(instructions::instruct1));
    const auto p = serialize(seq, default_template());
    EXPECT_TRUE(p.text.starts_with(std::string(instructions::instruct1) + "\n<image>")) << p.text;
}

TEST(Prompt, DefaultTemplateFields) {
    const auto t = default_template();
    EXPECT_NO_THROW(t.validate());
    EXPECT_EQ(t.image_token, "<image>");
    EXPECT_EQ(t.demo_pattern, "Question:{Q} Short answer:{A}");
    EXPECT_EQ(t.query_pattern, "Question:{Q} Short answer:");
    EXPECT_EQ(t.chunk_separator, "<|endofchunk|>");
    EXPECT_EQ(t.instruction_separator, "\n");
}

TEST(Prompt, TemplateSlotViolations) {
    auto bad = default_template();
    bad.demo_pattern = "Question:{Q}";
    EXPECT_THROW(bad.validate(), ValidationError);
    bad = default_template();
    bad.query_pattern = "Q:{Q} A:{A}";
    EXPECT_THROW(bad.validate(), ValidationError);
    bad = default_template();
    bad.demo_pattern = "{Q}{Q}{A}";
    EXPECT_THROW(bad.validate(), ValidationError);
    EXPECT_THROW(template_from_json({{"query_pattern", "no slot"}}), ValidationError);
}

TEST(Prompt, ChunkSeparatorOverrideChangesOnlySeparator) {
    const auto fixture = icl::testing::small_bundle(30);
    InContextSequence seq;
    for (std::size_t i = 0; i < 8; ++i) {
        const auto& s = fixture.set.samples()[i];
        seq.demos.push_back({s.sample_id, s.image_ref, s.question, s.canonical_answer, s.answer_type, 0.0});
    }
    seq.query = {99, "q.ppm", fixture.set.samples()[9].question};
    const auto base = serialize(seq, default_template());
    const auto alt = serialize(seq, template_from_json({{"chunk_separator", "<SEP>"}}));
    std::string expected = base.text;
    for (auto p = expected.find("<|endofchunk|>"); p != std::string::npos; p = expected.find("<|endofchunk|>", p))
        expected.replace(p, 14, "<SEP>");
    EXPECT_EQ(alt.text, expected);
    EXPECT_EQ(alt.image_refs, base.image_refs);
}

TEST(Prompt, ImageTokensMatchRefs) {
    const auto bundle = icl::testing::small_bundle(40);
    for (std::size_t n : {0u, 1u, 4u, 16u}) {
        InContextSequence seq;
        for (std::size_t i = 0; i < n; ++i) {
            const auto& s = bundle.set.samples()[i];
            seq.demos.push_back({s.sample_id, s.image_ref, s.question, s.canonical_answer, s.answer_type, 0.0});
        }
        seq.query = {1000, "query.ppm", bundle.set.samples()[30].question};
        const auto p = serialize(seq, default_template());
        EXPECT_EQ(occurrences(p.text, "<image>"), n + 1);
        ASSERT_EQ(p.image_refs.size(), n + 1);
        EXPECT_EQ(p.image_refs.back(), "query.ppm");
        for (std::size_t i = 0; i < n; ++i) EXPECT_EQ(p.image_refs[i], seq.demos[i].image_ref);
        EXPECT_TRUE(p.text.ends_with("Short answer:"));
        EXPECT_EQ(estimated_tokens(p), (p.text.size() + 3) / 4);
    }
}

TEST(Prompt, ParseRoundTrip) {
    const auto bundle = icl::testing::small_bundle(60);
    for (const auto& tmpl : {default_template(), template_from_json({{"chunk_separator", "\n\n"},
                                                                     {"demo_pattern", "Q: {Q}\nA: {A}"},
                                                                     {"query_pattern", "Q: {Q}\nA:"}})}) {
        for (std::size_t n : {0u, 1u, 3u, 8u}) {
            InContextSequence seq;
            for (std::size_t i = 0; i < n; ++i) {
                const auto& s = bundle.set.samples()[i * 3 + 1];
                seq.demos.push_back({s.sample_id, s.image_ref, s.question, s.canonical_answer, s.answer_type, 0.0});
            }
            seq.query = {1000, "q.ppm", bundle.set.samples()[50].question};
            if (n == 3) seq.instruction = std::string(instructions::instruct2);
            const auto parsed = parse_prompt(serialize(seq, tmpl).text, tmpl);
            ASSERT_EQ(parsed.demos.size(), n);
            for (std::size_t i = 0; i < n; ++i) {
                EXPECT_EQ(parsed.demos[i].first, seq.demos[i].question);
                EXPECT_EQ(parsed.demos[i].second, seq.demos[i].answer);
            }
            EXPECT_EQ(parsed.query_question, seq.query.question);
            EXPECT_EQ(parsed.instruction, seq.instruction);
        }
    }
}

TEST(Prompt, ControlTokensRejected) {
    auto seq = one_demo();
    seq.query.question = "What is <image> here?";
    EXPECT_THROW(serialize(seq, default_template()), ValidationError);
    seq = one_demo();
    seq.demos[0].answer = "white<|endofchunk|>";
    EXPECT_THROW(serialize(seq, default_template()), ValidationError);
    seq = one_demo();
    seq.demos[0].question = "Question:What?";
    EXPECT_THROW(serialize(seq, default_template()), ValidationError);
    seq = one_demo();
    seq.demos[0].question = "Plain question with spaces";
    EXPECT_NO_THROW(serialize(seq, default_template()));
}
