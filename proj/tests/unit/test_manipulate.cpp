#include <algorithm>
#include <fstream>
#include <map>
#include <set>

#include <gtest/gtest.h>

#include "icl/manipulate.hpp"
#include "icl/sequence.hpp"
#include "test_support.hpp"

using namespace icl;

namespace {

struct Fixture {
    SyntheticBundle bundle = icl::testing::small_bundle(80);
    ReplacementPool pool{bundle.set};

    InContextSequence random_sequence(std::uint64_t seed, std::size_t n) const {
        Rng rng(seed);
        const auto& q = bundle.set.samples()[rng.uniform(bundle.set.size())];
        DemonstrationList list;
        list.items = retrieve_rs(bundle.set, n, rng, q.sample_id);
        return build_sequence(bundle.set, list, q);
    }
};

std::multiset<std::string> demo_keys(const InContextSequence& s) {
    std::multiset<std::string> out;
    for (const auto& d : s.demos) out.insert(std::to_string(d.sample_id) + "|" + d.image_ref + "|" + d.question + "|" + d.answer);
    return out;
}

std::vector<Demonstration> without_scores(std::vector<Demonstration> d) {
    for (auto& x : d) x.score = 0;
    return d;
}

} // namespace

TEST(BuildSequence, UsesCanonicalAnswersAndHidesQueryAnswer) {
    const Fixture f;
    const auto seq = f.random_sequence(1, 8);
    ASSERT_EQ(seq.shots(), 8u);
    for (const auto& d : seq.demos) {
        const auto& s = f.bundle.set.at(d.sample_id);
        EXPECT_EQ(d.answer, s.canonical_answer);
        EXPECT_EQ(d.question, s.question);
        EXPECT_EQ(d.image_ref, s.image_ref);
    }
    EXPECT_TRUE(seq.log.empty());
}

TEST(Mismatch, MaYesBecomesNo) {
    auto yes = icl::testing::make_sample(1, "Is it red?", "yes", AnswerType::yes_no);
    auto no = icl::testing::make_sample(2, "Is it blue?", "no", AnswerType::yes_no);
    auto other = icl::testing::make_sample(3, "What is it?", "cat", AnswerType::other);
    const SupportSet set({yes, no, other}, DatasetKind::vqav2);
    const ReplacementPool pool(set);
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        DemonstrationList list;
        list.items = {{1, 0}};
        Rng rng(seed);
        const auto out = mismatch(build_sequence(set, list, other), MismatchMode::MA, pool, rng);
        EXPECT_EQ(out.demos[0].answer, "no");
    }
}

TEST(Mismatch, MaSingletonLabelSpaceErrors) {
    auto a = icl::testing::make_sample(1, "What?", "cat", AnswerType::other);
    auto b = icl::testing::make_sample(2, "Is it?", "yes", AnswerType::yes_no);
    const SupportSet set({a, b}, DatasetKind::vqav2);
    const ReplacementPool pool(set);
    DemonstrationList list;
    list.items = {{1, 0}};
    Rng rng(0);
    try {
        mismatch(build_sequence(set, list, b), MismatchMode::MA, pool, rng);
        FAIL();
    } catch (const ValidationError& e) {
        EXPECT_STREQ(e.what(), "no alternative answer");
    }
}

TEST(Mismatch, MaReplacementsShareAnswerType) {
    const Fixture f;
    std::map<std::string, AnswerType> type_of;
    for (const auto& s : f.bundle.set.samples()) type_of[s.canonical_answer] = s.answer_type;
    std::size_t audited = 0;
    for (std::uint64_t seed = 0; audited < 1000; ++seed) {
        const auto seq = f.random_sequence(seed, 8);
        Rng rng(seed);
        const auto out = mismatch(seq, MismatchMode::MA, f.pool, rng);
        for (std::size_t i = 0; i < seq.demos.size(); ++i, ++audited) {
            EXPECT_NE(out.demos[i].answer, seq.demos[i].answer);
            EXPECT_EQ(type_of.at(out.demos[i].answer), seq.demos[i].answer_type);
        }
    }
}

TEST(Mismatch, UntouchedComponentsByteIdentical) {
    const Fixture f;
    std::set<std::pair<std::string, std::string>> pairs;
    for (const auto& s : f.bundle.set.samples()) pairs.insert({s.question, s.canonical_answer});
    for (std::uint64_t seed = 0; seed < 200; ++seed) {
        const auto seq = f.random_sequence(seed, 8);
        Rng r1(seed), r2(seed), r3(seed);
        const auto mi = mismatch(seq, MismatchMode::MI, f.pool, r1);
        const auto ma = mismatch(seq, MismatchMode::MA, f.pool, r2);
        const auto mqa = mismatch(seq, MismatchMode::MQA, f.pool, r3);
        for (std::size_t i = 0; i < seq.demos.size(); ++i) {
            const auto& d = seq.demos[i];
            EXPECT_EQ(mi.demos[i].question, d.question);
            EXPECT_EQ(mi.demos[i].answer, d.answer);
            EXPECT_NE(mi.demos[i].image_ref, d.image_ref);
            EXPECT_EQ(ma.demos[i].image_ref, d.image_ref);
            EXPECT_EQ(ma.demos[i].question, d.question);
            EXPECT_EQ(mqa.demos[i].image_ref, d.image_ref);
            EXPECT_TRUE(pairs.count({mqa.demos[i].question, mqa.demos[i].answer}));
        }
        for (const auto* m : {&mi, &ma, &mqa}) {
            EXPECT_EQ(m->query, seq.query);
            EXPECT_EQ(m->log.size(), 1u);
        }
    }
}

TEST(Mismatch, DeterministicUnderSeed) {
    const Fixture f;
    const auto seq = f.random_sequence(3, 16);
    for (auto mode : {MismatchMode::MI, MismatchMode::MA, MismatchMode::MQA}) {
        Rng a(9), b(9);
        EXPECT_EQ(mismatch(seq, mode, f.pool, a).demos, mismatch(seq, mode, f.pool, b).demos);
    }
}

TEST(Reorder, SortOracleAndFixedPoint) {
    const Fixture f;
    const SimilarityIndex qindex(f.bundle.embeddings.at(Modality::question));
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        const auto seq = f.random_sequence(seed, 8);
        const auto qv = *qindex.vector(seq.query.sample_id);
        const auto out = reorder_cross_modal(seq, ReorderBy::question, qindex, qv);
        EXPECT_EQ(demo_keys(out), demo_keys(seq));
        std::vector<std::pair<double, SampleId>> oracle;
        for (const auto& d : seq.demos) oracle.push_back({cosine(*qindex.vector(d.sample_id), qv), d.sample_id});
        std::sort(oracle.begin(), oracle.end());
        for (std::size_t i = 0; i < oracle.size(); ++i) EXPECT_EQ(out.demos[i].sample_id, oracle[i].second);
        const auto again = reorder_cross_modal(out, ReorderBy::question, qindex, qv);
        EXPECT_EQ(again.demos, out.demos);
        EXPECT_EQ(out.log, std::vector<std::string>{"reorder:SI-Q"});
    }
}

TEST(Reorder, MissingEmbeddingErrors) {
    const Fixture f;
    const auto seq = f.random_sequence(1, 4);
    const SimilarityIndex qindex(f.bundle.embeddings.at(Modality::question));
    const auto empty = qindex.restricted([](SampleId) { return false; });
    const auto qv = *qindex.vector(seq.query.sample_id);
    EXPECT_THROW(reorder_cross_modal(seq, ReorderBy::image, empty, qv), ValidationError);
}

TEST(Reverse, Examples) {
    const Fixture f;
    const auto seq = f.random_sequence(4, 3);
    const auto r = reverse(seq);
    EXPECT_EQ(r.demos[0], seq.demos[2]);
    EXPECT_EQ(r.demos[1], seq.demos[1]);
    EXPECT_EQ(r.demos[2], seq.demos[0]);
    EXPECT_EQ(r.query, seq.query);
    const auto rr = reverse(r);
    EXPECT_EQ(rr.demos, seq.demos);
    EXPECT_EQ(rr.log.size(), 2u);
    const auto one = f.random_sequence(5, 1);
    EXPECT_EQ(reverse(one).demos, one.demos);
}

TEST(Instruction, BundledStringsAndPlacement) {
    EXPECT_EQ(instructions::instruct1,
              "According to the previous question and answer pair, answer the final question.");
    EXPECT_EQ(instructions::instruct2, "Consider the semantic relationship between the question and the image.");
    const Fixture f;
    const auto seq = f.random_sequence(6, 4);
    const auto out = prepend_instruction(seq, std::string(instructions::instruct1));
    EXPECT_EQ(out.instruction, std::string(instructions::instruct1));
    EXPECT_EQ(out.demos, seq.demos);
    EXPECT_THROW(prepend_instruction(seq, ""), ValidationError);
}

TEST(Declarative, Examples) {
    EXPECT_EQ(to_declarative("How many animals are there?"), "There are [MASK] animals");
    EXPECT_EQ(to_declarative("Is the dog white?"), "The dog is [MASK] white");
    EXPECT_EQ(to_declarative("What color is the dog?"), "The color of the dog is [MASK]");
    EXPECT_EQ(to_declarative("Where is the cat?"), "The cat is [MASK]");
    EXPECT_THROW(to_declarative("Why is the sky blue?"), UnsupportedPattern);
    EXPECT_THROW(to_declarative("Which one?"), UnsupportedPattern);
}

TEST(Declarative, ExactlyOneMask) {
    const std::vector<std::string> questions{
        "How many people are in the room?", "What color are the shoes?", "What is the man holding?",
        "What is this?", "What sport is this?", "What is on the table?", "Where are the keys?",
        "Are the lights on?", "Does the man have a hat?", "Do the dogs look happy?", "Is this a kitchen?",
        "What does the sign say?"};
    for (const auto& q : questions) {
        const auto d = to_declarative(q);
        std::size_t count = 0;
        for (auto p = d.find(kMaskToken); p != std::string::npos; p = d.find(kMaskToken, p + 1)) ++count;
        EXPECT_EQ(count, 1u) << q << " -> " << d;
    }
}

TEST(Declarative, SequenceFallsBackForUnsupported) {
    const Fixture f;
    auto seq = f.random_sequence(8, 4);
    seq.demos[0].question = "Why not?";
    const auto out = declarative_sequence(seq);
    EXPECT_EQ(out.demos[0].question, "Why not?");
    for (std::size_t i = 1; i < 4; ++i) EXPECT_NE(out.demos[i].question.find("[MASK]"), std::string::npos);
    EXPECT_EQ(out.log, std::vector<std::string>{"declarative"});
}

TEST(Probe, MismatchQuota) {
    const Fixture f;
    const auto yn = yes_no_subset(f.bundle.set);
    ASSERT_GE(yn.size(), 9u);
    for (std::uint64_t seed = 0; seed < 200; ++seed) {
        Rng rng(seed);
        const auto& q = yn.samples()[rng.uniform(yn.size())];
        DemonstrationList list;
        list.items = retrieve_rs(yn, 8, rng, q.sample_id);
        const auto seq = build_sequence(yn, list, q);
        const auto out = apply_mismatch_probe(seq, 0.5, rng);
        int correct = 0;
        for (std::size_t i = 0; i < 8; ++i) {
            correct += out.demos[i].answer == yn.at(out.demos[i].sample_id).canonical_answer;
            EXPECT_TRUE(out.demos[i].answer == "yes" || out.demos[i].answer == "no");
        }
        EXPECT_EQ(correct, 4);
    }
}

TEST(Probe, NewMappingAndInverse) {
    const Fixture f;
    const auto yn = yes_no_subset(f.bundle.set);
    ProbeSpec probe;
    probe.mode = ProbeMode::new_mapping;
    probe.mapping = {{"yes", "tiger"}, {"no", "lion"}};
    const auto mapped = build_trtl_probe(yn, probe);
    for (const auto& s : mapped.samples()) {
        EXPECT_TRUE(s.canonical_answer == "tiger" || s.canonical_answer == "lion");
        for (const auto& a : s.gt_answers) EXPECT_TRUE(a != "yes" && a != "no");
    }
    const auto restored = apply_answer_mapping(mapped, invert_mapping(probe.mapping));
    ASSERT_EQ(restored.size(), yn.size());
    for (std::size_t i = 0; i < yn.size(); ++i) EXPECT_EQ(nlohmann::json(to_json(restored.samples()[i])).dump(),
                                                          nlohmann::json(to_json(yn.samples()[i])).dump());
    EXPECT_THROW(build_trtl_probe(f.bundle.set, probe), ValidationError);
}

TEST(Probe, StandardIsIdentityAndSpecValidation) {
    const Fixture f;
    const auto yn = yes_no_subset(f.bundle.set);
    const auto same = build_trtl_probe(yn, ProbeSpec{});
    for (std::size_t i = 0; i < yn.size(); ++i) EXPECT_EQ(same.samples()[i], yn.samples()[i]);
    ProbeSpec bad;
    bad.mode = ProbeMode::new_mapping;
    bad.mapping = {{"yes", "tiger"}, {"no", "tiger"}};
    EXPECT_THROW(bad.validate(), ValidationError);
    bad.mapping = {{"yes", "no"}, {"no", "yes"}};
    EXPECT_THROW(bad.validate(), ValidationError);
    const auto back = probe_from_json(to_json(ProbeSpec{ProbeMode::mismatch, {}, 0.25}));
    EXPECT_EQ(back.mode, ProbeMode::mismatch);
    EXPECT_EQ(back.correct_fraction, 0.25);
}

TEST(DegradeQuestion, Examples) {
    EXPECT_EQ(degrade_question("What color is the dog?", {"dog"}), "What color is the?");
    EXPECT_EQ(degrade_question("What color is the dog?", {}), "What color is the dog?");
    EXPECT_EQ(degrade_question("Dog?", {"dog"}), "?");
    EXPECT_EQ(degrade_question("Is the DOG white?", {"dog", "white"}), "Is the?");
    EXPECT_EQ(default_key_tokens("What color is the dog?"), (std::set<std::string>{"color", "dog"}));
}

TEST(DegradeQuestion, AnnotatedBatchLeavesNoKeyTokens) {
    const auto bundle = icl::testing::small_bundle(50);
    for (const auto& s : bundle.set.samples()) {
        const auto& keys = bundle.key_tokens.at(s.sample_id);
        ASSERT_FALSE(keys.empty());
        const auto out = degrade_question(s.question, keys);
        EXPECT_FALSE(out.empty());
        std::string word;
        for (char c : out + " ") {
            if (std::isalnum(static_cast<unsigned char>(c)) || c == '\'') {
                word.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
            } else {
                EXPECT_EQ(keys.count(word), 0u) << s.question << " -> " << out;
                word.clear();
            }
        }
    }
}

TEST(DegradeQuestion, KeyTokenFile) {
    icl::testing::TempDir dir("keys");
    {
        std::ofstream out(dir / "k.ndjson");
        out << R"({"sample_id":3,"key_tokens":["dog","white"]})" << "\n\n"
            << R"({"sample_id":4,"key_tokens":[]})" << "\n";
    }
    const auto keys = load_key_token_file(dir / "k.ndjson");
    EXPECT_EQ(keys.at(3), (std::set<std::string>{"dog", "white"}));
    EXPECT_TRUE(keys.at(4).empty());
}

TEST(ManipulationLog, OneEntryPerTransform) {
    const Fixture f;
    auto seq = f.random_sequence(12, 8);
    Rng rng(1);
    seq = mismatch(seq, MismatchMode::MI, f.pool, rng);
    seq = reverse(seq);
    seq = prepend_instruction(seq, "Do it.");
    seq = declarative_sequence(seq);
    seq = degrade_query(seq, {"the"});
    EXPECT_EQ(seq.log, (std::vector<std::string>{"mismatch:MI", "reverse", "instruction", "declarative",
                                                 "noise:question"}));
    EXPECT_EQ(without_scores(seq.demos).size(), 8u);
}
