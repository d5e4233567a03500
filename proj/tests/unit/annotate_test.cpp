#include <gtest/gtest.h>

#include <algorithm>
#include <set>
#include <sstream>

#include "rrag/annotate.hpp"
#include "rrag/error.hpp"
#include "support.hpp"

namespace rrag {
namespace {

using testing::add_critic_entries;
using testing::CriticReplies;
using testing::StubEvidence;

InstructionInstance instance(int i, std::string output = "") {
  InstructionInstance inst;
  inst.id = "inst-" + std::to_string(i);
  inst.source = "unit";
  inst.instruction = "Explain topic number " + std::to_string(i) + ".";
  inst.output = output.empty() ? "Topic " + std::to_string(i) + " is explained here." : std::move(output);
  return inst;
}

std::vector<InstructionInstance> instances(int n) {
  std::vector<InstructionInstance> out;
  for (int i = 0; i < n; ++i) out.push_back(instance(i));
  return out;
}

const std::string k_evidence = "Reference passage about the topic.";

StubEvidence one_passage() { return StubEvidence({testing::make_evidence("textbook", "doc-1", k_evidence)}); }

TEST(SampleForCritic, DeterministicAndDistinct) {
  const auto pool = instances(40);
  const auto a = sample_for_critic(pool, 15, 99);
  EXPECT_EQ(a, sample_for_critic(pool, 15, 99));
  EXPECT_NE(a, sample_for_critic(pool, 15, 100));
  std::set<std::string> ids;
  for (const auto& inst : a) ids.insert(inst.id);
  EXPECT_EQ(ids.size(), 15u);
}

TEST(SampleForCritic, FullSampleIsPermutation) {
  const auto pool = instances(25);
  auto all = sample_for_critic(pool, pool.size(), 3);
  auto by_id = [](const InstructionInstance& x, const InstructionInstance& y) { return x.id < y.id; };
  std::sort(all.begin(), all.end(), by_id);
  auto sorted = pool;
  std::sort(sorted.begin(), sorted.end(), by_id);
  EXPECT_EQ(all, sorted);
  EXPECT_TRUE(sample_for_critic(pool, 0, 3).empty());
}

TEST(SampleForCritic, TooManyRequested) {
  try {
    sample_for_critic(instances(3), 4, 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NotEnoughInstances);
  }
}

TEST(CriticVerdict, TokensAndBareDigits) {
  EXPECT_EQ(read_critic_verdict("[Retrieval] because facts", TokenKind::Ret), ReflectiveToken(RetValue::Retrieval));
  EXPECT_EQ(read_critic_verdict("Explanation first. [Irrelevant]", TokenKind::Rel),
            ReflectiveToken(RelValue::Irrelevant));
  EXPECT_EQ(read_critic_verdict("[Utility:4]", TokenKind::Use), ReflectiveToken(UseValue::U4));
  EXPECT_EQ(read_critic_verdict(" 3\nthe answer is fine", TokenKind::Use), ReflectiveToken(UseValue::U3));
  EXPECT_EQ(read_critic_verdict("12", TokenKind::Use), std::nullopt);
  EXPECT_EQ(read_critic_verdict("3", TokenKind::Rel), std::nullopt);
  EXPECT_EQ(read_critic_verdict("[Maybe]", TokenKind::Ret), std::nullopt);
  EXPECT_EQ(read_critic_verdict("[Relevant]", TokenKind::Sup), std::nullopt);
  EXPECT_EQ(read_critic_verdict("<paragraph>never closed", TokenKind::Ret), std::nullopt);
}

TEST(Annotate, NoRetrievalShape) {
  const auto inst = instance(1, "  Plain answer.  ");
  std::vector<MockBackend::Entry> entries;
  add_critic_entries(entries, inst, {"[No Retrieval]", "", "", "[Utility:4]"});
  MockBackend critic(BackendRole::Critic, entries);
  auto evidence = one_passage();
  const auto out = annotate_instance(inst, critic, &evidence);
  EXPECT_EQ(serialize_stream(out.stream), "[No Retrieval] Plain answer. [Utility:4]");
  EXPECT_EQ(out.annotations.ret, ReflectiveToken(RetValue::NoRetrieval));
  EXPECT_FALSE(out.annotations.rel.has_value());
  EXPECT_FALSE(out.evidence.has_value());
  EXPECT_TRUE(out.flags.empty());
  EXPECT_EQ(evidence.calls(), 0u);
  EXPECT_EQ(critic.calls(), 2u);
  EXPECT_EQ(invariant_violation(out), std::nullopt);
  EXPECT_EQ(drop_reason(out), std::nullopt);
}

TEST(Annotate, RetrievalShape) {
  const auto inst = instance(2);
  std::vector<MockBackend::Entry> entries;
  add_critic_entries(entries, inst, {"[Retrieval]", "[Relevant]", "[Partially supported]", "5"}, k_evidence);
  MockBackend critic(BackendRole::Critic, entries);
  auto evidence = one_passage();
  const auto out = annotate_instance(inst, critic, &evidence);
  EXPECT_EQ(serialize_stream(out.stream),
            "[Retrieval] <paragraph>" + k_evidence + "</paragraph> [Relevant] " + inst.output +
                " [Partially supported] [Utility:5]");
  ASSERT_TRUE(out.evidence.has_value());
  EXPECT_EQ(out.evidence->chunk.doc_id, "doc-1");
  EXPECT_EQ(out.annotations.sup, ReflectiveToken(SupValue::PartiallySupported));
  EXPECT_EQ(out.annotations.use, ReflectiveToken(UseValue::U5));
  EXPECT_EQ(evidence.calls(), 1u);
  EXPECT_EQ(drop_reason(out), std::nullopt);
}

TEST(Annotate, RequiresCriticRole) {
  MockBackend generator(BackendRole::Generator, {});
  try {
    annotate_instance(instance(0), generator, nullptr);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::InvalidArgument);
  }
}

TEST(Annotate, UnknownCriticTokenIsFlaggedAndDropped) {
  const auto inst = instance(3);
  std::vector<MockBackend::Entry> entries;
  add_critic_entries(entries, inst, {"[Maybe]", "", "", "[Utility:2]"});
  MockBackend critic(BackendRole::Critic, entries);
  const auto out = annotate_instance(inst, critic, nullptr);
  ASSERT_EQ(out.flags.size(), 1u);
  EXPECT_EQ(out.flags[0].code, k_flag_malformed_critic_output);
  EXPECT_EQ(out.flags[0].message, "RET reply has no usable token: '[Maybe]'");
  EXPECT_EQ(drop_reason(out), k_drop_malformed);
}

TEST(Annotate, MissingEvidenceIsFlagged) {
  const auto inst = instance(4);
  std::vector<MockBackend::Entry> entries;
  add_critic_entries(entries, inst, {"[Retrieval]", "", "", "[Utility:3]"});
  MockBackend critic(BackendRole::Critic, entries);
  StubEvidence empty;
  const auto out = annotate_instance(inst, critic, &empty);
  ASSERT_EQ(out.flags.size(), 1u);
  EXPECT_EQ(out.flags[0].code, k_flag_missing_evidence);
  EXPECT_EQ(drop_reason(out), k_drop_invariant);
}

TEST(Annotate, ContinueAtStartIsDropped) {
  const auto inst = instance(5);
  std::vector<MockBackend::Entry> entries;
  add_critic_entries(entries, inst, {"[Continue to Use Evidence]", "", "", "[Utility:5]"});
  MockBackend critic(BackendRole::Critic, entries);
  const auto out = annotate_instance(inst, critic, nullptr);
  EXPECT_TRUE(out.flags.empty());
  EXPECT_EQ(serialize_stream(out.stream), "[Continue Generation] " + inst.output + " [Utility:5]");
  EXPECT_EQ(drop_reason(out), k_drop_continue_at_start);
}

TEST(Annotate, BackendErrorsPropagate) {
  MockBackend critic(BackendRole::Critic, {});
  EXPECT_THROW(annotate_instance(instance(0), critic, nullptr), Error);
}

AnnotatedInstance valid_retrieval() {
  AnnotatedInstance a;
  a.base = instance(7);
  a.annotations = {RetValue::Retrieval, RelValue::Relevant, SupValue::FullySupported, UseValue::U4};
  a.evidence = testing::make_evidence("textbook", "d", "Evidence text.");
  a.stream = parse_stream("[Retrieval] <paragraph>Evidence text.</paragraph> [Relevant] " + a.base.output +
                          " [Fully supported] [Utility:4]")
                 .stream;
  return a;
}

TEST(Invariants, DetectEachViolation) {
  EXPECT_EQ(invariant_violation(valid_retrieval()), std::nullopt);

  auto no_use = valid_retrieval();
  no_use.annotations.use.reset();
  EXPECT_EQ(invariant_violation(no_use), "missing USE annotation");

  auto mismatch = valid_retrieval();
  mismatch.annotations.rel = RelValue::Irrelevant;
  EXPECT_EQ(invariant_violation(mismatch), "stream tokens disagree with annotations");

  auto no_paragraph = valid_retrieval();
  no_paragraph.stream.erase(no_paragraph.stream.begin() + 1);
  EXPECT_EQ(invariant_violation(no_paragraph),
            "retrieval instance needs exactly one paragraph right after [Retrieval]");

  auto stray = valid_retrieval();
  stray.annotations = {RetValue::NoRetrieval, std::nullopt, std::nullopt, UseValue::U4};
  stray.stream = parse_stream("[No Retrieval] <paragraph>p</paragraph> text [Utility:4]").stream;
  EXPECT_EQ(invariant_violation(stray), "paragraph present without [Retrieval]");

  auto no_text = valid_retrieval();
  no_text.annotations = {RetValue::NoRetrieval, std::nullopt, std::nullopt, UseValue::U4};
  no_text.stream = parse_stream("[No Retrieval] [Utility:4]").stream;
  EXPECT_EQ(invariant_violation(no_text), "stream has no output text");

  auto not_canonical = valid_retrieval();
  not_canonical.stream.insert(not_canonical.stream.begin() + 3, Text{"x"});
  EXPECT_EQ(invariant_violation(not_canonical), "stream is not canonical");

  auto unknown = valid_retrieval();
  unknown.stream[3] = Text{"has [Bogus] token"};
  EXPECT_EQ(invariant_violation(unknown), "stream carries unknown bracketed tokens");
}

TEST(Filter, PrecedenceOfReasons) {
  // A malformed flag outranks a leading Continue token.
  auto both = valid_retrieval();
  both.stream.front() = ReflectiveToken(RetValue::Continue);
  both.flags.push_back({std::string(k_flag_malformed_critic_output), "x"});
  EXPECT_EQ(drop_reason(both), k_drop_malformed);
  both.flags.clear();
  EXPECT_EQ(drop_reason(both), k_drop_continue_at_start);

  auto other_flag = valid_retrieval();
  other_flag.flags.push_back({"unparseable-stream", "x"});
  EXPECT_EQ(drop_reason(other_flag), k_drop_invariant);
}

TEST(Filter, CountsKeptAndDropped) {
  std::vector<MockBackend::Entry> entries;
  auto pool = instances(10);
  for (int i = 0; i < 10; ++i) {
    const bool malformed = i % 4 == 1;  // instances 1, 5, 9
    add_critic_entries(entries, pool[i],
                       {i % 2 ? "[Retrieval]" : "[No Retrieval]", "[Relevant]", "[No support / Contradictory]",
                        malformed ? "no idea" : "[Utility:3]"},
                       i % 2 ? k_evidence : "");
  }
  MockBackend critic(BackendRole::Critic, entries);
  auto evidence = one_passage();
  auto annotated = annotate_batch(pool, critic, &evidence, {}, 3);
  ASSERT_EQ(annotated.size(), 10u);
  for (int i = 0; i < 10; ++i) EXPECT_EQ(annotated[i].base.id, pool[i].id);
  auto again = annotate_batch(pool, critic, &evidence, {}, 1);
  EXPECT_EQ(annotated, again);

  auto [kept, report] = filter_annotated(annotated);
  EXPECT_EQ(report.kept, 7u);
  EXPECT_EQ(report.dropped, 3u);
  EXPECT_EQ(report.reasons, (std::map<std::string, std::size_t>{{"malformed-critic-output", 3}}));
  EXPECT_EQ(kept.size(), 7u);
  EXPECT_EQ(filter_report_to_json(report).dump(),
            R"({"kept":7,"dropped":3,"reasons":{"malformed-critic-output":3}})");
  for (const auto& k : kept) {
    auto reparsed = parse_stream(training_record(k)["text"].get<std::string>());
    EXPECT_TRUE(reparsed.diagnostics.empty());
    EXPECT_EQ(reparsed.stream, k.stream);
  }
}

AnnotatedInstance from_case(const std::string& name, const std::string& id) {
  AnnotatedInstance a;
  a.base.id = id;
  a.base.instruction = testing::read_line_file(testing::data_path("generator_cases/" + name + ".instruction.txt"));
  a.stream = parse_stream(testing::read_line_file(testing::data_path("generator_cases/" + name + ".txt"))).stream;
  return a;
}

TEST(Export, MatchesGoldenRecords) {
  for (const auto& [name, id] : {std::pair<std::string, std::string>{"no_retrieval", "case-no-retrieval"},
                                 {"fully_supported", "case-fully-supported"}}) {
    std::ostringstream out;
    export_training(out, {from_case(name, id)});
    EXPECT_EQ(out.str(), testing::read_text(testing::data_path("golden/export_" + name + ".jsonl"))) << name;
  }
}

TEST(Export, EmptyInputWritesEmptyFile) {
  auto dir = testing::scratch_dir("export_empty");
  const auto path = (dir / "train.jsonl").string();
  export_training_file(path, {});
  EXPECT_TRUE(std::filesystem::exists(path));
  EXPECT_EQ(std::filesystem::file_size(path), 0u);
}

TEST(Export, TrainingTextRoundTrips) {
  const auto a = from_case("fully_supported", "x");
  const auto text = training_record(a)["text"].get<std::string>();
  EXPECT_EQ(parse_stream(text).stream, a.stream);
  EXPECT_EQ(serialize_stream(parse_stream(text).stream), text);
}

TEST(AnnotatedJson, RoundTrip) {
  auto a = valid_retrieval();
  a.flags.push_back({"missing-evidence", "none found"});
  const auto back = annotated_from_json(nlohmann::json::parse(annotated_to_json(a).dump()));
  EXPECT_EQ(back, a);

  auto dir = testing::scratch_dir("annotated_json");
  const auto path = (dir / "a.jsonl").string();
  std::ofstream(path) << annotated_to_json(a).dump() << "\n" << annotated_to_json(valid_retrieval()).dump() << "\n";
  const auto read = read_annotated_file(path);
  ASSERT_EQ(read.size(), 2u);
  EXPECT_EQ(read[0], a);
}

TEST(AnnotatedJson, BadAnnotationKind) {
  auto j = nlohmann::json::parse(annotated_to_json(valid_retrieval()).dump());
  j["annotations"]["rel"] = "[Utility:3]";
  try {
    annotated_from_json(j);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::MalformedRecord);
  }
}

TEST(InstanceJson, RequiredFields) {
  const auto inst = instance_from_json(nlohmann::json::parse(R"({"id":"a","instruction":"i","output":"o"})"));
  EXPECT_EQ(inst.input, "");
  EXPECT_EQ(instance_from_json(nlohmann::json::parse(instance_to_json(inst).dump())), inst);
  EXPECT_THROW(instance_from_json(nlohmann::json::parse(R"({"id":"a","instruction":" ","output":"o"})")), Error);
  EXPECT_THROW(instance_from_json(nlohmann::json::parse(R"({"id":"a","output":"o"})")), Error);
}

}  // namespace
}  // namespace rrag
