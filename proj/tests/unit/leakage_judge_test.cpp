#include <doctest.h>

#include "fixtures.hpp"
#include "leakaudit/leakage_judge.hpp"

using namespace leakaudit;

namespace {

DocumentView view_of(const std::string& text) {
  DocumentView v;
  v.question_id = 8549;
  v.url = "https://treaty.example/status";
  v.text = text;
  v.token_count = count_tokens(text);
  return v;
}

const Question& nato() {
  static const auto set = load_questions(fixtures::sample_questions());
  return set.at(8549);
}

std::string block(int score, bool flag) {
  return "<JSON>\n" +
         json{{"reasoning", "r"}, {"contains_post_cutoff_info", flag}, {"leakage_score", score}}.dump() + "\n</JSON>";
}

}  // namespace

TEST_CASE("judge prompt fields") {
  const auto prompt = build_judge_prompt(nato(), view_of("Some article text."));
  CHECK(prompt.find("Information Cutoff Date: 2021-11-18") != std::string::npos);
  CHECK(prompt.find("Resolved answer: no") != std::string::npos);
  CHECK(prompt.find("Leakage Score Rubric") != std::string::npos);
  CHECK(prompt.find(nato().title) != std::string::npos);
  CHECK(prompt.find("Some article text.") != std::string::npos);
  CHECK(prompt.find("{context}") == std::string::npos);
  auto q = nato();
  q.resolution = "yes";
  CHECK(build_judge_prompt(q, view_of("x")).find("Resolved answer: yes") != std::string::npos);
  try {
    build_judge_prompt(nato(), view_of("  \n "));
    FAIL("expected PreconditionViolation");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::PreconditionViolation);
  }
}

TEST_CASE("reply parsing") {
  const auto j = parse_judgment(block(4, true));
  CHECK(j.leakage_score == 4);
  CHECK(j.contains_post_cutoff_info);
  CHECK(parse_judgment(block(0, true)).leakage_score == 0);
  CHECK(parse_judgment(block(0, false)).leakage_score == 0);
  CHECK(parse_judgment("Reasoning first.\n" + block(2, true) + "\ntrailing").leakage_score == 2);
  CHECK(parse_judgment(R"(<JSON>{"reasoning": "r", "contains_post_cutoff_info": true, "leakage_score": 3.0, "extra": 1}</JSON>)")
            .leakage_score == 3);
}

TEST_CASE("adversarial replies map onto the error taxonomy") {
  const auto& replies = fixtures::adversarial_judge_replies();
  CHECK(replies.size() == 20);
  for (const auto& r : replies) {
    CAPTURE(r.name);
    try {
      parse_judgment(r.reply);
      FAIL("accepted an invalid reply");
    } catch (const Error& e) {
      CHECK(e.code() == r.expected);
    }
  }
}

TEST_CASE("judge retries garbage then succeeds") {
  ScriptedProvider provider({"I think it is a 4.", block(4, true)}, "scripted");
  const auto outcome = judge_document(provider, JudgeConfig{"scripted", 0.5, 2}, nato(), view_of("text"));
  CHECK(outcome.attempts == 2);
  CHECK(outcome.judgment.leakage_score == 4);
  CHECK(outcome.judgment.question_id == 8549);
  CHECK(outcome.judgment.url == "https://treaty.example/status");
  CHECK(outcome.raw_reply == block(4, true));
  const auto requests = provider.requests();
  REQUIRE(requests.size() == 2);
  CHECK(requests[0].temperature == 0.5);
  CHECK(requests[1].attempt == 1);
  // Re-parsing the stored raw reply reproduces the judgment.
  auto reparsed = parse_judgment(outcome.raw_reply);
  reparsed.question_id = outcome.judgment.question_id;
  reparsed.url = outcome.judgment.url;
  reparsed.model_id = outcome.judgment.model_id;
  CHECK(reparsed == outcome.judgment);
}

TEST_CASE("judge gives up after the retry budget") {
  ScriptedProvider provider({"garbage"}, "scripted");
  try {
    judge_document(provider, JudgeConfig{"scripted", 0.5, 2}, nato(), view_of("text"));
    FAIL("expected ParseExhausted");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::ParseExhausted);
  }
  CHECK(provider.calls() == 3);
}

TEST_CASE("fixed valid reply is deterministic") {
  ScriptedProvider a({block(1, true)}), b({block(1, true)});
  const auto ja = judge_document(a, JudgeConfig{"scripted"}, nato(), view_of("t")).judgment;
  const auto jb = judge_document(b, JudgeConfig{"scripted"}, nato(), view_of("t")).judgment;
  CHECK(ja == jb);
}

TEST_CASE("rubric anchor document reaches the judge intact") {
  const std::string anchor =
      "Published March 2024. The treaty depositary explicitly states Country Y is not eligible to join.";
  ScriptedProvider provider({block(4, true)});
  const auto outcome = judge_document(provider, JudgeConfig{"scripted"}, nato(), view_of(anchor));
  CHECK(provider.requests()[0].prompt.find(anchor) != std::string::npos);
  CHECK(outcome.judgment.leakage_score == 4);
}

TEST_CASE("judgment invariants are re-checked on load") {
  LeakageJudgment j{1, "https://x.example/", "r", true, 3, "m"};
  CHECK(leakage_judgment_from_json(to_json(j)) == j);
  auto bad = to_json(j);
  bad["contains_post_cutoff_info"] = false;
  CHECK_THROWS_AS(leakage_judgment_from_json(bad), Error);
  bad = to_json(j);
  bad["leakage_score"] = 9;
  CHECK_THROWS_AS(leakage_judgment_from_json(bad), Error);
}
