#include <gtest/gtest.h>

#include "prewrite/common/text.hpp"
#include "prewrite/intervene/intervene.hpp"

using namespace prewrite;
using namespace prewrite::intervene;

namespace {

convstore::Turn turn(int i, std::string u, std::string m) {
  convstore::Turn t;
  t.index = i;
  t.user_text = std::move(u);
  t.model_text = std::move(m);
  return t;
}

convstore::CandidateTurn candidate(std::string id, int history_turns) {
  convstore::CandidateTurn c;
  c.conv_id = std::move(id);
  c.target_index = history_turns + 1;
  c.dsat_index = history_turns + 2;
  for (int i = 1; i <= history_turns; ++i) {
    c.history.push_back(turn(i, "q" + std::to_string(i), "a" + std::to_string(i)));
  }
  c.target = turn(history_turns + 1, "original question", "original answer");
  return c;
}

llm::Gateway quiet_gateway() {
  return llm::Gateway(llm::RetryPolicy{}, std::make_shared<llm::AuditLog>(logical_clock()),
                      [](std::chrono::milliseconds) {});
}

int likert_code(std::string_view s, bool strict) {
  try {
    return parse_likert(s, strict);
  } catch (const Error& e) {
    return e.code() == ErrorCode::kParseNoScore ? -1 : e.code() == ErrorCode::kParseAmbiguous ? -2 : -3;
  }
}

}  // namespace

TEST(Simulate, EchoFixtureReturnsRewrite) {
  llm::Fixture f;
  f.purpose = llm::Purpose::kSimulate;
  f.respond = llm::echo_responder();
  auto ep = llm::mock_endpoint({f}, "bot");
  auto gw = quiet_gateway();
  auto e = simulate_response(gw, *ep, candidate("c", 2), "explain X step by step");
  EXPECT_EQ(e.simulated_response, "explain X step by step");
  EXPECT_EQ(e.chatbot_endpoint, "bot");
  EXPECT_EQ(e.candidate_ref.key(), "c#3");
  auto entries = gw.audit().entries();
  ASSERT_EQ(entries.size(), 1u);
  EXPECT_EQ(entries[0].purpose, llm::Purpose::kSimulate);
  EXPECT_DOUBLE_EQ(entries[0].temperature, 1.0);
}

TEST(Simulate, RequestShape) {
  llm::EndpointConfig ep;
  auto req = build_simulation_request(ep, candidate("c", 2), "rw");
  ASSERT_EQ(req.messages.size(), 5u);
  EXPECT_EQ(req.messages[0].content, "q1");
  EXPECT_EQ(req.messages[1].role, llm::Role::kAssistant);
  EXPECT_EQ(req.messages[3].content, "a2");
  EXPECT_EQ(req.messages[4].content, "rw");
  for (const auto& m : req.messages) EXPECT_NE(m.content, "original answer");
  auto single = build_simulation_request(ep, candidate("c", 0), "rw");
  ASSERT_EQ(single.messages.size(), 1u);
  EXPECT_EQ(single.messages[0].role, llm::Role::kUser);
}

TEST(Simulate, TimeoutPropagates) {
  llm::Fixture f;
  f.purpose = llm::Purpose::kSimulate;
  f.error = ErrorCode::kTimeout;
  f.repeat = true;
  auto ep = llm::mock_endpoint({f}, "bot");
  auto gw = quiet_gateway();
  try {
    simulate_response(gw, *ep, candidate("c", 1), "rw");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kTimeout);
  }
  EXPECT_EQ(gw.audit().entries().back().error, "TIMEOUT");
}

TEST(Simulate, EmptyReplyIsMalformed) {
  auto ep = llm::mock_endpoint({{llm::Purpose::kSimulate, "*", "  \n"}}, "bot");
  auto gw = quiet_gateway();
  try {
    simulate_response(gw, *ep, candidate("c", 1), "rw");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kMalformedResponse);
  }
}

TEST(AssignOrder, Deterministic) {
  convstore::CandidateRef r{"conv-17", 4};
  EXPECT_EQ(assign_order(42, r), assign_order(42, r));
  auto a = assign_order(42, r);
  EXPECT_NE(a.ending1, a.ending2);
  EXPECT_EQ(a.rng_seed, 42u);
}

TEST(AssignOrder, SeedChangesSomeAssignments) {
  int differ = 0;
  for (int i = 0; i < 200; ++i) {
    convstore::CandidateRef r{"c" + std::to_string(i), 1};
    differ += assign_order(1, r).ending1 != assign_order(2, r).ending1;
  }
  EXPECT_GT(differ, 50);
  EXPECT_LT(differ, 150);
}

TEST(AssignOrder, BalanceOverTenThousandRefs) {
  for (std::uint64_t seed : {0ull, 1ull, 42ull, 0xdeadbeefull}) {
    int original_first = 0;
    for (int i = 0; i < 10000; ++i) {
      convstore::CandidateRef r{"conv-" + std::to_string(i), 1 + i % 7};
      original_first += assign_order(seed, r).ending1 == Side::kOriginal;
    }
    EXPECT_GE(original_first, 4800) << seed;
    EXPECT_LE(original_first, 5200) << seed;
  }
}

TEST(ParseLikert, Examples) {
  EXPECT_EQ(parse_likert("Score: 4", true), 4);
  EXPECT_EQ(parse_likert("I'd say 2 because the first is vague.", false), 2);
  EXPECT_EQ(likert_code("between 3 and 4", true), -2);
  EXPECT_EQ(parse_likert("between 3 and 4", false), 4);
  EXPECT_EQ(likert_code("no idea", true), -1);
  EXPECT_EQ(likert_code("", false), -1);
}

TEST(ParseLikert, IgnoresLabelsRangesAndDecimals) {
  EXPECT_EQ(parse_likert("Ending 2 is better than Ending 1.\nScore: 4", true), 4);
  EXPECT_EQ(parse_likert("On the 1-5 scale I pick 5", true), 5);
  EXPECT_EQ(parse_likert("Rating 4/5", true), 4);
  EXPECT_EQ(parse_likert("Rating: 2 out of 5", true), 2);
  EXPECT_EQ(likert_code("about 3.5 overall", true), -1);
  EXPECT_EQ(likert_code("10 points, 2nd place, GPT4", true), -1);
  EXPECT_EQ(parse_likert("**Score:** 1", true), 1);
  EXPECT_EQ(likert_code("Score: 6", true), -1);
}

TEST(Derandomize, Examples) {
  OrderAssignment rewritten_second{Side::kOriginal, Side::kRewritten, 0};
  OrderAssignment rewritten_first = rewritten_second.flipped();
  EXPECT_EQ(derandomize(4, rewritten_second), (Preference{4, Outcome::kWin}));
  EXPECT_EQ(derandomize(4, rewritten_first), (Preference{2, Outcome::kLoss}));
  EXPECT_EQ(derandomize(3, rewritten_first), (Preference{3, Outcome::kTie}));
  EXPECT_EQ(derandomize(3, rewritten_second), (Preference{3, Outcome::kTie}));
  EXPECT_THROW(derandomize(0, rewritten_second), Error);
  EXPECT_THROW(derandomize(6, rewritten_second), Error);
}

TEST(Derandomize, ReflectionAndPartition) {
  // Independent table: rewrite-centric preference and class for each case.
  const int expected_pref[2][6] = {{0, 5, 4, 3, 2, 1}, {0, 1, 2, 3, 4, 5}};
  for (int second = 0; second < 2; ++second) {
    OrderAssignment a = second ? OrderAssignment{Side::kOriginal, Side::kRewritten, 0}
                               : OrderAssignment{Side::kRewritten, Side::kOriginal, 0};
    for (int s = 1; s <= 5; ++s) {
      auto p = derandomize(s, a);
      EXPECT_EQ(p.rewrite_preference, expected_pref[second][s]);
      EXPECT_EQ(p, derandomize(6 - s, a.flipped()));
      const int wins = p.wlt == Outcome::kWin, losses = p.wlt == Outcome::kLoss,
                ties = p.wlt == Outcome::kTie;
      EXPECT_EQ(wins + losses + ties, 1);
      EXPECT_EQ(wins, p.rewrite_preference >= 4);
      EXPECT_EQ(losses, p.rewrite_preference <= 2);
    }
  }
}

TEST(JudgePrompt, OrderSwapOnlyMovesEndings) {
  llm::EndpointConfig ep;
  auto c = candidate("c", 1);
  const auto& t = rewrite::default_judge_template();
  auto ab = build_judge_prompt(t, ep, c.history, "ENDING-A", "ENDING-B", {}).request;
  auto ba = build_judge_prompt(t, ep, c.history, "ENDING-B", "ENDING-A", {}).request;
  EXPECT_NE(ab.messages[0].content, ba.messages[0].content);
  auto s = ab.messages[0].content;
  s = prewrite::text::replace_all(s, "ENDING-A", "\x01");
  s = prewrite::text::replace_all(s, "ENDING-B", "ENDING-A");
  s = prewrite::text::replace_all(s, "\x01", "ENDING-B");
  EXPECT_EQ(s, ba.messages[0].content);
  EXPECT_EQ(ab.purpose, llm::Purpose::kJudge);
  EXPECT_DOUBLE_EQ(ab.temperature, 0.0);
}

TEST(JudgePrompt, DegenerateInputs) {
  llm::EndpointConfig ep;
  const auto& t = rewrite::default_judge_template();
  auto same = build_judge_prompt(t, ep, {}, "X", "X", {}).request.messages[0].content;
  EXPECT_NE(same.find("### Ending 1\nX\n\n### Ending 2\nX"), std::string::npos);
  EXPECT_NE(same.find(rewrite::kEmptyContextMarker), std::string::npos);
}

TEST(JudgePrompt, TooLong) {
  llm::EndpointConfig ep;
  ep.max_context = 50;
  auto c = candidate("c", 3);
  try {
    build_judge_prompt(rewrite::default_judge_template(), ep, c.history, "a", "b", {50, false});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kHistoryTooLong);
  }
}

namespace {

// Runs simulate + judge for n candidates with a content-only judge that
// always prefers the simulated reply, under the given order seed.
std::vector<JudgeVerdict> run_symmetric(std::uint64_t seed, int n, int score) {
  std::vector<llm::Fixture> bot_script(1);
  bot_script[0].purpose = llm::Purpose::kSimulate;
  bot_script[0].repeat = true;
  bot_script[0].respond = [](const llm::ChatRequest& r) {
    return "SIMULATED<" + r.messages.back().content + ">";
  };
  auto bot = llm::mock_endpoint(bot_script, "bot");
  llm::Fixture jf;
  jf.purpose = llm::Purpose::kJudge;
  jf.repeat = true;
  jf.respond = llm::content_judge_responder("SIMULATED<", score);
  auto judge = llm::mock_endpoint({jf}, "judge");
  auto gw = quiet_gateway();
  std::vector<JudgeVerdict> out;
  for (int i = 0; i < n; ++i) {
    auto c = candidate("conv" + std::to_string(i), i % 4);
    auto e = simulate_response(gw, *bot, c, "rewrite " + std::to_string(i));
    out.push_back(judge_pair(gw, *judge, rewrite::default_judge_template(), c, e,
                             assign_order(seed, c.ref()), {}));
  }
  return out;
}

}  // namespace

TEST(JudgePair, OrderSymmetricJudgeIsOrderInvariant) {
  for (int score = 1; score <= 5; ++score) {
    auto a = run_symmetric(1, 200, score);
    auto b = run_symmetric(99, 200, score);
    int flips = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      EXPECT_EQ(a[i].rewrite_preference, score);
      EXPECT_EQ(b[i].rewrite_preference, score);
      EXPECT_EQ(a[i].wlt, b[i].wlt);
      flips += a[i].assignment.ending1 != b[i].assignment.ending1;
    }
    EXPECT_GT(flips, 0);
  }
}

TEST(JudgePair, AuditTemperatureAndRawText) {
  auto c = candidate("c", 1);
  auto judge = llm::mock_endpoint({{llm::Purpose::kJudge, "*", "Ending 2 wins.\nScore: 5"}}, "j");
  auto gw = quiet_gateway();
  SimulatedEnding e{c.ref(), "rw", "sim", "bot"};
  OrderAssignment a{Side::kRewritten, Side::kOriginal, 3};
  auto v = judge_pair(gw, *judge, rewrite::default_judge_template(), c, e, a, {});
  EXPECT_EQ(v.raw_likert, 5);
  EXPECT_EQ(v.rewrite_preference, 1);
  EXPECT_EQ(v.wlt, Outcome::kLoss);
  ASSERT_EQ(v.raw_replies.size(), 1u);
  EXPECT_EQ(v.raw_replies[0], "Ending 2 wins.\nScore: 5");
  EXPECT_DOUBLE_EQ(gw.audit().entries().at(0).temperature, 0.0);
}

TEST(JudgePair, StrictAmbiguityPropagates) {
  auto c = candidate("c", 0);
  auto judge = llm::mock_endpoint({{llm::Purpose::kJudge, "*", "between 3 and 4"}}, "j");
  auto gw = quiet_gateway();
  SimulatedEnding e{c.ref(), "rw", "sim", "bot"};
  EXPECT_EQ(likert_code("between 3 and 4", true), -2);
  try {
    judge_pair(gw, *judge, rewrite::default_judge_template(), c, e, assign_order(0, c.ref()), {});
    FAIL();
  } catch (const Error& err) {
    EXPECT_EQ(err.code(), ErrorCode::kParseAmbiguous);
  }
}

TEST(JudgePair, RepeatsTakeMedian) {
  auto c = candidate("c", 0);
  auto judge = llm::mock_endpoint({{llm::Purpose::kJudge, "*", "Score: 5"},
                                   {llm::Purpose::kJudge, "*", "Score: 2"},
                                   {llm::Purpose::kJudge, "*", "Score: 4"}},
                                  "j");
  auto gw = quiet_gateway();
  SimulatedEnding e{c.ref(), "rw", "sim", "bot"};
  JudgeOptions opts;
  opts.repeats = 3;
  auto v = judge_pair(gw, *judge, rewrite::default_judge_template(), c, e,
                      {Side::kOriginal, Side::kRewritten, 0}, opts);
  EXPECT_EQ(v.raw_scores, (std::vector<int>{5, 2, 4}));
  EXPECT_EQ(v.raw_likert, 4);
  EXPECT_EQ(v.wlt, Outcome::kWin);
}

TEST(InterventionRecord, JsonRoundTrip) {
  InterventionRecord r;
  r.candidate_ref = {"c", 2};
  r.rewriter_endpoint = "rw";
  r.ending = {r.candidate_ref, "rewrite", "sim", "bot"};
  r.verdict.raw_likert = 2;
  r.verdict.assignment = {Side::kRewritten, Side::kOriginal, 77};
  r.verdict.rewrite_preference = 4;
  r.verdict.wlt = Outcome::kWin;
  r.verdict.judge_endpoint = "j";
  r.verdict.raw_replies = {"Score: 2"};
  r.verdict.raw_scores = {2};
  r.simulated_at = "t1";
  r.judged_at = "t2";
  auto back = intervention_from_json(to_json(r));
  EXPECT_EQ(to_json(back), to_json(r));
  EXPECT_EQ(back.verdict.assignment, r.verdict.assignment);
}
