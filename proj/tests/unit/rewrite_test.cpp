#include <gtest/gtest.h>

#include <random>

#include "prewrite/rewrite/rewriter.hpp"

using namespace prewrite;
using namespace prewrite::rewrite;

namespace {

convstore::Turn turn(int i, std::string u, std::string m) {
  convstore::Turn t;
  t.index = i;
  t.user_text = std::move(u);
  t.model_text = std::move(m);
  return t;
}

convstore::CandidateTurn casino_candidate() {
  convstore::CandidateTurn c;
  c.conv_id = "casino";
  c.dsat_index = 2;
  c.target_index = 1;
  c.target = turn(1, "Ruleta Casino", "Ruleta Casino is a popular online casino...");
  return c;
}

convstore::CandidateTurn deep_candidate(int history_turns) {
  convstore::CandidateTurn c;
  c.conv_id = "deep";
  c.target_index = history_turns + 1;
  c.dsat_index = history_turns + 2;
  for (int i = 1; i <= history_turns; ++i) {
    c.history.push_back(turn(i, "question " + std::to_string(i), std::string(400, 'x')));
  }
  c.target = turn(history_turns + 1, "and the other one?", "which one?");
  return c;
}

llm::Gateway quiet_gateway() {
  return llm::Gateway(llm::RetryPolicy{}, std::make_shared<llm::AuditLog>(logical_clock()),
                      [](std::chrono::milliseconds) {});
}

const char* kSomeMod = R"(<START OF OUTPUT TEMPLATE>
Modification: SOME MOD

Aspects:
|aspect|explanation|
|---|---|
|Specificity|The query does not say which cities.|
|Context|Refers to "the trip" without detail.|

Rewrite: Plan a 3-day itinerary for Paris and Lyon in May, focusing on museums.
Information Added: YES
Assumptions:
|assumption|salience|plausibility|
|---|---|---|
|The user travels in May|HIGH|MID|
|The user likes museums|MID|low|

Rewrite: Plan a 3-day itinerary for Paris and Lyon.
Information Added: NO
Assumptions: None

<END OF OUTPUT TEMPLATE>
)";

}  // namespace

TEST(RenderHistory, EmptyUsesMarker) {
  EXPECT_EQ(render_history({}), kEmptyContextMarker);
}

TEST(RenderHistory, TwoTurnsRoleTagged) {
  std::vector<convstore::Turn> h = {turn(1, "hi", "hello"), turn(2, "weather?", "sunny")};
  EXPECT_EQ(render_history(h), "User: hi\nAssistant: hello\n\nUser: weather?\nAssistant: sunny");
}

TEST(BuildPrompt, EmptyHistoryCandidate) {
  llm::EndpointConfig ep;
  ep.name = "rw";
  auto built = build_rewrite_prompt(default_rewrite_template(), casino_candidate(), ep, {});
  ASSERT_EQ(built.request.messages.size(), 1u);
  const auto& body = built.request.messages[0].content;
  EXPECT_NE(body.find(kEmptyContextMarker), std::string::npos);
  EXPECT_NE(body.find("Ruleta Casino"), std::string::npos);
  EXPECT_EQ(body.find("{query_context}"), std::string::npos);
  EXPECT_EQ(body.find("{target_query}"), std::string::npos);
  EXPECT_EQ(built.request.purpose, llm::Purpose::kRewrite);
  EXPECT_DOUBLE_EQ(built.request.temperature, 1.0);
  EXPECT_EQ(built.dropped_turns, 0);
}

TEST(BuildPrompt, TargetInsertedVerbatim) {
  auto c = casino_candidate();
  c.target.user_text = "  weird {target_query} text\n with {query_context} braces ";
  llm::EndpointConfig ep;
  auto built = build_rewrite_prompt(default_rewrite_template(), c, ep, {});
  EXPECT_NE(built.request.messages[0].content.find(c.target.user_text), std::string::npos);
}

TEST(BuildPrompt, HistoryInOrder) {
  auto c = deep_candidate(3);
  llm::EndpointConfig ep;
  auto body = build_rewrite_prompt(default_rewrite_template(), c, ep, {}).request.messages[0].content;
  auto p1 = body.find("question 1");
  auto p3 = body.find("question 3");
  ASSERT_NE(p1, std::string::npos);
  EXPECT_LT(p1, p3);
}

TEST(BuildPrompt, TooLongWithoutTruncation) {
  auto c = deep_candidate(20);  // ~2000 tokens of history
  llm::EndpointConfig ep;
  ep.max_context = 2500;
  PromptOptions opts{ep.max_context, false};
  try {
    build_rewrite_prompt(default_rewrite_template(), c, ep, opts);
    FAIL() << "expected HISTORY_TOO_LONG";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kHistoryTooLong);
  }
}

TEST(BuildPrompt, TruncationDropsOldestTurns) {
  auto c = deep_candidate(20);
  llm::EndpointConfig ep;
  ep.max_context = 2500;
  auto built = build_rewrite_prompt(default_rewrite_template(), c, ep, {ep.max_context, true});
  EXPECT_GT(built.dropped_turns, 0);
  EXPECT_LT(built.dropped_turns, 20);
  const auto& body = built.request.messages[0].content;
  EXPECT_LE(llm::estimate_tokens(body), 2500u);
  EXPECT_EQ(body.find("question 1\n"), std::string::npos);
  EXPECT_NE(body.find("question 20\n"), std::string::npos);
}

TEST(BuildPrompt, TemplateAloneTooLarge) {
  llm::EndpointConfig ep;
  ep.max_context = 10;
  try {
    build_rewrite_prompt(default_rewrite_template(), casino_candidate(), ep, {10, true});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kHistoryTooLong);
  }
}

TEST(ParseRewrite, SomeModTwoRewrites) {
  auto r = parse_rewrite_output(kSomeMod);
  EXPECT_EQ(r.mod_level, ModLevel::kSomeMod);
  ASSERT_EQ(r.aspects.size(), 2u);
  EXPECT_EQ(r.aspects[0].raw_label, "Specificity");
  EXPECT_EQ(r.aspects[1].explanation, "Refers to \"the trip\" without detail.");
  EXPECT_EQ(r.aspects[0].polarity, Polarity::kImprovementNeeded);
  ASSERT_EQ(r.rewrites.size(), 2u);
  EXPECT_EQ(r.rewrites[0].text,
            "Plan a 3-day itinerary for Paris and Lyon in May, focusing on museums.");
  EXPECT_TRUE(r.rewrites[0].information_added);
  ASSERT_EQ(r.rewrites[0].assumptions.size(), 2u);
  EXPECT_EQ(r.rewrites[0].assumptions[0].salience, Level::kHigh);
  EXPECT_EQ(r.rewrites[0].assumptions[0].plausibility, Level::kMid);
  EXPECT_EQ(r.rewrites[0].assumptions[1].plausibility, Level::kLow);
  EXPECT_FALSE(r.rewrites[1].information_added);
  EXPECT_TRUE(r.rewrites[1].assumptions.empty());
  EXPECT_EQ(r.raw_output, kSomeMod);
}

TEST(ParseRewrite, NoModAspectsAreEffective) {
  auto r = parse_rewrite_output(
      "Modification: NO MOD\n\nAspects:\n|aspect|explanation|\n|---|---|\n"
      "|Clarity|States the task directly.|\n\nRewrite: N/A\n");
  EXPECT_EQ(r.mod_level, ModLevel::kNoMod);
  ASSERT_EQ(r.aspects.size(), 1u);
  EXPECT_EQ(r.aspects[0].polarity, Polarity::kAlreadyEffective);
  EXPECT_TRUE(r.rewrites.empty());
  EXPECT_FALSE(select_primary_rewrite(r).has_value());
}

TEST(ParseRewrite, AnsweredInsteadOfRewriting) {
  const char* reply =
      "Ruleta Casino is an online gambling site offering roulette, slots and live dealer "
      "games. It is licensed in Curacao and accepts several cryptocurrencies.";
  try {
    parse_rewrite_output(reply);
    FAIL();
  } catch (const RewriteParseError& e) {
    EXPECT_EQ(e.code(), ErrorCode::kParseNoModLevel);
    EXPECT_EQ(e.raw_output(), reply);
  }
}

TEST(ParseRewrite, MarkdownVariants) {
  auto r = parse_rewrite_output(
      "Sure.\n<start of output template>\n**Modification:** heavy-mod\n\n### Aspects:\n"
      "| Aspect | Explanation |\n|:---|:---|\n| **Goal** | unclear \\| vague |\n\n"
      "### Rewrite 1:\n**Rewrite:** Explain *closures* in JavaScript with an example.\n"
      "**Information Added:** No.\n**Assumptions:** None\n"
      "<END OF OUTPUT TEMPLATE>\ntrailing chatter: Rewrite: ignored\n");
  EXPECT_EQ(r.mod_level, ModLevel::kHeavyMod);
  ASSERT_EQ(r.aspects.size(), 1u);
  EXPECT_EQ(r.aspects[0].raw_label, "Goal");
  EXPECT_EQ(r.aspects[0].explanation, "unclear | vague");
  ASSERT_EQ(r.rewrites.size(), 1u);
  EXPECT_EQ(r.rewrites[0].text, "Explain *closures* in JavaScript with an example.");
  EXPECT_FALSE(r.rewrites[0].information_added);
}

TEST(ParseRewrite, MultilineRewriteText) {
  auto r = parse_rewrite_output(
      "Modification: SOME MOD\nAspects:\n|aspect|explanation|\n|---|---|\n|a|b|\n"
      "Rewrite: line one\nline two\n\nInformation Added: NO\n");
  ASSERT_EQ(r.rewrites.size(), 1u);
  EXPECT_EQ(r.rewrites[0].text, "line one\nline two");
}

TEST(ParseRewrite, MissingInformationAddedIsInferred) {
  auto r = parse_rewrite_output(
      "Modification: SOME MOD\nRewrite: x\nAssumptions:\n|assumption|salience|plausibility|\n"
      "|---|---|---|\n|y|LOW|HIGH|\n");
  EXPECT_TRUE(r.rewrites[0].information_added);
  auto r2 = parse_rewrite_output("Modification: SOME MOD\nRewrite: x\n");
  EXPECT_FALSE(r2.rewrites[0].information_added);
}

namespace {
ErrorCode parse_code(const std::string& s) {
  try {
    parse_rewrite_output(s);
  } catch (const RewriteParseError& e) {
    return e.code();
  }
  return ErrorCode::kIoFailure;  // sentinel: no error
}
}  // namespace

TEST(ParseRewrite, Failures) {
  EXPECT_EQ(parse_code("Modification: SOME MOD\nAspects:\n|a|b|\n"), ErrorCode::kParseNoRewrite);
  EXPECT_EQ(parse_code("Modification: HEAVY MOD\nRewrite: N/A\n"), ErrorCode::kParseNoRewrite);
  EXPECT_EQ(parse_code("Modification: NO MOD\nRewrite: do the thing\n"),
            ErrorCode::kParseInconsistent);
  EXPECT_EQ(parse_code("Modification: SOME MOD\nRewrite: x\nInformation Added: NO\n"
                       "Assumptions:\n|assumption|salience|plausibility|\n|---|---|---|\n|y|LOW|LOW|\n"),
            ErrorCode::kParseInconsistent);
  EXPECT_EQ(parse_code("Modification: SOME MOD\nRewrite: x\nInformation Added: YES\n"
                       "Assumptions:\n|assumption|salience|plausibility|\n|---|---|---|\n|y|VERY|LOW|\n"),
            ErrorCode::kParseBadEnum);
  EXPECT_EQ(parse_code("Modification: SOME MOD\nRewrite: x\nInformation Added: YES\n"
                       "Assumptions:\n|assumption|salience|plausibility|\n|---|---|---|\n|y|HIGH|\n"),
            ErrorCode::kParseBadEnum);
  EXPECT_EQ(parse_code("Modification: SOME MOD\nRewrite: x\nInformation Added: MAYBE\n"),
            ErrorCode::kParseBadEnum);
  // "mode" and "model" are not MOD tokens.
  EXPECT_EQ(parse_code("Use the no-model mode.\nRewrite: x\n"), ErrorCode::kParseNoModLevel);
}

namespace {

std::string random_text(std::mt19937_64& rng, bool allow_pipe) {
  static const std::string kWords[] = {"plan", "a",     "trip",  "to",   "Lyon", "with",
                                       "kids", "cheap", "hotel", "near", "sea",  "2024?"};
  std::string out;
  const int n = 1 + static_cast<int>(rng() % 8);
  for (int i = 0; i < n; ++i) {
    if (i) out += ' ';
    out += kWords[rng() % std::size(kWords)];
    if (allow_pipe && rng() % 7 == 0) out += " | x";
  }
  return out;
}

RewriteRecord random_record(std::mt19937_64& rng) {
  RewriteRecord r;
  r.mod_level = static_cast<ModLevel>(rng() % 3);
  const auto pol =
      r.mod_level == ModLevel::kNoMod ? Polarity::kAlreadyEffective : Polarity::kImprovementNeeded;
  for (int i = 0, n = static_cast<int>(rng() % 4); i < n; ++i) {
    r.aspects.push_back({random_text(rng, true), random_text(rng, true), pol});
  }
  if (r.mod_level != ModLevel::kNoMod) {
    for (int i = 0, n = 1 + static_cast<int>(rng() % 3); i < n; ++i) {
      Rewrite rw;
      rw.text = random_text(rng, false);
      rw.information_added = rng() % 2;
      if (rw.information_added) {
        for (int k = 0, m = static_cast<int>(rng() % 3); k < m; ++k) {
          rw.assumptions.push_back({random_text(rng, true), static_cast<Level>(rng() % 3),
                                    static_cast<Level>(rng() % 3)});
        }
      }
      r.rewrites.push_back(std::move(rw));
    }
  }
  return r;
}

}  // namespace

TEST(ParseRewrite, RenderParseRoundTrip) {
  std::mt19937_64 rng(7);
  for (int i = 0; i < 500; ++i) {
    auto r = random_record(rng);
    auto text = render_rewrite_output(r);
    auto back = parse_rewrite_output(text);
    ASSERT_TRUE(back.same_content(r)) << text;
  }
}

TEST(RecordJson, RoundTrip) {
  auto r = parse_rewrite_output(kSomeMod);
  r.candidate_ref = {"c1", 3};
  r.rewriter_endpoint = "gpt";
  r.attempts = 2;
  r.dropped_history_turns = 1;
  auto back = rewrite_record_from_json(to_json(r));
  EXPECT_TRUE(back.same_content(r));
  EXPECT_EQ(back.candidate_ref, r.candidate_ref);
  EXPECT_EQ(back.raw_output, r.raw_output);
  EXPECT_EQ(back.attempts, 2);
  EXPECT_EQ(back.dropped_history_turns, 1);
}

TEST(PerformRewrite, FirstAttemptParses) {
  auto ep = llm::mock_endpoint({{llm::Purpose::kRewrite, "*", kSomeMod}}, "rw");
  auto gw = quiet_gateway();
  auto rec = perform_rewrite(gw, *ep, default_rewrite_template(), casino_candidate(), {});
  EXPECT_EQ(rec.attempts, 1);
  EXPECT_EQ(rec.candidate_ref.key(), "casino#1");
  EXPECT_EQ(rec.rewriter_endpoint, "rw");
  EXPECT_EQ(gw.audit().requests(), 1u);
  EXPECT_EQ(select_primary_rewrite(rec)->text,
            "Plan a 3-day itinerary for Paris and Lyon in May, focusing on museums.");
}

TEST(PerformRewrite, RetriesOnceWithReminder) {
  auto ep = llm::mock_endpoint(
      {{llm::Purpose::kRewrite, "did not follow the OUTPUT TEMPLATE", kSomeMod},
       {llm::Purpose::kRewrite, "*", "Ruleta Casino is a casino."}},
      "rw");
  auto gw = quiet_gateway();
  auto rec = perform_rewrite(gw, *ep, default_rewrite_template(), casino_candidate(), {});
  EXPECT_EQ(rec.attempts, 2);
  EXPECT_EQ(gw.audit().requests(), 2u);
  EXPECT_EQ(rec.mod_level, ModLevel::kSomeMod);
}

TEST(PerformRewrite, SecondFailureCarriesRawOutput) {
  auto ep = llm::mock_endpoint({{llm::Purpose::kRewrite, "*", "first answer"},
                                {llm::Purpose::kRewrite, "*", "second answer"}},
                               "rw");
  auto gw = quiet_gateway();
  try {
    perform_rewrite(gw, *ep, default_rewrite_template(), casino_candidate(), {});
    FAIL();
  } catch (const RewriteParseError& e) {
    EXPECT_EQ(e.code(), ErrorCode::kParseNoModLevel);
    EXPECT_EQ(e.raw_output(), "second answer");
    EXPECT_EQ(e.attempts(), 2);
  }
}

TEST(PerformRewrite, GatewayErrorsPropagate) {
  llm::Fixture f;
  f.purpose = llm::Purpose::kRewrite;
  f.error = ErrorCode::kHttpError;
  auto ep = llm::mock_endpoint({f}, "rw");
  auto gw = quiet_gateway();
  try {
    perform_rewrite(gw, *ep, default_rewrite_template(), casino_candidate(), {});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kHttpError);
  }
}
