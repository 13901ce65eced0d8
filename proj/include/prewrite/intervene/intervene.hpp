#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "prewrite/common/jsonl.hpp"
#include "prewrite/convstore/conversation.hpp"
#include "prewrite/llmgateway/gateway.hpp"
#include "prewrite/rewrite/rewriter.hpp"
#include "prewrite/rewrite/template.hpp"

namespace prewrite::intervene {

// ---------------------------------------------------------------------------
// Simulation
// ---------------------------------------------------------------------------

struct SimulatedEnding {
  convstore::CandidateRef candidate_ref;
  std::string rewrite_text;
  std::string simulated_response;
  std::string chatbot_endpoint;
};

/// History as alternating user/assistant messages, then the rewrite as the
/// final user message. The original reply at the target turn is not included.
llm::ChatRequest build_simulation_request(const llm::EndpointConfig& chatbot,
                                          const convstore::CandidateTurn& candidate,
                                          const std::string& rewrite_text);

/// Throws Error(kMalformedResponse) if the chatbot returns an empty reply.
SimulatedEnding simulate_response(llm::Gateway& gateway, llm::Endpoint& chatbot,
                                  const convstore::CandidateTurn& candidate,
                                  const std::string& rewrite_text);

// ---------------------------------------------------------------------------
// Order randomization
// ---------------------------------------------------------------------------

enum class Side { kOriginal, kRewritten };

std::string_view to_string(Side s);

struct OrderAssignment {
  Side ending1 = Side::kOriginal;
  Side ending2 = Side::kRewritten;
  std::uint64_t rng_seed = 0;

  bool rewritten_second() const { return ending2 == Side::kRewritten; }
  OrderAssignment flipped() const { return {ending2, ending1, rng_seed}; }

  friend bool operator==(const OrderAssignment&, const OrderAssignment&) = default;
};

/// Deterministic in (seed, ref); a keyed hash, so flipping is unbiased across
/// refs for any seed.
OrderAssignment assign_order(std::uint64_t seed, const convstore::CandidateRef& ref);

// ---------------------------------------------------------------------------
// Judging
// ---------------------------------------------------------------------------

/// "User: ...\nAssistant: ..." block shown as one ending.
std::string render_ending(std::string_view user_text, std::string_view model_text);

struct JudgePrompt {
  llm::ChatRequest request;
  int dropped_turns = 0;
};

/// Fills {history}, {ending_1}, {ending_2}; purpose JUDGE. Oldest history
/// turns are dropped to fit when allowed, else Error(kHistoryTooLong).
JudgePrompt build_judge_prompt(const rewrite::PromptTemplate& tmpl,
                               const llm::EndpointConfig& judge,
                               std::span<const convstore::Turn> history, std::string_view ending_1,
                               std::string_view ending_2, const rewrite::PromptOptions& options);

/// Score in 1..5 from a free-text judge reply. A score is a lone digit 1-5;
/// digits inside words or numbers, decimals, ranges like "1-5", denominators
/// ("/5", "out of 5") and ending labels ("Ending 2") do not count. Non-strict
/// takes the last score; strict requires exactly one.
/// Throws Error(kParseNoScore) or Error(kParseAmbiguous).
int parse_likert(std::string_view text, bool strict);

enum class Outcome { kWin, kLoss, kTie };

std::string_view to_string(Outcome o);
std::optional<Outcome> parse_outcome(std::string_view s);

struct Preference {
  int rewrite_preference = 3;  // 5: rewrite much better
  Outcome wlt = Outcome::kTie;

  friend bool operator==(const Preference&, const Preference&) = default;
};

/// Maps a position-relative score onto the rewrite-centric scale.
Preference derandomize(int raw_likert, const OrderAssignment& assignment);

struct JudgeVerdict {
  int raw_likert = 3;
  OrderAssignment assignment;
  int rewrite_preference = 3;
  Outcome wlt = Outcome::kTie;
  std::string judge_endpoint;
  std::vector<std::string> raw_replies;  // one per judge call
  std::vector<int> raw_scores;
};

struct JudgeOptions {
  bool strict = true;
  int repeats = 1;  // >1: median raw score over repeated calls
  rewrite::PromptOptions prompt;
};

JudgeVerdict judge_pair(llm::Gateway& gateway, llm::Endpoint& judge,
                        const rewrite::PromptTemplate& tmpl,
                        const convstore::CandidateTurn& candidate, const SimulatedEnding& ending,
                        const OrderAssignment& assignment, const JudgeOptions& options);

// ---------------------------------------------------------------------------
// Persistence
// ---------------------------------------------------------------------------

struct InterventionRecord {
  convstore::CandidateRef candidate_ref;
  std::string rewriter_endpoint;
  SimulatedEnding ending;
  JudgeVerdict verdict;
  std::string simulated_at;
  std::string judged_at;
};

json to_json(const SimulatedEnding& e);
SimulatedEnding simulated_ending_from_json(const json& j);
json to_json(const InterventionRecord& r);
InterventionRecord intervention_from_json(const json& j);

}  // namespace prewrite::intervene
