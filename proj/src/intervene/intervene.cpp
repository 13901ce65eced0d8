#include "prewrite/intervene/intervene.hpp"

#include <algorithm>
#include <cctype>

#include "prewrite/common/hash.hpp"
#include "prewrite/common/text.hpp"

namespace prewrite::intervene {

llm::ChatRequest build_simulation_request(const llm::EndpointConfig& chatbot,
                                          const convstore::CandidateTurn& candidate,
                                          const std::string& rewrite_text) {
  std::vector<llm::Message> messages;
  for (const auto& t : candidate.history) {
    messages.push_back({llm::Role::kUser, t.user_text});
    messages.push_back({llm::Role::kAssistant, t.model_text});
  }
  messages.push_back({llm::Role::kUser, rewrite_text});
  return llm::Gateway::make_request(chatbot, llm::Purpose::kSimulate, std::move(messages));
}

SimulatedEnding simulate_response(llm::Gateway& gateway, llm::Endpoint& chatbot,
                                  const convstore::CandidateTurn& candidate,
                                  const std::string& rewrite_text) {
  auto resp = gateway.complete(chatbot, build_simulation_request(chatbot.config(), candidate,
                                                                 rewrite_text));
  if (text::trim(resp.text).empty()) {
    throw Error(ErrorCode::kMalformedResponse,
                "chatbot returned an empty reply for " + candidate.ref().key());
  }
  return {candidate.ref(), rewrite_text, std::move(resp.text), chatbot.name()};
}

std::string_view to_string(Side s) { return s == Side::kOriginal ? "ORIGINAL" : "REWRITTEN"; }

OrderAssignment assign_order(std::uint64_t seed, const convstore::CandidateRef& ref) {
  const auto h = mix64(fnv1a64(std::to_string(seed) + ":" + ref.key()));
  OrderAssignment a;
  a.rng_seed = seed;
  if (h >> 63) {
    a.ending1 = Side::kRewritten;
    a.ending2 = Side::kOriginal;
  }
  return a;
}

std::string render_ending(std::string_view user_text, std::string_view model_text) {
  return "User: " + std::string(user_text) + "\nAssistant: " + std::string(model_text);
}

JudgePrompt build_judge_prompt(const rewrite::PromptTemplate& tmpl,
                               const llm::EndpointConfig& judge,
                               std::span<const convstore::Turn> history, std::string_view ending_1,
                               std::string_view ending_2, const rewrite::PromptOptions& options) {
  const std::size_t budget = std::min(options.max_context, judge.max_context);
  const std::size_t reserve = static_cast<std::size_t>(std::max(0, judge.max_tokens.value_or(0)));
  int dropped = 0;
  for (;;) {
    auto body = tmpl.render({{"history", rewrite::render_history(history)},
                             {"ending_1", std::string(ending_1)},
                             {"ending_2", std::string(ending_2)}});
    if (llm::estimate_tokens(body) + reserve <= budget) {
      return {llm::Gateway::make_request(judge, llm::Purpose::kJudge,
                                         {{llm::Role::kUser, std::move(body)}}),
              dropped};
    }
    if (!options.allow_truncation || history.empty()) {
      throw Error(ErrorCode::kHistoryTooLong,
                  "judge prompt exceeds " + std::to_string(budget) + " tokens");
    }
    history = history.subspan(1);
    ++dropped;
  }
}

namespace {

bool is_alnum(char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0; }
bool is_digit(char c) { return std::isdigit(static_cast<unsigned char>(c)) != 0; }

// Lowercased word immediately before position i, skipping spaces and ':'.
std::string word_before(std::string_view s, std::size_t i) {
  std::size_t end = i;
  while (end > 0 && (s[end - 1] == ' ' || s[end - 1] == ':' || s[end - 1] == '#')) --end;
  std::size_t begin = end;
  while (begin > 0 && std::isalpha(static_cast<unsigned char>(s[begin - 1]))) --begin;
  return text::to_lower(s.substr(begin, end - begin));
}

bool is_score_at(std::string_view s, std::size_t i) {
  const char c = s[i];
  if (c < '1' || c > '5') return false;
  const char prev = i > 0 ? s[i - 1] : ' ';
  const char next = i + 1 < s.size() ? s[i + 1] : ' ';
  if (is_alnum(prev) || is_alnum(next)) return false;
  if (prev == '-' || next == '-' || prev == '/') return false;
  if (static_cast<unsigned char>(prev) >= 0x80 || static_cast<unsigned char>(next) >= 0x80) {
    return false;  // en dash ranges and the like
  }
  if (prev == '.' && i >= 2 && is_digit(s[i - 2])) return false;
  if ((next == '.' || next == ',') && i + 2 < s.size() && is_digit(s[i + 2])) return false;
  const auto w = word_before(s, i);
  if (w == "ending" || w == "response") return false;
  if (w == "of") {
    std::size_t j = i;
    while (j > 0 && s[j - 1] == ' ') --j;
    if (j >= 2) {
      auto before = word_before(s, j - 2);
      if (before == "out") return false;
    }
  }
  return true;
}

}  // namespace

int parse_likert(std::string_view text, bool strict) {
  std::vector<int> found;
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (is_score_at(text, i)) found.push_back(text[i] - '0');
  }
  if (found.empty()) throw Error(ErrorCode::kParseNoScore, "no 1-5 score in judge reply");
  if (strict && found.size() > 1) {
    throw Error(ErrorCode::kParseAmbiguous,
                std::to_string(found.size()) + " candidate scores in judge reply");
  }
  return found.back();
}

std::string_view to_string(Outcome o) {
  switch (o) {
    case Outcome::kWin: return "WIN";
    case Outcome::kLoss: return "LOSS";
    case Outcome::kTie: return "TIE";
  }
  return "TIE";
}

std::optional<Outcome> parse_outcome(std::string_view s) {
  for (auto o : {Outcome::kWin, Outcome::kLoss, Outcome::kTie}) {
    if (to_string(o) == s) return o;
  }
  return std::nullopt;
}

Preference derandomize(int raw_likert, const OrderAssignment& assignment) {
  if (raw_likert < 1 || raw_likert > 5) {
    throw Error(ErrorCode::kRange, "Likert score out of range: " + std::to_string(raw_likert));
  }
  Preference p;
  p.rewrite_preference = assignment.rewritten_second() ? raw_likert : 6 - raw_likert;
  p.wlt = p.rewrite_preference >= 4   ? Outcome::kWin
          : p.rewrite_preference <= 2 ? Outcome::kLoss
                                      : Outcome::kTie;
  return p;
}

JudgeVerdict judge_pair(llm::Gateway& gateway, llm::Endpoint& judge,
                        const rewrite::PromptTemplate& tmpl,
                        const convstore::CandidateTurn& candidate, const SimulatedEnding& ending,
                        const OrderAssignment& assignment, const JudgeOptions& options) {
  const auto original = render_ending(candidate.target.user_text, candidate.target.model_text);
  const auto rewritten = render_ending(ending.rewrite_text, ending.simulated_response);
  const bool second = assignment.rewritten_second();
  auto prompt = build_judge_prompt(tmpl, judge.config(), candidate.history,
                                   second ? original : rewritten, second ? rewritten : original,
                                   options.prompt);

  JudgeVerdict v;
  v.assignment = assignment;
  v.judge_endpoint = judge.name();
  for (int i = 0; i < std::max(1, options.repeats); ++i) {
    auto resp = gateway.complete(judge, prompt.request);
    v.raw_scores.push_back(parse_likert(resp.text, options.strict));
    v.raw_replies.push_back(std::move(resp.text));
  }
  auto sorted = v.raw_scores;
  std::sort(sorted.begin(), sorted.end());
  v.raw_likert = sorted[(sorted.size() - 1) / 2];
  const auto p = derandomize(v.raw_likert, assignment);
  v.rewrite_preference = p.rewrite_preference;
  v.wlt = p.wlt;
  return v;
}

json to_json(const SimulatedEnding& e) {
  return {{"conv_id", e.candidate_ref.conv_id},
          {"target_index", e.candidate_ref.target_index},
          {"rewrite_text", e.rewrite_text},
          {"simulated_response", e.simulated_response},
          {"chatbot_endpoint", e.chatbot_endpoint}};
}

SimulatedEnding simulated_ending_from_json(const json& j) {
  SimulatedEnding e;
  e.candidate_ref.conv_id = j.at("conv_id").get<std::string>();
  e.candidate_ref.target_index = j.at("target_index").get<int>();
  e.rewrite_text = j.at("rewrite_text").get<std::string>();
  e.simulated_response = j.at("simulated_response").get<std::string>();
  e.chatbot_endpoint = j.value("chatbot_endpoint", std::string());
  return e;
}

json to_json(const InterventionRecord& r) {
  const auto& v = r.verdict;
  return {{"conv_id", r.candidate_ref.conv_id},
          {"target_index", r.candidate_ref.target_index},
          {"rewriter_endpoint", r.rewriter_endpoint},
          {"ending", to_json(r.ending)},
          {"verdict",
           {{"raw_likert", v.raw_likert},
            {"ending1", std::string(to_string(v.assignment.ending1))},
            {"ending2", std::string(to_string(v.assignment.ending2))},
            {"rng_seed", v.assignment.rng_seed},
            {"rewrite_preference", v.rewrite_preference},
            {"wlt", std::string(to_string(v.wlt))},
            {"judge_endpoint", v.judge_endpoint},
            {"raw_replies", v.raw_replies},
            {"raw_scores", v.raw_scores}}},
          {"simulated_at", r.simulated_at},
          {"judged_at", r.judged_at}};
}

InterventionRecord intervention_from_json(const json& j) {
  InterventionRecord r;
  r.candidate_ref.conv_id = j.at("conv_id").get<std::string>();
  r.candidate_ref.target_index = j.at("target_index").get<int>();
  r.rewriter_endpoint = j.value("rewriter_endpoint", std::string());
  r.ending = simulated_ending_from_json(j.at("ending"));
  const auto& vj = j.at("verdict");
  auto& v = r.verdict;
  v.raw_likert = vj.at("raw_likert").get<int>();
  const bool rewritten_first = vj.at("ending1").get<std::string>() == "REWRITTEN";
  v.assignment.ending1 = rewritten_first ? Side::kRewritten : Side::kOriginal;
  v.assignment.ending2 = rewritten_first ? Side::kOriginal : Side::kRewritten;
  v.assignment.rng_seed = vj.value("rng_seed", std::uint64_t{0});
  v.rewrite_preference = vj.at("rewrite_preference").get<int>();
  auto wlt = parse_outcome(vj.at("wlt").get<std::string>());
  if (!wlt) throw Error(ErrorCode::kSchemaViolation, "bad wlt in intervention record");
  v.wlt = *wlt;
  v.judge_endpoint = vj.value("judge_endpoint", std::string());
  v.raw_replies = vj.value("raw_replies", std::vector<std::string>{});
  v.raw_scores = vj.value("raw_scores", std::vector<int>{});
  r.simulated_at = j.value("simulated_at", std::string());
  r.judged_at = j.value("judged_at", std::string());
  return r;
}

}  // namespace prewrite::intervene
