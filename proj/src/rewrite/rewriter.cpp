#include "prewrite/rewrite/rewriter.hpp"

#include <algorithm>

namespace prewrite::rewrite {

std::string render_history(std::span<const convstore::Turn> turns) {
  if (turns.empty()) return std::string(kEmptyContextMarker);
  std::string out;
  for (const auto& t : turns) {
    if (!out.empty()) out += "\n\n";
    out += "User: " + t.user_text + "\nAssistant: " + t.model_text;
  }
  return out;
}

BuiltPrompt build_rewrite_prompt(const PromptTemplate& tmpl, const convstore::CandidateTurn& candidate,
                                 const llm::EndpointConfig& endpoint, const PromptOptions& options) {
  const std::size_t budget = std::min(options.max_context, endpoint.max_context);
  const std::size_t reserve = static_cast<std::size_t>(std::max(0, endpoint.max_tokens.value_or(0)));
  std::span<const convstore::Turn> history(candidate.history);

  int dropped = 0;
  for (;;) {
    auto body = tmpl.render(
        {{"query_context", render_history(history)}, {"target_query", candidate.target.user_text}});
    if (llm::estimate_tokens(body) + reserve <= budget) {
      BuiltPrompt built;
      built.request = llm::Gateway::make_request(endpoint, llm::Purpose::kRewrite,
                                                 {{llm::Role::kUser, std::move(body)}});
      built.dropped_turns = dropped;
      return built;
    }
    if (!options.allow_truncation || history.empty()) {
      throw Error(ErrorCode::kHistoryTooLong,
                  "rewrite prompt for " + candidate.ref().key() + " exceeds " +
                      std::to_string(budget) + " tokens" +
                      (dropped ? " after dropping " + std::to_string(dropped) + " turns" : ""));
    }
    history = history.subspan(1);
    ++dropped;
  }
}

RewriteRecord perform_rewrite(llm::Gateway& gateway, llm::Endpoint& endpoint,
                              const PromptTemplate& tmpl, const convstore::CandidateTurn& candidate,
                              const PromptOptions& options) {
  auto built = build_rewrite_prompt(tmpl, candidate, endpoint.config(), options);
  auto finish = [&](RewriteRecord rec, int attempts) {
    rec.candidate_ref = candidate.ref();
    rec.rewriter_endpoint = endpoint.name();
    rec.attempts = attempts;
    rec.dropped_history_turns = built.dropped_turns;
    return rec;
  };

  auto first = gateway.complete(endpoint, built.request);
  try {
    return finish(parse_rewrite_output(first.text), 1);
  } catch (const RewriteParseError&) {
  }

  auto retry = built.request;
  retry.messages.back().content += format_reminder();
  auto second = gateway.complete(endpoint, retry);
  try {
    return finish(parse_rewrite_output(second.text), 2);
  } catch (const RewriteParseError& e) {
    throw RewriteParseError(e.code(), e.what(), e.raw_output(), 2);
  }
}

std::optional<Rewrite> select_primary_rewrite(const RewriteRecord& record) {
  if (record.mod_level == ModLevel::kNoMod || record.rewrites.empty()) return std::nullopt;
  return record.rewrites.front();
}

}  // namespace prewrite::rewrite
