#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>

#include "prewrite/convstore/conversation.hpp"
#include "prewrite/llmgateway/gateway.hpp"
#include "prewrite/rewrite/record.hpp"
#include "prewrite/rewrite/template.hpp"

namespace prewrite::rewrite {

inline constexpr std::string_view kEmptyContextMarker = "[No prior conversation]";

/// Plain-text role-tagged transcript ("User: ..." / "Assistant: ..." blocks),
/// or kEmptyContextMarker when there are no turns.
std::string render_history(std::span<const convstore::Turn> turns);

struct PromptOptions {
  std::size_t max_context = 128000;  // token-count hint from the endpoint
  bool allow_truncation = true;      // drop oldest turns until the prompt fits
};

struct BuiltPrompt {
  llm::ChatRequest request;
  int dropped_turns = 0;
};

/// Fills {query_context} and {target_query}. The target query is inserted
/// verbatim. Throws Error(kHistoryTooLong) when the prompt cannot fit.
BuiltPrompt build_rewrite_prompt(const PromptTemplate& tmpl, const convstore::CandidateTurn& candidate,
                                 const llm::EndpointConfig& endpoint, const PromptOptions& options);

/// Decodes rewriter text. Throws RewriteParseError with one of
/// kParseNoModLevel, kParseNoRewrite, kParseBadEnum or kParseInconsistent.
RewriteRecord parse_rewrite_output(std::string_view text);

/// Canonical output-template rendering; parse_rewrite_output inverts it.
std::string render_rewrite_output(const RewriteRecord& record);

/// build -> complete -> parse. A parse failure is retried once with a format
/// reminder appended; a second failure throws RewriteParseError carrying the
/// last raw reply. Gateway errors propagate unchanged.
RewriteRecord perform_rewrite(llm::Gateway& gateway, llm::Endpoint& endpoint,
                              const PromptTemplate& tmpl, const convstore::CandidateTurn& candidate,
                              const PromptOptions& options);

/// Top-ranked rewrite, or nullopt for NO MOD.
std::optional<Rewrite> select_primary_rewrite(const RewriteRecord& record);

}  // namespace prewrite::rewrite
