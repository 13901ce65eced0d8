#pragma once

#include <cstddef>
#include <istream>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "prewrite/common/jsonl.hpp"

namespace prewrite::convstore {

enum class SatLabel { kSat, kDsat, kNone };

std::string_view to_string(SatLabel label);
std::optional<SatLabel> parse_sat_label(std::string_view s);

/// One (user, model) exchange. `index` is the 1-based user-turn ordinal.
struct Turn {
  int index = 0;
  std::string user_text;
  std::string model_text;
  SatLabel sat = SatLabel::kNone;
  json extra = json::object();  // unknown per-turn fields, kept for round-trip

  friend bool operator==(const Turn&, const Turn&) = default;
};

struct Conversation {
  std::string conv_id;
  std::vector<Turn> turns;
  std::string domain;
  std::string intent;
  std::string language;
  json extra = json::object();  // unknown top-level fields, kept for round-trip

  /// n: the number of user turns.
  std::size_t user_turns() const { return turns.size(); }

  friend bool operator==(const Conversation&, const Conversation&) = default;
};

struct GroupKey {
  std::string domain;
  std::string intent;

  auto operator<=>(const GroupKey&) const = default;
};

inline GroupKey group_of(const Conversation& c) { return {c.domain, c.intent}; }

// ---------------------------------------------------------------------------
// Log format
// ---------------------------------------------------------------------------

struct LogIssue {
  std::size_t line_no = 0;
  std::string code;  // ErrorCode name
  std::string message;
  std::string conv_id;  // when recoverable from the line
};

struct ParseReport {
  std::vector<Conversation> conversations;
  std::vector<LogIssue> issues;
};

/// Decodes one record. Throws Error(kSchemaViolation) on any contract breach.
Conversation conversation_from_json(const json& j);
json conversation_to_json(const Conversation& c);

/// Line-delimited ingestion. Malformed lines and later duplicates of an
/// already-seen conv_id are reported, never silently dropped. Blank lines are
/// not records and are skipped. Throws Error(kIoFailure) if the stream fails.
ParseReport parse_log(std::istream& in);
ParseReport parse_log_file(const std::string& path);

void serialize_log(std::ostream& out, std::span<const Conversation> conversations);

// ---------------------------------------------------------------------------
// Ingestion filter
// ---------------------------------------------------------------------------

struct IngestFilter {
  bool enabled = true;
  std::string language = "English";  // case-insensitive; empty accepts all
  bool drop_toxic = true;            // reads the optional "toxic" boolean field
  std::size_t min_turns = 3;
  bool require_dsat = true;
};

struct FilterReport {
  std::vector<Conversation> kept;
  std::map<std::string, std::size_t> dropped;  // reason -> count
};

FilterReport apply_filter(std::vector<Conversation> conversations, const IngestFilter& filter);

// ---------------------------------------------------------------------------
// Candidate selection
// ---------------------------------------------------------------------------

struct CandidateRef {
  std::string conv_id;
  int target_index = 0;

  auto operator<=>(const CandidateRef&) const = default;
  std::string key() const { return conv_id + "#" + std::to_string(target_index); }
};

/// The user turn preceding a dissatisfied one. `history` holds the
/// target_index - 1 full turns before the target; `target` is the original
/// exchange being rewritten (user prompt plus the reply that dissatisfied).
struct CandidateTurn {
  std::string conv_id;
  int dsat_index = 0;
  int target_index = 0;
  std::vector<Turn> history;
  Turn target;

  CandidateRef ref() const { return {conv_id, target_index}; }
};

/// One candidate per DSAT turn at d >= 2, targeting d - 1; candidates sharing
/// a target are emitted once. Output is ordered by target_index.
std::vector<CandidateTurn> select_candidates(const Conversation& conv);

/// Splits a conversation around a candidate: history, target, and the turns
/// after the target. Concatenating the three yields `conv.turns` exactly.
struct Slice {
  std::vector<Turn> history;
  Turn target;
  std::vector<Turn> tail;
};
Slice slice(const Conversation& conv, const CandidateTurn& candidate);

/// Mean target ordinal per (domain, intent) group; empty groups are omitted.
std::map<GroupKey, double> rewrite_index(
    std::span<const std::pair<GroupKey, int>> group_targets);

enum class Depth { kShallow, kDeep };

inline constexpr std::size_t kDeepThreshold = 5;

std::string_view to_string(Depth d);
Depth depth_bucket(const Conversation& conv);

/// Immutable, id-indexed view over a parsed dataset.
class Dataset {
 public:
  Dataset() = default;
  explicit Dataset(std::vector<Conversation> conversations);

  const std::vector<Conversation>& conversations() const { return conversations_; }
  const Conversation* find(std::string_view conv_id) const;
  const Conversation& at(std::string_view conv_id) const;

 private:
  std::vector<Conversation> conversations_;
  std::unordered_map<std::string, std::size_t> index_;
};

}  // namespace prewrite::convstore
