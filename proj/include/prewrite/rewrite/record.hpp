#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "prewrite/common/error.hpp"
#include "prewrite/common/jsonl.hpp"
#include "prewrite/convstore/conversation.hpp"

namespace prewrite::rewrite {

enum class ModLevel { kNoMod, kSomeMod, kHeavyMod };
enum class Polarity { kImprovementNeeded, kAlreadyEffective };
enum class Level { kHigh, kMid, kLow };

std::string_view to_string(ModLevel m);  // "NO MOD" / "SOME MOD" / "HEAVY MOD"
std::string_view to_string(Polarity p);
std::string_view to_string(Level l);
std::optional<ModLevel> parse_mod_level(std::string_view s);
/// Case- and whitespace-tolerant HIGH/MID/LOW; anything else is nullopt.
std::optional<Level> parse_level(std::string_view s);

struct Aspect {
  std::string raw_label;
  std::string explanation;
  Polarity polarity = Polarity::kImprovementNeeded;

  friend bool operator==(const Aspect&, const Aspect&) = default;
};

struct Assumption {
  std::string text;
  Level salience = Level::kMid;
  Level plausibility = Level::kMid;

  friend bool operator==(const Assumption&, const Assumption&) = default;
};

struct Rewrite {
  std::string text;
  bool information_added = false;
  std::vector<Assumption> assumptions;

  friend bool operator==(const Rewrite&, const Rewrite&) = default;
};

/// Parsed rewriter output plus provenance. Rewrites are ordered most likely
/// first.
struct RewriteRecord {
  convstore::CandidateRef candidate_ref;
  ModLevel mod_level = ModLevel::kNoMod;
  std::vector<Aspect> aspects;
  std::vector<Rewrite> rewrites;
  std::string raw_output;
  std::string rewriter_endpoint;
  int attempts = 0;
  int dropped_history_turns = 0;

  /// Content equality (mod level, aspects, rewrites), ignoring provenance.
  bool same_content(const RewriteRecord& other) const;
};

json to_json(const RewriteRecord& r);
RewriteRecord rewrite_record_from_json(const json& j);

/// Raised when the rewriter's reply cannot be decoded. Keeps the raw reply.
class RewriteParseError : public Error {
 public:
  RewriteParseError(ErrorCode code, const std::string& message, std::string raw_output,
                    int attempts = 1)
      : Error(code, message), raw_output_(std::move(raw_output)), attempts_(attempts) {}

  const std::string& raw_output() const { return raw_output_; }
  int attempts() const { return attempts_; }

 private:
  std::string raw_output_;
  int attempts_;
};

}  // namespace prewrite::rewrite
