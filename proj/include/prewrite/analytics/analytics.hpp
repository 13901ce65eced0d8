#pragma once

#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "prewrite/common/jsonl.hpp"
#include "prewrite/convstore/conversation.hpp"
#include "prewrite/intervene/intervene.hpp"
#include "prewrite/rewrite/record.hpp"

namespace prewrite::analytics {

using intervene::Outcome;

/// One judged candidate with everything a grouping may key on.
struct Observation {
  convstore::CandidateRef ref;
  Outcome wlt = Outcome::kTie;
  convstore::GroupKey group;
  convstore::Depth depth = convstore::Depth::kShallow;
  std::string rewriter;
  std::string chatbot;
};

/// Percentage with one decimal, rounded half up from exact counts:
/// returns tenths of a percent.
int tenths_of_percent(std::size_t count, std::size_t n);
std::string format_tenths(int tenths);

struct WLTRow {
  std::vector<std::string> key;
  std::size_t wins = 0;
  std::size_t losses = 0;
  std::size_t ties = 0;

  std::size_t n() const { return wins + losses + ties; }
  double win_pct() const;
  double loss_pct() const;
  double tie_pct() const;

  json to_json(std::span<const std::string> key_names) const;
};

using KeyFn = std::function<std::vector<std::string>(const Observation&)>;

KeyFn by_domain_intent();
KeyFn by_domain();
KeyFn by_depth();
KeyFn by_models();  // (rewriter, chatbot)
KeyFn overall();

/// One row per observed key, by n descending then key ascending.
/// Throws Error(kEmptyGrouping) when there are no observations.
std::vector<WLTRow> aggregate_wlt(std::span<const Observation> obs, const KeyFn& key);

struct DepthSplit {
  std::string rewriter;
  std::string chatbot;
  std::optional<WLTRow> shallow;
  std::optional<WLTRow> deep;  // absent when the config has no deep conversations
};

std::vector<DepthSplit> depth_split(std::span<const Observation> obs);

/// Rows keyed by (rewriter, chatbot); coupled and decoupled configs side by side.
std::vector<WLTRow> cross_model_table(std::span<const Observation> obs);

// ---------------------------------------------------------------------------
// Agreement
// ---------------------------------------------------------------------------

/// items x raters; nullopt is a missing rating.
using RatingsMatrix = std::vector<std::vector<std::optional<int>>>;

enum class Metric { kNominal, kOrdinal, kInterval };

struct AlphaResult {
  std::optional<double> alpha;  // nullopt when degenerate
  bool degenerate = false;      // expected disagreement is zero
  double observed_disagreement = 0.0;
  double expected_disagreement = 0.0;
  std::size_t pairable_values = 0;
  std::size_t items_used = 0;
};

/// Coincidence-matrix alpha. Items with fewer than two ratings are ignored.
/// Throws Error(kInsufficientItems) with fewer than two raters or no item
/// rated at least twice.
AlphaResult krippendorff_alpha(const RatingsMatrix& m, Metric metric = Metric::kNominal);

/// < 3 -> LOSS, > 3 -> WIN, exactly 3 -> dropped.
std::optional<Outcome> coarsen_human_score(double avg);
std::vector<std::optional<Outcome>> coarsen_human_scores(std::span<const double> avgs);

struct IntentSummary {
  std::size_t n = 0;
  std::size_t strong = 0;    // avg >= 2.5
  std::size_t somewhat = 0;  // avg == 2
  std::size_t low = 0;       // avg < 2
  std::size_t other = 0;     // 2 < avg < 2.5, only reachable with 3+ annotators

  double pct_strong() const;
  double pct_somewhat() const;
  double pct_low() const;
  double pct_other() const;
};

/// Throws Error(kRange) for averages outside [1, 3].
IntentSummary intent_summary(std::span<const double> avgs);

// ---------------------------------------------------------------------------
// Assumptions vs outcome
// ---------------------------------------------------------------------------

struct AssumptionObservation {
  convstore::GroupKey group;
  Outcome wlt = Outcome::kTie;
  std::vector<rewrite::Assumption> assumptions;
};

struct OutcomeCounts {
  std::size_t wins = 0;
  std::size_t losses = 0;
  std::size_t ties = 0;

  friend bool operator==(const OutcomeCounts&, const OutcomeCounts&) = default;
};

struct AssumptionStats {
  std::vector<std::string> winning;
  std::vector<std::string> losing;
  std::size_t no_assumption = 0;
  std::map<rewrite::Level, OutcomeCounts> plausibility;
};

std::map<convstore::GroupKey, AssumptionStats> assumption_outcome_stats(
    std::span<const AssumptionObservation> obs);

// ---------------------------------------------------------------------------
// Output
// ---------------------------------------------------------------------------

/// Aligned text table: key columns, then W, L, T (one decimal) and n.
std::string format_wlt_table(std::string_view title, std::span<const std::string> key_names,
                             std::span<const WLTRow> rows);

/// Same rows as CSV with a header line.
std::string format_wlt_csv(std::span<const std::string> key_names, std::span<const WLTRow> rows);

/// Quotes a CSV field when needed.
std::string csv_field(std::string_view s);

}  // namespace prewrite::analytics
