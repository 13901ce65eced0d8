#pragma once

#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "prewrite/convstore/conversation.hpp"
#include "prewrite/llmgateway/gateway.hpp"

namespace prewrite::taxonomy {

/// Lowercase, trim, collapse internal whitespace, strip trailing punctuation.
std::string normalize_label(std::string_view raw);

struct AspectMapping {
  std::string canonical;
  std::set<std::string> members;  // normalized labels
  std::size_t support = 0;        // input labels (with multiplicity)

  friend bool operator==(const AspectMapping&, const AspectMapping&) = default;
};

struct Consolidation {
  std::vector<AspectMapping> mappings;  // by support descending, then canonical
  std::map<std::string, std::string> canonical_of;  // normalized label -> canonical
  int iterations = 0;
  bool converged = true;
  std::vector<std::string> conflicts;  // logged NON_PARTITION resolutions

  /// Canonical for a raw label; unseen labels map to their normalized form.
  std::string resolve(std::string_view raw) const;
};

struct ConsolidateOptions {
  std::size_t batch_size = 200;
  int max_iterations = 10;
};

/// Exact match after normalization.
Consolidation consolidate(std::span<const std::string> labels);

/// Iterative merge passes driven by `endpoint` (purpose TAXONOMY). Stops when
/// a pass proposes no merge or after max_iterations, leaving converged=false.
Consolidation consolidate(std::span<const std::string> labels, llm::Gateway& gateway,
                          llm::Endpoint& endpoint, const ConsolidateOptions& options = {});

/// Prompt for one merge pass over `batch` (one label per line).
std::string merge_prompt(std::span<const std::string> batch);

/// Reads "label -> canonical" lines; everything else is ignored.
std::vector<std::pair<std::string, std::string>> parse_merge_reply(std::string_view reply);

/// Two-column TSV (label, canonical), sorted by label.
std::string write_mapping_table(const Consolidation& c);
/// Throws Error(kSchemaViolation) on a line without exactly two columns.
std::map<std::string, std::string> read_mapping_table(std::string_view text);

struct AspectOccurrences {
  convstore::GroupKey group;
  std::vector<std::string> labels;  // raw labels of one record
};

using Ranked = std::vector<std::pair<std::string, std::size_t>>;

/// Canonical aspects ranked by count per group; ties lexicographic.
std::map<convstore::GroupKey, Ranked> aspect_frequencies(const Consolidation& c,
                                                         std::span<const AspectOccurrences> records);

struct IntentItem {
  std::vector<std::string> labels;
  std::optional<double> intent;  // average intent-preservation score
};

struct IntentCorrelation {
  std::map<std::string, double> mean_intent;  // canonical -> mean over annotated items
  Ranked low_intent;                          // ranked among items with intent <= threshold
};

/// Throws Error(kNoAnnotations) when no item carries an intent score.
IntentCorrelation aspect_intent_correlation(const Consolidation& c, std::span<const IntentItem> items,
                                            double low_threshold = 2.0);

}  // namespace prewrite::taxonomy
