#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <shared_mutex>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "prewrite/common/jsonl.hpp"
#include "prewrite/convstore/conversation.hpp"
#include "prewrite/intervene/intervene.hpp"
#include "prewrite/rewrite/record.hpp"

namespace prewrite::annotsvc {

enum class TaskKind { kPairwise5, kIntent3, kPlausibility3 };

std::string_view to_string(TaskKind k);  // PAIRWISE_5PT, INTENT_3PT, PLAUSIBILITY_3PT
std::optional<TaskKind> parse_task_kind(std::string_view s);
int scale_max(TaskKind k);

/// One judged candidate eligible for human annotation.
struct SourceItem {
  convstore::CandidateRef ref;
  std::vector<convstore::Turn> history;
  std::string original_user;
  std::string original_model;
  std::string rewrite_text;
  std::string simulated_response;
  std::vector<rewrite::Assumption> assumptions;
  std::optional<intervene::OrderAssignment> machine_order;
};

struct AnnotationTask {
  std::string task_id;
  TaskKind kind = TaskKind::kPairwise5;
  SourceItem item;
  intervene::OrderAssignment order;  // presentation order; fixed original-first when revealed
  std::vector<std::string> annotators;

  /// What an annotator sees. PAIRWISE payloads carry no provenance.
  json payload() const;
  /// Full internal record, provenance included.
  json to_json() const;
  static AnnotationTask from_json(const json& j);
};

struct BatchOptions {
  std::size_t n = 0;                    // items to sample
  std::size_t annotators_per_item = 2;  // k
  std::vector<std::string> annotators;
  std::uint64_t seed = 0;
  std::vector<TaskKind> kinds = {TaskKind::kPairwise5, TaskKind::kIntent3,
                                 TaskKind::kPlausibility3};
};

/// Samples n items with the seed and creates one task per (item, kind). Item i
/// goes to annotators (i*k + j) mod A for j < k, so loads differ by at most
/// one. Pairwise order is drawn independently of the machine judge's order.
/// Throws Error(kInsufficientItems) if fewer than n items exist and
/// Error(kConfig) if k exceeds the annotator count.
std::vector<AnnotationTask> create_batch(std::span<const SourceItem> items,
                                         const BatchOptions& options);

/// Scale wording for a task kind: the "N indicates ..." lines of its template.
std::vector<std::string> scale_labels(TaskKind k);

struct Rating {
  std::string task_id;
  std::string annotator_id;
  std::optional<int> score;     // empty only with no_assumptions
  bool no_assumptions = false;  // PLAUSIBILITY: the rewrite made no assumptions
  std::string ts;

  json to_json() const;
  static Rating from_json(const json& j);
};

/// Tasks plus submitted ratings. Every submission is kept in the audit trail
/// (and appended to the ratings file when one is set); the latest submission
/// per (task, annotator) is the effective rating.
class RatingStore {
 public:
  RatingStore(std::vector<AnnotationTask> tasks, Clock clock = system_clock(),
              std::optional<std::filesystem::path> ratings_file = {});

  /// Replays a ratings file written by an earlier session.
  void load(const std::filesystem::path& ratings_file);

  /// Throws Error(kUnknownTask), Error(kNotAssigned) or Error(kRange).
  Rating record(const std::string& task_id, const std::string& annotator_id,
                std::optional<int> score, bool no_assumptions = false);

  const AnnotationTask* find(std::string_view task_id) const;
  /// First assigned task this annotator has not rated yet.
  std::optional<AnnotationTask> next_task(std::string_view annotator_id) const;

  std::vector<Rating> ratings() const;      // effective ratings
  std::vector<Rating> audit_trail() const;  // every submission, in order
  json progress() const;
  const std::vector<AnnotationTask>& tasks() const { return tasks_; }

 private:
  void apply(Rating r);

  std::vector<AnnotationTask> tasks_;
  std::map<std::string, std::size_t, std::less<>> index_;
  Clock clock_;
  std::optional<std::filesystem::path> file_;
  mutable std::shared_mutex mu_;
  std::map<std::pair<std::string, std::string>, Rating> current_;
  std::vector<Rating> trail_;
};

/// Arithmetic mean. Throws Error(kUnderAnnotated) with fewer than two scores.
double pair_average(std::span<const int> scores);

/// Per-task mean of the effective numeric ratings. Tasks with fewer than two
/// scores raise Error(kUnderAnnotated) unless skip_under_annotated is set.
std::map<std::string, double> task_averages(std::span<const Rating> ratings,
                                            bool skip_under_annotated = false);

/// Local JSON API over a RatingStore plus optional static files for the UI.
class Server {
 public:
  explicit Server(RatingStore& store, std::optional<std::filesystem::path> static_dir = {});
  ~Server();

  /// Binds; port 0 picks a free port. Returns the bound port, or -1.
  int bind(const std::string& host, int port);
  /// Serves until stop(). Call after bind().
  bool listen();
  /// Blocks until listen() is accepting connections.
  void wait_until_ready() const;
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace prewrite::annotsvc
