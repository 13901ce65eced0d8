#include <mutex>
#include <numeric>

#include "prewrite/annotsvc/annotsvc.hpp"
#include "prewrite/common/error.hpp"

namespace prewrite::annotsvc {

json Rating::to_json() const {
  return {{"task_id", task_id},
          {"annotator_id", annotator_id},
          {"score", score ? json(*score) : json(nullptr)},
          {"no_assumptions", no_assumptions},
          {"ts", ts}};
}

Rating Rating::from_json(const json& j) {
  try {
    Rating r;
    r.task_id = j.at("task_id").get<std::string>();
    r.annotator_id = j.at("annotator_id").get<std::string>();
    if (!j.at("score").is_null()) r.score = j.at("score").get<int>();
    r.no_assumptions = j.value("no_assumptions", false);
    r.ts = j.value("ts", "");
    return r;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kSchemaViolation, std::string("rating: ") + e.what());
  }
}

RatingStore::RatingStore(std::vector<AnnotationTask> tasks, Clock clock,
                         std::optional<std::filesystem::path> ratings_file)
    : tasks_(std::move(tasks)), clock_(std::move(clock)), file_(std::move(ratings_file)) {
  for (std::size_t i = 0; i < tasks_.size(); ++i) {
    if (!index_.emplace(tasks_[i].task_id, i).second) {
      throw Error(ErrorCode::kDuplicateId, "duplicate task id " + tasks_[i].task_id);
    }
  }
  if (file_ && std::filesystem::exists(*file_)) load(*file_);
}

void RatingStore::load(const std::filesystem::path& ratings_file) {
  std::unique_lock lock(mu_);
  for (const auto& j : read_jsonl(ratings_file)) apply(Rating::from_json(j));
}

void RatingStore::apply(Rating r) {
  trail_.push_back(r);
  auto key = std::make_pair(r.task_id, r.annotator_id);
  current_[std::move(key)] = std::move(r);
}

Rating RatingStore::record(const std::string& task_id, const std::string& annotator_id,
                           std::optional<int> score, bool no_assumptions) {
  const auto* task = find(task_id);
  if (!task) throw Error(ErrorCode::kUnknownTask, "unknown task " + task_id);
  if (std::find(task->annotators.begin(), task->annotators.end(), annotator_id) == task->annotators.end()) {
    throw Error(ErrorCode::kNotAssigned, "task " + task_id + " is not assigned to " + annotator_id);
  }
  if (no_assumptions) {
    if (task->kind != TaskKind::kPlausibility3) {
      throw Error(ErrorCode::kInvalidRequest, "no_assumptions only applies to plausibility tasks");
    }
    if (score) throw Error(ErrorCode::kInvalidRequest, "no_assumptions rating must not carry a score");
  } else {
    const int hi = scale_max(task->kind);
    if (!score || *score < 1 || *score > hi) {
      throw Error(ErrorCode::kRange, "score for " + task_id + " must be an integer in [1, " +
                                         std::to_string(hi) + "]");
    }
  }

  Rating r{task_id, annotator_id, score, no_assumptions, ""};
  std::unique_lock lock(mu_);
  r.ts = clock_();
  if (file_) append_jsonl(*file_, r.to_json());
  apply(r);
  return r;
}

const AnnotationTask* RatingStore::find(std::string_view task_id) const {
  auto it = index_.find(task_id);
  return it == index_.end() ? nullptr : &tasks_[it->second];
}

std::optional<AnnotationTask> RatingStore::next_task(std::string_view annotator_id) const {
  std::shared_lock lock(mu_);
  const std::string who(annotator_id);
  for (const auto& t : tasks_) {
    if (std::find(t.annotators.begin(), t.annotators.end(), who) == t.annotators.end()) continue;
    if (!current_.count({t.task_id, who})) return t;
  }
  return std::nullopt;
}

std::vector<Rating> RatingStore::ratings() const {
  std::shared_lock lock(mu_);
  std::vector<Rating> out;
  for (const auto& [key, r] : current_) out.push_back(r);
  return out;
}

std::vector<Rating> RatingStore::audit_trail() const {
  std::shared_lock lock(mu_);
  return trail_;
}

json RatingStore::progress() const {
  std::shared_lock lock(mu_);
  std::map<std::string, std::pair<std::size_t, std::size_t>> per;
  std::size_t assignments = 0, completed = 0;
  for (const auto& t : tasks_) {
    for (const auto& a : t.annotators) {
      ++assignments;
      ++per[a].first;
      if (current_.count({t.task_id, a})) {
        ++completed;
        ++per[a].second;
      }
    }
  }
  json annotators = json::object();
  for (const auto& [a, c] : per) annotators[a] = {{"assigned", c.first}, {"completed", c.second}};
  return {{"tasks", tasks_.size()},
          {"assignments", assignments},
          {"completed", completed},
          {"annotators", std::move(annotators)}};
}

double pair_average(std::span<const int> scores) {
  if (scores.size() < 2) {
    throw Error(ErrorCode::kUnderAnnotated,
                "need at least 2 ratings, got " + std::to_string(scores.size()));
  }
  return static_cast<double>(std::accumulate(scores.begin(), scores.end(), 0)) /
         static_cast<double>(scores.size());
}

std::map<std::string, double> task_averages(std::span<const Rating> ratings, bool skip_under_annotated) {
  std::map<std::string, std::vector<int>> scores;
  for (const auto& r : ratings) {
    auto& s = scores[r.task_id];
    if (r.score) s.push_back(*r.score);
  }
  std::map<std::string, double> out;
  for (const auto& [task, s] : scores) {
    if (s.size() < 2 && skip_under_annotated) continue;
    try {
      out[task] = pair_average(s);
    } catch (const Error& e) {
      throw Error(e.code(), "task " + task + ": " + e.what());
    }
  }
  return out;
}

}  // namespace prewrite::annotsvc
