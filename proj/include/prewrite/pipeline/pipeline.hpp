#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "prewrite/analytics/analytics.hpp"
#include "prewrite/annotsvc/annotsvc.hpp"
#include "prewrite/common/jsonl.hpp"
#include "prewrite/convstore/conversation.hpp"
#include "prewrite/intervene/intervene.hpp"
#include "prewrite/llmgateway/gateway.hpp"
#include "prewrite/rewrite/rewriter.hpp"
#include "prewrite/taxonomy/taxonomy.hpp"

namespace prewrite::pipeline {

struct EndpointSpec {
  std::string type = "mock";  // mock | http
  llm::EndpointConfig config;
  std::vector<llm::Fixture> fixtures;  // mock only
};

struct AnnotationConfig {
  std::size_t n = 100;
  std::size_t annotators_per_item = 2;
  std::vector<std::string> annotators;
  std::optional<std::uint64_t> seed;  // defaults to the run seed
  std::string host = "127.0.0.1";
  int port = 8080;
  std::optional<std::filesystem::path> static_dir;
};

struct TaxonomyConfig {
  std::optional<std::string> endpoint;  // none: exact-match consolidation
  taxonomy::ConsolidateOptions options;
};

/// Declarative run configuration, read from one JSON file. Relative paths
/// resolve against the config file's directory.
struct Config {
  std::filesystem::path base_dir = ".";
  std::string run_id;
  std::filesystem::path runs_dir = "runs";
  std::filesystem::path dataset;
  std::uint64_t seed = 0;
  convstore::IngestFilter filter;
  std::map<std::string, EndpointSpec> endpoints;
  std::string rewriter;
  std::string chatbot;
  std::string judge;
  std::map<std::string, std::filesystem::path> templates;  // rewrite | judge overrides
  rewrite::PromptOptions prompt;
  bool judge_strict = true;
  int judge_repeats = 1;
  llm::RetryPolicy retry;
  int concurrency = 1;
  bool logical_clock = false;
  AnnotationConfig annotation;
  TaxonomyConfig taxonomy;

  /// Throws Error(kConfig) on missing or inconsistent fields.
  static Config from_json(const json& j, const std::filesystem::path& base_dir);
  static Config load(const std::filesystem::path& path);

  std::filesystem::path resolve(const std::filesystem::path& p) const;
  std::filesystem::path run_dir() const;
};

enum class Stage { kIngest, kSelect, kRewrite, kSimulate, kJudge, kReport };

std::string_view to_string(Stage s);
std::optional<Stage> parse_stage(std::string_view s);

struct Manifest {
  std::string run_id;
  std::string dataset_path;
  std::string dataset_sha256;
  std::string rewriter_endpoint;
  std::string chatbot_endpoint;
  std::string judge_endpoint;
  std::map<std::string, std::string> template_hashes;  // template id -> body sha256
  std::uint64_t seed = 0;
  std::map<std::string, bool> stages;
  std::map<std::string, std::size_t> counts;
  std::string created_at;

  bool done(Stage s) const;
  json to_json() const;
  static Manifest from_json(const json& j);
};

enum class Grouping { kDomainIntent, kDomain, kDepth, kModels, kOverall };

/// domain-intent | domain | depth | models | overall
std::optional<Grouping> parse_grouping(std::string_view s);

struct Attrition {
  std::size_t candidates = 0;
  std::size_t judged = 0;
  std::size_t no_mod = 0;
  std::size_t errored = 0;
  std::size_t pending = 0;  // not yet processed; zero once judging completes
};

struct HumanValidation {
  std::size_t pairwise_items = 0;  // items with >= 2 pairwise ratings
  std::size_t dropped_ties = 0;    // human average exactly 3
  analytics::AlphaResult judge_alpha;
  bool alpha_available = false;
  std::optional<analytics::IntentSummary> intent;
  std::size_t plausibility_items = 0;
  std::size_t assumptions_identified = 0;
  std::size_t very_plausible = 0;  // average plausibility >= 2.5
};

struct ReportInput {
  std::string run_id;
  std::vector<std::string> model_pairs;  // "rewriter / chatbot" per contributing run
  std::string judge_endpoint;
  std::vector<analytics::Observation> observations;
  std::vector<analytics::AssumptionObservation> assumptions;
  Attrition attrition;
  std::optional<HumanValidation> human;
};

struct ReportFiles {
  std::string text;
  std::string jsonl;
  std::string csv;  // the primary grouping only
};

ReportFiles build_report(const ReportInput& in, Grouping primary);
/// Only the table for `g`, as printed by `report --group`.
std::string grouped_table(const ReportInput& in, Grouping g);

/// Human validation figures from annotation tasks, ratings and machine verdicts.
HumanValidation human_validation(std::span<const annotsvc::AnnotationTask> tasks,
                                 std::span<const annotsvc::Rating> ratings,
                                 std::span<const intervene::InterventionRecord> verdicts);

struct StageSummary {
  Stage stage = Stage::kIngest;
  bool skipped = false;  // already complete
  std::size_t processed = 0;
  std::size_t errors = 0;
  std::string message;
};

using EndpointMap = std::map<std::string, std::shared_ptr<llm::Endpoint>>;

/// One run directory: runs/<run_id>/. Stage outputs are append-only JSONL;
/// manifest.json records stage completion, so a rerun skips finished stages
/// and resumes unfinished ones from the first unprocessed candidate.
class Run {
 public:
  /// `overrides` replaces configured endpoints by name (tests, live wiring).
  explicit Run(Config config, EndpointMap overrides = {});

  StageSummary ingest();
  StageSummary select();
  StageSummary rewrite();
  StageSummary simulate();
  StageSummary judge();
  StageSummary report(Grouping primary = Grouping::kDomainIntent,
                      std::span<const std::filesystem::path> extra_runs = {});
  /// ingest -> select -> rewrite -> simulate -> judge -> report.
  std::vector<StageSummary> run_all();

  /// Creates annotation tasks once (annotation/tasks.jsonl) and returns them.
  std::vector<annotsvc::AnnotationTask> prepare_annotation();
  /// Exact-match or endpoint-driven aspect consolidation plus frequency tables.
  StageSummary consolidate_aspects();

  const Manifest& manifest() const { return manifest_; }
  const Config& config() const { return config_; }
  std::filesystem::path dir() const { return dir_; }
  std::filesystem::path file(std::string_view name) const { return dir_ / std::string(name); }
  ReportInput report_input(std::span<const std::filesystem::path> extra_runs = {}) const;
  Attrition attrition() const;
  llm::Gateway& gateway() { return *gateway_; }

 private:
  void require(Stage needed, std::string_view by) const;
  void mark_done(Stage s);
  void save_manifest() const;
  llm::Endpoint& endpoint(const std::string& name);
  convstore::Dataset load_conversations() const;
  std::vector<convstore::CandidateTurn> load_candidates(const convstore::Dataset& ds) const;
  void record_error(Stage s, const convstore::CandidateRef& ref, const Error& e,
                    const std::string& raw_output = {});
  std::map<std::string, std::vector<json>> errors_by_stage() const;

  Config config_;
  std::filesystem::path dir_;
  Manifest manifest_;
  Clock clock_;
  std::shared_ptr<llm::AuditLog> audit_;
  std::unique_ptr<llm::Gateway> gateway_;
  EndpointMap endpoints_;
  rewrite::PromptTemplate rewrite_template_;
  rewrite::PromptTemplate judge_template_;
};

}  // namespace prewrite::pipeline
