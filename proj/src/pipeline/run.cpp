#include <set>
#include <thread>

#include "prewrite/common/error.hpp"
#include "prewrite/common/hash.hpp"
#include "prewrite/pipeline/pipeline.hpp"

namespace prewrite::pipeline {

namespace fs = std::filesystem;

namespace {

constexpr const char* kManifest = "manifest.json";
constexpr const char* kConversations = "conversations.jsonl";
constexpr const char* kIngestIssues = "ingest_issues.jsonl";
constexpr const char* kCandidates = "candidates.jsonl";
constexpr const char* kRewrites = "rewrites.jsonl";
constexpr const char* kSimulations = "simulations.jsonl";
constexpr const char* kInterventions = "interventions.jsonl";
constexpr const char* kErrors = "errors.jsonl";
constexpr const char* kAudit = "audit.jsonl";
constexpr const char* kTasks = "annotation/tasks.jsonl";
constexpr const char* kRatings = "annotation/ratings.jsonl";

StageSummary summary(Stage stage) {
  StageSummary s;
  s.stage = stage;
  return s;
}

json tagged(json j, const std::string& run_id) {
  j["run_id"] = run_id;
  return j;
}

std::string key_of(const json& j) {
  return convstore::CandidateRef{j.at("conv_id").get<std::string>(), j.at("target_index").get<int>()}.key();
}

std::set<std::string> keys_in(const fs::path& file) {
  std::set<std::string> out;
  for (const auto& j : read_jsonl(file)) out.insert(key_of(j));
  return out;
}

convstore::Dataset read_conversations(const fs::path& file) {
  std::vector<convstore::Conversation> convs;
  for (auto j : read_jsonl(file)) {
    j.erase("run_id");
    convs.push_back(convstore::conversation_from_json(j));
  }
  return convstore::Dataset(std::move(convs));
}

struct ItemResult {
  json record;
  std::optional<Error> error;
  std::string raw_output;
  std::exception_ptr fatal;
};

/// Runs `work` over items, at most `concurrency` at a time, and commits the
/// results in input order. Candidate-level failures become ItemResult errors;
/// anything else stops the stage after committing every earlier item.
template <typename Item, typename Work, typename Commit>
void process(const std::vector<Item>& items, int concurrency, Work work, Commit commit) {
  auto run_one = [&](const Item& item) {
    ItemResult r;
    try {
      r.record = work(item);
    } catch (const rewrite::RewriteParseError& e) {
      r.error = Error(e.code(), e.what());
      r.raw_output = e.raw_output();
    } catch (const Error& e) {
      if (is_candidate_level(e.code())) {
        r.error = e;
      } else {
        r.fatal = std::current_exception();
      }
    } catch (...) {
      r.fatal = std::current_exception();
    }
    return r;
  };

  const std::size_t chunk = static_cast<std::size_t>(std::max(1, concurrency));
  for (std::size_t start = 0; start < items.size(); start += chunk) {
    const std::size_t end = std::min(items.size(), start + chunk);
    std::vector<ItemResult> results(end - start);
    if (end - start == 1) {
      results[0] = run_one(items[start]);
    } else {
      std::vector<std::thread> workers;
      for (std::size_t i = start; i < end; ++i) {
        workers.emplace_back([&, i] { results[i - start] = run_one(items[i]); });
      }
      for (auto& w : workers) w.join();
    }
    for (std::size_t i = start; i < end; ++i) {
      auto& r = results[i - start];
      if (r.fatal) std::rethrow_exception(r.fatal);
      commit(items[i], r);
    }
  }
}

}  // namespace

Run::Run(Config config, EndpointMap overrides) : config_(std::move(config)) {
  dir_ = config_.run_dir();
  clock_ = config_.logical_clock ? logical_clock() : system_clock();

  rewrite_template_ = config_.templates.count("rewrite")
                          ? rewrite::PromptTemplate::load(config_.resolve(config_.templates.at("rewrite")))
                          : rewrite::default_rewrite_template();
  judge_template_ = config_.templates.count("judge")
                        ? rewrite::PromptTemplate::load(config_.resolve(config_.templates.at("judge")))
                        : rewrite::default_judge_template();

  bool any_live = false;
  for (const auto& [name, spec] : config_.endpoints) {
    if (auto it = overrides.find(name); it != overrides.end()) {
      endpoints_[name] = it->second;
    } else if (spec.type == "http") {
      endpoints_[name] = std::make_shared<llm::HttpEndpoint>(spec.config);
      any_live = true;
    } else {
      endpoints_[name] = std::make_shared<llm::MockEndpoint>(spec.config, spec.fixtures);
    }
  }

  Manifest fresh;
  fresh.run_id = config_.run_id;
  fresh.dataset_path = config_.dataset.generic_string();
  fresh.dataset_sha256 = sha256_file(config_.resolve(config_.dataset).string());
  fresh.rewriter_endpoint = config_.rewriter;
  fresh.chatbot_endpoint = config_.chatbot;
  fresh.judge_endpoint = config_.judge;
  fresh.template_hashes = {{rewrite_template_.id(), rewrite_template_.version_hash()},
                           {judge_template_.id(), judge_template_.version_hash()}};
  fresh.seed = config_.seed;
  for (auto s : {Stage::kIngest, Stage::kSelect, Stage::kRewrite, Stage::kSimulate, Stage::kJudge,
                 Stage::kReport}) {
    fresh.stages[std::string(to_string(s))] = false;
  }

  if (fs::exists(file(kManifest))) {
    manifest_ = Manifest::from_json(json::parse(read_text_file(file(kManifest))));
    auto mismatch = [&](const char* what, const std::string& was, const std::string& now) {
      if (was != now) {
        throw Error(ErrorCode::kConfig, "run " + manifest_.run_id + " was started with " + what + " '" + was +
                                            "'; config now says '" + now + "'");
      }
    };
    mismatch("dataset hash", manifest_.dataset_sha256, fresh.dataset_sha256);
    mismatch("rewriter", manifest_.rewriter_endpoint, fresh.rewriter_endpoint);
    mismatch("chatbot", manifest_.chatbot_endpoint, fresh.chatbot_endpoint);
    mismatch("judge", manifest_.judge_endpoint, fresh.judge_endpoint);
    mismatch("seed", std::to_string(manifest_.seed), std::to_string(fresh.seed));
    mismatch("templates", json(manifest_.template_hashes).dump(), json(fresh.template_hashes).dump());
  } else {
    fs::create_directories(dir_);
    manifest_ = std::move(fresh);
    manifest_.created_at = clock_();
    save_manifest();
  }

  audit_ = std::make_shared<llm::AuditLog>(clock_, file(kAudit), json{{"run_id", manifest_.run_id}});
  llm::Sleeper sleeper = any_live ? llm::real_sleeper() : llm::Sleeper([](std::chrono::milliseconds) {});
  gateway_ = std::make_unique<llm::Gateway>(config_.retry, audit_, sleeper, config_.seed);
}

void Run::save_manifest() const { write_text_file(file(kManifest), manifest_.to_json().dump(2) + "\n"); }

void Run::mark_done(Stage s) {
  manifest_.stages[std::string(to_string(s))] = true;
  save_manifest();
}

void Run::require(Stage needed, std::string_view by) const {
  if (!manifest_.done(needed)) {
    throw Error(ErrorCode::kStageOrder, std::string(by) + " needs the '" + std::string(to_string(needed)) +
                                            "' stage to complete first (run " + manifest_.run_id + ")");
  }
}

llm::Endpoint& Run::endpoint(const std::string& name) {
  auto it = endpoints_.find(name);
  if (it == endpoints_.end()) throw Error(ErrorCode::kConfig, "endpoint '" + name + "' is not defined");
  return *it->second;
}

convstore::Dataset Run::load_conversations() const { return read_conversations(file(kConversations)); }

std::vector<convstore::CandidateTurn> Run::load_candidates(const convstore::Dataset& ds) const {
  std::vector<convstore::CandidateTurn> out;
  std::map<std::string, std::vector<convstore::CandidateTurn>> cache;
  for (const auto& j : read_jsonl(file(kCandidates))) {
    const auto conv_id = j.at("conv_id").get<std::string>();
    const int target = j.at("target_index").get<int>();
    auto [it, fresh] = cache.try_emplace(conv_id);
    if (fresh) it->second = convstore::select_candidates(ds.at(conv_id));
    auto c = std::find_if(it->second.begin(), it->second.end(),
                          [&](const convstore::CandidateTurn& x) { return x.target_index == target; });
    if (c == it->second.end()) {
      throw Error(ErrorCode::kSchemaViolation, "candidate " + conv_id + "#" + std::to_string(target) +
                                                   " does not match its conversation");
    }
    out.push_back(*c);
  }
  return out;
}

void Run::record_error(Stage s, const convstore::CandidateRef& ref, const Error& e, const std::string& raw_output) {
  json j = {{"stage", to_string(s)},
            {"conv_id", ref.conv_id},
            {"target_index", ref.target_index},
            {"code", to_string(e.code())},
            {"message", e.what()}};
  if (!raw_output.empty()) j["raw_output"] = raw_output;
  append_jsonl(file(kErrors), tagged(j, manifest_.run_id));
}

std::map<std::string, std::vector<json>> Run::errors_by_stage() const {
  std::map<std::string, std::vector<json>> out;
  for (const auto& j : read_jsonl(file(kErrors))) out[j.at("stage").get<std::string>()].push_back(j);
  return out;
}

// ---------------------------------------------------------------------------

StageSummary Run::ingest() {
  auto s = summary(Stage::kIngest);
  if (manifest_.done(Stage::kIngest)) {
    s.skipped = true;
    return s;
  }
  auto parsed = convstore::parse_log_file(config_.resolve(config_.dataset).string());
  const auto parsed_count = parsed.conversations.size();
  auto filtered = convstore::apply_filter(std::move(parsed.conversations), config_.filter);

  std::vector<json> convs, issues;
  for (const auto& c : filtered.kept) convs.push_back(tagged(convstore::conversation_to_json(c), manifest_.run_id));
  for (const auto& i : parsed.issues) {
    issues.push_back(tagged({{"kind", "parse"}, {"line", i.line_no}, {"code", i.code}, {"message", i.message},
                             {"conv_id", i.conv_id}},
                            manifest_.run_id));
  }
  std::size_t dropped = 0;
  for (const auto& [reason, n] : filtered.dropped) {
    issues.push_back(tagged({{"kind", "filter"}, {"reason", reason}, {"count", n}}, manifest_.run_id));
    dropped += n;
  }
  write_jsonl(file(kConversations), convs);
  write_jsonl(file(kIngestIssues), issues);

  manifest_.counts["parsed"] = parsed_count;
  manifest_.counts["ingest_issues"] = parsed.issues.size();
  manifest_.counts["filtered_out"] = dropped;
  manifest_.counts["conversations"] = convs.size();
  mark_done(Stage::kIngest);
  s.processed = convs.size();
  s.errors = parsed.issues.size();
  s.message = std::to_string(convs.size()) + " conversations kept, " + std::to_string(dropped) + " filtered, " +
              std::to_string(parsed.issues.size()) + " malformed";
  return s;
}

StageSummary Run::select() {
  require(Stage::kIngest, "select");
  auto s = summary(Stage::kSelect);
  if (manifest_.done(Stage::kSelect)) {
    s.skipped = true;
    return s;
  }
  const auto ds = load_conversations();
  std::vector<json> out;
  for (const auto& conv : ds.conversations()) {
    for (const auto& c : convstore::select_candidates(conv)) {
      out.push_back(tagged({{"conv_id", c.conv_id}, {"dsat_index", c.dsat_index}, {"target_index", c.target_index}},
                           manifest_.run_id));
    }
  }
  write_jsonl(file(kCandidates), out);
  manifest_.counts["candidates"] = out.size();
  mark_done(Stage::kSelect);
  s.processed = out.size();
  s.message = std::to_string(out.size()) + " candidates";
  return s;
}

StageSummary Run::rewrite() {
  require(Stage::kSelect, "rewrite");
  auto s = summary(Stage::kRewrite);
  if (manifest_.done(Stage::kRewrite)) {
    s.skipped = true;
    return s;
  }
  const auto ds = load_conversations();
  auto done = keys_in(file(kRewrites));
  for (const auto& e : errors_by_stage()["rewrite"]) done.insert(key_of(e));
  std::vector<convstore::CandidateTurn> pending;
  for (auto& c : load_candidates(ds)) {
    if (!done.count(c.ref().key())) pending.push_back(std::move(c));
  }

  auto& ep = endpoint(config_.rewriter);
  process(
      pending, config_.concurrency,
      [&](const convstore::CandidateTurn& c) {
        return rewrite::to_json(rewrite::perform_rewrite(*gateway_, ep, rewrite_template_, c, config_.prompt));
      },
      [&](const convstore::CandidateTurn& c, const ItemResult& r) {
        ++s.processed;
        if (r.error) {
          ++s.errors;
          record_error(Stage::kRewrite, c.ref(), *r.error, r.raw_output);
        } else {
          append_jsonl(file(kRewrites), tagged(r.record, manifest_.run_id));
        }
      });

  std::size_t no_mod = 0, total = 0;
  for (const auto& j : read_jsonl(file(kRewrites))) {
    ++total;
    no_mod += j.at("mod_level").get<std::string>() == rewrite::to_string(rewrite::ModLevel::kNoMod);
  }
  manifest_.counts["rewrites"] = total;
  manifest_.counts["no_mod"] = no_mod;
  manifest_.counts["rewrite_errors"] = errors_by_stage()["rewrite"].size();
  mark_done(Stage::kRewrite);
  s.message = std::to_string(total) + " rewritten (" + std::to_string(no_mod) + " NO MOD), " +
              std::to_string(manifest_.counts["rewrite_errors"]) + " errors";
  return s;
}

StageSummary Run::simulate() {
  require(Stage::kRewrite, "simulate");
  auto s = summary(Stage::kSimulate);
  if (manifest_.done(Stage::kSimulate)) {
    s.skipped = true;
    return s;
  }
  const auto ds = load_conversations();
  std::map<std::string, convstore::CandidateTurn> by_key;
  for (auto& c : load_candidates(ds)) by_key.emplace(c.ref().key(), std::move(c));

  auto done = keys_in(file(kSimulations));
  for (const auto& e : errors_by_stage()["simulate"]) done.insert(key_of(e));
  std::vector<std::pair<convstore::CandidateTurn, std::string>> pending;
  for (const auto& j : read_jsonl(file(kRewrites))) {
    const auto record = rewrite::rewrite_record_from_json(j);
    const auto primary = rewrite::select_primary_rewrite(record);
    if (!primary || done.count(record.candidate_ref.key())) continue;
    pending.emplace_back(by_key.at(record.candidate_ref.key()), primary->text);
  }

  auto& ep = endpoint(config_.chatbot);
  process(
      pending, config_.concurrency,
      [&](const std::pair<convstore::CandidateTurn, std::string>& p) {
        auto j = intervene::to_json(intervene::simulate_response(*gateway_, ep, p.first, p.second));
        j["simulated_at"] = clock_();
        return j;
      },
      [&](const std::pair<convstore::CandidateTurn, std::string>& p, const ItemResult& r) {
        ++s.processed;
        if (r.error) {
          ++s.errors;
          record_error(Stage::kSimulate, p.first.ref(), *r.error);
        } else {
          append_jsonl(file(kSimulations), tagged(r.record, manifest_.run_id));
        }
      });

  manifest_.counts["simulated"] = read_jsonl(file(kSimulations)).size();
  manifest_.counts["simulate_errors"] = errors_by_stage()["simulate"].size();
  mark_done(Stage::kSimulate);
  s.message = std::to_string(manifest_.counts["simulated"]) + " simulated, " +
              std::to_string(manifest_.counts["simulate_errors"]) + " errors";
  return s;
}

StageSummary Run::judge() {
  require(Stage::kSimulate, "judge");
  auto s = summary(Stage::kJudge);
  if (manifest_.done(Stage::kJudge)) {
    s.skipped = true;
    return s;
  }
  const auto ds = load_conversations();
  std::map<std::string, convstore::CandidateTurn> by_key;
  for (auto& c : load_candidates(ds)) by_key.emplace(c.ref().key(), std::move(c));

  auto done = keys_in(file(kInterventions));
  for (const auto& e : errors_by_stage()["judge"]) done.insert(key_of(e));
  std::vector<std::pair<intervene::SimulatedEnding, std::string>> pending;
  for (const auto& j : read_jsonl(file(kSimulations))) {
    auto ending = intervene::simulated_ending_from_json(j);
    if (done.count(ending.candidate_ref.key())) continue;
    pending.emplace_back(std::move(ending), j.value("simulated_at", std::string()));
  }

  auto& ep = endpoint(config_.judge);
  intervene::JudgeOptions opts;
  opts.strict = config_.judge_strict;
  opts.repeats = config_.judge_repeats;
  opts.prompt = config_.prompt;
  process(
      pending, config_.concurrency,
      [&](const std::pair<intervene::SimulatedEnding, std::string>& p) {
        const auto& ending = p.first;
        const auto& cand = by_key.at(ending.candidate_ref.key());
        const auto order = intervene::assign_order(manifest_.seed, ending.candidate_ref);
        intervene::InterventionRecord rec;
        rec.candidate_ref = ending.candidate_ref;
        rec.rewriter_endpoint = manifest_.rewriter_endpoint;
        rec.ending = ending;
        rec.verdict = intervene::judge_pair(*gateway_, ep, judge_template_, cand, ending, order, opts);
        rec.simulated_at = p.second;
        rec.judged_at = clock_();
        return intervene::to_json(rec);
      },
      [&](const std::pair<intervene::SimulatedEnding, std::string>& p, const ItemResult& r) {
        ++s.processed;
        if (r.error) {
          ++s.errors;
          record_error(Stage::kJudge, p.first.candidate_ref, *r.error);
        } else {
          append_jsonl(file(kInterventions), tagged(r.record, manifest_.run_id));
        }
      });

  const auto a = attrition();
  manifest_.counts["judged"] = a.judged;
  manifest_.counts["judge_errors"] = errors_by_stage()["judge"].size();
  manifest_.counts["errored"] = a.errored;
  mark_done(Stage::kJudge);
  s.message = std::to_string(a.judged) + " judged, " + std::to_string(manifest_.counts["judge_errors"]) + " errors";
  return s;
}

Attrition Run::attrition() const {
  Attrition a;
  a.candidates = read_jsonl(file(kCandidates)).size();
  a.judged = read_jsonl(file(kInterventions)).size();
  for (const auto& j : read_jsonl(file(kRewrites))) {
    a.no_mod += j.at("mod_level").get<std::string>() == rewrite::to_string(rewrite::ModLevel::kNoMod);
  }
  std::set<std::string> errored;
  for (const auto& j : read_jsonl(file(kErrors))) errored.insert(key_of(j));
  a.errored = errored.size();
  const auto accounted = a.judged + a.no_mod + a.errored;
  a.pending = a.candidates > accounted ? a.candidates - accounted : 0;
  return a;
}

namespace {

struct RunData {
  Manifest manifest;
  std::vector<analytics::Observation> observations;
  std::vector<analytics::AssumptionObservation> assumptions;
  std::vector<intervene::InterventionRecord> verdicts;
};

RunData collect(const fs::path& dir) {
  RunData d;
  const auto manifest_path = dir / kManifest;
  if (!fs::exists(manifest_path)) throw Error(ErrorCode::kIoFailure, "no run at " + dir.string());
  d.manifest = Manifest::from_json(json::parse(read_text_file(manifest_path)));
  if (!d.manifest.done(Stage::kJudge)) {
    throw Error(ErrorCode::kStageOrder,
                "report needs the 'judge' stage to complete first (run " + d.manifest.run_id + ")");
  }
  const auto ds = read_conversations(dir / kConversations);
  std::map<std::string, rewrite::RewriteRecord> rewrites;
  for (const auto& j : read_jsonl(dir / kRewrites)) {
    auto r = rewrite::rewrite_record_from_json(j);
    rewrites.emplace(r.candidate_ref.key(), std::move(r));
  }
  for (const auto& j : read_jsonl(dir / kInterventions)) {
    auto rec = intervene::intervention_from_json(j);
    const auto& conv = ds.at(rec.candidate_ref.conv_id);
    analytics::Observation o;
    o.ref = rec.candidate_ref;
    o.wlt = rec.verdict.wlt;
    o.group = convstore::group_of(conv);
    o.depth = convstore::depth_bucket(conv);
    o.rewriter = d.manifest.rewriter_endpoint;
    o.chatbot = d.manifest.chatbot_endpoint;
    d.observations.push_back(o);

    analytics::AssumptionObservation a{o.group, o.wlt, {}};
    if (auto it = rewrites.find(rec.candidate_ref.key()); it != rewrites.end()) {
      if (auto primary = rewrite::select_primary_rewrite(it->second)) a.assumptions = primary->assumptions;
    }
    d.assumptions.push_back(std::move(a));
    d.verdicts.push_back(std::move(rec));
  }
  return d;
}

std::vector<annotsvc::AnnotationTask> read_tasks(const fs::path& file) {
  std::vector<annotsvc::AnnotationTask> out;
  for (const auto& j : read_jsonl(file)) out.push_back(annotsvc::AnnotationTask::from_json(j));
  return out;
}

}  // namespace

ReportInput Run::report_input(std::span<const fs::path> extra_runs) const {
  auto own = collect(dir_);
  ReportInput in;
  in.run_id = manifest_.run_id;
  in.judge_endpoint = manifest_.judge_endpoint;
  in.attrition = attrition();
  auto add = [&](RunData& d) {
    in.model_pairs.push_back(d.manifest.rewriter_endpoint + " / " + d.manifest.chatbot_endpoint);
    std::move(d.observations.begin(), d.observations.end(), std::back_inserter(in.observations));
    std::move(d.assumptions.begin(), d.assumptions.end(), std::back_inserter(in.assumptions));
  };
  const auto verdicts = own.verdicts;
  add(own);
  for (const auto& extra : extra_runs) {
    auto d = collect(extra);
    add(d);
  }

  if (fs::exists(file(kTasks)) && fs::exists(file(kRatings))) {
    auto tasks = read_tasks(file(kTasks));
    annotsvc::RatingStore store(tasks, clock_, file(kRatings));
    const auto ratings = store.ratings();
    in.human = human_validation(tasks, ratings, verdicts);
  }
  return in;
}

StageSummary Run::report(Grouping primary, std::span<const fs::path> extra_runs) {
  require(Stage::kJudge, "report");
  auto s = summary(Stage::kReport);
  const auto in = report_input(extra_runs);
  const auto files = build_report(in, primary);
  write_text_file(file("report.txt"), files.text);
  write_text_file(file("report.jsonl"), files.jsonl);
  write_text_file(file("report.csv"), files.csv);
  if (!manifest_.done(Stage::kReport)) mark_done(Stage::kReport);
  s.processed = in.observations.size();
  s.message = files.text;
  return s;
}

std::vector<StageSummary> Run::run_all() {
  return {ingest(), select(), rewrite(), simulate(), judge(), report()};
}

std::vector<annotsvc::AnnotationTask> Run::prepare_annotation() {
  require(Stage::kJudge, "annotate-serve");
  if (fs::exists(file(kTasks))) return read_tasks(file(kTasks));

  const auto& ac = config_.annotation;
  if (ac.annotators.empty()) throw Error(ErrorCode::kConfig, "config: annotation.annotators is empty");
  const auto data = collect(dir_);
  const auto ds = load_conversations();
  std::map<std::string, convstore::CandidateTurn> by_key;
  for (auto& c : load_candidates(ds)) by_key.emplace(c.ref().key(), std::move(c));

  std::vector<annotsvc::SourceItem> items;
  for (std::size_t i = 0; i < data.verdicts.size(); ++i) {
    const auto& v = data.verdicts[i];
    const auto& cand = by_key.at(v.candidate_ref.key());
    annotsvc::SourceItem item;
    item.ref = v.candidate_ref;
    item.history = cand.history;
    item.original_user = cand.target.user_text;
    item.original_model = cand.target.model_text;
    item.rewrite_text = v.ending.rewrite_text;
    item.simulated_response = v.ending.simulated_response;
    item.assumptions = data.assumptions[i].assumptions;
    item.machine_order = v.verdict.assignment;
    items.push_back(std::move(item));
  }
  annotsvc::BatchOptions opts;
  opts.n = ac.n;
  opts.annotators_per_item = ac.annotators_per_item;
  opts.annotators = ac.annotators;
  opts.seed = ac.seed.value_or(manifest_.seed);
  auto tasks = annotsvc::create_batch(items, opts);

  std::vector<json> lines;
  for (const auto& t : tasks) lines.push_back(tagged(t.to_json(), manifest_.run_id));
  fs::create_directories(file("annotation"));
  write_jsonl(file(kTasks), lines);
  return tasks;
}

StageSummary Run::consolidate_aspects() {
  require(Stage::kRewrite, "consolidate-aspects");
  auto s = summary(Stage::kRewrite);
  const auto ds = load_conversations();

  std::vector<std::string> labels;
  std::vector<taxonomy::AspectOccurrences> occurrences;
  std::map<std::string, std::vector<std::string>> labels_by_key;
  for (const auto& j : read_jsonl(file(kRewrites))) {
    const auto r = rewrite::rewrite_record_from_json(j);
    if (r.mod_level == rewrite::ModLevel::kNoMod) continue;
    taxonomy::AspectOccurrences occ{convstore::group_of(ds.at(r.candidate_ref.conv_id)), {}};
    for (const auto& a : r.aspects) {
      if (a.polarity != rewrite::Polarity::kImprovementNeeded) continue;
      labels.push_back(a.raw_label);
      occ.labels.push_back(a.raw_label);
    }
    labels_by_key[r.candidate_ref.key()] = occ.labels;
    occurrences.push_back(std::move(occ));
  }

  const auto c = config_.taxonomy.endpoint
                     ? taxonomy::consolidate(labels, *gateway_, endpoint(*config_.taxonomy.endpoint),
                                             config_.taxonomy.options)
                     : taxonomy::consolidate(labels);
  write_text_file(file("aspects_mapping.tsv"), taxonomy::write_mapping_table(c));

  std::string freq = "domain,intent,rank,aspect,count\n";
  for (const auto& [group, ranked] : taxonomy::aspect_frequencies(c, occurrences)) {
    for (std::size_t i = 0; i < ranked.size(); ++i) {
      freq += analytics::csv_field(group.domain) + "," + analytics::csv_field(group.intent) + "," +
              std::to_string(i + 1) + "," + analytics::csv_field(ranked[i].first) + "," +
              std::to_string(ranked[i].second) + "\n";
    }
  }
  write_text_file(file("aspect_frequencies.csv"), freq);

  json summary = {{"labels", labels.size()},
                  {"canonical", c.mappings.size()},
                  {"iterations", c.iterations},
                  {"converged", c.converged},
                  {"conflicts", c.conflicts}};
  write_text_file(file("aspect_consolidation.json"), summary.dump(2) + "\n");

  if (fs::exists(file(kTasks)) && fs::exists(file(kRatings))) {
    auto tasks = read_tasks(file(kTasks));
    annotsvc::RatingStore store(tasks, clock_, file(kRatings));
    const auto ratings = store.ratings();
    const auto averages = annotsvc::task_averages(ratings, true);
    std::vector<taxonomy::IntentItem> items;
    for (const auto& t : tasks) {
      if (t.kind != annotsvc::TaskKind::kIntent3) continue;
      auto avg = averages.find(t.task_id);
      if (avg == averages.end()) continue;
      items.push_back({labels_by_key[t.item.ref.key()], avg->second});
    }
    if (!items.empty()) {
      const auto corr = taxonomy::aspect_intent_correlation(c, items);
      std::string out = "aspect,mean_intent,low_intent_count\n";
      std::map<std::string, std::size_t> low(corr.low_intent.begin(), corr.low_intent.end());
      for (const auto& [aspect, mean] : corr.mean_intent) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.2f", mean);
        out += analytics::csv_field(aspect) + "," + buf + "," + std::to_string(low[aspect]) + "\n";
      }
      write_text_file(file("aspect_intent.csv"), out);
    }
  }

  s.processed = labels.size();
  s.message = std::to_string(labels.size()) + " aspect labels -> " + std::to_string(c.mappings.size()) +
              " canonical aspects in " + std::to_string(c.iterations) + " pass(es)" +
              (c.converged ? "" : " (iteration cap reached)");
  return s;
}

}  // namespace prewrite::pipeline
