#include "prewrite/common/error.hpp"
#include "prewrite/pipeline/pipeline.hpp"

namespace prewrite::pipeline {

namespace {

[[noreturn]] void bad(const std::string& what) { throw Error(ErrorCode::kConfig, "config: " + what); }

template <typename T>
T get_or(const json& j, const char* key, T fallback) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return fallback;
  try {
    return it->get<T>();
  } catch (const json::exception&) {
    bad(std::string("field '") + key + "' has the wrong type");
  }
}

std::string required_string(const json& j, const char* key, const std::string& where) {
  auto it = j.find(key);
  if (it == j.end() || !it->is_string() || it->get<std::string>().empty()) {
    bad(where + " needs a non-empty string '" + key + "'");
  }
  return it->get<std::string>();
}

EndpointSpec endpoint_from_json(const std::string& name, const json& j, const std::filesystem::path& base) {
  if (!j.is_object()) bad("endpoint '" + name + "' must be an object");
  EndpointSpec spec;
  spec.type = get_or<std::string>(j, "type", "mock");
  auto& c = spec.config;
  c.name = name;
  c.base_url = get_or<std::string>(j, "base_url", "");
  c.model = get_or<std::string>(j, "model", name);
  c.auth_env_var = get_or<std::string>(j, "auth_env_var", "");
  c.max_context = get_or<std::size_t>(j, "max_context", c.max_context);
  if (j.contains("max_tokens") && !j["max_tokens"].is_null()) c.max_tokens = get_or<int>(j, "max_tokens", 0);
  c.timeout_ms = get_or<int>(j, "timeout_ms", c.timeout_ms);
  c.concurrency_limit = get_or<int>(j, "concurrency_limit", c.concurrency_limit);
  c.supports_seed = get_or<bool>(j, "supports_seed", false);
  if (auto t = j.find("temperatures"); t != j.end()) {
    if (!t->is_object()) bad("endpoint '" + name + "' temperatures must be an object");
    for (const auto& [purpose, value] : t->items()) {
      auto p = llm::parse_purpose(purpose);
      if (!p || !value.is_number()) bad("endpoint '" + name + "' has a bad temperature entry '" + purpose + "'");
      c.role_default_temperature[*p] = value.get<double>();
    }
  }
  llm::validate(c);

  if (spec.type == "mock") {
    json fixtures = json::array();
    if (j.contains("fixtures_file")) {
      fixtures = json::parse(read_text_file(base / j["fixtures_file"].get<std::string>()));
    } else if (j.contains("fixtures")) {
      fixtures = j["fixtures"];
    }
    spec.fixtures = llm::fixtures_from_json(fixtures);
  } else if (spec.type == "http") {
    if (c.base_url.empty()) bad("http endpoint '" + name + "' needs base_url");
  } else {
    bad("endpoint '" + name + "' has unknown type '" + spec.type + "'");
  }
  return spec;
}

}  // namespace

Config Config::from_json(const json& j, const std::filesystem::path& base_dir) {
  if (!j.is_object()) bad("top level must be an object");
  Config c;
  c.base_dir = base_dir;
  c.run_id = get_or<std::string>(j, "run_id", "");
  c.runs_dir = get_or<std::string>(j, "runs_dir", "runs");
  c.dataset = required_string(j, "dataset", "config");
  c.seed = get_or<std::uint64_t>(j, "seed", 0);

  if (auto f = j.find("filter"); f != j.end()) {
    c.filter.enabled = get_or<bool>(*f, "enabled", c.filter.enabled);
    c.filter.language = get_or<std::string>(*f, "language", c.filter.language);
    c.filter.drop_toxic = get_or<bool>(*f, "drop_toxic", c.filter.drop_toxic);
    c.filter.min_turns = get_or<std::size_t>(*f, "min_turns", c.filter.min_turns);
    c.filter.require_dsat = get_or<bool>(*f, "require_dsat", c.filter.require_dsat);
  }

  auto eps = j.find("endpoints");
  if (eps == j.end() || !eps->is_object() || eps->empty()) bad("'endpoints' must name at least one endpoint");
  for (const auto& [name, spec] : eps->items()) c.endpoints[name] = endpoint_from_json(name, spec, base_dir);

  c.rewriter = required_string(j, "rewriter", "config");
  c.chatbot = required_string(j, "chatbot", "config");
  c.judge = required_string(j, "judge", "config");
  for (const auto* role : {&c.rewriter, &c.chatbot, &c.judge}) {
    if (!c.endpoints.count(*role)) bad("endpoint '" + *role + "' is not defined");
  }

  if (auto t = j.find("templates"); t != j.end()) {
    for (const auto& [id, path] : t->items()) {
      if (id != "rewrite" && id != "judge") bad("unknown template '" + id + "'");
      c.templates[id] = path.get<std::string>();
    }
  }
  if (auto p = j.find("prompt"); p != j.end()) {
    c.prompt.max_context = get_or<std::size_t>(*p, "max_context", c.prompt.max_context);
    c.prompt.allow_truncation = get_or<bool>(*p, "allow_truncation", c.prompt.allow_truncation);
  }
  if (auto p = j.find("judging"); p != j.end()) {
    c.judge_strict = get_or<bool>(*p, "strict", c.judge_strict);
    c.judge_repeats = get_or<int>(*p, "repeats", c.judge_repeats);
    if (c.judge_repeats < 1) bad("judging.repeats must be >= 1");
  }
  if (auto r = j.find("retry"); r != j.end()) {
    c.retry.max_attempts = get_or<int>(*r, "max_attempts", c.retry.max_attempts);
    c.retry.initial_backoff =
        std::chrono::milliseconds(get_or<long>(*r, "initial_backoff_ms", c.retry.initial_backoff.count()));
    c.retry.multiplier = get_or<double>(*r, "multiplier", c.retry.multiplier);
    c.retry.max_backoff = std::chrono::milliseconds(get_or<long>(*r, "max_backoff_ms", c.retry.max_backoff.count()));
    c.retry.jitter = get_or<double>(*r, "jitter", c.retry.jitter);
    if (c.retry.max_attempts < 1) bad("retry.max_attempts must be >= 1");
  }
  c.concurrency = get_or<int>(j, "concurrency", 1);
  if (c.concurrency < 1) bad("concurrency must be >= 1");
  const auto clock = get_or<std::string>(j, "clock", "system");
  if (clock != "system" && clock != "logical") bad("clock must be 'system' or 'logical'");
  c.logical_clock = clock == "logical";

  if (auto a = j.find("annotation"); a != j.end()) {
    auto& ac = c.annotation;
    ac.n = get_or<std::size_t>(*a, "n", ac.n);
    ac.annotators_per_item = get_or<std::size_t>(*a, "annotators_per_item", ac.annotators_per_item);
    ac.annotators = get_or<std::vector<std::string>>(*a, "annotators", {});
    if (a->contains("seed")) ac.seed = get_or<std::uint64_t>(*a, "seed", 0);
    ac.host = get_or<std::string>(*a, "host", ac.host);
    ac.port = get_or<int>(*a, "port", ac.port);
    if (a->contains("static_dir")) ac.static_dir = base_dir / get_or<std::string>(*a, "static_dir", "");
  }
  if (auto t = j.find("taxonomy"); t != j.end()) {
    if (t->contains("endpoint") && !(*t)["endpoint"].is_null()) {
      c.taxonomy.endpoint = get_or<std::string>(*t, "endpoint", "");
      if (!c.endpoints.count(*c.taxonomy.endpoint)) bad("taxonomy endpoint '" + *c.taxonomy.endpoint + "' is not defined");
    }
    c.taxonomy.options.batch_size = get_or<std::size_t>(*t, "batch_size", c.taxonomy.options.batch_size);
    c.taxonomy.options.max_iterations = get_or<int>(*t, "max_iterations", c.taxonomy.options.max_iterations);
  }
  return c;
}

Config Config::load(const std::filesystem::path& path) {
  json j;
  try {
    j = json::parse(read_text_file(path));
  } catch (const json::exception& e) {
    bad(path.string() + " is not valid JSON: " + e.what());
  }
  auto base = path.parent_path();
  return from_json(j, base.empty() ? std::filesystem::path(".") : base);
}

std::filesystem::path Config::resolve(const std::filesystem::path& p) const {
  return p.is_absolute() ? p : base_dir / p;
}

std::filesystem::path Config::run_dir() const {
  if (run_id.empty()) bad("no run id (set run_id or pass --run)");
  return resolve(runs_dir) / run_id;
}

// ---------------------------------------------------------------------------

std::string_view to_string(Stage s) {
  switch (s) {
    case Stage::kIngest: return "ingest";
    case Stage::kSelect: return "select";
    case Stage::kRewrite: return "rewrite";
    case Stage::kSimulate: return "simulate";
    case Stage::kJudge: return "judge";
    case Stage::kReport: return "report";
  }
  return "ingest";
}

std::optional<Stage> parse_stage(std::string_view s) {
  for (auto st : {Stage::kIngest, Stage::kSelect, Stage::kRewrite, Stage::kSimulate, Stage::kJudge,
                  Stage::kReport}) {
    if (s == to_string(st)) return st;
  }
  return std::nullopt;
}

std::optional<Grouping> parse_grouping(std::string_view s) {
  if (s == "domain-intent") return Grouping::kDomainIntent;
  if (s == "domain") return Grouping::kDomain;
  if (s == "depth") return Grouping::kDepth;
  if (s == "models") return Grouping::kModels;
  if (s == "overall") return Grouping::kOverall;
  return std::nullopt;
}

bool Manifest::done(Stage s) const {
  auto it = stages.find(std::string(to_string(s)));
  return it != stages.end() && it->second;
}

json Manifest::to_json() const {
  return {{"run_id", run_id},
          {"dataset", {{"path", dataset_path}, {"sha256", dataset_sha256}}},
          {"endpoints", {{"rewriter", rewriter_endpoint}, {"chatbot", chatbot_endpoint}, {"judge", judge_endpoint}}},
          {"templates", template_hashes},
          {"seed", seed},
          {"stages", stages},
          {"counts", counts},
          {"created_at", created_at}};
}

Manifest Manifest::from_json(const json& j) {
  try {
    Manifest m;
    m.run_id = j.at("run_id").get<std::string>();
    m.dataset_path = j.at("dataset").at("path").get<std::string>();
    m.dataset_sha256 = j.at("dataset").at("sha256").get<std::string>();
    m.rewriter_endpoint = j.at("endpoints").at("rewriter").get<std::string>();
    m.chatbot_endpoint = j.at("endpoints").at("chatbot").get<std::string>();
    m.judge_endpoint = j.at("endpoints").at("judge").get<std::string>();
    m.template_hashes = j.at("templates").get<std::map<std::string, std::string>>();
    m.seed = j.at("seed").get<std::uint64_t>();
    m.stages = j.at("stages").get<std::map<std::string, bool>>();
    m.counts = j.at("counts").get<std::map<std::string, std::size_t>>();
    m.created_at = j.value("created_at", "");
    return m;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kSchemaViolation, std::string("manifest: ") + e.what());
  }
}

}  // namespace prewrite::pipeline
