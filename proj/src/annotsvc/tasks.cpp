#include <algorithm>
#include <cctype>
#include <cstdio>

#include "prewrite/annotsvc/annotsvc.hpp"
#include "prewrite/common/error.hpp"
#include "prewrite/common/hash.hpp"
#include "prewrite/common/text.hpp"
#include "prewrite/rewrite/template.hpp"

namespace prewrite::annotsvc {

namespace {

constexpr std::uint64_t kHumanOrderSalt = 0x68756d616e6f7264ULL;

const rewrite::PromptTemplate& template_for(TaskKind k) {
  switch (k) {
    case TaskKind::kPairwise5: return rewrite::default_human_pairwise_template();
    case TaskKind::kIntent3: return rewrite::default_intent_template();
    case TaskKind::kPlausibility3: return rewrite::default_plausibility_template();
  }
  return rewrite::default_human_pairwise_template();
}

bool is_scale_line(std::string_view line) {
  line = text::trim(line);
  return line.size() > 2 && std::isdigit(static_cast<unsigned char>(line[0])) &&
         line.substr(1).starts_with(" indicates");
}

std::string instructions_for(TaskKind k) {
  std::string out;
  for (auto line : text::split_lines(template_for(k).body())) {
    if (is_scale_line(line)) continue;
    out.append(line);
    out.push_back('\n');
  }
  return std::string(text::trim(out));
}

std::string hex16(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string task_id_for(std::uint64_t seed, TaskKind k, const convstore::CandidateRef& ref) {
  const std::string prefix = k == TaskKind::kPairwise5 ? "pw" : k == TaskKind::kIntent3 ? "in" : "pl";
  return prefix + "-" + hex16(mix64(fnv1a64(std::to_string(seed) + ":" + std::string(to_string(k)) +
                                            ":" + ref.key())));
}

json ending_json(std::string label, std::string_view user, std::string_view assistant) {
  return {{"label", std::move(label)}, {"user", user}, {"assistant", assistant}};
}

intervene::Side parse_side(const std::string& s) {
  if (s == "ORIGINAL") return intervene::Side::kOriginal;
  if (s == "REWRITTEN") return intervene::Side::kRewritten;
  throw Error(ErrorCode::kSchemaViolation, "bad ending side '" + s + "'");
}

json order_json(const intervene::OrderAssignment& o) {
  return {{"ending1", to_string(o.ending1)}, {"ending2", to_string(o.ending2)}, {"rng_seed", o.rng_seed}};
}

intervene::OrderAssignment order_from_json(const json& j) {
  return {parse_side(j.at("ending1").get<std::string>()), parse_side(j.at("ending2").get<std::string>()),
          j.at("rng_seed").get<std::uint64_t>()};
}

}  // namespace

std::string_view to_string(TaskKind k) {
  switch (k) {
    case TaskKind::kPairwise5: return "PAIRWISE_5PT";
    case TaskKind::kIntent3: return "INTENT_3PT";
    case TaskKind::kPlausibility3: return "PLAUSIBILITY_3PT";
  }
  return "PAIRWISE_5PT";
}

std::optional<TaskKind> parse_task_kind(std::string_view s) {
  for (auto k : {TaskKind::kPairwise5, TaskKind::kIntent3, TaskKind::kPlausibility3}) {
    if (s == to_string(k)) return k;
  }
  return std::nullopt;
}

int scale_max(TaskKind k) { return k == TaskKind::kPairwise5 ? 5 : 3; }

std::vector<std::string> scale_labels(TaskKind k) {
  std::vector<std::string> out;
  for (auto line : text::split_lines(template_for(k).body())) {
    if (is_scale_line(line)) out.emplace_back(text::trim(line));
  }
  return out;
}

json AnnotationTask::payload() const {
  json scale = json::array();
  const auto labels = scale_labels(kind);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    scale.push_back({{"value", static_cast<int>(i) + 1}, {"label", labels[i]}});
  }
  json history = json::array();
  for (const auto& t : item.history) history.push_back({{"user", t.user_text}, {"assistant", t.model_text}});

  json endings = json::array();
  auto side_text = [&](intervene::Side s) {
    return s == intervene::Side::kOriginal
               ? std::pair<std::string_view, std::string_view>{item.original_user, item.original_model}
               : std::pair<std::string_view, std::string_view>{item.rewrite_text, item.simulated_response};
  };
  if (kind == TaskKind::kPairwise5) {
    auto [u1, a1] = side_text(order.ending1);
    auto [u2, a2] = side_text(order.ending2);
    endings.push_back(ending_json("Ending 1", u1, a1));
    endings.push_back(ending_json("Ending 2", u2, a2));
  } else {
    endings.push_back(ending_json("Original Ending", item.original_user, item.original_model));
    endings.push_back(ending_json("Rewritten Ending", item.rewrite_text, item.simulated_response));
  }

  json p = {{"task_id", task_id},       {"kind", to_string(kind)}, {"instructions", instructions_for(kind)},
            {"scale", std::move(scale)}, {"scale_min", 1},          {"scale_max", scale_max(kind)},
            {"history", std::move(history)}, {"endings", std::move(endings)}};
  if (kind == TaskKind::kPlausibility3) {
    json as = json::array();
    for (const auto& a : item.assumptions) as.push_back(a.text);
    p["assumptions"] = std::move(as);
    p["allow_no_assumptions"] = true;
  }
  return p;
}

json AnnotationTask::to_json() const {
  json history = json::array();
  for (const auto& t : item.history) {
    history.push_back({{"index", t.index}, {"user", t.user_text}, {"model", t.model_text}});
  }
  json as = json::array();
  for (const auto& a : item.assumptions) {
    as.push_back({{"text", a.text},
                  {"salience", rewrite::to_string(a.salience)},
                  {"plausibility", rewrite::to_string(a.plausibility)}});
  }
  json j = {{"task_id", task_id},
            {"kind", to_string(kind)},
            {"conv_id", item.ref.conv_id},
            {"target_index", item.ref.target_index},
            {"history", std::move(history)},
            {"original_user", item.original_user},
            {"original_model", item.original_model},
            {"rewrite_text", item.rewrite_text},
            {"simulated_response", item.simulated_response},
            {"assumptions", std::move(as)},
            {"order", order_json(order)},
            {"machine_order", item.machine_order ? order_json(*item.machine_order) : json(nullptr)},
            {"annotators", annotators}};
  return j;
}

AnnotationTask AnnotationTask::from_json(const json& j) {
  try {
    AnnotationTask t;
    t.task_id = j.at("task_id").get<std::string>();
    auto kind = parse_task_kind(j.at("kind").get<std::string>());
    if (!kind) throw Error(ErrorCode::kSchemaViolation, "unknown task kind in " + t.task_id);
    t.kind = *kind;
    t.item.ref = {j.at("conv_id").get<std::string>(), j.at("target_index").get<int>()};
    for (const auto& h : j.at("history")) {
      convstore::Turn turn;
      turn.index = h.at("index").get<int>();
      turn.user_text = h.at("user").get<std::string>();
      turn.model_text = h.at("model").get<std::string>();
      t.item.history.push_back(std::move(turn));
    }
    t.item.original_user = j.at("original_user").get<std::string>();
    t.item.original_model = j.at("original_model").get<std::string>();
    t.item.rewrite_text = j.at("rewrite_text").get<std::string>();
    t.item.simulated_response = j.at("simulated_response").get<std::string>();
    for (const auto& a : j.at("assumptions")) {
      auto sal = rewrite::parse_level(a.at("salience").get<std::string>());
      auto pl = rewrite::parse_level(a.at("plausibility").get<std::string>());
      if (!sal || !pl) throw Error(ErrorCode::kSchemaViolation, "bad assumption level in " + t.task_id);
      t.item.assumptions.push_back({a.at("text").get<std::string>(), *sal, *pl});
    }
    t.order = order_from_json(j.at("order"));
    if (!j.at("machine_order").is_null()) t.item.machine_order = order_from_json(j.at("machine_order"));
    t.annotators = j.at("annotators").get<std::vector<std::string>>();
    return t;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kSchemaViolation, std::string("annotation task: ") + e.what());
  }
}

std::vector<AnnotationTask> create_batch(std::span<const SourceItem> items, const BatchOptions& options) {
  const auto k = options.annotators_per_item;
  const auto a = options.annotators.size();
  if (k == 0 || a == 0 || k > a) {
    throw Error(ErrorCode::kConfig, "need 1 <= annotators_per_item <= annotators (k=" + std::to_string(k) +
                                        ", annotators=" + std::to_string(a) + ")");
  }
  if (items.size() < options.n) {
    throw Error(ErrorCode::kInsufficientItems, "requested " + std::to_string(options.n) + " items, only " +
                                                   std::to_string(items.size()) + " available");
  }

  // Seeded sample: rank by keyed hash, ties (duplicate refs) by input position.
  std::vector<std::pair<std::uint64_t, std::size_t>> ranked;
  ranked.reserve(items.size());
  for (std::size_t i = 0; i < items.size(); ++i) {
    ranked.emplace_back(mix64(options.seed ^ fnv1a64(items[i].ref.key())), i);
  }
  std::sort(ranked.begin(), ranked.end());

  const auto human_seed = mix64(options.seed ^ kHumanOrderSalt);
  std::vector<AnnotationTask> out;
  for (std::size_t i = 0; i < options.n; ++i) {
    const auto& item = items[ranked[i].second];
    std::vector<std::string> who;
    for (std::size_t j = 0; j < k; ++j) who.push_back(options.annotators[(i * k + j) % a]);
    for (auto kind : options.kinds) {
      AnnotationTask t;
      t.task_id = task_id_for(options.seed, kind, item.ref);
      t.kind = kind;
      t.item = item;
      t.order = kind == TaskKind::kPairwise5
                    ? intervene::assign_order(human_seed, item.ref)
                    : intervene::OrderAssignment{intervene::Side::kOriginal, intervene::Side::kRewritten, 0};
      t.annotators = who;
      out.push_back(std::move(t));
    }
  }
  return out;
}

}  // namespace prewrite::annotsvc
