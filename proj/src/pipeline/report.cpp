#include <cstdio>

#include "prewrite/common/error.hpp"
#include "prewrite/pipeline/pipeline.hpp"

namespace prewrite::pipeline {

namespace {

using analytics::WLTRow;

struct Table {
  std::string name;
  std::string title;
  std::vector<std::string> keys;
  std::vector<WLTRow> rows;
};

Table make_table(const ReportInput& in, Grouping g) {
  switch (g) {
    case Grouping::kDomainIntent:
      return {"domain_intent", "Outcomes by domain and intent", {"domain", "intent"},
              analytics::aggregate_wlt(in.observations, analytics::by_domain_intent())};
    case Grouping::kDomain:
      return {"domain", "Outcomes by domain", {"domain"},
              analytics::aggregate_wlt(in.observations, analytics::by_domain())};
    case Grouping::kDepth: {
      Table t{"depth", "Outcomes by conversation depth", {"rewriter", "chatbot", "depth"}, {}};
      for (const auto& split : analytics::depth_split(in.observations)) {
        for (const auto* row : {&split.shallow, &split.deep}) {
          if (!row->has_value()) continue;
          auto r = **row;
          r.key.insert(r.key.begin(), {split.rewriter, split.chatbot});
          t.rows.push_back(std::move(r));
        }
      }
      return t;
    }
    case Grouping::kModels:
      return {"models", "Outcomes by rewriter and chatbot", {"rewriter", "chatbot"},
              analytics::cross_model_table(in.observations)};
    case Grouping::kOverall:
      return {"overall", "Overall outcomes", {"scope"},
              analytics::aggregate_wlt(in.observations, analytics::overall())};
  }
  return {};
}

std::string fixed3(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  return buf;
}

std::string pct(std::size_t count, std::size_t n) {
  return analytics::format_tenths(analytics::tenths_of_percent(count, n));
}

std::string pad(std::string s, std::size_t width) {
  if (s.size() < width) s.append(width - s.size(), ' ');
  return s;
}

std::string attrition_text(const Attrition& a) {
  std::string out = "Attrition\n";
  const std::pair<const char*, std::size_t> rows[] = {{"candidates", a.candidates},
                                                      {"judged", a.judged},
                                                      {"no_mod", a.no_mod},
                                                      {"errored", a.errored},
                                                      {"pending", a.pending}};
  for (const auto& [name, v] : rows) out += pad(name, 12) + std::to_string(v) + "\n";
  return out;
}

std::string assumptions_text(const std::map<convstore::GroupKey, analytics::AssumptionStats>& stats) {
  std::string out = "Assumptions by domain and intent\n";
  for (const auto& [group, s] : stats) {
    out += group.domain + " / " + group.intent + ": winning " + std::to_string(s.winning.size()) +
           ", losing " + std::to_string(s.losing.size()) + ", without assumptions " +
           std::to_string(s.no_assumption) + "\n";
    for (const auto& [level, c] : s.plausibility) {
      out += "  plausibility " + std::string(rewrite::to_string(level)) + ": W " + std::to_string(c.wins) +
             " L " + std::to_string(c.losses) + " T " + std::to_string(c.ties) + "\n";
    }
  }
  return out;
}

std::string human_text(const HumanValidation& h) {
  std::string out = "Human validation\n";
  out += "pairwise items rated twice or more: " + std::to_string(h.pairwise_items) + "\n";
  out += "dropped at average 3: " + std::to_string(h.dropped_ties) + "\n";
  out += "human vs judge alpha (nominal): ";
  if (!h.alpha_available) {
    out += "n/a\n";
  } else if (h.judge_alpha.degenerate) {
    out += "DEGENERATE\n";
  } else {
    out += fixed3(*h.judge_alpha.alpha) + " over " + std::to_string(h.judge_alpha.items_used) + " items\n";
  }
  if (h.intent) {
    const auto& s = *h.intent;
    out += "intent kept (n=" + std::to_string(s.n) + "): >=2.5 " + pct(s.strong, s.n) + "%, =2 " +
           pct(s.somewhat, s.n) + "%, <2 " + pct(s.low, s.n) + "%";
    if (s.other) out += ", other " + pct(s.other, s.n) + "%";
    out += "\n";
  }
  if (h.plausibility_items) {
    out += "assumptions identified: " + std::to_string(h.assumptions_identified) + " of " +
           std::to_string(h.plausibility_items) + "; very plausible " +
           pct(h.very_plausible, h.assumptions_identified) + "%\n";
  }
  return out;
}

}  // namespace

std::string grouped_table(const ReportInput& in, Grouping g) {
  if (in.observations.empty()) return "No judged candidates.\n";
  const auto t = make_table(in, g);
  return analytics::format_wlt_table(t.title, t.keys, t.rows);
}

ReportFiles build_report(const ReportInput& in, Grouping primary) {
  ReportFiles f;
  f.text = "Run " + in.run_id + "\n";
  for (const auto& pair : in.model_pairs) f.text += "Rewriter / chatbot: " + pair + "\n";
  f.text += "Judge: " + in.judge_endpoint + "\n\n";

  auto line = [&](json j) { f.jsonl += dump_line(j) + "\n"; };
  if (in.observations.empty()) {
    f.text += "No judged candidates.\n\n";
  } else {
    for (auto g : {Grouping::kDomainIntent, Grouping::kDepth, Grouping::kModels, Grouping::kOverall}) {
      const auto t = make_table(in, g);
      f.text += analytics::format_wlt_table(t.title, t.keys, t.rows) + "\n";
      for (const auto& r : t.rows) {
        auto j = r.to_json(t.keys);
        j["table"] = t.name;
        line(j);
      }
    }
    const auto t = make_table(in, primary);
    f.csv = analytics::format_wlt_csv(t.keys, t.rows);

    const auto stats = analytics::assumption_outcome_stats(in.assumptions);
    f.text += assumptions_text(stats) + "\n";
    for (const auto& [group, s] : stats) {
      json plaus = json::object();
      for (const auto& [level, c] : s.plausibility) {
        plaus[std::string(rewrite::to_string(level))] = {{"wins", c.wins}, {"losses", c.losses}, {"ties", c.ties}};
      }
      line({{"table", "assumptions"},
            {"domain", group.domain},
            {"intent", group.intent},
            {"winning", s.winning},
            {"losing", s.losing},
            {"no_assumption", s.no_assumption},
            {"plausibility", plaus}});
    }
  }

  if (in.human) {
    const auto& h = *in.human;
    f.text += human_text(h) + "\n";
    json alpha = h.alpha_available && !h.judge_alpha.degenerate ? json(*h.judge_alpha.alpha) : json(nullptr);
    json j = {{"table", "human_validation"},
              {"pairwise_items", h.pairwise_items},
              {"dropped_ties", h.dropped_ties},
              {"judge_alpha", alpha},
              {"alpha_degenerate", h.alpha_available && h.judge_alpha.degenerate},
              {"plausibility_items", h.plausibility_items},
              {"assumptions_identified", h.assumptions_identified},
              {"very_plausible", h.very_plausible}};
    if (h.intent) {
      j["intent"] = {{"n", h.intent->n},
                     {"strong", h.intent->strong},
                     {"somewhat", h.intent->somewhat},
                     {"low", h.intent->low},
                     {"other", h.intent->other}};
    }
    line(j);
  }

  f.text += attrition_text(in.attrition);
  line({{"table", "attrition"},
        {"candidates", in.attrition.candidates},
        {"judged", in.attrition.judged},
        {"no_mod", in.attrition.no_mod},
        {"errored", in.attrition.errored},
        {"pending", in.attrition.pending}});
  return f;
}

HumanValidation human_validation(std::span<const annotsvc::AnnotationTask> tasks,
                                 std::span<const annotsvc::Rating> ratings,
                                 std::span<const intervene::InterventionRecord> verdicts) {
  std::map<std::string, const annotsvc::AnnotationTask*> by_id;
  for (const auto& t : tasks) by_id[t.task_id] = &t;
  std::map<std::string, intervene::Outcome> machine;
  for (const auto& v : verdicts) machine[v.candidate_ref.key()] = v.verdict.wlt;

  std::map<std::string, std::vector<int>> scores;
  std::map<std::string, std::size_t> rated;  // plausibility: any submission
  for (const auto& r : ratings) {
    auto it = by_id.find(r.task_id);
    if (it == by_id.end()) continue;
    const auto& t = *it->second;
    ++rated[t.task_id];
    if (!r.score) continue;
    // Pairwise scores are position-relative; store them rewrite-centric.
    scores[t.task_id].push_back(t.kind == annotsvc::TaskKind::kPairwise5
                                    ? intervene::derandomize(*r.score, t.order).rewrite_preference
                                    : *r.score);
  }

  auto category = [](intervene::Outcome o) { return static_cast<int>(o); };
  HumanValidation h;
  analytics::RatingsMatrix matrix;
  std::vector<double> intent;
  for (const auto& t : tasks) {
    const auto& s = scores[t.task_id];
    switch (t.kind) {
      case annotsvc::TaskKind::kPairwise5: {
        if (s.size() < 2) break;
        ++h.pairwise_items;
        auto c = analytics::coarsen_human_score(annotsvc::pair_average(s));
        if (!c) {
          ++h.dropped_ties;
          break;
        }
        auto m = machine.find(t.item.ref.key());
        if (m != machine.end()) matrix.push_back({category(*c), category(m->second)});
        break;
      }
      case annotsvc::TaskKind::kIntent3:
        if (s.size() >= 2) intent.push_back(annotsvc::pair_average(s));
        break;
      case annotsvc::TaskKind::kPlausibility3: {
        if (!rated[t.task_id]) break;
        ++h.plausibility_items;
        if (s.empty()) break;
        ++h.assumptions_identified;
        double sum = 0;
        for (int x : s) sum += x;
        if (sum / static_cast<double>(s.size()) >= 2.5) ++h.very_plausible;
        break;
      }
    }
  }
  if (!matrix.empty()) {
    try {
      h.judge_alpha = analytics::krippendorff_alpha(matrix, analytics::Metric::kNominal);
      h.alpha_available = true;
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kInsufficientItems) throw;
    }
  }
  if (!intent.empty()) h.intent = analytics::intent_summary(intent);
  return h;
}

}  // namespace prewrite::pipeline
