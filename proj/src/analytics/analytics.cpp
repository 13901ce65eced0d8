#include "prewrite/analytics/analytics.hpp"

#include <algorithm>
#include <sstream>

#include "prewrite/common/error.hpp"

namespace prewrite::analytics {

int tenths_of_percent(std::size_t count, std::size_t n) {
  if (n == 0) return 0;
  return static_cast<int>((count * 2000 + n) / (2 * n));
}

std::string format_tenths(int tenths) {
  return std::to_string(tenths / 10) + "." + std::to_string(tenths % 10);
}

double WLTRow::win_pct() const { return n() ? 100.0 * static_cast<double>(wins) / n() : 0.0; }
double WLTRow::loss_pct() const { return n() ? 100.0 * static_cast<double>(losses) / n() : 0.0; }
double WLTRow::tie_pct() const { return n() ? 100.0 * static_cast<double>(ties) / n() : 0.0; }

json WLTRow::to_json(std::span<const std::string> key_names) const {
  json j = json::object();
  for (std::size_t i = 0; i < key.size(); ++i) {
    j[i < key_names.size() ? key_names[i] : "key" + std::to_string(i)] = key[i];
  }
  j["win_pct"] = tenths_of_percent(wins, n()) / 10.0;
  j["loss_pct"] = tenths_of_percent(losses, n()) / 10.0;
  j["tie_pct"] = tenths_of_percent(ties, n()) / 10.0;
  j["wins"] = wins;
  j["losses"] = losses;
  j["ties"] = ties;
  j["n"] = n();
  return j;
}

KeyFn by_domain_intent() {
  return [](const Observation& o) { return std::vector<std::string>{o.group.domain, o.group.intent}; };
}

KeyFn by_domain() {
  return [](const Observation& o) { return std::vector<std::string>{o.group.domain}; };
}

KeyFn by_depth() {
  return [](const Observation& o) { return std::vector<std::string>{std::string(to_string(o.depth))}; };
}

KeyFn by_models() {
  return [](const Observation& o) { return std::vector<std::string>{o.rewriter, o.chatbot}; };
}

KeyFn overall() {
  return [](const Observation&) { return std::vector<std::string>{"all"}; };
}

std::vector<WLTRow> aggregate_wlt(std::span<const Observation> obs, const KeyFn& key) {
  if (obs.empty()) throw Error(ErrorCode::kEmptyGrouping, "no verdicts to aggregate");
  std::map<std::vector<std::string>, WLTRow> groups;
  for (const auto& o : obs) {
    auto k = key(o);
    auto& row = groups[k];
    row.key = std::move(k);
    switch (o.wlt) {
      case Outcome::kWin: ++row.wins; break;
      case Outcome::kLoss: ++row.losses; break;
      case Outcome::kTie: ++row.ties; break;
    }
  }
  std::vector<WLTRow> rows;
  for (auto& [k, row] : groups) rows.push_back(std::move(row));
  std::stable_sort(rows.begin(), rows.end(),
                   [](const WLTRow& a, const WLTRow& b) { return a.n() > b.n(); });
  return rows;
}

std::vector<DepthSplit> depth_split(std::span<const Observation> obs) {
  std::vector<DepthSplit> out;
  if (obs.empty()) return out;
  for (auto& row : aggregate_wlt(obs, [](const Observation& o) {
         return std::vector<std::string>{o.rewriter, o.chatbot, std::string(to_string(o.depth))};
       })) {
    auto it = std::find_if(out.begin(), out.end(), [&](const DepthSplit& d) {
      return d.rewriter == row.key[0] && d.chatbot == row.key[1];
    });
    if (it == out.end()) {
      out.push_back({row.key[0], row.key[1], std::nullopt, std::nullopt});
      it = std::prev(out.end());
    }
    const bool deep = row.key[2] == to_string(convstore::Depth::kDeep);
    row.key = {row.key[2]};
    (deep ? it->deep : it->shallow) = std::move(row);
  }
  std::sort(out.begin(), out.end(), [](const DepthSplit& a, const DepthSplit& b) {
    return std::tie(a.rewriter, a.chatbot) < std::tie(b.rewriter, b.chatbot);
  });
  return out;
}

std::vector<WLTRow> cross_model_table(std::span<const Observation> obs) {
  return aggregate_wlt(obs, by_models());
}

AlphaResult krippendorff_alpha(const RatingsMatrix& m, Metric metric) {
  std::size_t raters = 0;
  for (const auto& row : m) raters = std::max(raters, row.size());
  if (raters < 2) throw Error(ErrorCode::kInsufficientItems, "alpha needs at least two raters");

  std::vector<int> values;
  for (const auto& row : m) {
    for (const auto& r : row) {
      if (r) values.push_back(*r);
    }
  }
  std::sort(values.begin(), values.end());
  values.erase(std::unique(values.begin(), values.end()), values.end());
  const std::size_t k = values.size();
  auto idx = [&](int v) {
    return static_cast<std::size_t>(std::lower_bound(values.begin(), values.end(), v) -
                                    values.begin());
  };

  std::vector<std::vector<double>> o(k, std::vector<double>(k, 0.0));
  AlphaResult res;
  for (const auto& row : m) {
    std::vector<std::size_t> rated;
    for (const auto& r : row) {
      if (r) rated.push_back(idx(*r));
    }
    if (rated.size() < 2) continue;
    ++res.items_used;
    const double w = 1.0 / static_cast<double>(rated.size() - 1);
    for (std::size_t i = 0; i < rated.size(); ++i) {
      for (std::size_t j = 0; j < rated.size(); ++j) {
        if (i != j) o[rated[i]][rated[j]] += w;
      }
    }
    res.pairable_values += rated.size();
  }
  if (res.items_used == 0) {
    throw Error(ErrorCode::kInsufficientItems, "alpha needs an item rated at least twice");
  }

  std::vector<double> nc(k, 0.0);
  double n = 0.0;
  for (std::size_t c = 0; c < k; ++c) {
    for (std::size_t d = 0; d < k; ++d) nc[c] += o[c][d];
    n += nc[c];
  }

  auto delta2 = [&](std::size_t c, std::size_t d) -> double {
    if (c == d) return 0.0;
    switch (metric) {
      case Metric::kNominal: return 1.0;
      case Metric::kInterval: {
        const double diff = values[c] - values[d];
        return diff * diff;
      }
      case Metric::kOrdinal: {
        const auto lo = std::min(c, d), hi = std::max(c, d);
        double s = 0.0;
        for (std::size_t g = lo; g <= hi; ++g) s += nc[g];
        s -= (nc[lo] + nc[hi]) / 2.0;
        return s * s;
      }
    }
    return 1.0;
  };

  double d_o = 0.0;
  double d_e = 0.0;
  for (std::size_t c = 0; c < k; ++c) {
    for (std::size_t d = 0; d < k; ++d) {
      const double dd = delta2(c, d);
      d_o += o[c][d] * dd;
      d_e += nc[c] * nc[d] * dd;
    }
  }
  d_o /= n;
  d_e /= n * (n - 1.0);
  res.observed_disagreement = d_o;
  res.expected_disagreement = d_e;
  if (d_e == 0.0) {
    res.degenerate = true;
  } else {
    res.alpha = 1.0 - d_o / d_e;
  }
  return res;
}

std::optional<Outcome> coarsen_human_score(double avg) {
  if (avg < 3.0) return Outcome::kLoss;
  if (avg > 3.0) return Outcome::kWin;
  return std::nullopt;
}

std::vector<std::optional<Outcome>> coarsen_human_scores(std::span<const double> avgs) {
  std::vector<std::optional<Outcome>> out;
  out.reserve(avgs.size());
  for (double a : avgs) out.push_back(coarsen_human_score(a));
  return out;
}

namespace {
double pct(std::size_t c, std::size_t n) { return n ? 100.0 * static_cast<double>(c) / n : 0.0; }
}  // namespace

double IntentSummary::pct_strong() const { return pct(strong, n); }
double IntentSummary::pct_somewhat() const { return pct(somewhat, n); }
double IntentSummary::pct_low() const { return pct(low, n); }
double IntentSummary::pct_other() const { return pct(other, n); }

IntentSummary intent_summary(std::span<const double> avgs) {
  IntentSummary s;
  for (double a : avgs) {
    if (!(a >= 1.0 && a <= 3.0)) {
      throw Error(ErrorCode::kRange, "intent average outside [1, 3]: " + std::to_string(a));
    }
    ++s.n;
    if (a >= 2.5) {
      ++s.strong;
    } else if (a == 2.0) {
      ++s.somewhat;
    } else if (a < 2.0) {
      ++s.low;
    } else {
      ++s.other;
    }
  }
  return s;
}

std::map<convstore::GroupKey, AssumptionStats> assumption_outcome_stats(
    std::span<const AssumptionObservation> obs) {
  std::map<convstore::GroupKey, AssumptionStats> out;
  for (const auto& o : obs) {
    auto& s = out[o.group];
    if (o.assumptions.empty()) {
      ++s.no_assumption;
      continue;
    }
    for (const auto& a : o.assumptions) {
      auto& counts = s.plausibility[a.plausibility];
      switch (o.wlt) {
        case Outcome::kWin:
          s.winning.push_back(a.text);
          ++counts.wins;
          break;
        case Outcome::kLoss:
          s.losing.push_back(a.text);
          ++counts.losses;
          break;
        case Outcome::kTie:
          ++counts.ties;
          break;
      }
    }
  }
  return out;
}

std::string format_wlt_table(std::string_view title, std::span<const std::string> key_names,
                             std::span<const WLTRow> rows) {
  std::vector<std::vector<std::string>> cells;
  std::vector<std::string> header(key_names.begin(), key_names.end());
  for (auto h : {"W", "L", "T", "n"}) header.emplace_back(h);
  cells.push_back(header);
  for (const auto& r : rows) {
    std::vector<std::string> line = r.key;
    line.resize(key_names.size());
    line.push_back(format_tenths(tenths_of_percent(r.wins, r.n())));
    line.push_back(format_tenths(tenths_of_percent(r.losses, r.n())));
    line.push_back(format_tenths(tenths_of_percent(r.ties, r.n())));
    line.push_back(std::to_string(r.n()));
    cells.push_back(std::move(line));
  }
  std::vector<std::size_t> width(header.size(), 0);
  const std::size_t nkeys = key_names.size();
  for (std::size_t i = nkeys; i < nkeys + 3; ++i) width[i] = 5;  // "100.0"
  for (const auto& line : cells) {
    for (std::size_t i = 0; i < line.size(); ++i) width[i] = std::max(width[i], line[i].size());
  }
  std::ostringstream os;
  os << title << '\n';
  auto emit = [&](const std::vector<std::string>& line) {
    std::string out;
    for (std::size_t i = 0; i < line.size(); ++i) {
      if (i) out += "  ";
      const auto pad = std::string(width[i] - line[i].size(), ' ');
      out += i < nkeys ? line[i] + pad : pad + line[i];
    }
    while (!out.empty() && out.back() == ' ') out.pop_back();
    os << out << '\n';
  };
  emit(cells[0]);
  std::size_t total = 0;
  for (auto w : width) total += w;
  os << std::string(total + 2 * (width.size() - 1), '-') << '\n';
  for (std::size_t i = 1; i < cells.size(); ++i) emit(cells[i]);
  return os.str();
}

std::string csv_field(std::string_view s) {
  if (s.find_first_of(",\"\n\r") == std::string_view::npos) return std::string(s);
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string format_wlt_csv(std::span<const std::string> key_names, std::span<const WLTRow> rows) {
  std::string out;
  for (const auto& k : key_names) out += csv_field(k) + ",";
  out += "win_pct,loss_pct,tie_pct,wins,losses,ties,n\n";
  for (const auto& r : rows) {
    for (std::size_t i = 0; i < key_names.size(); ++i) {
      out += csv_field(i < r.key.size() ? r.key[i] : "") + ",";
    }
    out += format_tenths(tenths_of_percent(r.wins, r.n())) + "," +
           format_tenths(tenths_of_percent(r.losses, r.n())) + "," +
           format_tenths(tenths_of_percent(r.ties, r.n())) + "," + std::to_string(r.wins) + "," +
           std::to_string(r.losses) + "," + std::to_string(r.ties) + "," +
           std::to_string(r.n()) + "\n";
  }
  return out;
}

}  // namespace prewrite::analytics
