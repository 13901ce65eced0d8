#include "prewrite/taxonomy/taxonomy.hpp"

#include <algorithm>
#include <cctype>

#include "prewrite/common/error.hpp"
#include "prewrite/common/text.hpp"

namespace prewrite::taxonomy {

std::string normalize_label(std::string_view raw) {
  std::string out;
  bool pending_space = false;
  for (char c : raw) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out.push_back(' ');
    pending_space = false;
    out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  }
  while (!out.empty() && (std::ispunct(static_cast<unsigned char>(out.back())) || out.back() == ' ')) {
    out.pop_back();
  }
  return out;
}

std::string Consolidation::resolve(std::string_view raw) const {
  auto n = normalize_label(raw);
  auto it = canonical_of.find(n);
  return it == canonical_of.end() ? n : it->second;
}

namespace {

using Counts = std::map<std::string, std::size_t>;

Counts count_labels(std::span<const std::string> labels) {
  Counts counts;
  for (const auto& l : labels) ++counts[normalize_label(l)];
  return counts;
}

Consolidation build(const Counts& counts, std::map<std::string, std::string> canon) {
  Consolidation c;
  std::map<std::string, AspectMapping> by_canonical;
  for (const auto& [label, target] : canon) {
    auto& m = by_canonical[target];
    m.canonical = target;
    m.members.insert(label);
    m.support += counts.at(label);
  }
  for (auto& [name, m] : by_canonical) c.mappings.push_back(std::move(m));
  std::stable_sort(c.mappings.begin(), c.mappings.end(),
                   [](const AspectMapping& a, const AspectMapping& b) { return a.support > b.support; });
  c.canonical_of = std::move(canon);
  return c;
}

std::map<std::string, std::size_t> supports(const Counts& counts,
                                            const std::map<std::string, std::string>& canon) {
  std::map<std::string, std::size_t> s;
  for (const auto& [label, target] : canon) s[target] += counts.at(label);
  return s;
}

void strip_markers(std::string_view& s) {
  while (!s.empty() && (s.front() == '-' || s.front() == '*' || s.front() == '"' ||
                        s.front() == '\'' || s.front() == '`' || s.front() == ' ')) {
    s.remove_prefix(1);
  }
}

std::string strip_item(std::string_view s) {
  s = text::trim(s);
  strip_markers(s);
  // "3. label" / "3) label"
  std::size_t i = 0;
  while (i < s.size() && std::isdigit(static_cast<unsigned char>(s[i]))) ++i;
  if (i > 0 && i + 1 < s.size() && (s[i] == '.' || s[i] == ')') && s[i + 1] == ' ') {
    s.remove_prefix(i + 2);
    strip_markers(s);
  }
  while (!s.empty() && (s.back() == '"' || s.back() == '\'' || s.back() == '`' || s.back() == '*')) {
    s.remove_suffix(1);
  }
  return std::string(text::trim(s));
}

}  // namespace

Consolidation consolidate(std::span<const std::string> labels) {
  const auto counts = count_labels(labels);
  std::map<std::string, std::string> canon;
  for (const auto& [label, n] : counts) canon[label] = label;
  auto c = build(counts, std::move(canon));
  c.iterations = 1;
  return c;
}

std::string merge_prompt(std::span<const std::string> batch) {
  std::string out =
      "The labels below name aspects of user prompts sent to an AI chatbot, such as what makes a "
      "prompt effective or where it falls short. Several labels may name the same aspect in "
      "different words.\n\n"
      "For every label that should be merged into another label from the list, or into a shared "
      "better name, output one line of the form\n"
      "label -> canonical label\n"
      "Output nothing for labels that are already distinct. Do not output any other text.\n\n"
      "Labels:\n";
  for (const auto& l : batch) out += "- " + l + "\n";
  return out;
}

std::vector<std::pair<std::string, std::string>> parse_merge_reply(std::string_view reply) {
  std::vector<std::pair<std::string, std::string>> out;
  for (auto line : text::split_lines(reply)) {
    std::size_t pos = std::string_view::npos;
    std::size_t len = 0;
    for (std::string_view arrow : {"->", "=>", "\xE2\x86\x92"}) {
      auto p = line.find(arrow);
      if (p != std::string_view::npos && p < pos) {
        pos = p;
        len = arrow.size();
      }
    }
    if (pos == std::string_view::npos) continue;
    auto from = strip_item(line.substr(0, pos));
    auto to = strip_item(line.substr(pos + len));
    if (!from.empty() && !to.empty()) out.emplace_back(std::move(from), std::move(to));
  }
  return out;
}

Consolidation consolidate(std::span<const std::string> labels, llm::Gateway& gateway,
                          llm::Endpoint& endpoint, const ConsolidateOptions& options) {
  const auto counts = count_labels(labels);
  std::map<std::string, std::string> canon;
  for (const auto& [label, n] : counts) canon[label] = label;
  std::vector<std::string> conflicts;
  const std::size_t batch_size = std::max<std::size_t>(1, options.batch_size);

  int iteration = 0;
  bool converged = false;
  while (iteration < options.max_iterations) {
    ++iteration;
    const auto support = supports(counts, canon);
    std::vector<std::string> current;
    for (const auto& [name, s] : support) current.push_back(name);

    std::map<std::string, std::set<std::string>> proposals;
    for (std::size_t start = 0; start < current.size(); start += batch_size) {
      std::span<const std::string> batch(current.data() + start,
                                         std::min(batch_size, current.size() - start));
      const std::set<std::string> in_batch(batch.begin(), batch.end());
      auto req = llm::Gateway::make_request(endpoint.config(), llm::Purpose::kTaxonomy,
                                            {{llm::Role::kUser, merge_prompt(batch)}});
      auto resp = gateway.complete(endpoint, req);
      for (auto& [from_raw, to_raw] : parse_merge_reply(resp.text)) {
        auto from = normalize_label(from_raw);
        auto to = normalize_label(to_raw);
        if (from == to || to.empty() || !in_batch.count(from)) continue;
        proposals[from].insert(to);
      }
    }

    auto support_of = [&](const std::string& name) {
      auto it = support.find(name);
      return it == support.end() ? std::size_t{0} : it->second;
    };
    std::map<std::string, std::string> chosen;
    for (const auto& [from, targets] : proposals) {
      auto best = *std::min_element(targets.begin(), targets.end(),
                                    [&](const std::string& a, const std::string& b) {
                                      const auto sa = support_of(a), sb = support_of(b);
                                      return sa != sb ? sa > sb : a < b;
                                    });
      if (targets.size() > 1) {
        std::string msg = "NON_PARTITION: '" + from + "' proposed for";
        for (const auto& t : targets) msg += " '" + t + "'";
        conflicts.push_back(msg + "; kept '" + best + "'");
      }
      chosen[from] = best;
    }

    // Follow merge chains; a cycle collapses onto its best-supported member.
    auto final_of = [&](std::string x) {
      std::vector<std::string> path;
      while (chosen.count(x) && std::find(path.begin(), path.end(), x) == path.end()) {
        path.push_back(x);
        x = chosen.at(x);
      }
      auto loop = std::find(path.begin(), path.end(), x);
      if (loop == path.end()) return x;
      return *std::min_element(loop, path.end(), [&](const std::string& a, const std::string& b) {
        const auto sa = support_of(a), sb = support_of(b);
        return sa != sb ? sa > sb : a < b;
      });
    };
    bool changed = false;
    for (auto& [label, target] : canon) {
      auto next = final_of(target);
      if (next != target) {
        target = std::move(next);
        changed = true;
      }
    }
    if (!changed) {
      converged = true;
      break;
    }
  }

  auto c = build(counts, std::move(canon));
  c.iterations = iteration;
  c.converged = converged;
  c.conflicts = std::move(conflicts);
  return c;
}

std::string write_mapping_table(const Consolidation& c) {
  std::string out;
  for (const auto& [label, canonical] : c.canonical_of) out += label + "\t" + canonical + "\n";
  return out;
}

std::map<std::string, std::string> read_mapping_table(std::string_view text) {
  std::map<std::string, std::string> out;
  std::size_t line_no = 0;
  for (auto line : text::split_lines(text)) {
    ++line_no;
    if (text::trim(line).empty()) continue;
    auto tab = line.find('\t');
    if (tab == std::string_view::npos || line.find('\t', tab + 1) != std::string_view::npos) {
      throw Error(ErrorCode::kSchemaViolation,
                  "mapping table line " + std::to_string(line_no) + " needs two tab-separated columns");
    }
    out[normalize_label(line.substr(0, tab))] = normalize_label(line.substr(tab + 1));
  }
  return out;
}

namespace {

Ranked rank(const std::map<std::string, std::size_t>& counts) {
  Ranked r(counts.begin(), counts.end());
  std::stable_sort(r.begin(), r.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  return r;
}

}  // namespace

std::map<convstore::GroupKey, Ranked> aspect_frequencies(const Consolidation& c,
                                                         std::span<const AspectOccurrences> records) {
  std::map<convstore::GroupKey, std::map<std::string, std::size_t>> counts;
  for (const auto& r : records) {
    auto& g = counts[r.group];
    for (const auto& l : r.labels) ++g[c.resolve(l)];
  }
  std::map<convstore::GroupKey, Ranked> out;
  for (const auto& [group, g] : counts) out[group] = rank(g);
  return out;
}

IntentCorrelation aspect_intent_correlation(const Consolidation& c, std::span<const IntentItem> items,
                                            double low_threshold) {
  std::map<std::string, std::pair<double, std::size_t>> sums;
  std::map<std::string, std::size_t> low;
  bool any = false;
  for (const auto& item : items) {
    if (!item.intent) continue;
    any = true;
    std::set<std::string> aspects;
    for (const auto& l : item.labels) aspects.insert(c.resolve(l));
    for (const auto& a : aspects) {
      sums[a].first += *item.intent;
      ++sums[a].second;
      if (*item.intent <= low_threshold) ++low[a];
    }
  }
  if (!any) throw Error(ErrorCode::kNoAnnotations, "no intent annotations for aspect correlation");
  IntentCorrelation out;
  for (const auto& [a, s] : sums) out.mean_intent[a] = s.first / static_cast<double>(s.second);
  out.low_intent = rank(low);
  return out;
}

}  // namespace prewrite::taxonomy
