#include <regex>
#include <set>

#include "prewrite/common/text.hpp"
#include "prewrite/rewrite/rewriter.hpp"

namespace prewrite::rewrite {

namespace {

constexpr std::string_view kStartMarker = "<START OF OUTPUT TEMPLATE>";
constexpr std::string_view kEndMarker = "<END OF OUTPUT TEMPLATE>";

using Row = std::vector<std::string>;

[[noreturn]] void fail(ErrorCode code, const std::string& message, std::string_view raw) {
  throw RewriteParseError(code, message, std::string(raw));
}

std::string strip_emphasis(std::string_view s) {
  std::string out;
  for (char c : text::trim(s)) {
    if (c != '*' && c != '`') out.push_back(c);
  }
  return std::string(text::trim(out));
}

bool is_table_row(std::string_view line) {
  auto t = text::trim(line);
  return t.size() >= 2 && t.front() == '|';
}

Row split_cells(std::string_view line) {
  auto t = text::trim(line);
  t.remove_prefix(1);  // leading '|'
  if (!t.empty() && t.back() == '|' && !(t.size() >= 2 && t[t.size() - 2] == '\\')) {
    t.remove_suffix(1);
  }
  Row cells;
  std::string cur;
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (t[i] == '\\' && i + 1 < t.size() && t[i + 1] == '|') {
      cur.push_back('|');
      ++i;
    } else if (t[i] == '|') {
      cells.emplace_back(text::trim(cur));
      cur.clear();
    } else {
      cur.push_back(t[i]);
    }
  }
  cells.emplace_back(text::trim(cur));
  return cells;
}

bool is_separator(const Row& row) {
  if (row.empty()) return false;
  for (const auto& c : row) {
    if (c.empty()) return false;
    for (char ch : c) {
      if (ch != '-' && ch != ':' && ch != ' ') return false;
    }
  }
  return true;
}

bool is_header(const Row& row) {
  static const std::set<std::string> kHeaders = {
      "aspect", "aspects", "assumption", "assumptions", "effective aspect",
      "effective aspects", "aspect of improvement", "aspects of improvement"};
  return !row.empty() && kHeaders.count(text::to_lower(strip_emphasis(row[0]))) > 0;
}

std::vector<Row> data_rows(const std::vector<Row>& table) {
  std::vector<Row> out;
  for (std::size_t i = 0; i < table.size(); ++i) {
    const bool header_by_position = i == 0 && table.size() >= 2 && is_separator(table[1]);
    if (header_by_position || is_separator(table[i]) || is_header(table[i])) continue;
    out.push_back(table[i]);
  }
  return out;
}

enum class Marker { kNone, kRewrite, kHeading, kInfoAdded, kAssumptions, kPreamble };

struct Classified {
  Marker marker = Marker::kNone;
  std::string rest;
};

Classified classify(std::string_view line) {
  auto s = text::trim(line);
  if (s.empty() || s.front() == '|') return {};
  while (!s.empty() && (s.front() == '#' || s.front() == '*' || s.front() == '-' ||
                        s.front() == '>' || s.front() == '_' || s.front() == ' ')) {
    s.remove_prefix(1);
  }
  const auto colon = s.find(':');
  if (colon == std::string_view::npos || colon > 40) return {};
  const std::string key = text::to_lower(strip_emphasis(s.substr(0, colon)));
  // Only leading markup is dropped; emphasis inside the value is content.
  auto tail = text::trim(s.substr(colon + 1));
  while (!tail.empty() && (tail.front() == '*' || tail.front() == ' ')) tail.remove_prefix(1);
  std::string rest(text::trim(tail));

  static const std::regex kNumbered(R"(^(rewrite|rewritten (query|prompt))\s*#?\s*\d+$)");
  if (key == "rewrite" || key == "rewritten query" || key == "rewritten prompt") {
    return {Marker::kRewrite, rest};
  }
  if (std::regex_match(key, kNumbered)) {
    return {rest.empty() ? Marker::kHeading : Marker::kRewrite, rest};
  }
  if (key == "information added") return {Marker::kInfoAdded, rest};
  if (key == "assumptions" || key == "assumption") return {Marker::kAssumptions, rest};
  if (key == "aspects" || key == "aspects of improvement" || key == "effective aspects" ||
      key == "modification" || key == "modification level" || key == "mod level") {
    return {Marker::kPreamble, rest};
  }
  return {};
}

bool is_placeholder(std::string_view s) {
  const auto l = text::to_lower(strip_emphasis(s));
  return l.empty() || l == "n/a" || l == "none" || l == "-" || l == "na";
}

std::string_view output_region(std::string_view text) {
  const auto upper = text::to_upper(text);
  auto start = upper.find(kStartMarker);
  std::size_t begin = 0;
  if (start != std::string::npos) {
    auto nl = upper.find('\n', start);
    begin = nl == std::string::npos ? upper.size() : nl + 1;
  }
  auto end = upper.find(kEndMarker, begin);
  if (end == std::string::npos) end = upper.size();
  return text.substr(begin, end - begin);
}

std::optional<ModLevel> find_mod_level(std::string_view region) {
  static const std::regex kMod(R"((^|[^A-Za-z])(NO|SOME|HEAVY)[ _-]?MOD([^A-Za-z]|$))",
                               std::regex::icase);
  std::string s(region);
  std::smatch m;
  if (!std::regex_search(s, m, kMod)) return std::nullopt;
  const auto word = text::to_upper(m[2].str());
  if (word == "NO") return ModLevel::kNoMod;
  if (word == "SOME") return ModLevel::kSomeMod;
  return ModLevel::kHeavyMod;
}

struct RawRewrite {
  std::vector<std::string> text_lines;
  std::optional<std::string> info;
  std::vector<Row> assumption_rows;
};

std::string escape_cell(std::string_view s) {
  auto out = text::replace_all(std::string(s), "|", "\\|");
  out = text::replace_all(std::move(out), "\n", " ");
  return out;
}

}  // namespace

RewriteRecord parse_rewrite_output(std::string_view raw) {
  const auto region = output_region(raw);
  const auto mod = find_mod_level(region);
  if (!mod) {
    fail(ErrorCode::kParseNoModLevel,
         "no NO MOD / SOME MOD / HEAVY MOD token (the model may have answered the query instead)",
         raw);
  }

  enum class State { kPreamble, kRewriteText, kBlock, kIgnore };
  State state = State::kPreamble;
  std::vector<RawRewrite> raws;
  std::vector<Row> aspect_rows;
  std::vector<Row> table;

  auto flush = [&] {
    if (table.empty()) return;
    auto rows = data_rows(table);
    table.clear();
    if (state == State::kPreamble) {
      aspect_rows.insert(aspect_rows.end(), rows.begin(), rows.end());
    } else if (state == State::kBlock && !raws.empty()) {
      auto& dst = raws.back().assumption_rows;
      dst.insert(dst.end(), rows.begin(), rows.end());
    }
  };

  for (auto line : text::split_lines(region)) {
    if (is_table_row(line) && state != State::kRewriteText) {
      table.push_back(split_cells(line));
      continue;
    }
    flush();
    auto c = classify(line);
    switch (c.marker) {
      case Marker::kRewrite:
        raws.emplace_back();
        if (!c.rest.empty()) raws.back().text_lines.push_back(c.rest);
        state = State::kRewriteText;
        break;
      case Marker::kHeading:
        state = State::kIgnore;
        break;
      case Marker::kInfoAdded:
        if (!raws.empty()) raws.back().info = c.rest;
        state = raws.empty() ? State::kIgnore : State::kBlock;
        break;
      case Marker::kAssumptions:
        state = raws.empty() ? State::kIgnore : State::kBlock;
        break;
      case Marker::kPreamble:
        if (raws.empty()) state = State::kPreamble;
        break;
      case Marker::kNone:
        if (state == State::kRewriteText) raws.back().text_lines.emplace_back(line);
        break;
    }
  }
  flush();

  RewriteRecord rec;
  rec.mod_level = *mod;
  rec.raw_output = std::string(raw);
  const auto polarity =
      *mod == ModLevel::kNoMod ? Polarity::kAlreadyEffective : Polarity::kImprovementNeeded;
  for (const auto& row : aspect_rows) {
    Aspect a;
    a.raw_label = std::string(text::trim(row[0]));
    if (a.raw_label.size() >= 4 && a.raw_label.starts_with("**") && a.raw_label.ends_with("**")) {
      a.raw_label = std::string(text::trim(a.raw_label.substr(2, a.raw_label.size() - 4)));
    }
    if (a.raw_label.empty()) continue;
    a.explanation = row.size() > 1 ? row[1] : std::string();
    a.polarity = polarity;
    rec.aspects.push_back(std::move(a));
  }

  for (auto& r : raws) {
    std::string joined;
    for (std::size_t i = 0; i < r.text_lines.size(); ++i) {
      if (i) joined += '\n';
      joined += r.text_lines[i];
    }
    std::string body(text::trim(joined));
    if (is_placeholder(body)) continue;

    Rewrite rw;
    rw.text = std::move(body);
    for (const auto& row : r.assumption_rows) {
      if (row.empty() || is_placeholder(row[0])) continue;
      if (row.size() < 3) {
        fail(ErrorCode::kParseBadEnum, "assumption row lacks salience/plausibility: " + row[0], raw);
      }
      auto sal = parse_level(strip_emphasis(row[1]));
      auto pl = parse_level(strip_emphasis(row[2]));
      if (!sal || !pl) {
        fail(ErrorCode::kParseBadEnum,
             "unrecognized salience/plausibility '" + row[1] + "'/'" + row[2] + "'", raw);
      }
      rw.assumptions.push_back({row[0], *sal, *pl});
    }
    if (r.info) {
      auto v = text::to_upper(strip_emphasis(*r.info));
      auto word_end = v.find_first_not_of("ABCDEFGHIJKLMNOPQRSTUVWXYZ");
      auto word = v.substr(0, word_end);
      if (word == "YES") {
        rw.information_added = true;
      } else if (word == "NO") {
        rw.information_added = false;
      } else {
        fail(ErrorCode::kParseBadEnum, "Information Added must be YES or NO, got '" + *r.info + "'",
             raw);
      }
    } else {
      rw.information_added = !rw.assumptions.empty();
    }
    if (!rw.information_added && !rw.assumptions.empty()) {
      fail(ErrorCode::kParseInconsistent, "assumptions listed although Information Added is NO", raw);
    }
    rec.rewrites.push_back(std::move(rw));
  }

  if (rec.mod_level == ModLevel::kNoMod && !rec.rewrites.empty()) {
    fail(ErrorCode::kParseInconsistent, "NO MOD output proposes rewrites", raw);
  }
  if (rec.mod_level != ModLevel::kNoMod && rec.rewrites.empty()) {
    fail(ErrorCode::kParseNoRewrite,
         std::string(to_string(rec.mod_level)) + " output has no Rewrite block", raw);
  }
  return rec;
}

std::string render_rewrite_output(const RewriteRecord& record) {
  std::string out;
  out += kStartMarker;
  out += "\nModification: ";
  out += to_string(record.mod_level);
  out += "\n\nAspects:\n|aspect|explanation|\n|---|---|\n";
  for (const auto& a : record.aspects) {
    out += "|" + escape_cell(a.raw_label) + "|" + escape_cell(a.explanation) + "|\n";
  }
  for (const auto& rw : record.rewrites) {
    out += "\nRewrite: " + rw.text + "\n";
    out += "Information Added: ";
    out += rw.information_added ? "YES" : "NO";
    out += "\n";
    if (!rw.information_added) {
      out += "Assumptions: None\n";
      continue;
    }
    out += "Assumptions:\n|assumption|salience|plausibility|\n|---|---|---|\n";
    for (const auto& a : rw.assumptions) {
      out += "|" + escape_cell(a.text) + "|" + std::string(to_string(a.salience)) + "|" +
             std::string(to_string(a.plausibility)) + "|\n";
    }
  }
  out += "\n";
  out += kEndMarker;
  out += "\n";
  return out;
}

}  // namespace prewrite::rewrite
