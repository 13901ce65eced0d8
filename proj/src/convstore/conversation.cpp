#include "prewrite/convstore/conversation.hpp"

#include <fstream>
#include <set>
#include <unordered_set>

#include "prewrite/common/error.hpp"
#include "prewrite/common/text.hpp"

namespace prewrite::convstore {

namespace {

const std::string& require_string(const json& obj, const char* field, const std::string& where) {
  auto it = obj.find(field);
  if (it == obj.end()) {
    throw Error(ErrorCode::kSchemaViolation, where + ": missing field '" + field + "'");
  }
  if (!it->is_string()) {
    throw Error(ErrorCode::kSchemaViolation, where + ": field '" + field + "' is not a string");
  }
  return it->get_ref<const std::string&>();
}

json without(const json& obj, std::initializer_list<const char*> known) {
  json extra = json::object();
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    bool is_known = false;
    for (const char* k : known) is_known = is_known || it.key() == k;
    if (!is_known) extra[it.key()] = it.value();
  }
  return extra;
}

}  // namespace

std::string_view to_string(SatLabel label) {
  switch (label) {
    case SatLabel::kSat: return "SAT";
    case SatLabel::kDsat: return "DSAT";
    case SatLabel::kNone: return "NONE";
  }
  return "NONE";
}

std::optional<SatLabel> parse_sat_label(std::string_view s) {
  if (s == "SAT") return SatLabel::kSat;
  if (s == "DSAT") return SatLabel::kDsat;
  if (s == "NONE") return SatLabel::kNone;
  return std::nullopt;
}

std::string_view to_string(Depth d) { return d == Depth::kDeep ? "DEEP" : "SHALLOW"; }

Conversation conversation_from_json(const json& j) {
  if (!j.is_object()) throw Error(ErrorCode::kSchemaViolation, "record is not an object");
  Conversation c;
  c.conv_id = require_string(j, "conv_id", "record");
  if (c.conv_id.empty()) throw Error(ErrorCode::kSchemaViolation, "empty conv_id");
  const std::string where = "conversation '" + c.conv_id + "'";
  c.domain = require_string(j, "domain", where);
  c.intent = require_string(j, "intent", where);
  c.language = require_string(j, "language", where);

  auto turns = j.find("turns");
  if (turns == j.end() || !turns->is_array()) {
    throw Error(ErrorCode::kSchemaViolation, where + ": 'turns' must be an array");
  }
  if (turns->empty()) throw Error(ErrorCode::kSchemaViolation, where + ": no turns");

  int index = 0;
  for (const auto& tj : *turns) {
    ++index;
    const std::string twhere = where + " turn " + std::to_string(index);
    if (!tj.is_object()) throw Error(ErrorCode::kSchemaViolation, twhere + ": not an object");
    Turn t;
    t.index = index;
    t.user_text = require_string(tj, "user", twhere);
    t.model_text = require_string(tj, "model", twhere);
    const auto& sat = require_string(tj, "sat", twhere);
    auto label = parse_sat_label(sat);
    if (!label) throw Error(ErrorCode::kSchemaViolation, twhere + ": bad sat label '" + sat + "'");
    t.sat = *label;
    if (t.user_text.empty()) {
      throw Error(ErrorCode::kSchemaViolation, twhere + ": empty user text");
    }
    t.extra = without(tj, {"user", "model", "sat"});
    c.turns.push_back(std::move(t));
  }
  for (std::size_t i = 0; i + 1 < c.turns.size(); ++i) {
    if (c.turns[i].model_text.empty()) {
      throw Error(ErrorCode::kSchemaViolation,
                  where + ": empty model reply before the final turn (turn " +
                      std::to_string(i + 1) + ")");
    }
  }
  c.extra = without(j, {"conv_id", "domain", "intent", "language", "turns"});
  return c;
}

json conversation_to_json(const Conversation& c) {
  json j = c.extra;
  j["conv_id"] = c.conv_id;
  j["domain"] = c.domain;
  j["intent"] = c.intent;
  j["language"] = c.language;
  json turns = json::array();
  for (const auto& t : c.turns) {
    json tj = t.extra;
    tj["user"] = t.user_text;
    tj["model"] = t.model_text;
    tj["sat"] = std::string(to_string(t.sat));
    turns.push_back(std::move(tj));
  }
  j["turns"] = std::move(turns);
  return j;
}

ParseReport parse_log(std::istream& in) {
  ParseReport report;
  std::unordered_set<std::string> seen;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (text::trim(line).empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      report.issues.push_back({line_no, "SCHEMA_VIOLATION", e.what(), ""});
      continue;
    }
    std::string id_hint;
    if (j.is_object() && j.contains("conv_id") && j["conv_id"].is_string()) {
      id_hint = j["conv_id"].get<std::string>();
    }
    try {
      auto conv = conversation_from_json(j);
      if (!seen.insert(conv.conv_id).second) {
        report.issues.push_back({line_no, std::string(to_string(ErrorCode::kDuplicateId)),
                                 "duplicate conv_id '" + conv.conv_id + "'", conv.conv_id});
        continue;
      }
      report.conversations.push_back(std::move(conv));
    } catch (const Error& e) {
      report.issues.push_back({line_no, std::string(to_string(e.code())), e.what(), id_hint});
    }
  }
  if (in.bad()) throw Error(ErrorCode::kIoFailure, "read failure after line " + std::to_string(line_no));
  return report;
}

ParseReport parse_log_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIoFailure, "cannot open " + path);
  return parse_log(in);
}

void serialize_log(std::ostream& out, std::span<const Conversation> conversations) {
  for (const auto& c : conversations) out << dump_line(conversation_to_json(c)) << '\n';
}

FilterReport apply_filter(std::vector<Conversation> conversations, const IngestFilter& filter) {
  FilterReport report;
  if (!filter.enabled) {
    report.kept = std::move(conversations);
    return report;
  }
  for (auto& c : conversations) {
    if (!filter.language.empty() && !text::iequals(c.language, filter.language)) {
      ++report.dropped["language"];
      continue;
    }
    if (filter.drop_toxic) {
      auto it = c.extra.find("toxic");
      if (it != c.extra.end() && it->is_boolean() && it->get<bool>()) {
        ++report.dropped["toxic"];
        continue;
      }
    }
    if (c.user_turns() < filter.min_turns) {
      ++report.dropped["min_turns"];
      continue;
    }
    if (filter.require_dsat) {
      bool any = false;
      for (const auto& t : c.turns) any = any || t.sat == SatLabel::kDsat;
      if (!any) {
        ++report.dropped["no_dsat"];
        continue;
      }
    }
    report.kept.push_back(std::move(c));
  }
  return report;
}

std::vector<CandidateTurn> select_candidates(const Conversation& conv) {
  std::vector<CandidateTurn> out;
  std::set<int> targets;
  for (const auto& t : conv.turns) {
    if (t.sat != SatLabel::kDsat || t.index < 2) continue;
    const int target = t.index - 1;
    if (!targets.insert(target).second) continue;
    CandidateTurn c;
    c.conv_id = conv.conv_id;
    c.dsat_index = t.index;
    c.target_index = target;
    c.history.assign(conv.turns.begin(), conv.turns.begin() + (target - 1));
    c.target = conv.turns[static_cast<std::size_t>(target - 1)];
    out.push_back(std::move(c));
  }
  return out;
}

Slice slice(const Conversation& conv, const CandidateTurn& candidate) {
  const auto t = static_cast<std::size_t>(candidate.target_index);
  if (candidate.conv_id != conv.conv_id || t < 1 || t > conv.turns.size()) {
    throw Error(ErrorCode::kInvalidRequest, "candidate does not belong to conversation");
  }
  Slice s;
  s.history.assign(conv.turns.begin(), conv.turns.begin() + static_cast<long>(t - 1));
  s.target = conv.turns[t - 1];
  s.tail.assign(conv.turns.begin() + static_cast<long>(t), conv.turns.end());
  return s;
}

std::map<GroupKey, double> rewrite_index(std::span<const std::pair<GroupKey, int>> group_targets) {
  std::map<GroupKey, std::pair<long long, long long>> acc;  // sum, count
  for (const auto& [key, target] : group_targets) {
    auto& [sum, count] = acc[key];
    sum += target;
    ++count;
  }
  std::map<GroupKey, double> out;
  for (const auto& [key, sc] : acc) {
    out[key] = static_cast<double>(sc.first) / static_cast<double>(sc.second);
  }
  return out;
}

Depth depth_bucket(const Conversation& conv) {
  return conv.user_turns() >= kDeepThreshold ? Depth::kDeep : Depth::kShallow;
}

Dataset::Dataset(std::vector<Conversation> conversations)
    : conversations_(std::move(conversations)) {
  for (std::size_t i = 0; i < conversations_.size(); ++i) {
    if (!index_.emplace(conversations_[i].conv_id, i).second) {
      throw Error(ErrorCode::kDuplicateId, "duplicate conv_id '" + conversations_[i].conv_id + "'");
    }
  }
}

const Conversation* Dataset::find(std::string_view conv_id) const {
  auto it = index_.find(std::string(conv_id));
  return it == index_.end() ? nullptr : &conversations_[it->second];
}

const Conversation& Dataset::at(std::string_view conv_id) const {
  const auto* c = find(conv_id);
  if (!c) throw Error(ErrorCode::kSchemaViolation, "unknown conv_id '" + std::string(conv_id) + "'");
  return *c;
}

}  // namespace prewrite::convstore
