#include "prewrite/rewrite/record.hpp"

#include "prewrite/common/text.hpp"

namespace prewrite::rewrite {

std::string_view to_string(ModLevel m) {
  switch (m) {
    case ModLevel::kNoMod: return "NO MOD";
    case ModLevel::kSomeMod: return "SOME MOD";
    case ModLevel::kHeavyMod: return "HEAVY MOD";
  }
  return "NO MOD";
}

std::string_view to_string(Polarity p) {
  return p == Polarity::kAlreadyEffective ? "ALREADY_EFFECTIVE" : "IMPROVEMENT_NEEDED";
}

std::string_view to_string(Level l) {
  switch (l) {
    case Level::kHigh: return "HIGH";
    case Level::kMid: return "MID";
    case Level::kLow: return "LOW";
  }
  return "MID";
}

std::optional<ModLevel> parse_mod_level(std::string_view s) {
  for (auto m : {ModLevel::kNoMod, ModLevel::kSomeMod, ModLevel::kHeavyMod}) {
    if (to_string(m) == s) return m;
  }
  return std::nullopt;
}

std::optional<Level> parse_level(std::string_view s) {
  const auto upper = text::to_upper(text::trim(s));
  if (upper == "HIGH") return Level::kHigh;
  if (upper == "MID") return Level::kMid;
  if (upper == "LOW") return Level::kLow;
  return std::nullopt;
}

bool RewriteRecord::same_content(const RewriteRecord& other) const {
  return mod_level == other.mod_level && aspects == other.aspects && rewrites == other.rewrites;
}

json to_json(const RewriteRecord& r) {
  json aspects = json::array();
  for (const auto& a : r.aspects) {
    aspects.push_back({{"label", a.raw_label},
                       {"explanation", a.explanation},
                       {"polarity", std::string(to_string(a.polarity))}});
  }
  json rewrites = json::array();
  for (const auto& rw : r.rewrites) {
    json assumptions = json::array();
    for (const auto& a : rw.assumptions) {
      assumptions.push_back({{"text", a.text},
                             {"salience", std::string(to_string(a.salience))},
                             {"plausibility", std::string(to_string(a.plausibility))}});
    }
    rewrites.push_back({{"text", rw.text},
                        {"information_added", rw.information_added},
                        {"assumptions", std::move(assumptions)}});
  }
  return {{"conv_id", r.candidate_ref.conv_id},
          {"target_index", r.candidate_ref.target_index},
          {"mod_level", std::string(to_string(r.mod_level))},
          {"aspects", std::move(aspects)},
          {"rewrites", std::move(rewrites)},
          {"raw_output", r.raw_output},
          {"rewriter_endpoint", r.rewriter_endpoint},
          {"attempts", r.attempts},
          {"dropped_history_turns", r.dropped_history_turns}};
}

RewriteRecord rewrite_record_from_json(const json& j) {
  RewriteRecord r;
  r.candidate_ref.conv_id = j.at("conv_id").get<std::string>();
  r.candidate_ref.target_index = j.at("target_index").get<int>();
  auto mod = parse_mod_level(j.at("mod_level").get<std::string>());
  if (!mod) throw Error(ErrorCode::kSchemaViolation, "bad mod_level in rewrite record");
  r.mod_level = *mod;
  for (const auto& a : j.at("aspects")) {
    Aspect asp;
    asp.raw_label = a.at("label").get<std::string>();
    asp.explanation = a.value("explanation", std::string());
    asp.polarity = a.value("polarity", std::string()) == "ALREADY_EFFECTIVE"
                       ? Polarity::kAlreadyEffective
                       : Polarity::kImprovementNeeded;
    r.aspects.push_back(std::move(asp));
  }
  for (const auto& rj : j.at("rewrites")) {
    Rewrite rw;
    rw.text = rj.at("text").get<std::string>();
    rw.information_added = rj.value("information_added", false);
    for (const auto& aj : rj.value("assumptions", json::array())) {
      auto sal = parse_level(aj.at("salience").get<std::string>());
      auto pl = parse_level(aj.at("plausibility").get<std::string>());
      if (!sal || !pl) throw Error(ErrorCode::kSchemaViolation, "bad assumption level");
      rw.assumptions.push_back({aj.at("text").get<std::string>(), *sal, *pl});
    }
    r.rewrites.push_back(std::move(rw));
  }
  r.raw_output = j.value("raw_output", std::string());
  r.rewriter_endpoint = j.value("rewriter_endpoint", std::string());
  r.attempts = j.value("attempts", 0);
  r.dropped_history_turns = j.value("dropped_history_turns", 0);
  return r;
}

}  // namespace prewrite::rewrite
