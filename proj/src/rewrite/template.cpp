#include "prewrite/rewrite/template.hpp"

#include <algorithm>
#include <vector>

#include "prewrite/common/error.hpp"
#include "prewrite/common/hash.hpp"
#include "prewrite/common/jsonl.hpp"
#include "prewrite/common/text.hpp"

namespace prewrite::rewrite {

namespace embedded {
extern const std::string_view kRewriteTemplateText;
extern const std::string_view kJudgeTemplateText;
extern const std::string_view kHumanPairwiseTemplateText;
extern const std::string_view kIntentTemplateText;
extern const std::string_view kPlausibilityTemplateText;
}  // namespace embedded

PromptTemplate::PromptTemplate(std::string template_id, std::string version, std::string body)
    : id_(std::move(template_id)),
      version_(std::move(version)),
      body_(std::move(body)),
      hash_(sha256_hex(body_)) {}

PromptTemplate PromptTemplate::parse(std::string_view file_text) {
  auto lines = text::split_lines(file_text);
  if (lines.empty() || text::trim(lines[0]) != "---") {
    throw Error(ErrorCode::kConfig, "template is missing its front-matter block");
  }
  std::string id;
  std::string version;
  std::size_t i = 1;
  for (; i < lines.size() && text::trim(lines[i]) != "---"; ++i) {
    auto line = lines[i];
    auto colon = line.find(':');
    if (colon == std::string_view::npos) {
      throw Error(ErrorCode::kConfig, "bad front-matter line: " + std::string(line));
    }
    auto key = text::trim(line.substr(0, colon));
    auto value = std::string(text::trim(line.substr(colon + 1)));
    if (key == "template_id") id = value;
    if (key == "version") version = value;
  }
  if (i == lines.size()) throw Error(ErrorCode::kConfig, "unterminated front-matter block");
  if (id.empty() || version.empty()) {
    throw Error(ErrorCode::kConfig, "front matter needs template_id and version");
  }
  // Body: everything after the closing fence line, byte for byte.
  std::size_t offset = 0;
  for (std::size_t k = 0; k <= i; ++k) {
    offset = file_text.find('\n', offset);
    if (offset == std::string_view::npos) {
      offset = file_text.size();
      break;
    }
    ++offset;
  }
  return PromptTemplate(std::move(id), std::move(version), std::string(file_text.substr(offset)));
}

PromptTemplate PromptTemplate::load(const std::filesystem::path& path) {
  return parse(read_text_file(path));
}

std::string PromptTemplate::to_file_text() const {
  return "---\ntemplate_id: " + id_ + "\nversion: " + version_ + "\n---\n" + body_;
}

void PromptTemplate::require_placeholders(std::initializer_list<std::string_view> names) const {
  for (auto name : names) {
    const std::string token = "{" + std::string(name) + "}";
    const auto n = text::count_occurrences(body_, token);
    if (n != 1) {
      throw Error(ErrorCode::kConfig, "template '" + id_ + "' must contain " + token +
                                          " exactly once (found " + std::to_string(n) + ")");
    }
  }
}

std::string PromptTemplate::render(const std::map<std::string, std::string>& values) const {
  struct Hit {
    std::size_t pos;
    std::size_t len;
    const std::string* value;
  };
  std::vector<Hit> hits;
  for (const auto& [name, value] : values) {
    const std::string token = "{" + name + "}";
    for (auto pos = body_.find(token); pos != std::string::npos;
         pos = body_.find(token, pos + token.size())) {
      hits.push_back({pos, token.size(), &value});
    }
  }
  std::sort(hits.begin(), hits.end(), [](const Hit& a, const Hit& b) { return a.pos < b.pos; });
  std::string out;
  std::size_t cursor = 0;
  for (const auto& h : hits) {
    if (h.pos < cursor) continue;
    out.append(body_, cursor, h.pos - cursor);
    out += *h.value;
    cursor = h.pos + h.len;
  }
  out.append(body_, cursor, std::string::npos);
  return out;
}

const PromptTemplate& default_rewrite_template() {
  static const PromptTemplate t = [] {
    auto p = PromptTemplate::parse(embedded::kRewriteTemplateText);
    p.require_placeholders({"query_context", "target_query"});
    return p;
  }();
  return t;
}

const PromptTemplate& default_judge_template() {
  static const PromptTemplate t = [] {
    auto p = PromptTemplate::parse(embedded::kJudgeTemplateText);
    p.require_placeholders({"history", "ending_1", "ending_2"});
    return p;
  }();
  return t;
}

const PromptTemplate& default_human_pairwise_template() {
  static const PromptTemplate t = PromptTemplate::parse(embedded::kHumanPairwiseTemplateText);
  return t;
}

const PromptTemplate& default_intent_template() {
  static const PromptTemplate t = PromptTemplate::parse(embedded::kIntentTemplateText);
  return t;
}

const PromptTemplate& default_plausibility_template() {
  static const PromptTemplate t = PromptTemplate::parse(embedded::kPlausibilityTemplateText);
  return t;
}

std::string_view format_reminder() {
  return "\n\nYour previous reply did not follow the OUTPUT TEMPLATE. Do not answer the "
         "Query. Reply only with the filled OUTPUT TEMPLATE: a Modification line containing "
         "NO MOD, SOME MOD or HEAVY MOD, the aspects table, and for SOME MOD or HEAVY MOD at "
         "least one Rewrite block with Information Added and Assumptions.";
}

}  // namespace prewrite::rewrite
