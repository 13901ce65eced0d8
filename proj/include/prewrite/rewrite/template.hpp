#pragma once

#include <filesystem>
#include <initializer_list>
#include <map>
#include <string>
#include <string_view>

namespace prewrite::rewrite {

/// A prompt body with `{name}` placeholders plus front-matter identity.
///
/// On disk a template is plain text preceded by a front-matter block:
///
///     ---
///     template_id: rewrite
///     version: 1
///     ---
///     <body>
class PromptTemplate {
 public:
  PromptTemplate() = default;
  PromptTemplate(std::string template_id, std::string version, std::string body);

  /// Throws Error(kConfig) on malformed front matter.
  static PromptTemplate parse(std::string_view file_text);
  static PromptTemplate load(const std::filesystem::path& path);

  std::string to_file_text() const;

  const std::string& id() const { return id_; }
  const std::string& version() const { return version_; }
  const std::string& body() const { return body_; }
  /// SHA-256 of the body.
  const std::string& version_hash() const { return hash_; }

  /// Throws Error(kConfig) unless every placeholder occurs exactly once.
  void require_placeholders(std::initializer_list<std::string_view> names) const;

  /// Single-pass substitution: values are inserted verbatim and never
  /// rescanned, so placeholder-like text inside a value is left alone.
  std::string render(const std::map<std::string, std::string>& values) const;

 private:
  std::string id_;
  std::string version_;
  std::string body_;
  std::string hash_;
};

/// Rewriter instruction with {query_context} and {target_query}.
const PromptTemplate& default_rewrite_template();
/// Machine judge instruction with {history}, {ending_1} and {ending_2}.
const PromptTemplate& default_judge_template();
/// Condensed pairwise instruction shown to human annotators.
const PromptTemplate& default_human_pairwise_template();
const PromptTemplate& default_intent_template();
const PromptTemplate& default_plausibility_template();

/// Appended to the rewrite request when the first reply could not be parsed.
std::string_view format_reminder();

}  // namespace prewrite::rewrite
