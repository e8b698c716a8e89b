#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace rewardkit {

enum class Stage {
  kRewrite,
  kAnalysis,
  kPlanning,
  kCommandGeneration,
  kValidation,
  kEvaluation,
};

std::string_view to_string(Stage stage);
Stage parse_stage(std::string_view name);

struct PromptTemplate {
  Stage stage = Stage::kRewrite;
  int version = 1;
  std::string body;

  // Digest of (stage, version, body); recorded in transcripts and config digests.
  std::string digest() const;
  // Names of the {UPPER_CASE} placeholders in body, in first-seen order.
  std::vector<std::string> placeholders() const;
};

using Bindings = std::map<std::string, std::string, std::less<>>;

// Single pass substitution of {NAME} placeholders. Substituted values are not
// rescanned. Throws Error(kConfig) naming the first unbound placeholder.
std::string render(const PromptTemplate& tmpl, const Bindings& bindings);

// Templates keyed by stage. Files are looked up as
// <root>/v<version>/<stage>.txt; stages without a file fall back to the
// built-in copy of that version.
class TemplateSet {
 public:
  static TemplateSet builtin(int version = 1);
  static TemplateSet load(const std::filesystem::path& root, int version = 1);

  const PromptTemplate& get(Stage stage) const;
  int version() const { return version_; }

 private:
  int version_ = 1;
  std::map<Stage, PromptTemplate> templates_;
};

// Built-in verb list used by the imperative-command gate.
std::vector<std::string> builtin_verb_lexicon();

}  // namespace rewardkit
