#include "rewardkit/templates.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "embedded_data.hpp"
#include "rewardkit/digest.hpp"
#include "rewardkit/error.hpp"

namespace rewardkit {
namespace {

constexpr Stage kAllStages[] = {Stage::kRewrite,           Stage::kAnalysis,
                                Stage::kPlanning,          Stage::kCommandGeneration,
                                Stage::kValidation,        Stage::kEvaluation};

bool is_placeholder_char(char c) { return (c >= 'A' && c <= 'Z') || c == '_'; }

// Length of a {NAME} token starting at pos, or 0.
std::size_t placeholder_at(std::string_view body, std::size_t pos) {
  if (body[pos] != '{') return 0;
  std::size_t end = pos + 1;
  while (end < body.size() && is_placeholder_char(body[end])) ++end;
  if (end == pos + 1 || end >= body.size() || body[end] != '}') return 0;
  return end - pos + 1;
}

std::string strip_final_newline(std::string body) {
  if (!body.empty() && body.back() == '\n') body.pop_back();
  return body;
}

std::string embedded_path(Stage stage, int version) {
  return "templates/v" + std::to_string(version) + "/" + std::string(to_string(stage)) + ".txt";
}

}  // namespace

std::string_view to_string(Stage stage) {
  switch (stage) {
    case Stage::kRewrite: return "rewrite";
    case Stage::kAnalysis: return "analysis";
    case Stage::kPlanning: return "planning";
    case Stage::kCommandGeneration: return "command_generation";
    case Stage::kValidation: return "validation";
    case Stage::kEvaluation: return "evaluation";
  }
  return "?";
}

Stage parse_stage(std::string_view name) {
  for (auto s : kAllStages) {
    if (to_string(s) == name) return s;
  }
  throw Error(ErrorKind::kConfig, "unknown stage '" + std::string(name) + "'");
}

std::string PromptTemplate::digest() const {
  return sha256_hex(std::string(to_string(stage)) + '\0' + std::to_string(version) + '\0' + body);
}

std::vector<std::string> PromptTemplate::placeholders() const {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < body.size(); ++i) {
    if (auto len = placeholder_at(body, i)) {
      auto name = body.substr(i + 1, len - 2);
      if (std::find(out.begin(), out.end(), name) == out.end()) out.push_back(name);
      i += len - 1;
    }
  }
  return out;
}

std::string render(const PromptTemplate& tmpl, const Bindings& bindings) {
  const std::string_view body = tmpl.body;
  std::string out;
  out.reserve(body.size() * 2);
  std::size_t i = 0;
  while (i < body.size()) {
    if (auto len = placeholder_at(body, i)) {
      auto name = body.substr(i + 1, len - 2);
      auto it = bindings.find(name);
      if (it == bindings.end()) {
        throw Error(ErrorKind::kConfig, "unbound placeholder {" + std::string(name) + "} in " +
                                            std::string(to_string(tmpl.stage)) + " template");
      }
      out += it->second;
      i += len;
    } else {
      out += body[i++];
    }
  }
  return out;
}

TemplateSet TemplateSet::builtin(int version) {
  TemplateSet set;
  set.version_ = version;
  for (auto stage : kAllStages) {
    auto body = detail::embedded_file(embedded_path(stage, version));
    if (!body) {
      throw Error(ErrorKind::kConfig, "no built-in " + std::string(to_string(stage)) +
                                          " template for version " + std::to_string(version));
    }
    set.templates_[stage] = PromptTemplate{stage, version, strip_final_newline(std::string(*body))};
  }
  return set;
}

TemplateSet TemplateSet::load(const std::filesystem::path& root, int version) {
  TemplateSet set;
  set.version_ = version;
  for (auto stage : kAllStages) {
    const auto path = root / ("v" + std::to_string(version)) / (std::string(to_string(stage)) + ".txt");
    std::string body;
    if (std::ifstream in(path, std::ios::binary); in) {
      std::ostringstream ss;
      ss << in.rdbuf();
      body = ss.str();
    } else if (auto builtin = detail::embedded_file(embedded_path(stage, version))) {
      body = std::string(*builtin);
    } else {
      throw Error(ErrorKind::kConfig, "missing template " + path.string());
    }
    set.templates_[stage] = PromptTemplate{stage, version, strip_final_newline(std::move(body))};
  }
  return set;
}

const PromptTemplate& TemplateSet::get(Stage stage) const { return templates_.at(stage); }

std::vector<std::string> builtin_verb_lexicon() {
  std::vector<std::string> verbs;
  std::istringstream in{std::string(detail::embedded_file("verbs.txt").value_or(""))};
  for (std::string line; std::getline(in, line);) {
    if (!line.empty()) verbs.push_back(line);
  }
  return verbs;
}

}  // namespace rewardkit
