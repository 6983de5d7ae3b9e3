#include <algorithm>

#include "tstr/code_similarity.hpp"

namespace tstr {

namespace {

/// Whitespace tokenizer that keeps quoted regions and backslash escapes
/// inside one token and splits separators out as their own tokens.
std::vector<std::string> shell_tokens(std::string_view code, std::vector<std::string> separators) {
  std::sort(separators.begin(), separators.end(),
            [](const std::string& a, const std::string& b) { return a.size() > b.size(); });
  std::vector<std::string> tokens;
  std::string cur;
  auto flush = [&] {
    if (!cur.empty()) tokens.push_back(std::move(cur));
    cur.clear();
  };
  std::size_t i = 0;
  while (i < code.size()) {
    const char c = code[i];
    if (c == ' ' || c == '\t' || c == '\n' || c == '\r') {
      flush();
      ++i;
      continue;
    }
    if (c == '\\' && i + 1 < code.size()) {
      cur += code.substr(i, 2);
      i += 2;
      continue;
    }
    if (c == '"' || c == '\'') {
      const std::size_t close = code.find(c, i + 1);
      const std::size_t end = close == std::string_view::npos ? code.size() : close + 1;
      cur += code.substr(i, end - i);
      i = end;
      continue;
    }
    bool sep = false;
    for (const std::string& s : separators) {
      if (!s.empty() && code.substr(i).starts_with(s)) {
        flush();
        tokens.push_back(s);
        i += s.size();
        sep = true;
        break;
      }
    }
    if (sep) continue;
    cur += c;
    ++i;
  }
  flush();
  return tokens;
}

}  // namespace

std::vector<std::string> command_template(std::string_view code, const TemplateRules& rules) {
  std::vector<std::string> tokens = shell_tokens(code, rules.separators);
  bool segment_head = true;
  for (std::string& tok : tokens) {
    const bool is_sep =
        std::find(rules.separators.begin(), rules.separators.end(), tok) != rules.separators.end();
    if (is_sep) {
      segment_head = true;
    } else if (segment_head) {
      segment_head = false;
    } else if (!rules.flag_prefix.empty() && tok.starts_with(rules.flag_prefix)) {
      // flags stay literal
    } else {
      tok = rules.operand_token;
    }
  }
  return tokens;
}

double template_match(std::string_view c1, std::string_view c2, const TemplateRules& rules) {
  const auto a = command_template(c1, rules);
  const auto b = command_template(c2, rules);
  return normalized_edit_similarity<std::string>(std::span<const std::string>(a),
                                                 std::span<const std::string>(b));
}

}  // namespace tstr
