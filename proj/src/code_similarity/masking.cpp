#include <json.hpp>
#include <set>

#include "tstr/code_similarity.hpp"
#include "tstr/digest.hpp"
#include "tstr/error.hpp"

namespace tstr {

namespace {

bool is_ident_start(unsigned char c) { return std::isalpha(c) || c == '_' || c >= 0x80; }
bool is_ident_char(unsigned char c) { return std::isalnum(c) || c == '_' || c >= 0x80; }
bool is_digit(unsigned char c) { return c >= '0' && c <= '9'; }

}  // namespace

void MaskingConfig::validate() const {
  std::set<std::string> tokens;
  auto add = [&](const std::string& what, const std::string& tok) {
    if (tok.empty()) throw DataError("masking config \"" + name + "\": empty token for " + what);
    if (!tokens.insert(tok).second) {
      throw DataError("masking config \"" + name + "\": token " + tok + " used by more than one class");
    }
  };
  add("strings", string_token);
  if (mask_numbers) add("numbers", number_token);
  for (const IdentifierClass& c : identifier_classes) {
    add(c.name, c.token);
    try {
      std::regex re(c.pattern, std::regex::ECMAScript);
    } catch (const std::regex_error& e) {
      throw DataError("masking config \"" + name + "\": bad pattern for " + c.name + ": " + e.what());
    }
  }
  add("template operands", template_rules.operand_token);
  for (unsigned char d : string_delimiters) {
    if (is_ident_char(d) || d == '\\') {
      throw DataError("masking config \"" + name + "\": invalid string delimiter");
    }
  }
}

std::string MaskingConfig::digest() const {
  nlohmann::json j;
  j["string_delimiters"] = string_delimiters;
  j["backslash_escapes"] = backslash_escapes;
  j["doubled_delimiter_escapes"] = doubled_delimiter_escapes;
  j["mask_numbers"] = mask_numbers;
  j["string_token"] = string_token;
  j["number_token"] = number_token;
  j["unterminated"] = unterminated == UnterminatedPolicy::fail ? "fail" : "mask_to_end_of_line";
  for (const IdentifierClass& c : identifier_classes) {
    j["identifiers"].push_back({{"name", c.name}, {"pattern", c.pattern}, {"token", c.token}});
  }
  j["template"] = {{"separators", template_rules.separators},
                   {"flag_prefix", template_rules.flag_prefix},
                   {"operand_token", template_rules.operand_token}};
  return sha256_hex(j.dump());
}

MaskingConfig masking_preset(std::string_view name) {
  MaskingConfig cfg;
  if (name == "generic") {
    cfg.name = "generic";
  } else if (name == "m") {
    cfg.name = "m";
    cfg.backslash_escapes = false;
    cfg.doubled_delimiter_escapes = true;
    cfg.identifier_classes = {
        {"quoted_identifier", R"(#"(?:[^"\n]|"")*")", "<ID>"},
        {"column", R"(\[[^\]\n"]*\])", "<COL>"},
    };
  } else if (name == "bash") {
    cfg.name = "bash";
    cfg.string_delimiters = "\"'";
  } else {
    throw DataError("unknown masking preset \"" + std::string(name) + "\"");
  }
  cfg.validate();
  return cfg;
}

Masker::Masker(MaskingConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.validate();
  for (const IdentifierClass& c : cfg_.identifier_classes) {
    identifier_patterns_.emplace_back(c.pattern, std::regex::ECMAScript | std::regex::optimize);
    passthrough_tokens_.push_back(c.token);
  }
  passthrough_tokens_.push_back(cfg_.string_token);
  if (cfg_.mask_numbers) passthrough_tokens_.push_back(cfg_.number_token);
}

std::string Masker::sketch(std::string_view code) const {
  std::string out;
  out.reserve(code.size());
  const std::size_t n = code.size();
  std::size_t i = 0;
  while (i < n) {
    bool matched = false;
    for (const std::string& tok : passthrough_tokens_) {
      if (code.substr(i).starts_with(tok)) {
        out += tok;
        i += tok.size();
        matched = true;
        break;
      }
    }
    if (matched) continue;

    for (std::size_t k = 0; k < identifier_patterns_.size(); ++k) {
      std::match_results<std::string_view::const_iterator> m;
      if (std::regex_search(code.begin() + static_cast<std::ptrdiff_t>(i), code.end(), m,
                            identifier_patterns_[k], std::regex_constants::match_continuous) &&
          m.length(0) > 0) {
        out += cfg_.identifier_classes[k].token;
        i += static_cast<std::size_t>(m.length(0));
        matched = true;
        break;
      }
    }
    if (matched) continue;

    const auto c = static_cast<unsigned char>(code[i]);
    if (cfg_.string_delimiters.find(static_cast<char>(c)) != std::string::npos) {
      std::size_t j = i + 1;
      bool closed = false;
      while (j < n) {
        const char cj = code[j];
        if (cfg_.backslash_escapes && cj == '\\') {
          j += 2;
          continue;
        }
        if (cj == static_cast<char>(c)) {
          if (cfg_.doubled_delimiter_escapes && j + 1 < n && code[j + 1] == cj) {
            j += 2;
            continue;
          }
          closed = true;
          ++j;
          break;
        }
        ++j;
      }
      if (!closed) {
        if (cfg_.unterminated == UnterminatedPolicy::fail) {
          throw MaskingError(i, "unterminated string literal");
        }
        const std::size_t eol = code.find('\n', i);
        j = eol == std::string_view::npos ? n : eol;
      }
      out += cfg_.string_token;
      i = j;
      continue;
    }

    if (is_digit(c)) {
      std::size_t j = i;
      while (j < n && is_digit(code[j])) ++j;
      if (j + 1 < n && code[j] == '.' && is_digit(code[j + 1])) {
        j += 1;
        while (j < n && is_digit(code[j])) ++j;
      }
      if (j < n && (code[j] == 'e' || code[j] == 'E')) {
        std::size_t k = j + 1;
        if (k < n && (code[k] == '+' || code[k] == '-')) ++k;
        if (k < n && is_digit(code[k])) {
          while (k < n && is_digit(code[k])) ++k;
          j = k;
        }
      }
      if (cfg_.mask_numbers) {
        out += cfg_.number_token;
      } else {
        out.append(code.substr(i, j - i));
      }
      i = j;
      continue;
    }

    if (is_ident_start(c)) {
      std::size_t j = i;
      while (j < n && is_ident_char(code[j])) ++j;
      out.append(code.substr(i, j - i));
      i = j;
      continue;
    }

    out += static_cast<char>(c);
    ++i;
  }
  return out;
}

std::string sketch(std::string_view code, const MaskingConfig& cfg) { return Masker(cfg).sketch(code); }

double sketch_match(std::string_view c1, std::string_view c2, const MaskingConfig& cfg) {
  const Masker masker(cfg);
  return normalized_edit_similarity(masker.sketch(c1), masker.sketch(c2));
}

}  // namespace tstr
