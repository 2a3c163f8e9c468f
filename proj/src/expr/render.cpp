#include <string>

#include "opflow/error.hpp"
#include "opflow/expr/expression.hpp"

namespace opflow::expr {

namespace {

bool is_path_char(char c) {
  return (c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') ||
         c == '_' || c == '.' || c == '-';
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && s.front() == ' ') s.remove_prefix(1);
  while (!s.empty() && s.back() == ' ') s.remove_suffix(1);
  return s;
}

/// If a placeholder starts at `pos`, returns its path and sets `end` past "}}".
std::optional<std::string_view> placeholder_at(std::string_view text, std::size_t pos,
                                               std::size_t& end) {
  if (text.compare(pos, 2, "{{") != 0) return std::nullopt;
  auto close = text.find("}}", pos + 2);
  if (close == std::string_view::npos) return std::nullopt;
  auto path = trim(text.substr(pos + 2, close - pos - 2));
  if (path.empty()) return std::nullopt;
  for (char c : path) {
    if (!is_path_char(c)) return std::nullopt;
  }
  end = close + 2;
  return path;
}

bool looks_numeric(std::string_view s) {
  std::size_t i = 0;
  if (i < s.size() && s[i] == '-') ++i;
  std::size_t digits = 0;
  while (i < s.size() && s[i] >= '0' && s[i] <= '9') ++i, ++digits;
  if (digits == 0) return false;
  if (i < s.size() && s[i] == '.') {
    ++i;
    digits = 0;
    while (i < s.size() && s[i] >= '0' && s[i] <= '9') ++i, ++digits;
    if (digits == 0) return false;
  }
  if (i < s.size() && (s[i] == 'e' || s[i] == 'E')) {
    ++i;
    if (i < s.size() && (s[i] == '+' || s[i] == '-')) ++i;
    digits = 0;
    while (i < s.size() && s[i] >= '0' && s[i] <= '9') ++i, ++digits;
    if (digits == 0) return false;
  }
  return i == s.size();
}

}  // namespace

const ParameterValue* Scope::find(std::string_view path) const {
  auto it = bindings.find(std::string(path));
  return it == bindings.end() ? nullptr : &it->second;
}

std::string quote_string(std::string_view text) {
  std::string out = "'";
  for (char c : text) {
    if (c == '\\' || c == '\'') out.push_back('\\');
    out.push_back(c);
  }
  out.push_back('\'');
  return out;
}

std::string render_placeholders(std::string_view text, const Scope& scope, RenderMode mode) {
  std::string out;
  out.reserve(text.size());
  std::size_t i = 0;
  while (i < text.size()) {
    std::size_t end = 0;
    if (auto path = placeholder_at(text, i, end)) {
      const ParameterValue* value = scope.find(*path);
      if (value == nullptr) {
        throw Error(ErrorCode::UnboundPlaceholder, std::string(*path));
      }
      if (mode == RenderMode::Raw || looks_numeric(value->text) || value->text == "true" ||
          value->text == "false") {
        out += value->text;
      } else {
        out += quote_string(value->text);
      }
      i = end;
    } else {
      out.push_back(text[i]);
      ++i;
    }
  }
  return out;
}

std::vector<std::string> placeholder_paths(std::string_view text) {
  std::vector<std::string> paths;
  std::size_t i = 0;
  while (i < text.size()) {
    std::size_t end = 0;
    if (auto path = placeholder_at(text, i, end)) {
      paths.emplace_back(*path);
      i = end;
    } else {
      ++i;
    }
  }
  return paths;
}

}  // namespace opflow::expr
