#include "tfrelay/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

#include "tfrelay/error.hpp"

namespace tfrelay {

namespace {

std::string_view trim(std::string_view s) {
  auto is_space = [](char c) { return c == ' ' || c == '\t' || c == '\r'; };
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

template <typename T>
T parse_number(std::string_view key, std::string_view text) {
  T value{};
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    throw Error(ErrorCode::Parse, "config key '" + std::string(key) +
                                      "' has non-numeric value '" + std::string(text) + "'");
  }
  return value;
}

}  // namespace

Config Config::parse(std::string_view text) {
  Config config;
  std::size_t line_no = 0;
  while (!text.empty()) {
    ++line_no;
    auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw Error(ErrorCode::Parse,
                  "config line " + std::to_string(line_no) + ": expected 'key = value'");
    }
    auto key = trim(line.substr(0, eq));
    auto value = trim(line.substr(eq + 1));
    if (key.empty()) {
      throw Error(ErrorCode::Parse, "config line " + std::to_string(line_no) + ": empty key");
    }
    if (config.has(key)) {
      throw Error(ErrorCode::Parse, "config key '" + std::string(key) + "' repeated");
    }
    config.entries_.emplace_back(std::string(key), std::string(value));
  }
  return config;
}

Config Config::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot read config file " + path);
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse(buffer.str());
}

std::string Config::emit() const {
  std::string out;
  for (const auto& [key, value] : entries_) out += key + " = " + value + "\n";
  return out;
}

void Config::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::Io, "cannot write config file " + path);
  out << emit();
}

bool Config::has(std::string_view key) const { return get(key).has_value(); }

void Config::set(std::string key, std::string value) {
  for (auto& entry : entries_) {
    if (entry.first == key) {
      entry.second = std::move(value);
      return;
    }
  }
  entries_.emplace_back(std::move(key), std::move(value));
}

void Config::erase(std::string_view key) {
  std::erase_if(entries_, [&](const auto& e) { return e.first == key; });
}

std::optional<std::string> Config::get(std::string_view key) const {
  for (const auto& [k, v] : entries_) {
    if (k == key) return v;
  }
  return std::nullopt;
}

std::string Config::require(std::string_view key) const {
  auto value = get(key);
  if (!value) throw Error(ErrorCode::Parse, "config key '" + std::string(key) + "' missing");
  return *value;
}

std::optional<long long> Config::get_int(std::string_view key) const {
  auto value = get(key);
  if (!value) return std::nullopt;
  return parse_number<long long>(key, *value);
}

std::optional<double> Config::get_double(std::string_view key) const {
  auto value = get(key);
  if (!value) return std::nullopt;
  return parse_number<double>(key, *value);
}

std::optional<std::vector<int>> Config::get_int_list(std::string_view key) const {
  auto value = get(key);
  if (!value) return std::nullopt;
  std::vector<int> out;
  std::string_view rest = *value;
  while (true) {
    auto comma = rest.find(',');
    out.push_back(parse_number<int>(key, trim(rest.substr(0, comma))));
    if (comma == std::string_view::npos) break;
    rest = rest.substr(comma + 1);
  }
  return out;
}

std::string format_double(double value) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, value);
  return std::string(buf, ptr);
}

std::string join_ints(const std::vector<int>& values, char sep) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) out.push_back(sep);
    out += std::to_string(values[i]);
  }
  return out;
}

}  // namespace tfrelay
