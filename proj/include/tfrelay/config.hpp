#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace tfrelay {

// Line-oriented "key = value" text. '#' starts a comment; keys keep their
// insertion order so emit() is stable.
class Config {
 public:
  static Config parse(std::string_view text);
  static Config load(const std::string& path);
  std::string emit() const;
  void save(const std::string& path) const;

  bool has(std::string_view key) const;
  void set(std::string key, std::string value);
  void erase(std::string_view key);
  std::optional<std::string> get(std::string_view key) const;
  std::string require(std::string_view key) const;

  std::optional<long long> get_int(std::string_view key) const;
  std::optional<double> get_double(std::string_view key) const;
  std::optional<std::vector<int>> get_int_list(std::string_view key) const;

  const std::vector<std::pair<std::string, std::string>>& entries() const {
    return entries_;
  }
  bool operator==(const Config&) const = default;

 private:
  std::vector<std::pair<std::string, std::string>> entries_;
};

// Shortest text that parses back to the same double.
std::string format_double(double value);
std::string join_ints(const std::vector<int>& values, char sep = ',');

}  // namespace tfrelay
