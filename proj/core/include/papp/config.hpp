#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

namespace papp {

/// One `[section]` of a key = value configuration file. Lookups are recorded
/// so that callers can reject keys nobody asked for.
class ConfigSection {
 public:
  ConfigSection() = default;
  explicit ConfigSection(std::string name) : name_(std::move(name)) {}

  const std::string& name() const { return name_; }
  const std::vector<std::pair<std::string, std::string>>& entries() const { return entries_; }

  bool has(const std::string& key) const;
  std::optional<std::string> raw(const std::string& key) const;

  /// Replaces an existing value or appends a new key.
  void set(const std::string& key, const std::string& value);

  std::string get_string(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  long long get_int(const std::string& key, long long fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::vector<double> get_doubles(const std::string& key, const std::vector<double>& fallback) const;
  std::vector<std::string> get_strings(const std::string& key,
                                       const std::vector<std::string>& fallback) const;

  /// Throws ConfigError naming the first key never looked up.
  void reject_unknown() const;

 private:
  std::string name_;
  std::vector<std::pair<std::string, std::string>> entries_;
  mutable std::set<std::string> used_;
};

class ConfigFile {
 public:
  static ConfigFile parse(std::istream& in, const std::string& source = "<stream>");
  static ConfigFile parse_string(const std::string& text);
  static ConfigFile load(const std::filesystem::path& path);

  std::vector<ConfigSection>& sections() { return sections_; }
  const std::vector<ConfigSection>& sections() const { return sections_; }

  const ConfigSection* find(const std::string& name) const;
  ConfigSection& section(const std::string& name);  // creates if missing

  /// Throws ConfigError for any section whose name is not in `allowed`.
  void reject_unknown_sections(const std::set<std::string>& allowed) const;

  void write(std::ostream& out) const;
  void save(const std::filesystem::path& path) const;

 private:
  std::vector<ConfigSection> sections_;
};

/// Shortest round-trippable text for a double.
std::string format_double(double x);

}  // namespace papp
