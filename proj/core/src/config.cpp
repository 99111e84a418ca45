#include "papp/config.hpp"

#include "papp/errors.hpp"

#include <boost/algorithm/string.hpp>
#include <boost/lexical_cast.hpp>
#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <charconv>
#include <fstream>
#include <sstream>

namespace papp {
namespace {

std::string where(const std::string& section, const std::string& key) {
  return "[" + section + "] " + key;
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> parts;
  boost::split(parts, text, boost::is_any_of(","));
  std::vector<std::string> out;
  for (auto& p : parts) {
    boost::trim(p);
    if (!p.empty()) out.push_back(p);
  }
  return out;
}

}  // namespace

bool ConfigSection::has(const std::string& key) const { return raw(key).has_value(); }

std::optional<std::string> ConfigSection::raw(const std::string& key) const {
  used_.insert(key);
  for (const auto& [k, v] : entries_) {
    if (k == key) return v;
  }
  return std::nullopt;
}

void ConfigSection::set(const std::string& key, const std::string& value) {
  for (auto& [k, v] : entries_) {
    if (k == key) {
      v = value;
      return;
    }
  }
  entries_.emplace_back(key, value);
}

std::string ConfigSection::get_string(const std::string& key, const std::string& fallback) const {
  return raw(key).value_or(fallback);
}

double ConfigSection::get_double(const std::string& key, double fallback) const {
  const auto v = raw(key);
  if (!v) return fallback;
  const std::string t = boost::trim_copy(*v);
  if (t == "inf" || t == "+inf") return std::numeric_limits<double>::infinity();
  try {
    return boost::lexical_cast<double>(t);
  } catch (const boost::bad_lexical_cast&) {
    throw ConfigError(where(name_, key) + ": expected a number, got '" + *v + "'");
  }
}

long long ConfigSection::get_int(const std::string& key, long long fallback) const {
  const auto v = raw(key);
  if (!v) return fallback;
  try {
    return boost::lexical_cast<long long>(boost::trim_copy(*v));
  } catch (const boost::bad_lexical_cast&) {
    throw ConfigError(where(name_, key) + ": expected an integer, got '" + *v + "'");
  }
}

bool ConfigSection::get_bool(const std::string& key, bool fallback) const {
  const auto v = raw(key);
  if (!v) return fallback;
  const std::string t = boost::to_lower_copy(boost::trim_copy(*v));
  if (t == "true" || t == "1" || t == "yes" || t == "on") return true;
  if (t == "false" || t == "0" || t == "no" || t == "off") return false;
  throw ConfigError(where(name_, key) + ": expected a boolean, got '" + *v + "'");
}

std::vector<double> ConfigSection::get_doubles(const std::string& key,
                                               const std::vector<double>& fallback) const {
  const auto v = raw(key);
  if (!v) return fallback;
  std::vector<double> out;
  for (const auto& p : split_list(*v)) {
    try {
      out.push_back(boost::lexical_cast<double>(p));
    } catch (const boost::bad_lexical_cast&) {
      throw ConfigError(where(name_, key) + ": bad list element '" + p + "'");
    }
  }
  return out;
}

std::vector<std::string> ConfigSection::get_strings(const std::string& key,
                                                    const std::vector<std::string>& fallback) const {
  const auto v = raw(key);
  if (!v) return fallback;
  return split_list(*v);
}

void ConfigSection::reject_unknown() const {
  for (const auto& [k, v] : entries_) {
    if (!used_.count(k)) throw ConfigError("unknown key " + where(name_, k));
  }
}

ConfigFile ConfigFile::parse(std::istream& in, const std::string& source) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(source + ": " + e.message() + " (line " + std::to_string(e.line()) + ")");
  }
  ConfigFile out;
  for (const auto& [name, child] : tree) {
    if (child.empty()) {
      throw ConfigError(source + ": key '" + name + "' appears outside of any [section]");
    }
    ConfigSection sec(name);
    for (const auto& [key, value] : child) {
      sec.set(key, value.get_value<std::string>());
    }
    out.sections_.push_back(std::move(sec));
  }
  return out;
}

ConfigFile ConfigFile::parse_string(const std::string& text) {
  std::istringstream in(text);
  return parse(in);
}

ConfigFile ConfigFile::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file " + path.string());
  return parse(in, path.string());
}

const ConfigSection* ConfigFile::find(const std::string& name) const {
  for (const auto& s : sections_) {
    if (s.name() == name) return &s;
  }
  return nullptr;
}

ConfigSection& ConfigFile::section(const std::string& name) {
  for (auto& s : sections_) {
    if (s.name() == name) return s;
  }
  sections_.emplace_back(name);
  return sections_.back();
}

void ConfigFile::reject_unknown_sections(const std::set<std::string>& allowed) const {
  for (const auto& s : sections_) {
    if (!allowed.count(s.name())) throw ConfigError("unknown section [" + s.name() + "]");
  }
}

void ConfigFile::write(std::ostream& out) const {
  bool first = true;
  for (const auto& s : sections_) {
    if (!first) out << '\n';
    first = false;
    out << '[' << s.name() << "]\n";
    for (const auto& [k, v] : s.entries()) out << k << " = " << v << '\n';
  }
}

void ConfigFile::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  write(out);
  if (!out) throw IoError("write failed for " + path.string());
}

std::string format_double(double x) {
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, res.ptr);
}

}  // namespace papp
