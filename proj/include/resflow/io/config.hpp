#pragma once

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "resflow/errors.hpp"

namespace resflow::io {

/// Sectioned key/value settings read from an INI document.
///
/// Keys are addressed as "section.key". Lookups of absent keys return the
/// caller's default; every lookup is remembered so the manifest can echo the
/// effective configuration.
class Config {
 public:
  Config() = default;

  static Config from_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigurationError("cannot open config file " + path.string());
    return from_stream(in, path.string());
  }

  static Config from_string(const std::string& text) {
    std::istringstream in(text);
    return from_stream(in, "<string>");
  }

  /// Applies "section.key=value".
  void set_override(std::string_view assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string_view::npos || eq == 0) {
      throw ConfigurationError("override must look like section.key=value: " +
                               std::string(assignment));
    }
    set(std::string(assignment.substr(0, eq)), std::string(assignment.substr(eq + 1)));
  }

  void set(const std::string& key, const std::string& value) {
    if (key.find('.') == std::string::npos) {
      throw ConfigurationError("config key needs a section: " + key);
    }
    tree_.put(key, value);
  }

  bool has(const std::string& key) const { return tree_.get_optional<std::string>(key).has_value(); }

  template <class T>
  T get(const std::string& key, const T& fallback) const {
    T value = fallback;
    if (auto raw = tree_.get_optional<std::string>(key)) {
      try {
        value = tree_.get<T>(key);
      } catch (const boost::property_tree::ptree_error&) {
        throw ConfigurationError("config key " + key + " has invalid value '" + *raw + "'");
      }
    }
    remember(key, value);
    return value;
  }

  std::string get(const std::string& key, const char* fallback) const {
    return get<std::string>(key, std::string(fallback));
  }

  /// Effective values of every key read so far, in first-read order.
  const std::vector<std::pair<std::string, std::string>>& used() const noexcept {
    return used_;
  }

  const boost::property_tree::ptree& tree() const noexcept { return tree_; }

 private:
  static Config from_stream(std::istream& in, const std::string& name) {
    Config cfg;
    try {
      boost::property_tree::ini_parser::read_ini(in, cfg.tree_);
    } catch (const boost::property_tree::ini_parser_error& e) {
      throw ConfigurationError("cannot parse " + name + ": " + e.message());
    }
    return cfg;
  }

  template <class T>
  void remember(const std::string& key, const T& value) const {
    std::ostringstream os;
    os.precision(17);
    os << value;
    for (auto& [k, v] : used_) {
      if (k == key) {
        v = os.str();
        return;
      }
    }
    used_.emplace_back(key, os.str());
  }

  boost::property_tree::ptree tree_;
  mutable std::vector<std::pair<std::string, std::string>> used_;
};

}  // namespace resflow::io
