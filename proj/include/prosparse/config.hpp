// Copyright 2026 The prosparse Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstddef>
#include <cstdint>
#include <fstream>
#include <istream>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "prosparse/error.hpp"
#include "prosparse/text.hpp"

namespace prosparse {

/// Flat `key = value` records with `#` comment lines. Keys may repeat; the
/// last occurrence wins for scalar lookups.
class KeyValueConfig {
 public:
  static KeyValueConfig read(std::istream& in) {
    KeyValueConfig cfg;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      auto view = text::trim(line);
      if (view.empty() || view.front() == '#') continue;
      cfg.set_assignment(view, "config line " + std::to_string(lineno));
    }
    return cfg;
  }

  static KeyValueConfig load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path);
    return read(in);
  }

  /// Parses "key=value" and appends it.
  void set_assignment(std::string_view assignment, const std::string& where = "override") {
    auto eq = assignment.find('=');
    if (eq == std::string_view::npos) throw ConfigError("expected key = value in " + where);
    auto key = text::trim(assignment.substr(0, eq));
    if (key.empty()) throw ConfigError("empty key in " + where);
    entries_.emplace_back(std::string(key), std::string(text::trim(assignment.substr(eq + 1))));
  }

  void set(const std::string& key, const std::string& value) { entries_.emplace_back(key, value); }

  bool has(const std::string& key) const { return find(key) != nullptr; }

  std::optional<std::string> get(const std::string& key) const {
    if (const auto* v = find(key)) return *v;
    return std::nullopt;
  }

  std::vector<std::string> all(const std::string& key) const {
    std::vector<std::string> out;
    for (const auto& [k, v] : entries_)
      if (k == key) out.push_back(v);
    return out;
  }

  std::string get_string(const std::string& key, const std::string& fallback) const {
    auto v = get(key);
    return v ? *v : fallback;
  }

  double get_double(const std::string& key, double fallback) const {
    auto v = get(key);
    if (!v) return fallback;
    try {
      return text::to_double(*v, key);
    } catch (const ParseError&) {
      throw ConfigError("invalid value '" + *v + "' for " + key);
    }
  }

  std::size_t get_size(const std::string& key, std::size_t fallback) const {
    auto v = get(key);
    if (!v) return fallback;
    try {
      return text::to_size(*v, key);
    } catch (const ParseError&) {
      throw ConfigError("invalid value '" + *v + "' for " + key);
    }
  }

  bool get_bool(const std::string& key, bool fallback) const {
    auto v = get(key);
    if (!v) return fallback;
    if (*v == "true" || *v == "1" || *v == "on" || *v == "yes") return true;
    if (*v == "false" || *v == "0" || *v == "off" || *v == "no") return false;
    throw ConfigError("invalid boolean '" + *v + "' for " + key);
  }

  std::vector<std::size_t> get_size_list(const std::string& key, std::vector<std::size_t> fallback) const {
    auto v = get(key);
    if (!v) return fallback;
    std::vector<std::size_t> out;
    for (auto part : text::split(*v, ',')) {
      if (text::trim(part).empty()) continue;
      try {
        out.push_back(text::to_size(part, key));
      } catch (const ParseError&) {
        throw ConfigError("invalid list '" + *v + "' for " + key);
      }
    }
    return out;
  }

  const std::vector<std::pair<std::string, std::string>>& entries() const { return entries_; }

  void write(std::ostream& out) const {
    for (const auto& [k, v] : entries_) out << k << " = " << v << '\n';
  }

 private:
  const std::string* find(const std::string& key) const {
    for (auto it = entries_.rbegin(); it != entries_.rend(); ++it)
      if (it->first == key) return &it->second;
    return nullptr;
  }

  std::vector<std::pair<std::string, std::string>> entries_;
};

}  // namespace prosparse
