// Copyright 2026 The streamkd Authors
// SPDX-License-Identifier: Apache-2.0

// Flat key=value run configuration with a fixed registry of known keys.
// Lines starting with '#' are comments. Unknown keys are rejected.

#ifndef STREAMKD_CORE_CONFIG_H_
#define STREAMKD_CORE_CONFIG_H_

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace streamkd {

struct ConfigKey {
  std::string name;
  std::string default_value;
  std::string help;
};

const std::vector<ConfigKey>& ConfigRegistry();

class Config {
 public:
  // All registry defaults.
  Config();

  static Config Parse(const std::string& text);
  static Config Load(const std::string& path);

  // Throws kInvalidArgument for unknown keys.
  void Set(const std::string& key, const std::string& value);
  // Applies "key=value" lines from `text` on top of the current values.
  void Merge(const std::string& text, const std::string& source);

  const std::string& Get(const std::string& key) const;
  double GetDouble(const std::string& key) const;
  int64_t GetInt(const std::string& key) const;
  size_t GetSize(const std::string& key) const;
  bool GetBool(const std::string& key) const;
  std::vector<std::string> GetList(const std::string& key) const;

  // Every key in registry order, "key=value" per line.
  std::string Resolved() const;
  // SHA-256 of Resolved().
  std::string Digest() const;

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace streamkd

#endif  // STREAMKD_CORE_CONFIG_H_
