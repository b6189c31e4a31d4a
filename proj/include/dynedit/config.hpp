#pragma once

#include <map>
#include <string>
#include <vector>

#include "dynedit/synthscene.hpp"
#include "dynedit/textenc.hpp"
#include "dynedit/training.hpp"

namespace dynedit::cfg {

inline constexpr const char* kVersion = "0.1.0";

// Flat dotted-key configuration shared by every subcommand. Values are kept
// as strings; the typed getters parse on access. Precedence is defaults,
// then a config file, then command-line overrides, in that order. Keys not
// present in the defaults are rejected wherever they appear.
class RunConfig {
 public:
  RunConfig();  // full default key set

  // key=value lines; blank lines and lines starting with '#' are skipped.
  // Throws "config not found: <path>" when the file is missing.
  void load_file(const std::string& path);
  void set_pair(const std::string& pair);                     // "key=value"
  void set(const std::string& key, const std::string& value);  // known keys only

  // Applies DYNEDIT_SEED (when set) on top of the current "seed" value.
  void apply_env();

  bool has(const std::string& key) const;
  const std::string& str(const std::string& key) const;
  std::int64_t i64(const std::string& key) const;
  double f64(const std::string& key) const;
  bool flag(const std::string& key) const;
  std::vector<std::int64_t> i64_list(const std::string& key) const;  // "16,32,64"

  // Materialized views over the map.
  synth::DatasetParams dataset_params() const;
  text::PretrainConfig pretrain_config() const;
  train::TrainConfig train_config() const;

  // Writes <dir>/config.txt: artifact version comment plus every key=value,
  // sorted. The file parses back through load_file unchanged.
  void echo(const std::string& dir) const;

  const std::map<std::string, std::string>& entries() const { return kv_; }

 private:
  std::map<std::string, std::string> kv_;
};

}  // namespace dynedit::cfg
