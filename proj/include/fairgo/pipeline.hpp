#ifndef FAIRGO_PIPELINE_HPP
#define FAIRGO_PIPELINE_HPP

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace fairgo {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Flat key=value run configuration. `#` starts a comment; whitespace around
/// keys and values is trimmed. Every hyperparameter has a named key; defaults
/// follow the documented experiment settings.
struct RunConfig {
  std::map<std::string, std::string> values;

  static RunConfig load(const std::string& path);

  bool has(const std::string& key) const { return values.count(key) > 0; }
  std::string get(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  int get_int(const std::string& key, int fallback) const;
  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;
  std::vector<int> get_int_list(const std::string& key,
                                const std::vector<int>& fallback) const;
  std::vector<double> get_double_list(const std::string& key,
                                      const std::vector<double>& fallback) const;

  /// FNV-1a over the canonical sorted key=value form.
  std::uint64_t hash() const;
};

/// Runs one pipeline stage: ingest | train-base | train-fair | audit |
/// report | synth. Returns the process exit status (0 on success). Artifacts
/// land under the configured output directory; a manifest records their
/// hashes and every artifact carries the config hash of the run that made it.
int run_stage(const std::string& command, const std::string& config_path,
              std::optional<std::uint64_t> seed_override,
              std::optional<std::string> out_override);

/// Writes a synthetic ratings/attributes dataset whose user factors linearly
/// encode a planted binary attribute with the configured strength.
void generate_synthetic(const RunConfig& config, const std::string& out_dir);

std::uint64_t fnv1a_file(const std::string& path);

} // namespace fairgo

#endif
