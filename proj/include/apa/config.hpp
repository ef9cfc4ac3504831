#ifndef APA_CONFIG_HPP
#define APA_CONFIG_HPP

#include <functional>
#include <map>
#include <optional>
#include <string>

namespace apa {

/// Layered configuration: command-line flags > APA_* environment variables
/// > JSON config file > built-in defaults. Unknown keys in the file are
/// rejected. The effective map is echoed into output manifests.
class ConfigResolver {
public:
  using EnvLookup = std::function<std::optional<std::string>(const std::string&)>;

  explicit ConfigResolver(std::map<std::string, std::string> defaults)
      : defaults_(std::move(defaults)) {}

  /// Environment variable name for a key: "max-depth" -> "APA_MAX_DEPTH".
  static std::string env_name(const std::string& key);

  std::map<std::string, std::string> resolve(
      const std::map<std::string, std::string>& flags,
      const std::optional<std::string>& config_file,
      const EnvLookup& env) const;

  /// Reads the process environment.
  std::map<std::string, std::string> resolve(
      const std::map<std::string, std::string>& flags,
      const std::optional<std::string>& config_file) const;

private:
  std::map<std::string, std::string> defaults_;
};

}  // namespace apa

#endif
