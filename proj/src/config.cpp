#include "apa/config.hpp"

#include <cctype>
#include <cstdlib>
#include <fstream>
#include <json.hpp>

#include "apa/error.hpp"

using nlohmann::json;

namespace apa {

std::string ConfigResolver::env_name(const std::string& key) {
  std::string out = "APA_";
  for (char c : key)
    out += c == '-' ? '_' : static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return out;
}

std::map<std::string, std::string> ConfigResolver::resolve(
    const std::map<std::string, std::string>& flags,
    const std::optional<std::string>& config_file, const EnvLookup& env) const {
  for (const auto& [k, v] : flags)
    if (!defaults_.count(k))
      throw Error::validation("config.unknown_key", "unknown config key: " + k);

  std::map<std::string, std::string> file_values;
  if (config_file) {
    std::ifstream in(*config_file);
    if (!in)
      throw Error::io("io.not_found", "cannot open config file: " + *config_file);
    json j;
    try {
      in >> j;
    } catch (const json::exception& e) {
      throw Error::io("io.malformed",
                      "bad JSON in " + *config_file + ": " + e.what());
    }
    if (!j.is_object())
      throw Error::validation("config.malformed", "config file must be an object");
    for (const auto& [k, v] : j.items()) {
      if (!defaults_.count(k))
        throw Error::validation("config.unknown_key",
                                "unknown config key in file: " + k);
      file_values[k] = v.is_string() ? v.get<std::string>() : v.dump();
    }
  }

  std::map<std::string, std::string> effective;
  for (const auto& [key, def] : defaults_) {
    auto flag = flags.find(key);
    if (flag != flags.end()) {
      effective[key] = flag->second;
      continue;
    }
    if (auto v = env(env_name(key))) {
      effective[key] = *v;
      continue;
    }
    auto file = file_values.find(key);
    effective[key] = file != file_values.end() ? file->second : def;
  }
  return effective;
}

std::map<std::string, std::string> ConfigResolver::resolve(
    const std::map<std::string, std::string>& flags,
    const std::optional<std::string>& config_file) const {
  return resolve(flags, config_file, [](const std::string& name) {
    const char* v = std::getenv(name.c_str());
    return v ? std::optional<std::string>(v) : std::nullopt;
  });
}

}  // namespace apa
