#ifndef APA_ERROR_HPP
#define APA_ERROR_HPP

#include <stdexcept>
#include <string>

namespace apa {

/// Error families map to CLI exit codes: validation=1, numeric=2, io=3.
enum class ErrorKind { Validation, Numeric, Io };

/// Exception carrying a stable machine-readable code, e.g. "glm.rank_deficient".
class Error : public std::runtime_error {
public:
  Error(ErrorKind kind, std::string code, const std::string& message)
      : std::runtime_error(message), kind_(kind), code_(std::move(code)) {}

  ErrorKind kind() const { return kind_; }
  const std::string& code() const { return code_; }

  static Error validation(const std::string& code, const std::string& msg) {
    return Error(ErrorKind::Validation, code, msg);
  }
  static Error numeric(const std::string& code, const std::string& msg) {
    return Error(ErrorKind::Numeric, code, msg);
  }
  static Error io(const std::string& code, const std::string& msg) {
    return Error(ErrorKind::Io, code, msg);
  }

private:
  ErrorKind kind_;
  std::string code_;
};

}  // namespace apa

#endif
