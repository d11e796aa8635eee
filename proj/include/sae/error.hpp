#ifndef SAE_ERROR_HPP
#define SAE_ERROR_HPP

#include <stdexcept>
#include <string>
#include <utility>

namespace sae {

// Broad classification used by the CLI to pick an exit code:
// invalid_input -> 2, numerical -> 3.
enum class ErrorKind { invalid_input, numerical };

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, std::string code, const std::string& detail)
      : std::runtime_error(code + ": " + detail),
        kind_(kind),
        code_(std::move(code)) {}

  ErrorKind kind() const noexcept { return kind_; }
  const std::string& code() const noexcept { return code_; }

 private:
  ErrorKind kind_;
  std::string code_;
};

[[noreturn]] inline void fail_input(std::string code, const std::string& detail) {
  throw Error(ErrorKind::invalid_input, std::move(code), detail);
}

[[noreturn]] inline void fail_numeric(std::string code, const std::string& detail) {
  throw Error(ErrorKind::numerical, std::move(code), detail);
}

}  // namespace sae

#endif
