#pragma once

#include <stdexcept>
#include <string>

namespace qlc {

// Error taxonomy; mirrors the status codes of the C API.
enum class errc { invalid = 1, domain = 2, numeric = 3, io = 4, internal = 5 };

class error : public std::runtime_error {
 public:
  error(errc code, const std::string& what) : std::runtime_error(what), code_(code) {}
  errc code() const noexcept { return code_; }

 private:
  errc code_;
};

// Bad configuration / arguments.
struct config_error : error {
  explicit config_error(const std::string& w) : error(errc::invalid, w) {}
};

// Evaluation outside a natural domain.
struct domain_error : error {
  explicit domain_error(const std::string& w) : error(errc::domain, w) {}
};

// Non-convergence, divergence, rank failures.
struct numeric_error : error {
  explicit numeric_error(const std::string& w) : error(errc::numeric, w) {}
};

struct io_error : error {
  explicit io_error(const std::string& w) : error(errc::io, w) {}
};

}  // namespace qlc
