#pragma once

#include <stdexcept>
#include <string>

namespace glyphgan {

// Error categories. The C API and the CLI map these onto status/exit codes.
enum class ErrorKind {
  Config,     // invalid configuration or usage
  Dimension,  // tensor shape mismatch
  Domain,     // value outside an operation's domain
  Data,       // missing/unreadable/insufficient input data
  Numeric,    // NaN/Inf produced during training or evaluation
  Io,         // filesystem failure
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

#define GLYPHGAN_DEFINE_ERROR(Name, Kind)                                   \
  class Name : public Error {                                               \
   public:                                                                  \
    explicit Name(const std::string& what) : Error(ErrorKind::Kind, what) {} \
  };

GLYPHGAN_DEFINE_ERROR(ConfigError, Config)
GLYPHGAN_DEFINE_ERROR(DimensionError, Dimension)
GLYPHGAN_DEFINE_ERROR(DomainError, Domain)
GLYPHGAN_DEFINE_ERROR(DataError, Data)
GLYPHGAN_DEFINE_ERROR(NumericError, Numeric)
GLYPHGAN_DEFINE_ERROR(IoError, Io)

#undef GLYPHGAN_DEFINE_ERROR

}  // namespace glyphgan
