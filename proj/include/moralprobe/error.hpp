#pragma once

#include <stdexcept>
#include <string>

namespace moralprobe {

/// Broad failure classes; each maps to a distinct process exit code.
enum class ErrorClass {
  kValidation,
  kParse,
  kConfiguration,
  kRender,
  kTransport,
  kCapability,
  kResponseFormat,
  kScoring,
  kDegeneracy,
  kCache,
  kIo,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorClass cls, const std::string& what)
      : std::runtime_error(what), class_(cls) {}

  ErrorClass error_class() const noexcept { return class_; }

 private:
  ErrorClass class_;
};

#define MORALPROBE_DEFINE_ERROR(Name, Cls)                                \
  class Name : public Error {                                             \
   public:                                                                \
    explicit Name(const std::string& what) : Error(ErrorClass::Cls, what) {} \
  };

MORALPROBE_DEFINE_ERROR(ValidationError, kValidation)
MORALPROBE_DEFINE_ERROR(ConfigError, kConfiguration)
MORALPROBE_DEFINE_ERROR(RenderError, kRender)
MORALPROBE_DEFINE_ERROR(TransportError, kTransport)
MORALPROBE_DEFINE_ERROR(CapabilityError, kCapability)
MORALPROBE_DEFINE_ERROR(ResponseFormatError, kResponseFormat)
MORALPROBE_DEFINE_ERROR(ScoringError, kScoring)
MORALPROBE_DEFINE_ERROR(DegeneracyError, kDegeneracy)
MORALPROBE_DEFINE_ERROR(CacheError, kCache)
MORALPROBE_DEFINE_ERROR(IoError, kIo)

#undef MORALPROBE_DEFINE_ERROR

/// Parse failure carrying the 1-based line number of the offending input.
class ParseError : public Error {
 public:
  ParseError(const std::string& source, std::size_t line, const std::string& what)
      : Error(ErrorClass::kParse,
              source + ":" + std::to_string(line) + ": " + what),
        line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// Exit codes: 0 success, 2 validation/parse/config, 3 transport/capability,
/// 4 degeneracy, 5 cache, 6 scoring/format, 1 anything else.
int exit_code_for(ErrorClass cls) noexcept;

}  // namespace moralprobe
