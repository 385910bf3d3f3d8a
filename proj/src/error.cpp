#include "moralprobe/error.hpp"

namespace moralprobe {

int exit_code_for(ErrorClass cls) noexcept {
  switch (cls) {
    case ErrorClass::kValidation:
    case ErrorClass::kParse:
    case ErrorClass::kConfiguration:
    case ErrorClass::kRender:
      return 2;
    case ErrorClass::kTransport:
    case ErrorClass::kCapability:
      return 3;
    case ErrorClass::kDegeneracy:
      return 4;
    case ErrorClass::kCache:
      return 5;
    case ErrorClass::kResponseFormat:
    case ErrorClass::kScoring:
      return 6;
    case ErrorClass::kIo:
      return 1;
  }
  return 1;
}

}  // namespace moralprobe
