#include "advqdet/errors.hpp"

namespace advqdet {

void require(bool condition, const std::string& message) {
  if (!condition) throw ContractViolation(message);
}

}  // namespace advqdet
