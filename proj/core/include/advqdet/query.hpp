#pragma once

#include <cstdint>
#include <string>

#include "advqdet/image.hpp"

namespace advqdet {

struct QueryRecord {
  std::string user_id;
  std::uint64_t seq = 0;  // strictly increasing per user
  ImageTensor image;
  std::int64_t timestamp_ms = 0;
};

}  // namespace advqdet
