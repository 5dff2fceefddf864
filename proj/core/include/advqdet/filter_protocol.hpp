#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "advqdet/detector.hpp"

namespace advqdet {

// Frames spoken by `advqdet detect-serve`, each carried inside a u32
// length prefix (see read_frame / write_frame).
//   request  = user length u16 | user bytes | seq u64 | timestamp_ms i64 | image payload
//   response = flagged u8 | score f64 | action u8 | flags u8 (1 refused, 2 from cache,
//              4 target queried) | output length u32 | serialized output
std::vector<std::uint8_t> encode_filter_request(const QueryRecord& q);
QueryRecord decode_filter_request(std::span<const std::uint8_t> payload);

struct FilterResponse {
  bool flagged = false;
  double score = 0.0;
  DefenseAction action = DefenseAction::pass_through;
  bool refused = false;
  bool from_cache = false;
  bool target_queried = false;
  ModelOutput output;

  bool operator==(const FilterResponse&) const = default;
};

FilterResponse to_filter_response(const Verdict& v);
std::vector<std::uint8_t> encode_filter_response(const FilterResponse& r);
FilterResponse decode_filter_response(std::span<const std::uint8_t> payload);

}  // namespace advqdet
