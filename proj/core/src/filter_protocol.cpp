#include "advqdet/filter_protocol.hpp"

#include "advqdet/bytes.hpp"
#include "advqdet/errors.hpp"

namespace advqdet {

std::vector<std::uint8_t> encode_filter_request(const QueryRecord& q) {
  require(q.user_id.size() <= 0xFFFF, "user id longer than 65535 bytes");
  ByteWriter w;
  w.u16(static_cast<std::uint16_t>(q.user_id.size()));
  w.str(q.user_id);
  w.u64(q.seq);
  w.u64(static_cast<std::uint64_t>(q.timestamp_ms));
  w.bytes(serialize_image(q.image));
  return w.take();
}

QueryRecord decode_filter_request(std::span<const std::uint8_t> payload) {
  ByteReader r(payload);
  std::string user = r.str(r.u16());
  const std::uint64_t seq = r.u64();
  const auto ts = static_cast<std::int64_t>(r.u64());
  ImageTensor image = deserialize_image(r.bytes(r.remaining()));
  return QueryRecord{std::move(user), seq, std::move(image), ts};
}

FilterResponse to_filter_response(const Verdict& v) {
  return FilterResponse{v.flagged,  v.score,          v.action_taken, v.refused,
                        v.from_cache, v.target_queried, v.served_output};
}

std::vector<std::uint8_t> encode_filter_response(const FilterResponse& r) {
  ByteWriter w;
  w.u8(r.flagged ? 1 : 0);
  w.f64(r.score);
  w.u8(static_cast<std::uint8_t>(r.action));
  w.u8(static_cast<std::uint8_t>((r.refused ? 1 : 0) | (r.from_cache ? 2 : 0) |
                                 (r.target_queried ? 4 : 0)));
  const auto out = serialize_output(r.output);
  w.u32(static_cast<std::uint32_t>(out.size()));
  w.bytes(out);
  return w.take();
}

FilterResponse decode_filter_response(std::span<const std::uint8_t> payload) {
  ByteReader r(payload);
  FilterResponse f;
  f.flagged = r.u8() != 0;
  f.score = r.f64();
  const auto action = r.u8();
  if (action > static_cast<std::uint8_t>(DefenseAction::rate_limit)) {
    throw FormatError("unknown defense action code");
  }
  f.action = static_cast<DefenseAction>(action);
  const auto flags = r.u8();
  f.refused = (flags & 1) != 0;
  f.from_cache = (flags & 2) != 0;
  f.target_queried = (flags & 4) != 0;
  f.output = deserialize_output(r.bytes(r.u32()));
  if (r.remaining() != 0) throw FormatError("trailing bytes in filter response");
  return f;
}

}  // namespace advqdet
