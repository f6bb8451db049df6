#include "ship/stream_proto.hpp"

#include <algorithm>
#include <string>

#include "ship/crc32c.hpp"

namespace ship {

namespace {

void put_be(std::uint8_t* p, std::uint64_t v, int bytes) {
  for (int i = bytes - 1; i >= 0; --i) {
    p[i] = static_cast<std::uint8_t>(v);
    v >>= 8;
  }
}

std::uint64_t get_be(const std::uint8_t* p, int bytes) {
  std::uint64_t v = 0;
  for (int i = 0; i < bytes; ++i) v = (v << 8) | p[i];
  return v;
}

}  // namespace

const char* to_string(FrameErrc code) {
  switch (code) {
    case FrameErrc::BadMagic: return "BadMagic";
    case FrameErrc::UnsupportedVersion: return "UnsupportedVersion";
    case FrameErrc::Truncated: return "Truncated";
    case FrameErrc::CrcMismatch: return "CrcMismatch";
    case FrameErrc::PayloadTooLarge: return "PayloadTooLarge";
  }
  return "Unknown";
}

FrameError::FrameError(FrameErrc code, std::size_t frame_size)
    : std::runtime_error(std::string("frame: ") + to_string(code)),
      code_(code),
      frame_size_(frame_size) {}

std::size_t encoded_frame_size(std::size_t payload_len) {
  return kFrameHeaderBytes + payload_len + kFrameTrailerBytes;
}

void append_frame(std::vector<std::uint8_t>& out, std::uint8_t channel_id, std::uint8_t flags,
                  std::uint32_t sequence, std::uint64_t timestamp,
                  std::span<const std::uint8_t> payload) {
  if (payload.size() > kMaxPayloadBytes) throw FrameError(FrameErrc::PayloadTooLarge);
  const std::size_t base = out.size();
  out.resize(base + encoded_frame_size(payload.size()));
  std::uint8_t* p = out.data() + base;
  std::copy(kFrameMagic.begin(), kFrameMagic.end(), p);
  p[4] = kFrameVersion;
  p[5] = channel_id;
  p[6] = flags;
  p[7] = 0;
  put_be(p + 8, sequence, 4);
  put_be(p + 12, timestamp, 8);
  put_be(p + 20, payload.size(), 4);
  std::copy(payload.begin(), payload.end(), p + kFrameHeaderBytes);
  const std::size_t body = kFrameHeaderBytes + payload.size();
  put_be(p + body, crc32c({p, body}), 4);
}

std::vector<std::uint8_t> encode_frame(std::uint8_t channel_id, std::uint8_t flags,
                                       std::uint32_t sequence, std::uint64_t timestamp,
                                       std::span<const std::uint8_t> payload) {
  std::vector<std::uint8_t> out;
  append_frame(out, channel_id, flags, sequence, timestamp, payload);
  return out;
}

std::vector<std::uint8_t> encode_frame(const StreamFrame& frame) {
  return encode_frame(frame.channel_id, frame.flags, frame.sequence, frame.timestamp,
                      frame.payload);
}

DecodedFrame decode_frame(std::span<const std::uint8_t> bytes) {
  const std::uint8_t* p = bytes.data();
  const std::size_t n = bytes.size();
  for (std::size_t i = 0; i < std::min<std::size_t>(n, 4); ++i) {
    if (p[i] != kFrameMagic[i]) throw FrameError(FrameErrc::BadMagic);
  }
  if (n >= 5 && p[4] != kFrameVersion) throw FrameError(FrameErrc::UnsupportedVersion);
  if (n < kFrameHeaderBytes) throw FrameError(FrameErrc::Truncated);

  const std::uint64_t payload_len = get_be(p + 20, 4);
  if (payload_len > kMaxPayloadBytes) throw FrameError(FrameErrc::PayloadTooLarge);
  const std::size_t total = encoded_frame_size(static_cast<std::size_t>(payload_len));
  if (n < total) throw FrameError(FrameErrc::Truncated);

  const std::size_t body = kFrameHeaderBytes + static_cast<std::size_t>(payload_len);
  const auto expected = static_cast<std::uint32_t>(get_be(p + body, 4));
  if (crc32c({p, body}) != expected) throw FrameError(FrameErrc::CrcMismatch, total);

  DecodedFrame out;
  out.frame.channel_id = p[5];
  out.frame.flags = p[6];
  out.frame.sequence = static_cast<std::uint32_t>(get_be(p + 8, 4));
  out.frame.timestamp = get_be(p + 12, 8);
  out.frame.payload.assign(p + kFrameHeaderBytes, p + body);
  out.consumed = total;
  return out;
}

void FrameParser::feed(std::span<const std::uint8_t> bytes) {
  if (head_ > 0 && head_ * 2 >= buf_.size()) {
    buf_.erase(buf_.begin(), buf_.begin() + static_cast<std::ptrdiff_t>(head_));
    head_ = 0;
  }
  buf_.insert(buf_.end(), bytes.begin(), bytes.end());
}

FrameParser::Result FrameParser::next() {
  if (head_ == buf_.size()) return {};
  try {
    DecodedFrame d = decode_frame(std::span<const std::uint8_t>(buf_).subspan(head_));
    head_ += d.consumed;
    return {std::move(d.frame), std::nullopt};
  } catch (const FrameError& e) {
    switch (e.code()) {
      case FrameErrc::Truncated:
        return {};
      case FrameErrc::CrcMismatch:
        head_ += e.frame_size();
        return {std::nullopt, e.code()};
      default:
        return {std::nullopt, e.code()};
    }
  }
}

SequenceEvent SequenceTracker::observe(std::uint8_t channel_id, std::uint32_t sequence) {
  auto& last = last_[channel_id];
  if (!last) {
    last = sequence;
    return {};
  }
  const std::uint32_t delta = sequence - *last;
  if (delta == 1) {
    last = sequence;
    return {};
  }
  if (delta == 0 || delta >= 0x80000000u) {
    ++duplicates_;
    return {SequenceEvent::Kind::Duplicate, 0};
  }
  last = sequence;
  ++gaps_;
  missing_ += delta - 1;
  return {SequenceEvent::Kind::Gap, delta - 1};
}

double required_rate(double channels, double sample_rate_hz, double bits) {
  return channels * sample_rate_hz * bits;
}

double lane_budget(int n_lanes, double per_lane_bps, double encoding_overhead_factor) {
  if (n_lanes < 1) throw std::invalid_argument("lane_budget: n_lanes must be >= 1");
  if (!(encoding_overhead_factor > 0.0))
    throw std::invalid_argument("lane_budget: overhead factor must be > 0");
  return static_cast<double>(n_lanes) * per_lane_bps / encoding_overhead_factor;
}

double per_lane_rate(double required_bps, int n_lanes, double encoding_overhead_factor) {
  if (n_lanes < 1) throw std::invalid_argument("per_lane_rate: n_lanes must be >= 1");
  return required_bps * encoding_overhead_factor / static_cast<double>(n_lanes);
}

BandwidthBudget make_budget(double required_bps, double available_bps) {
  return {required_bps, available_bps, required_bps <= available_bps};
}

std::map<std::uint8_t, int> assign_lanes(std::span<const std::uint8_t> channel_ids, int n_lanes) {
  if (n_lanes < 1) throw std::invalid_argument("assign_lanes: n_lanes must be >= 1");
  std::map<std::uint8_t, int> map;
  int next = 0;
  for (const std::uint8_t ch : channel_ids) {
    if (map.contains(ch)) continue;
    map[ch] = next;
    next = (next + 1) % n_lanes;
  }
  return map;
}

}  // namespace ship
