#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

namespace ship {

// Frame layout (network byte order):
//   "SHIP" | version=1 | channel | flags | reserved=0 | sequence(4) | timestamp(8)
//   | payload_len(4) | payload | crc32c(4) over everything before it.

inline constexpr std::array<std::uint8_t, 4> kFrameMagic{0x53, 0x48, 0x49, 0x50};
inline constexpr std::uint8_t kFrameVersion = 1;
inline constexpr std::size_t kFrameHeaderBytes = 24;
inline constexpr std::size_t kFrameTrailerBytes = 4;
inline constexpr std::size_t kMaxPayloadBytes = (std::size_t{1} << 24) - 1;

inline constexpr std::uint8_t kFlagCompressed = 0x01;

struct StreamFrame {
  std::uint8_t channel_id = 0;
  std::uint8_t flags = 0;
  std::uint32_t sequence = 0;
  std::uint64_t timestamp = 0;  // start_sample_index of the carried block
  std::vector<std::uint8_t> payload;

  bool compressed() const { return (flags & kFlagCompressed) != 0; }
  bool operator==(const StreamFrame&) const = default;
};

enum class FrameErrc { BadMagic, UnsupportedVersion, Truncated, CrcMismatch, PayloadTooLarge };

const char* to_string(FrameErrc code);

class FrameError : public std::runtime_error {
 public:
  FrameError(FrameErrc code, std::size_t frame_size = 0);
  FrameErrc code() const { return code_; }
  /// Full length of the offending frame when the header was readable (CrcMismatch).
  std::size_t frame_size() const { return frame_size_; }

 private:
  FrameErrc code_;
  std::size_t frame_size_;
};

std::size_t encoded_frame_size(std::size_t payload_len);

/// Appends one frame to `out`. Throws FrameError(PayloadTooLarge).
void append_frame(std::vector<std::uint8_t>& out, std::uint8_t channel_id, std::uint8_t flags,
                  std::uint32_t sequence, std::uint64_t timestamp,
                  std::span<const std::uint8_t> payload);

std::vector<std::uint8_t> encode_frame(std::uint8_t channel_id, std::uint8_t flags,
                                       std::uint32_t sequence, std::uint64_t timestamp,
                                       std::span<const std::uint8_t> payload);
std::vector<std::uint8_t> encode_frame(const StreamFrame& frame);

struct DecodedFrame {
  StreamFrame frame;
  std::size_t consumed = 0;
};

/// Parses the frame at the front of `bytes`; trailing bytes are left for
/// the caller. Throws FrameError.
DecodedFrame decode_frame(std::span<const std::uint8_t> bytes);

/// Incremental parser for one lane's byte stream.
class FrameParser {
 public:
  struct Result {
    std::optional<StreamFrame> frame;
    std::optional<FrameErrc> error;
  };

  void feed(std::span<const std::uint8_t> bytes);

  /// Next complete frame, or an error for a frame that could be delimited
  /// but failed validation (it is skipped). Empty result: need more bytes.
  /// BadMagic and UnsupportedVersion leave the stream unsynchronized; the
  /// parser stops consuming and reports the same error again.
  Result next();

  std::size_t buffered() const { return buf_.size() - head_; }

 private:
  std::vector<std::uint8_t> buf_;
  std::size_t head_ = 0;
};

// Sequence numbers wrap mod 2^32. A forward jump below 2^31 is a gap;
// anything else that is not the successor counts as a duplicate/late frame.
struct SequenceEvent {
  enum class Kind { InOrder, Gap, Duplicate };
  Kind kind = Kind::InOrder;
  std::uint32_t missing = 0;

  bool operator==(const SequenceEvent&) const = default;
};

class SequenceTracker {
 public:
  SequenceEvent observe(std::uint8_t channel_id, std::uint32_t sequence);

  std::uint64_t gaps() const { return gaps_; }
  std::uint64_t missing() const { return missing_; }
  std::uint64_t duplicates() const { return duplicates_; }

 private:
  std::array<std::optional<std::uint32_t>, 256> last_{};
  std::uint64_t gaps_ = 0;
  std::uint64_t missing_ = 0;
  std::uint64_t duplicates_ = 0;
};

// Bandwidth accounting, all in bits per second.

struct BandwidthBudget {
  double required_bps = 0.0;
  double available_bps = 0.0;
  bool feasible = true;
};

double required_rate(double channels, double sample_rate_hz, double bits);
/// n_lanes * per_lane_bps / encoding_overhead_factor. Throws std::invalid_argument if n_lanes < 1.
double lane_budget(int n_lanes, double per_lane_bps, double encoding_overhead_factor);
/// Line rate each lane must carry for a raw rate spread over n_lanes.
double per_lane_rate(double required_bps, int n_lanes, double encoding_overhead_factor);
BandwidthBudget make_budget(double required_bps, double available_bps);

/// Static round-robin channel -> lane assignment in the order given.
std::map<std::uint8_t, int> assign_lanes(std::span<const std::uint8_t> channel_ids, int n_lanes);

}  // namespace ship
