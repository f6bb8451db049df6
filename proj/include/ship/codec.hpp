#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <stdexcept>
#include <vector>

#include "ship/signal_model.hpp"

namespace ship {

// Serialized block layout (MSB first within bytes, multi-byte fields big-endian):
//   0xC5 | mode | predictor_order | rice_k | n_samples(4) | seeds(2 * order) | payload
// Payload is zero-padded to a byte boundary.

inline constexpr std::uint8_t kCodecMagic = 0xC5;
inline constexpr std::size_t kCodecHeaderBytes = 8;
inline constexpr int kRiceKMax = 30;

enum class CodecMode : std::uint8_t { Raw = 0, Predictive = 1 };

struct CodecParams {
  std::size_t block_size = 4096;
  /// Fixed predictor order; empty means pick the cheapest per block.
  std::optional<int> predictor_order;
  int k_max = kRiceKMax;

  void validate() const;
};

struct CompressedBlock {
  std::uint8_t channel_id = 0;
  std::int64_t start_sample_index = 0;

  CodecMode mode = CodecMode::Raw;
  int predictor_order = 0;
  int rice_k = 0;
  std::uint32_t n_samples = 0;

  std::vector<std::uint8_t> bytes;  // header + payload, padded
  std::size_t bit_length = 0;       // significant bits in `bytes`

  std::size_t size_bits() const { return bytes.size() * 8; }
};

enum class CodecErrc { TruncatedBitstream, MalformedHeader, MalformedPayload };

class CodecError : public std::runtime_error {
 public:
  CodecError(CodecErrc code, const char* what) : std::runtime_error(what), code_(code) {}
  CodecErrc code() const { return code_; }

 private:
  CodecErrc code_;
};

constexpr std::uint32_t zigzag_map(std::int32_t r) {
  return (static_cast<std::uint32_t>(r) << 1) ^ static_cast<std::uint32_t>(r >> 31);
}

constexpr std::int32_t zigzag_unmap(std::uint32_t u) {
  return static_cast<std::int32_t>(u >> 1) ^ -static_cast<std::int32_t>(u & 1);
}

/// Rice code of u with parameter k as a string of '0'/'1' characters.
std::string rice_encode_value(std::uint32_t u, int k);

/// Total Rice-coded length of the sequence for parameter k.
std::uint64_t rice_length(std::span<const std::uint32_t> values, int k);

/// Smallest k in [0, k_max] with minimal rice_length. The length is convex
/// in k (successive differences are non-decreasing), so a local search from
/// a mean-based estimate reaches the global minimum.
int choose_k(std::span<const std::uint32_t> values, int k_max = kRiceKMax);

/// Zigzagged residuals of predictor `order` for samples[order..n), computed
/// in 32 bits. Returns their sum.
std::uint64_t predictor_residuals(std::span<const std::int16_t> samples, int order,
                                  std::vector<std::uint32_t>& zigzags);

CompressedBlock compress_block(const WaveformBlock& block, const CodecParams& params = {});

/// Throws CodecError.
WaveformBlock decompress_block(const CompressedBlock& cb);
WaveformBlock decompress_bytes(std::span<const std::uint8_t> bytes, std::size_t bit_length,
                               std::uint8_t channel_id, std::int64_t start_sample_index);
/// Decodes into out.samples, reusing its storage; channel_id and
/// start_sample_index are left as they are.
void decompress_into(std::span<const std::uint8_t> bytes, std::size_t bit_length, WaveformBlock& out);

/// raw_bits / compressed_bits. Throws std::invalid_argument if compressed_bits == 0.
double compression_ratio(std::uint64_t raw_bits, std::uint64_t compressed_bits);

}  // namespace ship
