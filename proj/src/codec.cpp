#include "ship/codec.hpp"

#include <algorithm>
#include <bit>
#include <limits>

#include "ship/bit_io.hpp"
#include "ship/cpu_features.hpp"

namespace ship {

void CodecParams::validate() const {
  if (block_size < 2) throw std::invalid_argument("codec: block_size must be >= 2");
  if (predictor_order && (*predictor_order < 0 || *predictor_order > 2))
    throw std::invalid_argument("codec: predictor_order must be 0, 1 or 2");
  if (k_max < 0 || k_max > kRiceKMax) throw std::invalid_argument("codec: k_max must be in [0, 30]");
}

std::string rice_encode_value(std::uint32_t u, int k) {
  std::string bits(u >> k, '1');
  bits.push_back('0');
  for (int b = k - 1; b >= 0; --b) bits.push_back(((u >> b) & 1u) ? '1' : '0');
  return bits;
}

namespace {

// Quotient sums are taken in 32-bit lanes over chunks short enough that a
// lane cannot overflow (zigzagged residuals stay below 2^18).
constexpr std::size_t kSumChunk = 8192;

SHIP_ALWAYS_INLINE std::uint64_t quotient_sum(std::span<const std::uint32_t> values, int k) {
  std::uint64_t total = 0;
  for (std::size_t base = 0; base < values.size(); base += kSumChunk) {
    const std::size_t end = std::min(values.size(), base + kSumChunk);
    std::uint32_t part = 0;
    for (std::size_t i = base; i < end; ++i) part += values[i] >> k;
    total += part;
  }
  return total;
}

SHIP_ALWAYS_INLINE std::uint64_t length_from(std::uint64_t quotients, std::size_t n, int k) {
  return quotients + static_cast<std::uint64_t>(n) * static_cast<std::uint64_t>(k + 1);
}

// Local search from a mean-based estimate; `sum` is the sum of the values.
// Returns k and writes the coded length at k to `len_out`.
SHIP_ALWAYS_INLINE int choose_k_impl(std::span<const std::uint32_t> values, std::uint64_t sum,
                                     int k_max, std::uint64_t& len_out) {
  len_out = 0;
  if (values.empty()) return 0;
  const std::size_t n = values.size();
  const std::uint64_t mean = sum / n;
  int k = mean == 0 ? 0 : static_cast<int>(std::bit_width(mean)) - 1;
  k = std::clamp(k, 0, k_max);

  // Lengths at k - 1, k and k + 1 in one pass.
  const int lo_shift = k > 0 ? k - 1 : 0;
  std::uint64_t q_lo = 0, q_mid = 0, q_hi = 0;
  for (std::size_t base = 0; base < n; base += kSumChunk) {
    const std::size_t end = std::min(n, base + kSumChunk);
    std::uint32_t lo = 0, mid = 0, hi = 0;
    for (std::size_t i = base; i < end; ++i) {
      const std::uint32_t u = values[i];
      lo += u >> lo_shift;
      mid += u >> k;
      hi += u >> (k + 1);
    }
    q_lo += lo;
    q_mid += mid;
    q_hi += hi;
  }
  std::uint64_t len = length_from(q_mid, n, k);
  if (k > 0 && length_from(q_lo, n, k - 1) <= len) {
    --k;
    len = length_from(q_lo, n, k);
    while (k > 0) {
      const std::uint64_t lower = length_from(quotient_sum(values, k - 1), n, k - 1);
      if (lower > len) break;
      --k;
      len = lower;
    }
  } else if (k < k_max && length_from(q_hi, n, k + 1) < len) {
    ++k;
    len = length_from(q_hi, n, k);
    while (k < k_max) {
      const std::uint64_t higher = length_from(quotient_sum(values, k + 1), n, k + 1);
      if (higher >= len) break;
      ++k;
      len = higher;
    }
  }
  len_out = len;
  return k;
}

SHIP_ALWAYS_INLINE std::uint64_t residuals_impl(std::span<const std::int16_t> samples, int order,
                                                std::vector<std::uint32_t>& zigzags) {
  const std::size_t n = samples.size();
  const auto o = static_cast<std::size_t>(order);
  zigzags.resize(n > o ? n - o : 0);
  std::uint32_t* z = zigzags.data();
  const std::int16_t* x = samples.data();
  switch (order) {
    case 0:
      for (std::size_t i = 0; i < n; ++i) z[i] = zigzag_map(x[i]);
      break;
    case 1:
      for (std::size_t i = 1; i < n; ++i) z[i - 1] = zigzag_map(std::int32_t{x[i]} - std::int32_t{x[i - 1]});
      break;
    case 2:
      for (std::size_t i = 2; i < n; ++i)
        z[i - 2] = zigzag_map(std::int32_t{x[i]} - 2 * std::int32_t{x[i - 1]} + std::int32_t{x[i - 2]});
      break;
    default:
      throw std::invalid_argument("codec: predictor order out of range");
  }
  std::uint64_t sum = 0;
  for (std::size_t base = 0; base < zigzags.size(); base += kSumChunk) {
    const std::size_t end = std::min(zigzags.size(), base + kSumChunk);
    std::uint32_t part = 0;
    for (std::size_t i = base; i < end; ++i) part += z[i];
    sum += part;
  }
  return sum;
}

void put_header(BitWriter& w, CodecMode mode, int order, int k, std::uint32_t n) {
  w.put(kCodecMagic, 8);
  w.put(static_cast<std::uint32_t>(mode), 8);
  w.put(static_cast<std::uint32_t>(order), 8);
  w.put(static_cast<std::uint32_t>(k), 8);
  w.put(n, 32);
}

using PutRunFn = void (*)(BitWriter&, std::span<const std::uint32_t>, int);

template <PutRunFn PutRun>
SHIP_ALWAYS_INLINE CompressedBlock compress_impl(const WaveformBlock& block, const CodecParams& params) {
  const std::span<const std::int16_t> x(block.samples);
  const std::size_t n = x.size();
  if (n == 0) throw std::invalid_argument("codec: empty block");
  if (n > std::numeric_limits<std::uint32_t>::max())
    throw std::invalid_argument("codec: block too large");

  CompressedBlock out;
  out.channel_id = block.channel_id;
  out.start_sample_index = block.start_sample_index;
  out.n_samples = static_cast<std::uint32_t>(n);

  const std::uint64_t raw_bits = kCodecHeaderBytes * 8 + 16 * static_cast<std::uint64_t>(n);

  int first = 0, last = 2;
  if (params.predictor_order) first = last = *params.predictor_order;

  thread_local std::vector<std::uint32_t> zz;
  thread_local std::vector<std::uint32_t> best_zz;
  std::uint64_t best_bits = std::numeric_limits<std::uint64_t>::max();
  int best_order = -1, best_k = 0;
  for (int order = first; order <= last; ++order) {
    if (static_cast<std::size_t>(order) > n) continue;
    const std::uint64_t sum = residuals_impl(x, order, zz);
    std::uint64_t payload_bits = 0;
    const int k = choose_k_impl(zz, sum, params.k_max, payload_bits);
    const std::uint64_t bits = kCodecHeaderBytes * 8 + 16 * static_cast<std::uint64_t>(order) + payload_bits;
    if (bits < best_bits) {
      best_bits = bits;
      best_order = order;
      best_k = k;
      best_zz.swap(zz);
    }
  }

  BitWriter w;
  if (best_order < 0 || best_bits >= raw_bits) {
    out.mode = CodecMode::Raw;
    w.reserve_bytes(raw_bits / 8);
    put_header(w, CodecMode::Raw, 0, 0, out.n_samples);
    for (const std::int16_t s : x) w.put(static_cast<std::uint16_t>(s), 16);
  } else {
    out.mode = CodecMode::Predictive;
    out.predictor_order = best_order;
    out.rice_k = best_k;
    w.reserve_bytes(best_bits / 8 + 1);
    put_header(w, CodecMode::Predictive, best_order, best_k, out.n_samples);
    for (int i = 0; i < best_order; ++i) w.put(static_cast<std::uint16_t>(x[static_cast<std::size_t>(i)]), 16);
    PutRun(w, best_zz, best_k);
  }
  out.bit_length = w.bit_count();
  out.bytes = w.finish();
  return out;
}

SHIP_ALWAYS_INLINE void decompress_impl(std::span<const std::uint8_t> bytes, std::size_t bit_length,
                                       WaveformBlock& out) {
  BitReader r(bytes, bit_length);

  try {
    if (r.get(8) != kCodecMagic) throw CodecError(CodecErrc::MalformedHeader, "codec: bad magic");
    const std::uint32_t mode = r.get(8);
    const auto order = static_cast<int>(r.get(8));
    const auto k = static_cast<int>(r.get(8));
    const std::uint32_t n = r.get(32);

    if (n == 0) throw CodecError(CodecErrc::MalformedHeader, "codec: zero-length block");
    if (mode == static_cast<std::uint32_t>(CodecMode::Raw)) {
      if (order != 0 || k != 0)
        throw CodecError(CodecErrc::MalformedHeader, "codec: raw block with predictor fields");
      if (r.remaining() < 16 * static_cast<std::uint64_t>(n)) throw BitstreamTruncated();
      out.samples.resize(n);
      for (auto& s : out.samples) s = static_cast<std::int16_t>(static_cast<std::uint16_t>(r.get(16)));
      return;
    }
    if (mode != static_cast<std::uint32_t>(CodecMode::Predictive))
      throw CodecError(CodecErrc::MalformedHeader, "codec: unknown mode");
    if (order > 2) throw CodecError(CodecErrc::MalformedHeader, "codec: unknown predictor order");
    if (k > kRiceKMax) throw CodecError(CodecErrc::MalformedHeader, "codec: rice k out of range");
    if (static_cast<std::uint32_t>(order) > n)
      throw CodecError(CodecErrc::MalformedHeader, "codec: more seeds than samples");
    // Every coded residual takes at least k + 1 bits.
    if (r.remaining() < 16 * static_cast<std::uint64_t>(order) +
                            static_cast<std::uint64_t>(n - order) * static_cast<std::uint64_t>(k + 1))
      throw BitstreamTruncated();

    out.samples.resize(n);
    std::int16_t* x = out.samples.data();
    for (int i = 0; i < order; ++i) x[i] = static_cast<std::int16_t>(static_cast<std::uint16_t>(r.get(16)));

    const std::size_t m = n - static_cast<std::uint32_t>(order);
    // v + 32768 has no bits above 16 exactly when v fits in 16 bits
    std::uint64_t spill = 0;
    bool fits = false;
    if (order == 0) {
      std::int16_t* dst = x;
      fits = r.get_rice_run(k, m, [&](std::uint32_t u) {
        const std::int64_t v = zigzag_unmap(u);
        spill |= static_cast<std::uint64_t>(v + 32768);
        *dst++ = static_cast<std::int16_t>(v);
      });
    } else if (order == 1) {
      std::int16_t* dst = x + 1;
      std::int64_t p1 = x[0];
      fits = r.get_rice_run(k, m, [&](std::uint32_t u) {
        const std::int64_t v = p1 + zigzag_unmap(u);
        spill |= static_cast<std::uint64_t>(v + 32768);
        p1 = static_cast<std::int16_t>(v);
        *dst++ = static_cast<std::int16_t>(v);
      });
    } else {
      std::int16_t* dst = x + 2;
      std::int64_t p2 = x[0], p1 = x[1];
      fits = r.get_rice_run(k, m, [&](std::uint32_t u) {
        const std::int64_t v = 2 * p1 - p2 + zigzag_unmap(u);
        spill |= static_cast<std::uint64_t>(v + 32768);
        p2 = p1;
        p1 = static_cast<std::int16_t>(v);
        *dst++ = static_cast<std::int16_t>(v);
      });
    }
    if (!fits) throw CodecError(CodecErrc::MalformedPayload, "codec: residual overflow");
    if (spill >> 16) throw CodecError(CodecErrc::MalformedPayload, "codec: reconstructed sample out of range");
  } catch (const BitstreamTruncated&) {
    throw CodecError(CodecErrc::TruncatedBitstream, "codec: truncated bitstream");
  }
}

#ifdef SHIP_HAVE_X86_DISPATCH
SHIP_TARGET_X86_V3 std::uint64_t residuals_v3(std::span<const std::int16_t> samples, int order,
                                              std::vector<std::uint32_t>& zigzags) {
  return residuals_impl(samples, order, zigzags);
}
[[gnu::noinline]] SHIP_TARGET_X86_V3 void put_run_v3(BitWriter& w, std::span<const std::uint32_t> values, int k) {
  w.put_rice_run(values, k);
}
SHIP_TARGET_X86_V3 CompressedBlock compress_v3(const WaveformBlock& block, const CodecParams& params) {
  return compress_impl<put_run_v3>(block, params);
}
SHIP_TARGET_X86_V3 void decompress_v3(std::span<const std::uint8_t> bytes, std::size_t bit_length,
                                      WaveformBlock& out) {
  decompress_impl(bytes, bit_length, out);
}
#endif

[[gnu::noinline]] void put_run_generic(BitWriter& w, std::span<const std::uint32_t> values, int k) {
  w.put_rice_run(values, k);
}
CompressedBlock compress_generic(const WaveformBlock& block, const CodecParams& params) {
  return compress_impl<put_run_generic>(block, params);
}
void decompress_generic(std::span<const std::uint8_t> bytes, std::size_t bit_length, WaveformBlock& out) {
  decompress_impl(bytes, bit_length, out);
}

}  // namespace

std::uint64_t rice_length(std::span<const std::uint32_t> values, int k) {
  std::uint64_t quotients = 0;
  for (const std::uint32_t u : values) quotients += u >> k;
  return length_from(quotients, values.size(), k);
}

int choose_k(std::span<const std::uint32_t> values, int k_max) {
  for (const std::uint32_t u : values)
    if (u >= (1u << 19)) {
      // the chunked 32-bit sums assume values below 2^19
      int best = 0;
      std::uint64_t best_len = rice_length(values, 0);
      for (int k = 1; k <= k_max; ++k) {
        const std::uint64_t len = rice_length(values, k);
        if (len < best_len) {
          best = k;
          best_len = len;
        }
      }
      return best;
    }
  std::uint64_t sum = 0;
  for (const std::uint32_t u : values) sum += u;
  std::uint64_t len = 0;
  return choose_k_impl(values, sum, k_max, len);
}

std::uint64_t predictor_residuals(std::span<const std::int16_t> samples, int order,
                                  std::vector<std::uint32_t>& zigzags) {
#ifdef SHIP_HAVE_X86_DISPATCH
  if (cpu_has_x86_v3()) return residuals_v3(samples, order, zigzags);
#endif
  return residuals_impl(samples, order, zigzags);
}

CompressedBlock compress_block(const WaveformBlock& block, const CodecParams& params) {
  params.validate();
#ifdef SHIP_HAVE_X86_DISPATCH
  if (cpu_has_x86_v3()) return compress_v3(block, params);
#endif
  return compress_generic(block, params);
}

WaveformBlock decompress_block(const CompressedBlock& cb) {
  return decompress_bytes(cb.bytes, cb.bit_length, cb.channel_id, cb.start_sample_index);
}

WaveformBlock decompress_bytes(std::span<const std::uint8_t> bytes, std::size_t bit_length,
                               std::uint8_t channel_id, std::int64_t start_sample_index) {
  WaveformBlock out;
  out.channel_id = channel_id;
  out.start_sample_index = start_sample_index;
  decompress_into(bytes, bit_length, out);
  return out;
}

void decompress_into(std::span<const std::uint8_t> bytes, std::size_t bit_length, WaveformBlock& out) {
#ifdef SHIP_HAVE_X86_DISPATCH
  if (cpu_has_x86_v3()) return decompress_v3(bytes, bit_length, out);
#endif
  decompress_generic(bytes, bit_length, out);
}

double compression_ratio(std::uint64_t raw_bits, std::uint64_t compressed_bits) {
  if (compressed_bits == 0) throw std::invalid_argument("compression_ratio: compressed_bits == 0");
  return static_cast<double>(raw_bits) / static_cast<double>(compressed_bits);
}

}  // namespace ship
