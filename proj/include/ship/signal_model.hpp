#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <vector>

namespace ship {

/// Front-end converter description. Codes span the signed 16-bit range and
/// map symmetrically onto +/- full_scale_vpp / 2.
struct AdcConfig {
  double sample_rate_hz = 10e6;
  int bits = 16;
  double full_scale_vpp = 1.9;

  /// Throws std::invalid_argument on a violated invariant.
  void validate() const;
  double volts_per_code() const { return full_scale_vpp / 2.0 / 32767.0; }
};

struct ToneSpec {
  double freq_hz = 0.0;
  double amplitude_v = 0.0;  // peak
  double phase_rad = 0.0;
  double noise_sigma_v = 0.0;
  double dc_offset_v = 0.0;

  void validate(const AdcConfig& adc) const;
};

/// Contiguous run of codes from one channel. start_sample_index counts
/// samples since the run start (index 0 is the PPS edge).
struct WaveformBlock {
  std::uint8_t channel_id = 0;
  std::int64_t start_sample_index = 0;
  std::vector<std::int16_t> samples;

  bool operator==(const WaveformBlock&) const = default;
};

/// Saturating conversion, rounding half away from zero.
std::int16_t quantize_volts(double volts, const AdcConfig& adc);
double dequantize_code(std::int16_t code, const AdcConfig& adc);

/// Stateful per-channel sample source. The noise generator carries over
/// between calls, so consecutive blocks form one continuous record.
///
/// Tones whose frequency is a rational multiple of the sample rate with a
/// period of at most kMaxTablePeriod samples are served from a one-period
/// table; other frequencies evaluate the cosine per sample with the phase
/// reduced in extended precision.
class ToneSynthesizer {
 public:
  static constexpr std::size_t kMaxTablePeriod = 1u << 16;

  ToneSynthesizer(const ToneSpec& tone, const AdcConfig& adc, std::uint64_t seed);

  void fill(std::int64_t start_sample_index, std::vector<std::int16_t>& out, std::size_t n);
  WaveformBlock next_block(std::uint8_t channel_id, std::int64_t start_sample_index, std::size_t n);

  /// Runtime adjustments (slow-control bias and noise). Frequency, amplitude
  /// and phase are fixed for the lifetime of the synthesizer.
  void set_dc_offset(double volts) { tone_.dc_offset_v = volts; }
  void set_noise_sigma(double volts);

  const ToneSpec& tone() const { return tone_; }
  std::optional<std::size_t> table_period() const {
    return table_.empty() ? std::nullopt : std::optional<std::size_t>(table_.size());
  }

  /// Noise-free voltage at an absolute sample index.
  double ideal_volts(std::int64_t sample_index) const;

 private:
  ToneSpec tone_;
  AdcConfig adc_;
  long double cycles_per_sample_;
  std::vector<double> table_;  // amplitude * cos(...) over one period
  std::vector<std::int16_t> code_table_;  // quantized dc + table_, noiseless runs only
  double code_table_dc_ = 0.0;
  std::mt19937_64 rng_;
  std::normal_distribution<double> noise_;
};

/// Deterministic in rng_seed. Throws std::invalid_argument when n == 0.
WaveformBlock synthesize_block(const ToneSpec& tone, const AdcConfig& adc, std::uint8_t channel_id,
                               std::int64_t start_sample_index, std::size_t n,
                               std::uint64_t rng_seed);

}  // namespace ship
