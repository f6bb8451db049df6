#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <span>
#include <stdexcept>
#include <vector>

#include "ship/signal_model.hpp"

namespace ship {

/// Coherent demodulation setup: the window must hold an integer number of
/// reference periods (cycles_per_window = f_if_hz * window_n / fs_hz).
struct DemodConfig {
  double f_if_hz = 250e3;
  double fs_hz = 10e6;
  std::size_t window_n = 1000;
};

enum class DemodErrc { NonIntegerPeriodWindow, InvalidWindow, WindowLengthMismatch, MeanAmplitudeZero };

class DemodError : public std::runtime_error {
 public:
  DemodError(DemodErrc code, const char* what) : std::runtime_error(what), code_(code) {}
  DemodErrc code() const { return code_; }

 private:
  DemodErrc code_;
};

/// Validates the config and returns the integer cycle count per window.
/// Throws DemodError (NonIntegerPeriodWindow, InvalidWindow).
std::uint64_t cycles_per_window(const DemodConfig& cfg);

struct IqPair {
  double i = 0.0;
  double q = 0.0;
};

struct IqMeasurement {
  std::uint8_t channel_id = 0;
  std::int64_t window_start_sample_index = 0;
  double i_value = 0.0;  // code units
  double q_value = 0.0;
  double amplitude_v = 0.0;
  double phase_rad = 0.0;  // (-pi, pi]
};

struct StabilityReport {
  std::size_t n_windows = 0;
  double amp_mean_v = 0.0;
  double amp_rel_std = 0.0;
  double phase_std_deg = 0.0;
};

/// cos/sin of the reference at phase index j = (m * sample_index) mod N.
/// Integer phase indexing keeps the reference exact at any absolute index.
class ReferenceTable {
 public:
  explicit ReferenceTable(const DemodConfig& cfg);

  std::size_t window() const { return cos_.size(); }
  std::uint64_t cycles() const { return m_; }
  std::size_t phase_index(std::int64_t sample_index) const;
  /// Index advance per sample.
  std::size_t step() const { return static_cast<std::size_t>(m_ % cos_.size()); }

  double cos_at(std::size_t j) const { return cos_[j]; }
  double sin_at(std::size_t j) const { return sin_[j]; }

 private:
  std::uint64_t m_;
  std::vector<double> cos_;
  std::vector<double> sin_;
};

/// I = (2/N) sum x[n] cos(w (s+n)),  Q = -(2/N) sum x[n] sin(w (s+n)).
/// For x = A cos(w n + phi) this yields (A cos phi, A sin phi).
template <typename Sample>
IqPair iq_demod_window(std::span<const Sample> samples, const ReferenceTable& ref,
                       std::int64_t start_index) {
  const std::size_t n = ref.window();
  if (samples.size() != n)
    throw DemodError(DemodErrc::WindowLengthMismatch, "demod: sample count != window_n");
  const std::size_t step = ref.step();
  std::size_t j = ref.phase_index(start_index);
  double si = 0.0, sq = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    const double x = static_cast<double>(samples[k]);
    si += x * ref.cos_at(j);
    sq += x * ref.sin_at(j);
    j += step;
    if (j >= n) j -= n;
  }
  const double scale = 2.0 / static_cast<double>(n);
  return {scale * si, -scale * sq};
}

template <typename Sample>
IqPair iq_demod_window(std::span<const Sample> samples, const DemodConfig& cfg,
                       std::int64_t start_index) {
  return iq_demod_window(samples, ReferenceTable(cfg), start_index);
}

/// Amplitude (volts, via the ADC scale) and phase = atan2(Q, I) folded into
/// (-pi, pi]; the zero vector has phase 0.
IqMeasurement amp_phase(double i_value, double q_value, const AdcConfig& adc);

/// Per-channel window assembler. Blocks must arrive in sample order; a jump
/// in start_sample_index discards the partial window and realigns.
class ChannelDemodulator {
 public:
  ChannelDemodulator(std::uint8_t channel_id, const DemodConfig& cfg, const AdcConfig& adc);

  /// Appends completed-window measurements to `out`.
  void push(std::span<const std::int16_t> samples, std::int64_t start_sample_index,
            std::vector<IqMeasurement>& out);

  std::size_t pending() const { return fill_; }
  std::uint64_t discontinuities() const { return discontinuities_; }

 private:
  std::uint8_t channel_;
  AdcConfig adc_;
  ReferenceTable ref_;
  std::int64_t next_index_ = 0;
  bool started_ = false;
  std::int64_t window_start_ = 0;
  std::size_t fill_ = 0;
  std::size_t rot_phase_ = static_cast<std::size_t>(-1);
  std::vector<double> rot_cos_;  // reference unrolled from the window-start phase
  std::vector<double> rot_sin_;
  double acc_i_ = 0.0;
  double acc_q_ = 0.0;
  std::uint64_t discontinuities_ = 0;
};

/// Demodulates blocks (any channel mix, per-channel order) into consecutive
/// non-overlapping windows. Trailing partial windows produce nothing.
std::vector<IqMeasurement> measure_stream(std::span<const WaveformBlock> blocks,
                                          const DemodConfig& cfg, const AdcConfig& adc);

/// Population statistics; phase spread is taken around the circular mean.
/// Throws std::invalid_argument on an empty input and DemodError(MeanAmplitudeZero).
StabilityReport stability_stats(std::span<const IqMeasurement> measurements);

/// Wraps to (-pi, pi].
double wrap_phase(double rad);

}  // namespace ship
