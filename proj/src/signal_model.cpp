#include "ship/signal_model.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace ship {

void AdcConfig::validate() const {
  if (!(sample_rate_hz > 0.0)) throw std::invalid_argument("adc: sample_rate_hz must be > 0");
  if (bits != 16) throw std::invalid_argument("adc: bits must be 16");
  if (!(full_scale_vpp > 0.0)) throw std::invalid_argument("adc: full_scale_vpp must be > 0");
}

void ToneSpec::validate(const AdcConfig& adc) const {
  if (!(amplitude_v >= 0.0)) throw std::invalid_argument("tone: amplitude_v must be >= 0");
  if (!(noise_sigma_v >= 0.0)) throw std::invalid_argument("tone: noise_sigma_v must be >= 0");
  if (!(freq_hz >= 0.0) || !(freq_hz < adc.sample_rate_hz / 2.0))
    throw std::invalid_argument("tone: freq_hz must lie in [0, sample_rate_hz/2)");
}

std::int16_t quantize_volts(double volts, const AdcConfig& adc) {
  const double scaled = volts / (adc.full_scale_vpp / 2.0) * 32767.0;
  if (std::isnan(scaled)) return 0;
  // std::round is half away from zero; clamp before the integer conversion.
  const double r = std::round(std::clamp(scaled, -32768.0, 32767.0));
  return static_cast<std::int16_t>(r);
}

double dequantize_code(std::int16_t code, const AdcConfig& adc) {
  return static_cast<double>(code) / 32767.0 * (adc.full_scale_vpp / 2.0);
}

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

long double frac(long double x) { return x - std::floor(x); }

}  // namespace

ToneSynthesizer::ToneSynthesizer(const ToneSpec& tone, const AdcConfig& adc, std::uint64_t seed)
    : tone_(tone),
      adc_(adc),
      cycles_per_sample_(static_cast<long double>(tone.freq_hz) /
                         static_cast<long double>(adc.sample_rate_hz)),
      rng_(seed),
      noise_(0.0, tone.noise_sigma_v > 0.0 ? tone.noise_sigma_v : 1.0) {
  adc_.validate();
  tone_.validate(adc_);

  for (std::size_t period = 1; period <= kMaxTablePeriod; ++period) {
    const long double cycles = cycles_per_sample_ * static_cast<long double>(period);
    const long double whole = std::round(cycles);
    if (std::fabs(cycles - whole) < 1e-9L) {
      const auto m = static_cast<std::uint64_t>(whole);
      table_.resize(period);
      for (std::size_t j = 0; j < period; ++j) {
        const double phase_frac =
            static_cast<double>((m * j) % period) / static_cast<double>(period);
        table_[j] = tone_.amplitude_v * std::cos(kTwoPi * phase_frac + tone_.phase_rad);
      }
      break;
    }
  }
}

void ToneSynthesizer::set_noise_sigma(double volts) {
  if (!(volts >= 0.0)) throw std::invalid_argument("tone: noise_sigma_v must be >= 0");
  tone_.noise_sigma_v = volts;
  if (volts > 0.0) noise_ = std::normal_distribution<double>(0.0, volts);
}

double ToneSynthesizer::ideal_volts(std::int64_t sample_index) const {
  if (!table_.empty()) {
    const auto p = static_cast<std::int64_t>(table_.size());
    const auto j = static_cast<std::size_t>(((sample_index % p) + p) % p);
    return tone_.dc_offset_v + table_[j];
  }
  const long double cyc = frac(cycles_per_sample_ * static_cast<long double>(sample_index));
  return tone_.dc_offset_v +
         tone_.amplitude_v * std::cos(kTwoPi * static_cast<double>(cyc) + tone_.phase_rad);
}

void ToneSynthesizer::fill(std::int64_t start_sample_index, std::vector<std::int16_t>& out,
                           std::size_t n) {
  out.resize(n);
  const bool noisy = tone_.noise_sigma_v > 0.0;
  const double dc = tone_.dc_offset_v;

  if (!table_.empty() && !noisy) {
    if (code_table_.empty() || code_table_dc_ != dc) {
      code_table_.resize(table_.size());
      for (std::size_t j = 0; j < table_.size(); ++j) code_table_[j] = quantize_volts(dc + table_[j], adc_);
      code_table_dc_ = dc;
    }
    const std::size_t p = code_table_.size();
    const auto sp = static_cast<std::int64_t>(p);
    auto j = static_cast<std::size_t>(((start_sample_index % sp) + sp) % sp);
    std::size_t i = 0;
    while (i < n) {
      const std::size_t run = std::min(n - i, p - j);
      std::copy_n(code_table_.begin() + static_cast<std::ptrdiff_t>(j), run, out.begin() + static_cast<std::ptrdiff_t>(i));
      i += run;
      j = 0;
    }
    return;
  }

  if (!table_.empty()) {
    const auto p = static_cast<std::int64_t>(table_.size());
    auto j = static_cast<std::size_t>(((start_sample_index % p) + p) % p);
    for (std::size_t i = 0; i < n; ++i) {
      double v = dc + table_[j];
      if (noisy) v += noise_(rng_);
      out[i] = quantize_volts(v, adc_);
      if (++j == table_.size()) j = 0;
    }
    return;
  }

  const double base = static_cast<double>(
      frac(cycles_per_sample_ * static_cast<long double>(start_sample_index)));
  const double step = static_cast<double>(cycles_per_sample_);
  for (std::size_t i = 0; i < n; ++i) {
    const double cyc = base + step * static_cast<double>(i);
    double v = dc + tone_.amplitude_v * std::cos(kTwoPi * cyc + tone_.phase_rad);
    if (noisy) v += noise_(rng_);
    out[i] = quantize_volts(v, adc_);
  }
}

WaveformBlock ToneSynthesizer::next_block(std::uint8_t channel_id,
                                          std::int64_t start_sample_index, std::size_t n) {
  if (n == 0) throw std::invalid_argument("synthesize: n must be > 0");
  WaveformBlock block;
  block.channel_id = channel_id;
  block.start_sample_index = start_sample_index;
  fill(start_sample_index, block.samples, n);
  return block;
}

WaveformBlock synthesize_block(const ToneSpec& tone, const AdcConfig& adc, std::uint8_t channel_id,
                               std::int64_t start_sample_index, std::size_t n,
                               std::uint64_t rng_seed) {
  if (n == 0) throw std::invalid_argument("synthesize: n must be > 0");
  ToneSynthesizer synth(tone, adc, rng_seed);
  return synth.next_block(channel_id, start_sample_index, n);
}

}  // namespace ship
