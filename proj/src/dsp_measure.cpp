#include "ship/dsp_measure.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <map>

#if defined(__x86_64__)
#include <immintrin.h>
#endif

#include "ship/cpu_features.hpp"

namespace ship {

namespace {
constexpr double kPi = std::numbers::pi;
}

std::uint64_t cycles_per_window(const DemodConfig& cfg) {
  if (cfg.window_n < 2) throw DemodError(DemodErrc::InvalidWindow, "demod: window_n must be >= 2");
  if (!(cfg.fs_hz > 0.0)) throw DemodError(DemodErrc::InvalidWindow, "demod: fs_hz must be > 0");
  if (!(cfg.f_if_hz > 0.0))
    throw DemodError(DemodErrc::NonIntegerPeriodWindow, "demod: f_if_hz must be > 0");
  const double cycles = cfg.f_if_hz * static_cast<double>(cfg.window_n) / cfg.fs_hz;
  const double whole = std::round(cycles);
  if (whole < 1.0 || std::fabs(cycles - whole) > 1e-9 * std::max(1.0, whole))
    throw DemodError(DemodErrc::NonIntegerPeriodWindow,
                     "demod: f_if_hz * window_n / fs_hz must be an integer >= 1");
  const auto m = static_cast<std::uint64_t>(whole);
  if (2 * m >= cfg.window_n)
    throw DemodError(DemodErrc::InvalidWindow, "demod: f_if_hz must be below fs_hz / 2");
  return m;
}

ReferenceTable::ReferenceTable(const DemodConfig& cfg)
    : m_(cycles_per_window(cfg)), cos_(cfg.window_n), sin_(cfg.window_n) {
  const double n = static_cast<double>(cfg.window_n);
  for (std::size_t j = 0; j < cfg.window_n; ++j) {
    const double arg = 2.0 * kPi * static_cast<double>(j) / n;
    cos_[j] = std::cos(arg);
    sin_[j] = std::sin(arg);
  }
}

std::size_t ReferenceTable::phase_index(std::int64_t sample_index) const {
  const auto n = static_cast<std::int64_t>(cos_.size());
  const auto s = static_cast<std::uint64_t>(((sample_index % n) + n) % n);
  return static_cast<std::size_t>((m_ % cos_.size()) * s % cos_.size());
}

double wrap_phase(double rad) {
  double r = std::remainder(rad, 2.0 * kPi);
  if (r <= -kPi) r += 2.0 * kPi;
  if (r > kPi) r -= 2.0 * kPi;
  return r;
}

IqMeasurement amp_phase(double i_value, double q_value, const AdcConfig& adc) {
  IqMeasurement m;
  m.i_value = i_value;
  m.q_value = q_value;
  m.amplitude_v = std::hypot(i_value, q_value) * adc.volts_per_code();
  if (i_value == 0.0 && q_value == 0.0) {
    m.phase_rad = 0.0;
  } else {
    m.phase_rad = std::atan2(q_value, i_value);
    if (m.phase_rad <= -kPi) m.phase_rad = kPi;
  }
  return m;
}

ChannelDemodulator::ChannelDemodulator(std::uint8_t channel_id, const DemodConfig& cfg,
                                       const AdcConfig& adc)
    : channel_(channel_id), adc_(adc), ref_(cfg) {}

namespace {

// Same arithmetic on every path (no FMA, same 8-lane split), so results do
// not depend on the CPU.
SHIP_ALWAYS_INLINE void dot_iq_tail(const std::int16_t* x, const double* c, const double* s, std::size_t k,
                                    std::size_t n, double* ai, double* aq, double& acc_i, double& acc_q) {
  for (; k < n; ++k) {
    const double v = x[k];
    ai[0] += v * c[k];
    aq[0] += v * s[k];
  }
  acc_i += ((ai[0] + ai[4]) + (ai[1] + ai[5])) + ((ai[2] + ai[6]) + (ai[3] + ai[7]));
  acc_q += ((aq[0] + aq[4]) + (aq[1] + aq[5])) + ((aq[2] + aq[6]) + (aq[3] + aq[7]));
}

void dot_iq_generic(const std::int16_t* x, const double* c, const double* s, std::size_t n, double& acc_i,
                    double& acc_q) {
  double ai[8] = {}, aq[8] = {};
  std::size_t k = 0;
  for (; k + 8 <= n; k += 8) {
    for (std::size_t l = 0; l < 8; ++l) {
      const double v = x[k + l];
      ai[l] += v * c[k + l];
      aq[l] += v * s[k + l];
    }
  }
  dot_iq_tail(x, c, s, k, n, ai, aq, acc_i, acc_q);
}

#ifdef SHIP_HAVE_X86_DISPATCH
__attribute__((target("avx2"))) void dot_iq_avx2(const std::int16_t* x, const double* c, const double* s,
                                                 std::size_t n, double& acc_i, double& acc_q) {
  __m256d vi0 = _mm256_setzero_pd(), vi1 = _mm256_setzero_pd();
  __m256d vq0 = _mm256_setzero_pd(), vq1 = _mm256_setzero_pd();
  std::size_t k = 0;
  for (; k + 8 <= n; k += 8) {
    const __m128i raw = _mm_loadu_si128(reinterpret_cast<const __m128i*>(x + k));
    const __m256i wide = _mm256_cvtepi16_epi32(raw);
    const __m256d v0 = _mm256_cvtepi32_pd(_mm256_castsi256_si128(wide));
    const __m256d v1 = _mm256_cvtepi32_pd(_mm256_extracti128_si256(wide, 1));
    vi0 = _mm256_add_pd(vi0, _mm256_mul_pd(v0, _mm256_loadu_pd(c + k)));
    vi1 = _mm256_add_pd(vi1, _mm256_mul_pd(v1, _mm256_loadu_pd(c + k + 4)));
    vq0 = _mm256_add_pd(vq0, _mm256_mul_pd(v0, _mm256_loadu_pd(s + k)));
    vq1 = _mm256_add_pd(vq1, _mm256_mul_pd(v1, _mm256_loadu_pd(s + k + 4)));
  }
  alignas(32) double ai[8], aq[8];
  _mm256_store_pd(ai, vi0);
  _mm256_store_pd(ai + 4, vi1);
  _mm256_store_pd(aq, vq0);
  _mm256_store_pd(aq + 4, vq1);
  dot_iq_tail(x, c, s, k, n, ai, aq, acc_i, acc_q);
}
#endif

void dot_iq(const std::int16_t* x, const double* c, const double* s, std::size_t n, double& acc_i,
            double& acc_q) {
#ifdef SHIP_HAVE_X86_DISPATCH
  if (cpu_has_x86_v3()) return dot_iq_avx2(x, c, s, n, acc_i, acc_q);
#endif
  dot_iq_generic(x, c, s, n, acc_i, acc_q);
}

}  // namespace

void ChannelDemodulator::push(std::span<const std::int16_t> samples,
                              std::int64_t start_sample_index, std::vector<IqMeasurement>& out) {
  if (samples.empty()) return;
  const std::size_t n = ref_.window();
  if (!started_ || start_sample_index != next_index_) {
    if (started_) ++discontinuities_;
    started_ = true;
    window_start_ = start_sample_index;
    fill_ = 0;
    acc_i_ = acc_q_ = 0.0;
    // every later window starts N samples on, i.e. at the same reference phase
    const std::size_t p0 = ref_.phase_index(start_sample_index);
    if (p0 != rot_phase_) {
      rot_cos_.resize(n);
      rot_sin_.resize(n);
      const std::size_t step = ref_.step();
      std::size_t j = p0;
      for (std::size_t k = 0; k < n; ++k) {
        rot_cos_[k] = ref_.cos_at(j);
        rot_sin_[k] = ref_.sin_at(j);
        j += step;
        if (j >= n) j -= n;
      }
      rot_phase_ = p0;
    }
  }
  const double scale = 2.0 / static_cast<double>(n);
  std::size_t pos = 0;
  while (pos < samples.size()) {
    const std::size_t take = std::min(samples.size() - pos, n - fill_);
    dot_iq(samples.data() + pos, rot_cos_.data() + fill_, rot_sin_.data() + fill_, take, acc_i_, acc_q_);
    pos += take;
    fill_ += take;
    if (fill_ == n) {
      IqMeasurement m = amp_phase(scale * acc_i_, -scale * acc_q_, adc_);
      m.channel_id = channel_;
      m.window_start_sample_index = window_start_;
      out.push_back(m);
      window_start_ += static_cast<std::int64_t>(n);
      fill_ = 0;
      acc_i_ = acc_q_ = 0.0;
    }
  }
  next_index_ = start_sample_index + static_cast<std::int64_t>(samples.size());
}

std::vector<IqMeasurement> measure_stream(std::span<const WaveformBlock> blocks,
                                          const DemodConfig& cfg, const AdcConfig& adc) {
  cycles_per_window(cfg);
  std::map<std::uint8_t, ChannelDemodulator> demods;
  std::vector<IqMeasurement> out;
  for (const WaveformBlock& b : blocks) {
    auto it = demods.find(b.channel_id);
    if (it == demods.end()) it = demods.emplace(b.channel_id, ChannelDemodulator(b.channel_id, cfg, adc)).first;
    it->second.push(b.samples, b.start_sample_index, out);
  }
  return out;
}

StabilityReport stability_stats(std::span<const IqMeasurement> measurements) {
  if (measurements.empty()) throw std::invalid_argument("stability_stats: no measurements");
  const double n = static_cast<double>(measurements.size());

  double amp_sum = 0.0, sin_sum = 0.0, cos_sum = 0.0;
  for (const auto& m : measurements) {
    amp_sum += m.amplitude_v;
    sin_sum += std::sin(m.phase_rad);
    cos_sum += std::cos(m.phase_rad);
  }
  const double amp_mean = amp_sum / n;
  if (amp_mean == 0.0) throw DemodError(DemodErrc::MeanAmplitudeZero, "stability: mean amplitude is zero");
  const double circ_mean = std::atan2(sin_sum, cos_sum);

  double dev_sum = 0.0;
  for (const auto& m : measurements) dev_sum += wrap_phase(m.phase_rad - circ_mean);
  const double dev_mean = dev_sum / n;

  double amp_var = 0.0, phase_var = 0.0;
  for (const auto& m : measurements) {
    const double da = m.amplitude_v - amp_mean;
    const double dp = wrap_phase(m.phase_rad - circ_mean) - dev_mean;
    amp_var += da * da;
    phase_var += dp * dp;
  }

  StabilityReport r;
  r.n_windows = measurements.size();
  r.amp_mean_v = amp_mean;
  r.amp_rel_std = std::sqrt(amp_var / n) / amp_mean;
  r.phase_std_deg = std::sqrt(phase_var / n) * 180.0 / kPi;
  return r;
}

}  // namespace ship
