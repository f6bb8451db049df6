#include "ship/link_qual.hpp"

#include <atomic>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <random>
#include <sstream>
#include <thread>

namespace ship {

Prbs31::Prbs31(std::uint32_t seed) : state_(seed & kMask) {
  if (state_ == 0) throw LinkQualError("ZeroSeed: PRBS-31 state must be nonzero");
}

std::vector<std::uint8_t> Prbs31::generate(std::size_t n_bits) {
  std::vector<std::uint8_t> bits(n_bits);
  generate(bits);
  return bits;
}

void Prbs31Checker::feed(std::span<const std::uint8_t> bits) {
  std::size_t i = 0;
  for (; i < bits.size() && loaded_ < 31; ++i, ++loaded_) {
    state_ = ((state_ << 1) | (bits[i] & 1u)) & Prbs31::kMask;
  }
  for (; i < bits.size(); ++i) {
    const std::uint32_t predicted = ((state_ >> 30) ^ (state_ >> 27)) & 1u;
    if ((bits[i] & 1u) != predicted) ++result_.errors;
    // Keep following the local sequence so one flipped bit counts once.
    state_ = ((state_ << 1) | predicted) & Prbs31::kMask;
    ++result_.bits_checked;
  }
}

PrbsCheckResult prbs31_check(std::span<const std::uint8_t> bits) {
  if (bits.size() < kPrbsMinCheckBits)
    throw LinkQualError("StreamTooShort: PRBS-31 check needs at least 62 bits");
  Prbs31Checker checker;
  checker.feed(bits);
  return checker.result();
}

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

double unit_uniform(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1p-53; }

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

}  // namespace

double ber_at_point(const ChannelModel& model, double h_offset_ui, double v_offset,
                    std::uint64_t n_bits) {
  if (n_bits < 1000) throw LinkQualError("ber_at_point: n_bits must be >= 1000");
  if (!(h_offset_ui >= -0.5 && h_offset_ui <= 0.5))
    throw LinkQualError("ber_at_point: h_offset_ui must lie in [-0.5, 0.5]");
  if (!(v_offset > -1.0 && v_offset < 1.0))
    throw LinkQualError("ber_at_point: v_offset must lie in (-1, 1)");
  if (!(model.jitter_sigma_ui >= 0.0) || !(model.noise_sigma >= 0.0))
    throw LinkQualError("ber_at_point: sigmas must be >= 0");

  const std::uint64_t mixed = splitmix64(model.rng_seed);
  std::uint32_t prbs_seed = static_cast<std::uint32_t>(mixed) & Prbs31::kMask;
  if (prbs_seed == 0) prbs_seed = Prbs31::kMask;
  Prbs31 prbs(prbs_seed);
  // Separate streams keep jitter and noise draws aligned across parameter changes.
  std::mt19937_64 jitter_rng(splitmix64(mixed ^ 0x6A09E667F3BCC908ull));
  std::mt19937_64 noise_rng(splitmix64(mixed ^ 0xBB67AE8584CAA73Bull));

  // Jitter: with Z ~ N(0,1) drawn by inversion from U, h + sigma*Z > 0.5
  // exactly when U > cross_next, and < -0.5 exactly when U < cross_prev.
  const double sj = model.jitter_sigma_ui;
  const bool jitter = sj > 0.0;
  const double cross_next = jitter ? normal_cdf((0.5 - h_offset_ui) / sj) : 1.0;
  const double cross_prev = jitter ? normal_cdf((-0.5 - h_offset_ui) / sj) : 0.0;
  const bool on_next_edge = !jitter && h_offset_ui >= 0.5;
  const bool on_prev_edge = !jitter && h_offset_ui <= -0.5;

  // Noise: level + sigma*Z > v exactly when U > one_above[level].
  const double sn = model.noise_sigma;
  const bool noisy = sn > 0.0;
  double one_above[3] = {0.0, 0.0, 0.0};  // levels -1, 0, +1
  if (noisy) {
    for (int l = -1; l <= 1; ++l) one_above[l + 1] = normal_cdf((v_offset - l) / sn);
  }

  int prev = prbs.next_bit();
  int cur = prbs.next_bit();
  std::uint64_t errors = 0;
  for (std::uint64_t i = 0; i < n_bits; ++i) {
    const int next = prbs.next_bit();
    const double own = cur ? 1.0 : -1.0;
    double level = own;
    if (jitter) {
      const double u = unit_uniform(jitter_rng);
      if (u > cross_next) {
        level = next ? 1.0 : -1.0;
      } else if (u < cross_prev) {
        level = prev ? 1.0 : -1.0;
      }
    } else if (on_next_edge) {
      level = 0.5 * (own + (next ? 1.0 : -1.0));
    } else if (on_prev_edge) {
      level = 0.5 * (own + (prev ? 1.0 : -1.0));
    }

    int decided;
    if (noisy) {
      const double u = unit_uniform(noise_rng);
      decided = u > one_above[static_cast<int>(level) + 1] ? 1 : 0;
    } else {
      decided = level > v_offset ? 1 : 0;
    }
    if (decided != cur) ++errors;
    prev = cur;
    cur = next;
  }
  return static_cast<double>(errors) / static_cast<double>(n_bits);
}

double EyeScanResult::h_ui(int h) const { return -0.5 + (h + 0.5) / h_steps; }

double EyeScanResult::v_offset(int v) const { return -1.0 + (v + 0.5) * 2.0 / v_steps; }

std::pair<int, int> EyeScanResult::open_extent() const {
  const int cv = v_steps / 2, ch = h_steps / 2;
  auto is_open = [&](int h) { return open[static_cast<std::size_t>(cv * h_steps + h)] != 0; };
  if (!is_open(ch)) return {0, 0};
  int left = 0, right = 0;
  for (int h = ch - 1; h >= 0 && is_open(h); --h) ++left;
  for (int h = ch + 1; h < h_steps && is_open(h); ++h) ++right;
  return {left, right};
}

std::uint64_t eye_point_seed(std::uint64_t base_seed, int h_index, int v_index) {
  std::uint64_t s = splitmix64(base_seed);
  s = splitmix64(s ^ static_cast<std::uint64_t>(h_index));
  return splitmix64(s ^ (static_cast<std::uint64_t>(v_index) << 32));
}

void summarize_eye(EyeScanResult& r) {
  const auto total = static_cast<std::size_t>(r.h_steps * r.v_steps);
  r.open.assign(total, 0);
  r.open_area = 0;
  r.open_ui_percent = 0.0;
  const int ch = r.h_steps / 2, cv = r.v_steps / 2;
  r.center_closed = !(r.ber(ch, cv) < r.ber_threshold);
  if (r.center_closed) return;

  std::vector<std::pair<int, int>> stack{{ch, cv}};
  r.open[static_cast<std::size_t>(cv * r.h_steps + ch)] = 1;
  while (!stack.empty()) {
    const auto [h, v] = stack.back();
    stack.pop_back();
    ++r.open_area;
    const int nh[4] = {h - 1, h + 1, h, h};
    const int nv[4] = {v, v, v - 1, v + 1};
    for (int k = 0; k < 4; ++k) {
      if (nh[k] < 0 || nh[k] >= r.h_steps || nv[k] < 0 || nv[k] >= r.v_steps) continue;
      const auto idx = static_cast<std::size_t>(nv[k] * r.h_steps + nh[k]);
      if (r.open[idx] || !(r.ber_grid[idx] < r.ber_threshold)) continue;
      r.open[idx] = 1;
      stack.emplace_back(nh[k], nv[k]);
    }
  }
  const auto [left, right] = r.open_extent();
  r.open_ui_percent = 100.0 * static_cast<double>(left + right + 1) / r.h_steps;
}

EyeScanResult eye_scan(const ChannelModel& model, const EyeScanConfig& cfg) {
  if (cfg.h_steps < 3 || cfg.h_steps % 2 == 0 || cfg.v_steps < 3 || cfg.v_steps % 2 == 0)
    throw LinkQualError("eye_scan: grid dimensions must be odd and >= 3");
  if (!(cfg.ber_threshold > 0.0)) throw LinkQualError("eye_scan: ber_threshold must be > 0");

  EyeScanResult r;
  r.h_steps = cfg.h_steps;
  r.v_steps = cfg.v_steps;
  r.ber_threshold = cfg.ber_threshold;
  const auto total = static_cast<std::size_t>(cfg.h_steps * cfg.v_steps);
  r.ber_grid.assign(total, 0.0);

  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t idx = next++; idx < total; idx = next++) {
      const int h = static_cast<int>(idx % static_cast<std::size_t>(cfg.h_steps));
      const int v = static_cast<int>(idx / static_cast<std::size_t>(cfg.h_steps));
      ChannelModel point = model;
      point.rng_seed = eye_point_seed(model.rng_seed, h, v);
      r.ber_grid[idx] = ber_at_point(point, r.h_ui(h), r.v_offset(v), cfg.bits_per_point);
    }
  };
  unsigned n_threads = cfg.threads ? cfg.threads : std::max(1u, std::thread::hardware_concurrency());
  if (n_threads <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (unsigned t = 0; t < n_threads; ++t) pool.emplace_back(worker);
  }
  summarize_eye(r);
  return r;
}

void write_eye_csv(std::ostream& os, const EyeScanResult& r) {
  os << "h_ui,v_offset,ber\n";
  char line[96];
  for (int v = 0; v < r.v_steps; ++v) {
    for (int h = 0; h < r.h_steps; ++h) {
      std::snprintf(line, sizeof line, "%.6f,%.6f,%.6e\n", r.h_ui(h), r.v_offset(v), r.ber(h, v));
      os << line;
    }
  }
}

std::string render_eye_table(std::span<const std::pair<std::string, EyeScanResult>> rows) {
  std::ostringstream os;
  char line[128];
  std::snprintf(line, sizeof line, "%-14s %10s  %8s\n", "Channel", "Open Area", "Open UI");
  os << line;
  for (const auto& [name, r] : rows) {
    std::snprintf(line, sizeof line, "%-14s %10zu  %7.2f%%\n", name.c_str(), r.open_area,
                  r.open_ui_percent);
    os << line;
  }
  if (!rows.empty()) {
    const auto& r = rows.front().second;
    std::snprintf(line, sizeof line,
                  "Open Area counts grid points (%d x %d = %d max) with BER < %.0e\n", r.h_steps,
                  r.v_steps, r.h_steps * r.v_steps, r.ber_threshold);
    os << line;
  }
  return os.str();
}

}  // namespace ship
