#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace ship {

class LinkQualError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// PRBS-31 generator, polynomial x^31 + x^28 + 1. Each step shifts in
/// bit30 ^ bit27 at bit 0 and emits it, so after 31 steps the register
/// holds the last 31 output bits (newest in bit 0).
class Prbs31 {
 public:
  static constexpr std::uint32_t kMask = 0x7FFFFFFFu;

  /// Throws LinkQualError("ZeroSeed") when the low 31 bits are zero.
  explicit Prbs31(std::uint32_t seed = kMask);

  int next_bit() {
    const std::uint32_t bit = ((state_ >> 30) ^ (state_ >> 27)) & 1u;
    state_ = ((state_ << 1) | bit) & kMask;
    return static_cast<int>(bit);
  }

  void generate(std::span<std::uint8_t> bits) {
    for (auto& b : bits) b = static_cast<std::uint8_t>(next_bit());
  }
  std::vector<std::uint8_t> generate(std::size_t n_bits);

  std::uint32_t state() const { return state_; }

 private:
  std::uint32_t state_;
};

struct PrbsCheckResult {
  std::uint64_t errors = 0;
  std::uint64_t bits_checked = 0;
};

/// Self-synchronizing checker: the first 31 received bits load the local
/// generator, every later bit is compared with its prediction.
class Prbs31Checker {
 public:
  void feed(std::span<const std::uint8_t> bits);
  bool locked() const { return loaded_ == 31; }
  PrbsCheckResult result() const { return result_; }

 private:
  std::uint32_t state_ = 0;
  int loaded_ = 0;
  PrbsCheckResult result_;
};

inline constexpr std::size_t kPrbsMinCheckBits = 62;

/// Throws LinkQualError("StreamTooShort") below kPrbsMinCheckBits bits.
PrbsCheckResult prbs31_check(std::span<const std::uint8_t> bits);

/// Statistical serial link: Gaussian sampling-time jitter (in UI) and
/// additive Gaussian amplitude noise on +/-1 signalling.
struct ChannelModel {
  double jitter_sigma_ui = 0.0;
  double noise_sigma = 0.0;
  std::uint64_t rng_seed = 1;
};

/// Bit error rate when sampling at h_offset_ui from the bit centre with the
/// decision threshold at v_offset. A sampling instant pushed past a bit
/// boundary (|h + jitter| > 0.5) sees the neighbouring bit; exactly on the
/// boundary it sees the mean of both levels. Requires n_bits >= 1000.
double ber_at_point(const ChannelModel& model, double h_offset_ui, double v_offset,
                    std::uint64_t n_bits);

struct EyeScanConfig {
  int h_steps = 65;
  int v_steps = 63;
  double ber_threshold = 1e-3;
  std::uint64_t bits_per_point = 100000;
  unsigned threads = 0;  // 0: hardware concurrency
};

/// Grid point i sits at the centre of the i-th of h_steps equal cells across
/// one UI (and likewise for v over (-1, 1)), so the middle index is the
/// eye centre.
struct EyeScanResult {
  int h_steps = 0;
  int v_steps = 0;
  double ber_threshold = 0.0;
  std::vector<double> ber_grid;   // row-major, ber_grid[v * h_steps + h]
  std::vector<std::uint8_t> open;  // flood-filled open region
  std::size_t open_area = 0;       // grid points
  double open_ui_percent = 0.0;
  bool center_closed = false;

  double ber(int h, int v) const { return ber_grid[static_cast<std::size_t>(v * h_steps + h)]; }
  double h_ui(int h) const;
  double v_offset(int v) const;
  /// Open points left/right of centre on the v = 0 row.
  std::pair<int, int> open_extent() const;
};

/// Per-point seed derived from the model seed and grid indices.
std::uint64_t eye_point_seed(std::uint64_t base_seed, int h_index, int v_index);

/// Throws LinkQualError for even or < 3 grid dimensions.
EyeScanResult eye_scan(const ChannelModel& model, const EyeScanConfig& cfg = {});

/// Recomputes the flood fill and summary from an existing BER grid.
void summarize_eye(EyeScanResult& result);

void write_eye_csv(std::ostream& os, const EyeScanResult& result);

/// Table with "Channel", "Open Area" and "Open UI" columns.
std::string render_eye_table(std::span<const std::pair<std::string, EyeScanResult>> rows);

}  // namespace ship
