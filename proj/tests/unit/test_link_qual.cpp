#include <doctest.h>

#include <stdexcept>

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "ship/link_qual.hpp"

using namespace ship;

namespace {

// x^31 + x^28 + 1 with the register as an explicit array of 31 cells.
std::vector<std::uint8_t> lfsr_oracle(std::size_t n) {
  std::vector<std::uint8_t> reg(31, 1);  // reg[0] is the newest bit
  std::vector<std::uint8_t> out;
  for (std::size_t i = 0; i < n; ++i) {
    const std::uint8_t b = reg[30] ^ reg[27];
    reg.insert(reg.begin(), b);
    reg.pop_back();
    out.push_back(b);
  }
  return out;
}

// BER at v = 0 without noise: the sample lands in a neighbour with
// probability Q((0.5 - h)/s) + Q((0.5 + h)/s), and half the neighbours differ.
double ber_oracle(double h, double sigma) {
  const double q_next = 0.5 * std::erfc((0.5 - h) / (sigma * std::sqrt(2.0)));
  const double q_prev = 0.5 * std::erfc((0.5 + h) / (sigma * std::sqrt(2.0)));
  return 0.5 * (q_next + q_prev);
}

double binomial_sigma(double p, double n) { return std::sqrt(std::max(p * (1 - p), 1.0 / n) / n); }

}  // namespace

TEST_CASE("generator matches the LFSR oracle") {
  Prbs31 gen;
  const auto got = gen.generate(10000);
  CHECK(got == lfsr_oracle(10000));
  // all ones: bit30 ^ bit27 stays 0 until the first shifted-in zero reaches bit 27
  for (int i = 0; i < 28; ++i) CHECK(got[static_cast<std::size_t>(i)] == 0);
  CHECK(got[28] == 1);
}

TEST_CASE("zero seed is rejected") {
  CHECK_THROWS_AS(Prbs31(0), LinkQualError);
  CHECK_THROWS_AS(Prbs31(0x80000000u), LinkQualError);
  CHECK_NOTHROW(Prbs31(1));
}

TEST_CASE("checker locks from any offset") {
  Prbs31 gen(0x1234567u);
  const auto bits = gen.generate(1000000);
  const PrbsCheckResult r = prbs31_check(bits);
  CHECK(r.errors == 0);
  CHECK(r.bits_checked == bits.size() - 31);
  for (std::size_t off : {1u, 31u, 1000u, 777777u}) {
    CHECK(prbs31_check(std::span(bits).subspan(off)).errors == 0);
  }
}

TEST_CASE("injected errors are counted once each") {
  Prbs31 gen;
  auto bits = gen.generate(100000);
  bits[100] ^= 1;
  bits[200] ^= 1;
  CHECK(prbs31_check(bits).errors == 2);
  bits[201] ^= 1;
  bits[90000] ^= 1;
  CHECK(prbs31_check(bits).errors == 4);
}

TEST_CASE("checker works across feed boundaries") {
  Prbs31 gen(77);
  auto bits = gen.generate(5000);
  bits[3000] ^= 1;
  Prbs31Checker c;
  for (std::size_t i = 0; i < bits.size(); i += 13) c.feed(std::span(bits).subspan(i, std::min<std::size_t>(13, bits.size() - i)));
  CHECK(c.locked());
  CHECK(c.result().errors == 1);
  CHECK(c.result().bits_checked == 5000 - 31);
}

TEST_CASE("short streams are rejected") {
  std::vector<std::uint8_t> bits(61, 1);
  CHECK_THROWS_AS(prbs31_check(bits), LinkQualError);
  bits.push_back(1);
  CHECK_NOTHROW(prbs31_check(bits));
}

TEST_CASE("PRBS balance") {
  auto count_ones = [](Prbs31& gen) {
    std::size_t ones = 0;
    for (auto b : gen.generate(1000000)) ones += b;
    return ones;
  };
  std::mt19937 rng(2024);
  for (int t = 0; t < 20; ++t) {
    Prbs31 gen((rng() & 0x7FFFFFFFu) | 1u);
    CHECK(std::fabs(static_cast<double>(count_ones(gen)) / 1e6 - 0.5) <= 0.002);
  }
  // the all-ones state needs a while to mix: the first 10^6 bits hold 495371
  // ones (count from a separate Python LFSR), outside the binomial bound
  Prbs31 from_ones;
  CHECK(count_ones(from_ones) == 495371);
  CHECK(std::fabs(static_cast<double>(count_ones(from_ones)) / 1e6 - 0.5) <= 0.002);
}

TEST_CASE("ber_at_point basic cases") {
  const ChannelModel clean{0.0, 0.0, 5};
  CHECK(ber_at_point(clean, 0.0, 0.0, 100000) == 0.0);
  CHECK(ber_at_point(clean, 0.49, 0.9, 100000) == 0.0);
  // on the boundary the sample is the mean of both levels, which reads as 0 at v = 0:
  // exactly the 1 -> 0 transitions fail, about a quarter of all bits
  const double n = 100000;
  const double edge = ber_at_point(clean, 0.5, 0.0, 100000);
  CHECK(std::fabs(edge - 0.25) <= 3 * binomial_sigma(0.25, n));
  CHECK(std::fabs(ber_at_point(clean, -0.5, 0.0, 100000) - 0.25) <= 3 * binomial_sigma(0.25, n));

  CHECK_THROWS_AS(ber_at_point(clean, 0.0, 0.0, 999), LinkQualError);
  CHECK_THROWS_AS(ber_at_point(clean, 0.6, 0.0, 1000), LinkQualError);
  CHECK_THROWS_AS(ber_at_point(clean, 0.0, 1.0, 1000), LinkQualError);
}

TEST_CASE("jittered BER follows the Gaussian oracle") {
  const double n = 100000;
  for (double h : {0.0, 0.2, 0.4, -0.4, 0.45}) {
    const ChannelModel m{0.05, 0.0, 9};
    const double got = ber_at_point(m, h, 0.0, 100000);
    const double want = ber_oracle(h, 0.05);
    CHECK(std::fabs(got - want) <= 3 * binomial_sigma(want, n));
  }
  // amplitude noise alone: P(level + noise on the wrong side of 0) = Q(1/sigma)
  const ChannelModel noisy{0.0, 0.4, 13};
  const double want = 0.5 * std::erfc(1.0 / (0.4 * std::sqrt(2.0)));
  CHECK(std::fabs(ber_at_point(noisy, 0.0, 0.0, 100000) - want) <= 3 * binomial_sigma(want, n));
}

TEST_CASE("BER is non-decreasing away from the centre") {
  const ChannelModel m{0.08, 0.0, 21};
  double prev = -1;
  for (int i = 0; i <= 10; ++i) {
    const double b = ber_at_point(m, i / 20.0, 0.0, 100000);
    CHECK(b >= prev);
    prev = b;
  }
}

TEST_CASE("deterministic per seed") {
  const ChannelModel m{0.1, 0.2, 3};
  CHECK(ber_at_point(m, 0.3, 0.1, 20000) == ber_at_point(m, 0.3, 0.1, 20000));
  CHECK(eye_point_seed(1, 2, 3) == eye_point_seed(1, 2, 3));
  CHECK(eye_point_seed(1, 2, 3) != eye_point_seed(1, 3, 2));
}

TEST_CASE("noiseless eye is fully open") {
  EyeScanConfig cfg;
  cfg.bits_per_point = 1000;
  const EyeScanResult r = eye_scan({0.0, 0.0, 1}, cfg);
  CHECK(r.h_steps == 65);
  CHECK(r.v_steps == 63);
  CHECK(r.open_area == 4095);
  CHECK(r.open_ui_percent == 100.0);
  CHECK_FALSE(r.center_closed);
}

TEST_CASE("grid geometry") {
  EyeScanResult r;
  r.h_steps = 5;
  r.v_steps = 3;
  CHECK(r.h_ui(0) == doctest::Approx(-0.4));
  CHECK(r.h_ui(2) == 0.0);
  CHECK(r.h_ui(4) == doctest::Approx(0.4));
  CHECK(r.v_offset(1) == 0.0);
  CHECK(r.v_offset(0) == doctest::Approx(-2.0 / 3));
  CHECK_THROWS_AS(eye_scan({}, EyeScanConfig{4, 3}), LinkQualError);
  CHECK_THROWS_AS(eye_scan({}, EyeScanConfig{1, 3}), LinkQualError);
}

TEST_CASE("flood fill keeps to the region connected to the centre") {
  EyeScanResult r;
  r.h_steps = 5;
  r.v_steps = 3;
  r.ber_threshold = 0.5;
  // open everywhere except a closed column at h = 3, so h = 4 is cut off
  r.ber_grid.assign(15, 0.0);
  for (int v = 0; v < 3; ++v) r.ber_grid[static_cast<std::size_t>(v * 5 + 3)] = 1.0;
  summarize_eye(r);
  CHECK(r.open_area == 9);
  CHECK(r.open_extent() == std::pair<int, int>{2, 0});
  CHECK(r.open_ui_percent == 60.0);

  r.ber_grid[7] = 0.5;  // centre at the threshold counts as closed
  summarize_eye(r);
  CHECK(r.center_closed);
  CHECK(r.open_area == 0);
  CHECK(r.open_ui_percent == 0.0);
}

TEST_CASE("open area shrinks as jitter grows") {
  EyeScanConfig cfg;
  cfg.h_steps = 33;
  cfg.v_steps = 31;
  cfg.bits_per_point = 20000;
  std::size_t prev = SIZE_MAX;
  for (double j : {0.0, 0.02, 0.05, 0.10}) {
    const EyeScanResult r = eye_scan({j, 0.05, 7}, cfg);
    CHECK(r.open_area <= prev);
    prev = r.open_area;
    const auto [left, right] = r.open_extent();
    CHECK(std::abs(left - right) <= 2);
  }
}

TEST_CASE("table rendering") {
  EyeScanConfig cfg;
  cfg.h_steps = 9;
  cfg.v_steps = 7;
  cfg.bits_per_point = 1000;
  std::vector<std::pair<std::string, EyeScanResult>> rows;
  for (int ch = 1; ch <= 4; ++ch) rows.emplace_back("Channel " + std::to_string(ch), eye_scan({0, 0, 1}, cfg));
  const std::string t = render_eye_table(rows);
  CHECK(t.find("Open Area") != std::string::npos);
  CHECK(t.find("Open UI") != std::string::npos);
  CHECK(t.find("Channel 4") != std::string::npos);
  CHECK(t.find("100.00%") != std::string::npos);

  std::ostringstream csv;
  write_eye_csv(csv, rows[0].second);
  const std::string s = csv.str();
  CHECK(s.rfind("h_ui,v_offset,ber\n", 0) == 0);
  CHECK(std::count(s.begin(), s.end(), '\n') == 1 + 9 * 7);
}
