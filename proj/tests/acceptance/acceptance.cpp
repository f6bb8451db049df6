// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fail.
#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <memory>
#include <numbers>
#include <random>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "ship/codec.hpp"
#include "ship/config.hpp"
#include "ship/dsp_measure.hpp"
#include "ship/link_qual.hpp"
#include "ship/net.hpp"
#include "ship/pipeline.hpp"
#include "ship/signal_model.hpp"
#include "ship/slow_control.hpp"
#include "ship/stream_proto.hpp"

using namespace ship;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); }

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

// ---- codec -----------------------------------------------------------------

Outcome codec_lossless() {
  const AdcConfig adc;
  constexpr std::size_t kTotal = 10'000'000, kBlock = 4096;
  std::vector<std::function<std::int16_t(std::size_t)>> plain;
  plain.push_back([](std::size_t) { return std::int16_t{1234}; });
  plain.push_back([](std::size_t i) { return static_cast<std::int16_t>(static_cast<std::uint16_t>(i)); });
  std::mt19937_64 rng(11);
  plain.push_back([&rng](std::size_t) { return static_cast<std::int16_t>(rng()); });
  plain.push_back([](std::size_t i) { return i % 2 ? std::int16_t{-32768} : std::int16_t{32767}; });

  const double freqs[] = {1e3, 37e3, 250e3, 1.3e6, 4.9e6};
  const double noises[] = {0.0, 1e-3, 5e-2};
  const std::size_t generators = plain.size() + 15;
  const std::size_t per_gen = (kTotal + generators - 1) / generators;

  std::size_t samples = 0, failures = 0, blocks = 0;
  const auto t0 = Clock::now();
  auto round_trip = [&](const WaveformBlock& b) {
    const CompressedBlock cb = compress_block(b);
    const WaveformBlock back = decompress_bytes(cb.bytes, cb.bit_length, b.channel_id, b.start_sample_index);
    if (back.samples != b.samples) ++failures;
    samples += b.samples.size();
    ++blocks;
  };

  for (auto& gen : plain) {
    for (std::size_t s = 0; s < per_gen; s += kBlock) {
      WaveformBlock b;
      b.start_sample_index = static_cast<std::int64_t>(s);
      b.samples.resize(std::min(kBlock, per_gen - s));
      for (std::size_t i = 0; i < b.samples.size(); ++i) b.samples[i] = gen(s + i);
      round_trip(b);
    }
  }
  std::uint64_t seed = 100;
  for (double f : freqs) {
    for (double sigma : noises) {
      ToneSynthesizer synth({f, 0.9, 0.7, sigma, 0.0}, adc, ++seed);
      for (std::size_t s = 0; s < per_gen; s += kBlock)
        round_trip(synth.next_block(0, static_cast<std::int64_t>(s), std::min(kBlock, per_gen - s)));
    }
  }
  const double secs = seconds_since(t0);
  return {samples >= kTotal && failures == 0 && secs < 60.0,
          fmt("%zu samples in %zu blocks over %zu generators, %zu failures, %.1f s (limit 60 s)", samples, blocks,
              generators, failures, secs)};
}

// Exhaustive search over predictor order and Rice k, written from the format rules.
struct OracleChoice {
  bool raw = true;
  int order = 0;
  int k = 0;
};

OracleChoice oracle_choice(const std::vector<std::int16_t>& x, int k_max) {
  const std::uint64_t n = x.size();
  std::uint64_t best_bits = UINT64_MAX;
  OracleChoice best;
  for (int order = 0; order <= 2; ++order) {
    if (static_cast<std::uint64_t>(order) > n) continue;
    std::vector<std::uint64_t> zz;
    for (std::size_t i = static_cast<std::size_t>(order); i < n; ++i) {
      std::int64_t r = x[i];
      if (order == 1) r -= x[i - 1];
      if (order == 2) r = std::int64_t{x[i]} - 2 * std::int64_t{x[i - 1]} + x[i - 2];
      zz.push_back(r >= 0 ? 2 * static_cast<std::uint64_t>(r) : 2 * static_cast<std::uint64_t>(-r) - 1);
    }
    for (int k = 0; k <= k_max; ++k) {
      std::uint64_t bits = 16 * static_cast<std::uint64_t>(order);
      for (auto u : zz) bits += (u >> k) + 1 + static_cast<std::uint64_t>(k);
      if (bits < best_bits) {
        best_bits = bits;
        best = {false, order, k};
      }
    }
  }
  if (best_bits >= 16 * n) best = {};
  return best;
}

std::vector<std::int16_t> fuzz_block(std::mt19937_64& rng) {
  const std::size_t n = 2 + rng() % 8191;
  std::vector<std::int16_t> x(n);
  switch (rng() % 5) {
    case 0:  // full-range noise
      for (auto& s : x) s = static_cast<std::int16_t>(rng());
      break;
    case 1: {  // bounded random walk
      std::int32_t v = static_cast<std::int16_t>(rng());
      const int step = 1 + static_cast<int>(rng() % 2000);
      for (auto& s : x) {
        v = std::clamp<std::int32_t>(v + static_cast<int>(rng() % (2 * step + 1)) - step, -32768, 32767);
        s = static_cast<std::int16_t>(v);
      }
      break;
    }
    case 2: {  // small noise around an offset
      const int off = static_cast<std::int16_t>(rng()) / 2;
      const int spread = 1 << (rng() % 12);
      for (auto& s : x) s = static_cast<std::int16_t>(off + static_cast<int>(rng() % spread));
      break;
    }
    case 3:  // rail to rail
      for (auto& s : x) s = rng() % 2 ? std::int16_t{32767} : std::int16_t{-32768};
      break;
    default: {  // sparse spikes on a flat line
      const auto base = static_cast<std::int16_t>(rng());
      for (auto& s : x) s = rng() % 50 ? base : static_cast<std::int16_t>(rng());
      break;
    }
  }
  return x;
}

Outcome codec_bound() {
  std::mt19937_64 rng(2718);
  std::size_t over = 0, mismatched = 0, lossy = 0;
  std::uint64_t worst_excess = 0;
  constexpr int kBlocks = 10000, kOracle = 1000;
  for (int t = 0; t < kBlocks; ++t) {
    WaveformBlock b;
    b.samples = fuzz_block(rng);
    const std::uint64_t raw_bits = 16 * b.samples.size();
    CodecParams p;
    p.block_size = 8192;
    const CompressedBlock cb = compress_block(b, p);
    const std::uint64_t limit = raw_bits + 8 * kCodecHeaderBytes;
    if (cb.size_bits() > limit) ++over;
    if (cb.size_bits() > raw_bits) worst_excess = std::max<std::uint64_t>(worst_excess, cb.size_bits() - raw_bits);
    if (decompress_block(cb).samples != b.samples) ++lossy;
    if (t < kOracle) {
      const OracleChoice want = oracle_choice(b.samples, p.k_max);
      const bool raw = cb.mode == CodecMode::Raw;
      if (raw != want.raw || (!raw && (cb.predictor_order != want.order || cb.rice_k != want.k))) ++mismatched;
    }
  }
  return {over == 0 && mismatched == 0 && lossy == 0,
          fmt("%d fuzzed blocks: %zu over raw+header (worst excess %llu bits, header %zu bits), %zu not lossless; "
              "order/k vs exhaustive oracle on %d blocks: %zu mismatches",
              kBlocks, over, static_cast<unsigned long long>(worst_excess), 8 * kCodecHeaderBytes, lossy, kOracle,
              mismatched)};
}

// ---- demodulation ----------------------------------------------------------

Outcome demod_accuracy() {
  const AdcConfig adc;
  constexpr std::size_t kN = 1000;
  std::mt19937_64 rng(4242);
  std::uniform_real_distribution<double> amp(0.1, 0.9), phase(-std::numbers::pi, std::numbers::pi);
  double worst_amp = 0, worst_phase = 0;
  int fails = 0;
  for (int t = 0; t < 100; ++t) {
    // integer number of cycles per window keeps the window coherent
    const std::uint64_t m = 1 + rng() % (kN / 2 - 1);
    const double f = static_cast<double>(m) * adc.sample_rate_hz / kN;
    const double a = t == 0 ? 0.5 : amp(rng);
    const double phi = phase(rng);
    const std::int64_t start = static_cast<std::int64_t>(rng() % 1'000'000);
    const WaveformBlock b = synthesize_block({f, a, phi, 0.0, 0.0}, adc, 0, start, kN, 1);
    const DemodConfig cfg{f, adc.sample_rate_hz, kN};
    const IqPair iq = iq_demod_window(std::span<const std::int16_t>(b.samples), cfg, start);
    const IqMeasurement meas = amp_phase(iq.i, iq.q, adc);
    const double ea = std::fabs(meas.amplitude_v - a) / a;
    const double ep = std::fabs(wrap_phase(meas.phase_rad - phi));
    worst_amp = std::max(worst_amp, ea);
    worst_phase = std::max(worst_phase, ep);
    if (ea > 1e-3 || ep > 1e-3) ++fails;
  }
  return {fails == 0, fmt("100 draws of (A, phi, f): worst |dA|/A %.3e, worst |dphi| %.3e rad (limits 1e-3), %d outside",
                          worst_amp, worst_phase, fails)};
}

// ---- pipeline --------------------------------------------------------------

struct PipelineRun {
  BenchReport report;
  double min_throughput_bps = 0.0;
  std::string error;
};

PipelineRun run_loopback(double duration_s) {
  PipelineRun run;
  try {
    const RunConfig cfg = parse_config_file(SHIP_SOURCE_DIR "/configs/loopback.ini");
    run.min_throughput_bps = cfg.min_throughput_bps;
    run.report = run_pipeline_bench(cfg, duration_s);
  } catch (const std::exception& e) {
    run.error = e.what();
  }
  return run;
}

Outcome end_to_end(const PipelineRun& run) {
  if (!run.error.empty()) return {false, "pipeline failed: " + run.error};
  const BenchReport& r = run.report;
  double worst_amp = 0, worst_phase = 0;
  bool every_channel_measured = r.channels.size() == 4;
  for (const auto& c : r.channels) {
    worst_amp = std::max(worst_amp, c.max_amp_rel_error);
    worst_phase = std::max(worst_phase, c.max_phase_error_rad);
    every_channel_measured = every_channel_measured && c.measurements > 0;
  }
  const bool pass = r.gaps_detected == 0 && r.crc_errors == 0 && r.clean() && r.checksums_match() &&
                    every_channel_measured && worst_amp <= 1e-3 && worst_phase <= 1e-3;
  return {pass, fmt("%zu channels, %.1f s, %llu frames, gaps %llu, crc errors %llu, checksums %s, "
                    "worst |dA|/A %.3e, worst |dphi| %.3e rad",
                    r.channels.size(), static_cast<double>(r.wall_time_ns) * 1e-9,
                    static_cast<unsigned long long>(r.frames_received),
                    static_cast<unsigned long long>(r.gaps_detected), static_cast<unsigned long long>(r.crc_errors),
                    r.checksums_match() ? "match" : "MISMATCH", worst_amp, worst_phase)};
}

Outcome throughput(const PipelineRun& run) {
  if (!run.error.empty()) return {false, "pipeline failed: " + run.error};
  const BenchReport& r = run.report;
  return {r.throughput_bps >= run.min_throughput_bps && r.clean(),
          fmt("%.4f Gbps delivered over %.1f s (threshold %.4f Gbps), compression ratio %.3f",
              r.throughput_bps / 1e9, static_cast<double>(r.wall_time_ns) * 1e-9, run.min_throughput_bps / 1e9,
              r.compression_ratio)};
}

// ---- PRBS ------------------------------------------------------------------

Outcome prbs() {
  // x^31 + x^28 + 1, register as a plain array
  std::vector<std::uint8_t> reg(31, 1), want;
  for (int i = 0; i < 10000; ++i) {
    const std::uint8_t b = reg[30] ^ reg[27];
    reg.insert(reg.begin(), b);
    reg.pop_back();
    want.push_back(b);
  }
  Prbs31 gen;
  const bool oracle_ok = gen.generate(10000) == want;

  std::mt19937_64 rng(99);
  std::string injected;
  bool counts_ok = true;
  for (int k : {1, 2, 17}) {
    Prbs31 g(0x2468ACEu);
    auto bits = g.generate(200000);
    std::set<std::size_t> where;
    while (where.size() < static_cast<std::size_t>(k)) where.insert(62 + rng() % (bits.size() - 62));
    for (auto p : where) bits[p] ^= 1;
    const auto errors = prbs31_check(bits).errors;
    counts_ok = counts_ok && errors == static_cast<std::uint64_t>(k);
    injected += fmt("%s%d->%llu", injected.empty() ? "" : " ", k, static_cast<unsigned long long>(errors));
  }

  constexpr std::size_t kClean = 100'000'000, kChunk = 1 << 20;
  const auto t0 = Clock::now();
  Prbs31 stream(0x13579BDu);
  Prbs31Checker checker;
  std::vector<std::uint8_t> chunk;
  for (std::size_t done = 0; done < kClean; done += kChunk) {
    chunk = stream.generate(std::min(kChunk, kClean - done));
    checker.feed(chunk);
  }
  const double secs = seconds_since(t0);
  const auto res = checker.result();
  const bool clean_ok = checker.locked() && res.errors == 0 && res.bits_checked == kClean - 31 && secs < 60.0;
  return {oracle_ok && counts_ok && clean_ok,
          fmt("LFSR oracle on 10^4 bits %s; injected->counted %s; 10^8 clean bits: %llu errors, %.1f s (limit 60 s)",
              oracle_ok ? "match" : "MISMATCH", injected.c_str(), static_cast<unsigned long long>(res.errors), secs)};
}

// ---- eye scan --------------------------------------------------------------

double ber_oracle(double h, double sigma) {
  const double q_next = 0.5 * std::erfc((0.5 - h) / (sigma * std::numbers::sqrt2));
  const double q_prev = 0.5 * std::erfc((0.5 + h) / (sigma * std::numbers::sqrt2));
  return 0.5 * (q_next + q_prev);
}

Outcome eye() {
  std::string detail;
  const EyeScanConfig full;  // 65 x 63 grid, 10^5 bits per point
  const EyeScanResult clean = eye_scan({0.0, 0.0, 1}, full);
  const std::size_t grid = static_cast<std::size_t>(full.h_steps) * static_cast<std::size_t>(full.v_steps);
  const bool clean_ok = clean.open_area == grid && clean.open_ui_percent == 100.0;
  detail += fmt("noiseless: area %zu of %zu, open UI %.2f%%", clean.open_area, grid, clean.open_ui_percent);

  // grid points on the centre row against the Gaussian jitter oracle
  const double sigma = 0.05;
  const EyeScanResult jittered = eye_scan({sigma, 0.0, 5}, full);
  const int v_mid = full.v_steps / 2;
  int oracle_fails = 0, points = 0;
  double worst_z = 0;
  for (int h = full.h_steps / 2; h < full.h_steps; h += 4) {
    const double want = ber_oracle(jittered.h_ui(h), sigma);
    const double n = full.bits_per_point;
    const double s = std::sqrt(std::max(want * (1 - want), 1.0 / n) / n);
    const double z = std::fabs(jittered.ber(h, v_mid) - want) / s;
    worst_z = std::max(worst_z, z);
    if (z > 3.0) ++oracle_fails;
    ++points;
  }
  detail += fmt("; BER vs oracle at %d points: worst %.2f sigma", points, worst_z);

  std::vector<std::pair<std::string, EyeScanResult>> rows;
  std::size_t prev = SIZE_MAX;
  bool monotone = true;
  detail += "; area over jitter";
  for (double j : {0.0, 0.02, 0.05, 0.10}) {
    EyeScanResult r = eye_scan({j, 0.05, 7}, full);
    monotone = monotone && r.open_area <= prev;
    prev = r.open_area;
    detail += fmt(" %g:%zu", j, r.open_area);
    rows.emplace_back(fmt("jitter %.2f UI", j), std::move(r));
  }
  const std::string table = render_eye_table(rows);
  const bool table_ok = table.find("Open Area") != std::string::npos && table.find("Open UI") != std::string::npos;
  std::fputs(table.c_str(), stdout);
  return {clean_ok && oracle_fails == 0 && monotone && table_ok, detail};
}

// ---- bandwidth -------------------------------------------------------------

Outcome bandwidth() {
  const double full = required_rate(4, 1e9, 16);
  const double lane = per_lane_rate(required_rate(2, 1e9, 16), 4, 1.25);
  return {full == 64e9 && lane == 10e9,
          fmt("4 x 1 GS/s x 16 bit = %.17g bit/s (want 64e9); 2-channel ADC over 4 lanes at 1.25 overhead = %.17g "
              "bit/s per lane (want 10e9)",
              full, lane)};
}

// ---- slow control ----------------------------------------------------------

std::vector<std::string> split(const std::string& s) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (pos <= s.size()) {
    const auto end = s.find(' ', pos);
    out.push_back(s.substr(pos, end - pos));
    if (end == std::string::npos) break;
    pos = end + 1;
  }
  return out;
}

Outcome slow_control() {
  PvTable table;
  const double fs = 10e6;
  declare_ship_pvs(table, {0}, fs, 1.9);
  PvServer server(table, "127.0.0.1", 0);
  const std::string pv = "ship.ch0.nco_freq_hz";
  constexpr int kClients = 4, kPuts = 2500, kMonitors = 2;

  // readers hold a reference to their stream, so neither may move
  struct Monitor {
    explicit Monitor(std::uint16_t port)
        : stream(TcpStream::connect("127.0.0.1", port, std::chrono::seconds(2))), lines(stream) {}
    TcpStream stream;
    LineReader lines;
  };
  std::vector<std::unique_ptr<Monitor>> monitors;
  for (int i = 0; i < kMonitors; ++i) {
    auto& m = *monitors.emplace_back(std::make_unique<Monitor>(server.port()));
    m.stream.write_all("MON " + pv + "\n");
    std::string line;
    if (!m.lines.next(line) || line != "OK") return {false, "MON not acknowledged: " + line};
    if (!m.lines.next(line)) return {false, "no initial monitor event"};
  }

  std::atomic<bool> writing{true};
  std::atomic<std::uint64_t> gets{0}, violations{0};
  std::thread poller([&] {
    TcpStream s = TcpStream::connect("127.0.0.1", server.port(), std::chrono::seconds(2));
    LineReader r(s);
    std::string line;
    while (writing) {
      s.write_all("GET " + pv + "\n");
      if (!r.next(line)) return;
      const auto w = split(line);
      const double v = w.size() >= 3 && w[0] == "OK" ? std::stod(w[2]) : -1.0;
      if (!(v >= 0.0 && v <= fs / 2)) ++violations;
      ++gets;
    }
  });

  // value = client * 10000 + index; every tenth put is above the limit
  std::vector<std::vector<int>> accepted(kClients);
  std::atomic<int> rejected{0};
  std::vector<std::thread> writers;
  for (int c = 0; c < kClients; ++c) {
    writers.emplace_back([&, c] {
      TcpStream s = TcpStream::connect("127.0.0.1", server.port(), std::chrono::seconds(2));
      LineReader r(s);
      std::string reply;
      for (int i = 0; i < kPuts; ++i) {
        const bool bad = i % 10 == 9;
        const double v = bad ? fs : c * 10000 + i;
        s.write_all("PUT " + pv + " " + format_pv_value(v) + "\n");
        if (!r.next(reply)) return;
        if (reply == "OK") accepted[static_cast<std::size_t>(c)].push_back(i);
        else if (reply.rfind("ERR OUTOFRANGE", 0) == 0) ++rejected;
      }
    });
  }
  for (auto& w : writers) w.join();
  writing = false;
  poller.join();

  std::size_t total_ok = 0;
  bool writers_ok = true;
  for (int c = 0; c < kClients; ++c) {
    total_ok += accepted[static_cast<std::size_t>(c)].size();
    writers_ok = writers_ok && accepted[static_cast<std::size_t>(c)].size() == kPuts - kPuts / 10;
  }
  writers_ok = writers_ok && rejected == kClients * (kPuts / 10);

  bool order_ok = true;
  std::vector<std::vector<int>> seen(kMonitors);
  for (int m = 0; m < kMonitors; ++m) {
    std::vector<std::vector<int>> per_client(kClients);
    std::string line;
    for (std::size_t i = 0; i < total_ok; ++i) {
      if (!monitors[static_cast<std::size_t>(m)]->lines.next(line)) {
        order_ok = false;
        break;
      }
      const int v = std::stoi(split(line)[2]);
      seen[static_cast<std::size_t>(m)].push_back(v);
      per_client[static_cast<std::size_t>(v / 10000)].push_back(v % 10000);
    }
    for (int c = 0; c < kClients; ++c)
      order_ok = order_ok && per_client[static_cast<std::size_t>(c)] == accepted[static_cast<std::size_t>(c)];
  }
  order_ok = order_ok && seen[0] == seen[1];
  for (auto& m : monitors) m->stream.shutdown_both();
  server.stop();

  return {writers_ok && order_ok && violations == 0 && gets > 0,
          fmt("%d puts from %d clients: %zu accepted, %d rejected; %d monitors saw every accepted put in order: %s; "
              "%llu concurrent GETs, %llu limit violations",
              kClients * kPuts, kClients, total_ok, rejected.load(), kMonitors, order_ok ? "yes" : "NO",
              static_cast<unsigned long long>(gets.load()), static_cast<unsigned long long>(violations.load()))};
}

}  // namespace

int main() {
  int failed = 0;
  auto report = [&](const char* name, const Outcome& o) {
    std::printf("%s  %-20s %s\n", o.pass ? "PASS" : "FAIL", name, o.detail.c_str());
    std::fflush(stdout);
    if (!o.pass) ++failed;
  };
  auto guarded = [](auto fn) {
    try {
      return fn();
    } catch (const std::exception& e) {
      return Outcome{false, std::string("exception: ") + e.what()};
    }
  };

  report("codec-lossless", guarded(codec_lossless));
  report("codec-bound", guarded(codec_bound));
  report("demod-accuracy", guarded(demod_accuracy));
  const PipelineRun loopback = run_loopback(30.0);
  report("end-to-end", end_to_end(loopback));
  report("prbs", guarded(prbs));
  report("eye-scan", guarded(eye));
  report("bandwidth", guarded(bandwidth));
  report("throughput", throughput(loopback));
  report("slow-control", guarded(slow_control));

  std::printf("%d of 9 criteria failed\n", failed);
  return failed == 0 ? 0 : 1;
}
