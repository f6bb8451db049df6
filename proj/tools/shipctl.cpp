// shipctl: command-line front end for the readout pipeline, link-quality
// scans and slow-control client.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <thread>

#include "ship/config.hpp"
#include "ship/link_qual.hpp"
#include "ship/net.hpp"
#include "ship/pipeline.hpp"
#include "ship/slow_control.hpp"
#include "ship/stream_proto.hpp"

namespace fs = std::filesystem;
using namespace ship;

namespace {

struct CommonOptions {
  std::string config_path;
  std::optional<double> duration;
  std::optional<std::uint64_t> seed;
  std::optional<std::uint16_t> pv_port;
  std::string out;
};

void add_common(CLI::App* cmd, CommonOptions& opt, bool need_config) {
  auto* c = cmd->add_option("--config", opt.config_path, "Run configuration file");
  if (need_config) c->required()->check(CLI::ExistingFile);
  cmd->add_option("--duration", opt.duration, "Run time in seconds (overrides the config)");
  cmd->add_option("--seed", opt.seed, "Random seed (overrides the config)");
  cmd->add_option("--out", opt.out, "Output directory");
  cmd->add_option("--pv-port", opt.pv_port, "PV server port, 0 disables (overrides the config)");
}

RunConfig load(const CommonOptions& opt) {
  RunConfig cfg = parse_config_file(opt.config_path);
  if (opt.duration) cfg.duration_s = *opt.duration;
  if (opt.seed) cfg.seed = *opt.seed;
  if (opt.pv_port) cfg.pv_port = *opt.pv_port;
  if (!opt.out.empty()) cfg.out_dir = opt.out;
  return cfg;
}

std::unique_ptr<PvServer> maybe_pv_server(PvTable& table, const RunConfig& cfg) {
  if (cfg.pv_port == 0) return nullptr;
  auto server = std::make_unique<PvServer>(table, "0.0.0.0", cfg.pv_port);
  std::cerr << "pv server listening on port " << server->port() << "\n";
  return server;
}

void init_pvs(PvTable& table, const RunConfig& cfg) {
  declare_ship_pvs(table, cfg.channel_ids(), cfg.adc.sample_rate_hz, cfg.adc.full_scale_vpp);
  table.set_internal("ship.compression_enabled", std::string(cfg.compression_enabled ? "true" : "false"));
  for (const auto& ch : cfg.channels) {
    const std::string p = "ship.ch" + std::to_string(ch.channel_id) + ".";
    table.set_internal(p + "nco_freq_hz", cfg.demod.f_if_hz);
    table.set_internal(p + "noise_sigma_v", ch.tone.noise_sigma_v);
  }
}

int run_digitizer(const CommonOptions& opt) {
  const RunConfig cfg = load(opt);
  PvTable pvs;
  init_pvs(pvs, cfg);
  auto server = maybe_pv_server(pvs, cfg);

  std::vector<TcpStream> lanes;
  for (int i = 0; i < cfg.lanes; ++i)
    lanes.push_back(TcpStream::connect(cfg.host, cfg.port, std::chrono::seconds(10)));
  Digitizer dig(cfg, &pvs);
  const DigitizerStats s =
      dig.run(lanes, std::chrono::nanoseconds(static_cast<std::int64_t>(cfg.duration_s * 1e9)));

  std::printf("frames sent %llu, raw bytes %llu, wire bytes %llu, %.3f s\n",
              static_cast<unsigned long long>(s.frames_sent), static_cast<unsigned long long>(s.raw_bytes),
              static_cast<unsigned long long>(s.wire_bytes), static_cast<double>(s.wall_ns) * 1e-9);
  for (const auto& c : s.channels) {
    std::printf("channel %u: %llu samples, checksum %08x\n", static_cast<unsigned>(c.channel_id),
                static_cast<unsigned long long>(c.samples), c.checksum);
  }
  return 0;
}

int run_processor(const CommonOptions& opt) {
  const RunConfig cfg = load(opt);
  PvTable pvs;
  init_pvs(pvs, cfg);
  auto server = maybe_pv_server(pvs, cfg);

  TcpListener listener(cfg.host, cfg.port);
  std::cerr << "processor waiting for " << cfg.lanes << " lanes on port " << listener.port() << "\n";
  Processor proc(cfg, &pvs);
  const ProcessorStats s = proc.serve(listener, std::chrono::seconds(60));

  std::printf("frames received %llu, raw bytes %llu, gaps %llu, crc errors %llu, frame errors %llu, "
              "decode errors %llu\n",
              static_cast<unsigned long long>(s.frames_received), static_cast<unsigned long long>(s.raw_bytes),
              static_cast<unsigned long long>(s.gaps_detected), static_cast<unsigned long long>(s.crc_errors),
              static_cast<unsigned long long>(s.frame_errors), static_cast<unsigned long long>(s.decode_errors));
  for (const auto& c : s.channels) {
    std::printf("channel %u: %llu samples, checksum %08x, %zu windows", static_cast<unsigned>(c.channel_id),
                static_cast<unsigned long long>(c.samples), c.checksum, c.measurements.size());
    if (!c.measurements.empty()) {
      const StabilityReport st = stability_stats(c.measurements);
      std::printf(", amp %.6f V, rel std %.3e, phase std %.4f deg", st.amp_mean_v, st.amp_rel_std,
                  st.phase_std_deg);
    }
    std::printf("\n");
  }
  if (!cfg.out_dir.empty()) {
    fs::create_directories(cfg.out_dir);
    write_measurements_csv(fs::path(cfg.out_dir) / "measurements.csv", s.channels);
  }
  return s.clean() ? 0 : 1;
}

int run_bench(const CommonOptions& opt, std::optional<double> min_tp) {
  RunConfig cfg = load(opt);
  if (min_tp) cfg.min_throughput_bps = *min_tp;
  PvTable pvs;
  init_pvs(pvs, cfg);
  auto server = maybe_pv_server(pvs, cfg);

  std::vector<ChannelSinkStats> measurements;
  const BenchReport r = run_pipeline_bench(cfg, cfg.duration_s, &pvs, &measurements);
  std::cout << format_bench_summary(r, cfg.min_throughput_bps);
  if (!cfg.out_dir.empty()) {
    fs::create_directories(cfg.out_dir);
    write_bench_csv(fs::path(cfg.out_dir) / "bench.csv", r);
    write_measurements_csv(fs::path(cfg.out_dir) / "measurements.csv", measurements);
  }
  return r.clean() ? 0 : 1;
}

struct EyescanOptions {
  int channels = 4;
  double jitter = 0.05;
  double noise = 0.1;
  int h_steps = 65;
  int v_steps = 63;
  double ber_threshold = 1e-3;
  std::uint64_t bits = 100000;
  std::uint64_t seed = 1;
  std::string out;
};

int run_eyescan(const EyescanOptions& o) {
  EyeScanConfig sc;
  sc.h_steps = o.h_steps;
  sc.v_steps = o.v_steps;
  sc.ber_threshold = o.ber_threshold;
  sc.bits_per_point = o.bits;

  std::vector<std::pair<std::string, EyeScanResult>> rows;
  for (int ch = 1; ch <= o.channels; ++ch) {
    ChannelModel model{o.jitter, o.noise, o.seed + static_cast<std::uint64_t>(ch)};
    rows.emplace_back("Channel " + std::to_string(ch), eye_scan(model, sc));
  }
  if (!o.out.empty()) {
    const fs::path base(o.out);
    if (base.has_parent_path()) fs::create_directories(base.parent_path());
    for (std::size_t i = 0; i < rows.size(); ++i) {
      fs::path p = base;
      if (rows.size() > 1) p.replace_filename(base.stem().string() + "_ch" + std::to_string(i + 1) + base.extension().string());
      std::ofstream os(p);
      write_eye_csv(os, rows[i].second);
    }
  }
  std::cout << render_eye_table(rows);
  return 0;
}

int run_pvctl(const std::string& host, std::uint16_t port, const std::vector<std::string>& words,
              int events, double timeout_s) {
  std::string command;
  for (const auto& w : words) command += (command.empty() ? "" : " ") + w;
  TcpStream s = TcpStream::connect(host, port, std::chrono::seconds(2));
  s.write_all(command + "\n");
  LineReader lines(s);
  std::string line;
  if (!lines.next(line)) {
    std::cerr << "no reply\n";
    return 2;
  }
  std::cout << line << "\n";
  const bool ok = line.rfind("OK", 0) == 0;
  if (ok && !words.empty() && words[0] == "MON") {
    std::thread watchdog;
    if (timeout_s > 0) {
      watchdog = std::thread([&s, timeout_s] {
        std::this_thread::sleep_for(std::chrono::duration<double>(timeout_s));
        s.shutdown_both();
      });
    }
    for (int i = 0; i < events && lines.next(line); ++i) std::cout << line << "\n";
    s.shutdown_both();
    if (watchdog.joinable()) watchdog.join();
  }
  return ok ? 0 : 1;
}

int run_budget(double channels, double rate, double bits, int lanes, double lane_bps, double overhead) {
  const double required = required_rate(channels, rate, bits);
  const double available = lane_budget(lanes, lane_bps, overhead);
  const BandwidthBudget b = make_budget(required, available);
  std::printf("required   %.6g bps (%g ch x %g S/s x %g bit)\n", required, channels, rate, bits);
  std::printf("per lane   %.6g bps over %d lanes with overhead %g\n", per_lane_rate(required, lanes, overhead),
              lanes, overhead);
  std::printf("available  %.6g bps (%d x %g bps / %g)\n", available, lanes, lane_bps, overhead);
  std::printf("feasible   %s\n", b.feasible ? "yes" : "no");
  return b.feasible ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"SHIP readout pipeline, link-quality scan and slow-control tools"};
  app.require_subcommand(1);

  CommonOptions dig_opt, proc_opt, bench_opt;
  auto* dig = app.add_subcommand("digitizer", "Synthesize, compress and stream ADC data to a processor");
  add_common(dig, dig_opt, true);
  auto* proc = app.add_subcommand("processor", "Receive, decompress and demodulate streamed data");
  add_common(proc, proc_opt, true);
  auto* bench = app.add_subcommand("bench", "Run digitizer and processor over loopback and report");
  add_common(bench, bench_opt, true);
  std::optional<double> min_tp;
  bench->add_option("--min-throughput", min_tp, "Payload throughput threshold in bit/s");

  EyescanOptions eye;
  auto* eyescan = app.add_subcommand("eyescan", "PRBS-31 statistical eye scan over a jitter/noise link model");
  eyescan->add_option("--channels", eye.channels, "Number of links to scan")->check(CLI::Range(1, 64));
  eyescan->add_option("--jitter", eye.jitter, "Gaussian jitter sigma in UI");
  eyescan->add_option("--noise", eye.noise, "Gaussian amplitude noise sigma (eye amplitude 1)");
  eyescan->add_option("--h-steps", eye.h_steps, "Horizontal grid points (odd)");
  eyescan->add_option("--v-steps", eye.v_steps, "Vertical grid points (odd)");
  eyescan->add_option("--ber-threshold", eye.ber_threshold, "Open-region BER threshold");
  eyescan->add_option("--bits", eye.bits, "PRBS bits per grid point");
  eyescan->add_option("--seed", eye.seed, "Base seed");
  eyescan->add_option("--out", eye.out, "Grid CSV path (one file per channel)");

  std::string pv_host = "127.0.0.1";
  std::uint16_t pv_port = 5064;
  std::vector<std::string> pv_words;
  int pv_events = 1;
  double pv_timeout = 10.0;
  auto* pvctl = app.add_subcommand("pvctl", "Send one command to a PV server (GET/PUT/MON/LIST)");
  pvctl->add_option("--host", pv_host, "PV server host");
  pvctl->add_option("--pv-port", pv_port, "PV server port");
  pvctl->add_option("--count", pv_events, "Events to print for MON");
  pvctl->add_option("--timeout", pv_timeout, "Seconds to wait for MON events");
  pvctl->add_option("command", pv_words, "Command words, e.g. GET ship.run_state")->required();

  double b_channels = 4, b_rate = 1e9, b_bits = 16, b_lane_bps = 16.25e9, b_overhead = 1.0;
  int b_lanes = 4;
  auto* budget = app.add_subcommand("budget", "Raw data rate versus lane capacity");
  budget->add_option("--channels", b_channels);
  budget->add_option("--rate", b_rate, "Samples per second per channel");
  budget->add_option("--bits", b_bits);
  budget->add_option("--lanes", b_lanes);
  budget->add_option("--lane-bps", b_lane_bps);
  budget->add_option("--overhead", b_overhead, "Line-coding overhead factor");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*dig) return run_digitizer(dig_opt);
    if (*proc) return run_processor(proc_opt);
    if (*bench) return run_bench(bench_opt, min_tp);
    if (*eyescan) return run_eyescan(eye);
    if (*pvctl) return run_pvctl(pv_host, pv_port, pv_words, pv_events, pv_timeout);
    if (*budget) return run_budget(b_channels, b_rate, b_bits, b_lanes, b_lane_bps, b_overhead);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const NetError& e) {
    std::cerr << "network error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  }
  return 0;
}
