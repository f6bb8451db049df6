#include <doctest.h>

#include <stdexcept>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "ship/crc32c.hpp"
#include "ship/pipeline.hpp"

using namespace ship;

namespace {

RunConfig one_channel(double amplitude, double phase) {
  RunConfig c;
  c.lanes = 2;
  ChannelConfig ch;
  ch.channel_id = 0;
  ch.tone.freq_hz = 250e3;
  ch.tone.amplitude_v = amplitude;
  ch.tone.phase_rad = phase;
  c.channels.push_back(ch);
  return c;
}

std::map<std::string, std::string> read_metrics(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::string line;
  std::getline(in, line);
  std::map<std::string, std::string> m;
  while (std::getline(in, line)) {
    const auto comma = line.find(',');
    m[line.substr(0, comma)] = line.substr(comma + 1);
  }
  return m;
}

}  // namespace

TEST_CASE("checksum is CRC-32C of little-endian codes") {
  const std::vector<std::int16_t> codes{1, -1, 0x1234, -32768};
  const std::vector<std::uint8_t> le{0x01, 0x00, 0xFF, 0xFF, 0x34, 0x12, 0x00, 0x80};
  CHECK(checksum_codes(codes) == crc32c(le));
  CHECK(checksum_codes(std::span(codes).subspan(2), checksum_codes(std::span(codes).first(2))) == crc32c(le));
}

TEST_CASE("loopback run delivers every sample") {
  const RunConfig cfg = one_channel(0.5, 0.3);
  std::vector<ChannelSinkStats> sinks;
  const BenchReport r = run_pipeline_bench(cfg, 1.0, nullptr, &sinks);
  CHECK(r.clean());
  CHECK(r.gaps_detected == 0);
  CHECK(r.crc_errors == 0);
  CHECK(r.checksums_match());
  CHECK(r.frames_sent == r.frames_received);
  CHECK(r.bytes_delivered == r.bytes_in);
  REQUIRE(r.channels.size() == 1);
  CHECK(r.channels[0].samples_sent > 0);
  CHECK(r.channels[0].measurements == r.channels[0].samples_received / 1000);
  CHECK(r.channels[0].max_amp_rel_error <= 1e-3);
  CHECK(r.channels[0].max_phase_error_rad <= 1e-3);
  CHECK(r.compression_ratio > 1.0);
  REQUIRE(sinks.size() == 1);
  CHECK(sinks[0].measurements.size() == r.channels[0].measurements);
  CHECK(sinks[0].discontinuities == 0);
}

TEST_CASE("uncompressed loopback") {
  RunConfig cfg = one_channel(0.3, -2.0);
  cfg.compression_enabled = false;
  const BenchReport r = run_pipeline_bench(cfg, 0.5);
  CHECK(r.clean());
  CHECK(r.checksums_match());
  // raw payloads carry two bytes per sample
  CHECK(r.payload_bytes == r.bytes_in);
}

TEST_CASE("non-positive duration is a validation error") {
  const RunConfig cfg = one_channel(0.5, 0.0);
  for (double d : {0.0, -1.0, std::nan("")}) {
    try {
      run_pipeline_bench(cfg, d);
      FAIL("accepted duration " << d);
    } catch (const ConfigError& e) {
      CHECK(e.kind() == ConfigError::Kind::Validation);
    }
  }
}

TEST_CASE("bench CSV reproduces the summary figures") {
  const RunConfig cfg = one_channel(0.4, 1.0);
  std::vector<ChannelSinkStats> sinks;
  const BenchReport r = run_pipeline_bench(cfg, 0.5, nullptr, &sinks);
  const auto dir = std::filesystem::temp_directory_path() / "ship_pipeline_test";
  std::filesystem::create_directories(dir);
  write_bench_csv(dir / "bench.csv", r);
  write_measurements_csv(dir / "measurements.csv", sinks);

  const auto m = read_metrics(dir / "bench.csv");
  const double delivered = std::stod(m.at("bytes_delivered"));
  const double wall = std::stod(m.at("wall_time_ns"));
  CHECK(delivered * 8.0 / (wall * 1e-9) == std::stod(m.at("throughput_bps")));
  CHECK(std::stod(m.at("throughput_bps")) == r.throughput_bps);
  CHECK(std::stod(m.at("bytes_in")) / std::stod(m.at("payload_bytes")) == std::stod(m.at("compression_ratio")));
  CHECK(m.at("ch0.source_checksum") == m.at("ch0.sink_checksum"));
  CHECK(m.at("gaps_detected") == "0");

  std::ifstream meas(dir / "measurements.csv");
  std::string line;
  std::getline(meas, line);
  CHECK(line == "channel,window_start,amplitude_v,phase_rad");
  std::size_t rows = 0;
  while (std::getline(meas, line)) ++rows;
  CHECK(rows == r.channels[0].measurements);

  const std::string summary = format_bench_summary(r, 0.0);
  CHECK(summary.find("PASS") != std::string::npos);
  CHECK(summary.find("checksums match") != std::string::npos);
  std::filesystem::remove_all(dir);
}
