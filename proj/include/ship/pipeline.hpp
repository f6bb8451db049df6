#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "ship/config.hpp"
#include "ship/dsp_measure.hpp"
#include "ship/net.hpp"
#include "ship/slow_control.hpp"

namespace ship {

/// Running CRC-32C over the little-endian byte image of a code stream.
std::uint32_t checksum_codes(std::span<const std::int16_t> codes, std::uint32_t crc = 0);

/// Seed of the noise generator for one channel of a run.
std::uint64_t channel_seed(std::uint64_t run_seed, std::uint8_t channel_id);

struct ChannelSourceStats {
  std::uint8_t channel_id = 0;
  std::uint64_t samples = 0;
  std::uint32_t checksum = 0;
  std::uint64_t frames = 0;
};

struct DigitizerStats {
  std::uint64_t frames_sent = 0;
  std::uint64_t raw_bytes = 0;      // 2 bytes per generated sample
  std::uint64_t payload_bytes = 0;  // frame payloads (compressed or raw)
  std::uint64_t wire_bytes = 0;     // full frames
  std::uint64_t wall_ns = 0;
  std::vector<ChannelSourceStats> channels;
};

/// Per-channel producers (synthesize, compress, frame) writing to a static
/// channel -> lane map. Producers sharing a lane serialize their writes.
class Digitizer {
 public:
  explicit Digitizer(const RunConfig& cfg, PvTable* pvs = nullptr);

  /// Streams until `duration` elapses (or *stop becomes true), then shuts
  /// down the write side of every lane. Throws NetError on transport failure.
  DigitizerStats run(std::vector<TcpStream>& lanes, std::chrono::nanoseconds duration,
                     const std::atomic<bool>* stop = nullptr);

 private:
  RunConfig cfg_;
  PvTable* pvs_;
};

struct ChannelSinkStats {
  std::uint8_t channel_id = 0;
  std::uint64_t samples = 0;
  std::uint32_t checksum = 0;
  std::uint64_t frames = 0;
  std::uint64_t discontinuities = 0;
  std::vector<IqMeasurement> measurements;
};

struct ProcessorStats {
  std::uint64_t frames_received = 0;
  std::uint64_t wire_bytes = 0;
  std::uint64_t raw_bytes = 0;  // decoded samples * 2
  std::uint64_t gaps_detected = 0;
  std::uint64_t frames_missing = 0;
  std::uint64_t duplicates = 0;
  std::uint64_t crc_errors = 0;
  std::uint64_t frame_errors = 0;   // unrecoverable header errors (lane abandoned)
  std::uint64_t decode_errors = 0;  // codec failures on CRC-valid frames
  std::uint64_t wall_ns = 0;
  std::vector<ChannelSinkStats> channels;  // ascending channel id

  bool clean() const { return gaps_detected == 0 && crc_errors == 0 && frame_errors == 0 && decode_errors == 0; }
};

/// One reader per lane: parse frames, track sequences, decompress, verify
/// checksums and demodulate into measurements.
class Processor {
 public:
  explicit Processor(const RunConfig& cfg, PvTable* pvs = nullptr);

  /// Runs until every lane reaches end of stream.
  ProcessorStats run(std::vector<TcpStream>& lanes);

  /// Accepts cfg.lanes connections, then run().
  ProcessorStats serve(TcpListener& listener, std::chrono::milliseconds accept_timeout);

 private:
  RunConfig cfg_;
  PvTable* pvs_;
};

struct ChannelBenchReport {
  std::uint8_t channel_id = 0;
  std::uint64_t samples_sent = 0;
  std::uint64_t samples_received = 0;
  std::uint32_t source_checksum = 0;
  std::uint32_t sink_checksum = 0;
  std::uint64_t measurements = 0;
  std::optional<StabilityReport> stability;
  double max_amp_rel_error = 0.0;  // against the configured tone, over all windows
  double max_phase_error_rad = 0.0;
};

struct BenchReport {
  std::uint64_t bytes_in = 0;         // raw sample bytes generated
  std::uint64_t bytes_out = 0;        // wire bytes sent
  std::uint64_t payload_bytes = 0;    // frame payload bytes sent
  std::uint64_t bytes_delivered = 0;  // raw sample bytes recovered at the sink
  std::uint64_t wall_time_ns = 0;
  double throughput_bps = 0.0;  // bytes_delivered * 8 / wall time
  double compression_ratio = 0.0;  // bytes_in / payload_bytes
  std::uint64_t frames_sent = 0;
  std::uint64_t frames_received = 0;
  std::uint64_t gaps_detected = 0;
  std::uint64_t crc_errors = 0;
  std::uint64_t frame_errors = 0;
  std::uint64_t decode_errors = 0;
  std::vector<ChannelBenchReport> channels;

  bool checksums_match() const;
  /// Exit criterion: no gaps, no CRC or decode errors.
  bool clean() const { return gaps_detected == 0 && crc_errors == 0 && frame_errors == 0 && decode_errors == 0; }
};

/// Builds the report from both ends of a run.
BenchReport make_bench_report(const RunConfig& cfg, const DigitizerStats& src,
                              const ProcessorStats& sink, std::uint64_t wall_time_ns);

/// Digitizer and processor in one process over loopback TCP.
/// Throws ConfigError(Validation) for duration <= 0, NetError on connection failure.
BenchReport run_pipeline_bench(const RunConfig& cfg, double duration_s, PvTable* pvs = nullptr,
                               std::vector<ChannelSinkStats>* measurements_out = nullptr);

/// bench.csv: one `metric,value` row per counter; floating values are
/// printed with round-trip precision so the summary can be recomputed exactly.
void write_bench_csv(const std::filesystem::path& path, const BenchReport& report);
void write_measurements_csv(const std::filesystem::path& path,
                            const std::vector<ChannelSinkStats>& channels);
std::string format_bench_summary(const BenchReport& report, double min_throughput_bps);

}  // namespace ship
