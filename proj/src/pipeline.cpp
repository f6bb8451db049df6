#include "ship/pipeline.hpp"

#include <array>
#include <bit>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <thread>

#include "ship/codec.hpp"
#include "ship/crc32c.hpp"
#include "ship/stream_proto.hpp"

namespace ship {

namespace {

using Clock = std::chrono::steady_clock;

std::uint64_t elapsed_ns(Clock::time_point since) {
  return static_cast<std::uint64_t>(
      std::chrono::duration_cast<std::chrono::nanoseconds>(Clock::now() - since).count());
}

void put_raw_payload(std::span<const std::int16_t> codes, std::vector<std::uint8_t>& out) {
  out.resize(codes.size() * 2);
  for (std::size_t i = 0; i < codes.size(); ++i) {
    const auto u = static_cast<std::uint16_t>(codes[i]);
    out[2 * i] = static_cast<std::uint8_t>(u >> 8);
    out[2 * i + 1] = static_cast<std::uint8_t>(u);
  }
}

void get_raw_payload(std::span<const std::uint8_t> payload, std::vector<std::int16_t>& codes) {
  codes.resize(payload.size() / 2);
  for (std::size_t i = 0; i < codes.size(); ++i) {
    codes[i] = static_cast<std::int16_t>(
        static_cast<std::uint16_t>((payload[2 * i] << 8) | payload[2 * i + 1]));
  }
}

std::string ch_pv(std::uint8_t ch, const char* leaf) {
  return "ship.ch" + std::to_string(ch) + "." + leaf;
}

template <typename T>
T pv_number(PvTable& pvs, const std::string& name, T fallback) {
  try {
    const auto s = pvs.get(name);
    if (const auto* d = std::get_if<double>(&s.value)) return static_cast<T>(*d);
    if (const auto* i = std::get_if<std::int64_t>(&s.value)) return static_cast<T>(*i);
  } catch (const PvError&) {
  }
  return fallback;
}

bool pv_enum_is(PvTable& pvs, const std::string& name, const char* choice, bool fallback) {
  try {
    const auto s = pvs.get(name);
    if (const auto* str = std::get_if<std::string>(&s.value)) return *str == choice;
  } catch (const PvError&) {
  }
  return fallback;
}

void pv_set(PvTable* pvs, const std::string& name, const PvValue& value) {
  if (!pvs) return;
  try {
    pvs->set_internal(name, value);
  } catch (const PvError&) {
  }
}

}  // namespace

std::uint32_t checksum_codes(std::span<const std::int16_t> codes, std::uint32_t crc) {
  if constexpr (std::endian::native == std::endian::little) {
    return crc32c({reinterpret_cast<const std::uint8_t*>(codes.data()), codes.size() * 2}, crc);
  } else {
    std::vector<std::uint8_t> le(codes.size() * 2);
    for (std::size_t i = 0; i < codes.size(); ++i) {
      const auto u = static_cast<std::uint16_t>(codes[i]);
      le[2 * i] = static_cast<std::uint8_t>(u);
      le[2 * i + 1] = static_cast<std::uint8_t>(u >> 8);
    }
    return crc32c(le, crc);
  }
}

std::uint64_t channel_seed(std::uint64_t run_seed, std::uint8_t channel_id) {
  return run_seed * 0x9E3779B97F4A7C15ull + channel_id + 1;
}

namespace {
constexpr std::size_t kWriteBatchBytes = 64 * 1024;
}

Digitizer::Digitizer(const RunConfig& cfg, PvTable* pvs) : cfg_(cfg), pvs_(pvs) { validate(cfg_); }

DigitizerStats Digitizer::run(std::vector<TcpStream>& lanes, std::chrono::nanoseconds duration,
                              const std::atomic<bool>* stop) {
  if (lanes.empty()) throw NetError("digitizer: no lanes");
  const auto ids = cfg_.channel_ids();
  const auto lane_of = assign_lanes(ids, static_cast<int>(lanes.size()));
  std::vector<std::mutex> lane_mu(lanes.size());

  DigitizerStats stats;
  stats.channels.resize(cfg_.channels.size());
  std::vector<std::uint64_t> payload_bytes(cfg_.channels.size(), 0);
  std::vector<std::uint64_t> wire_bytes(cfg_.channels.size(), 0);
  std::atomic<std::uint64_t> frames_total{0};
  std::atomic<bool> failed{false};
  std::string failure;
  std::mutex failure_mu;

  pv_set(pvs_, "ship.run_state", std::string("running"));
  const auto start = Clock::now();
  const auto deadline = start + duration;

  auto producer = [&](std::size_t slot) {
    const ChannelConfig& ch = cfg_.channels[slot];
    ChannelSourceStats& cs = stats.channels[slot];
    cs.channel_id = ch.channel_id;
    TcpStream& lane = lanes[static_cast<std::size_t>(lane_of.at(ch.channel_id))];
    std::mutex& mu = lane_mu[static_cast<std::size_t>(lane_of.at(ch.channel_id))];

    ToneSynthesizer synth(ch.tone, cfg_.adc, channel_seed(cfg_.seed, ch.channel_id));
    const double base_dc = ch.tone.dc_offset_v;
    WaveformBlock block;
    block.channel_id = ch.channel_id;
    std::vector<std::uint8_t> raw_payload;
    std::vector<std::uint8_t> frame;  // frames queued for one write
    std::size_t queued_frames = 0;
    std::uint32_t sequence = 0;
    std::int64_t index = 0;
    const auto n = cfg_.codec.block_size;

    try {
      while (!failed && !(stop && *stop) && Clock::now() < deadline) {
        bool compress = cfg_.compression_enabled;
        if (pvs_) {
          compress = pv_enum_is(*pvs_, "ship.compression_enabled", "true", compress);
          synth.set_dc_offset(base_dc + pv_number(*pvs_, ch_pv(ch.channel_id, "bias_v"), 0.0));
          synth.set_noise_sigma(pv_number(*pvs_, ch_pv(ch.channel_id, "noise_sigma_v"), ch.tone.noise_sigma_v));
        }
        block.start_sample_index = index;
        synth.fill(index, block.samples, n);
        cs.checksum = checksum_codes(block.samples, cs.checksum);

        const std::size_t frame_start = frame.size();
        std::size_t payload_len;
        if (compress) {
          const CompressedBlock cb = compress_block(block, cfg_.codec);
          append_frame(frame, ch.channel_id, kFlagCompressed, sequence,
                       static_cast<std::uint64_t>(index), cb.bytes);
          payload_len = cb.bytes.size();
        } else {
          put_raw_payload(block.samples, raw_payload);
          append_frame(frame, ch.channel_id, 0, sequence, static_cast<std::uint64_t>(index), raw_payload);
          payload_len = raw_payload.size();
        }
        const std::size_t wire_len = frame.size() - frame_start;
        ++queued_frames;
        // paced runs send every frame at once; otherwise coalesce to cut syscalls
        if (cfg_.pace || frame.size() >= kWriteBatchBytes) {
          std::lock_guard lock(mu);
          lane.write_all(frame);
          frame.clear();
          queued_frames = 0;
        }
        ++sequence;
        index += static_cast<std::int64_t>(n);
        cs.samples += n;
        ++cs.frames;
        payload_bytes[slot] += payload_len;
        wire_bytes[slot] += wire_len;
        const std::uint64_t total = ++frames_total;
        if (pvs_ && total % 256 == 0) pv_set(pvs_, "ship.frames_sent", static_cast<std::int64_t>(total));

        if (cfg_.pace) {
          const auto due = start + std::chrono::nanoseconds(static_cast<std::int64_t>(
                                       static_cast<double>(index) / cfg_.adc.sample_rate_hz * 1e9));
          std::this_thread::sleep_until(due);
        }
      }
      if (queued_frames > 0) {
        std::lock_guard lock(mu);
        lane.write_all(frame);
      }
    } catch (const std::exception& e) {
      std::lock_guard lock(failure_mu);
      if (!failed.exchange(true)) failure = e.what();
    }
  };

  {
    std::vector<std::jthread> producers;
    for (std::size_t i = 0; i < cfg_.channels.size(); ++i) producers.emplace_back(producer, i);
  }
  for (auto& lane : lanes) lane.shutdown_write();
  stats.wall_ns = elapsed_ns(start);

  for (std::size_t i = 0; i < stats.channels.size(); ++i) {
    stats.frames_sent += stats.channels[i].frames;
    stats.raw_bytes += stats.channels[i].samples * 2;
    stats.payload_bytes += payload_bytes[i];
    stats.wire_bytes += wire_bytes[i];
  }
  pv_set(pvs_, "ship.frames_sent", static_cast<std::int64_t>(stats.frames_sent));
  if (stats.payload_bytes > 0)
    pv_set(pvs_, "ship.compression_ratio",
           compression_ratio(stats.raw_bytes * 8, stats.payload_bytes * 8));
  pv_set(pvs_, "ship.run_state", std::string("stopped"));
  if (failed) throw NetError("digitizer: " + failure);
  return stats;
}

Processor::Processor(const RunConfig& cfg, PvTable* pvs) : cfg_(cfg), pvs_(pvs) { validate(cfg_); }

namespace {

struct ChannelSink {
  ChannelSinkStats stats;
  ChannelDemodulator demod;

  ChannelSink(std::uint8_t ch, const DemodConfig& d, const AdcConfig& a) : demod(ch, d, a) {
    stats.channel_id = ch;
  }
};

struct LaneCounters {
  std::uint64_t frames = 0, wire_bytes = 0, raw_bytes = 0;
  std::uint64_t crc_errors = 0, frame_errors = 0, decode_errors = 0;
  SequenceTracker tracker;
};

}  // namespace

ProcessorStats Processor::run(std::vector<TcpStream>& lanes) {
  std::array<std::unique_ptr<ChannelSink>, 256> sinks;
  std::array<std::atomic<int>, 256> owner;  // lane that first carried the channel
  for (auto& o : owner) o = -1;
  std::vector<LaneCounters> counters(lanes.size());
  std::mutex pv_mu;
  std::atomic<std::uint64_t> frames_total{0}, gaps_total{0}, crc_total{0};
  const auto start = Clock::now();

  auto reader = [&](std::size_t lane_index) {
    LaneCounters& lc = counters[lane_index];
    FrameParser parser;
    std::vector<std::uint8_t> buf(1 << 18);
    std::vector<std::int16_t> raw_codes;
    WaveformBlock block;
    bool desync = false;

    auto handle = [&](const StreamFrame& f) {
      int expected = -1;
      if (!owner[f.channel_id].compare_exchange_strong(expected, static_cast<int>(lane_index)) &&
          expected != static_cast<int>(lane_index)) {
        // A channel must stay on one lane; anything else breaks per-channel ordering.
        ++lc.frame_errors;
        return;
      }
      auto& sink = sinks[f.channel_id];
      if (!sink) sink = std::make_unique<ChannelSink>(f.channel_id, cfg_.demod, cfg_.adc);

      const SequenceEvent ev = lc.tracker.observe(f.channel_id, f.sequence);
      if (ev.kind == SequenceEvent::Kind::Duplicate) return;
      if (ev.kind == SequenceEvent::Kind::Gap) ++gaps_total;

      const auto ts = static_cast<std::int64_t>(f.timestamp);
      std::span<const std::int16_t> codes;
      try {
        if (f.compressed()) {
          decompress_into(f.payload, f.payload.size() * 8, block);
          codes = block.samples;
        } else {
          get_raw_payload(f.payload, raw_codes);
          codes = raw_codes;
        }
      } catch (const CodecError&) {
        ++lc.decode_errors;
        return;
      }
      ChannelSinkStats& cs = sink->stats;
      cs.checksum = checksum_codes(codes, cs.checksum);
      cs.samples += codes.size();
      ++cs.frames;
      lc.raw_bytes += codes.size() * 2;
      const std::size_t before = cs.measurements.size();
      sink->demod.push(codes, ts, cs.measurements);
      cs.discontinuities = sink->demod.discontinuities();

      const std::uint64_t total = ++frames_total;
      if (pvs_ && (total % 256 == 0 || cs.measurements.size() > before)) {
        std::lock_guard lock(pv_mu);
        if (total % 256 == 0) {
          pv_set(pvs_, "ship.frames_received", static_cast<std::int64_t>(total));
          pv_set(pvs_, "ship.gaps_detected", static_cast<std::int64_t>(gaps_total.load()));
          pv_set(pvs_, "ship.crc_errors", static_cast<std::int64_t>(crc_total.load()));
        }
        if (cs.measurements.size() > before && total % 64 == 0) {
          const IqMeasurement& m = cs.measurements.back();
          pv_set(pvs_, ch_pv(f.channel_id, "amplitude_v"), m.amplitude_v);
          pv_set(pvs_, ch_pv(f.channel_id, "phase_rad"), m.phase_rad);
        }
      }
    };

    try {
      while (!desync) {
        const std::size_t n = lanes[lane_index].read_some(buf);
        if (n == 0) break;
        lc.wire_bytes += n;
        parser.feed({buf.data(), n});
        for (;;) {
          FrameParser::Result r = parser.next();
          if (r.frame) {
            ++lc.frames;
            handle(*r.frame);
          } else if (r.error) {
            if (*r.error == FrameErrc::CrcMismatch) {
              ++lc.crc_errors;
              ++crc_total;
            } else {
              ++lc.frame_errors;
              desync = true;
              break;
            }
          } else {
            break;
          }
        }
      }
      // Bytes left over at end of stream are a cut frame.
      if (!desync && parser.buffered() > 0) ++lc.frame_errors;
    } catch (const NetError&) {
      ++lc.frame_errors;
    }
  };

  {
    std::vector<std::jthread> readers;
    for (std::size_t i = 0; i < lanes.size(); ++i) readers.emplace_back(reader, i);
  }

  ProcessorStats stats;
  stats.wall_ns = elapsed_ns(start);
  for (auto& lc : counters) {
    stats.frames_received += lc.frames;
    stats.wire_bytes += lc.wire_bytes;
    stats.raw_bytes += lc.raw_bytes;
    stats.gaps_detected += lc.tracker.gaps();
    stats.frames_missing += lc.tracker.missing();
    stats.duplicates += lc.tracker.duplicates();
    stats.crc_errors += lc.crc_errors;
    stats.frame_errors += lc.frame_errors;
    stats.decode_errors += lc.decode_errors;
  }
  for (auto& s : sinks) {
    if (s) stats.channels.push_back(std::move(s->stats));
  }
  pv_set(pvs_, "ship.frames_received", static_cast<std::int64_t>(stats.frames_received));
  pv_set(pvs_, "ship.gaps_detected", static_cast<std::int64_t>(stats.gaps_detected));
  pv_set(pvs_, "ship.crc_errors", static_cast<std::int64_t>(stats.crc_errors));
  for (const auto& c : stats.channels) {
    if (c.measurements.empty()) continue;
    pv_set(pvs_, ch_pv(c.channel_id, "amplitude_v"), c.measurements.back().amplitude_v);
    pv_set(pvs_, ch_pv(c.channel_id, "phase_rad"), c.measurements.back().phase_rad);
  }
  return stats;
}

ProcessorStats Processor::serve(TcpListener& listener, std::chrono::milliseconds accept_timeout) {
  std::vector<TcpStream> lanes;
  for (int i = 0; i < cfg_.lanes; ++i) lanes.push_back(listener.accept(accept_timeout));
  return run(lanes);
}

bool BenchReport::checksums_match() const {
  for (const auto& c : channels) {
    if (c.source_checksum != c.sink_checksum || c.samples_sent != c.samples_received) return false;
  }
  return !channels.empty();
}

BenchReport make_bench_report(const RunConfig& cfg, const DigitizerStats& src,
                              const ProcessorStats& sink, std::uint64_t wall_time_ns) {
  BenchReport r;
  r.bytes_in = src.raw_bytes;
  r.bytes_out = src.wire_bytes;
  r.payload_bytes = src.payload_bytes;
  r.bytes_delivered = sink.raw_bytes;
  r.wall_time_ns = wall_time_ns;
  r.throughput_bps = wall_time_ns > 0 ? static_cast<double>(r.bytes_delivered) * 8.0 /
                                            (static_cast<double>(wall_time_ns) * 1e-9)
                                      : 0.0;
  r.compression_ratio = r.payload_bytes > 0 ? compression_ratio(r.bytes_in * 8, r.payload_bytes * 8) : 0.0;
  r.frames_sent = src.frames_sent;
  r.frames_received = sink.frames_received;
  r.gaps_detected = sink.gaps_detected;
  r.crc_errors = sink.crc_errors;
  r.frame_errors = sink.frame_errors;
  r.decode_errors = sink.decode_errors;

  std::map<std::uint8_t, const ChannelSinkStats*> by_id;
  for (const auto& c : sink.channels) by_id[c.channel_id] = &c;

  for (std::size_t i = 0; i < src.channels.size(); ++i) {
    const ChannelSourceStats& s = src.channels[i];
    ChannelBenchReport c;
    c.channel_id = s.channel_id;
    c.samples_sent = s.samples;
    c.source_checksum = s.checksum;
    const ToneSpec* tone = nullptr;
    for (const auto& ch : cfg.channels) {
      if (ch.channel_id == s.channel_id) tone = &ch.tone;
    }
    if (const auto it = by_id.find(s.channel_id); it != by_id.end()) {
      const ChannelSinkStats& k = *it->second;
      c.samples_received = k.samples;
      c.sink_checksum = k.checksum;
      c.measurements = k.measurements.size();
      if (!k.measurements.empty()) {
        try {
          c.stability = stability_stats(k.measurements);
        } catch (const DemodError&) {
        }
        if (tone && tone->freq_hz == cfg.demod.f_if_hz && tone->amplitude_v > 0.0) {
          for (const auto& m : k.measurements) {
            c.max_amp_rel_error = std::max(c.max_amp_rel_error,
                                           std::fabs(m.amplitude_v - tone->amplitude_v) / tone->amplitude_v);
            c.max_phase_error_rad = std::max(c.max_phase_error_rad,
                                             std::fabs(wrap_phase(m.phase_rad - tone->phase_rad)));
          }
        }
      }
    }
    r.channels.push_back(c);
  }
  return r;
}

BenchReport run_pipeline_bench(const RunConfig& cfg, double duration_s, PvTable* pvs,
                               std::vector<ChannelSinkStats>* measurements_out) {
  if (!(duration_s > 0.0)) throw ConfigError(ConfigError::Kind::Validation, "duration must be > 0");
  validate(cfg);

  TcpListener listener("127.0.0.1", 0);
  RunConfig local = cfg;
  local.host = "127.0.0.1";
  local.port = listener.port();

  Processor processor(local, pvs);
  Digitizer digitizer(local, pvs);

  ProcessorStats sink;
  std::exception_ptr sink_error;
  const auto start = Clock::now();
  std::thread proc_thread([&] {
    try {
      sink = processor.serve(listener, std::chrono::milliseconds(10000));
    } catch (...) {
      sink_error = std::current_exception();
    }
  });

  DigitizerStats src;
  std::exception_ptr src_error;
  try {
    std::vector<TcpStream> lanes;
    for (int i = 0; i < local.lanes; ++i)
      lanes.push_back(TcpStream::connect(local.host, local.port, std::chrono::milliseconds(2000)));
    src = digitizer.run(lanes, std::chrono::nanoseconds(static_cast<std::int64_t>(duration_s * 1e9)));
  } catch (...) {
    src_error = std::current_exception();
    listener.close();
  }
  proc_thread.join();
  const std::uint64_t wall = elapsed_ns(start);
  if (src_error) std::rethrow_exception(src_error);
  if (sink_error) std::rethrow_exception(sink_error);

  BenchReport report = make_bench_report(local, src, sink, wall);
  if (measurements_out) *measurements_out = std::move(sink.channels);
  return report;
}

namespace {

std::string exact(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

void write_bench_csv(const std::filesystem::path& path, const BenchReport& r) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << "metric,value\n";
  os << "bytes_in," << r.bytes_in << "\n";
  os << "bytes_out," << r.bytes_out << "\n";
  os << "payload_bytes," << r.payload_bytes << "\n";
  os << "bytes_delivered," << r.bytes_delivered << "\n";
  os << "wall_time_ns," << r.wall_time_ns << "\n";
  os << "throughput_bps," << exact(r.throughput_bps) << "\n";
  os << "compression_ratio," << exact(r.compression_ratio) << "\n";
  os << "frames_sent," << r.frames_sent << "\n";
  os << "frames_received," << r.frames_received << "\n";
  os << "gaps_detected," << r.gaps_detected << "\n";
  os << "crc_errors," << r.crc_errors << "\n";
  os << "frame_errors," << r.frame_errors << "\n";
  os << "decode_errors," << r.decode_errors << "\n";
  for (const auto& c : r.channels) {
    const std::string p = "ch" + std::to_string(c.channel_id) + ".";
    os << p << "samples_sent," << c.samples_sent << "\n";
    os << p << "samples_received," << c.samples_received << "\n";
    os << p << "source_checksum," << c.source_checksum << "\n";
    os << p << "sink_checksum," << c.sink_checksum << "\n";
    os << p << "measurements," << c.measurements << "\n";
    if (c.stability) {
      os << p << "amp_mean_v," << exact(c.stability->amp_mean_v) << "\n";
      os << p << "amp_rel_std," << exact(c.stability->amp_rel_std) << "\n";
      os << p << "phase_std_deg," << exact(c.stability->phase_std_deg) << "\n";
    }
  }
}

void write_measurements_csv(const std::filesystem::path& path,
                            const std::vector<ChannelSinkStats>& channels) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << "channel,window_start,amplitude_v,phase_rad\n";
  char line[128];
  for (const auto& c : channels) {
    for (const auto& m : c.measurements) {
      std::snprintf(line, sizeof line, "%u,%lld,%.9f,%.9f\n", static_cast<unsigned>(m.channel_id),
                    static_cast<long long>(m.window_start_sample_index), m.amplitude_v, m.phase_rad);
      os << line;
    }
  }
}

std::string format_bench_summary(const BenchReport& r, double min_throughput_bps) {
  std::string out;
  char line[256];
  auto add = [&](const char* fmt, auto... args) {
    std::snprintf(line, sizeof line, fmt, args...);
    out += line;
  };
  const double secs = static_cast<double>(r.wall_time_ns) * 1e-9;
  add("wall time           %.3f s\n", secs);
  add("raw sample bytes    %llu generated, %llu delivered\n", static_cast<unsigned long long>(r.bytes_in),
      static_cast<unsigned long long>(r.bytes_delivered));
  add("wire bytes          %llu (payload %llu)\n", static_cast<unsigned long long>(r.bytes_out),
      static_cast<unsigned long long>(r.payload_bytes));
  add("throughput          %.4f Gbps (threshold %.4f Gbps): %s\n", r.throughput_bps / 1e9,
      min_throughput_bps / 1e9, r.throughput_bps >= min_throughput_bps ? "PASS" : "FAIL");
  add("compression ratio   %.4f\n", r.compression_ratio);
  add("frames              %llu sent, %llu received\n", static_cast<unsigned long long>(r.frames_sent),
      static_cast<unsigned long long>(r.frames_received));
  add("gaps %llu  crc errors %llu  frame errors %llu  decode errors %llu\n",
      static_cast<unsigned long long>(r.gaps_detected), static_cast<unsigned long long>(r.crc_errors),
      static_cast<unsigned long long>(r.frame_errors), static_cast<unsigned long long>(r.decode_errors));
  add("%-4s %12s %10s %10s %9s %12s %12s %10s\n", "ch", "samples", "src crc", "sink crc", "windows",
      "amp mean V", "amp rel std", "phase std");
  for (const auto& c : r.channels) {
    add("%-4u %12llu   %08x   %08x %9llu %12.6f %12.3e %8.4f deg\n", static_cast<unsigned>(c.channel_id),
        static_cast<unsigned long long>(c.samples_received), c.source_checksum, c.sink_checksum,
        static_cast<unsigned long long>(c.measurements), c.stability ? c.stability->amp_mean_v : 0.0,
        c.stability ? c.stability->amp_rel_std : 0.0, c.stability ? c.stability->phase_std_deg : 0.0);
  }
  add("checksums %s\n", r.checksums_match() ? "match" : "MISMATCH");
  return out;
}

}  // namespace ship
