#include "ship/config.hpp"

#include <charconv>
#include <fstream>
#include <set>
#include <sstream>

namespace ship {

std::vector<std::uint8_t> RunConfig::channel_ids() const {
  std::vector<std::uint8_t> ids;
  ids.reserve(channels.size());
  for (const auto& c : channels) ids.push_back(c.channel_id);
  return ids;
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

struct LineContext {
  int line;
  const std::string& key;

  [[noreturn]] void fail(const std::string& why) const {
    throw ConfigError(ConfigError::Kind::Parse,
                      "line " + std::to_string(line) + ": " + key + ": " + why, line);
  }
};

double as_double(const LineContext& ctx, const std::string& v) {
  double out = 0.0;
  const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (v.empty() || res.ec != std::errc() || res.ptr != v.data() + v.size()) ctx.fail("expected a number");
  return out;
}

std::int64_t as_int(const LineContext& ctx, const std::string& v) {
  // Accept integral values written in exponent form, e.g. 1e6.
  const double d = as_double(ctx, v);
  if (d != static_cast<double>(static_cast<std::int64_t>(d))) ctx.fail("expected an integer");
  return static_cast<std::int64_t>(d);
}

bool as_bool(const LineContext& ctx, const std::string& v) {
  if (v == "true" || v == "yes" || v == "1" || v == "on") return true;
  if (v == "false" || v == "no" || v == "0" || v == "off") return false;
  ctx.fail("expected true or false");
}

std::int64_t in_range(const LineContext& ctx, std::int64_t v, std::int64_t lo, std::int64_t hi) {
  if (v < lo || v > hi) ctx.fail("must be in [" + std::to_string(lo) + ", " + std::to_string(hi) + "]");
  return v;
}

}  // namespace

RunConfig parse_config(std::istream& in) {
  RunConfig cfg;
  std::string section;
  std::string raw;
  int line_no = 0;
  bool demod_fs_set = false;
  std::vector<bool> channel_has_id;

  while (std::getline(in, raw)) {
    ++line_no;
    const auto comment = raw.find_first_of("#;");
    const std::string line = trim(comment == std::string::npos ? raw : raw.substr(0, comment));
    if (line.empty()) continue;

    if (line.front() == '[') {
      if (line.back() != ']')
        throw ConfigError(ConfigError::Kind::Parse, "line " + std::to_string(line_no) + ": unterminated section header", line_no);
      section = trim(line.substr(1, line.size() - 2));
      if (section == "channel") {
        cfg.channels.emplace_back();
        channel_has_id.push_back(false);
      } else if (section != "run" && section != "adc" && section != "codec" && section != "demod") {
        throw ConfigError(ConfigError::Kind::Parse,
                          "line " + std::to_string(line_no) + ": unknown section [" + section + "]", line_no);
      }
      continue;
    }

    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(ConfigError::Kind::Parse, "line " + std::to_string(line_no) + ": expected key = value", line_no);
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    const LineContext ctx{line_no, key};
    if (section.empty()) ctx.fail("key outside of any section");

    if (section == "run") {
      if (key == "role") {
        if (value == "digitizer") cfg.role = Role::Digitizer;
        else if (value == "processor") cfg.role = Role::Processor;
        else ctx.fail("expected digitizer or processor");
      } else if (key == "lanes") {
        cfg.lanes = static_cast<int>(in_range(ctx, as_int(ctx, value), 1, 256));
      } else if (key == "host") {
        cfg.host = value;
      } else if (key == "port") {
        cfg.port = static_cast<std::uint16_t>(in_range(ctx, as_int(ctx, value), 0, 65535));
      } else if (key == "pv_port") {
        cfg.pv_port = static_cast<std::uint16_t>(in_range(ctx, as_int(ctx, value), 0, 65535));
      } else if (key == "duration_s") {
        cfg.duration_s = as_double(ctx, value);
      } else if (key == "seed") {
        cfg.seed = static_cast<std::uint64_t>(in_range(ctx, as_int(ctx, value), 0, INT64_MAX));
      } else if (key == "pace") {
        cfg.pace = as_bool(ctx, value);
      } else if (key == "min_throughput_bps") {
        cfg.min_throughput_bps = as_double(ctx, value);
      } else if (key == "out") {
        cfg.out_dir = value;
      } else {
        ctx.fail("unknown key in [run]");
      }
    } else if (section == "adc") {
      if (key == "sample_rate_hz") cfg.adc.sample_rate_hz = as_double(ctx, value);
      else if (key == "full_scale_vpp") cfg.adc.full_scale_vpp = as_double(ctx, value);
      else if (key == "bits") cfg.adc.bits = static_cast<int>(as_int(ctx, value));
      else ctx.fail("unknown key in [adc]");
    } else if (section == "codec") {
      if (key == "block_size") {
        cfg.codec.block_size = static_cast<std::size_t>(in_range(ctx, as_int(ctx, value), 0, INT64_MAX));
      } else if (key == "predictor_order") {
        if (value == "auto") cfg.codec.predictor_order.reset();
        else cfg.codec.predictor_order = static_cast<int>(as_int(ctx, value));
      } else if (key == "k_max") {
        cfg.codec.k_max = static_cast<int>(as_int(ctx, value));
      } else if (key == "enabled") {
        cfg.compression_enabled = as_bool(ctx, value);
      } else {
        ctx.fail("unknown key in [codec]");
      }
    } else if (section == "demod") {
      if (key == "f_if_hz") {
        cfg.demod.f_if_hz = as_double(ctx, value);
      } else if (key == "window_n") {
        cfg.demod.window_n = static_cast<std::size_t>(in_range(ctx, as_int(ctx, value), 0, INT64_MAX));
      } else if (key == "fs_hz") {
        cfg.demod.fs_hz = as_double(ctx, value);
        demod_fs_set = true;
      } else {
        ctx.fail("unknown key in [demod]");
      }
    } else if (section == "channel") {
      ChannelConfig& ch = cfg.channels.back();
      if (key == "id") {
        ch.channel_id = static_cast<std::uint8_t>(in_range(ctx, as_int(ctx, value), 0, 255));
        channel_has_id.back() = true;
      } else if (key == "freq_hz") {
        ch.tone.freq_hz = as_double(ctx, value);
      } else if (key == "amplitude_v") {
        ch.tone.amplitude_v = as_double(ctx, value);
      } else if (key == "phase_rad") {
        ch.tone.phase_rad = as_double(ctx, value);
      } else if (key == "noise_sigma_v") {
        ch.tone.noise_sigma_v = as_double(ctx, value);
      } else if (key == "dc_offset_v") {
        ch.tone.dc_offset_v = as_double(ctx, value);
      } else {
        ctx.fail("unknown key in [channel]");
      }
    }
  }

  if (!demod_fs_set) cfg.demod.fs_hz = cfg.adc.sample_rate_hz;
  for (std::size_t i = 0; i < cfg.channels.size(); ++i) {
    if (!channel_has_id[i])
      throw ConfigError(ConfigError::Kind::Validation, "channel section " + std::to_string(i + 1) + " has no id");
  }
  validate(cfg);
  return cfg;
}

RunConfig parse_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(ConfigError::Kind::Parse, "cannot open config file " + path.string());
  return parse_config(in);
}

RunConfig parse_config_string(const std::string& text) {
  std::istringstream in(text);
  return parse_config(in);
}

void validate(const RunConfig& cfg) {
  auto fail = [](const std::string& why) { throw ConfigError(ConfigError::Kind::Validation, why); };
  try {
    cfg.adc.validate();
    cfg.codec.validate();
  } catch (const std::invalid_argument& e) {
    fail(e.what());
  }
  if (cfg.channels.empty()) fail("at least one [channel] is required");
  std::set<std::uint8_t> seen;
  for (const auto& ch : cfg.channels) {
    if (!seen.insert(ch.channel_id).second)
      fail("channel ids must be unique (duplicate " + std::to_string(ch.channel_id) + ")");
    try {
      ch.tone.validate(cfg.adc);
    } catch (const std::invalid_argument& e) {
      fail("channel " + std::to_string(ch.channel_id) + ": " + e.what());
    }
  }
  if (cfg.demod.fs_hz != cfg.adc.sample_rate_hz) fail("demod fs_hz must equal adc sample_rate_hz");
  try {
    cycles_per_window(cfg.demod);
  } catch (const DemodError& e) {
    fail(std::string("demod integer-period window: ") + e.what());
  }
  // Worst case RAW block must fit one frame payload.
  if (cfg.codec.block_size * 2 + kCodecHeaderBytes >= (std::size_t{1} << 24))
    fail("codec block_size too large for one frame payload");
  if (cfg.lanes < 1) fail("lanes must be >= 1");
  if (!(cfg.duration_s > 0.0)) fail("duration_s must be > 0");
  if (!(cfg.min_throughput_bps >= 0.0)) fail("min_throughput_bps must be >= 0");
}

}  // namespace ship
