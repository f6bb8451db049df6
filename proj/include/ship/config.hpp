#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include "ship/codec.hpp"
#include "ship/dsp_measure.hpp"
#include "ship/signal_model.hpp"

namespace ship {

enum class Role { Digitizer, Processor };

struct ChannelConfig {
  std::uint8_t channel_id = 0;
  ToneSpec tone;
};

/// Everything a pipeline run needs. Defaults are the values a field takes
/// when its key is absent from the file.
struct RunConfig {
  Role role = Role::Digitizer;
  std::vector<ChannelConfig> channels;
  AdcConfig adc;                  // [adc] sample_rate_hz = 10e6, full_scale_vpp = 1.9
  CodecParams codec;              // [codec] block_size = 4096, predictor_order = auto
  bool compression_enabled = true;
  DemodConfig demod;              // [demod] f_if_hz = 250e3, window_n = 1000 (fs from [adc])
  int lanes = 8;
  std::string host = "127.0.0.1";
  std::uint16_t port = 5800;
  std::uint16_t pv_port = 0;      // 0 disables the PV server
  double duration_s = 5.0;
  std::uint64_t seed = 1;
  bool pace = false;              // emit at the ADC sample rate instead of free-running
  double min_throughput_bps = 1e9;
  std::string out_dir;            // empty: no CSV output

  std::vector<std::uint8_t> channel_ids() const;
};

class ConfigError : public std::runtime_error {
 public:
  enum class Kind { Parse, Validation };
  ConfigError(Kind kind, const std::string& what, int line = 0)
      : std::runtime_error(what), kind_(kind), line_(line) {}
  Kind kind() const { return kind_; }
  /// 1-based line number for parse errors, 0 otherwise.
  int line() const { return line_; }

 private:
  Kind kind_;
  int line_;
};

/// INI-style `key = value` lines under `[run]`, `[adc]`, `[codec]`, `[demod]`
/// and repeated `[channel]` sections. `#` and `;` start comments. Unknown
/// sections or keys are parse errors.
RunConfig parse_config(std::istream& in);
RunConfig parse_config_file(const std::filesystem::path& path);
RunConfig parse_config_string(const std::string& text);

/// Throws ConfigError(Validation) naming the failed invariant.
void validate(const RunConfig& cfg);

}  // namespace ship
