#pragma once

#include <chrono>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace ship {

enum class PvKind { Float, Int, Enum, String };

using PvValue = std::variant<double, std::int64_t, std::string>;

struct PvLimits {
  double lo;
  double hi;
};

struct PvDefinition {
  std::string name;
  PvKind kind = PvKind::Float;
  PvValue initial = 0.0;
  std::optional<PvLimits> limits;
  std::vector<std::string> choices;  // Enum only
  bool read_only = false;
};

struct PvSnapshot {
  PvValue value;
  std::uint64_t timestamp_ns = 0;
};

enum class PvErrc { UnknownPv, TypeMismatch, OutOfRange, ReadOnly, Duplicate };

const char* to_string(PvErrc code);

class PvError : public std::runtime_error {
 public:
  PvError(PvErrc code, const std::string& what) : std::runtime_error(what), code_(code) {}
  PvErrc code() const { return code_; }

 private:
  PvErrc code_;
};

std::string format_pv_value(const PvValue& value);

/// Named process variables with serialized writes and ordered monitors.
///
/// Subscribers run synchronously on the writing thread while the table's
/// write lock is held, which is what keeps every monitor's view in put order.
/// A subscriber must not call back into the table.
class PvTable {
 public:
  using Subscriber = std::function<void(const std::string& name, const PvSnapshot&)>;
  using MonitorId = std::uint64_t;

  PvTable();

  /// Throws PvError(Duplicate) or std::invalid_argument for an inconsistent definition.
  void declare(PvDefinition def);
  bool contains(const std::string& name) const;
  std::vector<std::string> names() const;
  const PvDefinition& definition(const std::string& name) const;

  PvSnapshot get(const std::string& name) const;

  /// Type- and limit-checked client write. Int values are accepted for
  /// Float PVs. Throws PvError.
  void put(const std::string& name, const PvValue& value);
  /// Parses `text` according to the PV's kind, then put().
  void put_text(const std::string& name, const std::string& text);

  /// Internal write path for telemetry; bypasses read-only, still checks type and limits.
  void set_internal(const std::string& name, const PvValue& value);

  /// Delivers the current value immediately, then every accepted write.
  MonitorId monitor(const std::string& name, Subscriber subscriber);
  void unmonitor(MonitorId id);

  std::uint64_t update_count() const;
  std::uint64_t now_ns() const;

 private:
  struct Entry {
    PvDefinition def;
    PvSnapshot snap;
    std::map<MonitorId, Subscriber> monitors;
  };

  void write_locked(Entry& e, PvValue value);
  PvValue coerce(const Entry& e, const PvValue& value) const;

  mutable std::shared_mutex mu_;
  std::map<std::string, Entry> entries_;
  std::map<MonitorId, std::string> monitor_names_;
  MonitorId next_monitor_ = 1;
  std::uint64_t updates_ = 0;
  std::chrono::steady_clock::time_point origin_;
};

/// Declares the standard digitizer PV set for the given channels:
///   ship.run_state (enum stopped|running), ship.compression_enabled (enum false|true),
///   ship.chN.nco_freq_hz, ship.chN.bias_v, ship.chN.noise_sigma_v,
///   and read-only telemetry: ship.frames_sent, ship.frames_received,
///   ship.gaps_detected, ship.crc_errors, ship.compression_ratio,
///   ship.chN.amplitude_v, ship.chN.phase_rad.
void declare_ship_pvs(PvTable& table, const std::vector<std::uint8_t>& channels,
                      double sample_rate_hz, double full_scale_vpp);

/// One client's view of the line protocol. Replies and monitor events are
/// handed to `send` (without trailing newline) in the order they are produced.
///
///   GET <name>          -> OK <name> <value> <ts>
///   PUT <name> <value>  -> OK | ERR <CODE> <msg>
///   MON <name>          -> OK, then EVT <name> <value> <ts> per update
///   LIST                -> OK <name> <name> ...
///   anything else       -> ERR BADCMD
class PvSession {
 public:
  using Sender = std::function<void(const std::string&)>;

  PvSession(PvTable& table, Sender send);
  ~PvSession();
  PvSession(const PvSession&) = delete;
  PvSession& operator=(const PvSession&) = delete;

  void handle_line(const std::string& line);

 private:
  PvTable& table_;
  Sender send_;
  std::vector<PvTable::MonitorId> monitors_;
};

/// TCP front end: one thread per client plus one writer per client so that
/// a slow reader never stalls table writers.
class PvServer {
 public:
  PvServer(PvTable& table, const std::string& host, std::uint16_t port);
  ~PvServer();
  PvServer(const PvServer&) = delete;
  PvServer& operator=(const PvServer&) = delete;

  std::uint16_t port() const;
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace ship
