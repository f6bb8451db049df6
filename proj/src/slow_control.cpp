#include "ship/slow_control.hpp"

#include <charconv>
#include <cmath>
#include <sstream>

namespace ship {

const char* to_string(PvErrc code) {
  switch (code) {
    case PvErrc::UnknownPv: return "UNKNOWNPV";
    case PvErrc::TypeMismatch: return "TYPEMISMATCH";
    case PvErrc::OutOfRange: return "OUTOFRANGE";
    case PvErrc::ReadOnly: return "READONLY";
    case PvErrc::Duplicate: return "DUPLICATE";
  }
  return "ERROR";
}

std::string format_pv_value(const PvValue& value) {
  if (const auto* d = std::get_if<double>(&value)) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, *d);
    return std::string(buf, res.ptr);
  }
  if (const auto* i = std::get_if<std::int64_t>(&value)) return std::to_string(*i);
  return std::get<std::string>(value);
}

PvTable::PvTable() : origin_(std::chrono::steady_clock::now()) {}

std::uint64_t PvTable::now_ns() const {
  return static_cast<std::uint64_t>(
      std::chrono::duration_cast<std::chrono::nanoseconds>(std::chrono::steady_clock::now() - origin_)
          .count());
}

void PvTable::declare(PvDefinition def) {
  if (def.kind == PvKind::Enum && def.choices.empty())
    throw std::invalid_argument("pv: enum " + def.name + " declares no choices");
  if (def.limits && def.limits->lo > def.limits->hi)
    throw std::invalid_argument("pv: " + def.name + " has lo > hi");

  std::unique_lock lock(mu_);
  if (entries_.contains(def.name)) throw PvError(PvErrc::Duplicate, "pv: duplicate " + def.name);
  Entry e;
  e.def = std::move(def);
  e.snap.value = coerce(e, e.def.initial);
  e.snap.timestamp_ns = now_ns();
  const std::string name = e.def.name;
  entries_.emplace(name, std::move(e));
}

bool PvTable::contains(const std::string& name) const {
  std::shared_lock lock(mu_);
  return entries_.contains(name);
}

std::vector<std::string> PvTable::names() const {
  std::shared_lock lock(mu_);
  std::vector<std::string> out;
  out.reserve(entries_.size());
  for (const auto& [name, e] : entries_) out.push_back(name);
  return out;
}

const PvDefinition& PvTable::definition(const std::string& name) const {
  std::shared_lock lock(mu_);
  const auto it = entries_.find(name);
  if (it == entries_.end()) throw PvError(PvErrc::UnknownPv, "pv: unknown " + name);
  return it->second.def;
}

PvSnapshot PvTable::get(const std::string& name) const {
  std::shared_lock lock(mu_);
  const auto it = entries_.find(name);
  if (it == entries_.end()) throw PvError(PvErrc::UnknownPv, "pv: unknown " + name);
  return it->second.snap;
}

PvValue PvTable::coerce(const Entry& e, const PvValue& value) const {
  const PvDefinition& def = e.def;
  auto check_limits = [&](double v) {
    if (!std::isfinite(v)) throw PvError(PvErrc::OutOfRange, def.name + " value is not finite");
    if (def.limits && (v < def.limits->lo || v > def.limits->hi)) {
      std::ostringstream os;
      os << def.name << " limits [" << def.limits->lo << ", " << def.limits->hi << "]";
      throw PvError(PvErrc::OutOfRange, os.str());
    }
  };
  switch (def.kind) {
    case PvKind::Float: {
      double v;
      if (const auto* d = std::get_if<double>(&value)) {
        v = *d;
      } else if (const auto* i = std::get_if<std::int64_t>(&value)) {
        v = static_cast<double>(*i);
      } else {
        throw PvError(PvErrc::TypeMismatch, def.name + " expects a float");
      }
      check_limits(v);
      return v;
    }
    case PvKind::Int: {
      const auto* i = std::get_if<std::int64_t>(&value);
      if (!i) throw PvError(PvErrc::TypeMismatch, def.name + " expects an integer");
      check_limits(static_cast<double>(*i));
      return *i;
    }
    case PvKind::Enum: {
      const auto* s = std::get_if<std::string>(&value);
      if (!s) throw PvError(PvErrc::TypeMismatch, def.name + " expects one of its choices");
      for (const auto& c : def.choices) {
        if (c == *s) return *s;
      }
      throw PvError(PvErrc::OutOfRange, def.name + " has no choice '" + *s + "'");
    }
    case PvKind::String: {
      const auto* s = std::get_if<std::string>(&value);
      if (!s) throw PvError(PvErrc::TypeMismatch, def.name + " expects a string");
      return *s;
    }
  }
  throw PvError(PvErrc::TypeMismatch, def.name);
}

void PvTable::write_locked(Entry& e, PvValue value) {
  e.snap.value = std::move(value);
  e.snap.timestamp_ns = now_ns();
  ++updates_;
  for (auto& [id, sub] : e.monitors) sub(e.def.name, e.snap);
}

void PvTable::put(const std::string& name, const PvValue& value) {
  std::unique_lock lock(mu_);
  const auto it = entries_.find(name);
  if (it == entries_.end()) throw PvError(PvErrc::UnknownPv, "pv: unknown " + name);
  if (it->second.def.read_only) throw PvError(PvErrc::ReadOnly, name + " is read-only");
  write_locked(it->second, coerce(it->second, value));
}

void PvTable::set_internal(const std::string& name, const PvValue& value) {
  std::unique_lock lock(mu_);
  const auto it = entries_.find(name);
  if (it == entries_.end()) throw PvError(PvErrc::UnknownPv, "pv: unknown " + name);
  write_locked(it->second, coerce(it->second, value));
}

void PvTable::put_text(const std::string& name, const std::string& text) {
  PvKind kind;
  {
    std::shared_lock lock(mu_);
    const auto it = entries_.find(name);
    if (it == entries_.end()) throw PvError(PvErrc::UnknownPv, "pv: unknown " + name);
    kind = it->second.def.kind;
  }
  const char* first = text.data();
  const char* last = text.data() + text.size();
  switch (kind) {
    case PvKind::Float: {
      double v = 0.0;
      const auto res = std::from_chars(first, last, v);
      if (text.empty() || res.ec != std::errc() || res.ptr != last)
        throw PvError(PvErrc::TypeMismatch, name + " expects a float, got '" + text + "'");
      put(name, v);
      return;
    }
    case PvKind::Int: {
      std::int64_t v = 0;
      const auto res = std::from_chars(first, last, v);
      if (text.empty() || res.ec != std::errc() || res.ptr != last)
        throw PvError(PvErrc::TypeMismatch, name + " expects an integer, got '" + text + "'");
      put(name, v);
      return;
    }
    case PvKind::Enum:
    case PvKind::String:
      put(name, text);
      return;
  }
}

PvTable::MonitorId PvTable::monitor(const std::string& name, Subscriber subscriber) {
  std::unique_lock lock(mu_);
  const auto it = entries_.find(name);
  if (it == entries_.end()) throw PvError(PvErrc::UnknownPv, "pv: unknown " + name);
  const MonitorId id = next_monitor_++;
  subscriber(name, it->second.snap);
  it->second.monitors.emplace(id, std::move(subscriber));
  monitor_names_.emplace(id, name);
  return id;
}

void PvTable::unmonitor(MonitorId id) {
  std::unique_lock lock(mu_);
  const auto it = monitor_names_.find(id);
  if (it == monitor_names_.end()) return;
  entries_.at(it->second).monitors.erase(id);
  monitor_names_.erase(it);
}

std::uint64_t PvTable::update_count() const {
  std::shared_lock lock(mu_);
  return updates_;
}

void declare_ship_pvs(PvTable& table, const std::vector<std::uint8_t>& channels,
                      double sample_rate_hz, double full_scale_vpp) {
  const double half_scale = full_scale_vpp / 2.0;
  table.declare({"ship.run_state", PvKind::Enum, std::string("stopped"), std::nullopt,
                 {"stopped", "running"}, false});
  table.declare({"ship.compression_enabled", PvKind::Enum, std::string("true"), std::nullopt,
                 {"false", "true"}, false});

  auto telemetry_int = [&](const std::string& name) {
    table.declare({name, PvKind::Int, std::int64_t{0}, PvLimits{0.0, 9.2e18}, {}, true});
  };
  telemetry_int("ship.frames_sent");
  telemetry_int("ship.frames_received");
  telemetry_int("ship.gaps_detected");
  telemetry_int("ship.crc_errors");
  table.declare({"ship.compression_ratio", PvKind::Float, 0.0, PvLimits{0.0, 1e9}, {}, true});

  for (const std::uint8_t ch : channels) {
    const std::string p = "ship.ch" + std::to_string(ch) + ".";
    table.declare({p + "nco_freq_hz", PvKind::Float, 0.0, PvLimits{0.0, sample_rate_hz / 2.0}, {}, false});
    table.declare({p + "bias_v", PvKind::Float, 0.0, PvLimits{-half_scale, half_scale}, {}, false});
    table.declare({p + "noise_sigma_v", PvKind::Float, 0.0, PvLimits{0.0, half_scale}, {}, false});
    table.declare({p + "amplitude_v", PvKind::Float, 0.0, std::nullopt, {}, true});
    table.declare({p + "phase_rad", PvKind::Float, 0.0, std::nullopt, {}, true});
  }
}

PvSession::PvSession(PvTable& table, Sender send) : table_(table), send_(std::move(send)) {}

PvSession::~PvSession() {
  for (const auto id : monitors_) table_.unmonitor(id);
}

namespace {

std::string next_token(const std::string& line, std::size_t& pos) {
  while (pos < line.size() && (line[pos] == ' ' || line[pos] == '\t')) ++pos;
  const std::size_t start = pos;
  while (pos < line.size() && line[pos] != ' ' && line[pos] != '\t') ++pos;
  return line.substr(start, pos - start);
}

std::string rest_of_line(const std::string& line, std::size_t pos) {
  while (pos < line.size() && (line[pos] == ' ' || line[pos] == '\t')) ++pos;
  std::size_t end = line.size();
  while (end > pos && (line[end - 1] == ' ' || line[end - 1] == '\t')) --end;
  return line.substr(pos, end - pos);
}

std::string err_line(const PvError& e) { return std::string("ERR ") + to_string(e.code()) + " " + e.what(); }

}  // namespace

void PvSession::handle_line(const std::string& line) {
  std::size_t pos = 0;
  const std::string verb = next_token(line, pos);
  try {
    if (verb == "GET") {
      const std::string name = next_token(line, pos);
      if (name.empty() || !rest_of_line(line, pos).empty()) {
        send_("ERR BADARGS usage: GET <name>");
        return;
      }
      const PvSnapshot s = table_.get(name);
      send_("OK " + name + " " + format_pv_value(s.value) + " " + std::to_string(s.timestamp_ns));
    } else if (verb == "PUT") {
      const std::string name = next_token(line, pos);
      const std::string value = rest_of_line(line, pos);
      if (name.empty() || value.empty()) {
        send_("ERR BADARGS usage: PUT <name> <value>");
        return;
      }
      table_.put_text(name, value);
      send_("OK");
    } else if (verb == "MON") {
      const std::string name = next_token(line, pos);
      if (name.empty() || !rest_of_line(line, pos).empty()) {
        send_("ERR BADARGS usage: MON <name>");
        return;
      }
      if (!table_.contains(name)) throw PvError(PvErrc::UnknownPv, "pv: unknown " + name);
      // The acknowledgement goes out before the subscription can deliver anything.
      send_("OK");
      monitors_.push_back(table_.monitor(name, [send = send_](const std::string& n, const PvSnapshot& s) {
        send("EVT " + n + " " + format_pv_value(s.value) + " " + std::to_string(s.timestamp_ns));
      }));
    } else if (verb == "LIST") {
      std::string reply = "OK";
      for (const auto& n : table_.names()) reply += " " + n;
      send_(reply);
    } else {
      send_("ERR BADCMD");
    }
  } catch (const PvError& e) {
    send_(err_line(e));
  }
}

}  // namespace ship
