#include "wacps/scenario.hpp"

#include <cmath>
#include <map>
#include <set>

#include <json.hpp>

namespace wacps {

using nlohmann::json;

std::string_view to_string(Protocol p) {
  switch (p) {
    case Protocol::kCtrlMac: return "ctrlmac";
    case Protocol::kLoRaWan: return "lorawan";
    case Protocol::kLoRaWanPP: return "lorawanpp";
    case Protocol::kWired: return "wired";
  }
  return "?";
}

std::optional<Protocol> protocol_from_string(std::string_view s) {
  for (auto p : {Protocol::kCtrlMac, Protocol::kLoRaWan, Protocol::kLoRaWanPP, Protocol::kWired}) {
    if (to_string(p) == s) return p;
  }
  return std::nullopt;
}

int ScenarioSpec::node_count() const {
  if (traffic.enabled) return traffic.nodes;
  int n = 0;
  for (const auto& s : subsystems) n += static_cast<int>(s.tanks.size());
  return n;
}

std::vector<SubsystemSpec> default_subsystems(double h, double sigma) {
  std::vector<SubsystemSpec> out;
  for (int n : {3, 3, 4}) {
    SubsystemSpec s;
    s.tanks.assign(static_cast<std::size_t>(n), plant::TankParams{});
    s.h = h;
    s.sigma = sigma;
    out.push_back(s);
  }
  return out;
}

namespace {

std::string idx(const std::string& path, std::size_t i) { return path + "[" + std::to_string(i) + "]"; }
std::string field(const std::string& path, const std::string& key) {
  return path.empty() ? key : path + "." + key;
}

// Object view that remembers which keys were read so leftovers can be
// reported as unknown.
class Obj {
 public:
  Obj(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j.is_object()) throw ScenarioError(path_.empty() ? "$" : path_, "expected an object");
  }

  const json* find(const std::string& key) {
    seen_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  void number(const std::string& key, double& out) {
    if (auto* v = find(key)) {
      if (!v->is_number()) throw ScenarioError(at(key), "expected a number");
      out = v->get<double>();
    }
  }
  void integer(const std::string& key, int& out) {
    if (auto* v = find(key)) {
      if (!v->is_number_integer()) throw ScenarioError(at(key), "expected an integer");
      out = v->get<int>();
    }
  }
  void boolean(const std::string& key, bool& out) {
    if (auto* v = find(key)) {
      if (!v->is_boolean()) throw ScenarioError(at(key), "expected true or false");
      out = v->get<bool>();
    }
  }
  std::optional<std::string> string(const std::string& key) {
    if (auto* v = find(key)) {
      if (!v->is_string()) throw ScenarioError(at(key), "expected a string");
      return v->get<std::string>();
    }
    return std::nullopt;
  }

  [[nodiscard]] std::string at(const std::string& key) const { return field(path_, key); }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!seen_.count(it.key())) throw ScenarioError(at(it.key()), "unknown field");
    }
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

void read_tank(const json& j, const std::string& path, plant::TankParams& t) {
  Obj o(j, path);
  o.number("a", t.a);
  o.number("beta", t.beta);
  o.number("v_eq", t.v_eq);
  o.number("ref_level", t.ref_level);
  o.number("tank_height", t.tank_height);
  o.number("initial_level", t.initial_level);
  o.finish();
}

struct ControlDefaults {
  double h = 4.5;
  double sigma = 0.1;
  double rho = 1e-3;
  double tau_d = 0.0;
};

void read_control(Obj& o, ControlDefaults& c) {
  o.number("h", c.h);
  o.number("sigma", c.sigma);
  o.number("rho", c.rho);
  o.number("tau_d", c.tau_d);
}

SubsystemSpec read_subsystem(const json& j, const std::string& path, const ControlDefaults& defaults) {
  Obj o(j, path);
  SubsystemSpec s;
  ControlDefaults c = defaults;
  read_control(o, c);
  s.h = c.h;
  s.sigma = c.sigma;
  s.rho = c.rho;
  s.tau_d = c.tau_d;
  plant::TankParams common;
  if (auto* t = o.find("tank")) read_tank(*t, o.at("tank"), common);
  if (auto* lq = o.find("lq")) {
    Obj w(*lq, o.at("lq"));
    w.number("q", s.lq.q);
    w.number("r", s.lq.r);
    w.finish();
  }
  const json* tanks = o.find("tanks");
  if (!tanks) throw ScenarioError(o.at("tanks"), "required");
  if (tanks->is_number_integer()) {
    const int n = tanks->get<int>();
    if (n < 1) throw ScenarioError(o.at("tanks"), "must be positive");
    s.tanks.assign(static_cast<std::size_t>(n), common);
  } else if (tanks->is_array()) {
    for (std::size_t i = 0; i < tanks->size(); ++i) {
      plant::TankParams t = common;
      read_tank((*tanks)[i], idx(o.at("tanks"), i), t);
      s.tanks.push_back(t);
    }
  } else {
    throw ScenarioError(o.at("tanks"), "expected a count or an array of tanks");
  }
  o.finish();
  return s;
}

plant::DemandKind demand_kind(const std::string& s, const std::string& path) {
  if (s == "constant") return plant::DemandKind::kConstant;
  if (s == "trimodal") return plant::DemandKind::kTrimodal;
  if (s == "fault") return plant::DemandKind::kFault;
  throw ScenarioError(path, "unknown demand kind '" + s + "'");
}

void read_demand(const json& j, ScenarioSpec& spec) {
  Obj o(j, "demand");
  auto& d = spec.demand;
  if (auto k = o.string("kind")) d.kind = demand_kind(*k, o.at("kind"));
  if (auto b = o.string("base")) {
    d.base = demand_kind(*b, o.at("base"));
    if (d.base == plant::DemandKind::kFault) throw ScenarioError(o.at("base"), "fault cannot be a base curve");
  }
  o.number("level", d.level);
  o.number("leak", d.leak);
  o.number("fault_start", d.fault_start);
  o.number("fault_end", d.fault_end);
  o.number("design", spec.design_demand);
  if (auto* ft = o.find("fault_tanks")) {
    if (!ft->is_array()) throw ScenarioError(o.at("fault_tanks"), "expected an array");
    spec.fault_tanks.clear();
    for (std::size_t i = 0; i < ft->size(); ++i) {
      if (!(*ft)[i].is_number_integer()) throw ScenarioError(idx(o.at("fault_tanks"), i), "expected an integer");
      spec.fault_tanks.push_back((*ft)[i].get<int>());
    }
  }
  if (auto* tm = o.find("trimodal")) {
    Obj t(*tm, o.at("trimodal"));
    auto& p = d.trimodal;
    t.number("night", p.night);
    t.number("morning_peak", p.morning_peak);
    t.number("morning_hour", p.morning_hour);
    t.number("day_peak", p.day_peak);
    t.number("day_hour", p.day_hour);
    t.number("evening_peak", p.evening_peak);
    t.number("evening_hour", p.evening_hour);
    t.number("width_hours", p.width_hours);
    t.number("start_hour", p.start_hour);
    t.number("day_length_s", p.day_length_s);
    t.finish();
  }
  o.finish();
}

Direction direction_of(const std::string& s, const std::string& path) {
  if (s == "uplink") return Direction::kUplink;
  if (s == "downlink") return Direction::kDownlink;
  throw ScenarioError(path, "expected uplink or downlink");
}

ChannelRole role_of(const std::string& s, const std::string& path) {
  if (s == "request") return ChannelRole::kRequest;
  if (s == "data") return ChannelRole::kData;
  if (s == "rrm_ack") return ChannelRole::kRrmAck;
  if (s == "actuation") return ChannelRole::kActuation;
  throw ScenarioError(path, "expected request, data, rrm_ack or actuation");
}

void read_channels(const json& j, ScenarioSpec& spec) {
  Obj o(j, "channels");
  o.integer("spreading_factor", spec.plan.spreading_factor);
  if (auto* list = o.find("list")) {
    if (!list->is_array()) throw ScenarioError(o.at("list"), "expected an array");
    spec.plan.channels.clear();
    for (std::size_t i = 0; i < list->size(); ++i) {
      const std::string p = idx(o.at("list"), i);
      Obj c((*list)[i], p);
      Channel ch;
      c.integer("id", ch.id);
      c.number("bandwidth_hz", ch.bandwidth_hz);
      c.number("duty_cycle", ch.duty_cycle);
      if (auto d = c.string("direction")) ch.direction = direction_of(*d, c.at("direction"));
      if (auto r = c.string("role")) ch.role = role_of(*r, c.at("role"));
      c.finish();
      spec.plan.channels.push_back(ch);
    }
  }
  o.finish();
}

void read_sensors(const json& j, ScenarioSpec& spec) {
  Obj o(j, "sensors");
  o.number("resolution", spec.sensors.resolution);
  if (auto* ph = o.find("phase")) {
    if (ph->is_string()) {
      const auto s = ph->get<std::string>();
      if (s == "zero") spec.sensors.phase = PhaseMode::kZero;
      else if (s == "random") spec.sensors.phase = PhaseMode::kRandom;
      else throw ScenarioError(o.at("phase"), "expected zero, random or an array of offsets");
    } else if (ph->is_array()) {
      spec.sensors.phase = PhaseMode::kExplicit;
      for (std::size_t i = 0; i < ph->size(); ++i) {
        if (!(*ph)[i].is_number()) throw ScenarioError(idx(o.at("phase"), i), "expected a number");
        spec.sensors.offsets.push_back((*ph)[i].get<double>());
      }
    } else {
      throw ScenarioError(o.at("phase"), "expected zero, random or an array of offsets");
    }
  }
  o.finish();
}

void require(bool ok, const std::string& path, const std::string& what) {
  if (!ok) throw ScenarioError(path, what);
}

}  // namespace

void finalize_scenario(ScenarioSpec& spec) {
  require(spec.duration >= 0.0 && std::isfinite(spec.duration), "duration", "must be non-negative");
  require(spec.plant_step > 0.0, "plant_step", "must be positive");
  require(spec.drain >= 0.0, "drain", "must be non-negative");

  try {
    spec.plan.validate(spec.protocol == Protocol::kCtrlMac);
  } catch (const std::invalid_argument& e) {
    throw ScenarioError("channels", e.what());
  }
  if (spec.protocol == Protocol::kLoRaWan || spec.protocol == Protocol::kLoRaWanPP) {
    require(!spec.plan.ids_with_role(ChannelRole::kData).empty(), "channels", "no uplink data channel");
    require(!spec.plan.ids_with_role(ChannelRole::kRrmAck).empty(), "channels", "no downlink channel");
    if (spec.protocol == Protocol::kLoRaWanPP) {
      require(!spec.plan.ids_with_role(ChannelRole::kActuation).empty(), "channels",
              "LoRaWAN++ needs an actuation channel");
    }
  }

  const auto& m = spec.mac;
  require(m.k >= 1 && m.k <= 64, "mac.k", "must be in 1..64");
  require(m.t_slot > 0.0, "mac.t_slot", "must be positive");
  require(m.l >= 1 && m.l <= 256, "mac.l", "must be in 1..256");
  require(m.data_slot_factor >= 1.0, "mac.data_slot_factor", "must be >= 1");
  require(m.data_bytes >= 1 && m.data_bytes <= kMaxPayloadBytes, "mac.data_bytes", "must be in 1..222");
  require(m.request_bytes >= 1 && m.request_bytes <= kMaxPayloadBytes, "mac.request_bytes",
          "must be in 1..222");

  const auto& lw = spec.lorawan;
  require(lw.confirmed.ack_timeout > 0.0, "lorawan.ack_timeout", "must be positive");
  require(lw.confirmed.backoff_lo >= 0.0, "lorawan.backoff_lo", "must be non-negative");
  require(lw.confirmed.backoff_hi >= lw.confirmed.backoff_lo, "lorawan.backoff_hi", "must be >= backoff_lo");
  require(lw.confirmed.max_attempts >= 1, "lorawan.max_attempts", "must be positive");
  require(lw.header_bytes >= 0 && lw.header_bytes + m.data_bytes <= kMaxPayloadBytes &&
              lw.header_bytes + 2 <= kMaxPayloadBytes,
          "lorawan.header_bytes", "leaves no room for the payload");

  require(spec.noise.stddev >= 0.0, "noise.stddev", "must be non-negative");
  require(spec.noise.corr_time > 0.0, "noise.corr_time", "must be positive");
  require(spec.sensors.resolution >= 0.0, "sensors.resolution", "must be non-negative");
  require(spec.capture.snr_spread_db >= 0.0, "capture.snr_spread_db", "must be non-negative");
  if (!spec.capture.node_snr_db.empty()) {
    require(static_cast<int>(spec.capture.node_snr_db.size()) == spec.node_count(), "capture.node_snr_db",
            "needs one value per node");
  }

  if (spec.traffic.enabled) {
    require(spec.traffic.nodes >= 1 && spec.traffic.nodes <= 255, "traffic.nodes", "must be in 1..255");
    require(spec.traffic.interval > 0.0, "traffic.interval", "must be positive");
    spec.models.clear();
    return;
  }

  require(!spec.subsystems.empty(), "subsystems", "at least one subsystem required");
  const auto& d = spec.demand;
  require(d.level >= 0.0 && d.level <= 100.0, "demand.level", "must be in [0,100]");
  require(d.leak >= 0.0, "demand.leak", "must be non-negative");
  require(spec.design_demand > 0.0, "demand.design", "must be positive");
  if (d.kind == plant::DemandKind::kFault) {
    require(d.fault_start >= 0.0, "demand.fault_start", "must be non-negative");
    require(d.fault_end > d.fault_start, "demand.fault_end", "must be after fault_start");
  }
  require(d.trimodal.day_length_s > 0.0, "demand.trimodal.day_length_s", "must be positive");
  require(d.trimodal.width_hours > 0.0, "demand.trimodal.width_hours", "must be positive");

  int total = 0;
  spec.models.clear();
  for (std::size_t i = 0; i < spec.subsystems.size(); ++i) {
    const auto& s = spec.subsystems[i];
    const std::string p = idx("subsystems", i);
    require(!s.tanks.empty(), field(p, "tanks"), "at least one tank required");
    require(s.h > 0.0, field(p, "h"), "must be positive");
    require(s.sigma >= 0.0 && s.sigma < 1.0, field(p, "sigma"), "must be in [0,1)");
    require(s.rho >= 0.0, field(p, "rho"), "must be non-negative");
    require(s.tau_d >= 0.0 && s.tau_d < s.h, field(p, "tau_d"), "must satisfy 0 <= tau_d < h");
    require(s.lq.q > 0.0, field(p, "lq.q"), "must be positive");
    require(s.lq.r > 0.0, field(p, "lq.r"), "must be positive");
    for (std::size_t j = 0; j < s.tanks.size(); ++j) {
      const auto& t = s.tanks[j];
      const std::string tp = idx(field(p, "tanks"), j);
      require(t.a >= 0.0, field(tp, "a"), "must be non-negative");
      require(t.beta > 0.0, field(tp, "beta"), "must be positive");
      require(t.v_eq >= 0.0 && t.v_eq <= 1.0, field(tp, "v_eq"), "must be in [0,1]");
      require(t.ref_level > 0.0, field(tp, "ref_level"), "must be positive");
      require(t.tank_height >= t.ref_level, field(tp, "tank_height"), "must be >= ref_level");
      require(t.initial_level >= 0.0 && t.initial_level <= t.tank_height, field(tp, "initial_level"),
              "must be within the tank");
    }
    try {
      auto model = plant::build_dma_plant(static_cast<int>(s.tanks.size()), s.tanks, s.lq);
      model.h = s.h;
      model.sigma = s.sigma;
      model.rho = s.rho;
      model.tau_d = s.tau_d;
      model.validate();
      spec.models.push_back(std::move(model));
    } catch (const std::invalid_argument& e) {
      throw ScenarioError(p, e.what());
    }
    total += static_cast<int>(s.tanks.size());
  }
  require(total <= 255, "subsystems", "at most 255 tanks (one-byte actuator address)");
  for (std::size_t i = 0; i < spec.fault_tanks.size(); ++i) {
    require(spec.fault_tanks[i] >= 0 && spec.fault_tanks[i] < total, idx("demand.fault_tanks", i),
            "no such tank");
  }
  if (spec.sensors.phase == PhaseMode::kExplicit) {
    require(static_cast<int>(spec.sensors.offsets.size()) == total, "sensors.phase", "needs one offset per sensor");
    std::size_t n = 0;
    for (const auto& s : spec.subsystems) {
      for (std::size_t j = 0; j < s.tanks.size(); ++j, ++n) {
        require(spec.sensors.offsets[n] >= 0.0 && spec.sensors.offsets[n] < s.h, idx("sensors.phase", n),
                "must be in [0, h)");
      }
    }
  }
}

ScenarioSpec parse_scenario(std::string_view json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ScenarioError("$", std::string("malformed JSON: ") + e.what());
  }
  Obj o(doc, "");
  ScenarioSpec spec;

  if (auto p = o.string("protocol")) {
    auto proto = protocol_from_string(*p);
    if (!proto) throw ScenarioError("protocol", "expected ctrlmac, lorawan, lorawanpp or wired");
    spec.protocol = *proto;
  } else {
    throw ScenarioError("protocol", "required");
  }
  if (!o.find("duration")) throw ScenarioError("duration", "required");
  o.number("duration", spec.duration);
  if (auto* s = o.find("seed")) {
    if (!s->is_number_unsigned()) throw ScenarioError("seed", "expected a non-negative integer");
    spec.seed = s->get<std::uint64_t>();
  } else {
    throw ScenarioError("seed", "required");
  }
  o.number("plant_step", spec.plant_step);
  o.number("drain", spec.drain);

  ControlDefaults control;
  if (auto* c = o.find("control")) {
    Obj co(*c, "control");
    read_control(co, control);
    co.finish();
  }
  if (auto* subs = o.find("subsystems")) {
    if (!subs->is_array()) throw ScenarioError("subsystems", "expected an array");
    for (std::size_t i = 0; i < subs->size(); ++i) {
      spec.subsystems.push_back(read_subsystem((*subs)[i], idx("subsystems", i), control));
    }
  } else {
    spec.subsystems = default_subsystems(control.h, control.sigma);
    for (auto& s : spec.subsystems) {
      s.rho = control.rho;
      s.tau_d = control.tau_d;
    }
  }

  if (auto* c = o.find("channels")) read_channels(*c, spec);
  if (auto* d = o.find("demand")) read_demand(*d, spec);
  if (auto* n = o.find("noise")) {
    Obj no(*n, "noise");
    no.number("stddev", spec.noise.stddev);
    no.number("corr_time", spec.noise.corr_time);
    no.finish();
  }
  if (auto* s = o.find("sensors")) read_sensors(*s, spec);
  if (auto* m = o.find("mac")) {
    Obj mo(*m, "mac");
    mo.integer("k", spec.mac.k);
    mo.number("t_slot", spec.mac.t_slot);
    mo.integer("l", spec.mac.l);
    mo.number("data_slot_factor", spec.mac.data_slot_factor);
    mo.integer("data_bytes", spec.mac.data_bytes);
    mo.integer("request_bytes", spec.mac.request_bytes);
    mo.finish();
  }
  if (auto* l = o.find("lorawan")) {
    Obj lo(*l, "lorawan");
    lo.number("ack_timeout", spec.lorawan.confirmed.ack_timeout);
    lo.number("backoff_lo", spec.lorawan.confirmed.backoff_lo);
    lo.number("backoff_hi", spec.lorawan.confirmed.backoff_hi);
    lo.integer("max_attempts", spec.lorawan.confirmed.max_attempts);
    lo.integer("header_bytes", spec.lorawan.header_bytes);
    lo.boolean("shared_downlink", spec.lorawan.shared_downlink);
    lo.finish();
  }
  if (auto* c = o.find("capture")) {
    Obj co(*c, "capture");
    co.boolean("enabled", spec.capture.enabled);
    co.number("snr_threshold_db", spec.capture.snr_threshold_db);
    co.number("base_snr_db", spec.capture.base_snr_db);
    co.number("snr_spread_db", spec.capture.snr_spread_db);
    if (auto* v = co.find("node_snr_db")) {
      if (!v->is_array()) throw ScenarioError(co.at("node_snr_db"), "expected an array");
      for (std::size_t i = 0; i < v->size(); ++i) {
        if (!(*v)[i].is_number()) throw ScenarioError(idx(co.at("node_snr_db"), i), "expected a number");
        spec.capture.node_snr_db.push_back((*v)[i].get<double>());
      }
    }
    co.finish();
  }
  if (auto* t = o.find("traffic")) {
    Obj to(*t, "traffic");
    spec.traffic.enabled = true;
    to.integer("nodes", spec.traffic.nodes);
    to.number("interval", spec.traffic.interval);
    if (auto p = to.string("pattern")) {
      if (*p == "periodic") spec.traffic.pattern = TrafficPattern::kPeriodic;
      else if (*p == "exponential") spec.traffic.pattern = TrafficPattern::kExponential;
      else throw ScenarioError(to.at("pattern"), "expected periodic or exponential");
    }
    to.finish();
  }
  o.finish();
  finalize_scenario(spec);
  return spec;
}

}  // namespace wacps
