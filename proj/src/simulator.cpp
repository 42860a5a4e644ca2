#include "wacps/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <map>

#include "wacps/ctrlmac.hpp"
#include "wacps/lorawan.hpp"
#include "wacps/plant.hpp"

namespace wacps {

namespace {

using ctrlmac::Sample;
using Eigen::VectorXd;

enum class FrameKind : std::uint8_t { kData, kUplink, kAck, kActuation };

struct Frame {
  Transmission tx;
  FrameKind kind = FrameKind::kData;
  int node = -1;
  Sample sample;
  std::int64_t token = 0;
  std::vector<std::pair<int, std::uint8_t>> entries;  // actuator, value
  std::vector<std::int64_t> carried;                  // events this actuation serves
};

struct Node {
  int id = 0;
  int dma = -1;
  int local = -1;
  double h = 0.0;
  double sigma = 0.0;
  Seconds phase = 0.0;
  double sent_value = 0.0;  // sensor-side copy of the last transmitted value
  double snr_db = 0.0;
  Seconds newest_forwarded = -std::numeric_limits<double>::infinity();

  ctrlmac::NodeMacState mac;
  int data_channel = 0;
  Seconds data_start = 0.0;

  lorawan::AlohaNodeState lw;
  lorawan::AttemptPlan attempt;
  std::int64_t ack_token = 0;

  RngStream mac_rng;
  RngStream lw_rng;
  RngStream traffic_rng;

  Node(std::uint64_t seed, int i)
      : id(i),
        mac_rng(seed, stream_key("mac", static_cast<std::uint64_t>(i))),
        lw_rng(seed, stream_key("lorawan", static_cast<std::uint64_t>(i))),
        traffic_rng(seed, stream_key("traffic", static_cast<std::uint64_t>(i))) {}
};

struct Dma {
  plant::SubsystemModel model;
  plant::PlantState st;
  VectorXd w;
  plant::Zoh zoh;
  std::vector<plant::DemandNoise> noise;
  std::vector<plant::DemandProfile> profile;
  int first_tank = 0;
};

struct OutEntry {
  std::uint8_t value = 0;
  std::map<int, std::int64_t> events;  // source node -> event
};

class Simulator {
 public:
  Simulator(const ScenarioSpec& spec, const SimOptions& opts)
      : spec_(spec),
        opts_(opts),
        plan_(spec.plan),
        proto_(spec.protocol),
        network_only_(spec.traffic.enabled),
        end_time_(spec.duration + spec.drain),
        act_sched_(plan_, actuation_channel()),
        ack_sched_(plan_, plan_.ids_with_role(ChannelRole::kRrmAck).front()) {
    header_ = proto_ == Protocol::kCtrlMac ? 0 : spec.lorawan.header_bytes;
    ack_ch_ = plan_.ids_with_role(ChannelRole::kRrmAck).front();
    capture_.enabled = spec.capture.enabled;
    capture_.snr_threshold_db = spec.capture.snr_threshold_db;
    data_ids_ = plan_.ids_with_role(ChannelRole::kData);
    if (proto_ == Protocol::kCtrlMac) {
      req_ch_ = plan_.ids_with_role(ChannelRole::kRequest).front();
      rrm_ch_ = plan_.ids_with_role(ChannelRole::kRrmAck).front();
      sched_.layout = {spec.mac.k, spec.mac.l, static_cast<int>(data_ids_.size())};
      rrm_toa_ = time_on_air(sched_.layout.total_bytes(), plan_, rrm_ch_);
      req_toa_ = time_on_air(spec.mac.request_bytes, plan_, req_ch_);
      data_slot_ = spec.mac.data_slot_factor * time_on_air(spec.mac.data_bytes, plan_, data_ids_.front());
      round_s_ = spec.mac.k * spec.mac.t_slot;
    }
    build_entities();
  }

  RunResult run() {
    while (!q_.empty() && q_.peek().fire_time <= end_time_) {
      const SimEvent ev = q_.pop();
      handle(ev);
    }
    advance_plants(spec_.duration);
    finish_trace(spec_.duration);

    RunResult out;
    out.log.protocol = std::string(to_string(proto_));
    out.log.duration = spec_.duration;
    out.log.nodes = static_cast<int>(nodes_.size());
    out.log.events = std::move(events_);
    out.log.tanks = std::move(tanks_);
    out.log.phases = phases_;
    out.log.acks_skipped = acks_skipped_;
    out.report = metrics::compute_metrics(out.log);
    if (opts_.keep_frames) {
      for (const auto& f : frames_) out.frames.push_back(f.tx);
      std::sort(out.frames.begin(), out.frames.end(),
                [](const Transmission& a, const Transmission& b) { return a.start < b.start; });
    }
    out.trace = std::move(trace_);
    out.rrm_rounds = sched_.rounds;
    out.collisions = collisions_;
    return out;
  }

 private:
  const ScenarioSpec& spec_;
  SimOptions opts_;
  ChannelPlan plan_;
  Protocol proto_;
  bool network_only_;
  Seconds end_time_;

  EventQueue q_;
  DutyCycleState dc_;
  CaptureConfig capture_;
  int header_ = 0;
  std::vector<int> data_ids_;

  std::vector<Node> nodes_;
  std::vector<Dma> dmas_;
  std::vector<metrics::EventRecord> events_;
  std::vector<metrics::TankRecord> tanks_;
  std::vector<metrics::PhaseWindow> phases_;
  std::vector<TracePoint> trace_;
  Seconds next_trace_ = 0.0;

  // Plant clock.
  Seconds plant_t_ = 0.0;
  std::int64_t cell_ = -1;

  // Radio.
  std::vector<Frame> frames_;
  std::map<int, std::vector<std::size_t>> on_air_;
  std::uint64_t collisions_ = 0;
  std::uint64_t acks_skipped_ = 0;

  // Ctrl-MAC gateway.
  ctrlmac::GatewaySchedule sched_;
  std::vector<ctrlmac::SlotRequest> requests_;
  std::map<int, std::vector<std::pair<Seconds, Seconds>>> booked_;
  int req_ch_ = 0;
  int rrm_ch_ = 0;
  Seconds rrm_toa_ = 0.0;
  Seconds req_toa_ = 0.0;
  Seconds data_slot_ = 0.0;
  Seconds round_s_ = 0.5;
  std::int64_t round_ = 0;

  // Actuation downlink.
  ctrlmac::DownlinkScheduler act_sched_;
  std::map<int, OutEntry> outbox_;
  // LoRaWAN acks go out on the ack channel. With a shared downlink they draw
  // on the actuation channel's duty-cycle budget and actuation goes first.
  ctrlmac::DownlinkScheduler ack_sched_;
  struct AckRequest {
    int node;
    std::int64_t token;
    Sample sample;
  };
  std::deque<AckRequest> ack_queue_;
  int ack_ch_ = 0;
  bool release_pending_ = false;
  bool ack_release_pending_ = false;

  int actuation_channel() const {
    const auto ids = plan_.ids_with_role(ChannelRole::kActuation);
    return ids.empty() ? plan_.ids_with_role(ChannelRole::kRrmAck).front() : ids.front();
  }

  bool confirmed() const { return proto_ == Protocol::kLoRaWanPP; }
  int uplink_bytes() const { return spec_.mac.data_bytes + header_; }

  void schedule(Seconds t, EventKind kind, int target, std::int64_t payload = 0) {
    q_.schedule({t, 0, kind, target, payload});
  }

  // ---- setup ---------------------------------------------------------------

  void build_entities() {
    const std::uint64_t seed = spec_.seed;
    if (spec_.demand.kind == plant::DemandKind::kFault && !network_only_) {
      const auto& d = spec_.demand;
      phases_ = {{"P1", 0.0, std::min(d.fault_start, spec_.duration)},
                 {"P2", std::min(d.fault_start, spec_.duration), std::min(d.fault_end, spec_.duration)},
                 {"P3", std::min(d.fault_end, spec_.duration), spec_.duration}};
    } else {
      phases_ = {{"all", 0.0, spec_.duration}};
    }

    if (network_only_) {
      for (int i = 0; i < spec_.traffic.nodes; ++i) nodes_.emplace_back(seed, i);
    } else {
      int g = 0;
      for (std::size_t s = 0; s < spec_.models.size(); ++s) {
        Dma d;
        d.model = spec_.models[s];
        const int n = d.model.n();
        d.first_tank = g;
        d.st.xi = d.model.initial_levels - d.model.ref_levels;
        d.st.xi_hat = VectorXd::Zero(n);
        d.st.v = d.model.v_bias;
        d.w = VectorXd::Zero(n);
        d.zoh = plant::discretize(d.model.A, spec_.plant_step);
        for (int j = 0; j < n; ++j, ++g) {
          d.noise.emplace_back(spec_.noise.stddev, spec_.noise.corr_time,
                               RngStream(seed, stream_key("demand-noise", static_cast<std::uint64_t>(g))));
          auto prof = spec_.demand;
          if (prof.kind == plant::DemandKind::kFault &&
              std::find(spec_.fault_tanks.begin(), spec_.fault_tanks.end(), g) == spec_.fault_tanks.end()) {
            prof.kind = prof.base;
          }
          d.profile.push_back(prof);

          Node node(seed, g);
          node.dma = static_cast<int>(s);
          node.local = j;
          node.h = d.model.h;
          node.sigma = d.model.sigma;
          nodes_.push_back(std::move(node));

          metrics::TankRecord tr;
          tr.subsystem = static_cast<int>(s);
          tr.tank = j;
          tr.ref = d.model.ref_levels[j];
          tr.phase_peak.assign(phases_.size(), -std::numeric_limits<double>::infinity());
          tanks_.push_back(tr);
        }
        dmas_.push_back(std::move(d));
      }
      record_peaks();
    }

    for (auto& node : nodes_) {
      RngStream ph(seed, stream_key("phase", static_cast<std::uint64_t>(node.id)));
      if (!spec_.capture.node_snr_db.empty()) {
        node.snr_db = spec_.capture.node_snr_db[static_cast<std::size_t>(node.id)];
      } else {
        RngStream snr(seed, stream_key("snr", static_cast<std::uint64_t>(node.id)));
        const double half = spec_.capture.snr_spread_db / 2.0;
        node.snr_db = spec_.capture.base_snr_db + (half > 0.0 ? snr.uniform_real(-half, half) : 0.0);
      }
      if (network_only_) {
        const Seconds first = spec_.traffic.pattern == TrafficPattern::kPeriodic
                                  ? node.traffic_rng.uniform_real(0.0, spec_.traffic.interval)
                                  : node.traffic_rng.exponential(spec_.traffic.interval);
        if (first < spec_.duration) schedule(first, EventKind::kTrafficArrival, node.id);
        continue;
      }
      switch (spec_.sensors.phase) {
        case PhaseMode::kZero: node.phase = 0.0; break;
        case PhaseMode::kRandom: node.phase = ph.uniform_real(0.0, node.h); break;
        case PhaseMode::kExplicit: node.phase = spec_.sensors.offsets[static_cast<std::size_t>(node.id)]; break;
      }
      if (node.phase < spec_.duration) schedule(node.phase, EventKind::kPlantSample, node.id, 0);
    }

    if (proto_ == Protocol::kCtrlMac) schedule(0.0, EventKind::kRrmBroadcast, 0, 0);
    if (opts_.trace_interval > 0.0 && !network_only_) next_trace_ = 0.0;
  }

  // ---- plant ---------------------------------------------------------------

  int phase_index(Seconds t) const {
    for (std::size_t p = 0; p < phases_.size(); ++p) {
      if (t >= phases_[p].start && t < phases_[p].end) return static_cast<int>(p);
    }
    return t >= spec_.duration ? static_cast<int>(phases_.size()) - 1 : -1;
  }

  void record_peaks() {
    const int p = phase_index(plant_t_);
    if (p < 0) return;
    for (const auto& d : dmas_) {
      for (int j = 0; j < d.model.n(); ++j) {
        auto& peak = tanks_[static_cast<std::size_t>(d.first_tank + j)].phase_peak[static_cast<std::size_t>(p)];
        peak = std::max(peak, d.model.ref_levels[j] + d.st.xi[j]);
      }
    }
  }

  void update_disturbance(std::int64_t cell) {
    const Seconds t = static_cast<double>(cell) * spec_.plant_step;
    for (auto& d : dmas_) {
      for (int j = 0; j < d.model.n(); ++j) {
        const double noise = cell == 0 ? d.noise[static_cast<std::size_t>(j)].value()
                                       : d.noise[static_cast<std::size_t>(j)].advance(spec_.plant_step);
        const double demand = plant::demand_at(d.profile[static_cast<std::size_t>(j)], t);
        d.w[j] = d.model.demand_gain[j] * (demand / spec_.design_demand - 1.0 + noise);
      }
    }
  }

  void sample_trace_until(Seconds t) {
    if (opts_.trace_interval <= 0.0) return;
    while (next_trace_ <= t + 1e-12 && next_trace_ <= plant_t_ + 1e-12) {
      TracePoint tp;
      tp.t = next_trace_;
      for (const auto& d : dmas_) {
        for (int j = 0; j < d.model.n(); ++j) tp.levels.push_back(d.model.ref_levels[j] + d.st.xi[j]);
      }
      trace_.push_back(std::move(tp));
      next_trace_ += opts_.trace_interval;
    }
  }

  void finish_trace(Seconds t) { sample_trace_until(t); }

  void advance_plants(Seconds t) {
    if (network_only_) return;
    t = std::min(t, spec_.duration);
    const double step = spec_.plant_step;
    while (plant_t_ < t - 1e-12) {
      const auto cell = static_cast<std::int64_t>(std::floor(plant_t_ / step + 1e-9));
      if (cell != cell_) {
        update_disturbance(cell);
        cell_ = cell;
      }
      const Seconds cell_end = static_cast<double>(cell + 1) * step;
      const Seconds t_next = std::min(t, cell_end);
      const double dt = t_next - plant_t_;
      for (auto& d : dmas_) {
        if (std::abs(dt - step) < 1e-12) {
          d.st = plant::integrate_step(d.model, d.zoh, d.st, d.w);
        } else {
          d.st = plant::integrate_step(d.model, d.st, d.w, dt);
        }
      }
      plant_t_ = t_next;
      record_peaks();
      if (opts_.trace_interval > 0.0) sample_trace_until(plant_t_);
    }
  }

  // ---- dispatch ------------------------------------------------------------

  void handle(const SimEvent& ev) {
    switch (ev.kind) {
      case EventKind::kPlantSample: on_plant_sample(ev); break;
      case EventKind::kTrafficArrival: on_traffic(ev); break;
      case EventKind::kRrmBroadcast: on_rrm(ev); break;
      case EventKind::kTxStart: on_tx_start(ev); break;
      case EventKind::kTxEnd: on_tx_end(ev); break;
      case EventKind::kAckTimeout: on_ack_timeout(ev); break;
      case EventKind::kActuationRelease: on_actuation_release(ev); break;
      case EventKind::kAckRelease:
        ack_release_pending_ = false;
        release_ack(ev.fire_time, ack_sched_);
        ensure_ack_release(ev.fire_time);
        break;
      default: throw std::logic_error("unexpected event kind");
    }
  }

  std::int64_t new_event(int node, Seconds t) {
    metrics::EventRecord r;
    r.id = static_cast<std::int64_t>(events_.size());
    r.node = node;
    r.generated = t;
    events_.push_back(r);
    return r.id;
  }

  metrics::EventRecord& rec(std::int64_t id) { return events_[static_cast<std::size_t>(id)]; }

  void on_plant_sample(const SimEvent& ev) {
    const Seconds t = ev.fire_time;
    auto& node = nodes_[static_cast<std::size_t>(ev.target)];
    advance_plants(t);
    const auto& d = dmas_[static_cast<std::size_t>(node.dma)];
    const double ref = d.model.ref_levels[node.local];
    double level = ref + d.st.xi[node.local];
    if (spec_.sensors.resolution > 0.0) level = std::round(level / spec_.sensors.resolution) * spec_.sensors.resolution;
    const double meas = level - ref;

    const bool fire = proto_ == Protocol::kWired || plant::event_check(meas, node.sent_value, node.sigma);
    if (fire) {
      node.sent_value = meas;
      const auto id = new_event(node.id, t);
      dispatch(node, Sample{meas, t, id}, t);
    }
    const std::int64_t k = ev.payload + 1;
    const Seconds next = node.phase + static_cast<double>(k) * node.h;
    if (next < spec_.duration) schedule(next, EventKind::kPlantSample, node.id, k);
  }

  void on_traffic(const SimEvent& ev) {
    const Seconds t = ev.fire_time;
    auto& node = nodes_[static_cast<std::size_t>(ev.target)];
    const auto id = new_event(node.id, t);
    dispatch(node, Sample{0.0, t, id}, t);
    const Seconds next = spec_.traffic.pattern == TrafficPattern::kPeriodic
                             ? t + spec_.traffic.interval
                             : t + node.traffic_rng.exponential(spec_.traffic.interval);
    if (next < spec_.duration) schedule(next, EventKind::kTrafficArrival, node.id);
  }

  void dispatch(Node& node, const Sample& s, Seconds t) {
    switch (proto_) {
      case Protocol::kWired: {
        auto& r = rec(s.event_id);
        r.attempts = 1;
        r.acked = t;
        gateway_receive(node, s, t);
        break;
      }
      case Protocol::kCtrlMac: {
        if (auto old = ctrlmac::node_on_sample(node.mac, s)) rec(old->event_id).superseded = true;
        break;
      }
      case Protocol::kLoRaWan:
      case Protocol::kLoRaWanPP: {
        if (auto old = lorawan::on_sample(node.lw, s)) rec(old->event_id).superseded = true;
        if (!node.lw.attempt_scheduled && !node.lw.in_flight) schedule_attempt(node, t);
        break;
      }
    }
  }

  // ---- gateway / controller ------------------------------------------------

  static std::uint8_t valve_byte(double v) {
    return static_cast<std::uint8_t>(std::lround(plant::clamp_valve(v) * 255.0));
  }

  void gateway_receive(Node& node, const Sample& s, Seconds t) {
    auto& r = rec(s.event_id);
    if (r.ul_received < 0.0) r.ul_received = t;
    if (s.generated < node.newest_forwarded) return;  // stale retransmission
    node.newest_forwarded = s.generated;

    std::vector<std::pair<int, std::uint8_t>> updates;
    if (network_only_) {
      updates.emplace_back(node.id, static_cast<std::uint8_t>(node.id & 0xFF));
    } else {
      advance_plants(t);
      auto& d = dmas_[static_cast<std::size_t>(node.dma)];
      d.st.xi_hat[node.local] = s.value;
      const VectorXd raw = plant::feedback_input(d.model.K, d.st.xi_hat);
      for (int i = 0; i < d.model.m(); ++i) {
        if (d.model.K(i, node.local) == 0.0) continue;
        updates.emplace_back(d.first_tank + i, valve_byte(d.model.v_bias[i] + raw[i]));
      }
    }

    if (proto_ == Protocol::kWired) {
      for (const auto& [a, v] : updates) apply_actuation(a, v, t);
      r.actuated = t;
      return;
    }
    for (const auto& [a, v] : updates) {
      auto& e = outbox_[a];
      e.value = v;
      auto it = e.events.find(node.id);
      if (it != e.events.end() && it->second != s.event_id) rec(it->second).superseded = true;
      e.events[node.id] = s.event_id;
    }
    ensure_release(t);
  }

  bool shared_acks() const { return spec_.lorawan.shared_downlink; }

  void ensure_release(Seconds t) {
    if (release_pending_ || (outbox_.empty() && (!shared_acks() || ack_queue_.empty()))) return;
    release_pending_ = true;
    schedule(act_sched_.earliest_start(t), EventKind::kActuationRelease, -1);
  }

  void on_actuation_release(const SimEvent& ev) {
    release_pending_ = false;
    if (outbox_.empty()) {
      if (shared_acks()) release_ack(ev.fire_time, act_sched_);
      ensure_release(ev.fire_time);
      return;
    }
    std::map<int, std::uint8_t> bytes;
    for (const auto& [a, e] : outbox_) bytes[a] = e.value;
    auto df = lorawan::gateway_actuation_downlink(bytes, ev.fire_time, act_sched_, header_);
    if (!df) return;
    Frame f;
    f.tx = df->tx;
    f.kind = FrameKind::kActuation;
    for (int a : df->actuators) {
      auto it = outbox_.find(a);
      f.entries.emplace_back(a, it->second.value);
      for (const auto& [src, id] : it->second.events) f.carried.push_back(id);
      outbox_.erase(it);
    }
    push_frame(std::move(f));
    ensure_release(ev.fire_time);
  }

  void apply_actuation(int actuator, std::uint8_t value, Seconds t) {
    if (network_only_) return;
    advance_plants(t);
    for (auto& d : dmas_) {
      const int i = actuator - d.first_tank;
      if (i >= 0 && i < d.model.m()) {
        d.st.v[i] = value / 255.0;
        return;
      }
    }
  }

  // ---- frames --------------------------------------------------------------

  std::size_t push_frame(Frame f) {
    const std::size_t idx = frames_.size();
    const Seconds end = f.tx.end();
    auto& list = on_air_[f.tx.channel_id];
    const Seconds horizon = f.tx.start - 2.0;
    std::erase_if(list, [&](std::size_t i) { return frames_[i].tx.end() < horizon; });
    list.push_back(idx);
    frames_.push_back(std::move(f));
    schedule(end, EventKind::kTxEnd, -1, static_cast<std::int64_t>(idx));
    return idx;
  }

  bool delivered(std::size_t idx) {
    const auto& f = frames_[idx];
    std::vector<Transmission> set{f.tx};
    for (std::size_t j : on_air_[f.tx.channel_id]) {
      if (j == idx) continue;
      const auto& g = frames_[j].tx;
      if (g.start < f.tx.end() && f.tx.start < g.end()) set.push_back(g);
    }
    if (set.size() == 1) return true;
    const auto out = resolve_deliveries(set, capture_);
    const bool ok = out.front().status != Delivery::kCollided;
    if (!ok) ++collisions_;
    return ok;
  }

  void on_tx_start(const SimEvent& ev) {
    auto& node = nodes_[static_cast<std::size_t>(ev.target)];
    const Seconds t = ev.fire_time;
    Frame f;
    f.node = node.id;
    if (proto_ == Protocol::kCtrlMac) {
      const auto& ch = plan_.channel(node.data_channel);
      const Seconds toa = time_on_air(spec_.mac.data_bytes, plan_, ch.id);
      if (!dc_.gate(node.id, ch.id, ch.duty_cycle, t, toa).allowed) {
        throw std::logic_error("granted data slot violates the node's duty cycle");
      }
      f.sample = ctrlmac::node_on_data_sent(node.mac);
      f.kind = FrameKind::kData;
      f.tx = {ch.id, t, toa, spec_.mac.data_bytes, node.id, FrameRole::kData, std::nullopt};
    } else {
      const int bytes = uplink_bytes();
      f.tx = lorawan::aloha_uplink(node.lw, dc_, plan_, node.id, node.attempt, bytes, confirmed(),
                                   spec_.lorawan.confirmed, &f.sample);
      f.kind = FrameKind::kUplink;
      if (confirmed()) {
        f.token = ++node.ack_token;
        schedule(node.lw.awaiting_ack_until, EventKind::kAckTimeout, node.id, f.token);
      }
    }
    if (capture_.enabled) f.tx.snr_db = node.snr_db;
    ++rec(f.sample.event_id).attempts;
    push_frame(std::move(f));
  }

  void on_tx_end(const SimEvent& ev) {
    const auto idx = static_cast<std::size_t>(ev.payload);
    const Seconds t = ev.fire_time;
    switch (frames_[idx].kind) {
      case FrameKind::kData: {
        if (!delivered(idx)) return;
        const Frame& f = frames_[idx];
        auto& r = rec(f.sample.event_id);
        if (r.acked < 0.0) r.acked = t;
        gateway_receive(nodes_[static_cast<std::size_t>(f.node)], f.sample, t);
        return;
      }
      case FrameKind::kUplink: {
        if (!delivered(idx)) return;
        const Frame f = frames_[idx];
        auto& node = nodes_[static_cast<std::size_t>(f.node)];
        gateway_receive(node, f.sample, t);
        if (confirmed()) send_ack(node, f, t);
        return;
      }
      case FrameKind::kAck: {
        const Frame& f = frames_[idx];
        auto& node = nodes_[static_cast<std::size_t>(f.node)];
        if (f.token != node.ack_token || !node.lw.in_flight) return;
        ++node.ack_token;  // disarms the pending timeout
        const Sample acked = lorawan::on_ack(node.lw);
        auto& r = rec(acked.event_id);
        if (r.acked < 0.0) r.acked = t;
        if (node.lw.pending && !node.lw.attempt_scheduled) schedule_attempt(node, t);
        return;
      }
      case FrameKind::kActuation: {
        const Frame& f = frames_[idx];
        for (const auto& [a, v] : f.entries) apply_actuation(a, v, t);
        for (auto id : f.carried) {
          auto& r = rec(id);
          if (r.actuated < 0.0) r.actuated = t;
        }
        return;
      }
    }
  }

  // ---- LoRaWAN -------------------------------------------------------------

  void schedule_attempt(Node& node, Seconds at) {
    node.attempt = lorawan::plan_attempt(node.lw_rng, plan_, dc_, node.id, at, uplink_bytes());
    node.lw.attempt_scheduled = true;
    schedule(node.attempt.start, EventKind::kTxStart, node.id);
  }

  void send_ack(Node& node, const Frame& up, Seconds t) {
    if (up.token != node.ack_token) return;
    ack_queue_.push_back({node.id, up.token, up.sample});
    if (shared_acks()) ensure_release(t);
    else ensure_ack_release(t);
  }

  void ensure_ack_release(Seconds t) {
    if (ack_release_pending_ || ack_queue_.empty()) return;
    ack_release_pending_ = true;
    schedule(ack_sched_.earliest_start(t), EventKind::kAckRelease, -1);
  }

  // Sends the oldest ack that can still beat its node's timeout.
  void release_ack(Seconds t, ctrlmac::DownlinkScheduler& sched) {
    const Seconds toa = time_on_air(header_, plan_, sched.channel_id());
    while (!ack_queue_.empty()) {
      const AckRequest a = ack_queue_.front();
      ack_queue_.pop_front();
      auto& node = nodes_[static_cast<std::size_t>(a.node)];
      const Seconds start = sched.earliest_start(t);
      if (a.token != node.ack_token || !(start + toa < node.lw.awaiting_ack_until)) {
        ++acks_skipped_;
        continue;
      }
      Frame f;
      f.kind = FrameKind::kAck;
      f.node = a.node;
      f.token = a.token;
      f.sample = a.sample;
      f.tx = {ack_ch_, start, sched.book(start, header_), header_, -1, FrameRole::kAck, std::nullopt};
      push_frame(std::move(f));
      return;
    }
  }

  void on_ack_timeout(const SimEvent& ev) {
    auto& node = nodes_[static_cast<std::size_t>(ev.target)];
    if (ev.payload != node.ack_token) return;
    const Sample in_flight = node.lw.in_flight.value_or(Sample{});
    const auto out = lorawan::on_ack_timeout(node.lw, node.lw_rng, ev.fire_time, spec_.lorawan.confirmed);
    if (const auto* r = std::get_if<lorawan::Retry>(&out)) {
      if (node.lw.pending && node.lw.pending->event_id != in_flight.event_id) rec(in_flight.event_id).superseded = true;
      schedule_attempt(node, r->at);
    } else if (const auto* d = std::get_if<lorawan::Dropped>(&out)) {
      rec(d->sample.event_id).dropped = true;
      if (d->restart_at) schedule_attempt(node, *d->restart_at);
    }
  }

  // ---- Ctrl-MAC ------------------------------------------------------------

  Seconds data_slot_start(Seconds t_round, int c1) const { return t_round + rrm_toa_ + (c1 - 1) * data_slot_; }

  bool pair_usable(Seconds t_round, int node, int c1, int c2) {
    const Seconds ts = data_slot_start(t_round, c1);
    const int ch = data_ids_[static_cast<std::size_t>(c2 - 1)];
    if (dc_.next_allowed(node, ch) > ts + 1e-12) return false;
    const Seconds te = ts + data_slot_;
    for (const auto& [s, e] : booked_[ch]) {
      if (s < te && ts < e) return false;
    }
    return true;
  }

  bool any_active() const {
    if (!requests_.empty()) return true;
    for (const auto& n : nodes_) {
      if (n.mac.phase != ctrlmac::Phase::kIdle) return true;
    }
    return false;
  }

  void on_rrm(const SimEvent& ev) {
    const Seconds t = ev.fire_time;
    std::optional<ctrlmac::Rrm> rrm;
    auto& rrm_dc = rrm_next_allowed_;
    if (t + 1e-12 >= rrm_dc) {
      for (auto& [ch, list] : booked_) {
        std::erase_if(list, [&](const auto& iv) { return iv.second <= t; });
      }
      auto reqs = std::move(requests_);
      requests_.clear();
      const auto res = ctrlmac::gateway_round(
          reqs, sched_, [&](int node, int c1, int c2) { return pair_usable(t, node, c1, c2); });
      for (const auto& g : res.grants) {
        const Seconds ts = data_slot_start(t, g.c1);
        booked_[data_ids_[static_cast<std::size_t>(g.c2 - 1)]].emplace_back(ts, ts + data_slot_);
      }
      const double d = plan_.channel(rrm_ch_).duty_cycle;
      rrm_dc = t + rrm_toa_ + rrm_toa_ * (1.0 / d - 1.0);
      rrm = res.rrm;
    }

    for (auto& node : nodes_) {
      if (node.mac.phase == ctrlmac::Phase::kIdle || node.mac.phase == ctrlmac::Phase::kSending) continue;
      const auto action = ctrlmac::node_on_rrm(node.mac, rrm, node.mac_rng, spec_.mac.k);
      if (const auto* req = std::get_if<ctrlmac::SendRequest>(&action)) {
        const Seconds ts = t + rrm_toa_ + (req->slot - 1) * spec_.mac.t_slot;
        const auto& ch = plan_.channel(req_ch_);
        if (dc_.next_allowed(node.id, ch.id) > ts + 1e-12) {
          node.mac.phase = ctrlmac::Phase::kSyncing;
          continue;
        }
        dc_.commit(node.id, ch.id, ch.duty_cycle, ts, req_toa_);
        requests_.push_back({node.id, req->slot});
      } else if (const auto* data = std::get_if<ctrlmac::SendData>(&action)) {
        node.data_channel = data_ids_[static_cast<std::size_t>(data->c2 - 1)];
        node.data_start = data_slot_start(t, data->c1);
        schedule(node.data_start, EventKind::kTxStart, node.id);
      }
    }

    ++round_;
    const Seconds next = static_cast<double>(round_) * round_s_;
    if (next <= end_time_ && (next < spec_.duration || any_active())) {
      schedule(next, EventKind::kRrmBroadcast, 0, round_);
    }
  }

  Seconds rrm_next_allowed_ = 0.0;
};

}  // namespace

RunResult run_scenario(const ScenarioSpec& spec, const SimOptions& opts) {
  if (!spec.traffic.enabled && spec.models.size() != spec.subsystems.size()) {
    throw std::invalid_argument("run_scenario: scenario not finalized");
  }
  Simulator sim(spec, opts);
  return sim.run();
}

}  // namespace wacps
