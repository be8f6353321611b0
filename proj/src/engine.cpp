#include "agritag/engine.hpp"

#include "agritag/crypto.hpp"

#include <cmath>
#include <condition_variable>
#include <deque>
#include <exception>
#include <map>
#include <mutex>
#include <thread>

namespace agritag::sim {

namespace {

using nlohmann::ordered_json;

constexpr double kTimeEps = 1e-9;

double round3(double v) { return std::round(v * 1e3) / 1e3; }

struct DueFrame {
    double arrival_s = 0.0;
    pipeline::BridgeFrame frame;
};

struct FrameOutcome {
    DueFrame due;
    pipeline::DecryptOutcome decrypt;
    std::string topic;
    std::string payload; // serialized message; empty when rejected
    std::optional<store::TelemetryRecord> record;
    bool inserted = false;
};

struct Batch {
    double now_s = 0.0;
    std::vector<DueFrame> frames;
    std::vector<FrameOutcome> outcomes;
    std::exception_ptr error;
};

/// Unbounded blocking FIFO. `std::nullopt` is used as the shutdown message.
template <typename T>
class Channel {
public:
    void push(std::optional<T> v)
    {
        {
            std::lock_guard lock(mu_);
            q_.push_back(std::move(v));
        }
        cv_.notify_one();
    }

    std::optional<T> pop()
    {
        std::unique_lock lock(mu_);
        cv_.wait(lock, [&] { return !q_.empty(); });
        auto v = std::move(q_.front());
        q_.pop_front();
        return v;
    }

private:
    std::mutex mu_;
    std::condition_variable cv_;
    std::deque<std::optional<T>> q_;
};

/// Decrypt stage: owns the decryption service and publishes to the wire sink.
class DecryptStage {
public:
    DecryptStage(pipeline::Keystore ks, double expiry_s, std::string gateway_id, mqtt::MessageSink* wire)
        : service_(std::move(ks), expiry_s), gateway_id_(std::move(gateway_id)), wire_(wire)
    {
    }

    void run(Batch& b)
    {
        for (auto& due : b.frames) {
            FrameOutcome o{due, service_.process(due.frame, gateway_id_, b.now_s), {}, {}, {}, false};
            if (auto* msg = std::get_if<pipeline::PublishedMessage>(&o.decrypt)) {
                o.topic = pipeline::topic_for(msg->gateway_id);
                o.payload = pipeline::serialize_message(*msg);
                if (wire_)
                    wire_->publish(o.topic, o.payload);
            }
            b.outcomes.push_back(std::move(o));
        }
        b.frames.clear();
    }

    const pipeline::ServiceMetrics& metrics() const { return service_.metrics(); }

private:
    pipeline::DecryptService service_;
    std::string gateway_id_;
    mqtt::MessageSink* wire_;
};

/// Ingest stage: parses published bytes and appends to the store.
class IngestStage {
public:
    explicit IngestStage(store::TelemetryStore& store) : store_(store) {}

    void run(Batch& b)
    {
        for (auto& o : b.outcomes) {
            if (o.payload.empty())
                continue;
            o.record = store::parse_message(o.payload);
            o.inserted = store_.append(*o.record);
        }
    }

private:
    store::TelemetryStore& store_;
};

class PipelineSchedule {
public:
    virtual ~PipelineSchedule() = default;
    virtual std::vector<FrameOutcome> process(std::vector<DueFrame> frames, double now_s) = 0;
    virtual pipeline::ServiceMetrics finish() = 0;
};

class InlineSchedule final : public PipelineSchedule {
public:
    InlineSchedule(DecryptStage decrypt, IngestStage ingest) : decrypt_(std::move(decrypt)), ingest_(ingest) {}

    std::vector<FrameOutcome> process(std::vector<DueFrame> frames, double now_s) override
    {
        Batch b{now_s, std::move(frames), {}, nullptr};
        decrypt_.run(b);
        ingest_.run(b);
        return std::move(b.outcomes);
    }

    pipeline::ServiceMetrics finish() override { return decrypt_.metrics(); }

private:
    DecryptStage decrypt_;
    IngestStage ingest_;
};

/// Each stage runs on its own thread; stages exchange batches over channels only.
/// The simulation loop waits for each batch to come back, so outcomes are identical
/// to the inline schedule.
class ThreadedSchedule final : public PipelineSchedule {
public:
    ThreadedSchedule(DecryptStage decrypt, IngestStage ingest)
        : decrypt_(std::move(decrypt)), ingest_(ingest),
          decrypt_thread_([this] { stage_loop(to_decrypt_, to_ingest_, [this](Batch& b) { decrypt_.run(b); }); }),
          ingest_thread_([this] { stage_loop(to_ingest_, done_, [this](Batch& b) { ingest_.run(b); }); })
    {
    }

    ~ThreadedSchedule() override { stop(); }

    std::vector<FrameOutcome> process(std::vector<DueFrame> frames, double now_s) override
    {
        to_decrypt_.push(Batch{now_s, std::move(frames), {}, nullptr});
        auto b = done_.pop();
        if (b->error)
            std::rethrow_exception(b->error);
        return std::move(b->outcomes);
    }

    pipeline::ServiceMetrics finish() override
    {
        stop();
        return decrypt_.metrics();
    }

private:
    template <typename F>
    static void stage_loop(Channel<Batch>& in, Channel<Batch>& out, F&& work)
    {
        for (;;) {
            auto b = in.pop();
            if (!b) {
                out.push(std::nullopt);
                return;
            }
            if (!b->error) {
                try {
                    work(*b);
                } catch (...) {
                    b->error = std::current_exception();
                }
            }
            out.push(std::move(b));
        }
    }

    void stop()
    {
        if (stopped_)
            return;
        stopped_ = true;
        to_decrypt_.push(std::nullopt);
        decrypt_thread_.join();
        ingest_thread_.join();
    }

    DecryptStage decrypt_;
    IngestStage ingest_;
    Channel<Batch> to_decrypt_;
    Channel<Batch> to_ingest_;
    Channel<Batch> done_;
    bool stopped_ = false;
    std::thread decrypt_thread_;
    std::thread ingest_thread_;
};

ordered_json pose_json(const mission::DroneState& d, double commanded)
{
    ordered_json j;
    j["state"] = std::string(mission::to_string(d.state));
    j["lat"] = d.pos.lat;
    j["lon"] = d.pos.lon;
    j["alt_m_agl"] = round3(d.pos.alt_agl_m);
    j["commanded_alt_m_agl"] = round3(commanded);
    j["soc"] = std::round(d.soc * 1e6) / 1e6;
    j["motors_active"] = d.motors_active;
    return j;
}

geo::GeoPoint scripted_position(const std::vector<ScriptPoint>& path, double t)
{
    if (t <= path.front().t_s)
        return path.front().pos;
    if (t >= path.back().t_s)
        return path.back().pos;
    auto hi = std::upper_bound(path.begin(), path.end(), t, [](double v, const ScriptPoint& p) { return v < p.t_s; });
    auto lo = hi - 1;
    double f = (t - lo->t_s) / (hi->t_s - lo->t_s);
    return geo::GeoPoint{lo->pos.lat + (hi->pos.lat - lo->pos.lat) * f, lo->pos.lon + (hi->pos.lon - lo->pos.lon) * f,
                         lo->pos.alt_agl_m + (hi->pos.alt_agl_m - lo->pos.alt_agl_m) * f};
}

std::string violation_summary(const std::vector<mission::Violation>& v)
{
    std::string s = "preflight failed:";
    for (const auto& x : v)
        s += " [" + std::string(mission::to_string(x.kind)) + " wp " + std::to_string(x.waypoint_index) + "]";
    return s;
}

} // namespace

PreflightFailed::PreflightFailed(std::vector<mission::Violation> v)
    : Error(violation_summary(v)), violations_(std::move(v))
{
}

std::set<uint32_t> tags_in_range(const ScenarioConfig& sc, const geo::GeoPoint& waypoint)
{
    std::set<uint32_t> out;
    for (const auto& t : sc.tags)
        if (geo::distance_3d_m(waypoint, t.pos) <= rf::activation_range_m(sc.drone_radios, t.rx_gain_offset_db))
            out.insert(t.tag_id);
    return out;
}

RunResult run(const ScenarioConfig& sc, const mission::MissionParams* mission, const geo::ElevationRaster* raster,
              const RunOptions& opt)
{
    validate(sc);
    RunResult result;
    result.mode = mode_of(sc);
    const bool flight = result.mode == RunMode::Flight;
    const uint64_t seed = opt.seed.value_or(sc.seed);
    const RngStreams streams(seed);
    const double dt = sc.dt_s;

    if (flight) {
        if (!mission || !raster)
            throw ConfigError("flight scenarios need a mission and an elevation raster");
        auto violations = mission::preflight_check(*mission, *raster, sc.home);
        if (!violations.empty())
            throw PreflightFailed(std::move(violations));
    }

    result.store = opt.store_path ? std::make_unique<store::TelemetryStore>(opt.store_capacity, *opt.store_path)
                                  : std::make_unique<store::TelemetryStore>(opt.store_capacity);

    pipeline::Keystore keystore;
    for (const auto& t : sc.tags)
        keystore.add(t.tag_id, t.key);

    DecryptStage decrypt(std::move(keystore), sc.expiry_window_s, sc.gateway_id, opt.wire);
    IngestStage ingest(*result.store);
    std::unique_ptr<PipelineSchedule> schedule;
    if (opt.concurrent_pipeline)
        schedule = std::make_unique<ThreadedSchedule>(std::move(decrypt), ingest);
    else
        schedule = std::make_unique<InlineSchedule>(std::move(decrypt), ingest);

    pipeline::Bridge bridge(sc.bridge_id, sc.dedup_window_s);
    crypto::NonceRegistry nonces;
    Rng gateway_rng = streams.stream("gateway/" + sc.gateway_id);

    std::vector<tag::TagState> tag_states(sc.tags.size());
    std::vector<Rng> tag_rngs;
    std::vector<Rng> link_rngs;
    for (const auto& t : sc.tags) {
        tag_rngs.push_back(streams.stream("tag/" + std::to_string(t.tag_id)));
        link_rngs.push_back(streams.stream("tag_link/" + std::to_string(t.tag_id)));
    }

    RunLog& log = result.log;
    {
        ordered_json start;
        start["scenario"] = sc.name;
        start["mode"] = std::string(to_string(result.mode));
        start["seed"] = seed;
        start["dt_s"] = dt;
        ordered_json ids = ordered_json::array();
        for (const auto& t : sc.tags)
            ids.push_back(t.tag_id);
        start["tags"] = std::move(ids);
        start["bridge_id"] = sc.bridge_id;
        start["gateway_id"] = sc.gateway_id;
        start["phone_mode"] = std::string(to_string(sc.phone_mode));
        log.add(0.0, EventKind::RunStart, std::move(start));
    }

    mission::DroneState drone;
    std::vector<std::set<uint32_t>> expected_by_wp;
    if (flight) {
        drone = mission::initial_drone_state(sc.home);
        for (const auto& wp : mission->waypoints)
            expected_by_wp.push_back(tags_in_range(sc, wp));
    } else if (result.mode == RunMode::TestStand) {
        drone.pos = sc.stand;
        drone.armed = *sc.armed_override;
        drone.motors_active = *sc.armed_override;
    } else {
        drone.pos = scripted_position(sc.manual_path, 0.0);
        drone.armed = true;
        drone.motors_active = true;
    }

    std::map<uint32_t, int> temperature_counts;
    std::multimap<double, DueFrame> pending; // by arrival; equal keys keep insertion order

    auto process_due = [&](double now) {
        std::vector<DueFrame> batch;
        while (!pending.empty() && pending.begin()->first <= now + kTimeEps) {
            batch.push_back(std::move(pending.begin()->second));
            pending.erase(pending.begin());
        }
        if (batch.empty())
            return;
        for (auto& o : schedule->process(std::move(batch), now)) {
            const auto& pkt = o.due.frame.packet;
            const std::string nonce = crypto::to_hex(pkt.nonce);
            if (auto* msg = std::get_if<pipeline::PublishedMessage>(&o.decrypt)) {
                ordered_json p;
                p["tag_id"] = msg->tag_id;
                p["seq"] = msg->seq;
                p["type"] = std::string(tag::to_string(msg->type));
                p["nonce"] = nonce;
                p["rx_time_s"] = std::round(o.due.frame.rx_time_s * 1e6) / 1e6;
                p["arrival_s"] = std::round(o.due.arrival_s * 1e6) / 1e6;
                p["topic"] = o.topic;
                p["message"] = o.payload;
                log.add(now, EventKind::Publish, std::move(p));

                ordered_json s;
                s["tag_id"] = o.record->tag_id;
                s["seq"] = o.record->seq;
                s["type"] = std::string(tag::to_string(o.record->type));
                s["inserted"] = o.inserted;
                log.add(now, EventKind::Store, std::move(s));
                if (o.inserted && o.record->type == tag::PacketType::Temperature)
                    ++temperature_counts[o.record->tag_id];
            } else {
                const auto& rej = std::get<pipeline::Rejection>(o.decrypt);
                ordered_json r;
                r["tag_id"] = pkt.tag_id;
                r["nonce"] = nonce;
                r["reason"] = std::string(pipeline::to_string(rej.reason));
                r["detail"] = rej.detail;
                log.add(now, rej.reason == pipeline::RejectReason::Expired ? EventKind::Expire : EventKind::Reject,
                        std::move(r));
            }
        }
    };

    const auto steps = static_cast<int64_t>(std::llround(sc.duration_s / dt));
    const auto phone_off = sc.phone_offset();

    for (int64_t k = 1; k <= steps; ++k) {
        const double t = static_cast<double>(k) * dt;

        if (flight) {
            mission::FsmInputs in;
            in.temperature_packets_per_tag = temperature_counts;
            if (drone.waypoint_index < expected_by_wp.size())
                in.expected_tags = expected_by_wp[drone.waypoint_index];
            in.dt_s = dt;
            in.preflight_passed = true;
            auto step = mission::fsm_step(drone, *mission, in, sc.flight);
            drone = step.drone;
            for (const auto& tr : step.transitions) {
                result.transitions.push_back(tr);
                ordered_json j = pose_json(drone, step.commanded_alt_agl_m);
                j.erase("state");
                ordered_json ev;
                ev["from"] = std::string(mission::to_string(tr.from));
                ev["to"] = std::string(mission::to_string(tr.to));
                for (auto& [key, v] : j.items())
                    ev[key] = v;
                log.add(t, EventKind::StateTransition, std::move(ev));
            }
            if (opt.pose_every_steps > 0 && k % opt.pose_every_steps == 0)
                log.add(t, EventKind::Pose, pose_json(drone, step.commanded_alt_agl_m));
        } else if (result.mode == RunMode::Scripted) {
            drone.pos = scripted_position(sc.manual_path, t);
        }

        rf::InterferenceSource motors{.pos = drone.pos,
                                      .active = drone.motors_active && sc.interference.enabled,
                                      .power_dbm_at_ref = sc.interference.power_dbm_at_ref,
                                      .ref_m = sc.interference.ref_m,
                                      .decay_exp = sc.interference.decay_exp};
        const geo::GeoPoint phone = geo::offset_by(drone.pos, phone_off[0], phone_off[1], phone_off[2]);
        const bool on_gateway = sc.interference.target == InterferenceTarget::Gateway;
        const double gateway_noise = on_gateway ? rf::motor_noise_dbm(motors, phone) : rf::kNoNoiseDbm;
        const double tag_link_noise = on_gateway ? rf::kNoNoiseDbm : rf::motor_noise_dbm(motors, drone.pos);
        const double ambient = sc.ambient_c.at(t);

        for (size_t i = 0; i < sc.tags.size(); ++i) {
            const auto& cfg = sc.tags[i];
            const double dist = geo::distance_3d_m(drone.pos, cfg.pos);
            const double incident = rf::received_power_clamped_dbm(sc.drone_radios, dist) + cfg.rx_gain_offset_db;
            auto stepped = tag::step_tag(cfg, tag_states[i], incident, ambient, t, dt,
                                         sc.drone_radios.sensitivity_dbm, tag_rngs[i], &nonces);
            tag_states[i] = stepped.state;

            for (auto& em : stepped.emitted) {
                const std::string nonce = crypto::to_hex(em.sealed.nonce);
                ordered_json tx;
                tx["tag_id"] = em.plain.tag_id;
                tx["seq"] = em.plain.seq;
                tx["type"] = std::string(tag::to_string(em.plain.type));
                tx["channel"] = em.plain.channel;
                tx["nonce"] = nonce;
                log.add(t, EventKind::PacketTx, std::move(tx));

                const double rssi = rf::received_power_clamped_dbm(sc.tag_radio, dist) + cfg.rx_gain_offset_db;
                auto link = pipeline::draw_link(rssi, sc.tag_radio, tag_link_noise, rf::DeliveryCurve{}, link_rngs[i]);
                if (!link.delivered) {
                    ordered_json drop;
                    drop["stage"] = "tag_link";
                    drop["tag_id"] = cfg.tag_id;
                    drop["nonce"] = nonce;
                    drop["snr_db"] = round3(link.snr_db);
                    log.add(t, EventKind::RelayDrop, std::move(drop));
                    continue;
                }

                auto ingested = bridge.ingest(em.sealed, rssi, t);
                ordered_json rx;
                rx["tag_id"] = cfg.tag_id;
                rx["nonce"] = nonce;
                rx["rssi_dbm"] = round3(rssi);
                rx["duplicate"] = std::holds_alternative<pipeline::Duplicate>(ingested);
                log.add(t, EventKind::BridgeRx, std::move(rx));
                if (std::holds_alternative<pipeline::Duplicate>(ingested))
                    continue;

                auto& frame = std::get<pipeline::BridgeFrame>(ingested);
                auto relay = pipeline::gateway_relay(frame, sc.uplink, gateway_noise, gateway_rng);
                if (auto* dropped = std::get_if<pipeline::Dropped>(&relay)) {
                    ordered_json drop;
                    drop["stage"] = "gateway";
                    drop["tag_id"] = cfg.tag_id;
                    drop["nonce"] = nonce;
                    drop["snr_db"] = round3(dropped->snr_db);
                    log.add(t, EventKind::RelayDrop, std::move(drop));
                } else {
                    double arrival = std::get<pipeline::Delivered>(relay).arrival_s;
                    pending.emplace(arrival, DueFrame{arrival, std::move(frame)});
                }
            }
        }

        process_due(t);

        if (flight && (drone.state == mission::FlightState::Done ||
                       (drone.state == mission::FlightState::Abort && !drone.armed)))
            break;
    }

    while (!pending.empty())
        process_due(std::max(pending.begin()->first, log.empty() ? 0.0 : log.events().back().t_s));

    result.metrics = schedule->finish();
    result.final_drone = drone;
    return result;
}

} // namespace agritag::sim
