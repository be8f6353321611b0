#include "agritag/mission.hpp"

#include "agritag/error.hpp"

#include <yaml-cpp/yaml.h>

#include <algorithm>
#include <cmath>

namespace agritag::mission {

namespace {

int yaml_line(const YAML::Node& n) { return n.Mark().line >= 0 ? n.Mark().line + 1 : 0; }

YAML::Node require(const YAML::Node& parent, const char* key)
{
    YAML::Node child = parent[key];
    if (!child)
        throw ParseError(std::string("missing key '") + key + "'", yaml_line(parent));
    return child;
}

template <typename T>
T as(const YAML::Node& n, const char* what)
{
    try {
        return n.as<T>();
    } catch (const YAML::Exception&) {
        throw ParseError(std::string("bad value for '") + what + "'", yaml_line(n));
    }
}

void reject_unknown(const YAML::Node& map, std::initializer_list<std::string_view> allowed)
{
    if (!map.IsMap())
        throw ParseError("expected a mapping", yaml_line(map));
    for (const auto& kv : map) {
        auto key = kv.first.as<std::string>();
        if (std::find(allowed.begin(), allowed.end(), key) == allowed.end())
            throw ParseError("unknown key '" + key + "'", yaml_line(kv.first));
    }
}

geo::GeoPoint parse_point(const YAML::Node& n, bool with_alt)
{
    if (with_alt)
        reject_unknown(n, {"lat", "lon", "alt_m_agl"});
    else
        reject_unknown(n, {"lat", "lon"});
    geo::GeoPoint p;
    p.lat = as<double>(require(n, "lat"), "lat");
    p.lon = as<double>(require(n, "lon"), "lon");
    if (with_alt)
        p.alt_agl_m = as<double>(require(n, "alt_m_agl"), "alt_m_agl");
    return p;
}

void move_vertical(geo::GeoPoint& pos, double target, double max_step)
{
    if (pos.alt_agl_m < target)
        pos.alt_agl_m = std::min(target, pos.alt_agl_m + max_step);
    else
        pos.alt_agl_m = std::max(target, pos.alt_agl_m - max_step);
}

} // namespace

void validate(const MissionParams& m)
{
    if (m.waypoints.empty())
        throw InvariantViolation("mission needs at least one waypoint");
    for (size_t i = 0; i < m.waypoints.size(); ++i) {
        geo::validate(m.waypoints[i]);
        if (!(m.cruise_alt_agl_m > m.waypoints[i].alt_agl_m))
            throw InvariantViolation("cruise altitude must exceed the target altitude of waypoint " +
                                     std::to_string(i));
    }
    if (!(m.max_linger_s > 0.0))
        throw InvariantViolation("max linger time must be positive");
    if (!(m.battery_land_soc > 0.0 && m.battery_land_soc < 1.0))
        throw InvariantViolation("battery landing SoC must lie in (0, 1)");
    if (!(m.safety_margin_m >= 0.0))
        throw InvariantViolation("safety margin must be non-negative");
    if (m.sufficient_packets_per_tag < 1)
        throw InvariantViolation("sufficient_packets_per_tag must be >= 1");
}

MissionParams load_mission(std::string_view yaml_text)
{
    YAML::Node root;
    try {
        root = YAML::Load(std::string(yaml_text));
    } catch (const YAML::Exception& e) {
        throw ParseError(e.msg, e.mark.line >= 0 ? e.mark.line + 1 : 0);
    }
    if (!root.IsMap())
        throw ParseError("mission file must be a mapping", 1);
    reject_unknown(root, {"mission", "boundary"});

    YAML::Node mission = require(root, "mission");
    reject_unknown(mission, {"cruise_alt_m_agl", "target_linger_s_max", "battery_land_soc",
                             "safety_margin_m", "sufficient_packets_per_tag", "waypoints"});
    YAML::Node boundary = require(root, "boundary");
    if (!boundary.IsSequence())
        throw ParseError("'boundary' must be a list", yaml_line(boundary));

    std::vector<geo::GeoPoint> fence;
    for (const auto& v : boundary)
        fence.push_back(parse_point(v, false));

    YAML::Node wps = require(mission, "waypoints");
    if (!wps.IsSequence())
        throw ParseError("'waypoints' must be a list", yaml_line(wps));
    std::vector<geo::GeoPoint> waypoints;
    for (const auto& w : wps)
        waypoints.push_back(parse_point(w, true));

    MissionParams m{
        .waypoints = std::move(waypoints),
        .cruise_alt_agl_m = as<double>(require(mission, "cruise_alt_m_agl"), "cruise_alt_m_agl"),
        .max_linger_s = as<double>(require(mission, "target_linger_s_max"), "target_linger_s_max"),
        .battery_land_soc = as<double>(require(mission, "battery_land_soc"), "battery_land_soc"),
        .safety_margin_m = as<double>(require(mission, "safety_margin_m"), "safety_margin_m"),
        .boundary = geo::BoundaryPolygon(std::move(fence)),
        .sufficient_packets_per_tag = 1,
    };
    if (auto n = mission["sufficient_packets_per_tag"])
        m.sufficient_packets_per_tag = as<int>(n, "sufficient_packets_per_tag");
    validate(m);
    return m;
}

std::string_view to_string(FlightState s)
{
    switch (s) {
    case FlightState::Preflight: return "PREFLIGHT";
    case FlightState::Takeoff: return "TAKEOFF";
    case FlightState::Cruise: return "CRUISE";
    case FlightState::Descend: return "DESCEND";
    case FlightState::Linger: return "LINGER";
    case FlightState::Climb: return "CLIMB";
    case FlightState::Land: return "LAND";
    case FlightState::Done: return "DONE";
    case FlightState::Abort: return "ABORT";
    }
    return "?";
}

std::string_view to_string(ViolationKind k)
{
    switch (k) {
    case ViolationKind::OutsideBoundary: return "OutsideBoundary";
    case ViolationKind::LegOutsideBoundary: return "LegOutsideBoundary";
    case ViolationKind::GroundClearance: return "GroundClearance";
    case ViolationKind::RasterCoverage: return "RasterCoverage";
    }
    return "?";
}

DroneState initial_drone_state(const geo::GeoPoint& home)
{
    DroneState d;
    d.pos = home;
    d.pos.alt_agl_m = 0.0;
    return d;
}

double BatteryRates::rate(BatteryPhase phase) const
{
    switch (phase) {
    case BatteryPhase::Ground: return ground;
    case BatteryPhase::Hover: return hover;
    case BatteryPhase::Translate: return translate;
    case BatteryPhase::Climb: return climb;
    }
    return 0.0;
}

double battery_step(double soc, BatteryPhase phase, double dt_s, const BatteryRates& rates)
{
    return std::max(0.0, soc - rates.rate(phase) * dt_s);
}

bool linger_satisfied(const std::map<uint32_t, int>& collected, const std::set<uint32_t>& expected_tags,
                      int threshold)
{
    for (uint32_t id : expected_tags) {
        auto it = collected.find(id);
        if (it == collected.end() || it->second < threshold)
            return false;
    }
    return true;
}

bool is_airborne_state(FlightState s)
{
    switch (s) {
    case FlightState::Takeoff:
    case FlightState::Cruise:
    case FlightState::Descend:
    case FlightState::Linger:
    case FlightState::Climb:
    case FlightState::Land:
        return true;
    default:
        return false;
    }
}

bool is_allowed_transition(FlightState from, FlightState to)
{
    using S = FlightState;
    if (to == S::Abort)
        return from == S::Preflight || is_airborne_state(from);
    switch (from) {
    case S::Preflight: return to == S::Takeoff;
    case S::Takeoff: return to == S::Cruise;
    case S::Cruise: return to == S::Descend;
    case S::Descend: return to == S::Linger;
    case S::Linger: return to == S::Climb || to == S::Land;
    case S::Climb: return to == S::Cruise;
    case S::Land: return to == S::Done;
    case S::Done:
    case S::Abort: return false;
    }
    return false;
}

StepResult fsm_step(const DroneState& d, const MissionParams& m, const FsmInputs& in,
                    const FlightConfig& cfg)
{
    if (!(in.dt_s > 0.0))
        throw InvalidDt("dt must be positive");

    using S = FlightState;
    StepResult out{d, {}, d.pos.alt_agl_m};
    DroneState& next = out.drone;
    const double dt = in.dt_s;
    const double vstep = cfg.vertical_speed_mps * dt;
    const double hstep = cfg.horizontal_speed_mps * dt;

    auto go = [&](S to) {
        out.transitions.push_back({next.state, to});
        next.state = to;
    };

    BatteryPhase phase = BatteryPhase::Hover;
    switch (d.state) {
    case S::Preflight:
    case S::Done: phase = BatteryPhase::Ground; break;
    case S::Takeoff:
    case S::Climb: phase = BatteryPhase::Climb; break;
    case S::Cruise: phase = BatteryPhase::Translate; break;
    case S::Abort: phase = d.armed ? BatteryPhase::Hover : BatteryPhase::Ground; break;
    default: break;
    }
    next.soc = battery_step(d.soc, phase, dt, cfg.battery);

    const geo::GeoPoint* wp = d.waypoint_index < m.waypoints.size() ? &m.waypoints[d.waypoint_index] : nullptr;

    switch (d.state) {
    case S::Preflight:
        if (in.preflight_passed) {
            next.armed = true;
            next.motors_active = true;
            go(S::Takeoff);
        } else {
            go(S::Abort);
        }
        break;

    case S::Takeoff:
        move_vertical(next.pos, m.cruise_alt_agl_m, vstep);
        if (next.pos.alt_agl_m >= m.cruise_alt_agl_m)
            go(S::Cruise);
        break;

    case S::Cruise:
        if (!wp) {
            go(S::Abort);
            break;
        }
        next.pos = geo::step_toward(next.pos, *wp, hstep);
        if (geo::haversine_m(next.pos, *wp) < cfg.arrival_tolerance_m)
            go(S::Descend);
        break;

    case S::Descend:
        move_vertical(next.pos, wp->alt_agl_m, vstep);
        if (next.pos.alt_agl_m <= wp->alt_agl_m) {
            next.linger_elapsed_s = 0.0;
            go(S::Linger);
        }
        break;

    case S::Linger: {
        next.linger_elapsed_s = d.linger_elapsed_s + dt;
        bool last = d.waypoint_index + 1 >= m.waypoints.size();
        if (next.soc <= m.battery_land_soc) {
            go(S::Land);
        } else if (linger_satisfied(in.temperature_packets_per_tag, in.expected_tags,
                                    m.sufficient_packets_per_tag) ||
                   next.linger_elapsed_s >= m.max_linger_s) {
            go(last ? S::Land : S::Climb);
        }
        break;
    }

    case S::Climb:
        move_vertical(next.pos, m.cruise_alt_agl_m, vstep);
        if (next.pos.alt_agl_m >= m.cruise_alt_agl_m) {
            next.waypoint_index = d.waypoint_index + 1;
            next.linger_elapsed_s = 0.0;
            go(S::Cruise);
        }
        break;

    case S::Land:
        move_vertical(next.pos, 0.0, vstep);
        if (next.pos.alt_agl_m <= 0.0) {
            next.armed = false;
            next.motors_active = false;
            go(S::Done);
        }
        break;

    case S::Done:
        break;

    case S::Abort:
        // Lands in place, then stays disarmed.
        move_vertical(next.pos, 0.0, vstep);
        if (next.pos.alt_agl_m <= 0.0) {
            next.armed = false;
            next.motors_active = false;
        }
        break;
    }

    if (is_airborne_state(next.state) && !geo::point_in_polygon(m.boundary, next.pos))
        go(S::Abort);

    // Altitude target of the state the vehicle is now in.
    switch (next.state) {
    case S::Takeoff:
    case S::Cruise:
    case S::Climb: out.commanded_alt_agl_m = m.cruise_alt_agl_m; break;
    case S::Descend:
    case S::Linger: out.commanded_alt_agl_m = m.waypoints[next.waypoint_index].alt_agl_m; break;
    default: out.commanded_alt_agl_m = 0.0; break;
    }
    return out;
}

std::vector<Violation> preflight_check(const MissionParams& m, const geo::ElevationRaster& r,
                                       const std::optional<geo::GeoPoint>& home)
{
    std::vector<Violation> out;
    if (home && !geo::point_in_polygon(m.boundary, *home))
        out.push_back({ViolationKind::OutsideBoundary, -1, "home position outside flight boundary"});

    for (size_t i = 0; i < m.waypoints.size(); ++i) {
        const auto& wp = m.waypoints[i];
        const int idx = static_cast<int>(i);
        if (!geo::point_in_polygon(m.boundary, wp))
            out.push_back({ViolationKind::OutsideBoundary, idx, "waypoint outside flight boundary"});

        const geo::GeoPoint* prev = i == 0 ? (home ? &*home : nullptr) : &m.waypoints[i - 1];
        if (prev && geo::point_in_polygon(m.boundary, *prev) && geo::point_in_polygon(m.boundary, wp) &&
            !geo::segment_in_polygon(m.boundary, *prev, wp))
            out.push_back({ViolationKind::LegOutsideBoundary, idx, "leg to waypoint leaves flight boundary"});

        if (wp.alt_agl_m < m.safety_margin_m)
            out.push_back({ViolationKind::GroundClearance, idx,
                           "target altitude " + std::to_string(wp.alt_agl_m) + " m below safety margin " +
                               std::to_string(m.safety_margin_m) + " m"});

        try {
            (void)geo::ground_height_at(r, wp.lat, wp.lon);
        } catch (const OutOfBounds&) {
            out.push_back({ViolationKind::RasterCoverage, idx, "waypoint outside elevation raster"});
        } catch (const NoData&) {
            out.push_back({ViolationKind::RasterCoverage, idx, "no elevation data at waypoint"});
        }
    }
    return out;
}

} // namespace agritag::mission
