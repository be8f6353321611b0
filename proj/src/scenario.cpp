#include "agritag/scenario.hpp"

#include "agritag/error.hpp"

#include <yaml-cpp/yaml.h>

#include <algorithm>
#include <cmath>

namespace agritag::sim {

namespace {

std::string where(const YAML::Node& n)
{
    return n.Mark().line >= 0 ? " (line " + std::to_string(n.Mark().line + 1) + ")" : "";
}

void reject_unknown(const YAML::Node& map, std::initializer_list<std::string_view> allowed, const char* ctx)
{
    if (!map.IsMap())
        throw ConfigError(std::string("'") + ctx + "' must be a mapping" + where(map));
    for (const auto& kv : map) {
        auto key = kv.first.as<std::string>();
        if (std::find(allowed.begin(), allowed.end(), key) == allowed.end())
            throw ConfigError("unknown key '" + key + "' in " + ctx + where(kv.first));
    }
}

template <typename T>
T as(const YAML::Node& n, const char* key)
{
    try {
        return n.as<T>();
    } catch (const YAML::Exception&) {
        throw ConfigError(std::string("bad value for '") + key + "'" + where(n));
    }
}

template <typename T>
void read_opt(const YAML::Node& parent, const char* key, T& out)
{
    if (auto n = parent[key])
        out = as<T>(n, key);
}

geo::GeoPoint read_point(const YAML::Node& n, const char* ctx, bool with_alt)
{
    if (with_alt)
        reject_unknown(n, {"lat", "lon", "alt_m_agl"}, ctx);
    else
        reject_unknown(n, {"lat", "lon"}, ctx);
    if (!n["lat"] || !n["lon"])
        throw ConfigError(std::string(ctx) + " needs lat and lon" + where(n));
    geo::GeoPoint p;
    p.lat = as<double>(n["lat"], "lat");
    p.lon = as<double>(n["lon"], "lon");
    if (with_alt)
        read_opt(n, "alt_m_agl", p.alt_agl_m);
    return p;
}

void read_radio(const YAML::Node& n, rf::RadioParams& r, const char* ctx,
                std::initializer_list<std::string_view> extra = {})
{
    std::vector<std::string_view> allowed{"eirp_dbm", "rx_gain_dbi", "freq_hz", "sensitivity_dbm",
                                          "noise_floor_dbm"};
    allowed.insert(allowed.end(), extra.begin(), extra.end());
    if (!n.IsMap())
        throw ConfigError(std::string("'") + ctx + "' must be a mapping" + where(n));
    for (const auto& kv : n) {
        auto key = kv.first.as<std::string>();
        if (std::find(allowed.begin(), allowed.end(), key) == allowed.end())
            throw ConfigError("unknown key '" + key + "' in " + ctx + where(kv.first));
    }
    read_opt(n, "eirp_dbm", r.eirp_dbm);
    read_opt(n, "rx_gain_dbi", r.rx_gain_dbi);
    read_opt(n, "freq_hz", r.freq_hz);
    read_opt(n, "sensitivity_dbm", r.sensitivity_dbm);
    read_opt(n, "noise_floor_dbm", r.noise_floor_dbm);
}

tag::TagConfig read_tag(const YAML::Node& n)
{
    reject_unknown(n,
                   {"tag_id", "key", "pos", "harvest_efficiency", "activation_energy_j", "tx_cost_j",
                    "adv_interval_s", "temp_every_n", "deactivation_fraction", "rx_gain_offset_db"},
                   "tag");
    if (!n["tag_id"] || !n["key"] || !n["pos"])
        throw ConfigError("tag needs tag_id, key and pos" + where(n));
    tag::TagConfig t;
    t.tag_id = as<uint32_t>(n["tag_id"], "tag_id");
    try {
        t.key = crypto::key_from_hex(as<std::string>(n["key"], "key"));
    } catch (const ParseError& e) {
        throw ConfigError(std::string("tag key: ") + e.what() + where(n["key"]));
    }
    t.pos = read_point(n["pos"], "tag pos", true);
    read_opt(n, "harvest_efficiency", t.harvest_efficiency);
    read_opt(n, "activation_energy_j", t.activation_energy_j);
    read_opt(n, "tx_cost_j", t.tx_cost_j);
    read_opt(n, "adv_interval_s", t.adv_interval_s);
    read_opt(n, "temp_every_n", t.temp_every_n);
    read_opt(n, "deactivation_fraction", t.deactivation_fraction);
    read_opt(n, "rx_gain_offset_db", t.rx_gain_offset_db);
    return t;
}

PhoneMode phone_mode_from(std::string_view s, const YAML::Node& n)
{
    if (s == "in_payload")
        return PhoneMode::InPayload;
    if (s == "on_top")
        return PhoneMode::OnTop;
    if (s == "on_table")
        return PhoneMode::OnTable;
    if (s == "default")
        return PhoneMode::Default;
    throw ConfigError("unknown phone_mode '" + std::string(s) + "'" + where(n));
}

} // namespace

double AmbientSchedule::at(double t_s) const
{
    if (points.empty())
        return 0.0;
    if (t_s <= points.front().t_s)
        return points.front().temp_c;
    if (t_s >= points.back().t_s)
        return points.back().temp_c;
    auto hi = std::upper_bound(points.begin(), points.end(), t_s,
                               [](double t, const Point& p) { return t < p.t_s; });
    auto lo = hi - 1;
    double f = (t_s - lo->t_s) / (hi->t_s - lo->t_s);
    return lo->temp_c + (hi->temp_c - lo->temp_c) * f;
}

std::string_view to_string(PhoneMode m)
{
    switch (m) {
    case PhoneMode::InPayload: return "in_payload";
    case PhoneMode::OnTop: return "on_top";
    case PhoneMode::OnTable: return "on_table";
    case PhoneMode::Default: return "default";
    }
    return "?";
}

std::string_view to_string(RunMode m)
{
    switch (m) {
    case RunMode::Flight: return "flight";
    case RunMode::TestStand: return "test_stand";
    case RunMode::Scripted: return "scripted";
    }
    return "?";
}

RunMode mode_of(const ScenarioConfig& s)
{
    if (s.armed_override)
        return RunMode::TestStand;
    if (!s.manual_path.empty())
        return RunMode::Scripted;
    return RunMode::Flight;
}

std::array<double, 3> ScenarioConfig::phone_offset() const
{
    if (phone_offset_m)
        return *phone_offset_m;
    switch (phone_mode) {
    case PhoneMode::InPayload:
    case PhoneMode::Default: return {0.0, 0.0, -kInPayloadOffsetM};
    case PhoneMode::OnTop: return {0.0, 0.0, kOnTopOffsetM};
    case PhoneMode::OnTable: return {on_table_dist_m, 0.0, 0.0};
    }
    return {0.0, 0.0, 0.0};
}

void validate(const ScenarioConfig& s)
{
    try {
        if (!(s.duration_s > 0.0))
            throw ConfigError("duration_s must be positive");
        if (!(s.dt_s > 0.0))
            throw ConfigError("dt_s must be positive");
        std::vector<uint32_t> ids;
        for (const auto& t : s.tags) {
            tag::validate(t);
            ids.push_back(t.tag_id);
        }
        std::sort(ids.begin(), ids.end());
        if (std::adjacent_find(ids.begin(), ids.end()) != ids.end())
            throw ConfigError("duplicate tag_id");
        rf::validate(s.drone_radios);
        rf::validate(s.tag_radio);
        rf::validate(s.uplink.radio);
        if (!(s.uplink.latency_s >= 0.0))
            throw ConfigError("uplink latency must be non-negative");
        rf::InterferenceSource probe{.pos = {},
                                     .active = false,
                                     .power_dbm_at_ref = s.interference.power_dbm_at_ref,
                                     .ref_m = s.interference.ref_m,
                                     .decay_exp = s.interference.decay_exp};
        rf::validate(probe);
        if (s.ambient_c.points.empty())
            throw ConfigError("ambient schedule is empty");
        for (size_t i = 1; i < s.ambient_c.points.size(); ++i)
            if (!(s.ambient_c.points[i].t_s > s.ambient_c.points[i - 1].t_s))
                throw ConfigError("ambient schedule times must increase");
        for (size_t i = 1; i < s.manual_path.size(); ++i)
            if (!(s.manual_path[i].t_s > s.manual_path[i - 1].t_s))
                throw ConfigError("manual_path times must increase");
        geo::validate(s.stand);
        geo::validate(s.home);
        if (!(s.on_table_dist_m >= 0.0))
            throw ConfigError("on_table_dist_m must be non-negative");
    } catch (const InvariantViolation& e) {
        throw ConfigError(e.what());
    }
}

ScenarioConfig load_scenario(std::string_view yaml_text)
{
    YAML::Node root;
    try {
        root = YAML::Load(std::string(yaml_text));
    } catch (const YAML::Exception& e) {
        throw ConfigError("scenario YAML: " + e.msg + (e.mark.line >= 0 ? " (line " + std::to_string(e.mark.line + 1) + ")" : ""));
    }
    reject_unknown(root,
                   {"name", "tags", "ambient_c", "drone_radios", "tag_radio", "uplink", "interference",
                    "phone_mode", "on_table_dist_m", "phone_offset_m", "armed_override", "stand", "home",
                    "manual_path", "duration_s", "seed", "dt_s", "bridge_id", "gateway_id", "expiry_window_s",
                    "dedup_window_s", "flight"},
                   "scenario");

    ScenarioConfig s;
    read_opt(root, "name", s.name);
    read_opt(root, "duration_s", s.duration_s);
    read_opt(root, "seed", s.seed);
    read_opt(root, "dt_s", s.dt_s);
    read_opt(root, "bridge_id", s.bridge_id);
    read_opt(root, "gateway_id", s.gateway_id);
    read_opt(root, "expiry_window_s", s.expiry_window_s);
    read_opt(root, "dedup_window_s", s.dedup_window_s);
    read_opt(root, "on_table_dist_m", s.on_table_dist_m);

    if (auto tags = root["tags"]) {
        if (!tags.IsSequence())
            throw ConfigError("'tags' must be a list" + where(tags));
        for (const auto& t : tags)
            s.tags.push_back(read_tag(t));
    }

    if (auto amb = root["ambient_c"]) {
        s.ambient_c.points.clear();
        if (amb.IsScalar()) {
            s.ambient_c.points.push_back({0.0, as<double>(amb, "ambient_c")});
        } else if (amb.IsSequence()) {
            for (const auto& p : amb) {
                reject_unknown(p, {"t_s", "c"}, "ambient_c");
                if (!p["t_s"] || !p["c"])
                    throw ConfigError("ambient_c points need t_s and c" + where(p));
                s.ambient_c.points.push_back({as<double>(p["t_s"], "t_s"), as<double>(p["c"], "c")});
            }
        } else {
            throw ConfigError("'ambient_c' must be a number or a list" + where(amb));
        }
    }

    if (auto n = root["drone_radios"])
        read_radio(n, s.drone_radios, "drone_radios");
    if (auto n = root["tag_radio"])
        read_radio(n, s.tag_radio, "tag_radio");
    if (auto n = root["uplink"]) {
        read_radio(n, s.uplink.radio, "uplink", {"distance_m", "latency_s", "slope_per_db", "snr50_db"});
        read_opt(n, "distance_m", s.uplink.distance_m);
        read_opt(n, "latency_s", s.uplink.latency_s);
        read_opt(n, "slope_per_db", s.uplink.curve.slope_per_db);
        read_opt(n, "snr50_db", s.uplink.curve.snr50_db);
    }

    if (auto n = root["interference"]) {
        reject_unknown(n, {"enabled", "power_dbm_at_ref", "ref_m", "decay_exp", "target"}, "interference");
        read_opt(n, "enabled", s.interference.enabled);
        read_opt(n, "power_dbm_at_ref", s.interference.power_dbm_at_ref);
        read_opt(n, "ref_m", s.interference.ref_m);
        read_opt(n, "decay_exp", s.interference.decay_exp);
        if (auto t = n["target"]) {
            auto v = as<std::string>(t, "target");
            if (v == "gateway")
                s.interference.target = InterferenceTarget::Gateway;
            else if (v == "tag_link")
                s.interference.target = InterferenceTarget::TagLink;
            else
                throw ConfigError("interference target must be gateway or tag_link" + where(t));
        }
    }

    if (auto n = root["phone_mode"]) {
        if (n.IsScalar()) {
            s.phone_mode = phone_mode_from(as<std::string>(n, "phone_mode"), n);
        } else if (n.IsMap() && n["on_table"]) {
            reject_unknown(n, {"on_table"}, "phone_mode");
            s.phone_mode = PhoneMode::OnTable;
            s.on_table_dist_m = as<double>(n["on_table"], "on_table");
        } else {
            throw ConfigError("phone_mode must be a mode name or {on_table: <dist_m>}" + where(n));
        }
    }
    if (auto n = root["phone_offset_m"]) {
        auto v = as<std::vector<double>>(n, "phone_offset_m");
        if (v.size() != 3)
            throw ConfigError("phone_offset_m must be [east, north, up]" + where(n));
        s.phone_offset_m = std::array<double, 3>{v[0], v[1], v[2]};
    }

    if (auto n = root["armed_override"]; n && !n.IsNull())
        s.armed_override = as<bool>(n, "armed_override");
    if (auto n = root["stand"])
        s.stand = read_point(n, "stand", true);
    if (auto n = root["home"])
        s.home = read_point(n, "home", false);
    if (auto n = root["manual_path"]) {
        if (!n.IsSequence())
            throw ConfigError("'manual_path' must be a list" + where(n));
        for (const auto& p : n) {
            reject_unknown(p, {"t_s", "lat", "lon", "alt_m_agl"}, "manual_path");
            if (!p["t_s"] || !p["lat"] || !p["lon"])
                throw ConfigError("manual_path points need t_s, lat and lon" + where(p));
            ScriptPoint sp{as<double>(p["t_s"], "t_s"), {}};
            sp.pos.lat = as<double>(p["lat"], "lat");
            sp.pos.lon = as<double>(p["lon"], "lon");
            read_opt(p, "alt_m_agl", sp.pos.alt_agl_m);
            s.manual_path.push_back(sp);
        }
    }

    if (auto n = root["flight"]) {
        reject_unknown(n, {"horizontal_speed_mps", "vertical_speed_mps", "arrival_tolerance_m", "battery"},
                       "flight");
        read_opt(n, "horizontal_speed_mps", s.flight.horizontal_speed_mps);
        read_opt(n, "vertical_speed_mps", s.flight.vertical_speed_mps);
        read_opt(n, "arrival_tolerance_m", s.flight.arrival_tolerance_m);
        if (auto b = n["battery"]) {
            reject_unknown(b, {"ground", "hover", "translate", "climb"}, "flight.battery");
            read_opt(b, "ground", s.flight.battery.ground);
            read_opt(b, "hover", s.flight.battery.hover);
            read_opt(b, "translate", s.flight.battery.translate);
            read_opt(b, "climb", s.flight.battery.climb);
        }
    }

    validate(s);
    return s;
}

} // namespace agritag::sim
