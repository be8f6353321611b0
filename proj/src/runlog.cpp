#include "agritag/runlog.hpp"

#include "agritag/error.hpp"

#include <chrono>
#include <cmath>
#include <deque>
#include <set>
#include <thread>

namespace agritag::sim {

namespace {

using nlohmann::ordered_json;

struct KindName {
    EventKind kind;
    std::string_view name;
};

constexpr KindName kKinds[] = {
    {EventKind::RunStart, "run_start"},   {EventKind::StateTransition, "state_transition"},
    {EventKind::Pose, "pose"},            {EventKind::PacketTx, "packet_tx"},
    {EventKind::BridgeRx, "bridge_rx"},   {EventKind::RelayDrop, "relay_drop"},
    {EventKind::Publish, "publish"},      {EventKind::Expire, "expire"},
    {EventKind::Reject, "reject"},        {EventKind::Store, "store"},
};

using RecordKey = store::TelemetryRecord::Key;

RecordKey record_key(const ordered_json& d)
{
    auto type = tag::packet_type_from_string(d.at("type").get<std::string>());
    if (!type)
        throw CorruptLog("unknown packet type in log");
    return {d.at("tag_id").get<uint32_t>(), d.at("seq").get<uint64_t>(), *type};
}

std::string describe(const RecordKey& k)
{
    return "tag " + std::to_string(std::get<0>(k)) + " seq " + std::to_string(std::get<1>(k)) + " " +
           std::string(tag::to_string(std::get<2>(k)));
}

} // namespace

std::string_view to_string(EventKind k)
{
    for (const auto& kn : kKinds)
        if (kn.kind == k)
            return kn.name;
    return "?";
}

std::optional<EventKind> event_kind_from_string(std::string_view s)
{
    for (const auto& kn : kKinds)
        if (kn.name == s)
            return kn.kind;
    return std::nullopt;
}

void RunLog::add(double t_s, EventKind kind, ordered_json data)
{
    // Six decimals keep the text stable (0.3 rather than 0.30000000000000004).
    t_s = std::round(t_s * 1e6) / 1e6;
    if (!events_.empty() && t_s < events_.back().t_s)
        throw Error("run log time went backwards");
    events_.push_back({t_s, kind, std::move(data)});
}

std::string RunLog::to_jsonl() const
{
    std::string out;
    for (const auto& e : events_) {
        ordered_json line;
        line["t_s"] = e.t_s;
        line["kind"] = std::string(to_string(e.kind));
        for (const auto& [k, v] : e.data.items())
            line[k] = v;
        out += line.dump();
        out += '\n';
    }
    return out;
}

RunLog RunLog::parse(std::string_view text)
{
    RunLog log;
    size_t pos = 0;
    int line_no = 0;
    while (pos < text.size()) {
        size_t end = text.find('\n', pos);
        if (end == std::string_view::npos)
            end = text.size();
        auto line = text.substr(pos, end - pos);
        pos = end + 1;
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string_view::npos)
            continue;
        ordered_json j;
        try {
            j = ordered_json::parse(line);
        } catch (const ordered_json::parse_error&) {
            throw CorruptLog("line " + std::to_string(line_no) + ": malformed JSON");
        }
        if (!j.is_object() || !j.contains("t_s") || !j["t_s"].is_number() || !j.contains("kind") ||
            !j["kind"].is_string())
            throw CorruptLog("line " + std::to_string(line_no) + ": missing t_s or kind");
        auto kind = event_kind_from_string(j["kind"].get<std::string>());
        if (!kind)
            throw CorruptLog("line " + std::to_string(line_no) + ": unknown event kind");
        double t = j["t_s"].get<double>();
        if (!log.events_.empty() && t < log.events_.back().t_s)
            throw CorruptLog("line " + std::to_string(line_no) + ": timestamp decreases");
        j.erase("t_s");
        j.erase("kind");
        log.events_.push_back({t, *kind, std::move(j)});
    }
    return log;
}

RunStats tally(const RunLog& log)
{
    RunStats s;
    for (const auto& e : log.events()) {
        switch (e.kind) {
        case EventKind::PacketTx:
            ++s.tx;
            if (e.data.value("type", "") == "temperature")
                ++s.tx_temperature;
            else
                ++s.tx_activity;
            break;
        case EventKind::BridgeRx:
            if (e.data.value("duplicate", false))
                ++s.bridge_duplicates;
            else
                ++s.bridge_frames;
            break;
        case EventKind::RelayDrop:
            if (e.data.value("stage", "") == "tag_link")
                ++s.tag_link_lost;
            else
                ++s.gateway_dropped;
            break;
        case EventKind::Publish: ++s.published; break;
        case EventKind::Expire: ++s.expired; break;
        case EventKind::Reject:
            if (e.data.value("reason", "") == "unknown_tag")
                ++s.unknown_tag;
            else
                ++s.auth_failures;
            break;
        case EventKind::Store:
            if (e.data.value("inserted", false))
                ++s.store_inserted;
            else
                ++s.store_duplicates;
            break;
        default: break;
        }
    }
    return s;
}

std::vector<std::string> conservation_errors(const RunStats& s)
{
    std::vector<std::string> out;
    if (s.tx != s.bridge_frames + s.bridge_duplicates + s.tag_link_lost)
        out.push_back("tx != bridge rx + lost on tag link");
    if (s.bridge_frames != s.gateway_dropped + s.published + s.expired + s.unknown_tag + s.auth_failures)
        out.push_back("bridge frames != gateway drops + decrypt outcomes");
    if (s.published != s.store_inserted + s.store_duplicates)
        out.push_back("published != stored + store duplicates");
    return out;
}

std::vector<std::string> audit_integrity(const RunLog& log)
{
    std::vector<std::string> out;
    std::map<std::string, double> tx_time;   // nonce -> emission time
    std::set<RecordKey> emitted;
    std::map<std::string, double> rx_time;   // nonce -> bridge reception
    std::map<RecordKey, double> publish_time;

    for (const auto& e : log.events()) {
        const auto& d = e.data;
        switch (e.kind) {
        case EventKind::PacketTx:
            tx_time[d.at("nonce").get<std::string>()] = e.t_s;
            emitted.insert(record_key(d));
            break;
        case EventKind::BridgeRx: {
            auto nonce = d.at("nonce").get<std::string>();
            auto it = tx_time.find(nonce);
            if (it == tx_time.end())
                out.push_back("bridge received nonce " + nonce + " that no tag emitted");
            else if (e.t_s < it->second)
                out.push_back("bridge reception precedes emission of nonce " + nonce);
            if (!d.value("duplicate", false))
                rx_time.emplace(nonce, e.t_s);
            break;
        }
        case EventKind::Publish: {
            // Audit what was actually published, not the event's own summary fields.
            auto key = store::parse_message(d.at("message").get<std::string>()).key();
            auto nonce = d.at("nonce").get<std::string>();
            if (!emitted.contains(key))
                out.push_back("published " + describe(key) + " was never emitted");
            auto it = rx_time.find(nonce);
            if (it == rx_time.end())
                out.push_back("published nonce " + nonce + " never reached the bridge");
            else if (e.t_s < it->second)
                out.push_back("publish precedes bridge reception of nonce " + nonce);
            publish_time.emplace(key, e.t_s);
            break;
        }
        case EventKind::Store: {
            auto key = record_key(d);
            if (!emitted.contains(key))
                out.push_back("stored " + describe(key) + " was never emitted");
            auto it = publish_time.find(key);
            if (it == publish_time.end())
                out.push_back("stored " + describe(key) + " has no prior publish");
            else if (e.t_s < it->second)
                out.push_back("store precedes publish of " + describe(key));
            break;
        }
        default: break;
        }
    }
    return out;
}

std::vector<std::string> audit_safety(const RunLog& log, const mission::MissionParams& m)
{
    static const std::set<std::string> kHoldsClearance{"TAKEOFF", "CRUISE", "DESCEND", "LINGER", "CLIMB"};
    std::vector<std::string> out;
    for (const auto& e : log.events()) {
        if (e.kind != EventKind::Pose && e.kind != EventKind::StateTransition)
            continue;
        const auto& d = e.data;
        geo::GeoPoint p{d.at("lat").get<double>(), d.at("lon").get<double>(), d.at("alt_m_agl").get<double>()};
        std::string state = e.kind == EventKind::Pose ? d.at("state").get<std::string>() : d.at("to").get<std::string>();
        if (!geo::point_in_polygon(m.boundary, p))
            out.push_back("t=" + std::to_string(e.t_s) + ": drone outside boundary");
        if (kHoldsClearance.contains(state) && d.at("commanded_alt_m_agl").get<double>() < m.safety_margin_m)
            out.push_back("t=" + std::to_string(e.t_s) + ": altitude command below clearance margin");
    }
    return out;
}

ReplaySummary replay(const RunLog& log, const ReplayOptions& opt)
{
    ReplaySummary s;
    store::TelemetryStore rebuilt;
    std::map<RecordKey, std::deque<bool>> pending; // recomputed insert flags awaiting a store event
    double prev_t = log.empty() ? 0.0 : log.events().front().t_s;

    for (const auto& e : log.events()) {
        if (opt.speed > 0.0 && e.t_s > prev_t)
            std::this_thread::sleep_for(std::chrono::duration<double>((e.t_s - prev_t) / opt.speed));
        prev_t = e.t_s;
        if (opt.on_event)
            opt.on_event(e);
        ++s.events;

        if (e.kind == EventKind::Publish) {
            try {
                auto rec = store::parse_message(e.data.at("message").get<std::string>());
                pending[rec.key()].push_back(rebuilt.append(rec));
            } catch (const std::exception& ex) {
                s.divergences.push_back("t=" + std::to_string(e.t_s) + ": unparseable publish: " + ex.what());
            }
        } else if (e.kind == EventKind::Store) {
            RecordKey key;
            try {
                key = record_key(e.data);
            } catch (const std::exception& ex) {
                throw CorruptLog(std::string("malformed store event: ") + ex.what());
            }
            auto it = pending.find(key);
            if (it == pending.end() || it->second.empty()) {
                s.divergences.push_back("t=" + std::to_string(e.t_s) + ": store of " + describe(key) +
                                        " without a matching publish");
                continue;
            }
            bool expected = it->second.front();
            it->second.pop_front();
            if (expected != e.data.value("inserted", false))
                s.divergences.push_back("t=" + std::to_string(e.t_s) + ": store of " + describe(key) +
                                        " disagrees with recomputed insert");
        }
    }
    for (const auto& [key, q] : pending)
        if (!q.empty())
            s.divergences.push_back("publish of " + describe(key) + " never reached the store");

    s.stats = tally(log);
    s.store = rebuilt.snapshot();
    return s;
}

RunReport report_run(const RunLog& log, const std::vector<store::TelemetryRecord>& records)
{
    RunReport r;
    r.stats = tally(log);
    store::PipelineTotals totals{.published = r.stats.published,
                                 .expired = r.stats.expired,
                                 .unknown_tag = r.stats.unknown_tag,
                                 .auth_failures = r.stats.auth_failures,
                                 .dropped = r.stats.gateway_dropped + r.stats.tag_link_lost};
    r.summary = store::report(records, totals);

    for (const auto& e : log.events())
        if (e.kind == EventKind::RunStart && e.data.contains("tags"))
            for (const auto& id : e.data["tags"])
                r.tags.push_back(id.get<uint32_t>());
    for (const auto& [id, _] : r.summary.tags)
        if (std::find(r.tags.begin(), r.tags.end(), id) == r.tags.end())
            r.tags.push_back(id);

    for (uint32_t id : r.tags) {
        auto it = r.summary.tags.find(id);
        r.temperature_collected[id] = it != r.summary.tags.end() && it->second.temperature > 0;
        r.activity_collected[id] = it != r.summary.tags.end() && it->second.activity > 0;
    }

    r.conservation = conservation_errors(r.stats);
    if (r.summary.stored != r.stats.store_inserted)
        r.conservation.push_back("store size != inserted store events");
    return r;
}

std::string to_text(const RunReport& r)
{
    std::string out = store::to_text(r.summary);
    const auto& s = r.stats;
    out += "packets: tx=" + std::to_string(s.tx) + " (activity " + std::to_string(s.tx_activity) +
           ", temperature " + std::to_string(s.tx_temperature) + ") bridge_rx=" + std::to_string(s.bridge_frames) +
           " bridge_dup=" + std::to_string(s.bridge_duplicates) + " lost_tag_link=" +
           std::to_string(s.tag_link_lost) + " dropped_gateway=" + std::to_string(s.gateway_dropped) + "\n";
    out += "store: inserted=" + std::to_string(s.store_inserted) + " duplicates=" +
           std::to_string(s.store_duplicates) + "\n";
    for (uint32_t id : r.tags) {
        out += "verdict tag " + std::to_string(id) + ": temperature_collected=" +
               (r.temperature_collected.at(id) ? "true" : "false") +
               " activity_collected=" + (r.activity_collected.at(id) ? "true" : "false") + "\n";
    }
    out += r.conservation.empty() ? "accounting: consistent\n" : "accounting: INCONSISTENT\n";
    for (const auto& c : r.conservation)
        out += "  " + c + "\n";
    return out;
}

std::string to_json(const RunReport& r)
{
    ordered_json j;
    j["stored"] = r.summary.stored;
    ordered_json totals;
    totals["published"] = r.summary.totals.published;
    totals["expired"] = r.summary.totals.expired;
    totals["unknown_tag"] = r.summary.totals.unknown_tag;
    totals["auth_failures"] = r.summary.totals.auth_failures;
    totals["dropped"] = r.summary.totals.dropped;
    j["totals"] = totals;

    ordered_json tags = ordered_json::array();
    for (uint32_t id : r.tags) {
        ordered_json t;
        t["tag_id"] = id;
        auto it = r.summary.tags.find(id);
        store::TagSummary ts = it != r.summary.tags.end() ? it->second : store::TagSummary{};
        t["activity"] = ts.activity;
        t["temperature"] = ts.temperature;
        if (it != r.summary.tags.end()) {
            t["first_seen_ms"] = ts.first_seen_ms;
            t["last_seen_ms"] = ts.last_seen_ms;
        }
        if (ts.temp) {
            t["temp_c"] = {{"min", ts.temp->min}, {"mean", ts.temp->mean}, {"max", ts.temp->max}};
        }
        t["temperature_collected"] = r.temperature_collected.at(id);
        t["activity_collected"] = r.activity_collected.at(id);
        tags.push_back(std::move(t));
    }
    j["tags"] = std::move(tags);

    const auto& s = r.stats;
    j["packets"] = {{"tx", s.tx},
                    {"tx_activity", s.tx_activity},
                    {"tx_temperature", s.tx_temperature},
                    {"bridge_rx", s.bridge_frames},
                    {"bridge_duplicates", s.bridge_duplicates},
                    {"lost_tag_link", s.tag_link_lost},
                    {"dropped_gateway", s.gateway_dropped},
                    {"store_inserted", s.store_inserted},
                    {"store_duplicates", s.store_duplicates}};
    j["conservation_errors"] = r.conservation;
    return j.dump(2);
}

} // namespace agritag::sim
