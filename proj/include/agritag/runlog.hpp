#pragma once

#include "agritag/mission.hpp"
#include "agritag/store.hpp"

#include "json.hpp"

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace agritag::sim {

enum class EventKind {
    RunStart,
    StateTransition,
    Pose,
    PacketTx,
    BridgeRx,
    RelayDrop,
    Publish,
    Expire,
    Reject,
    Store,
};

std::string_view to_string(EventKind k);
std::optional<EventKind> event_kind_from_string(std::string_view s);

struct Event {
    double t_s = 0.0;
    EventKind kind = EventKind::RunStart;
    nlohmann::ordered_json data = nlohmann::ordered_json::object();
};

/// Ordered simulation event log, persisted as JSON Lines
/// (`{"t_s":..,"kind":..,<payload fields>}` per line).
class RunLog {
public:
    void add(double t_s, EventKind kind, nlohmann::ordered_json data);

    const std::vector<Event>& events() const noexcept { return events_; }
    size_t size() const noexcept { return events_.size(); }
    bool empty() const noexcept { return events_.empty(); }

    std::string to_jsonl() const;

    /// Throws CorruptLog for malformed lines, unknown kinds or decreasing timestamps.
    static RunLog parse(std::string_view text);

private:
    std::vector<Event> events_;
};

struct RunStats {
    uint64_t tx = 0;
    uint64_t tx_activity = 0;
    uint64_t tx_temperature = 0;
    uint64_t tag_link_lost = 0;
    uint64_t bridge_frames = 0;
    uint64_t bridge_duplicates = 0;
    uint64_t gateway_dropped = 0;
    uint64_t published = 0;
    uint64_t expired = 0;
    uint64_t unknown_tag = 0;
    uint64_t auth_failures = 0;
    uint64_t store_inserted = 0;
    uint64_t store_duplicates = 0;

    bool operator==(const RunStats&) const = default;
};

RunStats tally(const RunLog& log);

/// Checks tx = rx + lost, frames = dropped + decrypt outcomes, publish = store + duplicates.
std::vector<std::string> conservation_errors(const RunStats& s);

/// End-to-end audit: every publish/store refers to a packet some tag emitted, downstream
/// events never precede their upstream event, and every store has a prior publish.
std::vector<std::string> audit_integrity(const RunLog& log);

/// Post-hoc safety check of logged poses against the mission fence and clearance margin.
std::vector<std::string> audit_safety(const RunLog& log, const mission::MissionParams& m);

struct ReplayOptions {
    double speed = 0.0; // 0 replays instantly, otherwise simulated seconds per wall second
    std::function<void(const Event&)> on_event;
};

struct ReplaySummary {
    size_t events = 0;
    RunStats stats;
    std::vector<store::TelemetryRecord> store;
    std::vector<std::string> divergences;

    bool clean() const { return divergences.empty(); }
};

/// Re-emits events and rebuilds the store from `publish` events, flagging any
/// `store` event that disagrees with the recomputation.
ReplaySummary replay(const RunLog& log, const ReplayOptions& opt = {});

struct RunReport {
    store::ReportSummary summary;
    std::vector<uint32_t> tags;
    std::map<uint32_t, bool> temperature_collected;
    std::map<uint32_t, bool> activity_collected;
    RunStats stats;
    std::vector<std::string> conservation;
};

RunReport report_run(const RunLog& log, const std::vector<store::TelemetryRecord>& store);
std::string to_text(const RunReport& r);
std::string to_json(const RunReport& r);

} // namespace agritag::sim
