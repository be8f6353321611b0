#pragma once

#include "agritag/tag.hpp"

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

namespace agritag::store {

struct TelemetryRecord {
    int64_t ts_ms = 0;
    uint32_t tag_id = 0;
    tag::PacketType type = tag::PacketType::Activity;
    uint64_t seq = 0;
    std::optional<double> temp_c;
    std::string gateway_id;
    std::string bridge_id;

    using Key = std::tuple<uint32_t, uint64_t, tag::PacketType>;
    Key key() const { return {tag_id, seq, type}; }

    bool operator==(const TelemetryRecord&) const = default;
};

/// Strict parse of a serialized PublishedMessage. Throws SchemaError naming the offending key.
TelemetryRecord parse_message(std::string_view bytes);

/// One JSON Lines row (no trailing newline), same key order as the published message.
std::string to_json_line(const TelemetryRecord& r);

struct QueryFilter {
    std::optional<uint32_t> tag_id;
    std::optional<tag::PacketType> type;
    int64_t t0_ms = std::numeric_limits<int64_t>::min();
    int64_t t1_ms = std::numeric_limits<int64_t>::max();
};

/// Idempotent record store keyed by (tag_id, seq, type). Single writer, concurrent readers.
/// When a persistence path is given, each inserted record is appended to it as a JSON line.
class TelemetryStore {
public:
    explicit TelemetryStore(size_t capacity = std::numeric_limits<size_t>::max());
    TelemetryStore(size_t capacity, const std::filesystem::path& persist_path);

    TelemetryStore(const TelemetryStore&) = delete;
    TelemetryStore& operator=(const TelemetryStore&) = delete;

    /// True if inserted, false for a duplicate key. Throws StorageFull at capacity.
    bool append(const TelemetryRecord& rec);

    /// Matching records ordered by ts_ms, then (tag_id, seq, type). Throws InvariantViolation if t0 > t1.
    std::vector<TelemetryRecord> query(const QueryFilter& f) const;

    size_t size() const;
    /// Records in insertion order.
    std::vector<TelemetryRecord> snapshot() const;

private:
    mutable std::shared_mutex mu_;
    size_t capacity_;
    std::vector<TelemetryRecord> records_;
    std::set<TelemetryRecord::Key> keys_;
    std::optional<std::ofstream> out_;
};

/// Parses a JSON Lines persistence file into records (in file order).
std::vector<TelemetryRecord> load_jsonl(std::string_view text);

struct PipelineTotals {
    uint64_t published = 0;
    uint64_t expired = 0;
    uint64_t unknown_tag = 0;
    uint64_t auth_failures = 0;
    uint64_t dropped = 0;
};

struct TempStats {
    double min = 0.0;
    double mean = 0.0;
    double max = 0.0;
};

struct TagSummary {
    uint64_t activity = 0;
    uint64_t temperature = 0;
    int64_t first_seen_ms = 0;
    int64_t last_seen_ms = 0;
    std::optional<TempStats> temp;
};

struct ReportSummary {
    std::map<uint32_t, TagSummary> tags;
    PipelineTotals totals;
    uint64_t stored = 0;
};

ReportSummary report(const TelemetryStore& store, const PipelineTotals& totals);
ReportSummary report(const std::vector<TelemetryRecord>& records, const PipelineTotals& totals);

std::string to_text(const ReportSummary& s);

} // namespace agritag::store
