#include "agritag/store.hpp"

#include "agritag/error.hpp"

#include "json.hpp"

#include <algorithm>
#include <cstdio>
#include <mutex>

namespace agritag::store {

namespace {

using nlohmann::json;

const json& field(const json& obj, const char* key)
{
    auto it = obj.find(key);
    if (it == obj.end())
        throw SchemaError("missing required field", key);
    return *it;
}

TelemetryRecord record_from_json(const json& j)
{
    static constexpr std::string_view kAllowed[] = {"ts_ms", "gateway_id", "bridge_id", "tag_id",
                                                    "type",  "seq",        "temp_c"};
    if (!j.is_object())
        throw SchemaError("message must be a JSON object", "");
    for (const auto& [k, v] : j.items())
        if (std::find(std::begin(kAllowed), std::end(kAllowed), k) == std::end(kAllowed))
            throw SchemaError("unknown field", k);

    TelemetryRecord r;
    const json& ts = field(j, "ts_ms");
    if (!ts.is_number_integer())
        throw SchemaError("must be an integer", "ts_ms");
    r.ts_ms = ts.get<int64_t>();
    if (r.ts_ms < 0)
        throw SchemaError("must be non-negative", "ts_ms");

    const json& gw = field(j, "gateway_id");
    if (!gw.is_string())
        throw SchemaError("must be a string", "gateway_id");
    r.gateway_id = gw.get<std::string>();

    const json& br = field(j, "bridge_id");
    if (!br.is_string())
        throw SchemaError("must be a string", "bridge_id");
    r.bridge_id = br.get<std::string>();

    const json& id = field(j, "tag_id");
    if (!id.is_number_unsigned() || id.get<uint64_t>() > UINT32_MAX)
        throw SchemaError("must be an unsigned 32-bit integer", "tag_id");
    r.tag_id = id.get<uint32_t>();

    const json& type = field(j, "type");
    if (!type.is_string())
        throw SchemaError("must be a string", "type");
    auto t = tag::packet_type_from_string(type.get<std::string>());
    if (!t)
        throw SchemaError("must be 'activity' or 'temperature'", "type");
    r.type = *t;

    const json& seq = field(j, "seq");
    if (!seq.is_number_unsigned())
        throw SchemaError("must be an unsigned integer", "seq");
    r.seq = seq.get<uint64_t>();

    auto temp = j.find("temp_c");
    if (r.type == tag::PacketType::Temperature) {
        if (temp == j.end())
            throw SchemaError("temperature message without reading", "temp_c");
        if (!temp->is_number())
            throw SchemaError("must be a number", "temp_c");
        r.temp_c = temp->get<double>();
    } else if (temp != j.end()) {
        throw SchemaError("activity message must not carry a reading", "temp_c");
    }
    return r;
}

} // namespace

TelemetryRecord parse_message(std::string_view bytes)
{
    json j;
    try {
        j = json::parse(bytes);
    } catch (const json::parse_error& e) {
        throw SchemaError("malformed JSON at byte " + std::to_string(e.byte), "");
    }
    return record_from_json(j);
}

std::string to_json_line(const TelemetryRecord& r)
{
    nlohmann::ordered_json j;
    j["ts_ms"] = r.ts_ms;
    j["gateway_id"] = r.gateway_id;
    j["bridge_id"] = r.bridge_id;
    j["tag_id"] = r.tag_id;
    j["type"] = std::string(tag::to_string(r.type));
    j["seq"] = r.seq;
    if (r.temp_c)
        j["temp_c"] = *r.temp_c;
    return j.dump();
}

TelemetryStore::TelemetryStore(size_t capacity) : capacity_(capacity) {}

TelemetryStore::TelemetryStore(size_t capacity, const std::filesystem::path& persist_path)
    : capacity_(capacity), out_(std::in_place, persist_path, std::ios::out | std::ios::trunc)
{
    if (!*out_)
        throw Error("cannot open store file " + persist_path.string());
}

bool TelemetryStore::append(const TelemetryRecord& rec)
{
    if ((rec.type == tag::PacketType::Temperature) != rec.temp_c.has_value())
        throw InvariantViolation("temperature reading present iff record type is temperature");
    std::unique_lock lock(mu_);
    if (keys_.contains(rec.key()))
        return false;
    if (records_.size() >= capacity_)
        throw StorageFull("store capacity of " + std::to_string(capacity_) + " records reached");
    keys_.insert(rec.key());
    records_.push_back(rec);
    if (out_) {
        *out_ << to_json_line(rec) << '\n';
        out_->flush();
    }
    return true;
}

std::vector<TelemetryRecord> TelemetryStore::query(const QueryFilter& f) const
{
    if (f.t0_ms > f.t1_ms)
        throw InvariantViolation("query time range is inverted");
    std::vector<TelemetryRecord> out;
    {
        std::shared_lock lock(mu_);
        for (const auto& r : records_) {
            if (f.tag_id && r.tag_id != *f.tag_id)
                continue;
            if (f.type && r.type != *f.type)
                continue;
            if (r.ts_ms < f.t0_ms || r.ts_ms > f.t1_ms)
                continue;
            out.push_back(r);
        }
    }
    std::sort(out.begin(), out.end(), [](const TelemetryRecord& a, const TelemetryRecord& b) {
        return std::tie(a.ts_ms, a.tag_id, a.seq, a.type) < std::tie(b.ts_ms, b.tag_id, b.seq, b.type);
    });
    return out;
}

size_t TelemetryStore::size() const
{
    std::shared_lock lock(mu_);
    return records_.size();
}

std::vector<TelemetryRecord> TelemetryStore::snapshot() const
{
    std::shared_lock lock(mu_);
    return records_;
}

std::vector<TelemetryRecord> load_jsonl(std::string_view text)
{
    std::vector<TelemetryRecord> out;
    size_t pos = 0;
    while (pos < text.size()) {
        size_t end = text.find('\n', pos);
        if (end == std::string_view::npos)
            end = text.size();
        auto line = text.substr(pos, end - pos);
        pos = end + 1;
        if (line.find_first_not_of(" \t\r") == std::string_view::npos)
            continue;
        out.push_back(parse_message(line));
    }
    return out;
}

ReportSummary report(const std::vector<TelemetryRecord>& records, const PipelineTotals& totals)
{
    ReportSummary s;
    s.totals = totals;
    s.stored = records.size();
    std::map<uint32_t, double> temp_sum;
    for (const auto& r : records) {
        auto [it, fresh] = s.tags.try_emplace(r.tag_id);
        TagSummary& t = it->second;
        if (fresh) {
            t.first_seen_ms = r.ts_ms;
            t.last_seen_ms = r.ts_ms;
        }
        t.first_seen_ms = std::min(t.first_seen_ms, r.ts_ms);
        t.last_seen_ms = std::max(t.last_seen_ms, r.ts_ms);
        if (r.type == tag::PacketType::Activity) {
            ++t.activity;
            continue;
        }
        ++t.temperature;
        double c = *r.temp_c;
        if (!t.temp) {
            t.temp = TempStats{c, 0.0, c};
        } else {
            t.temp->min = std::min(t.temp->min, c);
            t.temp->max = std::max(t.temp->max, c);
        }
        temp_sum[r.tag_id] += c;
    }
    for (auto& [id, t] : s.tags)
        if (t.temp)
            t.temp->mean = temp_sum[id] / static_cast<double>(t.temperature);
    return s;
}

ReportSummary report(const TelemetryStore& store, const PipelineTotals& totals)
{
    return report(store.snapshot(), totals);
}

std::string to_text(const ReportSummary& s)
{
    std::string out;
    char buf[256];
    std::snprintf(buf, sizeof(buf), "stored records: %llu\n", static_cast<unsigned long long>(s.stored));
    out += buf;
    std::snprintf(buf, sizeof(buf),
                  "pipeline: published=%llu expired=%llu unknown_tag=%llu auth_failures=%llu dropped=%llu\n",
                  static_cast<unsigned long long>(s.totals.published),
                  static_cast<unsigned long long>(s.totals.expired),
                  static_cast<unsigned long long>(s.totals.unknown_tag),
                  static_cast<unsigned long long>(s.totals.auth_failures),
                  static_cast<unsigned long long>(s.totals.dropped));
    out += buf;
    for (const auto& [id, t] : s.tags) {
        std::snprintf(buf, sizeof(buf), "tag %u: activity=%llu temperature=%llu seen=[%lld, %lld] ms", id,
                      static_cast<unsigned long long>(t.activity), static_cast<unsigned long long>(t.temperature),
                      static_cast<long long>(t.first_seen_ms), static_cast<long long>(t.last_seen_ms));
        out += buf;
        if (t.temp) {
            std::snprintf(buf, sizeof(buf), " temp_c min=%.1f mean=%.2f max=%.1f", t.temp->min, t.temp->mean,
                          t.temp->max);
            out += buf;
        }
        out += '\n';
    }
    return out;
}

} // namespace agritag::store
