#include "doctest.h"
#include "fake_broker.hpp"

#include "agritag/engine.hpp"
#include "agritag/error.hpp"
#include "agritag/mqtt.hpp"
#include "agritag/runlog.hpp"
#include "agritag/scenario.hpp"

#include <fstream>
#include <sstream>

using namespace agritag;
using namespace agritag::sim;

namespace {

std::string slurp(const std::string& name)
{
    std::ifstream in(std::string(AGRITAG_SCENARIO_DIR) + "/" + name, std::ios::binary);
    REQUIRE(in.good());
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

ScenarioConfig scenario(const std::string& name) { return load_scenario(slurp(name + ".yaml")); }

struct World {
    mission::MissionParams mission = mission::load_mission(slurp("box_mission.yaml"));
    geo::ElevationRaster dem = geo::load_raster(slurp("field_dem.asc"));
};

size_t count_kind(const RunLog& log, EventKind k)
{
    size_t n = 0;
    for (const auto& e : log.events())
        n += e.kind == k;
    return n;
}

std::string drop_first_line_of_kind(const std::string& jsonl, const std::string& kind)
{
    std::istringstream in(jsonl);
    std::string line, out;
    bool dropped = false;
    while (std::getline(in, line)) {
        if (!dropped && line.find("\"kind\":\"" + kind + "\"") != std::string::npos) {
            dropped = true;
            continue;
        }
        out += line + "\n";
    }
    return out;
}

} // namespace

TEST_CASE("scenario loader")
{
    auto s = scenario("stand_table");
    CHECK(s.tags.size() == 3);
    CHECK(s.phone_mode == PhoneMode::OnTable);
    CHECK(s.on_table_dist_m == 3.0);
    CHECK(mode_of(s) == RunMode::TestStand);
    CHECK(s.phone_offset()[0] == 3.0);

    auto m = scenario("manual_flight_top");
    CHECK(mode_of(m) == RunMode::Scripted);
    CHECK(m.ambient_c.at(90.0) == doctest::Approx(25.0));
    CHECK(m.ambient_c.at(500.0) == doctest::Approx(26.0));
    CHECK(m.phone_offset()[2] == doctest::Approx(kOnTopOffsetM));

    auto a = scenario("autonomous");
    CHECK(mode_of(a) == RunMode::Flight);
    CHECK_FALSE(a.interference.enabled);

    CHECK_THROWS_AS(load_scenario("name: x\nbogus: 1\n"), ConfigError);
    CHECK_THROWS_AS(load_scenario("duration_s: -1\n"), ConfigError);
    CHECK_THROWS_AS(load_scenario("phone_mode: pocket\n"), ConfigError);
    CHECK_THROWS_AS(load_scenario("tags:\n  - {tag_id: 1, key: \"00\", pos: {lat: 0, lon: 0}}\n"), ConfigError);
    CHECK_THROWS_AS(load_scenario("name: [unterminated\n"), ConfigError);
}

TEST_CASE("zero tags leaves only flight events and an empty store")
{
    World w;
    auto s = scenario("autonomous");
    s.tags.clear();
    auto r = run(s, &w.mission, &w.dem);
    CHECK(r.store->size() == 0);
    CHECK(count_kind(r.log, EventKind::StateTransition) > 0);
    for (const auto& e : r.log.events())
        CHECK((e.kind == EventKind::StateTransition || e.kind == EventKind::Pose || e.kind == EventKind::RunStart));
}

TEST_CASE("autonomous flight completes and collects")
{
    World w;
    auto r = run(scenario("autonomous"), &w.mission, &w.dem);
    REQUIRE(r.final_drone);
    CHECK(r.final_drone->state == mission::FlightState::Done);
    auto rep = report_run(r.log, r.store->snapshot());
    for (auto id : rep.tags)
        CHECK(rep.temperature_collected[id]);
    CHECK(rep.conservation.empty());
    CHECK(audit_integrity(r.log).empty());
    CHECK(audit_safety(r.log, w.mission).empty());
}

TEST_CASE("flight needs a valid mission")
{
    World w;
    auto s = scenario("autonomous");
    CHECK_THROWS_AS(run(s, nullptr, nullptr), ConfigError);
    s.home = {35.7250, -78.6960, 0};
    CHECK_THROWS_AS(run(s, &w.mission, &w.dem), PreflightFailed);
}

TEST_CASE("same inputs give byte-identical logs and stores")
{
    World w;
    for (const char* name : {"stand_top", "manual_flight_payload", "autonomous", "stand_control"}) {
        auto s = scenario(name);
        auto a = run(s, &w.mission, &w.dem);
        auto b = run(s, &w.mission, &w.dem);
        CHECK(a.log.to_jsonl() == b.log.to_jsonl());
        CHECK(a.store->snapshot() == b.store->snapshot());
    }
}

TEST_CASE("seed changes the log")
{
    auto s = scenario("stand_control");
    RunOptions o1, o2;
    o1.seed = 1;
    o2.seed = 2;
    CHECK(run(s, nullptr, nullptr, o1).log.to_jsonl() != run(s, nullptr, nullptr, o2).log.to_jsonl());
}

TEST_CASE("concurrent pipeline matches the inline schedule")
{
    World w;
    for (const char* name : {"stand_table", "autonomous", "ground_test"}) {
        auto s = scenario(name);
        RunOptions threaded;
        threaded.concurrent_pipeline = true;
        auto a = run(s, &w.mission, &w.dem);
        auto b = run(s, &w.mission, &w.dem, threaded);
        CHECK(a.store->snapshot() == b.store->snapshot());
        CHECK(a.log.to_jsonl() == b.log.to_jsonl());
        CHECK(a.metrics == b.metrics);
    }
}

TEST_CASE("test-stand verdicts")
{
    auto payload = run(scenario("stand_payload"), nullptr, nullptr);
    auto rp = report_run(payload.log, payload.store->snapshot());
    for (auto id : rp.tags) {
        CHECK_FALSE(rp.temperature_collected[id]);
        CHECK_FALSE(rp.activity_collected[id]);
    }
    CHECK(rp.conservation.empty());

    auto table = run(scenario("stand_table"), nullptr, nullptr);
    auto rt = report_run(table.log, table.store->snapshot());
    for (auto id : rt.tags)
        CHECK(rt.temperature_collected[id]);

    auto control = run(scenario("stand_control"), nullptr, nullptr);
    CHECK(control.store->size() > 0);
}

TEST_CASE("conservation counts reconcile")
{
    auto r = run(scenario("manual_flight_top"), nullptr, nullptr);
    auto st = tally(r.log);
    CHECK(st.tx == st.bridge_frames + st.bridge_duplicates + st.tag_link_lost);
    CHECK(st.published == st.store_inserted + st.store_duplicates);
    CHECK(conservation_errors(st).empty());
    CHECK(st.published == r.metrics.published);
}

TEST_CASE("interference on the tag link")
{
    auto s = scenario("stand_table");
    s.interference.target = InterferenceTarget::TagLink;
    s.interference.power_dbm_at_ref = -20.0;
    auto r = run(s, nullptr, nullptr);
    auto st = tally(r.log);
    CHECK(st.tag_link_lost > 0);
    CHECK(st.gateway_dropped == 0);
}

TEST_CASE("uplink delay beyond the expiry window expires everything")
{
    auto s = scenario("stand_control");
    s.uplink.latency_s = 61.0;
    auto r = run(s, nullptr, nullptr);
    auto st = tally(r.log);
    CHECK(st.expired > 0);
    CHECK(st.published == 0);
    CHECK(r.store->size() == 0);
    CHECK(st.expired == st.bridge_frames - st.gateway_dropped);
}

TEST_CASE("run log round trip and replay")
{
    auto r = run(scenario("stand_control"), nullptr, nullptr);
    auto text = r.log.to_jsonl();
    auto back = RunLog::parse(text);
    CHECK(back.to_jsonl() == text);

    auto rs = replay(back);
    CHECK(rs.clean());
    CHECK(rs.events == r.log.size());
    CHECK(rs.store == r.store->snapshot());

    auto broken = RunLog::parse(drop_first_line_of_kind(text, "publish"));
    CHECK_FALSE(replay(broken).clean());
    CHECK_FALSE(audit_integrity(broken).empty());

    auto empty = replay(RunLog{});
    CHECK(empty.events == 0);
    CHECK(empty.store.empty());
    CHECK(empty.clean());

    size_t seen = 0;
    ReplayOptions opt;
    opt.on_event = [&](const Event&) { ++seen; };
    replay(back, opt);
    CHECK(seen == back.size());
}

TEST_CASE("corrupt logs are rejected")
{
    CHECK_THROWS_AS(RunLog::parse("{not json}\n"), CorruptLog);
    CHECK_THROWS_AS(RunLog::parse(R"({"t_s":0,"kind":"teleport"})"
                                  "\n"),
                    CorruptLog);
    CHECK_THROWS_AS(RunLog::parse(R"({"t_s":2,"kind":"pose"})"
                                  "\n"
                                  R"({"t_s":1,"kind":"pose"})"
                                  "\n"),
                    CorruptLog);
    CHECK(RunLog::parse("").empty());
}

TEST_CASE("audit flags a store without emission")
{
    RunLog log;
    nlohmann::ordered_json p;
    p["tag_id"] = 1;
    p["seq"] = 1;
    p["type"] = "activity";
    p["nonce"] = "000000010000000000000001";
    p["rx_time_s"] = 0.0;
    p["arrival_s"] = 0.5;
    p["topic"] = "tags/v1/gw01/decrypted";
    p["message"] = R"({"ts_ms":0,"gateway_id":"gw01","bridge_id":"br01","tag_id":1,"type":"activity","seq":1})";
    log.add(0.5, EventKind::Publish, p);
    CHECK_FALSE(audit_integrity(log).empty());
}

TEST_CASE("wire mode publishes the same bytes")
{
    FakeBroker broker;
    mqtt::Client client;
    client.connect(mqtt::parse_uri(broker.uri()), "engine-test");
    RunOptions opt;
    opt.wire = &client;
    auto r = run(scenario("stand_control"), nullptr, nullptr, opt);
    client.disconnect();
    auto msgs = broker.finish();

    std::vector<std::pair<std::string, std::string>> expect;
    for (const auto& e : r.log.events())
        if (e.kind == EventKind::Publish)
            expect.emplace_back(e.data["topic"].get<std::string>(), e.data["message"].get<std::string>());
    CHECK(!expect.empty());
    CHECK(msgs == expect);
}
