// agritag: run simulations, validate missions, replay and report run logs.

#include "agritag/engine.hpp"
#include "agritag/error.hpp"
#include "agritag/geo.hpp"
#include "agritag/mission.hpp"
#include "agritag/mqtt.hpp"
#include "agritag/runlog.hpp"
#include "agritag/scenario.hpp"

#include "CLI11.hpp"

#include <chrono>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

namespace {

using namespace agritag;

constexpr int kExitOk = 0;
constexpr int kExitValidation = 2;
constexpr int kExitConfig = 3;

std::string read_file(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw ConfigError("cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void print_violations(const std::vector<mission::Violation>& v)
{
    for (const auto& x : v) {
        std::cerr << "  " << mission::to_string(x.kind) << " ";
        if (x.waypoint_index < 0)
            std::cerr << "home";
        else
            std::cerr << "waypoint " << x.waypoint_index;
        std::cerr << ": " << x.detail << "\n";
    }
}

int cmd_run(const std::string& mission_path, const std::string& scenario_path, const std::string& dem_path,
            std::optional<uint64_t> seed, const std::string& out_path, const std::string& store_path,
            const std::string& wire, bool concurrent)
{
    auto sc = sim::load_scenario(read_file(scenario_path));
    std::optional<mission::MissionParams> mission;
    std::optional<geo::ElevationRaster> dem;
    if (!mission_path.empty())
        mission = mission::load_mission(read_file(mission_path));
    if (!dem_path.empty())
        dem = geo::load_raster(read_file(dem_path));

    sim::RunOptions opt;
    opt.seed = seed;
    opt.concurrent_pipeline = concurrent;
    if (!store_path.empty())
        opt.store_path = store_path;
    mqtt::Client client;
    if (!wire.empty()) {
        client.connect(mqtt::parse_uri(wire), "agritag-" + sc.gateway_id);
        opt.wire = &client;
    }

    auto result = sim::run(sc, mission ? &*mission : nullptr, dem ? &*dem : nullptr, opt);
    if (client.connected())
        client.disconnect();

    std::ofstream out(out_path, std::ios::binary | std::ios::trunc);
    if (!out)
        throw ConfigError("cannot write " + out_path);
    out << result.log.to_jsonl();

    auto rep = sim::report_run(result.log, result.store->snapshot());
    std::cout << sim::to_text(rep);
    return kExitOk;
}

int cmd_validate(const std::string& mission_path, const std::string& dem_path)
{
    auto m = mission::load_mission(read_file(mission_path));
    auto dem = geo::load_raster(read_file(dem_path));
    auto v = mission::preflight_check(m, dem);
    if (v.empty()) {
        std::cout << "preflight ok: " << m.waypoints.size() << " waypoint(s)\n";
        return kExitOk;
    }
    std::cerr << "preflight failed with " << v.size() << " violation(s):\n";
    print_violations(v);
    return kExitValidation;
}

int cmd_replay(const std::string& in_path, double speed)
{
    auto log = sim::RunLog::parse(read_file(in_path));
    sim::ReplayOptions opt;
    opt.speed = speed;
    if (speed > 0) {
        auto start = std::chrono::steady_clock::now();
        opt.on_event = [start, speed](const sim::Event& e) {
            auto due = start + std::chrono::duration<double>(e.t_s / speed);
            std::this_thread::sleep_until(due);
            std::cout << e.t_s << " " << sim::to_string(e.kind) << " " << e.data.dump() << "\n";
        };
    }
    auto s = sim::replay(log, opt);
    std::cout << "events " << s.events << ", records " << s.store.size() << ", divergences "
              << s.divergences.size() << "\n";
    for (const auto& d : s.divergences)
        std::cout << "  " << d << "\n";
    return s.clean() ? kExitOk : kExitValidation;
}

int cmd_report(const std::string& in_path, const std::string& format)
{
    auto log = sim::RunLog::parse(read_file(in_path));
    auto s = sim::replay(log);
    auto rep = sim::report_run(log, s.store);
    std::cout << (format == "json" ? sim::to_json(rep) + "\n" : sim::to_text(rep));
    return kExitOk;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"UAV and RF energy-harvesting tag simulator"};
    app.require_subcommand(1);

    std::string mission_path, scenario_path, dem_path, out_path, store_path, wire, in_path, format = "text";
    std::optional<uint64_t> seed;
    double speed = 0.0;
    bool concurrent = false;

    auto* run = app.add_subcommand("run", "Run a scenario and write the event log");
    run->add_option("--mission", mission_path, "Mission YAML (flight scenarios)")->check(CLI::ExistingFile);
    run->add_option("--scenario", scenario_path, "Scenario YAML")->required()->check(CLI::ExistingFile);
    run->add_option("--dem", dem_path, "Elevation ASCII grid (flight scenarios)")->check(CLI::ExistingFile);
    run->add_option("--seed", seed, "Override the scenario seed");
    run->add_option("--out", out_path, "Run log output (JSON Lines)")->required();
    run->add_option("--store", store_path, "Persist stored records (JSON Lines)");
    run->add_option("--wire", wire, "Also publish to an MQTT broker, mqtt://host:port");
    run->add_flag("--concurrent", concurrent, "Run pipeline stages on worker threads");

    auto* val = app.add_subcommand("validate-mission", "Preflight-check a mission against a DEM");
    val->add_option("--mission", mission_path)->required()->check(CLI::ExistingFile);
    val->add_option("--dem", dem_path)->required()->check(CLI::ExistingFile);

    auto* rep = app.add_subcommand("replay", "Replay a run log and verify the store");
    rep->add_option("--in", in_path)->required()->check(CLI::ExistingFile);
    rep->add_option("--speed", speed, "Simulated seconds per wall second (0 = instant)")->check(CLI::NonNegativeNumber);

    auto* rpt = app.add_subcommand("report", "Summarise a run log");
    rpt->add_option("--in", in_path)->required()->check(CLI::ExistingFile);
    rpt->add_option("--format", format)->check(CLI::IsMember({"text", "json"}));

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    try {
        if (*run)
            return cmd_run(mission_path, scenario_path, dem_path, seed, out_path, store_path, wire, concurrent);
        if (*val)
            return cmd_validate(mission_path, dem_path);
        if (*rep)
            return cmd_replay(in_path, speed);
        return cmd_report(in_path, format);
    } catch (const sim::PreflightFailed& e) {
        std::cerr << "preflight failed:\n";
        print_violations(e.violations());
        return kExitValidation;
    } catch (const InvariantViolation& e) {
        std::cerr << "invalid: " << e.what() << "\n";
        return kExitValidation;
    } catch (const ParseError& e) {
        std::cerr << "parse error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const CorruptLog& e) {
        std::cerr << "corrupt log: " << e.what() << "\n";
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
