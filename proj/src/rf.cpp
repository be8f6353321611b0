#include "agritag/rf.hpp"

#include "agritag/error.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace agritag::rf {

namespace {

// 20*log10(4*pi/c) with c = 299792458 m/s.
constexpr double kFsplConstantDb = -147.55;

} // namespace

void validate(const RadioParams& p)
{
    if (!(p.freq_hz > 0.0))
        throw InvariantViolation("radio frequency must be positive");
    if (!(p.sensitivity_dbm > -200.0))
        throw InvariantViolation("radio sensitivity must exceed -200 dBm");
}

RadioParams default_harvest_radio()
{
    return RadioParams{.eirp_dbm = 30.0,
                       .rx_gain_dbi = 0.0,
                       .freq_hz = 918e6,
                       .sensitivity_dbm = -21.70,
                       .noise_floor_dbm = -100.0};
}

RadioParams default_tag_radio()
{
    return RadioParams{.eirp_dbm = -10.0,
                       .rx_gain_dbi = 6.0,
                       .freq_hz = 2.44e9,
                       .sensitivity_dbm = -90.0,
                       .noise_floor_dbm = -95.0};
}

RadioParams default_cellular_radio()
{
    return RadioParams{.eirp_dbm = 43.0,
                       .rx_gain_dbi = 0.0,
                       .freq_hz = 1.9e9,
                       .sensitivity_dbm = -110.0,
                       .noise_floor_dbm = -100.0};
}

void validate(const InterferenceSource& s)
{
    if (!(s.ref_m > 0.0))
        throw InvariantViolation("interference reference distance must be positive");
    if (!(s.decay_exp >= 2.0))
        throw InvariantViolation("interference decay exponent must be >= 2");
}

double fspl_db(double freq_hz, double dist_m)
{
    if (!(freq_hz > 0.0))
        throw InvariantViolation("frequency must be positive");
    if (!(dist_m >= kMinDistanceM))
        throw BelowMinDistance("distance " + std::to_string(dist_m) + " m below model minimum");
    return 20.0 * std::log10(dist_m) + 20.0 * std::log10(freq_hz) + kFsplConstantDb;
}

double received_power_dbm(const RadioParams& p, double dist_m)
{
    return p.eirp_dbm + p.rx_gain_dbi - fspl_db(p.freq_hz, dist_m);
}

double received_power_clamped_dbm(const RadioParams& p, double dist_m)
{
    return received_power_dbm(p, std::max(dist_m, kMinDistanceM));
}

double harvested_power_w(double rx_dbm, double efficiency, double sensitivity_dbm)
{
    if (rx_dbm < sensitivity_dbm)
        return 0.0;
    return efficiency * dbm_to_w(rx_dbm);
}

double activation_range_m(const RadioParams& p, double extra_gain_db)
{
    double allowed_loss = p.eirp_dbm + p.rx_gain_dbi + extra_gain_db - p.sensitivity_dbm;
    return std::pow(10.0, (allowed_loss - 20.0 * std::log10(p.freq_hz) - kFsplConstantDb) / 20.0);
}

double motor_noise_dbm(const InterferenceSource& s, const geo::GeoPoint& rx_pos)
{
    if (!s.active)
        return kNoNoiseDbm;
    double d = geo::distance_3d_m(s.pos, rx_pos);
    return s.power_dbm_at_ref - 10.0 * s.decay_exp * std::log10(std::max(d, s.ref_m) / s.ref_m);
}

double delivery_probability(double snr_db, const DeliveryCurve& curve)
{
    return 1.0 / (1.0 + std::exp(-curve.slope_per_db * (snr_db - curve.snr50_db)));
}

double snr_db(double signal_dbm, double noise_floor_dbm, double interference_dbm)
{
    return signal_dbm - std::max(noise_floor_dbm, interference_dbm);
}

} // namespace agritag::rf
