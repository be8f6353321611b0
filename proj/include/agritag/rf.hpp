#pragma once

#include "agritag/geo.hpp"

#include <cmath>
#include <limits>

namespace agritag::rf {

/// Near-field guard; distances below this are clamped (or rejected by fspl_db).
inline constexpr double kMinDistanceM = 0.1;

/// Sentinel returned by motor_noise_dbm for inactive motors.
inline constexpr double kNoNoiseDbm = -std::numeric_limits<double>::infinity();

struct RadioParams {
    double eirp_dbm = 0.0;
    double rx_gain_dbi = 0.0;
    double freq_hz = 2.44e9;
    double sensitivity_dbm = -90.0;
    double noise_floor_dbm = -100.0;
};

/// Throws InvariantViolation unless freq_hz > 0 and sensitivity_dbm > -200.
void validate(const RadioParams& p);

/// Bridge harvest emitter: 30 dBm EIRP at 918 MHz into a 0 dBi tag antenna with a
/// -21.70 dBm harvest threshold, which puts the activation edge at 10 m.
RadioParams default_harvest_radio();
/// Tag advertisement uplink into the bridge's directional receiver (2.44 GHz).
RadioParams default_tag_radio();
/// Phone cellular link.
RadioParams default_cellular_radio();

struct InterferenceSource {
    geo::GeoPoint pos;
    bool active = false;
    double power_dbm_at_ref = -50.0;
    double ref_m = 0.15;
    double decay_exp = 2.0;
};

void validate(const InterferenceSource& s);

/// Free-space path loss. Throws BelowMinDistance for dist_m < kMinDistanceM.
double fspl_db(double freq_hz, double dist_m);

/// eirp + rx gain - FSPL.
double received_power_dbm(const RadioParams& p, double dist_m);

/// received_power_dbm with the distance clamped to kMinDistanceM.
double received_power_clamped_dbm(const RadioParams& p, double dist_m);

/// Zero below sensitivity, otherwise efficiency times the received power in watts.
double harvested_power_w(double rx_dbm, double efficiency, double sensitivity_dbm);

/// Largest distance at which received power still meets sensitivity (closed-form Friis inversion).
double activation_range_m(const RadioParams& p, double extra_gain_db = 0.0);

double motor_noise_dbm(const InterferenceSource& s, const geo::GeoPoint& rx_pos);

struct DeliveryCurve {
    double slope_per_db = 1.0;
    double snr50_db = 3.0;
};

/// Logistic packet delivery probability.
double delivery_probability(double snr_db, const DeliveryCurve& curve = {});

/// SNR against the stronger of the noise floor and an interference level.
double snr_db(double signal_dbm, double noise_floor_dbm, double interference_dbm);

inline double dbm_to_w(double dbm) { return std::pow(10.0, (dbm - 30.0) / 10.0); }
inline double w_to_dbm(double w) { return 10.0 * std::log10(w) + 30.0; }

} // namespace agritag::rf
