#pragma once

#include <cmath>
#include <numbers>

namespace otdrq {

// Decibel helpers. Everything inside the library is linear SI; these are
// only used where configuration values enter or reports leave.

inline double db_to_linear(double db) { return std::pow(10.0, db / 10.0); }

inline double linear_to_db(double ratio) { return 10.0 * std::log10(ratio); }

inline double dbm_to_watts(double dbm) { return 1e-3 * db_to_linear(dbm); }

inline double watts_to_dbm(double watts) { return linear_to_db(watts / 1e-3); }

/// Power attenuation in dB/km to the one-way *field* attenuation coefficient
/// in 1/m, so that the round-trip field factor is exp(-2*alpha*z).
inline double db_per_km_to_field_alpha(double db_per_km)
{
    return db_per_km * std::numbers::ln10 / 20.0 / 1000.0;
}

inline double field_alpha_to_db_per_km(double alpha)
{
    return alpha * 20.0 * 1000.0 / std::numbers::ln10;
}

} // namespace otdrq
