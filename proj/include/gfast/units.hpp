#pragma once

#include <cmath>

namespace gfast {

inline double dbm_to_watt(double dbm) { return std::pow(10.0, (dbm - 30.0) / 10.0); }

inline double watt_to_dbm(double watt) { return 10.0 * std::log10(watt) + 30.0; }

inline double db_to_linear(double db) { return std::pow(10.0, db / 10.0); }

/// Power in one tone of width `spacing_hz` for a flat PSD given in dBm/Hz.
inline double psd_dbm_hz_to_watt(double psd_dbm_hz, double spacing_hz) {
  return dbm_to_watt(psd_dbm_hz) * spacing_hz;
}

/// SNR gap, linear scale (>= 1).
struct SnrGap {
  double linear = 1.0;

  static SnrGap from_db(double db) { return SnrGap{db_to_linear(db)}; }
};

}  // namespace gfast
