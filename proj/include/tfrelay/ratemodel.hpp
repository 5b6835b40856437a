#pragma once

#include <string>
#include <vector>

#include "tfrelay/config.hpp"
#include "tfrelay/error.hpp"

namespace tfrelay {

/// Parameters of the loss-scaling rate model.
///
/// Defaults reproduce the single calibration point TF(300 km) = 1000 bit/s
/// at 0.2 dB/km; the point-to-point prefactor shares the TF clock scale.
struct RateParams {
  double alpha_db_per_km = 0.2;
  double c_tf = 1.0e6;
  double c_p2p = 1.0e6;
  double threshold_bps = 1.0;
  /// Non-default sensitivity mode: multipath shares run one after another,
  /// dividing the rate by the number of paths.
  bool serial_multipath = false;

  void validate() const;
  Config to_config() const;
  /// Missing keys keep their defaults.
  static RateParams from_config(const Config& config);
};

/// Fiber transmissivity 10^(-alpha L / 10).
double eta(double length_km, const RateParams& p);

/// TF-QKD rate, c_tf * sqrt(eta(L)).
double rate_tf(double length_km, const RateParams& p);

/// Point-to-point rate at the PLOB scaling, c_p2p * 1.44 * eta(L).
double rate_p2p(double length_km, const RateParams& p);

/// Relay scheme over `m` intermediaries per path and `paths` disjoint paths:
/// every TF session spans two links of D/(m+1), so the end-to-end rate is
/// rate_tf(2D/(m+1)). Parallel paths leave it unchanged.
double rate_scheme(double total_km, int m, int paths, const RateParams& p);

/// Largest total distance at which rate_scheme(D, m, 1) >= threshold.
double max_range(int m, const RateParams& p);

/// Largest distance at which plain TF reaches the threshold.
double max_range_tf(const RateParams& p);

/// Distance beyond which TF outperforms point-to-point; 0 when TF is ahead
/// from the start.
double crossover_distance(const RateParams& p);

/// Calibrates c_tf so that rate_tf(length_km) == rate_bps.
double calibrate_c_tf(double length_km, double rate_bps, const RateParams& p);

bool virtually_null(double rate_bps, const RateParams& p);

struct RateFamily {
  enum class Kind { P2p, Tf, Scheme } kind = Kind::Tf;
  int m = 2;      // Scheme only
  int paths = 1;  // Scheme only

  std::string name() const;  // "p2p", "tf", "scheme_m2", "scheme_m2_M3"
  static RateFamily parse(std::string_view name);
  double rate(double total_km, const RateParams& p) const;
};

struct RatePoint {
  double distance_km;
  double rate_bps;
};

struct RateCurve {
  RateFamily family;
  std::vector<RatePoint> points;
};

std::vector<RateCurve> emit_curves(const std::vector<double>& distances,
                                   const std::vector<RateFamily>& families,
                                   const RateParams& p);

/// "distance_km,family,rate_bps", one row per (family, distance).
std::string curves_to_csv(const std::vector<RateCurve>& curves);

std::vector<double> distance_grid(double from_km, double to_km, double step_km);

}  // namespace tfrelay
