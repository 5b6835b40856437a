#include "tfrelay/ratemodel.hpp"

#include <cmath>
#include <cstdio>

#include "tfrelay/error.hpp"

namespace tfrelay {

namespace {

constexpr double kPlobFactor = 1.44;

void require_distance(double km) {
  if (!(km >= 0) || !std::isfinite(km)) {
    throw Error(ErrorCode::Precondition, "distance must be a finite, non-negative km value");
  }
}

// TF span (km) at which rate_tf equals the threshold.
double tf_span_at_threshold(const RateParams& p) {
  return 20.0 / p.alpha_db_per_km * std::log10(p.c_tf / p.threshold_bps);
}

}  // namespace

void RateParams::validate() const {
  for (double v : {alpha_db_per_km, c_tf, c_p2p, threshold_bps}) {
    if (!(v > 0) || !std::isfinite(v)) {
      throw Error(ErrorCode::Precondition, "rate parameters must be finite and positive");
    }
  }
}

Config RateParams::to_config() const {
  Config c;
  c.set("alpha_db_per_km", format_double(alpha_db_per_km));
  c.set("c_tf", format_double(c_tf));
  c.set("c_p2p", format_double(c_p2p));
  c.set("threshold_bps", format_double(threshold_bps));
  c.set("serial_multipath", serial_multipath ? "true" : "false");
  return c;
}

RateParams RateParams::from_config(const Config& config) {
  RateParams p;
  p.alpha_db_per_km = config.get_double("alpha_db_per_km").value_or(p.alpha_db_per_km);
  p.c_tf = config.get_double("c_tf").value_or(p.c_tf);
  p.c_p2p = config.get_double("c_p2p").value_or(p.c_p2p);
  p.threshold_bps = config.get_double("threshold_bps").value_or(p.threshold_bps);
  if (auto serial = config.get("serial_multipath")) {
    if (*serial != "true" && *serial != "false") {
      throw Error(ErrorCode::Parse, "serial_multipath must be true or false");
    }
    p.serial_multipath = *serial == "true";
  }
  p.validate();
  return p;
}

double eta(double length_km, const RateParams& p) {
  require_distance(length_km);
  return std::pow(10.0, -p.alpha_db_per_km * length_km / 10.0);
}

double rate_tf(double length_km, const RateParams& p) {
  return p.c_tf * std::sqrt(eta(length_km, p));
}

double rate_p2p(double length_km, const RateParams& p) {
  return p.c_p2p * kPlobFactor * eta(length_km, p);
}

double rate_scheme(double total_km, int m, int paths, const RateParams& p) {
  if (m < 2) throw Error(ErrorCode::Precondition, "the relay scheme needs m >= 2");
  if (paths < 1) throw Error(ErrorCode::Precondition, "at least one path is required");
  require_distance(total_km);
  double rate = rate_tf(2.0 * total_km / (m + 1), p);
  return p.serial_multipath ? rate / paths : rate;
}

double max_range(int m, const RateParams& p) {
  if (m < 2) throw Error(ErrorCode::Precondition, "the relay scheme needs m >= 2");
  p.validate();
  return std::max(0.0, tf_span_at_threshold(p) * (m + 1) / 2.0);
}

double max_range_tf(const RateParams& p) {
  p.validate();
  return std::max(0.0, tf_span_at_threshold(p));
}

double crossover_distance(const RateParams& p) {
  p.validate();
  // c_p2p 1.44 eta = c_tf sqrt(eta)  <=>  sqrt(eta) = c_tf / (1.44 c_p2p)
  double ratio = p.c_tf / (kPlobFactor * p.c_p2p);
  if (ratio >= 1.0) return 0.0;
  return -20.0 / p.alpha_db_per_km * std::log10(ratio);
}

double calibrate_c_tf(double length_km, double rate_bps, const RateParams& p) {
  return rate_bps / std::sqrt(eta(length_km, p));
}

bool virtually_null(double rate_bps, const RateParams& p) { return rate_bps < p.threshold_bps; }

std::string RateFamily::name() const {
  switch (kind) {
    case Kind::P2p: return "p2p";
    case Kind::Tf: return "tf";
    case Kind::Scheme: {
      std::string out = "scheme_m" + std::to_string(m);
      if (paths > 1) out += "_M" + std::to_string(paths);
      return out;
    }
  }
  return {};
}

RateFamily RateFamily::parse(std::string_view name) {
  if (name == "p2p") return {Kind::P2p};
  if (name == "tf") return {Kind::Tf};
  int m = 0, paths = 1;
  std::string text(name);
  if (std::sscanf(text.c_str(), "scheme_m%d_M%d", &m, &paths) >= 1 && m >= 2 && paths >= 1) {
    RateFamily f{Kind::Scheme, m, paths};
    if (f.name() == name) return f;
  }
  throw Error(ErrorCode::Parse, "unknown rate family '" + text + "'");
}

double RateFamily::rate(double total_km, const RateParams& p) const {
  switch (kind) {
    case Kind::P2p: return rate_p2p(total_km, p);
    case Kind::Tf: return rate_tf(total_km, p);
    case Kind::Scheme: return rate_scheme(total_km, m, paths, p);
  }
  return 0;
}

std::vector<RateCurve> emit_curves(const std::vector<double>& distances,
                                   const std::vector<RateFamily>& families,
                                   const RateParams& p) {
  p.validate();
  std::vector<RateCurve> curves;
  for (const auto& family : families) {
    RateCurve curve{family, {}};
    for (double d : distances) curve.points.push_back({d, family.rate(d, p)});
    curves.push_back(std::move(curve));
  }
  return curves;
}

std::string curves_to_csv(const std::vector<RateCurve>& curves) {
  std::string out = "distance_km,family,rate_bps\n";
  char line[128];
  for (const auto& curve : curves) {
    const std::string name = curve.family.name();
    for (const auto& pt : curve.points) {
      std::snprintf(line, sizeof line, "%.10g,%s,%.10g\n", pt.distance_km, name.c_str(),
                    pt.rate_bps);
      out += line;
    }
  }
  return out;
}

std::vector<double> distance_grid(double from_km, double to_km, double step_km) {
  if (!(step_km > 0)) throw Error(ErrorCode::Precondition, "distance step must be positive");
  std::vector<double> out;
  if (to_km < from_km) return out;
  // Integer stepping avoids accumulated drift at the end point.
  const auto count = static_cast<long long>(std::floor((to_km - from_km) / step_km + 1e-9));
  for (long long i = 0; i <= count; ++i) out.push_back(from_km + static_cast<double>(i) * step_km);
  return out;
}

}  // namespace tfrelay
