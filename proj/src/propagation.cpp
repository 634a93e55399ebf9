#include "coexist/propagation.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "coexist/error.hpp"

namespace coexist {
namespace {

constexpr double kSpeedOfLight = 299'792'458.0;

double los_sub_breakpoint(double d3d_m, double f_ghz) {
  return 28.0 + 22.0 * std::log10(d3d_m) + 20.0 * std::log10(f_ghz);
}

double los_db(double d3d_m, const PathLossParams& p) {
  const double d_bp = breakpoint_distance_m(p);
  if (d3d_m <= d_bp) return los_sub_breakpoint(d3d_m, p.frequency_ghz);
  const double dh = p.tx_height_m - p.rx_height_m;
  return 28.0 + 40.0 * std::log10(d3d_m) + 20.0 * std::log10(p.frequency_ghz) -
         9.0 * std::log10(d_bp * d_bp + dh * dh);
}

// Uniform in (0, 1]; 53 random mantissa bits.
double unit_open_closed(std::mt19937_64& engine) {
  return (static_cast<double>(engine() >> 11) + 1.0) * 0x1.0p-53;
}

std::uint64_t mix(std::uint64_t x) {
  // splitmix64 finalizer
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

void PathLossParams::validate() const {
  if (!(frequency_ghz >= 0.5 && frequency_ghz <= 100.0))
    throw Error(ErrorCode::kModelValidity, "path loss frequency outside 0.5-100 GHz");
  if (!(sigma_los_db >= 0.0) || !(sigma_nlos_db >= 0.0))
    throw Error(ErrorCode::kInvalidArgument, "shadow fading sigma must be >= 0");
  if (!(tx_height_m > 1.0) || !(rx_height_m > 1.0))
    throw Error(ErrorCode::kInvalidArgument, "antenna heights must exceed 1 m");
}

double breakpoint_distance_m(const PathLossParams& p) {
  return 4.0 * (p.tx_height_m - 1.0) * (p.rx_height_m - 1.0) * p.frequency_ghz * 1e9 /
         kSpeedOfLight;
}

double base_path_loss_db(double d3d_m, bool los, const PathLossParams& params) {
  if (!(d3d_m >= kMinPathLossDistanceM))
    throw Error(ErrorCode::kModelValidity, "below model validity: 3D distance < 10 m");
  const double pl_los = los_db(d3d_m, params);
  if (los) return pl_los;
  const double pl_nlos = 13.54 + 39.08 * std::log10(d3d_m) +
                         20.0 * std::log10(params.frequency_ghz) -
                         0.6 * (params.rx_height_m - 1.5);
  return std::max(pl_los, pl_nlos);
}

std::uint64_t link_key(std::string_view name) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : name) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

double shadow_fading_db(std::uint64_t link_id, bool los, const PathLossParams& params) {
  const double sigma = los ? params.sigma_los_db : params.sigma_nlos_db;
  if (sigma == 0.0) return 0.0;
  // Engine and Box-Muller are spelled out because std::normal_distribution is
  // implementation-defined and golden fixtures must match across toolchains.
  std::mt19937_64 engine(mix(params.shadow_seed) ^ mix(link_id ^ 0x5ad0u));
  const double u1 = unit_open_closed(engine);
  const double u2 = unit_open_closed(engine);
  const double z = std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  return sigma * z;
}

RainCoefficients rain_coefficients(double x) {
  const double x2 = x * x;
  const double x3 = x2 * x;
  return {
      -5.520e-12 * x3 + 3.26e-9 * x2 - 1.21e-7 * x - 6e-6,
      8e-10 * x3 - 4.522e-7 * x2 - 3.03e-5 * x + 0.001,
      -5.71e-9 * x3 + 6e-7 * x2 + 8.707e-3 * x - 0.018,
      -1.073e-7 * x3 + 1.068e-4 * x2 - 0.0598e-3 * x + 0.0442,
  };
}

double rain_specific_attenuation_db_per_km(double rain_rate_mm_per_hr, double f) {
  if (!(f >= 10.0 && f <= 100.0))
    throw Error(ErrorCode::kModelValidity, "rain model validity: frequency outside 10-100 GHz");
  if (!(rain_rate_mm_per_hr >= 0.0))
    throw Error(ErrorCode::kInvalidArgument, "rain rate must be >= 0");
  const RainCoefficients k = rain_coefficients(rain_rate_mm_per_hr);
  const double a = ((k.a * f + k.b) * f + k.c) * f + k.d;
  return std::max(a, 0.0);
}

PropagationSample path_loss(double d3d_m, std::uint64_t link_id, bool los,
                            double rain_rate_mm_per_hr, const PathLossParams& params) {
  PropagationSample s;
  s.los = los;
  s.base_loss_db = base_path_loss_db(d3d_m, los, params);
  s.shadow_db = shadow_fading_db(link_id, los, params);
  s.rain_db = rain_rate_mm_per_hr == 0.0
                  ? 0.0
                  : rain_specific_attenuation_db_per_km(rain_rate_mm_per_hr,
                                                        params.frequency_ghz) *
                        (d3d_m / 1000.0);
  s.total_db = s.base_loss_db + s.shadow_db + s.rain_db;
  return s;
}

}  // namespace coexist
