#pragma once

#include <cstdint>
#include <string_view>

namespace coexist {

// 3GPP UMa path loss configuration for the MBS -> FSS link.
struct PathLossParams {
  double frequency_ghz = 12.45;
  double tx_height_m = 25.0;
  double rx_height_m = 4.5;
  double sigma_los_db = 4.0;
  double sigma_nlos_db = 7.8;
  std::uint64_t shadow_seed = 1;

  void validate() const;
};

// Breakpoint distance d'_BP = 4 h'_BS h'_UT f / c with a 1 m effective
// environment height.
double breakpoint_distance_m(const PathLossParams& params);

// Minimum 3D distance for which the UMa formulas are defined.
inline constexpr double kMinPathLossDistanceM = 10.0;

// LOS: 28 + 22 log10(d) + 20 log10(f) below the breakpoint.
// NLOS: max(LOS, 13.54 + 39.08 log10(d) + 20 log10(f) - 0.6 (h_UT - 1.5)).
// Throws Error(kModelValidity) for d < 10 m.
double base_path_loss_db(double d3d_m, bool los, const PathLossParams& params);

// Zero-mean Gaussian in dB with sigma per LOS state. Stateless: a pure function
// of (shadow_seed, link_id), so evaluation order never changes the draw.
double shadow_fading_db(std::uint64_t link_id, bool los, const PathLossParams& params);

// Stable 64-bit key for a link name (FNV-1a), independent of std::hash.
std::uint64_t link_key(std::string_view name);

struct RainCoefficients {
  double a = 0.0;
  double b = 0.0;
  double c = 0.0;
  double d = 0.0;
};

// Cubic-in-rain-rate fits for vertical polarization.
RainCoefficients rain_coefficients(double rain_rate_mm_per_hr);

// A = a f^3 + b f^2 + c f + d, clamped at zero. Valid for 10 <= f <= 100 GHz;
// throws Error(kModelValidity, "rain model validity") outside.
double rain_specific_attenuation_db_per_km(double rain_rate_mm_per_hr, double frequency_ghz);

struct PropagationSample {
  bool los = false;
  double base_loss_db = 0.0;
  double shadow_db = 0.0;
  double rain_db = 0.0;
  double total_db = 0.0;
};

// Sunny loss plus specific rain attenuation scaled by the path length in km.
PropagationSample path_loss(double d3d_m, std::uint64_t link_id, bool los,
                            double rain_rate_mm_per_hr, const PathLossParams& params);

}  // namespace coexist
