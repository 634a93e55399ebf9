#pragma once

#include <optional>

namespace coexist {

inline constexpr double kBoltzmannJPerK = 1.380649e-23;

struct RadioParams {
  double total_power_w = 10.0;          // P_t per MBS
  double channel_bandwidth_hz = 1.0e8;  // B, one 100 MHz channel
  double noise_temperature_k = 290.0;   // T
  // |U| in the power split. Unset means "beams of this MBS" (30 at 50% load).
  std::optional<int> power_split_beams;

  void validate() const;
};

// 10 log10(P_t) - 10 log10(|U|). Throws Error(kInvalidArgument, "no active beams")
// when |U| < 1.
double per_beam_power_dbw(double total_power_w, int ue_count);

// 10 log10(k T B).
double noise_floor_dbw(const RadioParams& params);

}  // namespace coexist
