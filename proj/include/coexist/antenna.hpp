#pragma once

#include <string>

#include "coexist/geo.hpp"

namespace coexist {

struct MbsAntennaParams {
  double peak_gain_dbi = 26.0;
  double theta_3db_deg = 10.0;
  double phi_3db_deg = 10.0;
  double sidelobe_floor_db = 30.0;
  double sector_width_deg = 120.0;

  void validate() const;
};

struct FssAntennaParams {
  double boresight_gain_dbi = 33.8;
  double boresight_azimuth_deg = 180.0;
  double boresight_elevation_deg = 40.0;
  double near_in_deg = 1.0;
  double far_out_deg = 48.0;
  double backlobe_dbi = -10.0;

  Direction boresight() const { return {boresight_azimuth_deg, boresight_elevation_deg}; }
  void validate() const;
};

// One MBS beam steered at one UE.
struct Beam {
  std::string mbs_id;
  int sector_index = 0;
  double sector_azimuth_deg = 0.0;  // centre of the sector span
  std::string ue_id;
  EnuPoint ue_position;
  Direction steering;
};

// Quadratic-in-dB main lobe limited by the sidelobe floor; targets outside the
// beam's sector lose another sidelobe_floor.
double mbs_beam_gain_dbi(const Beam& beam, const Direction& target, const MbsAntennaParams& params);

bool in_sector(double sector_azimuth_deg, double azimuth_deg, const MbsAntennaParams& params);

// Earth-station envelope: boresight gain inside near_in, 29 - 25 log10(phi)
// out to far_out (never below the backlobe level), backlobe beyond.
double fss_gain_dbi(const Direction& target, const FssAntennaParams& params);

}  // namespace coexist
