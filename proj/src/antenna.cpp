#include "coexist/antenna.hpp"

#include <algorithm>
#include <cmath>

#include "coexist/error.hpp"

namespace coexist {

void MbsAntennaParams::validate() const {
  if (!(peak_gain_dbi > 0.0)) throw Error(ErrorCode::kInvalidArgument, "MBS peak gain must be > 0");
  if (!(theta_3db_deg > 0.0) || !(phi_3db_deg > 0.0))
    throw Error(ErrorCode::kInvalidArgument, "MBS 3 dB beamwidths must be > 0");
  if (!(sidelobe_floor_db > 0.0))
    throw Error(ErrorCode::kInvalidArgument, "MBS sidelobe floor must be > 0");
  if (!(sector_width_deg > 0.0 && sector_width_deg <= 360.0))
    throw Error(ErrorCode::kInvalidArgument, "MBS sector width must be in (0, 360]");
}

void FssAntennaParams::validate() const {
  if (!(near_in_deg > 0.0 && near_in_deg < far_out_deg && far_out_deg <= 180.0))
    throw Error(ErrorCode::kInvalidArgument, "FSS pattern needs 0 < near_in < far_out <= 180");
  if (!(boresight_gain_dbi > 29.0 - 25.0 * std::log10(near_in_deg)))
    throw Error(ErrorCode::kInvalidArgument,
                "FSS boresight gain must exceed the sidelobe envelope at near_in");
  if (!(boresight_elevation_deg >= -90.0 && boresight_elevation_deg <= 90.0))
    throw Error(ErrorCode::kInvalidArgument, "FSS boresight elevation out of range");
}

bool in_sector(double sector_azimuth_deg, double azimuth_deg, const MbsAntennaParams& params) {
  return std::abs(wrap_azimuth_delta(sector_azimuth_deg, azimuth_deg)) <=
         params.sector_width_deg / 2.0;
}

double mbs_beam_gain_dbi(const Beam& beam, const Direction& target, const MbsAntennaParams& p) {
  const double d_theta = wrap_azimuth_delta(beam.steering.azimuth_deg, target.azimuth_deg);
  const double d_phi = target.elevation_deg - beam.steering.elevation_deg;
  const double h = d_theta / p.theta_3db_deg;
  const double v = d_phi / p.phi_3db_deg;
  double gain = p.peak_gain_dbi - std::min(12.0 * h * h + 12.0 * v * v, p.sidelobe_floor_db);
  if (!in_sector(beam.sector_azimuth_deg, target.azimuth_deg, p)) gain -= p.sidelobe_floor_db;
  return gain;
}

double fss_gain_dbi(const Direction& target, const FssAntennaParams& p) {
  const double phi = angular_separation_deg(p.boresight(), target);
  if (phi < p.near_in_deg) return p.boresight_gain_dbi;
  if (phi <= p.far_out_deg) return std::max(29.0 - 25.0 * std::log10(phi), p.backlobe_dbi);
  return p.backlobe_dbi;
}

}  // namespace coexist
