#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "coexist/antenna.hpp"
#include "coexist/context.hpp"
#include "coexist/geo.hpp"
#include "coexist/propagation.hpp"
#include "coexist/radio.hpp"
#include "coexist/scenario.hpp"

namespace coexist {

// Precomputed MBS -> FSS geometry. Built once per scenario.
struct MbsSite {
  std::size_t mbs_index = 0;
  std::string id;
  EnuPoint position;
  double distance_2d_m = 0.0;
  double distance_3d_m = 0.0;
  bool los = false;
  Direction toward_fss;  // interference axis seen from the MBS
  Direction from_fss;    // the same axis seen from the FSS dish
  std::uint64_t link_id = 0;
  std::vector<Beam> beams;
};

using ActivationMask = std::vector<bool>;  // indexed like World::sites()

class World {
 public:
  explicit World(std::shared_ptr<const Scenario> scenario,
                 double index_cell_size_m = SpatialIndex::kDefaultCellSizeM);

  const Scenario& scenario() const noexcept { return *scenario_; }
  std::shared_ptr<const Scenario> scenario_ptr() const noexcept { return scenario_; }
  const EnuFrame& frame() const noexcept { return frame_; }
  const EnuPoint& fss_position() const noexcept { return fss_position_; }
  std::span<const MbsSite> sites() const noexcept { return sites_; }
  const SpatialIndex& index() const noexcept { return index_; }

  std::optional<std::size_t> find_site(const std::string& mbs_id) const;
  // Registration state from the scenario (MacroBaseStation::active).
  ActivationMask registered_mask() const;

  double build_ms() const noexcept { return build_ms_; }

 private:
  std::shared_ptr<const Scenario> scenario_;
  EnuFrame frame_;
  EnuPoint fss_position_;
  SpatialIndex index_;
  std::vector<MbsSite> sites_;
  double build_ms_ = 0.0;
};

// The four dB terms of one beam's contribution at the FSS.
struct BeamTerms {
  double power_dbw = 0.0;
  double mbs_gain_dbi = 0.0;
  double fss_gain_dbi = 0.0;
  double path_loss_db = 0.0;

  double interference_dbw() const {
    return power_dbw + mbs_gain_dbi + fss_gain_dbi - path_loss_db;
  }
};

BeamTerms beam_interference(const Beam& beam, const MbsSite& site, const Scenario& scenario,
                            const PropagationSample& propagation, int power_split_beams);

struct BeamContribution {
  std::string ue_id;
  int sector_index = 0;
  BeamTerms terms;
  double interference_dbw = 0.0;
};

struct MbsContribution {
  std::string mbs_id;
  bool active = false;
  double distance_m = 0.0;
  bool los = false;
  PropagationSample propagation;
  double interference_w = 0.0;                // I_m, even when inactive
  std::optional<double> individual_in_db;     // nullopt when I_m == 0
  std::vector<BeamContribution> beams;
};

struct InterferenceReport {
  std::vector<MbsContribution> per_mbs;  // one entry per site, world order
  double noise_floor_dbw = 0.0;
  double aggregate_interference_w = 0.0;
  // nullopt is the "no interference" sentinel (no active MBS, or zero power).
  std::optional<double> aggregate_in_db;
  std::size_t active_mbs_count = 0;
  double rain_rate_mm_per_hr = 0.0;
  double total_power_w = 0.0;
  double elapsed_ms = 0.0;

  // Sentinel always passes.
  bool within(double threshold_db) const {
    return !aggregate_in_db || *aggregate_in_db <= threshold_db;
  }
};

struct EvaluateOptions {
  unsigned threads = 1;
  bool keep_beams = true;
};

// Per-MBS physics for every site plus the watt-domain sum over the active
// ones. Reports are bit-identical for any thread count.
InterferenceReport evaluate(const World& world, const ActivationMask& active,
                            const ContextSnapshot& context, const EvaluateOptions& options = {});

// Recomputes the aggregate for a different activation without redoing physics.
void reaggregate(InterferenceReport& report, const ActivationMask& active);

}  // namespace coexist
