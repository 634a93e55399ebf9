#include "coexist/iet.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <exception>
#include <thread>

#include "coexist/error.hpp"

namespace coexist {

void RadioParams::validate() const {
  if (!(total_power_w > 0.0)) throw Error(ErrorCode::kInvalidArgument, "total power must be > 0");
  if (!(channel_bandwidth_hz > 0.0))
    throw Error(ErrorCode::kInvalidArgument, "channel bandwidth must be > 0");
  if (!(noise_temperature_k > 0.0))
    throw Error(ErrorCode::kInvalidArgument, "noise temperature must be > 0");
  if (power_split_beams && *power_split_beams < 1)
    throw Error(ErrorCode::kInvalidArgument, "power split needs at least one beam");
}

double per_beam_power_dbw(double total_power_w, int ue_count) {
  if (ue_count < 1) throw Error(ErrorCode::kInvalidArgument, "no active beams");
  if (!(total_power_w > 0.0)) throw Error(ErrorCode::kInvalidArgument, "total power must be > 0");
  return 10.0 * std::log10(total_power_w) - 10.0 * std::log10(static_cast<double>(ue_count));
}

double noise_floor_dbw(const RadioParams& p) {
  return 10.0 * std::log10(kBoltzmannJPerK * p.noise_temperature_k * p.channel_bandwidth_hz);
}

World::World(std::shared_ptr<const Scenario> scenario, double index_cell_size_m)
    : scenario_(std::move(scenario)), frame_(scenario_->frame_origin()) {
  const auto start = std::chrono::steady_clock::now();
  const Scenario& s = *scenario_;
  fss_position_ = frame_.to_enu(s.fss.location);
  index_ = SpatialIndex(s.buildings, index_cell_size_m);
  auto beams = drop_ues(s);

  sites_.reserve(s.mbs.size());
  for (std::size_t i = 0; i < s.mbs.size(); ++i) {
    const auto& m = s.mbs[i];
    MbsSite site;
    site.mbs_index = i;
    site.id = m.id;
    site.position = frame_.to_enu(m.location);
    site.distance_2d_m = distance_2d(site.position, fss_position_);
    site.distance_3d_m = distance_3d(site.position, fss_position_);
    site.los = is_los(site.position, fss_position_, index_, s.buildings);
    site.toward_fss = angles_between(site.position, fss_position_);
    site.from_fss = angles_between(fss_position_, site.position);
    site.link_id = link_key(s.fss.id + "|" + m.id);
    site.beams = std::move(beams[i]);
    sites_.push_back(std::move(site));
  }
  build_ms_ = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start)
                  .count();
}

std::optional<std::size_t> World::find_site(const std::string& mbs_id) const {
  for (std::size_t i = 0; i < sites_.size(); ++i)
    if (sites_[i].id == mbs_id) return i;
  return std::nullopt;
}

ActivationMask World::registered_mask() const {
  ActivationMask mask(sites_.size());
  for (std::size_t i = 0; i < sites_.size(); ++i) mask[i] = scenario_->mbs[i].active;
  return mask;
}

BeamTerms beam_interference(const Beam& beam, const MbsSite& site, const Scenario& scenario,
                            const PropagationSample& propagation, int power_split_beams) {
  BeamTerms t;
  t.power_dbw = per_beam_power_dbw(scenario.radio.total_power_w, power_split_beams);
  t.mbs_gain_dbi = mbs_beam_gain_dbi(beam, site.toward_fss, scenario.mbs_antenna);
  t.fss_gain_dbi = fss_gain_dbi(site.from_fss, scenario.fss.antenna);
  t.path_loss_db = propagation.total_db;
  return t;
}

namespace {

MbsContribution evaluate_site(const World& world, const MbsSite& site, double rain_rate,
                              double noise_dbw, bool keep_beams) {
  const Scenario& s = world.scenario();
  MbsContribution c;
  c.mbs_id = site.id;
  c.distance_m = site.distance_2d_m;
  c.los = site.los;
  c.propagation = path_loss(site.distance_3d_m, site.link_id, site.los, rain_rate, s.path_loss);
  if (!site.beams.empty()) {
    const int split = s.radio.power_split_beams.value_or(static_cast<int>(site.beams.size()));
    if (keep_beams) c.beams.reserve(site.beams.size());
    for (const auto& beam : site.beams) {
      const BeamTerms terms = beam_interference(beam, site, s, c.propagation, split);
      const double i_dbw = terms.interference_dbw();
      c.interference_w += std::pow(10.0, i_dbw / 10.0);
      if (keep_beams) c.beams.push_back({beam.ue_id, beam.sector_index, terms, i_dbw});
    }
  }
  if (c.interference_w > 0.0) c.individual_in_db = 10.0 * std::log10(c.interference_w) - noise_dbw;
  return c;
}

}  // namespace

InterferenceReport evaluate(const World& world, const ActivationMask& active,
                            const ContextSnapshot& context, const EvaluateOptions& options) {
  const auto start = std::chrono::steady_clock::now();
  const auto sites = world.sites();
  if (active.size() != sites.size())
    throw Error(ErrorCode::kInvalidArgument, "activation mask does not match the world");
  context.validate();

  InterferenceReport report;
  report.noise_floor_dbw = noise_floor_dbw(world.scenario().radio);
  report.rain_rate_mm_per_hr = context.rain_rate_mm_per_hr;
  report.total_power_w = world.scenario().radio.total_power_w;
  report.per_mbs.resize(sites.size());

  const double rain = context.rain_rate_mm_per_hr;
  const unsigned workers =
      std::max(1u, std::min<unsigned>(options.threads, static_cast<unsigned>(sites.size())));
  if (workers <= 1) {
    for (std::size_t i = 0; i < sites.size(); ++i)
      report.per_mbs[i] =
          evaluate_site(world, sites[i], rain, report.noise_floor_dbw, options.keep_beams);
  } else {
    std::vector<std::exception_ptr> errors(workers);
    std::vector<std::jthread> pool;
    pool.reserve(workers);
    for (unsigned w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        try {
          for (std::size_t i = w; i < sites.size(); i += workers)
            report.per_mbs[i] =
                evaluate_site(world, sites[i], rain, report.noise_floor_dbw, options.keep_beams);
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    }
    pool.clear();  // join
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
  }

  reaggregate(report, active);
  report.elapsed_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  return report;
}

void reaggregate(InterferenceReport& report, const ActivationMask& active) {
  if (active.size() != report.per_mbs.size())
    throw Error(ErrorCode::kInvalidArgument, "activation mask does not match the report");
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < report.per_mbs.size(); ++i) {
    report.per_mbs[i].active = active[i];
    if (!active[i]) continue;
    total += report.per_mbs[i].interference_w;
    ++count;
  }
  report.aggregate_interference_w = total;
  report.active_mbs_count = count;
  report.aggregate_in_db = total > 0.0
                               ? std::optional<double>(10.0 * std::log10(total) -
                                                       report.noise_floor_dbw)
                               : std::nullopt;
}

}  // namespace coexist
