#include "coexist/dsaf.hpp"

#include <chrono>
#include <cmath>

#include "coexist/error.hpp"

namespace coexist {
namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point start) {
  return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

// Radii ez_min + k * step that do not exceed ez_max.
std::size_t radius_count(const ExclusionZonePolicy& ez) {
  return static_cast<std::size_t>(std::floor((ez.max_m - ez.min_m) / ez.step_m + 1e-9)) + 1;
}

double radius_at(const ExclusionZonePolicy& ez, std::size_t k) {
  return ez.min_m + static_cast<double>(k) * ez.step_m;
}

void check_range(const ExclusionZonePolicy& ez) {
  if (!(ez.min_m > 0.0) || !(ez.step_m > 0.0) || ez.max_m < ez.min_m)
    throw Error(ErrorCode::kInvalidArgument, "invalid exclusion zone range");
}

std::size_t count_active(const ActivationMask& mask) {
  std::size_t n = 0;
  for (bool b : mask) n += b ? 1 : 0;
  return n;
}

}  // namespace

std::string_view to_string(RevocationReason reason) {
  switch (reason) {
    case RevocationReason::kInsideEz: return "inside_ez";
    case RevocationReason::kIndividualExcess: return "individual_excess";
    case RevocationReason::kPolicy: return "policy";
  }
  return "policy";
}

std::optional<RevocationReason> parse_revocation_reason(std::string_view text) {
  for (auto r : {RevocationReason::kInsideEz, RevocationReason::kIndividualExcess,
                 RevocationReason::kPolicy})
    if (to_string(r) == text) return r;
  return std::nullopt;
}

DsaDecision run_feedback_loop(const World& world, const ContextSnapshot& context,
                              const PolicySet& policy, const LoopOptions& options) {
  const ExclusionZonePolicy ez = options.exclusion_zone.value_or(policy.exclusion_zone);
  check_range(ez);
  const double threshold = threshold_for(context, policy);
  const double individual_limit = threshold + policy.individual_offset_db;

  DsaDecision d;
  d.threshold_db = threshold;
  d.context_id = context.id;
  d.active = world.registered_mask();

  // Physics does not depend on the activation state, so one evaluation serves
  // every iteration; each iteration only re-sums the active set.
  auto start = Clock::now();
  d.report = evaluate(world, d.active, context, options.evaluate);
  const auto sites = world.sites();
  const std::size_t steps = radius_count(ez);

  for (std::size_t k = 0; k < steps; ++k) {
    const double r = radius_at(ez, k);
    d.ez_radius_m = r;
    for (std::size_t i = 0; i < sites.size(); ++i) {
      if (d.active[i] && sites[i].distance_2d_m < r) {
        d.active[i] = false;
        d.revoked.emplace(sites[i].id, RevocationReason::kInsideEz);
      }
    }
    for (std::size_t i = 0; i < sites.size(); ++i) {
      const auto& in = d.report.per_mbs[i].individual_in_db;
      if (d.active[i] && in && *in > individual_limit) {
        d.active[i] = false;
        d.revoked.emplace(sites[i].id, RevocationReason::kIndividualExcess);
      }
    }
    reaggregate(d.report, d.active);
    d.trace.push_back({k + 1, r, d.report.aggregate_in_db, d.report.active_mbs_count,
                       ms_since(start)});
    start = Clock::now();
    if (d.report.within(threshold)) {
      d.converged = true;
      return d;
    }
  }

  // Out of radius: everything left goes dark.
  for (std::size_t i = 0; i < sites.size(); ++i) {
    if (d.active[i]) {
      d.active[i] = false;
      d.revoked.emplace(sites[i].id, RevocationReason::kPolicy);
    }
  }
  reaggregate(d.report, d.active);
  d.converged = false;
  return d;
}

DsaDecision de_exclusion_check(const World& world, const DsaDecision& decision,
                               const ContextSnapshot& context, const PolicySet& policy,
                               double margin_db, const LoopOptions& options) {
  const ExclusionZonePolicy ez = options.exclusion_zone.value_or(policy.exclusion_zone);
  if (!decision.converged) return decision;
  const double smaller = decision.ez_radius_m - ez.step_m;
  if (smaller < ez.min_m - 1e-9) return decision;
  const double threshold = threshold_for(context, policy);
  const auto& agg = decision.report.aggregate_in_db;
  if (agg && *agg > threshold - margin_db) return decision;

  DsaDecision next = decision;
  next.ez_radius_m = smaller;
  next.threshold_db = threshold;
  next.context_id = context.id;
  const auto sites = world.sites();
  for (std::size_t i = 0; i < sites.size(); ++i) {
    auto it = next.revoked.find(sites[i].id);
    if (it == next.revoked.end() || it->second != RevocationReason::kInsideEz) continue;
    if (sites[i].distance_2d_m >= smaller) {
      next.active[i] = true;
      next.revoked.erase(it);
    }
  }
  next.report = evaluate(world, next.active, context, options.evaluate);
  if (!next.report.within(threshold)) return decision;
  return next;
}

Controls controls_from(const World& world, const DsaDecision& decision) {
  Controls c;
  c.ez_radius_m = decision.ez_radius_m;
  const auto sites = world.sites();
  for (std::size_t i = 0; i < sites.size(); ++i) c.mbs_on[sites[i].id] = decision.active[i];
  return c;
}

StepResult single_step(const World& world, const Controls& controls, const ContextSnapshot& context,
                       const PolicySet& policy, const EvaluateOptions& options) {
  std::vector<std::string> unknown;
  for (const auto& [id, on] : controls.mbs_on)
    if (!world.find_site(id)) unknown.push_back(id);
  if (!unknown.empty()) {
    std::string list;
    for (const auto& id : unknown) list += (list.empty() ? "" : ", ") + id;
    throw Error(ErrorCode::kUnknownEntity, "unknown MBS id(s): " + list, unknown);
  }
  if (controls.ez_radius_m && !(*controls.ez_radius_m >= 0.0))
    throw Error(ErrorCode::kInvalidArgument, "exclusion zone radius must be >= 0");

  StepResult out;
  out.threshold_db = threshold_for(context, policy);
  out.context_id = context.id;
  out.active = world.registered_mask();
  const auto sites = world.sites();
  for (std::size_t i = 0; i < sites.size(); ++i) {
    if (controls.ez_radius_m && out.active[i] && sites[i].distance_2d_m < *controls.ez_radius_m) {
      out.active[i] = false;
      out.revoked[sites[i].id] = RevocationReason::kInsideEz;
    }
  }
  for (const auto& [id, on] : controls.mbs_on) {
    const std::size_t i = *world.find_site(id);
    out.active[i] = on;
    if (on) out.revoked.erase(id);
    else out.revoked.emplace(id, RevocationReason::kPolicy);
  }
  out.report = evaluate(world, out.active, context, options);
  out.pass = out.report.within(out.threshold_db);
  return out;
}

std::vector<SweepRow> sweep_ez(const World& world, const ContextSnapshot& context,
                               const ExclusionZonePolicy& range, const EvaluateOptions& options) {
  check_range(range);
  ActivationMask active = world.registered_mask();
  InterferenceReport report = evaluate(world, active, context, options);
  const auto sites = world.sites();
  std::vector<SweepRow> rows;
  const std::size_t steps = radius_count(range);
  rows.reserve(steps);
  for (std::size_t k = 0; k < steps; ++k) {
    const double r = radius_at(range, k);
    ActivationMask mask = active;
    for (std::size_t i = 0; i < sites.size(); ++i)
      if (sites[i].distance_2d_m < r) mask[i] = false;
    reaggregate(report, mask);
    rows.push_back({r, report.aggregate_in_db, count_active(mask)});
  }
  return rows;
}

}  // namespace coexist
