#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "coexist/context.hpp"
#include "coexist/iet.hpp"
#include "coexist/policy.hpp"

namespace coexist {

enum class RevocationReason { kInsideEz, kIndividualExcess, kPolicy };

std::string_view to_string(RevocationReason reason);
std::optional<RevocationReason> parse_revocation_reason(std::string_view text);

struct IterationRecord {
  std::size_t iteration = 0;  // 1-based
  double ez_radius_m = 0.0;
  std::optional<double> aggregate_in_db;  // nullopt: no interference
  std::size_t active_count = 0;
  double elapsed_ms = 0.0;
};

struct DsaDecision {
  double ez_radius_m = 0.0;
  std::map<std::string, RevocationReason> revoked;  // by MBS id
  std::vector<IterationRecord> trace;
  bool converged = false;
  double threshold_db = 0.0;
  std::string context_id;
  ActivationMask active;       // final state, indexed like World::sites()
  InterferenceReport report;   // final evaluation under `active`
};

struct LoopOptions {
  std::optional<ExclusionZonePolicy> exclusion_zone;  // overrides the policy's
  EvaluateOptions evaluate;
};

// Grows the exclusion zone in policy steps until the aggregate I/N is within
// the context's threshold. Unconverged at the maximum radius means every MBS
// is shut down and `converged` is false.
DsaDecision run_feedback_loop(const World& world, const ContextSnapshot& context,
                              const PolicySet& policy, const LoopOptions& options = {});

// Shrinks the radius by one step when the aggregate has at least `margin_db`
// of headroom, keeping the change only if the threshold still holds. The
// trace is left untouched.
DsaDecision de_exclusion_check(const World& world, const DsaDecision& decision,
                               const ContextSnapshot& context, const PolicySet& policy,
                               double margin_db, const LoopOptions& options = {});

struct Controls {
  std::optional<double> ez_radius_m;
  std::map<std::string, bool> mbs_on;  // explicit per-MBS state, applied after the EZ
};

Controls controls_from(const World& world, const DsaDecision& decision);

struct StepResult {
  InterferenceReport report;
  ActivationMask active;
  std::map<std::string, RevocationReason> revoked;
  double threshold_db = 0.0;
  bool pass = false;
  std::string context_id;
};

// One evaluation under explicit controls. Unknown MBS ids throw
// Error(kUnknownEntity) with the offenders in detail().
StepResult single_step(const World& world, const Controls& controls, const ContextSnapshot& context,
                       const PolicySet& policy, const EvaluateOptions& options = {});

struct SweepRow {
  double ez_radius_m = 0.0;
  std::optional<double> aggregate_in_db;
  std::size_t active_count = 0;
};

// Aggregate I/N and active count per radius with only the distance rule applied.
std::vector<SweepRow> sweep_ez(const World& world, const ContextSnapshot& context,
                               const ExclusionZonePolicy& range,
                               const EvaluateOptions& options = {});

}  // namespace coexist
