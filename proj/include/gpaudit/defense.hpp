#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "gpaudit/attacks.hpp"
#include "gpaudit/error.hpp"
#include "gpaudit/graphdata.hpp"
#include "gpaudit/prompt.hpp"
#include "gpaudit/rng.hpp"

namespace gpaudit {

// --- Laplace mechanism ---------------------------------------------------------

struct NoiseSpec {
  double beta = 0.0;
  Capability kind = Capability::kPosterior;
  uint64_t seed = 0;
};

inline void validate(const NoiseSpec& s) {
  check(s.beta >= 0.0, "noise: beta must be >= 0, got " + std::to_string(s.beta));
}

inline double sample_laplace(double beta, Rng& rng) {
  check(beta > 0.0, "sample_laplace: beta must be > 0");
  return rng.laplace(beta);
}

// Releases a noisy copy of the capability matrix. beta = 0 returns the input
// unchanged without consuming any randomness. Noisy posterior rows are NOT
// renormalized: noise lands on the released values as-is.
inline CapabilityMatrix laplace_perturb(const CapabilityMatrix& x, const NoiseSpec& spec) {
  validate(spec);
  check(x.kind == spec.kind, std::string("laplace_perturb: matrix kind ") +
                                 capability_name(x.kind) + " does not match spec kind " +
                                 capability_name(spec.kind));
  CapabilityMatrix out = x;
  out.noise_beta = spec.beta;
  if (spec.beta == 0.0) return out;
  Rng rng(derive_seed(spec.seed, "defense/laplace"));
  for (double& v : out.m.v) v += sample_laplace(spec.beta, rng);
  return out;
}

// --- Utility under defense -----------------------------------------------------

// Node-classification accuracy when predictions are derived from the released
// (possibly noisy) matrix instead of the model's internal state.
inline double utility_accuracy(const PromptState& st, const Graph& g,
                               const CapabilityMatrix& cap) {
  Tensor2 probs = posteriors_from_capability(st, g, cap);
  int hits = 0, total = 0;
  for (int v = 0; v < g.n; ++v) {
    if (g.labels[v] < 0) continue;
    int best = 0;
    for (int c = 1; c < probs.cols; ++c)
      if (probs.at(v, c) > probs.at(v, best)) best = c;
    hits += best == g.labels[v];
    ++total;
  }
  check(total > 0, "utility_accuracy: no labeled nodes");
  return static_cast<double>(hits) / total;
}

// --- Sweep driver ----------------------------------------------------------------

struct SweepAttack {
  AttackTask task = AttackTask::kAia;
  AttackerModelSpec model;
};

struct BetaSweepEntry {
  double beta = 0.0;
  std::string attack;  // AIA | LIA
  AttackResult result;
};

struct UtilityEntry {
  double beta = 0.0;
  double accuracy = 0.0;
};

struct BetaSweepResult {
  std::vector<BetaSweepEntry> attacks;
  std::vector<UtilityEntry> utility;
};

// Runs every attack at every noise level with the trained state, the split and
// all seeds held fixed, so the only thing that varies along a curve is beta.
// The noise stream is also shared across beta values: the perturbations are
// scaled copies of one another rather than independent redraws.
inline BetaSweepResult beta_sweep(const Graph& g, const PromptState& st, const Split& split,
                                  Capability kind, const std::vector<SweepAttack>& attacks,
                                  const std::vector<double>& betas, uint64_t seed) {
  check(!betas.empty(), "beta_sweep: empty beta list");
  check(!attacks.empty(), "beta_sweep: empty attack list");
  CapabilityMatrix clean = capability_extract(st, g, kind);
  uint64_t noise_seed = derive_seed(seed, "defense/noise");
  BetaSweepResult out;
  for (double beta : betas) {
    CapabilityMatrix released = laplace_perturb(clean, {beta, kind, noise_seed});
    for (const SweepAttack& a : attacks) {
      uint64_t aseed = derive_seed(seed, std::string("attack/") + attack_task_name(a.task) +
                                             "/" + attacker_kind_name(a.model.kind));
      AttackResult r = a.task == AttackTask::kAia
                           ? attack_aia(a.model, released, g, split, aseed)
                           : attack_lia(a.model, released, g, split, aseed);
      out.attacks.push_back({beta, attack_task_name(a.task), std::move(r)});
    }
    out.utility.push_back({beta, utility_accuracy(st, g, released)});
  }
  return out;
}

}  // namespace gpaudit
