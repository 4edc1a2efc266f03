#pragma once
// No-arbitrage machinery: null-contract arbitrage search, trading-desk
// supermartingale check, and the two non-regular reference models built on
// an extra piecewise-deterministic asset.

#include "finlat/pricing.hpp"

namespace finlat {

struct ArbitrageCertificate {
  enum class Kind : uint8_t { primary, desk, pricing };
  Kind kind = Kind::primary;
  TradingStrategy strategy;
  TerminalDistribution evidence;
  bool replayed_ok = false;  // self-financing + distribution recomputed
};

struct PrimarySearchReport {
  bool found = false;
  // minimal superhedging wealth of the null target minus the endowment;
  // negative values or strictness at zero witness an arbitrage
  double cost_gap = 0.0;
  bool strict_at_zero = false;
  std::string search_space;
  std::optional<ArbitrageCertificate> certificate;
};

// Exhaustive grid search for a strategy with discounted terminal wealth >= x
// everywhere and > x with positive probability, at zero price on the null
// contract. A "none" verdict is relative to the searched grid.
PrimarySearchReport search_primary_arbitrage(const LatticeMarket& market,
                                             double x,
                                             const SuperhedgeConfig& config,
                                             const Lattice* lattice = nullptr);

struct DeskCheckReport {
  bool martingale = false;        // one-step expected increments all zero
  bool supermartingale = false;   // all increments <= 0
  double max_abs_increment = 0.0;
  double max_increment = 0.0;
  int pairs = 0;
  int worst_layer = -1, worst_node = -1;
};

struct DeskCheckConfig {
  int pairs = 100;
  uint64_t seed = 12345;
  double x1 = 1.0, x2 = -0.5;
  double hedge_scale = 1.0;
  bool rehypothecated = true;     // collateral convention for both legs
  bool match_remuneration = true; // beta(Y) = beta(X)
  int tree_steps = 8;             // checks run on a path tree
};

// Samples admissible strategy pairs (long leg on (A, X), short leg on
// (-A, Y) with Y = -X) funded through the symmetric repo account and checks
// the one-step expected increments of the discounted combined wealth under
// the pricing measure.
DeskCheckReport desk_supermartingale_check(const LatticeMarket& market,
                                           const Contract& contract,
                                           const DeskCheckConfig& config);

struct AppendixModelParams {
  double spot = 100.0;
  double sigma = 0.2;
  double strike = 100.0;
  double gate_time = 0.5;   // U
  double horizon = 1.5;     // T
  int steps_to_gate = 8;    // lattice steps on [0, U]
  double rate_borrow = 0.0; // r^b (the lending rate is null in both models)
  double prob_up = 0.5;
};

struct ConstrainedModelReport {
  // replication checks
  double put_replication_borrowing = 0.0;  // max borrowed amount, should be 0
  double contract_replication_cost = 0.0;  // should vanish
  bool contract_no_borrowing = false;
  // dominance of the rollover strategy
  double rollover_terminal_floor = 0.0;    // 2K(T-U)
  double max_put_liability = 0.0;          // K
  bool dominance_guarantee = false;        // 2K(T-U) >= K
  bool dominance_on_lattice = false;       // strict on every path
  double min_strategy_wealth = 0.0;        // admissibility
  // strict-comparison exhibit
  double value_low_0 = 0.0, value_high_0 = 0.0;
  bool strict_comparison_fails = false;
  Regularity verdict = Regularity::regular;
  bool all_reproduced = false;
  ArbitrageCertificate pricing_certificate;
};

// Null-rate model with a borrowing ban: receiving the put price at the gate
// and rolling it into the deterministic asset strictly dominates the put
// liability when T - U >= 0.5, although the contract replicates at zero
// cost. The model is arbitrage-free against the null contract but not
// regular.
ConstrainedModelReport reproduce_appendix_a1(const AppendixModelParams& params);

struct UnconstrainedModelReport {
  double event_probability = 0.0;       // P(2 P_U(K) > K)
  int event_nodes = 0;
  double det_terminal_min = 0.0, det_terminal_max = 0.0;  // on the event
  PrimarySearchReport primary_search;
  // the put-then-rollover strategy sold at the replication price
  double put_price_0 = 0.0;
  double strategy_terminal_min = 0.0;
  double event_payout_floor = 0.0;      // 0.5 K
  bool payout_exceeds_floor = false;
  double value_low_0 = 0.0, value_high_0 = 0.0;
  bool strict_comparison_fails = false;
  Regularity verdict = Regularity::regular;
  bool all_reproduced = false;
  ArbitrageCertificate pricing_certificate;
};

// Differential-rate model without constraints: for r^b above the return of
// the deterministic asset the primary search finds nothing, yet selling the
// put at its replication price funds a strictly dominating strategy on the
// event {2 P_U(K) > K}.
UnconstrainedModelReport reproduce_appendix_a2(const AppendixModelParams& params);

// Replays a strategy through the wealth calculus and records the terminal
// distribution; sets replayed_ok when self-financing holds.
ArbitrageCertificate make_certificate(const LatticeMarket& market,
                                      const Lattice& lattice,
                                      TradingStrategy strategy,
                                      ArbitrageCertificate::Kind kind);

}  // namespace finlat
