#pragma once
// Price concepts: gained value, ex-dividend price, marked-to-market,
// offsetting price, superhedging bounds via exhaustive dynamic programming,
// regularity verdicts and the counterparty-credit-risk price split.

#include "finlat/bsde.hpp"

namespace finlat {

// exhaustive search would not fit the configured resource budget
struct SearchResourceError : std::runtime_error {
  explicit SearchResourceError(const std::string& what)
      : std::runtime_error(what) {}
};

struct PricingRun {
  Generator generator;
  BsdeSolution solution;
  std::vector<std::vector<double>> gained_value;  // p_t per node
};

// Replication cost path: solves the pricing equation with terminal value x
// and returns p_t = B^l_t (Y_t - x), with p_T = 0 for replicable contracts.
PricingRun gained_value(const LatticeMarket& market, const Contract& contract,
                        double x, const SolverParams& params = {});

// Ex-dividend price at step t: prices the remaining contract for the
// benchmark endowment x B^l_t; node-indexed at layer t.
std::vector<double> ex_dividend_price(const LatticeMarket& market,
                                      const Contract& contract, double x,
                                      int t, const SolverParams& params = {});

// p^m = -p_hat, nodewise
std::vector<std::vector<double>> marked_to_market(const PricingRun& run);

// Price of unwinding through the mirror contract (-A, Y): solves the
// residual adjustment-only contract on [t,T] from the replication wealth.
std::vector<double> offsetting_price(const LatticeMarket& market,
                                     const Contract& contract,
                                     const std::vector<Adjustment>& mirror,
                                     double x, int t,
                                     const SolverParams& params = {});

// ---------------------------------------------------------------------------
// Counterparty-credit-risk split

enum class CcrSplitMode : uint8_t {
  adjustments_on_clean,  // (A-sharp, X) = (A, X) + (A-CCR, 0)
  adjustments_on_ccr     // (A-sharp, X) = (A, 0) + (A-CCR, X)
};

struct CcrSplitReport {
  double y_full = 0.0, y_clean = 0.0, y_ccr = 0.0;
  double price_full = 0.0, price_clean = 0.0, price_ccr = 0.0;
  double gap = 0.0;  // price_full - price_clean - price_ccr
  double x = 0.0, x1 = 0.0, x2 = 0.0;
  CcrSplitMode mode = CcrSplitMode::adjustments_on_clean;
  int lattice_states = 0;
};

// Solves the full, clean and CCR pricing problems on the default-extended
// lattice and reports the additivity gap of the replication costs.
CcrSplitReport ccr_price_split(const LatticeMarket& market,
                               const Contract& contract, double x, double x1,
                               double x2,
                               CcrSplitMode mode = CcrSplitMode::adjustments_on_clean,
                               const SolverParams& params = {});

// flows of the counterparty-risky stream / CCR stream per node of the
// default-extended lattice (increment received on arrival)
struct RiskyFlowSet {
  std::function<double(int, int)> full;   // A-sharp increments
  std::function<double(int, int)> clean;  // A increments (base lattice)
  std::function<double(int, int)> ccr;    // A-CCR increments
  NodeFn closeout_q;
  NodeFn collateral;
};
RiskyFlowSet build_risky_flows(const LatticeMarket& market,
                               const Lattice& extended, const Contract& contract,
                               double x1, const SolverParams& params = {});

// ---------------------------------------------------------------------------
// Superhedging by exhaustive dynamic programming

struct HedgeGrid {
  double lo = -2.0, hi = 2.0, step = 0.01;
  std::vector<double> points() const;
};

struct SuperhedgeConfig {
  HedgeGrid hedge;                     // grid for the diffusive asset
  std::vector<HedgeGrid> det_grids;    // per deterministic asset
  bool allow_borrowing = true;         // cash borrowing constraint
  std::size_t max_states = 200'000'000;  // resource guard
};

struct SuperhedgeResult {
  // all four bounds coincide on a finite lattice; attainment separates them
  double superhedge_inf = 0.0;        // minimal superhedging cost
  double strict_superhedge_inf = 0.0;
  double fair_sup = 0.0;              // supremum of fair prices
  double subhedge_sup = 0.0;          // supremum of strict subhedging prices
  bool superhedge_attained = true;
  bool strict_attained_at_inf = false;  // strict superhedge at the infimum
  double grid_error = 0.0;
  bool ordering_ok = true;  // subhedge <= fair = superhedge <= strict
  // argmin decisions: hedge units per [layer][node], one row per asset
  std::vector<std::vector<double>> witness_xi;
  std::vector<std::vector<std::vector<double>>> witness_det;
};

SuperhedgeResult superhedge_bruteforce(const Generator& generator,
                                       const SuperhedgeConfig& config);

enum class Regularity : uint8_t { regular, not_regular };

struct RegularityReport {
  Regularity verdict = Regularity::regular;
  double replication_cost = 0.0;
  SuperhedgeResult bounds;
  std::string reason;
  // witness strategy when not regular
  bool has_witness = false;
  TradingStrategy witness;
};

// Regular iff, over the search grid, no superhedge is cheaper than
// replication and no strict superhedge exists at the replication cost.
RegularityReport regularity_verdict(const LatticeMarket& market,
                                    const Contract& contract, double x,
                                    const SuperhedgeConfig& config,
                                    const SolverParams& params = {});

// Builds the witness trading strategy from superhedge DP decisions with the
// given initial wealth; replayable through the wealth module.
TradingStrategy witness_strategy(const Generator& generator,
                                 const SuperhedgeResult& result,
                                 double initial_wealth);

}  // namespace finlat
