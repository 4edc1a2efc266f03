#pragma once
// Self-financing calculus: portfolio value, adjusted gains, wealth, cash and
// funding adjustments, discounted and combined wealth, admissibility.

#include "finlat/contracts.hpp"

namespace finlat {

// Node-indexed holdings. Row m holds the positions carried over the step
// (t_m, t_{m+1}]; rows run 0..n_steps-1. The terminal portfolio value is the
// no-rebalance mark of row n_steps-1 plus the flows settled at maturity.
struct Portfolio {
  std::vector<std::vector<double>> xi;          // hedge-asset units
  std::vector<std::vector<double>> xi_det;      // node * n_det entries
  std::vector<std::vector<double>> psi_fund_l;  // funding account, lend side
  std::vector<std::vector<double>> psi_fund_b;  // funding account, borrow side
  std::vector<std::vector<double>> psi_cash_l;  // B^{0,l} units, >= 0
  std::vector<std::vector<double>> psi_cash_b;  // B^{0,b} units, <= 0

  static Portfolio zeros(const Lattice& lattice);
};

struct TradingStrategy {
  double endowment = 0.0;  // x
  double price = 0.0;      // p received at start
  int start_step = 0;
  Portfolio portfolio;
  Contract contract;
  // adjustment values per [k][layer][node]; filled by resolve_adjustments
  std::vector<std::vector<std::vector<double>>> resolved_x;
};

// Evaluates every adjustment of the contract at every node. Broker legs use
// the strategy's own position; endogenous collateral must already be
// resolved (the solver stores it when recovering a strategy).
void resolve_adjustments(const LatticeMarket& market, const Lattice& lattice,
                         TradingStrategy& strategy);

// sum_k alpha^k_t X^k_t at a node
double adjustment_cash(const TradingStrategy& strategy, int layer, int node);

// V^p: marked value of the holdings carried out of the node.
double portfolio_value(const LatticeMarket& market, const Lattice& lattice,
                       const TradingStrategy& strategy, int layer, int node);

// V = V^p - sum_k alpha^k X^k
double wealth(const LatticeMarket& market, const Lattice& lattice,
              const TradingStrategy& strategy, int layer, int node);

// V discounted back to the start step on the account selected by the sign
// of the endowment.
double discounted_wealth(const LatticeMarket& market, const Lattice& lattice,
                         const TradingStrategy& strategy, int layer, int node);

// One-step adjusted gains along an edge, including dividends, contract
// flows, adjustment cash-flow changes and remuneration drains.
double gains_increment(const LatticeMarket& market, const Lattice& lattice,
                       const TradingStrategy& strategy, int layer, int node,
                       const LatticeEdge& edge);

struct SelfFinancingReport {
  bool ok = false;
  double max_violation = 0.0;
  int worst_layer = -1;
  int worst_node = -1;
};

// Verifies the initial identity V^p = x + p + sum alpha_0 X_0 and the
// one-step identity along every edge of the lattice.
SelfFinancingReport is_self_financing(const LatticeMarket& market,
                                      const Lattice& lattice,
                                      const TradingStrategy& strategy,
                                      double tolerance = 1e-10);

struct PathWealth {
  std::vector<double> portfolio_value;  // V^p, rows start..n
  std::vector<double> wealth;           // V
  std::vector<double> discounted;       // V tilde
  std::vector<double> gains;            // G
  std::vector<double> cash_adjustment;  // varpi
  std::vector<double> funding_adjustment;
};

PathWealth wealth_along_path(const LatticeMarket& market,
                             const Lattice& lattice,
                             const TradingStrategy& strategy,
                             const ScenarioPath& path);

// varpi^k along a path: alpha_t X_t - sum_{u<t} X_u beta_u^{-1} dbeta_u.
std::vector<double> cash_adjustment_path(const LatticeMarket& market,
                                         const Lattice& lattice,
                                         const TradingStrategy& strategy,
                                         int adjustment, const ScenarioPath& path);

// Integration-by-parts form X_0 + sum beta_{u+1} d(X/beta)_u, valid for
// alpha == 1; agrees with cash_adjustment_path exactly.
std::vector<double> cash_adjustment_path_by_parts(
    const LatticeMarket& market, const Lattice& lattice,
    const TradingStrategy& strategy, int adjustment, const ScenarioPath& path);

// Funding spread terms relative to the cash accounts, minus remuneration
// spreads of the adjustment processes.
std::vector<double> funding_adjustment_path(const LatticeMarket& market,
                                            const Lattice& lattice,
                                            const TradingStrategy& strategy,
                                            const ScenarioPath& path);

// Terminal wealth at a terminal-layer node reached through `edge`.
double terminal_wealth(const LatticeMarket& market, const Lattice& lattice,
                       const TradingStrategy& strategy, int pre_layer,
                       int pre_node, const LatticeEdge& edge);

// Minimum of discounted wealth over all nodes (terminal values per edge).
double min_discounted_wealth(const LatticeMarket& market,
                             const Lattice& lattice,
                             const TradingStrategy& strategy);

bool is_admissible(const LatticeMarket& market, const Lattice& lattice,
                   const TradingStrategy& strategy,
                   double lower_bound = -1e9);

// Combined wealth of a hedged pair: long leg (x1, A, X) and short leg
// (x2, -A, Y), both priced at zero. Node-indexed sum of the two wealths.
double combined_wealth(const LatticeMarket& market, const Lattice& lattice,
                       const TradingStrategy& long_leg,
                       const TradingStrategy& short_leg, int layer, int node);

// Builds a self-financing strategy from node-indexed hedge positions: risky
// funding from the trading convention, cash positions from the forward
// wealth recursion. The recursion must recombine: arriving wealth has to
// agree across predecessors (always true on trees).
TradingStrategy make_strategy_forward(
    const LatticeMarket& market, const Lattice& lattice,
    const Contract& contract, double x, double p,
    const std::function<double(int layer, int node)>& hedge_units,
    const std::function<double(int layer, int node, int det_asset)>& det_units =
        nullptr,
    double consistency_tol = 1e-9);

struct TerminalDistribution {
  double minimum = 0.0, maximum = 0.0;
  double prob_above = 0.0;  // P(discounted terminal wealth > x)
  double prob_below = 0.0;  // P(discounted terminal wealth < x)
};

// Distribution of the discounted terminal wealth against the benchmark x,
// with real-world path probabilities.
TerminalDistribution terminal_discounted_wealth(const LatticeMarket& market,
                                                const Lattice& lattice,
                                                const TradingStrategy& strategy,
                                                double tolerance = 1e-9);

}  // namespace finlat
