#pragma once
// Backward solver for the pricing equation: assembles the one-step driver
// from market and contract, solves by implicit backward induction on the
// lattice, checks comparison properties and recovers the replicating
// strategy.

#include "finlat/wealth.hpp"

namespace finlat {

struct SolverParams {
  double tolerance = 1e-12;
  int max_iterations = 200;
  double damping = 1.0;  // in (0,1]
};

// Raised when a contract declares a history-dependent adjustment: such
// pricing problems do not reduce to a nodewise backward recursion and are
// refused rather than solved unverifiably.
struct GlobalProblemError : std::runtime_error {
  explicit GlobalProblemError(const std::string& what)
      : std::runtime_error(what) {}
};

struct SolverError : std::runtime_error {
  explicit SolverError(const std::string& what) : std::runtime_error(what) {}
};

// One trading adjustment bound to the solve: remuneration account sampled at
// step times, exogenous values resolved per node, endogenous legs kept as
// rules of the running solution.
struct BoundAdjustment {
  double alpha = 1.0;
  std::vector<double> beta;  // values at step times
  // exogenous values [layer][node]; empty for endogenous legs
  std::vector<std::vector<double>> values;
  bool endogenous_collateral = false;
  bool positive_part = true;
  double gained_value_fraction = 0.0;
};

struct Generator {
  const LatticeMarket* market = nullptr;
  const Lattice* lattice = nullptr;
  double endowment = 0.0;  // x >= 0
  // hedge-asset funding: kappa = 0 pure symmetric repo, kappa in (0,1)
  // haircut financed from cash, kappa = 1 cash funding
  double kappa = 0.0;
  std::vector<double> funding;  // hedge funding account at step times
  std::vector<BoundAdjustment> adjustments;
  // contract flow received on arrival at a node
  std::function<double(int layer, int node)> flow;
  // forced value at settled nodes (effective-maturity handling); NaN = none
  std::function<double(int layer, int node)> early_terminal;
  Contract contract_copy;  // for strategy recovery
  double contraction_bound = 0.0;
};

// Builds the generator for a contract priced from endowment x >= 0 on the
// given lattice (the market's own lattice by default). Rejects x < 0 and
// global adjustments.
Generator build_generator(const LatticeMarket& market, const Contract& contract,
                          double x, const Lattice* lattice = nullptr);

struct BsdeSolution {
  int start_layer = 0;
  std::vector<std::vector<double>> y;   // layers start..n
  std::vector<std::vector<double>> z;   // hedge loading, layers start..n-1
  std::vector<std::vector<double>> xi;  // hedge units, layers start..n-1
  // resolved adjustment values [k][layer][node]
  std::vector<std::vector<std::vector<double>>> x_resolved;
  std::vector<int> iterations;  // worst case per layer
  double max_step_residual = 0.0;
  std::vector<double> terminal;
};

// Implicit backward induction from the terminal condition (values on the
// terminal layer) down to start_layer. Each node solves the piecewise-linear
// one-step equation exactly; endogenous adjustments go through a damped
// fixed-point iteration.
BsdeSolution solve_backward(const Generator& generator,
                            std::vector<double> terminal,
                            const SolverParams& params = {},
                            int start_layer = 0);

// gained value path p_t = B^{0,l}_t (Y_t - x)
std::vector<std::vector<double>> gained_value_grid(const Generator& generator,
                                                   const BsdeSolution& solution);

struct ComparisonReport {
  bool comparison_ok = false;       // Y2 >= Y1 everywhere
  bool strict_ok = false;           // Y1 = Y2 on an atom forces equal payoffs
  double min_gap = 0.0;             // min of Y2 - Y1 over all nodes
  std::vector<std::pair<int, int>> violations;  // (layer, node)
};

// Solves both terminal conditions with the same generator and checks the
// comparison and strict-comparison properties on lattice atoms.
ComparisonReport check_comparison(const Generator& generator,
                                  const std::vector<double>& terminal_low,
                                  const std::vector<double>& terminal_high,
                                  const SolverParams& params = {},
                                  double tolerance = 1e-9);

// Comparison verdict for externally produced value/payoff pairs (used for
// strategies that do not come from the solver).
ComparisonReport comparison_verdict(const Lattice& lattice, double y1_0,
                                    double y2_0,
                                    const std::vector<double>& payoff_low,
                                    const std::vector<double>& payoff_high,
                                    double tolerance = 1e-9);

// Rebuilds the replicating strategy: hedge units from the martingale
// loadings, funding positions from the trading convention, cash positions
// from the sign split of the net cash amount.
TradingStrategy recover_strategy(const Generator& generator,
                                 const BsdeSolution& solution);

}  // namespace finlat
