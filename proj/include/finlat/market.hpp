#pragma once
// Deterministic account curves, risky-asset lattices with dividends, and
// discounting conventions.

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace finlat {

// Piecewise-constant continuously-compounded rate curve on [0, horizon].
// The induced account value B_t = exp(int_0^t r(u) du) satisfies B_0 = 1.
struct RateCurve {
  std::vector<std::pair<double, double>> segments;  // (start time, rate)
  double horizon = 0.0;

  static RateCurve flat(double rate, double horizon);

  // exp of the exact integral of the rate over [0, t].
  double value(double t) const;
  double integral(double t) const;
  double rate_at(double t) const;
  void validate() const;

  bool operator==(const RateCurve&) const = default;
};

// growth factor of a deterministic account at time t
double account_value(const RateCurve& curve, double t);

struct AccountSet {
  RateCurve cash_lend;                 // unsecured lending
  RateCurve cash_borrow;               // unsecured borrowing
  std::vector<RateCurve> funding;      // per risky asset, equal lend/borrow
  void validate() const;               // borrow rate dominates lend rate
};

// Account selector for a signed endowment: lend if x >= 0, borrow otherwise.
const RateCurve& discount_basis(const AccountSet& accounts, double x);

// u -> B_u / B_t on the selected curve; equals 1 at u = t.
double discount_basis_from(const AccountSet& accounts, double t, double x,
                           double u);

enum class FundingMode : uint8_t {
  cash,           // positions funded from the cash account(s)
  repo_symmetric  // (1-h) xi S + psi B^i = 0 at every node
};

struct DividendSchedule {
  // absolute payment at end of the given step (same for all nodes at that step)
  std::vector<std::pair<int, double>> absolute;
  // optional proportional payment: amount = fraction * spot at the pay node
  double proportional = 0.0;

  double increment(int step, double spot_at_pay_node) const;
  bool node_independent() const { return proportional == 0.0; }
};

struct LatticeAssetParams {
  double spot = 100.0;
  double sigma = 0.2;        // used when explicit factors are absent
  double up = 0.0, down = 0.0;  // explicit multipliers; 0 means derive from sigma
  double prob_up = 0.5;      // real-world up probability, in (0,1)
  DividendSchedule dividends;
  FundingMode funding_mode = FundingMode::repo_symmetric;
  double haircut = 0.0;      // repo haircut h in [0,1)
};

// Piecewise-deterministic asset: worth 1 until a gate step U, then grows
// linearly at slope factor*K / P_U(K), where P_U(K) is the lattice price at
// the gate node of the put with the given strike and maturity. When `gated`
// is set the growth applies only on the event {2 P_U(K) > K}.
struct DeterministicAssetSpec {
  double strike = 100.0;
  int gate_step = 0;
  double factor = 1.0;
  bool gated = false;
  int put_maturity_step = -1;  // -1 means the lattice horizon
};

struct LatticeMarketParams {
  int n_steps = 1;
  double dt = 0.01;
  std::vector<LatticeAssetParams> assets;  // exactly one diffusive asset
  std::vector<DeterministicAssetSpec> deterministic_assets;
  AccountSet accounts;
};

struct DefaultHazards {
  // per-step conditional probabilities of the elementary default events
  double counterparty_first = 0.0;  // tau = tau_c < tau_h
  double hedger_first = 0.0;        // tau = tau_h < tau_c
  double simultaneous = 0.0;        // tau_h = tau_c
  double survive() const {
    return 1.0 - counterparty_first - hedger_first - simultaneous;
  }
  void validate() const;
  bool any() const {
    return counterparty_first > 0.0 || hedger_first > 0.0 || simultaneous > 0.0;
  }
};

enum class NodeState : uint8_t {
  alive,          // no default so far
  settle_cpty,    // counterparty defaulted first at this node's step
  settle_hedger,  // hedger defaulted first at this node's step
  settle_both,    // simultaneous default at this node's step
  closed          // past the first default
};

inline bool is_settlement(NodeState s) {
  return s == NodeState::settle_cpty || s == NodeState::settle_hedger ||
         s == NodeState::settle_both;
}

struct LatticeNode {
  int32_t layer = 0;
  int32_t ups = 0;       // number of up moves since step 0
  int32_t tag = -1;      // gate-node index for tagged lattices, else -1
  NodeState state = NodeState::alive;
  double spot = 0.0;     // diffusive asset price
  int32_t edge_begin = 0;
  int32_t edge_count = 0;
};

struct LatticeEdge {
  int32_t to = 0;      // node index within the next layer
  double q = 0.0;      // pricing-measure weight
  double p = 0.0;      // real-world weight
  bool up = false;     // market direction of the move
};

class Lattice {
 public:
  int n_steps = 0;
  double dt = 0.0;
  std::vector<std::vector<LatticeNode>> layers;
  std::vector<std::vector<LatticeEdge>> edges;  // per layer, indexed via nodes
  // deterministic asset values, per layer: node_count * n_det entries
  std::vector<std::vector<double>> det_values;
  int n_det = 0;
  bool plain = true;  // recombining, two successors j/j+1, untagged
  // account values at step times, index 0..n_steps
  std::vector<double> cash_lend, cash_borrow;
  std::vector<std::vector<double>> funding;  // per asset
  // gate info for tagged lattices
  int gate_step = -1;
  std::vector<double> gate_put_price;  // P_U(K) per gate node
  std::vector<uint8_t> gate_event;     // {2 P_U(K) > K} per gate node

  double time_of(int layer) const { return dt * layer; }
  const LatticeNode& node(int layer, int idx) const { return layers[layer][idx]; }
  std::vector<const LatticeEdge*> successors(int layer, int idx) const;
  double det_value(int layer, int idx, int det_asset) const {
    return det_values[layer][static_cast<std::size_t>(idx) * n_det + det_asset];
  }
  // real-world probability of visiting each node of a layer
  std::vector<double> layer_probabilities(int layer) const;
};

struct LatticeMarket {
  LatticeMarketParams params;
  Lattice lattice;

  double up_factor() const;
  double down_factor() const;
  // dividend amount paid at a node (end of the step arriving there)
  double dividend_at(const LatticeNode& node) const;
  // funding reference growth for the hedge asset over one step
  const std::vector<double>& hedge_funding_account() const;
};

// CRR parameterisation u = exp(sigma sqrt(dt)), d = 1/u; pricing-measure
// weights are chosen so that the funding-discounted cum-dividend price of
// the diffusive asset is a one-step martingale at every node.
LatticeMarket build_lattice(const LatticeMarketParams& params);

// Extends the alive lattice with per-step default events. Settlement nodes
// carry the default kind; closed nodes keep market branching.
Lattice extend_with_default_states(const LatticeMarket& market,
                                   const DefaultHazards& hazards);

// Discounted cum-dividend price of a diffusive asset at a node:
//   basis_t^{-1} S_t + sum_{u<=t} basis_u^{-1} dD_u.
// Requires node-independent dividends (the cumulative sum must be a node
// function). `funding_basis` selects the hedge funding account instead of
// the cash account chosen by the sign of x.
double discounted_cum_dividend_price(const LatticeMarket& market, int asset,
                                     double x, int layer, int node_idx,
                                     bool funding_basis = false);

// Single-rate CRR backward induction for a European put issued at
// `maturity_step`; returns values at every spot level of `at_step` (indexed
// by the number of up moves). This is the replication price in the
// (B^l, S^1) sub-model and is used to build the appendix deterministic
// assets.
std::vector<double> lattice_put_prices(const LatticeMarketParams& params,
                                       double strike, int at_step,
                                       int maturity_step);

// Non-recombining path-tree view of the market (one node per path, single
// predecessor everywhere). Exhaustive searches use it when a replayable
// node-indexed witness is required. Limited to small step counts.
Lattice treeify(const LatticeMarket& market, int max_steps = 16);

}  // namespace finlat
