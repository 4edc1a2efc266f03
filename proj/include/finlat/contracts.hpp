#pragma once
// Cash-flow streams, trading adjustments, collateral conventions, closeout
// payoff and the counterparty-credit-risk decomposition.

#include <functional>
#include <optional>
#include <variant>

#include "finlat/market.hpp"

namespace finlat {

// node-measurable scalar on a lattice
using NodeFn = std::function<double(const Lattice&, int layer, int node_idx)>;

enum class PayoffKind : uint8_t {
  constant,
  spot,       // S at the node
  forward,    // S - K
  call,       // (S - K)^+
  put,        // (K - S)^+
  straddle,   // |S - K|
  put_price,  // single-rate lattice price of the put(K, maturity_step)
  det_spot    // deterministic asset value at the node
};

struct PayoffSpec {
  PayoffKind kind = PayoffKind::constant;
  double strike = 0.0;
  double coeff = 1.0;
  int asset = 0;               // det asset index for det_spot
  int maturity_step = -1;      // put_price only; -1 = lattice horizon

  bool operator==(const PayoffSpec&) const = default;
};

// Evaluates a payoff at a node of the market's lattice (or of an extension
// that preserves spot and ups).
double eval_payoff(const PayoffSpec& spec, const LatticeMarket& market,
                   const Lattice& lattice, int layer, int node_idx);

struct Flow {
  int step = 0;
  PayoffSpec payoff;
  bool operator==(const Flow&) const = default;
};

struct CashFlowStream {
  std::vector<Flow> flows;
  int maturity_step = 0;

  // sum of the amounts scheduled exactly at `step`
  double increment(const LatticeMarket& market, const Lattice& lattice,
                   int step, int node_idx) const;
  CashFlowStream negated() const;
};

// ---------------------------------------------------------------------------
// Trading adjustments X^k with usable fraction alpha^k and remuneration beta^k

struct ExogenousX {
  NodeFn path;  // node-measurable value
};
struct CollateralLegX {
  bool positive_part = true;  // X^1 = C^+, X^2 = -C^-
  // C as exogenous node function; empty when the collateral rule is
  // endogenous (bound inside the solver)
  NodeFn collateral;
  double gained_value_fraction = 0.0;  // endogenous rule C_t = fraction * p_t
  bool endogenous = false;
};
struct BrokerShortX {
  double extra_collateral = 0.0;  // delta^i
  bool remuneration_leg = false;  // X^{i+d} = delta (xi)^- S, else X^i
};
// Declared history-dependent functional: tagged global, rejected by the
// pricing engine.
struct GlobalX {
  std::string name;
};

struct Adjustment {
  int index = 0;
  std::variant<ExogenousX, CollateralLegX, BrokerShortX, GlobalX> x;
  double alpha = 1.0;  // fraction entering the portfolio value
  RateCurve beta;      // remuneration account, beta_0 = 1

  bool is_local() const { return !std::holds_alternative<GlobalX>(x); }
  bool depends_on_solution() const;
};

enum class CollateralConvention : uint8_t { rehypothecated, segregated };

struct CollateralSpec {
  // exogenous value or endogenous rule C_t = fraction * gained value
  NodeFn value;                        // empty when endogenous
  double gained_value_fraction = 0.0;
  bool endogenous = false;
  CollateralConvention convention = CollateralConvention::rehypothecated;
  RateCurve remuneration_received;     // beta^1, for C^+
  RateCurve remuneration_posted;       // beta^2, for C^-
};

// X^1 = C^+, X^2 = -C^- with the convention's alphas attached.
std::vector<Adjustment> collateral_to_adjustments(const CollateralSpec& spec);

// ---------------------------------------------------------------------------
// Trading conventions for the hedge asset

struct TradingConvention {
  enum class Mode : uint8_t {
    cash,
    broker_short_sale,
    repo_cash_driven,
    repo_security_driven,
    repo_symmetric
  };
  Mode mode = Mode::repo_symmetric;
  double haircut = 0.0;          // h^i (symmetric) or h^{i,b}/h^{i,l}
  double extra_collateral = 0.0; // delta^i for broker short sales
  bool remunerate_extra = false; // keep the X^{i+d} leg
  RateCurve margin_rate;         // beta^i, broker margin account
  RateCurve extra_rate;          // beta^{i+d}
};

struct ConventionConstraints {
  FundingMode funding_mode = FundingMode::repo_symmetric;
  double haircut = 0.0;
  // psi^{i,l}, psi^{i,b} from the position and prices
  std::function<std::pair<double, double>(double xi, double spot,
                                          double funding_value)>
      funding_positions;
  std::vector<Adjustment> induced_adjustments;  // broker short-sale legs
};

ConventionConstraints convention_to_constraints(const TradingConvention& conv);

// ---------------------------------------------------------------------------
// Counterparty credit risk

enum class CloseoutRule : uint8_t { exogenous, clean_price };

struct DefaultSpec {
  DefaultHazards hazards;
  double recovery_counterparty = 1.0;  // R_c
  double recovery_hedger = 1.0;        // R_h
  CloseoutRule closeout = CloseoutRule::clean_price;
  NodeFn closeout_value;  // Q for the exogenous rule
};

struct Contract {
  CashFlowStream flows;
  std::vector<Adjustment> adjustments;
  std::optional<CollateralSpec> collateral;  // compiled into `adjustments`
  std::optional<DefaultSpec> defaults;
  TradingConvention convention;

  static Contract null_contract(int maturity_step);
  bool is_local() const;
  // appends the collateral legs to `adjustments`
  void compile();
};

// amount the counterparty owes at the first default
double upsilon(double closeout_q, double flow_at_default, double collateral);

// CSA closeout payoff
double closeout_payoff(double upsilon_value, double collateral, NodeState kind,
                       double recovery_cpty, double recovery_hedger);

// One realised scenario through a (default-extended) lattice.
struct ScenarioPath {
  std::vector<int> node_idx;  // one node per layer, 0..n_steps
  int tau_step = -1;          // first default step, -1 if none
  NodeState default_kind = NodeState::alive;
};

// Pathwise streams evaluated on a scenario: cumulative A, A-sharp, CL, CG,
// CR per step. Q and C are node functions resolved on the path.
struct CcrStreams {
  std::vector<double> clean;      // A_t
  std::vector<double> risky;      // A-sharp_t
  std::vector<double> credit_loss;
  std::vector<double> credit_gain;
  std::vector<double> replacement;
  std::vector<double> ccr() const;  // CL + CG + CR
  double upsilon_at_default = 0.0;
  double closeout = 0.0;  // payoff exchanged at tau
};

CcrStreams ccr_cashflows(const LatticeMarket& market, const Lattice& lattice,
                         const Contract& contract, const NodeFn& closeout_q,
                         const NodeFn& collateral, const ScenarioPath& path);

// max_t |A-sharp_t - A_t - A-CCR_t| over the path
double verify_ccr_decomposition(const CcrStreams& streams);

// Mirror adjustments with Y^k = -X^k, same alpha and beta (sign-flip
// convention; the adjustments of the mirror contract are a modelling choice
// and may also be supplied independently).
std::vector<Adjustment> mirror_adjustments_signflip(
    const std::vector<Adjustment>& adjustments);

}  // namespace finlat
