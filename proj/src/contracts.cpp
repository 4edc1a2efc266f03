#include "finlat/contracts.hpp"

#include <cmath>

namespace finlat {

double eval_payoff(const PayoffSpec& spec, const LatticeMarket& market,
                   const Lattice& lattice, int layer, int node_idx) {
  const LatticeNode& node = lattice.layers.at(layer).at(node_idx);
  switch (spec.kind) {
    case PayoffKind::constant:
      return spec.coeff;
    case PayoffKind::spot:
      return spec.coeff * node.spot;
    case PayoffKind::forward:
      return spec.coeff * (node.spot - spec.strike);
    case PayoffKind::call:
      return spec.coeff * std::max(node.spot - spec.strike, 0.0);
    case PayoffKind::put:
      return spec.coeff * std::max(spec.strike - node.spot, 0.0);
    case PayoffKind::straddle:
      return spec.coeff * std::fabs(node.spot - spec.strike);
    case PayoffKind::put_price: {
      const int mat = spec.maturity_step < 0 ? market.lattice.n_steps
                                             : spec.maturity_step;
      const auto prices =
          lattice_put_prices(market.params, spec.strike, layer, mat);
      return spec.coeff * prices.at(node.ups);
    }
    case PayoffKind::det_spot:
      return spec.coeff * lattice.det_value(layer, node_idx, spec.asset);
  }
  throw std::logic_error("unknown payoff kind");
}

double CashFlowStream::increment(const LatticeMarket& market,
                                 const Lattice& lattice, int step,
                                 int node_idx) const {
  double acc = 0.0;
  for (const Flow& f : flows)
    if (f.step == step) acc += eval_payoff(f.payoff, market, lattice, step, node_idx);
  return acc;
}

CashFlowStream CashFlowStream::negated() const {
  CashFlowStream out = *this;
  for (Flow& f : out.flows) f.payoff.coeff = -f.payoff.coeff;
  return out;
}

bool Adjustment::depends_on_solution() const {
  if (std::holds_alternative<BrokerShortX>(x)) return true;
  if (const auto* c = std::get_if<CollateralLegX>(&x)) return c->endogenous;
  return false;
}

std::vector<Adjustment> collateral_to_adjustments(const CollateralSpec& spec) {
  const double alpha_received =
      spec.convention == CollateralConvention::rehypothecated ? 1.0 : 0.0;
  CollateralLegX pos{true, spec.value, spec.gained_value_fraction,
                     spec.endogenous};
  CollateralLegX neg{false, spec.value, spec.gained_value_fraction,
                     spec.endogenous};
  Adjustment received{0, pos, alpha_received, spec.remuneration_received};
  Adjustment posted{1, neg, 1.0, spec.remuneration_posted};
  return {received, posted};
}

ConventionConstraints convention_to_constraints(const TradingConvention& conv) {
  using Mode = TradingConvention::Mode;
  ConventionConstraints out;
  out.haircut = conv.haircut;
  if (conv.haircut < 0.0 || conv.haircut >= 1.0)
    throw std::invalid_argument("convention: haircut outside [0,1)");
  switch (conv.mode) {
    case Mode::cash:
      out.funding_mode = FundingMode::cash;
      out.funding_positions = [](double, double, double) {
        return std::pair{0.0, 0.0};
      };
      return out;
    case Mode::broker_short_sale: {
      out.funding_mode = FundingMode::cash;
      out.funding_positions = [](double, double, double) {
        return std::pair{0.0, 0.0};
      };
      Adjustment margin{0, BrokerShortX{conv.extra_collateral, false}, 0.0,
                        conv.margin_rate};
      out.induced_adjustments.push_back(margin);
      if (conv.remunerate_extra && conv.extra_collateral > 0.0) {
        Adjustment extra{1, BrokerShortX{conv.extra_collateral, true}, 0.0,
                         conv.extra_rate};
        out.induced_adjustments.push_back(extra);
      }
      return out;
    }
    case Mode::repo_cash_driven: {
      const double h = conv.haircut;
      out.funding_mode = FundingMode::repo_symmetric;
      out.funding_positions = [h](double xi, double spot, double b) {
        const double pos = std::max(xi, 0.0);
        return std::pair{0.0, -(1.0 - h) * pos * spot / b};
      };
      return out;
    }
    case Mode::repo_security_driven: {
      const double h = conv.haircut;
      out.funding_mode = FundingMode::repo_symmetric;
      out.funding_positions = [h](double xi, double spot, double b) {
        const double neg = std::max(-xi, 0.0);
        return std::pair{(1.0 - h) * neg * spot / b, 0.0};
      };
      return out;
    }
    case Mode::repo_symmetric: {
      const double h = conv.haircut;
      out.funding_positions = [h](double xi, double spot, double b) {
        const double psi = -(1.0 - h) * xi * spot / b;
        return std::pair{std::max(psi, 0.0), std::min(psi, 0.0)};
      };
      return out;
    }
  }
  throw std::invalid_argument("convention: inconsistent mode");
}

Contract Contract::null_contract(int maturity_step) {
  Contract c;
  c.flows.maturity_step = maturity_step;
  return c;
}

bool Contract::is_local() const {
  for (const Adjustment& a : adjustments)
    if (!a.is_local()) return false;
  return true;
}

void Contract::compile() {
  if (collateral.has_value()) {
    for (const Adjustment& a : collateral_to_adjustments(*collateral)) {
      Adjustment copy = a;
      copy.index = static_cast<int>(adjustments.size());
      adjustments.push_back(copy);
    }
  }
  const auto constraints = convention_to_constraints(convention);
  for (const Adjustment& a : constraints.induced_adjustments) {
    Adjustment copy = a;
    copy.index = static_cast<int>(adjustments.size());
    adjustments.push_back(copy);
  }
}

double upsilon(double closeout_q, double flow_at_default, double collateral) {
  return closeout_q + flow_at_default - collateral;
}

double closeout_payoff(double upsilon_value, double collateral, NodeState kind,
                       double recovery_cpty, double recovery_hedger) {
  if (recovery_cpty < 0.0 || recovery_cpty > 1.0 || recovery_hedger < 0.0 ||
      recovery_hedger > 1.0)
    throw std::invalid_argument("recoveries must lie in [0,1]");
  const double up = std::max(upsilon_value, 0.0);
  const double um = std::max(-upsilon_value, 0.0);
  switch (kind) {
    case NodeState::settle_cpty:
      return collateral + recovery_cpty * up - um;
    case NodeState::settle_hedger:
      return collateral + up - recovery_hedger * um;
    case NodeState::settle_both:
      return collateral + recovery_cpty * up - recovery_hedger * um;
    default:
      throw std::invalid_argument("closeout: not a default event");
  }
}

std::vector<double> CcrStreams::ccr() const {
  std::vector<double> out(clean.size());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = credit_loss[i] + credit_gain[i] + replacement[i];
  return out;
}

CcrStreams ccr_cashflows(const LatticeMarket& market, const Lattice& lattice,
                         const Contract& contract, const NodeFn& closeout_q,
                         const NodeFn& collateral, const ScenarioPath& path) {
  const int n = lattice.n_steps;
  CcrStreams out;
  out.clean.assign(n + 1, 0.0);
  out.risky.assign(n + 1, 0.0);
  out.credit_loss.assign(n + 1, 0.0);
  out.credit_gain.assign(n + 1, 0.0);
  out.replacement.assign(n + 1, 0.0);

  // cumulative clean flows along the path
  for (int m = 0; m <= n; ++m) {
    const double da =
        contract.flows.increment(market, lattice, m, path.node_idx[m]);
    out.clean[m] = (m > 0 ? out.clean[m - 1] : 0.0) + da;
  }

  const int tau = path.tau_step;
  if (tau < 0 || tau > n) {
    out.risky = out.clean;  // no counterparty credit risk on this path
    return out;
  }

  const DefaultSpec& def = contract.defaults.value();
  const int node = path.node_idx[tau];
  const double q_tau = closeout_q ? closeout_q(lattice, tau, node) : 0.0;
  const double c_tau = collateral ? collateral(lattice, tau, node) : 0.0;
  const double da_tau = contract.flows.increment(market, lattice, tau, node);
  const double ups = upsilon(q_tau, da_tau, c_tau);
  const double k = closeout_payoff(ups, c_tau, path.default_kind,
                                   def.recovery_counterparty,
                                   def.recovery_hedger);
  out.upsilon_at_default = ups;
  out.closeout = k;

  const bool cpty_defaulted = path.default_kind == NodeState::settle_cpty ||
                              path.default_kind == NodeState::settle_both;
  const bool hedger_defaulted = path.default_kind == NodeState::settle_hedger ||
                                path.default_kind == NodeState::settle_both;
  const double a_before_tau = tau > 0 ? out.clean[tau - 1] : 0.0;
  for (int m = 0; m <= n; ++m) {
    if (m < tau) {
      out.risky[m] = out.clean[m];
    } else {
      out.risky[m] = a_before_tau + k;
      out.credit_loss[m] = cpty_defaulted
                               ? -(1.0 - def.recovery_counterparty) *
                                     std::max(ups, 0.0)
                               : 0.0;
      out.credit_gain[m] = hedger_defaulted
                               ? (1.0 - def.recovery_hedger) * std::max(-ups, 0.0)
                               : 0.0;
      // A_tau - A_t + Q_tau
      out.replacement[m] = out.clean[tau] - out.clean[m] + q_tau;
    }
  }
  return out;
}

double verify_ccr_decomposition(const CcrStreams& streams) {
  const auto ccr = streams.ccr();
  double worst = 0.0;
  for (std::size_t m = 0; m < streams.clean.size(); ++m) {
    const double resid =
        std::fabs(streams.risky[m] - streams.clean[m] - ccr[m]);
    worst = std::max(worst, resid);
  }
  return worst;
}

std::vector<Adjustment> mirror_adjustments_signflip(
    const std::vector<Adjustment>& adjustments) {
  std::vector<Adjustment> out;
  out.reserve(adjustments.size());
  for (const Adjustment& a : adjustments) {
    Adjustment m = a;
    if (auto* e = std::get_if<ExogenousX>(&m.x)) {
      NodeFn orig = e->path;
      e->path = [orig](const Lattice& lat, int layer, int node) {
        return -orig(lat, layer, node);
      };
    } else if (auto* c = std::get_if<CollateralLegX>(&m.x)) {
      if (c->endogenous)
        throw std::invalid_argument(
            "sign-flip mirror needs exogenous collateral");
      NodeFn orig = c->collateral;
      const bool pos = c->positive_part;
      // Y^k = -X^k: the mirror of C^+ is -C^+, expressed as a plain path
      ExogenousX flipped;
      flipped.path = [orig, pos](const Lattice& lat, int layer, int node) {
        const double cval = orig(lat, layer, node);
        const double leg = pos ? std::max(cval, 0.0) : -std::max(-cval, 0.0);
        return -leg;
      };
      m.x = flipped;
    } else {
      throw std::invalid_argument("sign-flip mirror: unsupported adjustment");
    }
    out.push_back(m);
  }
  return out;
}

}  // namespace finlat
