#include "finlat/wealth.hpp"

#include <cmath>

namespace finlat {

Portfolio Portfolio::zeros(const Lattice& lattice) {
  Portfolio p;
  const int n = lattice.n_steps;
  auto sized = [&](int m) {
    return std::vector<double>(lattice.layers[m].size(), 0.0);
  };
  p.xi.resize(n);
  p.psi_fund_l.resize(n);
  p.psi_fund_b.resize(n);
  p.psi_cash_l.resize(n);
  p.psi_cash_b.resize(n);
  p.xi_det.resize(n);
  for (int m = 0; m < n; ++m) {
    p.xi[m] = sized(m);
    p.psi_fund_l[m] = sized(m);
    p.psi_fund_b[m] = sized(m);
    p.psi_cash_l[m] = sized(m);
    p.psi_cash_b[m] = sized(m);
    p.xi_det[m].assign(lattice.layers[m].size() * std::max(lattice.n_det, 1),
                       0.0);
  }
  return p;
}

namespace {

double beta_value(const Adjustment& a, double t) { return a.beta.value(t); }

double det_position_value(const Lattice& lattice, const Portfolio& p, int layer,
                          int node) {
  double acc = 0.0;
  for (int k = 0; k < lattice.n_det; ++k)
    acc += p.xi_det[layer][node * lattice.n_det + k] *
           lattice.det_value(layer, node, k);
  return acc;
}

}  // namespace

void resolve_adjustments(const LatticeMarket& market, const Lattice& lattice,
                         TradingStrategy& strategy) {
  const auto& adjs = strategy.contract.adjustments;
  strategy.resolved_x.assign(adjs.size(), {});
  for (std::size_t k = 0; k < adjs.size(); ++k) {
    auto& grid = strategy.resolved_x[k];
    grid.resize(lattice.n_steps + 1);
    for (int m = 0; m <= lattice.n_steps; ++m) {
      grid[m].assign(lattice.layers[m].size(), 0.0);
      for (std::size_t i = 0; i < lattice.layers[m].size(); ++i) {
        const Adjustment& a = adjs[k];
        double value = 0.0;
        if (const auto* e = std::get_if<ExogenousX>(&a.x)) {
          value = e->path ? e->path(lattice, m, static_cast<int>(i)) : 0.0;
        } else if (const auto* c = std::get_if<CollateralLegX>(&a.x)) {
          if (c->endogenous)
            throw std::invalid_argument(
                "endogenous collateral must be resolved by the solver");
          const double cv =
              c->collateral ? c->collateral(lattice, m, static_cast<int>(i)) : 0.0;
          value = c->positive_part ? std::max(cv, 0.0) : -std::max(-cv, 0.0);
        } else if (const auto* b = std::get_if<BrokerShortX>(&a.x)) {
          const double xi =
              m < lattice.n_steps ? strategy.portfolio.xi[m][i] : 0.0;
          const double neg = std::max(-xi, 0.0);
          const double spot = lattice.layers[m][i].spot;
          value = b->remuneration_leg
                      ? b->extra_collateral * neg * spot
                      : -(1.0 + b->extra_collateral) * neg * spot;
        } else {
          throw std::invalid_argument("global adjustment cannot be resolved");
        }
        grid[m][i] = value;
      }
    }
  }
  (void)market;
}

double adjustment_cash(const TradingStrategy& strategy, int layer, int node) {
  double acc = 0.0;
  for (std::size_t k = 0; k < strategy.contract.adjustments.size(); ++k)
    acc += strategy.contract.adjustments[k].alpha *
           strategy.resolved_x[k][layer][node];
  return acc;
}

double portfolio_value(const LatticeMarket& market, const Lattice& lattice,
                       const TradingStrategy& strategy, int layer, int node) {
  const Portfolio& p = strategy.portfolio;
  if (layer >= lattice.n_steps)
    throw std::domain_error("portfolio value at maturity is edge-dependent");
  const LatticeNode& nd = lattice.layers[layer][node];
  const auto& fund = lattice.funding[0];
  double acc = p.xi[layer][node] * nd.spot +
               det_position_value(lattice, p, layer, node) +
               p.psi_fund_l[layer][node] * fund[layer] +
               p.psi_fund_b[layer][node] * fund[layer] +
               p.psi_cash_l[layer][node] * lattice.cash_lend[layer] +
               p.psi_cash_b[layer][node] * lattice.cash_borrow[layer];
  return acc;
}

double wealth(const LatticeMarket& market, const Lattice& lattice,
              const TradingStrategy& strategy, int layer, int node) {
  return portfolio_value(market, lattice, strategy, layer, node) -
         adjustment_cash(strategy, layer, node);
}

double discounted_wealth(const LatticeMarket& market, const Lattice& lattice,
                         const TradingStrategy& strategy, int layer, int node) {
  const auto& basis = strategy.endowment >= 0.0 ? lattice.cash_lend
                                                : lattice.cash_borrow;
  const double factor = basis[layer] / basis[strategy.start_step];
  return wealth(market, lattice, strategy, layer, node) / factor;
}

double gains_increment(const LatticeMarket& market, const Lattice& lattice,
                       const TradingStrategy& strategy, int layer, int node,
                       const LatticeEdge& edge) {
  const Portfolio& p = strategy.portfolio;
  const LatticeNode& cur = lattice.layers[layer][node];
  const LatticeNode& nxt = lattice.layers[layer + 1][edge.to];
  const auto& fund = lattice.funding[0];
  const double t0 = lattice.time_of(layer);

  double acc = p.xi[layer][node] *
               (nxt.spot - cur.spot + market.dividend_at(nxt));
  for (int k = 0; k < lattice.n_det; ++k)
    acc += p.xi_det[layer][node * lattice.n_det + k] *
           (lattice.det_value(layer + 1, edge.to, k) -
            lattice.det_value(layer, node, k));
  const double dfund = fund[layer + 1] - fund[layer];
  acc += (p.psi_fund_l[layer][node] + p.psi_fund_b[layer][node]) * dfund;
  acc += p.psi_cash_l[layer][node] *
         (lattice.cash_lend[layer + 1] - lattice.cash_lend[layer]);
  acc += p.psi_cash_b[layer][node] *
         (lattice.cash_borrow[layer + 1] - lattice.cash_borrow[layer]);

  for (std::size_t k = 0; k < strategy.contract.adjustments.size(); ++k) {
    const Adjustment& a = strategy.contract.adjustments[k];
    const double x_now = strategy.resolved_x[k][layer][node];
    const double x_next = strategy.resolved_x[k][layer + 1][edge.to];
    const double b_now = beta_value(a, t0);
    const double b_next = beta_value(a, lattice.time_of(layer + 1));
    acc += a.alpha * (x_next - x_now);
    acc -= x_now * (b_next - b_now) / b_now;
  }
  acc += strategy.contract.flows.increment(market, lattice, layer + 1, edge.to);
  return acc;
}

SelfFinancingReport is_self_financing(const LatticeMarket& market,
                                      const Lattice& lattice,
                                      const TradingStrategy& strategy,
                                      double tolerance) {
  SelfFinancingReport report;
  const int start = strategy.start_step;
  double worst = 0.0;
  int wl = -1, wn = -1;
  for (std::size_t i = 0; i < lattice.layers[start].size(); ++i) {
    const double lhs =
        portfolio_value(market, lattice, strategy, start, static_cast<int>(i));
    const double rhs = strategy.endowment + strategy.price +
                       adjustment_cash(strategy, start, static_cast<int>(i));
    const double viol = std::fabs(lhs - rhs);
    if (viol > worst) {
      worst = viol;
      wl = start;
      wn = static_cast<int>(i);
    }
  }
  // one-step identity along every edge; terminal edges define V^p there
  for (int m = start; m < lattice.n_steps - 1; ++m) {
    for (std::size_t i = 0; i < lattice.layers[m].size(); ++i) {
      const LatticeNode& node = lattice.layers[m][i];
      const double vp = portfolio_value(market, lattice, strategy, m,
                                        static_cast<int>(i));
      for (int e = 0; e < node.edge_count; ++e) {
        const LatticeEdge& edge = lattice.edges[m][node.edge_begin + e];
        const double vp_next =
            portfolio_value(market, lattice, strategy, m + 1, edge.to);
        const double dg = gains_increment(market, lattice, strategy, m,
                                          static_cast<int>(i), edge);
        const double viol = std::fabs(vp_next - (vp + dg));
        if (viol > worst) {
          worst = viol;
          wl = m + 1;
          wn = edge.to;
        }
      }
    }
  }
  report.max_violation = worst;
  report.worst_layer = wl;
  report.worst_node = wn;
  report.ok = worst <= tolerance;
  return report;
}

double terminal_wealth(const LatticeMarket& market, const Lattice& lattice,
                       const TradingStrategy& strategy, int pre_layer,
                       int pre_node, const LatticeEdge& edge) {
  const double vp = portfolio_value(market, lattice, strategy, pre_layer, pre_node);
  const double dg =
      gains_increment(market, lattice, strategy, pre_layer, pre_node, edge);
  return vp + dg - adjustment_cash(strategy, pre_layer + 1, edge.to);
}

PathWealth wealth_along_path(const LatticeMarket& market,
                             const Lattice& lattice,
                             const TradingStrategy& strategy,
                             const ScenarioPath& path) {
  const int n = lattice.n_steps;
  const int start = strategy.start_step;
  PathWealth out;
  const std::size_t len = n - start + 1;
  out.portfolio_value.resize(len);
  out.wealth.resize(len);
  out.discounted.resize(len);
  out.gains.resize(len);
  out.cash_adjustment.assign(len, 0.0);
  out.funding_adjustment = funding_adjustment_path(market, lattice, strategy, path);

  for (std::size_t k = 0; k < strategy.contract.adjustments.size(); ++k) {
    const auto varpi =
        cash_adjustment_path(market, lattice, strategy, static_cast<int>(k), path);
    for (std::size_t i = 0; i < len; ++i) out.cash_adjustment[i] += varpi[i];
  }

  const auto& basis = strategy.endowment >= 0.0 ? lattice.cash_lend
                                                : lattice.cash_borrow;
  double vp = strategy.endowment + strategy.price +
              adjustment_cash(strategy, start, path.node_idx[start]);
  for (int m = start; m <= n; ++m) {
    const std::size_t i = m - start;
    if (m > start) {
      const int prev = m - 1;
      const LatticeNode& pn = lattice.layers[prev][path.node_idx[prev]];
      const LatticeEdge* used = nullptr;
      for (int e = 0; e < pn.edge_count; ++e) {
        const LatticeEdge& cand = lattice.edges[prev][pn.edge_begin + e];
        if (cand.to == path.node_idx[m]) {
          used = &cand;
          break;
        }
      }
      if (used == nullptr) throw std::invalid_argument("path is not connected");
      vp += gains_increment(market, lattice, strategy, prev,
                            path.node_idx[prev], *used);
    }
    out.portfolio_value[i] = vp;
    out.gains[i] = vp - strategy.endowment - strategy.price;
    out.wealth[i] = vp - adjustment_cash(strategy, m, path.node_idx[m]);
    out.discounted[i] = out.wealth[i] / (basis[m] / basis[start]);
  }
  return out;
}

std::vector<double> cash_adjustment_path(const LatticeMarket& market,
                                         const Lattice& lattice,
                                         const TradingStrategy& strategy,
                                         int adjustment,
                                         const ScenarioPath& path) {
  (void)market;
  const int n = lattice.n_steps;
  const int start = strategy.start_step;
  const Adjustment& a = strategy.contract.adjustments.at(adjustment);
  std::vector<double> out(n - start + 1);
  double drain = 0.0;
  for (int m = start; m <= n; ++m) {
    const double x_now = strategy.resolved_x[adjustment][m][path.node_idx[m]];
    out[m - start] = a.alpha * x_now - drain;
    if (m < n) {
      const double b_now = a.beta.value(lattice.time_of(m));
      const double b_next = a.beta.value(lattice.time_of(m + 1));
      drain += x_now * (b_next - b_now) / b_now;
    }
  }
  return out;
}

std::vector<double> cash_adjustment_path_by_parts(
    const LatticeMarket& market, const Lattice& lattice,
    const TradingStrategy& strategy, int adjustment, const ScenarioPath& path) {
  (void)market;
  const int n = lattice.n_steps;
  const int start = strategy.start_step;
  const Adjustment& a = strategy.contract.adjustments.at(adjustment);
  std::vector<double> out(n - start + 1);
  const double x0 = strategy.resolved_x[adjustment][start][path.node_idx[start]];
  double acc = x0;
  out[0] = x0;
  for (int m = start; m < n; ++m) {
    const double b_now = a.beta.value(lattice.time_of(m));
    const double b_next = a.beta.value(lattice.time_of(m + 1));
    const double x_now = strategy.resolved_x[adjustment][m][path.node_idx[m]];
    const double x_next =
        strategy.resolved_x[adjustment][m + 1][path.node_idx[m + 1]];
    acc += b_next * (x_next / b_next - x_now / b_now);
    out[m + 1 - start] = acc;
  }
  return out;
}

std::vector<double> funding_adjustment_path(const LatticeMarket& market,
                                            const Lattice& lattice,
                                            const TradingStrategy& strategy,
                                            const ScenarioPath& path) {
  const int n = lattice.n_steps;
  const int start = strategy.start_step;
  const Portfolio& p = strategy.portfolio;
  const auto& fund = lattice.funding[0];
  std::vector<double> out(n - start + 1, 0.0);
  double acc = 0.0;
  out[0] = 0.0;
  for (int m = start; m < n; ++m) {
    const int node = path.node_idx[m];
    const double bl = lattice.cash_lend[m], bl1 = lattice.cash_lend[m + 1];
    const double bb = lattice.cash_borrow[m], bb1 = lattice.cash_borrow[m + 1];
    // lend-side funding units measured against B^{0,l}, borrow side against
    // B^{0,b}
    const double hat_l = fund[m] / bl, hat_l1 = fund[m + 1] / bl1;
    const double hat_b = fund[m] / bb, hat_b1 = fund[m + 1] / bb1;
    acc += p.psi_fund_l[m][node] * ((hat_l - 1.0) * (bl1 - bl) + bl * (hat_l1 - hat_l));
    acc += p.psi_fund_b[m][node] * ((hat_b - 1.0) * (bb1 - bb) + bb * (hat_b1 - hat_b));
    for (std::size_t k = 0; k < strategy.contract.adjustments.size(); ++k) {
      const Adjustment& a = strategy.contract.adjustments[k];
      const double x = strategy.resolved_x[k][m][node];
      const double beta = a.beta.value(lattice.time_of(m));
      const double beta1 = a.beta.value(lattice.time_of(m + 1));
      const double bhat_l = beta / bl, bhat_l1 = beta1 / bl1;
      const double bhat_b = beta / bb, bhat_b1 = beta1 / bb1;
      acc -= std::max(x, 0.0) / bhat_l * (bhat_l1 - bhat_l);
      acc += std::max(-x, 0.0) / bhat_b * (bhat_b1 - bhat_b);
    }
    out[m + 1 - start] = acc;
  }
  return out;
}

double min_discounted_wealth(const LatticeMarket& market,
                             const Lattice& lattice,
                             const TradingStrategy& strategy) {
  const auto& basis = strategy.endowment >= 0.0 ? lattice.cash_lend
                                                : lattice.cash_borrow;
  const int start = strategy.start_step;
  double worst = std::numeric_limits<double>::infinity();
  for (int m = start; m < lattice.n_steps; ++m) {
    const double disc = basis[m] / basis[start];
    for (std::size_t i = 0; i < lattice.layers[m].size(); ++i)
      worst = std::min(worst,
                       wealth(market, lattice, strategy, m, static_cast<int>(i)) /
                           disc);
  }
  const int pre = lattice.n_steps - 1;
  const double disc_t = basis[lattice.n_steps] / basis[start];
  for (std::size_t i = 0; i < lattice.layers[pre].size(); ++i) {
    const LatticeNode& node = lattice.layers[pre][i];
    for (int e = 0; e < node.edge_count; ++e) {
      const LatticeEdge& edge = lattice.edges[pre][node.edge_begin + e];
      worst = std::min(worst, terminal_wealth(market, lattice, strategy, pre,
                                              static_cast<int>(i), edge) /
                                  disc_t);
    }
  }
  return worst;
}

bool is_admissible(const LatticeMarket& market, const Lattice& lattice,
                   const TradingStrategy& strategy, double lower_bound) {
  return min_discounted_wealth(market, lattice, strategy) >= lower_bound;
}

double combined_wealth(const LatticeMarket& market, const Lattice& lattice,
                       const TradingStrategy& long_leg,
                       const TradingStrategy& short_leg, int layer, int node) {
  return wealth(market, lattice, long_leg, layer, node) +
         wealth(market, lattice, short_leg, layer, node);
}

TradingStrategy make_strategy_forward(
    const LatticeMarket& market, const Lattice& lattice,
    const Contract& contract, double x, double p,
    const std::function<double(int, int)>& hedge_units,
    const std::function<double(int, int, int)>& det_units,
    double consistency_tol) {
  const int n = lattice.n_steps;
  TradingStrategy strat;
  strat.endowment = x;
  strat.price = p;
  strat.contract = contract;
  strat.portfolio = Portfolio::zeros(lattice);
  for (int m = 0; m < n; ++m) {
    for (std::size_t i = 0; i < lattice.layers[m].size(); ++i) {
      strat.portfolio.xi[m][i] = hedge_units
                                     ? hedge_units(m, static_cast<int>(i))
                                     : 0.0;
      for (int k = 0; k < lattice.n_det; ++k)
        strat.portfolio.xi_det[m][i * lattice.n_det + k] =
            det_units ? det_units(m, static_cast<int>(i), k) : 0.0;
    }
  }
  resolve_adjustments(market, lattice, strat);

  const auto constraints = convention_to_constraints(contract.convention);
  const bool repo = constraints.funding_mode == FundingMode::repo_symmetric;
  const double kappa = repo ? constraints.haircut : 1.0;
  const auto& fund = lattice.funding[0];

  std::vector<std::vector<double>> wealth_grid(n + 1);
  std::vector<std::vector<uint8_t>> seen(n + 1);
  for (int m = 0; m <= n; ++m) {
    wealth_grid[m].assign(lattice.layers[m].size(), 0.0);
    seen[m].assign(lattice.layers[m].size(), 0);
  }
  wealth_grid[0][0] = x + p;
  seen[0][0] = 1;
  for (int m = 0; m < n; ++m) {
    for (std::size_t i = 0; i < lattice.layers[m].size(); ++i) {
      if (!seen[m][i]) continue;
      const LatticeNode& node = lattice.layers[m][i];
      const double spot = node.spot;
      const double xi = strat.portfolio.xi[m][i];
      if (repo) {
        const auto [pl, pb] =
            constraints.funding_positions(xi, spot, fund[m]);
        strat.portfolio.psi_fund_l[m][i] = pl;
        strat.portfolio.psi_fund_b[m][i] = pb;
      }
      double det_now = 0.0;
      for (int k = 0; k < lattice.n_det; ++k)
        det_now += strat.portfolio.xi_det[m][i * lattice.n_det + k] *
                   lattice.det_value(m, static_cast<int>(i), k);
      const double alpha_x = adjustment_cash(strat, m, static_cast<int>(i));
      const double net =
          wealth_grid[m][i] + alpha_x - kappa * xi * spot - det_now;
      strat.portfolio.psi_cash_l[m][i] =
          std::max(net, 0.0) / lattice.cash_lend[m];
      strat.portfolio.psi_cash_b[m][i] =
          std::min(net, 0.0) / lattice.cash_borrow[m];
      for (int e = 0; e < node.edge_count; ++e) {
        const LatticeEdge& edge = lattice.edges[m][node.edge_begin + e];
        const double vp_next =
            portfolio_value(market, lattice, strat, m, static_cast<int>(i)) +
            gains_increment(market, lattice, strat, m, static_cast<int>(i),
                            edge);
        const double v_next =
            vp_next - adjustment_cash(strat, m + 1, edge.to);
        if (seen[m + 1][edge.to] &&
            std::fabs(wealth_grid[m + 1][edge.to] - v_next) > consistency_tol)
          throw std::invalid_argument(
              "strategy wealth does not recombine; use a path tree");
        wealth_grid[m + 1][edge.to] = v_next;
        seen[m + 1][edge.to] = 1;
      }
    }
  }
  return strat;
}

TerminalDistribution terminal_discounted_wealth(const LatticeMarket& market,
                                                const Lattice& lattice,
                                                const TradingStrategy& strategy,
                                                double tolerance) {
  const int pre = lattice.n_steps - 1;
  const auto probs = lattice.layer_probabilities(pre);
  const auto& basis = strategy.endowment >= 0.0 ? lattice.cash_lend
                                                : lattice.cash_borrow;
  const double disc = basis[lattice.n_steps] / basis[strategy.start_step];
  TerminalDistribution out;
  out.minimum = std::numeric_limits<double>::infinity();
  out.maximum = -std::numeric_limits<double>::infinity();
  const double x = strategy.endowment;
  for (std::size_t i = 0; i < lattice.layers[pre].size(); ++i) {
    const LatticeNode& node = lattice.layers[pre][i];
    for (int e = 0; e < node.edge_count; ++e) {
      const LatticeEdge& edge = lattice.edges[pre][node.edge_begin + e];
      const double v = terminal_wealth(market, lattice, strategy, pre,
                                       static_cast<int>(i), edge) /
                       disc;
      out.minimum = std::min(out.minimum, v);
      out.maximum = std::max(out.maximum, v);
      const double mass = probs[i] * edge.p;
      if (v > x + tolerance) out.prob_above += mass;
      if (v < x - tolerance) out.prob_below += mass;
    }
  }
  return out;
}

}  // namespace finlat
