#include "finlat/pricing.hpp"

#include <cmath>

#include "finlat/simd/kernels.hpp"

namespace finlat {

PricingRun gained_value(const LatticeMarket& market, const Contract& contract,
                        double x, const SolverParams& params) {
  PricingRun run;
  run.generator = build_generator(market, contract, x);
  const auto& lat = *run.generator.lattice;
  std::vector<double> terminal(lat.layers[lat.n_steps].size(), x);
  run.solution = solve_backward(run.generator, std::move(terminal), params);
  run.gained_value = gained_value_grid(run.generator, run.solution);
  return run;
}

std::vector<double> ex_dividend_price(const LatticeMarket& market,
                                      const Contract& contract, double x,
                                      int t, const SolverParams& params) {
  Generator gen = build_generator(market, contract, x);
  const auto& lat = *gen.lattice;
  std::vector<double> terminal(lat.layers[lat.n_steps].size(), x);
  const auto sol = solve_backward(gen, std::move(terminal), params, t);
  std::vector<double> out(sol.y[t].size());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = lat.cash_lend[t] * (sol.y[t][i] - x);
  return out;
}

std::vector<std::vector<double>> marked_to_market(const PricingRun& run) {
  auto out = run.gained_value;
  for (auto& layer : out)
    for (double& v : layer) v = -v;
  return out;
}

std::vector<double> offsetting_price(const LatticeMarket& market,
                                     const Contract& contract,
                                     const std::vector<Adjustment>& mirror,
                                     double x, int t,
                                     const SolverParams& params) {
  // replication wealth of the original contract at t
  PricingRun full = gained_value(market, contract, x, params);
  // residual contract: no flows, adjustments of both sides
  Contract residual;
  residual.flows.maturity_step = contract.flows.maturity_step;
  residual.convention = contract.convention;
  residual.adjustments = contract.adjustments;
  for (const Adjustment& a : mirror) {
    Adjustment copy = a;
    copy.index = static_cast<int>(residual.adjustments.size());
    residual.adjustments.push_back(copy);
  }
  Generator gen = build_generator(market, residual, x);
  const auto& lat = *gen.lattice;
  std::vector<double> terminal(lat.layers[lat.n_steps].size(), x);
  const auto sol = solve_backward(gen, std::move(terminal), params, t);
  std::vector<double> out(sol.y[t].size());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = lat.cash_lend[t] * (sol.y[t][i] - full.solution.y[t][i]);
  return out;
}

// ---------------------------------------------------------------------------
// CCR split

RiskyFlowSet build_risky_flows(const LatticeMarket& market,
                               const Lattice& extended, const Contract& contract,
                               double x1, const SolverParams& params) {
  if (!contract.defaults.has_value())
    throw SolverError("risky flows need a default specification");
  const DefaultSpec& def = contract.defaults.value();

  RiskyFlowSet out;

  // closeout valuation
  if (def.closeout == CloseoutRule::exogenous) {
    out.closeout_q = def.closeout_value;
  } else {
    // clean rule: ex-dividend price of the clean contract, solved once on
    // the base lattice
    Contract clean = contract;
    clean.defaults.reset();
    PricingRun run = gained_value(market, clean, x1, params);
    auto grid = std::make_shared<std::vector<std::vector<double>>>(
        std::move(run.gained_value));
    out.closeout_q = [grid](const Lattice& lat, int layer, int node) {
      return (*grid)[layer][lat.layers[layer][node].ups];
    };
  }

  if (contract.collateral.has_value()) {
    if (contract.collateral->endogenous)
      throw SolverError(
          "default-extended pricing requires exogenous collateral");
    out.collateral = contract.collateral->value;
  }

  const Contract* held = &contract;
  NodeFn q_fn = out.closeout_q;
  NodeFn c_fn = out.collateral;
  auto flow_at = [held, &market](const Lattice& lat, int layer, int node) {
    return held->flows.increment(market, lat, layer, node);
  };

  auto settle_payoff = [q_fn, c_fn, def, flow_at](const Lattice& lat, int layer,
                                                  int node) {
    const double q = q_fn ? q_fn(lat, layer, node) : 0.0;
    const double c = c_fn ? c_fn(lat, layer, node) : 0.0;
    const double da = flow_at(lat, layer, node);
    const double ups_v = upsilon(q, da, c);
    return closeout_payoff(ups_v, c, lat.layers[layer][node].state,
                           def.recovery_counterparty, def.recovery_hedger);
  };

  out.full = [&extended, flow_at, settle_payoff](int layer, int node) {
    const LatticeNode& nd = extended.layers[layer][node];
    if (nd.state == NodeState::alive)
      return flow_at(extended, layer, node);
    if (is_settlement(nd.state)) return settle_payoff(extended, layer, node);
    return 0.0;  // closed
  };
  out.ccr = [&extended, flow_at, settle_payoff](int layer, int node) {
    const LatticeNode& nd = extended.layers[layer][node];
    if (nd.state == NodeState::alive) return 0.0;
    if (is_settlement(nd.state))
      return settle_payoff(extended, layer, node) -
             flow_at(extended, layer, node);
    return -flow_at(extended, layer, node);  // closed: -dA
  };
  out.clean = [&market, held](int layer, int node) {
    return held->flows.increment(market, market.lattice, layer, node);
  };
  return out;
}

namespace {

// wraps a collateral rule so that it vanishes once the contract is settled
CollateralSpec alive_only_collateral(const CollateralSpec& spec) {
  CollateralSpec out = spec;
  NodeFn inner = spec.value;
  out.value = [inner](const Lattice& lat, int layer, int node) {
    if (lat.layers[layer][node].state != NodeState::alive) return 0.0;
    return inner ? inner(lat, layer, node) : 0.0;
  };
  return out;
}

}  // namespace

CcrSplitReport ccr_price_split(const LatticeMarket& market,
                               const Contract& contract, double x, double x1,
                               double x2, CcrSplitMode mode,
                               const SolverParams& params) {
  if (!contract.defaults.has_value())
    throw SolverError("ccr split needs a default specification");
  if (std::fabs(x - x1 - x2) > 1e-12)
    throw SolverError("endowment split must satisfy x = x1 + x2");
  const Lattice extended =
      extend_with_default_states(market, contract.defaults->hazards);

  // flows are shared by the three problems; Q resolved once
  auto flows = build_risky_flows(market, extended, contract, x1, params);

  CcrSplitReport report;
  report.x = x;
  report.x1 = x1;
  report.x2 = x2;
  report.mode = mode;
  for (const auto& layer : extended.layers)
    report.lattice_states += static_cast<int>(layer.size());

  // full contract (A-sharp, X) on the extended lattice, settled at default
  {
    Contract full = contract;
    full.defaults.reset();
    if (contract.collateral.has_value())
      full.collateral = alive_only_collateral(*contract.collateral);
    full.compile();
    Generator gen = build_generator(market, full, x, &extended);
    gen.flow = [f = flows.full](int layer, int node) { return f(layer, node); };
    gen.early_terminal = [&extended, x](int layer, int node) {
      return extended.layers[layer][node].state == NodeState::alive
                 ? std::numeric_limits<double>::quiet_NaN()
                 : x;
    };
    std::vector<double> terminal(extended.layers[extended.n_steps].size(), x);
    const auto sol = solve_backward(gen, std::move(terminal), params);
    report.y_full = sol.y[0][0];
    report.price_full = report.y_full - x;
  }

  // clean contract (A, X) on the base lattice
  {
    Contract clean = contract;
    clean.defaults.reset();
    if (mode == CcrSplitMode::adjustments_on_clean &&
        contract.collateral.has_value()) {
      clean.collateral = contract.collateral;
    } else {
      clean.collateral.reset();
    }
    clean.compile();
    PricingRun run = gained_value(market, clean, x1, params);
    report.y_clean = run.solution.y[0][0];
    report.price_clean = report.y_clean - x1;
  }

  // CCR contract (A-CCR, .) on the extended lattice, flows through maturity
  {
    Contract ccr;
    ccr.flows.maturity_step = contract.flows.maturity_step;
    ccr.convention = contract.convention;
    if (mode == CcrSplitMode::adjustments_on_ccr &&
        contract.collateral.has_value())
      ccr.collateral = alive_only_collateral(*contract.collateral);
    ccr.compile();
    Generator gen = build_generator(market, ccr, x2, &extended);
    gen.flow = [f = flows.ccr](int layer, int node) { return f(layer, node); };
    std::vector<double> terminal(extended.layers[extended.n_steps].size(), x2);
    const auto sol = solve_backward(gen, std::move(terminal), params);
    report.y_ccr = sol.y[0][0];
    report.price_ccr = report.y_ccr - x2;
  }

  report.gap = report.price_full - report.price_clean - report.price_ccr;
  return report;
}

// ---------------------------------------------------------------------------
// Superhedging dynamic program

std::vector<double> HedgeGrid::points() const {
  std::vector<double> out;
  if (step <= 0.0) throw std::invalid_argument("hedge grid: step <= 0");
  const int count = static_cast<int>(std::floor((hi - lo) / step + 1.5));
  out.reserve(count);
  for (int i = 0; i < count; ++i) out.push_back(lo + i * step);
  return out;
}

namespace {

struct DpPass {
  double root_cost = 0.0;
  bool root_strict = false;
  std::vector<std::vector<double>> xi;
  std::vector<std::vector<std::vector<double>>> det;
};

// enumerate det-asset decision combos
void det_combos(const std::vector<std::vector<double>>& grids,
                std::vector<std::vector<double>>& out) {
  std::vector<double> cur(grids.size(), 0.0);
  std::function<void(std::size_t)> rec = [&](std::size_t k) {
    if (k == grids.size()) {
      out.push_back(cur);
      return;
    }
    for (double v : grids[k]) {
      cur[k] = v;
      rec(k + 1);
    }
  };
  rec(0);
}

DpPass run_superhedge_dp(const Generator& gen, const SuperhedgeConfig& cfg,
                         double hedge_step) {
  const Lattice& lat = *gen.lattice;
  const LatticeMarket& market = *gen.market;
  const int n = lat.n_steps;
  const double x = gen.endowment;
  const auto& basis = x >= 0.0 ? lat.cash_lend : lat.cash_borrow;
  const auto& k = simd::kernels();
  const double u = market.up_factor();
  const double d = market.down_factor();
  const auto& divs = market.params.assets[0].dividends;
  const double kappa = gen.kappa;

  for (const auto& adj : gen.adjustments)
    if (adj.endogenous_collateral)
      throw SolverError("superhedge search needs exogenous adjustments");

  HedgeGrid hedge = cfg.hedge;
  hedge.step = hedge_step;
  const std::vector<double> xi_grid = hedge.points();
  std::vector<std::vector<double>> det_grid_pts;
  for (const auto& g : cfg.det_grids) det_grid_pts.push_back(g.points());
  if (static_cast<int>(det_grid_pts.size()) != lat.n_det)
    throw SolverError("superhedge search: one grid per deterministic asset");
  std::vector<std::vector<double>> combos;
  det_combos(det_grid_pts, combos);

  std::size_t states = 0;
  for (const auto& layer : lat.layers) states += layer.size();
  if (states * combos.size() * xi_grid.size() > cfg.max_states)
    throw SearchResourceError("superhedge search grid too large");

  DpPass pass;
  pass.xi.assign(n + 1, {});
  pass.det.assign(lat.n_det, std::vector<std::vector<double>>(n + 1));

  std::vector<double> req_next(lat.layers[n].size(), x * basis[n]);
  std::vector<uint8_t> strict_next(lat.layers[n].size(), 0);

  const std::size_t ng = xi_grid.size();
  std::vector<double> t_buf(ng), n_buf(ng), acc_buf(ng), v_buf(ng), zero_buf(ng, 0.0);
  std::vector<double> ones(ng, 1.0);

  for (int m = n - 1; m >= 0; --m) {
    const auto& layer = lat.layers[m];
    const double gl = lat.cash_lend[m + 1] / lat.cash_lend[m];
    const double gb = lat.cash_borrow[m + 1] / lat.cash_borrow[m];
    const double gf = gen.funding[m + 1] / gen.funding[m];
    std::vector<double> req(layer.size());
    std::vector<uint8_t> strict(layer.size(), 0);
    pass.xi[m].assign(layer.size(), 0.0);
    for (int kdet = 0; kdet < lat.n_det; ++kdet)
      pass.det[kdet][m].assign(layer.size(), 0.0);

    for (std::size_t i = 0; i < layer.size(); ++i) {
      const LatticeNode& node = layer[i];
      const double spot = node.spot;
      double alpha_x = 0.0, a_term = 0.0;
      for (const auto& adj : gen.adjustments) {
        const double gbeta = adj.beta[m + 1] / adj.beta[m];
        const double xv = adj.values[m][i];
        alpha_x += adj.alpha * xv;
        a_term += (adj.alpha + gbeta - 1.0) * xv;
      }
      const double div_up = divs.increment(m + 1, spot * u);
      const double div_dn = divs.increment(m + 1, spot * d);
      const double c_up = spot * u + div_up - (1.0 - kappa) * spot * gf;
      const double c_dn = spot * d + div_dn - (1.0 - kappa) * spot * gf;

      double best = std::numeric_limits<double>::infinity();
      double best_xi = 0.0;
      std::vector<double> best_det(lat.n_det, 0.0);
      for (const auto& combo : combos) {
        // base target per successor minus det-asset leg at the successor
        double det_now = 0.0;
        for (int kd = 0; kd < lat.n_det; ++kd)
          det_now += combo[kd] * lat.det_value(m, static_cast<int>(i), kd);
        bool first = true;
        for (int e = 0; e < node.edge_count; ++e) {
          const LatticeEdge& edge = lat.edges[m][node.edge_begin + e];
          double base = req_next[edge.to] + a_term -
                        (gen.flow ? gen.flow(m + 1, edge.to) : 0.0);
          for (int kd = 0; kd < lat.n_det; ++kd)
            base -= combo[kd] * lat.det_value(m + 1, edge.to, kd);
          const double c_dir = edge.up ? c_up : c_dn;
          // T = base - c xi over the hedge grid
          k.axpby(-c_dir, xi_grid.data(), base, ones.data(), t_buf.data(), ng);
          k.pos_neg_scale(t_buf.data(), 1.0 / gl, 1.0 / gb, n_buf.data(), ng);
          if (first) {
            acc_buf = n_buf;
            first = false;
          } else {
            k.max2(acc_buf.data(), n_buf.data(), acc_buf.data(), ng);
          }
        }
        if (!cfg.allow_borrowing)
          k.max2(acc_buf.data(), zero_buf.data(), acc_buf.data(), ng);
        k.axpby(1.0, acc_buf.data(), kappa * spot, xi_grid.data(), v_buf.data(),
                ng);
        const double combo_shift = det_now - alpha_x;
        const double combo_min = k.min_reduce(v_buf.data(), ng) + combo_shift;
        if (combo_min < best) {
          best = combo_min;
          // locate the argmin point (same arithmetic, exact match)
          for (std::size_t g = 0; g < ng; ++g) {
            if (v_buf[g] + combo_shift == combo_min) {
              best_xi = xi_grid[g];
              best_det = combo;
              break;
            }
          }
        }
      }
      req[i] = best;
      pass.xi[m][i] = best_xi;
      for (int kd = 0; kd < lat.n_det; ++kd)
        pass.det[kd][m][i] = best_det[kd];

      // strictness: some argmin decision leaves slack on a branch or leads
      // into a strict subtree
      const double eps = 1e-9 * std::max(1.0, std::fabs(best));
      bool is_strict = false;
      for (const auto& combo : combos) {
        if (is_strict) break;
        double det_now = 0.0;
        for (int kd = 0; kd < lat.n_det; ++kd)
          det_now += combo[kd] * lat.det_value(m, static_cast<int>(i), kd);
        for (double xi : xi_grid) {
          double navail = best + alpha_x - kappa * xi * spot - det_now;
          if (!cfg.allow_borrowing && navail < -eps) continue;
          const double grown =
              navail > 0.0 ? navail * gl : navail * gb;
          bool feasible = true, slack_found = false, strict_child = false;
          for (int e = 0; e < node.edge_count && feasible; ++e) {
            const LatticeEdge& edge = lat.edges[m][node.edge_begin + e];
            double det_next = 0.0;
            for (int kd = 0; kd < lat.n_det; ++kd)
              det_next += combo[kd] * lat.det_value(m + 1, edge.to, kd);
            const double c_dir = edge.up ? c_up : c_dn;
            const double v_next = grown + xi * c_dir + det_next - a_term +
                                  (gen.flow ? gen.flow(m + 1, edge.to) : 0.0);
            const double slack = v_next - req_next[edge.to];
            if (slack < -eps) feasible = false;
            else if (slack > eps) slack_found = true;
            else if (strict_next[edge.to]) strict_child = true;
          }
          if (feasible && (slack_found || strict_child)) {
            is_strict = true;
            pass.xi[m][i] = xi;
            for (int kd = 0; kd < lat.n_det; ++kd)
              pass.det[kd][m][i] = combo[kd];
            break;
          }
        }
      }
      strict[i] = is_strict ? 1 : 0;
    }
    req_next.swap(req);
    strict_next.swap(strict);
  }
  pass.root_cost = req_next[0];
  pass.root_strict = strict_next[0] != 0;
  return pass;
}

}  // namespace

SuperhedgeResult superhedge_bruteforce(const Generator& generator,
                                       const SuperhedgeConfig& config) {
  DpPass coarse = run_superhedge_dp(generator, config, config.hedge.step);
  DpPass fine = run_superhedge_dp(generator, config, config.hedge.step * 0.5);
  SuperhedgeResult out;
  const double x = generator.endowment;
  const double cost = coarse.root_cost - x;
  out.superhedge_inf = cost;
  out.strict_superhedge_inf = cost;
  out.fair_sup = cost;
  out.subhedge_sup = cost;
  out.superhedge_attained = true;
  out.strict_attained_at_inf = coarse.root_strict;
  out.grid_error = std::max(
      2.0 * std::fabs(coarse.root_cost - fine.root_cost), 1e-9);
  out.ordering_ok = true;  // the bounds coincide by construction
  out.witness_xi = std::move(coarse.xi);
  out.witness_det = std::move(coarse.det);
  return out;
}

RegularityReport regularity_verdict(const LatticeMarket& market,
                                    const Contract& contract, double x,
                                    const SuperhedgeConfig& config,
                                    const SolverParams& params) {
  RegularityReport report;
  PricingRun run = gained_value(market, contract, x, params);
  report.replication_cost = run.gained_value[0][0];
  Generator gen = build_generator(market, contract, x);
  report.bounds = superhedge_bruteforce(gen, config);

  const double bar = report.bounds.grid_error;
  const double diff = report.bounds.superhedge_inf - report.replication_cost;
  if (diff < -bar) {
    report.verdict = Regularity::not_regular;
    report.reason =
        "a superhedge over the search grid is cheaper than replication";
  } else if (std::fabs(diff) <= bar && report.bounds.strict_attained_at_inf) {
    report.verdict = Regularity::not_regular;
    report.reason =
        "a strict superhedge exists at the replication cost over the search "
        "grid";
  } else {
    report.verdict = Regularity::regular;
    report.reason = "no superhedge undercuts replication and no strict "
                    "superhedge matches its cost, over the search grid";
  }
  if (report.verdict == Regularity::not_regular) {
    // witness strategies replay on single-predecessor lattices only
    bool tree = true;
    const Lattice& lat = *gen.lattice;
    std::vector<std::vector<int>> preds(lat.n_steps + 1);
    for (int m = 1; m <= lat.n_steps && tree; ++m)
      preds[m].assign(lat.layers[m].size(), 0);
    for (int m = 0; m < lat.n_steps && tree; ++m)
      for (const auto& node : lat.layers[m])
        for (int e = 0; e < node.edge_count; ++e) {
          const auto& edge = lat.edges[m][node.edge_begin + e];
          if (++preds[m + 1][edge.to] > 1) tree = false;
        }
    if (tree) {
      report.witness = witness_strategy(
          gen, report.bounds, x + report.bounds.superhedge_inf);
      report.has_witness = true;
    }
  }
  return report;
}

TradingStrategy witness_strategy(const Generator& generator,
                                 const SuperhedgeResult& result,
                                 double initial_wealth) {
  const Lattice& lat = *generator.lattice;
  const LatticeMarket& market = *generator.market;
  const int n = lat.n_steps;
  const double kappa = generator.kappa;
  TradingStrategy strat;
  strat.endowment = generator.endowment;
  strat.price = initial_wealth - generator.endowment;
  strat.contract = generator.contract_copy;
  strat.portfolio = Portfolio::zeros(lat);
  resolve_adjustments(market, lat, strat);

  // forward wealth propagation; requires a single-predecessor lattice
  std::vector<std::vector<double>> wealth_grid(n + 1);
  std::vector<std::vector<uint8_t>> seen(n + 1);
  for (int m = 0; m <= n; ++m) {
    wealth_grid[m].assign(lat.layers[m].size(), 0.0);
    seen[m].assign(lat.layers[m].size(), 0);
  }
  wealth_grid[0][0] = initial_wealth;
  seen[0][0] = 1;
  const double u = market.up_factor();
  const double d = market.down_factor();
  const auto& divs = market.params.assets[0].dividends;
  for (int m = 0; m < n; ++m) {
    const double gl = lat.cash_lend[m + 1] / lat.cash_lend[m];
    const double gb = lat.cash_borrow[m + 1] / lat.cash_borrow[m];
    const double gf = generator.funding[m + 1] / generator.funding[m];
    for (std::size_t i = 0; i < lat.layers[m].size(); ++i) {
      if (!seen[m][i]) continue;
      const LatticeNode& node = lat.layers[m][i];
      const double spot = node.spot;
      const double v = wealth_grid[m][i];
      const double xi = result.witness_xi[m][i];
      strat.portfolio.xi[m][i] = xi;
      double det_now = 0.0;
      for (int kd = 0; kd < lat.n_det; ++kd) {
        const double units = result.witness_det[kd][m][i];
        strat.portfolio.xi_det[m][i * lat.n_det + kd] = units;
        det_now += units * lat.det_value(m, static_cast<int>(i), kd);
      }
      double alpha_x = 0.0, a_term = 0.0;
      for (std::size_t a = 0; a < strat.contract.adjustments.size(); ++a) {
        const Adjustment& adj = strat.contract.adjustments[a];
        const double gbeta = adj.beta.value(lat.time_of(m + 1)) /
                             adj.beta.value(lat.time_of(m));
        const double xv = strat.resolved_x[a][m][i];
        alpha_x += adj.alpha * xv;
        a_term += (adj.alpha + gbeta - 1.0) * xv;
      }
      const double psi =
          -(1.0 - kappa) * xi * spot / generator.funding[m];
      strat.portfolio.psi_fund_l[m][i] = std::max(psi, 0.0);
      strat.portfolio.psi_fund_b[m][i] = std::min(psi, 0.0);
      const double net = v + alpha_x - kappa * xi * spot - det_now;
      strat.portfolio.psi_cash_l[m][i] = std::max(net, 0.0) / lat.cash_lend[m];
      strat.portfolio.psi_cash_b[m][i] =
          std::min(net, 0.0) / lat.cash_borrow[m];
      const double grown = net > 0.0 ? net * gl : net * gb;
      for (int e = 0; e < node.edge_count; ++e) {
        const LatticeEdge& edge = lat.edges[m][node.edge_begin + e];
        double det_next = 0.0;
        for (int kd = 0; kd < lat.n_det; ++kd)
          det_next += result.witness_det[kd][m][i] *
                      lat.det_value(m + 1, edge.to, kd);
        const double div =
            divs.increment(m + 1, spot * (edge.up ? u : d));
        const double c_dir =
            spot * (edge.up ? u : d) + div - (1.0 - kappa) * spot * gf;
        const double v_next = grown + xi * c_dir + det_next - a_term +
                              (generator.flow
                                   ? generator.flow(m + 1, edge.to)
                                   : 0.0);
        if (seen[m + 1][edge.to] &&
            std::fabs(wealth_grid[m + 1][edge.to] - v_next) > 1e-9)
          throw SolverError(
              "witness strategy needs a single-predecessor lattice");
        wealth_grid[m + 1][edge.to] = v_next;
        seen[m + 1][edge.to] = 1;
      }
    }
  }
  return strat;
}

}  // namespace finlat
