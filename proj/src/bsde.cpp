#include "finlat/bsde.hpp"

#include <cmath>

#include "finlat/simd/kernels.hpp"

namespace finlat {

namespace {

// position of the net cash amount given its growth target:
// E = N^+ g_l - N^- g_b  =>  N = E^+ / g_l + E^- / g_b (signs preserved)
inline double invert_cash_growth(double e, double gl, double gb) {
  return e > 0.0 ? e / gl : e / gb;
}

double adjustment_value(const BoundAdjustment& adj, int layer, int node,
                        double y, double bl, double x,
                        double gained_fraction_sign) {
  (void)gained_fraction_sign;
  if (adj.endogenous_collateral) {
    // C_t = fraction * gained value = fraction * B^l (Y - x)
    const double c = adj.gained_value_fraction * bl * (y - x);
    return adj.positive_part ? std::max(c, 0.0) : -std::max(-c, 0.0);
  }
  return adj.values[layer][node];
}

}  // namespace

Generator build_generator(const LatticeMarket& market, const Contract& contract,
                          double x, const Lattice* lattice) {
  if (!(x >= 0.0))
    throw SolverError(
        "pricing from a negative endowment is not supported; the borrowing-"
        "discounted backward equation is not part of this engine");
  Generator gen;
  gen.market = &market;
  gen.lattice = lattice != nullptr ? lattice : &market.lattice;
  gen.endowment = x;
  gen.contract_copy = contract;

  for (const Adjustment& a : contract.adjustments) {
    if (const auto* g = std::get_if<GlobalX>(&a.x))
      throw GlobalProblemError(
          "adjustment '" + g->name +
          "' depends on the strategy's history: the pricing problem is "
          "global and only node-local problems reduce to a backward "
          "recursion; refusing to solve");
  }

  using Mode = TradingConvention::Mode;
  const FundingMode asset_mode = market.params.assets[0].funding_mode;
  switch (contract.convention.mode) {
    case Mode::cash:
      if (asset_mode != FundingMode::cash)
        throw SolverError(
            "cash convention needs a cash-funded hedge asset in the market");
      gen.kappa = 1.0;
      break;
    case Mode::repo_symmetric:
      if (asset_mode != FundingMode::repo_symmetric)
        throw SolverError(
            "repo convention needs a repo-funded hedge asset in the market");
      gen.kappa = contract.convention.haircut;
      break;
    default:
      throw SolverError(
          "solver supports cash and symmetric-repo funding of the hedge "
          "asset");
  }
  gen.funding = market.hedge_funding_account();

  const Lattice& lat = *gen.lattice;
  const int n = lat.n_steps;
  for (const Adjustment& a : contract.adjustments) {
    BoundAdjustment bound;
    bound.alpha = a.alpha;
    bound.beta.resize(n + 1);
    for (int m = 0; m <= n; ++m) bound.beta[m] = a.beta.value(lat.time_of(m));
    if (const auto* e = std::get_if<ExogenousX>(&a.x)) {
      bound.values.resize(n + 1);
      for (int m = 0; m <= n; ++m) {
        bound.values[m].resize(lat.layers[m].size());
        for (std::size_t i = 0; i < lat.layers[m].size(); ++i)
          bound.values[m][i] =
              e->path ? e->path(lat, m, static_cast<int>(i)) : 0.0;
      }
    } else if (const auto* c = std::get_if<CollateralLegX>(&a.x)) {
      bound.positive_part = c->positive_part;
      if (c->endogenous) {
        bound.endogenous_collateral = true;
        bound.gained_value_fraction = c->gained_value_fraction;
      } else {
        bound.values.resize(n + 1);
        for (int m = 0; m <= n; ++m) {
          bound.values[m].resize(lat.layers[m].size());
          for (std::size_t i = 0; i < lat.layers[m].size(); ++i) {
            const double cv =
                c->collateral ? c->collateral(lat, m, static_cast<int>(i)) : 0.0;
            bound.values[m][i] =
                c->positive_part ? std::max(cv, 0.0) : -std::max(-cv, 0.0);
          }
        }
      }
    } else {
      throw SolverError(
          "broker short-sale adjustments are replay-only; price through the "
          "cash or repo conventions");
    }
    gen.adjustments.push_back(std::move(bound));
  }

  gen.flow = [gen_lat = gen.lattice, mkt = gen.market,
              flows = contract.flows](int layer, int node) {
    return flows.increment(*mkt, *gen_lat, layer, node);
  };

  // contraction factor of the endogenous fixed point; O(dt) because the
  // alpha X cash offsets the growth of the drain
  double bound = 0.0;
  for (int m = 0; m < n; ++m) {
    const double gl = lat.cash_lend[m + 1] / lat.cash_lend[m];
    const double gb = lat.cash_borrow[m + 1] / lat.cash_borrow[m];
    double step = 0.0;
    for (const auto& adj : gen.adjustments) {
      if (!adj.endogenous_collateral) continue;
      const double gbeta = adj.beta[m + 1] / adj.beta[m];
      const double f = std::fabs(adj.gained_value_fraction);
      const double c1 = std::fabs((adj.alpha + gbeta - 1.0) / gl - adj.alpha);
      const double c2 = std::fabs((adj.alpha + gbeta - 1.0) / gb - adj.alpha);
      step += f * std::max(c1, c2);
    }
    bound = std::max(bound, step);
  }
  gen.contraction_bound = bound;
  return gen;
}

BsdeSolution solve_backward(const Generator& generator,
                            std::vector<double> terminal,
                            const SolverParams& params, int start_layer) {
  const Lattice& lat = *generator.lattice;
  const LatticeMarket& market = *generator.market;
  const int n = lat.n_steps;
  if (terminal.size() != lat.layers[n].size())
    throw SolverError("terminal condition size mismatch");
  if (start_layer < 0 || start_layer >= n)
    throw SolverError("bad start layer");
  if (generator.contraction_bound >= 1.0)
    throw SolverError(
        "endogenous adjustment iteration would not contract; reduce dt");
  const auto& k = simd::kernels();

  BsdeSolution sol;
  sol.start_layer = start_layer;
  sol.y.assign(n + 1, {});
  sol.z.assign(n + 1, {});
  sol.xi.assign(n + 1, {});
  sol.iterations.assign(n + 1, 0);
  sol.x_resolved.assign(generator.adjustments.size(), {});
  for (auto& grid : sol.x_resolved) grid.assign(n + 1, {});
  sol.terminal = terminal;
  sol.y[n] = std::move(terminal);
  if (generator.early_terminal) {
    for (std::size_t i = 0; i < lat.layers[n].size(); ++i) {
      const double forced = generator.early_terminal(n, static_cast<int>(i));
      if (!std::isnan(forced)) sol.y[n][i] = forced;
    }
  }

  const double x_endow = generator.endowment;
  const double u = market.up_factor();
  const double d = market.down_factor();
  const auto& divs = market.params.assets[0].dividends;
  const double kappa = generator.kappa;

  // resolve terminal-layer adjustment values
  for (std::size_t a = 0; a < generator.adjustments.size(); ++a) {
    const auto& adj = generator.adjustments[a];
    auto& grid = sol.x_resolved[a];
    grid[n].resize(lat.layers[n].size());
    for (std::size_t i = 0; i < lat.layers[n].size(); ++i)
      grid[n][i] = adjustment_value(adj, n, static_cast<int>(i), sol.y[n][i],
                                    lat.cash_lend[n], x_endow, 0.0);
  }

  std::vector<double> r_values, e_values, flow_values;
  for (int m = n - 1; m >= start_layer; --m) {
    const auto& layer = lat.layers[m];
    const auto& next_layer = lat.layers[m + 1];
    const double bl = lat.cash_lend[m], bl1 = lat.cash_lend[m + 1];
    const double gl = bl1 / bl;
    const double gb = lat.cash_borrow[m + 1] / lat.cash_borrow[m];
    const double gf = generator.funding[m + 1] / generator.funding[m];

    // R = B^l Y - flow on the next layer
    r_values.resize(next_layer.size());
    flow_values.resize(next_layer.size());
    for (std::size_t s = 0; s < next_layer.size(); ++s)
      flow_values[s] = generator.flow ? generator.flow(m + 1, static_cast<int>(s))
                                      : 0.0;
    k.axpby(bl1, sol.y[m + 1].data(), -1.0, flow_values.data(), r_values.data(),
            next_layer.size());

    sol.y[m].assign(layer.size(), 0.0);
    sol.z[m].assign(layer.size(), 0.0);
    sol.xi[m].assign(layer.size(), 0.0);
    for (std::size_t a = 0; a < generator.adjustments.size(); ++a)
      sol.x_resolved[a][m].assign(layer.size(), 0.0);

    // fast path: plain layer, expectation via the kernel
    const bool fast = lat.plain;
    e_values.resize(layer.size());
    if (fast) {
      std::vector<double> q(layer.size());
      for (std::size_t i = 0; i < layer.size(); ++i)
        q[i] = lat.edges[m][layer[i].edge_begin].q;  // up edge first
      k.weighted_adjacent(q.data(), r_values.data(), e_values.data(),
                          layer.size());
    } else {
      for (std::size_t i = 0; i < layer.size(); ++i) {
        const LatticeNode& node = layer[i];
        double acc = 0.0;
        for (int e = 0; e < node.edge_count; ++e) {
          const LatticeEdge& edge = lat.edges[m][node.edge_begin + e];
          acc += edge.q * r_values[edge.to];
        }
        e_values[i] = acc;
      }
    }

    int worst_iter = 0;
    for (std::size_t i = 0; i < layer.size(); ++i) {
      const LatticeNode& node = layer[i];
      if (generator.early_terminal) {
        const double forced = generator.early_terminal(m, static_cast<int>(i));
        if (!std::isnan(forced)) {
          sol.y[m][i] = forced;
          for (std::size_t a = 0; a < generator.adjustments.size(); ++a)
            sol.x_resolved[a][m][i] = adjustment_value(
                generator.adjustments[a], m, static_cast<int>(i), forced, bl,
                x_endow, 0.0);
          continue;
        }
      }

      // hedge ratio from the spread of the two market branches
      const LatticeEdge* edge_up = nullptr;
      const LatticeEdge* edge_dn = nullptr;
      for (int e = 0; e < node.edge_count; ++e) {
        const LatticeEdge& edge = lat.edges[m][node.edge_begin + e];
        if (edge.up && edge_up == nullptr) edge_up = &edge;
        if (!edge.up && edge_dn == nullptr) edge_dn = &edge;
      }
      if (edge_up == nullptr || edge_dn == nullptr)
        throw SolverError("node lacks a two-sided market branch");
      const double spot = node.spot;
      const double div_up = divs.increment(m + 1, spot * u);
      const double div_dn = divs.increment(m + 1, spot * d);
      // asset leg value per direction
      const double c_up = spot * u + div_up - (1.0 - kappa) * spot * gf;
      const double c_dn = spot * d + div_dn - (1.0 - kappa) * spot * gf;
      const double denom = c_up - c_dn;
      if (std::fabs(denom) < 1e-300)
        throw SolverError("degenerate market branching");
      const double xi =
          (r_values[edge_up->to] - r_values[edge_dn->to]) / denom;

      const double e_base = e_values[i] - xi * kappa * spot * gf;

      // solve the piecewise-linear one-step equation, iterating when an
      // adjustment reads the running solution
      double y = sol.y[m + 1].empty() ? 0.0 : e_base / (bl1);
      int iter = 0;
      bool has_endogenous = false;
      for (const auto& adj : generator.adjustments)
        has_endogenous = has_endogenous || adj.endogenous_collateral;
      const int max_iter = has_endogenous ? params.max_iterations : 2;
      double prev = std::numeric_limits<double>::infinity();
      while (iter < max_iter) {
        double a_term = 0.0;
        double alpha_x = 0.0;
        for (std::size_t a = 0; a < generator.adjustments.size(); ++a) {
          const auto& adj = generator.adjustments[a];
          const double gbeta = adj.beta[m + 1] / adj.beta[m];
          const double xval = adjustment_value(adj, m, static_cast<int>(i), y,
                                               bl, x_endow, 0.0);
          a_term += (adj.alpha + gbeta - 1.0) * xval;
          alpha_x += adj.alpha * xval;
        }
        const double net = invert_cash_growth(e_base + a_term, gl, gb);
        const double y_new = (net + kappa * xi * spot - alpha_x) / bl;
        const double y_damped =
            params.damping * y_new + (1.0 - params.damping) * y;
        ++iter;
        if (std::fabs(y_damped - y) <=
            params.tolerance * std::max(1.0, std::fabs(y_damped))) {
          y = y_damped;
          break;
        }
        if (iter == max_iter && has_endogenous)
          throw SolverError("one-step fixed point failed to converge");
        prev = y;
        y = y_damped;
      }
      (void)prev;
      if (!std::isfinite(y))
        throw SolverError("non-finite value in backward induction");
      worst_iter = std::max(worst_iter, iter);

      sol.y[m][i] = y;
      sol.xi[m][i] = xi;
      sol.z[m][i] = xi * generator.funding[m] / bl;
      for (std::size_t a = 0; a < generator.adjustments.size(); ++a)
        sol.x_resolved[a][m][i] = adjustment_value(
            generator.adjustments[a], m, static_cast<int>(i), y, bl, x_endow,
            0.0);

      // one-step consistency residual
      double a_term = 0.0, alpha_x = 0.0;
      for (std::size_t a = 0; a < generator.adjustments.size(); ++a) {
        const auto& adj = generator.adjustments[a];
        const double gbeta = adj.beta[m + 1] / adj.beta[m];
        const double xval = sol.x_resolved[a][m][i];
        a_term += (adj.alpha + gbeta - 1.0) * xval;
        alpha_x += adj.alpha * xval;
      }
      const double net = bl * y + alpha_x - kappa * xi * spot;
      const double grown = net > 0.0 ? net * gl : net * gb;
      sol.max_step_residual =
          std::max(sol.max_step_residual,
                   std::fabs(grown - (e_base + a_term)) /
                       std::max(1.0, std::fabs(grown)));
    }
    sol.iterations[m] = worst_iter;
  }
  return sol;
}

std::vector<std::vector<double>> gained_value_grid(const Generator& generator,
                                                   const BsdeSolution& solution) {
  const Lattice& lat = *generator.lattice;
  std::vector<std::vector<double>> out(lat.n_steps + 1);
  for (int m = solution.start_layer; m <= lat.n_steps; ++m) {
    out[m].resize(solution.y[m].size());
    for (std::size_t i = 0; i < solution.y[m].size(); ++i)
      out[m][i] = lat.cash_lend[m] * (solution.y[m][i] - generator.endowment);
  }
  return out;
}

namespace {

// payoff-equality flags per node: true when every terminal payoff reachable
// from the node coincides
std::vector<std::vector<uint8_t>> subtree_payoffs_equal(
    const Lattice& lattice, const std::vector<double>& lo,
    const std::vector<double>& hi, double tolerance) {
  const int n = lattice.n_steps;
  std::vector<std::vector<uint8_t>> eq(n + 1);
  eq[n].resize(lattice.layers[n].size());
  for (std::size_t i = 0; i < eq[n].size(); ++i)
    eq[n][i] = std::fabs(hi[i] - lo[i]) <= tolerance ? 1 : 0;
  for (int m = n - 1; m >= 0; --m) {
    eq[m].assign(lattice.layers[m].size(), 1);
    for (std::size_t i = 0; i < lattice.layers[m].size(); ++i) {
      const LatticeNode& node = lattice.layers[m][i];
      for (int e = 0; e < node.edge_count; ++e) {
        const LatticeEdge& edge = lattice.edges[m][node.edge_begin + e];
        if (!eq[m + 1][edge.to]) {
          eq[m][i] = 0;
          break;
        }
      }
    }
  }
  return eq;
}

}  // namespace

ComparisonReport check_comparison(const Generator& generator,
                                  const std::vector<double>& terminal_low,
                                  const std::vector<double>& terminal_high,
                                  const SolverParams& params,
                                  double tolerance) {
  for (std::size_t i = 0; i < terminal_low.size(); ++i)
    if (terminal_high[i] < terminal_low[i] - 1e-15)
      throw SolverError("comparison check requires ordered terminal payoffs");
  const auto sol_lo = solve_backward(generator, terminal_low, params);
  const auto sol_hi = solve_backward(generator, terminal_high, params);
  const Lattice& lat = *generator.lattice;

  ComparisonReport report;
  report.comparison_ok = true;
  report.strict_ok = true;
  report.min_gap = std::numeric_limits<double>::infinity();
  const auto eq = subtree_payoffs_equal(lat, terminal_low, terminal_high,
                                        tolerance);
  for (int m = 0; m <= lat.n_steps; ++m) {
    for (std::size_t i = 0; i < sol_lo.y[m].size(); ++i) {
      const double gap = sol_hi.y[m][i] - sol_lo.y[m][i];
      report.min_gap = std::min(report.min_gap, gap);
      if (gap < -tolerance) {
        report.comparison_ok = false;
        report.violations.emplace_back(m, static_cast<int>(i));
      } else if (std::fabs(gap) <= tolerance && !eq[m][static_cast<int>(i)]) {
        report.strict_ok = false;
        report.violations.emplace_back(m, static_cast<int>(i));
      }
    }
  }
  return report;
}

ComparisonReport comparison_verdict(const Lattice& lattice, double y1_0,
                                    double y2_0,
                                    const std::vector<double>& payoff_low,
                                    const std::vector<double>& payoff_high,
                                    double tolerance) {
  ComparisonReport report;
  report.comparison_ok = true;
  bool ordered = true, somewhere_strict = false;
  for (std::size_t i = 0; i < payoff_low.size(); ++i) {
    if (payoff_high[i] < payoff_low[i] - tolerance) ordered = false;
    if (payoff_high[i] > payoff_low[i] + tolerance) somewhere_strict = true;
  }
  report.min_gap = y2_0 - y1_0;
  // strict comparison demands: equal initial values and ordered payoffs
  // imply equal payoffs
  const bool equal_initial = std::fabs(y2_0 - y1_0) <= tolerance;
  report.strict_ok = !(equal_initial && ordered && somewhere_strict);
  if (!report.strict_ok) report.violations.emplace_back(0, 0);
  (void)lattice;
  return report;
}

TradingStrategy recover_strategy(const Generator& generator,
                                 const BsdeSolution& solution) {
  const Lattice& lat = *generator.lattice;
  const LatticeMarket& market = *generator.market;
  const int n = lat.n_steps;
  TradingStrategy strat;
  strat.endowment = generator.endowment;
  strat.start_step = solution.start_layer;
  strat.price = lat.cash_lend[solution.start_layer] *
                (solution.y[solution.start_layer][0] - generator.endowment);
  strat.contract = generator.contract_copy;
  strat.portfolio = Portfolio::zeros(lat);
  const double kappa = generator.kappa;

  for (int m = solution.start_layer; m < n; ++m) {
    for (std::size_t i = 0; i < lat.layers[m].size(); ++i) {
      const double xi = solution.xi[m][i];
      const double spot = lat.layers[m][i].spot;
      strat.portfolio.xi[m][i] = xi;
      // funding leg: the (1-kappa) fraction of the position value
      const double psi =
          -(1.0 - kappa) * xi * spot / generator.funding[m];
      strat.portfolio.psi_fund_l[m][i] = std::max(psi, 0.0);
      strat.portfolio.psi_fund_b[m][i] = std::min(psi, 0.0);
      double alpha_x = 0.0;
      for (std::size_t a = 0; a < generator.adjustments.size(); ++a)
        alpha_x += generator.adjustments[a].alpha * solution.x_resolved[a][m][i];
      const double net =
          lat.cash_lend[m] * solution.y[m][i] + alpha_x - kappa * xi * spot;
      strat.portfolio.psi_cash_l[m][i] = std::max(net, 0.0) / lat.cash_lend[m];
      strat.portfolio.psi_cash_b[m][i] = std::min(net, 0.0) / lat.cash_borrow[m];
    }
  }
  // resolved adjustment values carry over so the replay needs no solver
  strat.resolved_x = solution.x_resolved;
  (void)market;
  return strat;
}

}  // namespace finlat
