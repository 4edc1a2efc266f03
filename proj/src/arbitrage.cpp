#include "finlat/arbitrage.hpp"

#include <cmath>
#include <random>
#include <sstream>

namespace finlat {

namespace {

Contract null_contract_for(const LatticeMarket& market) {
  Contract c = Contract::null_contract(market.params.n_steps);
  c.convention.mode =
      market.params.assets[0].funding_mode == FundingMode::cash
          ? TradingConvention::Mode::cash
          : TradingConvention::Mode::repo_symmetric;
  return c;
}

int gate_index_at(const Lattice& lattice, int layer, int node) {
  const LatticeNode& nd = lattice.layers[layer][node];
  if (layer == lattice.gate_step) return nd.ups;
  return nd.tag;
}

}  // namespace

ArbitrageCertificate make_certificate(const LatticeMarket& market,
                                      const Lattice& lattice,
                                      TradingStrategy strategy,
                                      ArbitrageCertificate::Kind kind) {
  ArbitrageCertificate cert;
  cert.kind = kind;
  const auto report = is_self_financing(market, lattice, strategy);
  cert.evidence = terminal_discounted_wealth(market, lattice, strategy);
  cert.replayed_ok = report.ok;
  cert.strategy = std::move(strategy);
  return cert;
}

PrimarySearchReport search_primary_arbitrage(const LatticeMarket& market,
                                             double x,
                                             const SuperhedgeConfig& config,
                                             const Lattice* lattice) {
  const Contract null_c = null_contract_for(market);
  Generator gen = build_generator(market, null_c, x, lattice);
  const SuperhedgeResult res = superhedge_bruteforce(gen, config);

  PrimarySearchReport report;
  report.cost_gap = res.superhedge_inf;
  report.strict_at_zero = res.strict_attained_at_inf &&
                          std::fabs(res.superhedge_inf) <= res.grid_error;
  report.found =
      res.superhedge_inf < -res.grid_error || report.strict_at_zero;
  {
    const Lattice& lat = *gen.lattice;
    std::size_t states = 0;
    for (const auto& layer : lat.layers) states += layer.size();
    std::ostringstream os;
    os << "hedge grid [" << config.hedge.lo << "," << config.hedge.hi
       << "] step " << config.hedge.step << ", " << config.det_grids.size()
       << " deterministic-asset grids, " << states << " lattice states";
    report.search_space = os.str();
  }

  if (!report.found) return report;

  // a replayable witness needs single-predecessor wealth propagation
  const Lattice& lat = *gen.lattice;
  bool tree = true;
  {
    std::vector<std::vector<int>> preds(lat.n_steps + 1);
    for (int m = 1; m <= lat.n_steps; ++m)
      preds[m].assign(lat.layers[m].size(), 0);
    for (int m = 0; m < lat.n_steps && tree; ++m)
      for (const auto& node : lat.layers[m])
        for (int e = 0; e < node.edge_count; ++e)
          if (++preds[m + 1][lat.edges[m][node.edge_begin + e].to] > 1) {
            tree = false;
            break;
          }
  }
  if (tree) {
    TradingStrategy strat = witness_strategy(gen, res, x);
    report.certificate = make_certificate(
        market, lat, std::move(strat), ArbitrageCertificate::Kind::primary);
    return report;
  }

  // gated deterministic asset: borrow cash at the gate when the asset's
  // terminal value beats the borrowing account, ride it to maturity
  if (lat.gate_step >= 0 && lat.n_det > 0) {
    const int gate = lat.gate_step;
    const int n = lat.n_steps;
    const double bb_growth = lat.cash_borrow[n] / lat.cash_borrow[gate];
    std::vector<uint8_t> take(lat.gate_put_price.size(), 0);
    bool any = false;
    for (std::size_t j = 0; j < take.size(); ++j) {
      const auto& det = market.params.deterministic_assets[0];
      const bool on = !det.gated || lat.gate_event[j] != 0;
      const double terminal =
          on ? 1.0 + det.factor * det.strike * (n - gate) * market.params.dt /
                         lat.gate_put_price[j]
             : 1.0;
      if (terminal > bb_growth * (1.0 + 1e-12)) {
        take[j] = 1;
        any = true;
      }
    }
    if (any) {
      auto det_fn = [&lat, take, gate](int layer, int node, int det_asset) {
        if (det_asset != 0 || layer < gate) return 0.0;
        const int jg = gate_index_at(lat, layer, node);
        return jg >= 0 && take[jg] ? 1.0 : 0.0;
      };
      TradingStrategy strat = make_strategy_forward(
          market, lat, null_c, x, 0.0, nullptr, det_fn);
      report.certificate = make_certificate(
          market, lat, std::move(strat), ArbitrageCertificate::Kind::primary);
    }
  }
  return report;
}

// ---------------------------------------------------------------------------
// Trading-desk check

DeskCheckReport desk_supermartingale_check(const LatticeMarket& market,
                                           const Contract& contract,
                                           const DeskCheckConfig& config) {
  const Lattice tree = treeify(market, config.tree_steps);
  const int n = tree.n_steps;
  const double x = config.x1 + config.x2;
  const auto& basis = x >= 0.0 ? tree.cash_lend : tree.cash_borrow;

  DeskCheckReport report;
  report.pairs = config.pairs;
  report.martingale = true;
  report.supermartingale = true;

  std::mt19937_64 rng(config.seed);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);

  for (int pair = 0; pair < config.pairs; ++pair) {
    // random node-indexed positions for both desk members
    std::vector<std::vector<double>> xi_a(n), xi_b(n);
    for (int m = 0; m < n; ++m) {
      xi_a[m].resize(tree.layers[m].size());
      xi_b[m].resize(tree.layers[m].size());
      for (auto& v : xi_a[m]) v = config.hedge_scale * unit(rng);
      for (auto& v : xi_b[m]) v = config.hedge_scale * unit(rng);
    }
    // random exogenous collateral, vanishing at maturity
    std::vector<std::vector<double>> cval(n + 1);
    for (int m = 0; m <= n; ++m) {
      cval[m].resize(tree.layers[m].size());
      for (auto& v : cval[m])
        v = m == n ? 0.0 : 20.0 * unit(rng);
    }
    auto self = std::make_shared<std::vector<std::vector<double>>>(cval);
    NodeFn collateral = [self](const Lattice&, int layer, int node) {
      return (*self)[layer][node];
    };

    Contract long_leg = contract;
    long_leg.collateral = CollateralSpec{
        collateral, 0.0, false,
        config.rehypothecated ? CollateralConvention::rehypothecated
                              : CollateralConvention::segregated,
        market.params.accounts.cash_lend, market.params.accounts.cash_lend};
    long_leg.compile();

    Contract short_leg;
    short_leg.flows = contract.flows.negated();
    short_leg.convention = contract.convention;
    short_leg.adjustments = mirror_adjustments_signflip(long_leg.adjustments);
    if (!config.match_remuneration) {
      // shift the mirror remuneration to break the cancellation
      for (Adjustment& a : short_leg.adjustments)
        for (auto& seg : a.beta.segments) seg.second += 0.02;
    }

    const auto strat_a = make_strategy_forward(
        market, tree, long_leg, config.x1, 0.0,
        [&xi_a](int m, int i) { return xi_a[m][i]; });
    const auto strat_b = make_strategy_forward(
        market, tree, short_leg, config.x2, 0.0,
        [&xi_b](int m, int i) { return xi_b[m][i]; });

    // combined wealth per node; terminal values through the unique edges
    std::vector<std::vector<double>> vcom(n + 1);
    for (int m = 0; m < n; ++m) {
      vcom[m].resize(tree.layers[m].size());
      for (std::size_t i = 0; i < tree.layers[m].size(); ++i)
        vcom[m][i] = combined_wealth(market, tree, strat_a, strat_b, m,
                                     static_cast<int>(i));
    }
    vcom[n].resize(tree.layers[n].size());
    for (std::size_t i = 0; i < tree.layers[n - 1].size(); ++i) {
      const LatticeNode& node = tree.layers[n - 1][i];
      for (int e = 0; e < node.edge_count; ++e) {
        const LatticeEdge& edge = tree.edges[n - 1][node.edge_begin + e];
        vcom[n][edge.to] =
            terminal_wealth(market, tree, strat_a, n - 1, static_cast<int>(i),
                            edge) +
            terminal_wealth(market, tree, strat_b, n - 1, static_cast<int>(i),
                            edge);
      }
    }

    for (int m = 0; m < n; ++m) {
      for (std::size_t i = 0; i < tree.layers[m].size(); ++i) {
        const LatticeNode& node = tree.layers[m][i];
        double expected = 0.0;
        for (int e = 0; e < node.edge_count; ++e) {
          const LatticeEdge& edge = tree.edges[m][node.edge_begin + e];
          expected += edge.q * vcom[m + 1][edge.to] / basis[m + 1];
        }
        const double inc = expected - vcom[m][i] / basis[m];
        if (std::fabs(inc) > report.max_abs_increment) {
          report.max_abs_increment = std::fabs(inc);
          report.worst_layer = m;
          report.worst_node = static_cast<int>(i);
        }
        report.max_increment = std::max(report.max_increment, inc);
      }
    }
  }
  report.martingale = report.max_abs_increment <= 1e-12 * (1.0 + std::fabs(x));
  report.supermartingale =
      report.max_increment <= 1e-12 * (1.0 + std::fabs(x));
  return report;
}

// ---------------------------------------------------------------------------
// Appendix models

namespace {

LatticeMarketParams appendix_market(const AppendixModelParams& p, double factor,
                                    bool gated) {
  const double dt = p.gate_time / p.steps_to_gate;
  const int n = static_cast<int>(std::llround(p.horizon / dt));
  if (std::fabs(n * dt - p.horizon) > 1e-9)
    throw std::invalid_argument(
        "appendix model: horizon must be a multiple of U / steps_to_gate");
  LatticeMarketParams params;
  params.n_steps = n;
  params.dt = dt;
  params.accounts.cash_lend = RateCurve::flat(0.0, p.horizon);
  params.accounts.cash_borrow = RateCurve::flat(p.rate_borrow, p.horizon);
  params.accounts.funding = {RateCurve::flat(0.0, p.horizon)};
  LatticeAssetParams asset;
  asset.spot = p.spot;
  asset.sigma = p.sigma;
  asset.prob_up = p.prob_up;
  asset.funding_mode = FundingMode::cash;
  params.assets = {asset};
  DeterministicAssetSpec det;
  det.strike = p.strike;
  det.gate_step = p.steps_to_gate;
  det.factor = factor;
  det.gated = gated;
  params.deterministic_assets = {det};
  return params;
}

Contract short_put_contract(int maturity, double strike) {
  Contract c;
  c.flows.maturity_step = maturity;
  c.flows.flows = {{maturity, PayoffSpec{PayoffKind::put, strike, -1.0, 0, -1}}};
  c.convention.mode = TradingConvention::Mode::cash;
  return c;
}

// node-indexed delta of the synthetic long put replicated with the
// underlying and the lending account
std::function<double(int, int)> put_delta_fn(
    std::shared_ptr<const LatticeMarketParams> params, double strike,
    int maturity, std::shared_ptr<const Lattice> lattice) {
  auto cache = std::make_shared<std::vector<std::vector<double>>>(maturity + 1);
  return [params, strike, maturity, lattice, cache](int m, int i) -> double {
    if (m >= maturity) return 0.0;
    auto& prices = *cache;
    if (prices[m].empty())
      prices[m] = lattice_put_prices(*params, strike, m, maturity);
    if (prices[m + 1].empty())
      prices[m + 1] = lattice_put_prices(*params, strike, m + 1, maturity);
    const LatticeNode& node = lattice->layers[m][i];
    const double u = params->assets[0].up > 0.0
                         ? params->assets[0].up
                         : std::exp(params->assets[0].sigma *
                                    std::sqrt(params->dt));
    const double d = 1.0 / u;
    const double up_v = prices[m + 1][node.ups + 1];
    const double dn_v = prices[m + 1][node.ups];
    return (up_v - dn_v) / (node.spot * (u - d));
  };
}

double max_borrowed(const Lattice& lattice, const TradingStrategy& strat) {
  double worst = 0.0;
  for (int m = 0; m < lattice.n_steps; ++m)
    for (std::size_t i = 0; i < lattice.layers[m].size(); ++i)
      worst = std::max(worst, -strat.portfolio.psi_cash_b[m][i] *
                                  lattice.cash_borrow[m]);
  return worst;
}

}  // namespace

ConstrainedModelReport reproduce_appendix_a1(const AppendixModelParams& p) {
  ConstrainedModelReport report;
  const double K = p.strike;
  const double span = p.horizon - p.gate_time;

  LatticeMarketParams params = appendix_market(p, 2.0, false);
  LatticeMarket market = build_lattice(params);
  const Lattice& lat = market.lattice;
  const int n = lat.n_steps;
  const int gate = lat.gate_step;

  // (a) the short put replicates without borrowing in the base model
  {
    LatticeMarketParams base = params;
    base.deterministic_assets.clear();
    LatticeMarket base_market = build_lattice(base);
    PricingRun run =
        gained_value(base_market, short_put_contract(n, K), 0.0);
    TradingStrategy strat = recover_strategy(run.generator, run.solution);
    report.put_replication_borrowing =
        max_borrowed(base_market.lattice, strat);
  }

  // (b) the gate-premium contract replicates at zero cost, no borrowing
  Contract contract_a;
  contract_a.flows.maturity_step = n;
  contract_a.flows.flows = {
      {gate, PayoffSpec{PayoffKind::put_price, K, 1.0, 0, n}},
      {n, PayoffSpec{PayoffKind::put, K, -1.0, 0, -1}}};
  contract_a.convention.mode = TradingConvention::Mode::cash;
  {
    PricingRun run = gained_value(market, contract_a, 0.0);
    report.contract_replication_cost = run.gained_value[0][0];
    TradingStrategy strat = recover_strategy(run.generator, run.solution);
    report.contract_no_borrowing = max_borrowed(lat, strat) <= 1e-9;
  }

  // (c) rollover strategy: collect the gate premium, hold the deterministic
  // asset to maturity
  auto det_fn = [&lat, gate](int layer, int node, int det_asset) {
    if (det_asset != 0 || layer < gate) return 0.0;
    const int jg = gate_index_at(lat, layer, node);
    return jg >= 0 ? lat.gate_put_price[jg] : 0.0;
  };
  TradingStrategy rollover = make_strategy_forward(market, lat, contract_a,
                                                   0.0, 0.0, nullptr, det_fn);
  report.min_strategy_wealth = min_discounted_wealth(market, lat, rollover);
  report.rollover_terminal_floor = 2.0 * K * span;
  report.max_put_liability = K;
  report.dominance_guarantee = report.rollover_terminal_floor >= K - 1e-12;
  {
    bool strict_everywhere = true;
    for (std::size_t i = 0; i < lat.layers[n].size(); ++i) {
      const double liability = std::max(K - lat.layers[n][i].spot, 0.0);
      if (report.rollover_terminal_floor <= liability) strict_everywhere = false;
    }
    report.dominance_on_lattice = strict_everywhere;
  }

  // (d) two terminal claims attainable from the same null cost
  std::vector<double> claims_low(lat.layers[n].size());
  std::vector<double> claims_high(lat.layers[n].size());
  for (std::size_t i = 0; i < lat.layers[n].size(); ++i) {
    const LatticeNode& node = lat.layers[n][i];
    claims_low[i] = std::max(K - node.spot, 0.0);
    claims_high[i] =
        lat.gate_put_price[node.tag] + report.rollover_terminal_floor;
  }
  report.value_low_0 = 0.0;
  report.value_high_0 = 0.0;
  const auto cmp = comparison_verdict(lat, report.value_low_0,
                                      report.value_high_0, claims_low,
                                      claims_high);
  report.strict_comparison_fails = !cmp.strict_ok;
  report.verdict = report.strict_comparison_fails ? Regularity::not_regular
                                                  : Regularity::regular;
  report.pricing_certificate = make_certificate(
      market, lat, std::move(rollover), ArbitrageCertificate::Kind::pricing);

  const bool dominance_as_predicted =
      report.dominance_guarantee == (span >= 0.5 - 1e-12);
  report.all_reproduced =
      std::fabs(report.contract_replication_cost) <= 1e-9 &&
      report.put_replication_borrowing <= 1e-9 && report.contract_no_borrowing &&
      report.min_strategy_wealth >= -1e-9 && report.strict_comparison_fails &&
      dominance_as_predicted &&
      (!report.dominance_guarantee || report.dominance_on_lattice) &&
      report.pricing_certificate.replayed_ok;
  return report;
}

UnconstrainedModelReport reproduce_appendix_a2(const AppendixModelParams& p) {
  UnconstrainedModelReport report;
  const double K = p.strike;
  if (std::fabs((p.horizon - p.gate_time) - 1.0) > 1e-9)
    throw std::invalid_argument("unconstrained model expects T - U = 1");

  LatticeMarketParams params = appendix_market(p, 1.0, true);
  LatticeMarket market = build_lattice(params);
  const Lattice& lat = market.lattice;
  const int n = lat.n_steps;
  const int gate = lat.gate_step;

  // event probability under the real-world measure
  const auto gate_probs = lat.layer_probabilities(gate);
  for (std::size_t j = 0; j < lat.gate_event.size(); ++j) {
    if (lat.gate_event[j]) {
      ++report.event_nodes;
      report.event_probability += gate_probs[j];
    }
  }
  if (report.event_nodes == 0)
    throw std::invalid_argument(
        "the event {2 P_U(K) > K} is empty on this lattice; raise sigma or "
        "refine the grid");
  report.det_terminal_min = std::numeric_limits<double>::infinity();
  report.det_terminal_max = -std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < lat.gate_event.size(); ++j) {
    if (!lat.gate_event[j]) continue;
    const double v = 1.0 + K / lat.gate_put_price[j];
    report.det_terminal_min = std::min(report.det_terminal_min, v);
    report.det_terminal_max = std::max(report.det_terminal_max, v);
  }

  // primary arbitrage search over the grid
  SuperhedgeConfig search;
  search.hedge = HedgeGrid{-1.5, 1.5, 0.25};
  search.det_grids = {HedgeGrid{-2.0, 2.0, 0.5}};
  report.primary_search = search_primary_arbitrage(market, 0.0, search);

  // put sold at its replication price, hedged to the gate, rolled into the
  // deterministic asset on the event
  const auto put0 = lattice_put_prices(params, K, 0, n);
  report.put_price_0 = put0[0];
  Contract put_c = short_put_contract(n, K);
  auto params_ptr = std::make_shared<const LatticeMarketParams>(params);
  auto lat_ptr = std::shared_ptr<const Lattice>(&lat, [](const Lattice*) {});
  auto delta = put_delta_fn(params_ptr, K, n, lat_ptr);
  auto on_event = [&lat, gate](int layer, int node) {
    const int jg = gate_index_at(lat, layer, node);
    return jg >= 0 && lat.gate_event[jg] != 0;
  };
  auto xi_fn = [&, delta](int m, int i) {
    if (m >= gate && on_event(m, i)) return 0.0;
    return delta(m, i);  // replicating the put holds its (negative) delta
  };
  auto det_fn = [&lat, gate, on_event](int layer, int node, int det_asset) {
    if (det_asset != 0 || layer < gate || !on_event(layer, node)) return 0.0;
    return lat.gate_put_price[gate_index_at(lat, layer, node)];
  };
  TradingStrategy rollover = make_strategy_forward(
      market, lat, put_c, 0.0, report.put_price_0, xi_fn, det_fn);
  report.event_payout_floor = 0.5 * K;
  double event_min = std::numeric_limits<double>::infinity();
  double overall_min = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < lat.layers[n - 1].size(); ++i) {
    const LatticeNode& node = lat.layers[n - 1][i];
    for (int e = 0; e < node.edge_count; ++e) {
      const LatticeEdge& edge = lat.edges[n - 1][node.edge_begin + e];
      const double v = terminal_wealth(market, lat, rollover, n - 1,
                                       static_cast<int>(i), edge);
      overall_min = std::min(overall_min, v);
      if (on_event(n - 1, static_cast<int>(i)))
        event_min = std::min(event_min, v);
    }
  }
  report.strategy_terminal_min = overall_min;
  report.payout_exceeds_floor = event_min > report.event_payout_floor;

  // strict-comparison exhibit: both claims produced from the premium
  std::vector<double> claims_low(lat.layers[n].size());
  std::vector<double> claims_high(lat.layers[n].size());
  for (std::size_t i = 0; i < lat.layers[n].size(); ++i) {
    const LatticeNode& node = lat.layers[n][i];
    const double put_payoff = std::max(K - node.spot, 0.0);
    claims_low[i] = put_payoff;
    claims_high[i] = lat.gate_event[node.tag]
                         ? lat.gate_put_price[node.tag] + K
                         : put_payoff;
  }
  report.value_low_0 = 0.0;
  report.value_high_0 = 0.0;
  const auto cmp = comparison_verdict(lat, report.value_low_0,
                                      report.value_high_0, claims_low,
                                      claims_high);
  report.strict_comparison_fails = !cmp.strict_ok;
  report.verdict = report.strict_comparison_fails ? Regularity::not_regular
                                                  : Regularity::regular;
  report.pricing_certificate = make_certificate(
      market, lat, std::move(rollover), ArbitrageCertificate::Kind::pricing);

  report.all_reproduced = report.event_probability > 0.0 &&
                          report.det_terminal_min > 1.0 &&
                          report.det_terminal_max < 3.0 &&
                          report.strategy_terminal_min >= -1e-9 &&
                          report.payout_exceeds_floor &&
                          report.strict_comparison_fails &&
                          report.pricing_certificate.replayed_ok;
  return report;
}

}  // namespace finlat
