#include "finlat/config.hpp"

#include <fstream>
#include <sstream>

namespace finlat {

using json = nlohmann::ordered_json;

namespace {

template <typename T>
T get_or(const json& j, const std::string& key, T fallback) {
  if (!j.contains(key)) return fallback;
  return j.at(key).get<T>();
}

json pairs_to_json(const std::vector<std::pair<double, double>>& v) {
  json out = json::array();
  for (const auto& [a, b] : v) out.push_back(json::array({a, b}));
  return out;
}

std::vector<std::pair<double, double>> pairs_from_json(const json& j) {
  std::vector<std::pair<double, double>> out;
  for (const auto& e : j) out.emplace_back(e.at(0).get<double>(), e.at(1).get<double>());
  return out;
}

json payoff_to_json(const PayoffConfig& p) {
  return json{{"kind", p.kind},
              {"strike", p.strike},
              {"coeff", p.coeff},
              {"asset", p.asset},
              {"maturity_step", p.maturity_step}};
}

PayoffConfig payoff_from_json(const json& j) {
  PayoffConfig p;
  p.kind = get_or<std::string>(j, "kind", "constant");
  p.strike = get_or<double>(j, "strike", 0.0);
  p.coeff = get_or<double>(j, "coeff", 1.0);
  p.asset = get_or<int>(j, "asset", 0);
  p.maturity_step = get_or<int>(j, "maturity_step", -1);
  return p;
}

}  // namespace

nlohmann::ordered_json config_to_json(const RunConfig& c) {
  json m{{"horizon", c.market.horizon},
         {"steps", c.market.steps},
         {"rate_lend", pairs_to_json(c.market.rate_lend)},
         {"rate_borrow", pairs_to_json(c.market.rate_borrow)},
         {"rate_funding", pairs_to_json(c.market.rate_funding)},
         {"spot", c.market.spot},
         {"sigma", c.market.sigma},
         {"up", c.market.up},
         {"down", c.market.down},
         {"prob_up", c.market.prob_up},
         {"dividends_proportional", c.market.dividends_proportional},
         {"funding_mode", c.market.funding_mode}};
  {
    json divs = json::array();
    for (const auto& [s, a] : c.market.dividends_absolute)
      divs.push_back(json::array({s, a}));
    m["dividends_absolute"] = divs;
    json dets = json::array();
    for (const auto& d : c.market.deterministic_assets)
      dets.push_back(json{{"strike", d.strike},
                          {"gate_step", d.gate_step},
                          {"factor", d.factor},
                          {"gated", d.gated}});
    m["deterministic_assets"] = dets;
  }

  json flows = json::array();
  for (const auto& f : c.contract.flows)
    flows.push_back(json{{"step", f.step}, {"payoff", payoff_to_json(f.payoff)}});
  json contract{{"flows", flows},
                {"convention", c.contract.convention},
                {"haircut", c.contract.haircut}};
  if (c.contract.collateral.present) {
    const auto& col = c.contract.collateral;
    contract["collateral"] = json{{"rule", col.rule},
                                  {"value", payoff_to_json(col.value)},
                                  {"fraction", col.fraction},
                                  {"drop_at_maturity", col.drop_at_maturity},
                                  {"convention", col.convention},
                                  {"rate_received", col.rate_received},
                                  {"rate_posted", col.rate_posted}};
  }
  if (c.contract.defaults.present) {
    const auto& d = c.contract.defaults;
    contract["defaults"] =
        json{{"hazard_counterparty", d.hazard_counterparty},
             {"hazard_hedger", d.hazard_hedger},
             {"hazard_both", d.hazard_both},
             {"recovery_counterparty", d.recovery_counterparty},
             {"recovery_hedger", d.recovery_hedger},
             {"closeout", d.closeout},
             {"closeout_value", payoff_to_json(d.closeout_value)}};
  }
  if (!c.contract.adjustments.empty()) {
    json adjs = json::array();
    for (const auto& a : c.contract.adjustments)
      adjs.push_back(json{{"kind", a.kind},
                          {"name", a.name},
                          {"alpha", a.alpha},
                          {"rate", a.rate},
                          {"value", payoff_to_json(a.value)}});
    contract["adjustments"] = adjs;
  }

  json solver{{"tolerance", c.solver.tolerance},
              {"max_iterations", c.solver.max_iterations},
              {"damping", c.solver.damping}};

  json task{{"operation", c.task.operation},
            {"endowment", c.task.endowment},
            {"endowment_clean", c.task.endowment_clean},
            {"endowment_ccr", c.task.endowment_ccr},
            {"ccr_split", c.task.ccr_split},
            {"t", c.task.t},
            {"out_dir", c.task.out_dir},
            {"seed", c.task.seed},
            {"grid_lo", c.task.grid_lo},
            {"grid_hi", c.task.grid_hi},
            {"grid_step", c.task.grid_step},
            {"allow_borrowing", c.task.allow_borrowing},
            {"comparison_pairs", c.task.comparison_pairs},
            {"desk_pairs", c.task.desk_pairs},
            {"mirror", json{{"mode", c.task.mirror.mode},
                            {"rate_shift", c.task.mirror.rate_shift}}},
            {"appendix", json{{"spot", c.task.appendix.spot},
                              {"sigma", c.task.appendix.sigma},
                              {"strike", c.task.appendix.strike},
                              {"gate_time", c.task.appendix.gate_time},
                              {"horizon", c.task.appendix.horizon},
                              {"steps_to_gate", c.task.appendix.steps_to_gate},
                              {"rate_borrow", c.task.appendix.rate_borrow},
                              {"prob_up", c.task.appendix.prob_up}}}};

  return json{{"market", m},
              {"contract", contract},
              {"solver", solver},
              {"task", task}};
}

RunConfig config_from_json(const json& j, const std::string& name) {
  try {
    RunConfig c;
    const json& m = j.at("market");
    c.market.horizon = m.at("horizon").get<double>();
    c.market.steps = m.at("steps").get<int>();
    c.market.rate_lend = pairs_from_json(m.at("rate_lend"));
    c.market.rate_borrow = pairs_from_json(m.at("rate_borrow"));
    c.market.rate_funding = pairs_from_json(m.at("rate_funding"));
    c.market.spot = m.at("spot").get<double>();
    c.market.sigma = get_or<double>(m, "sigma", 0.2);
    c.market.up = get_or<double>(m, "up", 0.0);
    c.market.down = get_or<double>(m, "down", 0.0);
    c.market.prob_up = get_or<double>(m, "prob_up", 0.5);
    c.market.dividends_proportional =
        get_or<double>(m, "dividends_proportional", 0.0);
    c.market.funding_mode =
        get_or<std::string>(m, "funding_mode", "repo_symmetric");
    if (m.contains("dividends_absolute"))
      for (const auto& e : m.at("dividends_absolute"))
        c.market.dividends_absolute.emplace_back(e.at(0).get<int>(),
                                                 e.at(1).get<double>());
    if (m.contains("deterministic_assets"))
      for (const auto& e : m.at("deterministic_assets"))
        c.market.deterministic_assets.push_back(
            {e.at("strike").get<double>(), e.at("gate_step").get<int>(),
             e.at("factor").get<double>(), e.at("gated").get<bool>()});

    const json& ct = j.at("contract");
    if (ct.contains("flows"))
      for (const auto& e : ct.at("flows"))
        c.contract.flows.push_back(
            {e.at("step").get<int>(), payoff_from_json(e.at("payoff"))});
    c.contract.convention =
        get_or<std::string>(ct, "convention", "repo_symmetric");
    c.contract.haircut = get_or<double>(ct, "haircut", 0.0);
    if (ct.contains("collateral")) {
      const json& col = ct.at("collateral");
      c.contract.collateral.present = true;
      c.contract.collateral.rule = get_or<std::string>(col, "rule", "exogenous");
      c.contract.collateral.value = payoff_from_json(col.at("value"));
      c.contract.collateral.fraction = get_or<double>(col, "fraction", 0.0);
      c.contract.collateral.drop_at_maturity =
          get_or<bool>(col, "drop_at_maturity", true);
      c.contract.collateral.convention =
          get_or<std::string>(col, "convention", "rehypothecated");
      c.contract.collateral.rate_received =
          get_or<double>(col, "rate_received", 0.0);
      c.contract.collateral.rate_posted = get_or<double>(col, "rate_posted", 0.0);
    }
    if (ct.contains("defaults")) {
      const json& d = ct.at("defaults");
      c.contract.defaults.present = true;
      c.contract.defaults.hazard_counterparty =
          get_or<double>(d, "hazard_counterparty", 0.0);
      c.contract.defaults.hazard_hedger = get_or<double>(d, "hazard_hedger", 0.0);
      c.contract.defaults.hazard_both = get_or<double>(d, "hazard_both", 0.0);
      c.contract.defaults.recovery_counterparty =
          get_or<double>(d, "recovery_counterparty", 1.0);
      c.contract.defaults.recovery_hedger =
          get_or<double>(d, "recovery_hedger", 1.0);
      c.contract.defaults.closeout = get_or<std::string>(d, "closeout", "clean");
      if (d.contains("closeout_value"))
        c.contract.defaults.closeout_value =
            payoff_from_json(d.at("closeout_value"));
    }
    if (ct.contains("adjustments"))
      for (const auto& e : ct.at("adjustments")) {
        AdjustmentConfig a;
        a.kind = get_or<std::string>(e, "kind", "exogenous");
        a.name = get_or<std::string>(e, "name", "adjustment");
        a.alpha = get_or<double>(e, "alpha", 1.0);
        a.rate = get_or<double>(e, "rate", 0.0);
        if (e.contains("value")) a.value = payoff_from_json(e.at("value"));
        c.contract.adjustments.push_back(a);
      }

    if (j.contains("solver")) {
      const json& s = j.at("solver");
      c.solver.tolerance = get_or<double>(s, "tolerance", 1e-12);
      c.solver.max_iterations = get_or<int>(s, "max_iterations", 200);
      c.solver.damping = get_or<double>(s, "damping", 1.0);
    }

    if (j.contains("task")) {
      const json& t = j.at("task");
      c.task.operation = get_or<std::string>(t, "operation", "price");
      c.task.endowment = get_or<double>(t, "endowment", 0.0);
      c.task.endowment_clean = get_or<double>(t, "endowment_clean", 0.0);
      c.task.endowment_ccr = get_or<double>(t, "endowment_ccr", 0.0);
      c.task.ccr_split =
          get_or<std::string>(t, "ccr_split", "adjustments_on_clean");
      c.task.t = get_or<int>(t, "t", 0);
      c.task.out_dir = get_or<std::string>(t, "out_dir", ".");
      c.task.seed = get_or<uint64_t>(t, "seed", 42);
      c.task.grid_lo = get_or<double>(t, "grid_lo", -2.0);
      c.task.grid_hi = get_or<double>(t, "grid_hi", 2.0);
      c.task.grid_step = get_or<double>(t, "grid_step", 0.01);
      c.task.allow_borrowing = get_or<bool>(t, "allow_borrowing", true);
      c.task.comparison_pairs = get_or<int>(t, "comparison_pairs", 100);
      c.task.desk_pairs = get_or<int>(t, "desk_pairs", 100);
      if (t.contains("mirror")) {
        c.task.mirror.mode =
            get_or<std::string>(t.at("mirror"), "mode", "signflip");
        c.task.mirror.rate_shift =
            get_or<double>(t.at("mirror"), "rate_shift", 0.0);
      }
      if (t.contains("appendix")) {
        const json& a = t.at("appendix");
        c.task.appendix.spot = get_or<double>(a, "spot", 100.0);
        c.task.appendix.sigma = get_or<double>(a, "sigma", 0.2);
        c.task.appendix.strike = get_or<double>(a, "strike", 100.0);
        c.task.appendix.gate_time = get_or<double>(a, "gate_time", 0.5);
        c.task.appendix.horizon = get_or<double>(a, "horizon", 1.5);
        c.task.appendix.steps_to_gate = get_or<int>(a, "steps_to_gate", 8);
        c.task.appendix.rate_borrow = get_or<double>(a, "rate_borrow", 0.0);
        c.task.appendix.prob_up = get_or<double>(a, "prob_up", 0.5);
      }
    }
    return c;
  } catch (const json::exception& e) {
    throw ConfigSyntaxError(name + ": " + e.what());
  }
}

RunConfig parse_config_text(const std::string& text, const std::string& name) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigSyntaxError(name + ": " + e.what());
  }
  return config_from_json(j, name);
}

RunConfig parse_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigSyntaxError(path + ": cannot open file");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str(), path);
}

uint64_t config_hash(const RunConfig& config) {
  const std::string dump = config_to_json(config).dump();
  uint64_t h = 1469598103934665603ull;
  for (unsigned char ch : dump) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  return h;
}

LatticeMarketParams build_market_params(const MarketConfig& m) {
  LatticeMarketParams params;
  if (m.steps < 1) throw ConfigSemanticError("market.steps must be positive");
  params.n_steps = m.steps;
  params.dt = m.horizon / m.steps;
  params.accounts.cash_lend = RateCurve{m.rate_lend, m.horizon};
  params.accounts.cash_borrow = RateCurve{m.rate_borrow, m.horizon};
  params.accounts.funding = {RateCurve{m.rate_funding, m.horizon}};
  LatticeAssetParams asset;
  asset.spot = m.spot;
  asset.sigma = m.sigma;
  asset.up = m.up;
  asset.down = m.down;
  asset.prob_up = m.prob_up;
  asset.dividends.absolute = m.dividends_absolute;
  asset.dividends.proportional = m.dividends_proportional;
  if (m.funding_mode == "cash")
    asset.funding_mode = FundingMode::cash;
  else if (m.funding_mode == "repo_symmetric")
    asset.funding_mode = FundingMode::repo_symmetric;
  else
    throw ConfigSemanticError("market.funding_mode: unknown mode '" +
                              m.funding_mode + "'");
  params.assets = {asset};
  for (const auto& d : m.deterministic_assets)
    params.deterministic_assets.push_back(
        DeterministicAssetSpec{d.strike, d.gate_step, d.factor, d.gated, -1});
  return params;
}

PayoffSpec build_payoff(const PayoffConfig& p) {
  PayoffSpec spec;
  if (p.kind == "constant") spec.kind = PayoffKind::constant;
  else if (p.kind == "spot") spec.kind = PayoffKind::spot;
  else if (p.kind == "forward") spec.kind = PayoffKind::forward;
  else if (p.kind == "call") spec.kind = PayoffKind::call;
  else if (p.kind == "put") spec.kind = PayoffKind::put;
  else if (p.kind == "straddle") spec.kind = PayoffKind::straddle;
  else if (p.kind == "put_price") spec.kind = PayoffKind::put_price;
  else if (p.kind == "det_spot") spec.kind = PayoffKind::det_spot;
  else
    throw ConfigSemanticError("payoff: unknown kind '" + p.kind + "'");
  spec.strike = p.strike;
  spec.coeff = p.coeff;
  spec.asset = p.asset;
  spec.maturity_step = p.maturity_step;
  return spec;
}

Contract build_contract(const ContractConfig& cc, const LatticeMarket& market) {
  Contract contract;
  const int n = market.params.n_steps;
  contract.flows.maturity_step = n;
  for (const auto& f : cc.flows) {
    if (f.step < 0 || f.step > n)
      throw ConfigSemanticError("contract flow outside the lattice horizon");
    contract.flows.flows.push_back({f.step, build_payoff(f.payoff)});
  }
  if (cc.convention == "cash")
    contract.convention.mode = TradingConvention::Mode::cash;
  else if (cc.convention == "repo_symmetric")
    contract.convention.mode = TradingConvention::Mode::repo_symmetric;
  else if (cc.convention == "broker_short_sale")
    contract.convention.mode = TradingConvention::Mode::broker_short_sale;
  else if (cc.convention == "repo_cash_driven")
    contract.convention.mode = TradingConvention::Mode::repo_cash_driven;
  else if (cc.convention == "repo_security_driven")
    contract.convention.mode = TradingConvention::Mode::repo_security_driven;
  else
    throw ConfigSemanticError("contract.convention: unknown mode '" +
                              cc.convention + "'");
  contract.convention.haircut = cc.haircut;

  if (cc.collateral.present) {
    CollateralSpec spec;
    const double horizon = market.params.dt * n;
    spec.remuneration_received =
        RateCurve::flat(cc.collateral.rate_received, horizon);
    spec.remuneration_posted =
        RateCurve::flat(cc.collateral.rate_posted, horizon);
    spec.convention = cc.collateral.convention == "segregated"
                          ? CollateralConvention::segregated
                          : CollateralConvention::rehypothecated;
    if (cc.collateral.rule == "gained_value_fraction") {
      spec.endogenous = true;
      spec.gained_value_fraction = cc.collateral.fraction;
    } else if (cc.collateral.rule == "exogenous") {
      const PayoffSpec shape = build_payoff(cc.collateral.value);
      const bool drop = cc.collateral.drop_at_maturity;
      const LatticeMarket* mkt = &market;
      spec.value = [shape, drop, n, mkt](const Lattice& lat, int layer,
                                         int node) {
        if (drop && layer == n) return 0.0;
        return eval_payoff(shape, *mkt, lat, layer, node);
      };
      if (!drop) {
        // the margin account must vanish at maturity
        for (std::size_t i = 0; i < market.lattice.layers[n].size(); ++i)
          if (std::fabs(spec.value(market.lattice, n, static_cast<int>(i))) >
              1e-12)
            throw ConfigSemanticError(
                "collateral does not vanish at maturity: the margin account "
                "must satisfy C_T = 0");
      }
    } else {
      throw ConfigSemanticError("collateral.rule: unknown rule '" +
                                cc.collateral.rule + "'");
    }
    contract.collateral = spec;
  }

  if (cc.defaults.present) {
    DefaultSpec def;
    def.hazards.counterparty_first = cc.defaults.hazard_counterparty;
    def.hazards.hedger_first = cc.defaults.hazard_hedger;
    def.hazards.simultaneous = cc.defaults.hazard_both;
    def.hazards.validate();
    if (cc.defaults.recovery_counterparty < 0.0 ||
        cc.defaults.recovery_counterparty > 1.0 ||
        cc.defaults.recovery_hedger < 0.0 || cc.defaults.recovery_hedger > 1.0)
      throw ConfigSemanticError("recoveries must lie in [0,1]");
    def.recovery_counterparty = cc.defaults.recovery_counterparty;
    def.recovery_hedger = cc.defaults.recovery_hedger;
    if (cc.defaults.closeout == "clean") {
      def.closeout = CloseoutRule::clean_price;
    } else if (cc.defaults.closeout == "exogenous") {
      def.closeout = CloseoutRule::exogenous;
      const PayoffSpec shape = build_payoff(cc.defaults.closeout_value);
      const LatticeMarket* mkt = &market;
      def.closeout_value = [shape, mkt](const Lattice& lat, int layer,
                                        int node) {
        return eval_payoff(shape, *mkt, lat, layer, node);
      };
    } else {
      throw ConfigSemanticError("defaults.closeout: unknown rule '" +
                                cc.defaults.closeout + "'");
    }
    contract.defaults = def;
  }

  for (const auto& a : cc.adjustments) {
    Adjustment adj;
    adj.index = static_cast<int>(contract.adjustments.size());
    adj.alpha = a.alpha;
    adj.beta = RateCurve::flat(a.rate, market.params.dt * n);
    if (a.kind == "global_demo") {
      adj.x = GlobalX{a.name};
    } else if (a.kind == "exogenous") {
      const PayoffSpec shape = build_payoff(a.value);
      const LatticeMarket* mkt = &market;
      adj.x = ExogenousX{[shape, mkt](const Lattice& lat, int layer, int node) {
        return eval_payoff(shape, *mkt, lat, layer, node);
      }};
    } else {
      throw ConfigSemanticError("adjustment kind: unknown '" + a.kind + "'");
    }
    contract.adjustments.push_back(adj);
  }

  contract.compile();
  return contract;
}

std::vector<Adjustment> build_mirror(const MirrorConfig& config,
                                     const Contract& contract) {
  if (config.mode != "signflip")
    throw ConfigSemanticError("mirror.mode: only 'signflip' is built in");
  auto mirror = mirror_adjustments_signflip(contract.adjustments);
  if (config.rate_shift != 0.0)
    for (Adjustment& a : mirror)
      for (auto& seg : a.beta.segments) seg.second += config.rate_shift;
  return mirror;
}

}  // namespace finlat
