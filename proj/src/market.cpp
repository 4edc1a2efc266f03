#include "finlat/market.hpp"

#include <algorithm>
#include <cmath>

namespace finlat {

// ---------------------------------------------------------------------------
// RateCurve

RateCurve RateCurve::flat(double rate, double horizon) {
  return RateCurve{{{0.0, rate}}, horizon};
}

void RateCurve::validate() const {
  if (horizon <= 0.0) throw std::invalid_argument("rate curve: horizon <= 0");
  if (segments.empty()) throw std::invalid_argument("rate curve: no segments");
  if (segments.front().first != 0.0)
    throw std::invalid_argument("rate curve: first segment must start at 0");
  for (std::size_t i = 0; i < segments.size(); ++i) {
    if (!std::isfinite(segments[i].second))
      throw std::invalid_argument("rate curve: non-finite rate");
    if (i > 0 && segments[i].first <= segments[i - 1].first)
      throw std::invalid_argument("rate curve: segment starts must increase");
  }
}

double RateCurve::integral(double t) const {
  if (t < 0.0 || t > horizon * (1.0 + 1e-12))
    throw std::domain_error("rate curve: time outside [0, horizon]");
  double acc = 0.0;
  for (std::size_t i = 0; i < segments.size(); ++i) {
    const double start = segments[i].first;
    if (start >= t) break;
    const double end =
        (i + 1 < segments.size()) ? std::min(segments[i + 1].first, t) : t;
    acc += segments[i].second * (end - start);
  }
  return acc;
}

double RateCurve::value(double t) const { return std::exp(integral(t)); }

double RateCurve::rate_at(double t) const {
  if (t < 0.0 || t > horizon * (1.0 + 1e-12))
    throw std::domain_error("rate curve: time outside [0, horizon]");
  double r = segments.front().second;
  for (const auto& [start, rate] : segments) {
    if (start <= t) r = rate;
  }
  return r;
}

double account_value(const RateCurve& curve, double t) { return curve.value(t); }

void AccountSet::validate() const {
  cash_lend.validate();
  cash_borrow.validate();
  for (const auto& f : funding) f.validate();
  // the borrowing rate must dominate the lending rate pointwise
  std::vector<double> knots;
  for (const auto& [s, r] : cash_lend.segments) knots.push_back(s);
  for (const auto& [s, r] : cash_borrow.segments) knots.push_back(s);
  for (double t : knots) {
    if (cash_borrow.rate_at(t) < cash_lend.rate_at(t) - 1e-15)
      throw std::invalid_argument(
          "accounts: borrowing rate below lending rate at t=" +
          std::to_string(t));
  }
}

const RateCurve& discount_basis(const AccountSet& accounts, double x) {
  if (!std::isfinite(x)) throw std::domain_error("discount basis: x not finite");
  return x >= 0.0 ? accounts.cash_lend : accounts.cash_borrow;
}

double discount_basis_from(const AccountSet& accounts, double t, double x,
                           double u) {
  if (u < t) throw std::domain_error("discount basis: u < t");
  const RateCurve& curve = discount_basis(accounts, x);
  return curve.value(u) / curve.value(t);
}

void DefaultHazards::validate() const {
  if (counterparty_first < 0.0 || hedger_first < 0.0 || simultaneous < 0.0)
    throw std::invalid_argument("hazards must be non-negative");
  if (survive() < 0.0)
    throw std::invalid_argument("hazards sum above one");
}

double DividendSchedule::increment(int step, double spot_at_pay_node) const {
  double amount = proportional * spot_at_pay_node;
  for (const auto& [s, a] : absolute)
    if (s == step) amount += a;
  return amount;
}

// ---------------------------------------------------------------------------
// Lattice

std::vector<const LatticeEdge*> Lattice::successors(int layer, int idx) const {
  const LatticeNode& n = layers[layer][idx];
  std::vector<const LatticeEdge*> out;
  out.reserve(n.edge_count);
  for (int e = 0; e < n.edge_count; ++e)
    out.push_back(&edges[layer][n.edge_begin + e]);
  return out;
}

std::vector<double> Lattice::layer_probabilities(int layer) const {
  std::vector<std::vector<double>> prob(layer + 1);
  prob[0] = {1.0};
  for (int m = 0; m < layer; ++m) {
    prob[m + 1].assign(layers[m + 1].size(), 0.0);
    for (std::size_t i = 0; i < layers[m].size(); ++i) {
      const LatticeNode& n = layers[m][i];
      for (int e = 0; e < n.edge_count; ++e) {
        const LatticeEdge& edge = edges[m][n.edge_begin + e];
        prob[m + 1][edge.to] += prob[m][i] * edge.p;
      }
    }
  }
  return prob[layer];
}

double LatticeMarket::up_factor() const {
  const auto& a = params.assets.at(0);
  return a.up > 0.0 ? a.up : std::exp(a.sigma * std::sqrt(params.dt));
}

double LatticeMarket::down_factor() const {
  const auto& a = params.assets.at(0);
  return a.down > 0.0 ? a.down : 1.0 / up_factor();
}

double LatticeMarket::dividend_at(const LatticeNode& node) const {
  if (node.layer == 0) return 0.0;  // D_0 = 0
  return params.assets[0].dividends.increment(node.layer, node.spot);
}

const std::vector<double>& LatticeMarket::hedge_funding_account() const {
  if (params.assets[0].funding_mode == FundingMode::repo_symmetric)
    return lattice.funding[0];
  return lattice.cash_lend;
}

namespace {

void fill_accounts(const LatticeMarketParams& p, Lattice& lat) {
  const int n = p.n_steps;
  lat.cash_lend.resize(n + 1);
  lat.cash_borrow.resize(n + 1);
  lat.funding.assign(p.accounts.funding.size(), std::vector<double>(n + 1));
  for (int m = 0; m <= n; ++m) {
    const double t = m * p.dt;
    lat.cash_lend[m] = p.accounts.cash_lend.value(t);
    lat.cash_borrow[m] = p.accounts.cash_borrow.value(t);
    for (std::size_t i = 0; i < p.accounts.funding.size(); ++i)
      lat.funding[i][m] = p.accounts.funding[i].value(t);
  }
}

// pricing-measure weight making the funding-discounted cum-dividend price of
// the diffusive asset a one-step martingale:
//   q (S u + D_up) + (1-q)(S d + D_dn) = S * g
double martingale_weight(double spot, double up, double down, double div_up,
                         double div_dn, double growth) {
  const double hi = spot * up + div_up;
  const double lo = spot * down + div_dn;
  if (hi <= lo) throw std::runtime_error("lattice: degenerate branching");
  const double q = (spot * growth - lo) / (hi - lo);
  if (!(q > 0.0 && q < 1.0))
    throw std::runtime_error(
        "lattice: pricing weight outside (0,1); lower dt or the dividend");
  return q;
}

}  // namespace

LatticeMarket build_lattice(const LatticeMarketParams& params) {
  if (params.n_steps < 1) throw std::invalid_argument("lattice: n_steps < 1");
  if (params.dt <= 0.0) throw std::invalid_argument("lattice: dt <= 0");
  if (params.assets.size() != 1)
    throw std::invalid_argument("lattice: exactly one diffusive asset");
  const auto& asset = params.assets[0];
  if (asset.up <= 0.0 && asset.sigma <= 0.0)
    throw std::invalid_argument("lattice: sigma must be positive");
  if (!(asset.prob_up > 0.0 && asset.prob_up < 1.0))
    throw std::invalid_argument("lattice: prob_up outside (0,1)");
  if (asset.haircut < 0.0 || asset.haircut >= 1.0)
    throw std::invalid_argument("lattice: haircut outside [0,1)");
  params.accounts.validate();
  if (params.accounts.funding.size() < params.assets.size())
    throw std::invalid_argument("lattice: missing funding account");
  for (const auto& det : params.deterministic_assets) {
    if (det.gate_step <= 0 || det.gate_step >= params.n_steps)
      throw std::invalid_argument("lattice: gate step outside (0, n_steps)");
  }

  LatticeMarket market;
  market.params = params;
  Lattice& lat = market.lattice;
  lat.n_steps = params.n_steps;
  lat.dt = params.dt;
  lat.n_det = static_cast<int>(params.deterministic_assets.size());
  fill_accounts(params, lat);

  const double u = market.up_factor();
  const double d = market.down_factor();
  if (u <= d) throw std::invalid_argument("lattice: up factor must exceed down");
  const int n = params.n_steps;
  const int gate = lat.n_det > 0 ? params.deterministic_assets[0].gate_step : -1;
  for (const auto& det : params.deterministic_assets)
    if (det.gate_step != gate)
      throw std::invalid_argument("lattice: deterministic assets share one gate");
  lat.gate_step = gate;
  lat.plain = (gate < 0);

  const std::vector<double>& fund =
      asset.funding_mode == FundingMode::repo_symmetric ? lat.funding[0]
                                                        : lat.cash_lend;

  auto spot_at = [&](int j, int m) {
    return asset.spot * std::pow(u, j) * std::pow(d, m - j);
  };

  lat.layers.resize(n + 1);
  lat.edges.resize(n + 1);
  lat.det_values.resize(n + 1);

  // layer construction: plain nodes up to the gate, (gate node, ups since
  // gate) pairs afterwards
  auto build_layer = [&](int m) {
    auto& layer = lat.layers[m];
    if (gate < 0 || m <= gate) {
      layer.resize(m + 1);
      for (int j = 0; j <= m; ++j)
        layer[j] = LatticeNode{m, j, -1, NodeState::alive, spot_at(j, m), 0, 0};
    } else {
      const int post = m - gate;
      layer.resize(static_cast<std::size_t>(gate + 1) * (post + 1));
      std::size_t idx = 0;
      for (int ju = 0; ju <= gate; ++ju)
        for (int dj = 0; dj <= post; ++dj, ++idx)
          layer[idx] = LatticeNode{m,  ju + dj, ju, NodeState::alive,
                                   spot_at(ju + dj, m), 0, 0};
    }
  };
  for (int m = 0; m <= n; ++m) build_layer(m);

  // gate-node put prices and event flags for the deterministic assets
  if (gate >= 0) {
    const auto& det0 = params.deterministic_assets[0];
    const int mat = det0.put_maturity_step < 0 ? n : det0.put_maturity_step;
    lat.gate_put_price = lattice_put_prices(params, det0.strike, gate, mat);
    lat.gate_event.resize(lat.gate_put_price.size());
    for (std::size_t i = 0; i < lat.gate_put_price.size(); ++i)
      lat.gate_event[i] =
          2.0 * lat.gate_put_price[i] > det0.strike ? 1 : 0;
  }

  // deterministic asset values per node
  for (int m = 0; m <= n; ++m) {
    auto& dv = lat.det_values[m];
    dv.assign(lat.layers[m].size() * std::max(lat.n_det, 1), 0.0);
    if (lat.n_det == 0) continue;
    for (std::size_t i = 0; i < lat.layers[m].size(); ++i) {
      const LatticeNode& node = lat.layers[m][i];
      for (int k = 0; k < lat.n_det; ++k) {
        const auto& det = params.deterministic_assets[k];
        double v = 1.0;
        if (m > gate) {
          const int ju = node.tag;
          const bool on = !det.gated || lat.gate_event[ju] != 0;
          if (on)
            v = 1.0 + det.factor * det.strike * (m - gate) * params.dt /
                          lat.gate_put_price[ju];
        }
        dv[i * lat.n_det + k] = v;
      }
    }
  }

  // edges with martingale pricing weights
  for (int m = 0; m < n; ++m) {
    auto& layer = lat.layers[m];
    auto& edges = lat.edges[m];
    edges.reserve(layer.size() * 2);
    const double growth = fund[m + 1] / fund[m];
    for (std::size_t i = 0; i < layer.size(); ++i) {
      LatticeNode& node = layer[i];
      node.edge_begin = static_cast<int32_t>(edges.size());
      node.edge_count = 2;
      const double div_up =
          asset.dividends.increment(m + 1, node.spot * u);
      const double div_dn =
          asset.dividends.increment(m + 1, node.spot * d);
      const double q =
          martingale_weight(node.spot, u, d, div_up, div_dn, growth);
      int32_t to_dn, to_up;
      if (gate < 0 || m < gate) {
        to_dn = node.ups;
        to_up = node.ups + 1;
      } else if (m == gate) {
        const int post_next = 1;  // next layer has (gate+1) x 2 nodes
        to_dn = node.ups * (post_next + 1);
        to_up = to_dn + 1;
      } else {
        const int post_next = m + 1 - gate;
        const int dj = node.ups - node.tag;
        to_dn = node.tag * (post_next + 1) + dj;
        to_up = to_dn + 1;
      }
      edges.push_back(LatticeEdge{to_up, q, asset.prob_up, true});
      edges.push_back(LatticeEdge{to_dn, 1.0 - q, 1.0 - asset.prob_up, false});
    }
  }
  return market;
}

Lattice extend_with_default_states(const LatticeMarket& market,
                                   const DefaultHazards& hazards) {
  hazards.validate();
  const Lattice& base = market.lattice;
  if (!base.plain)
    throw std::invalid_argument("default extension requires a plain lattice");
  Lattice lat;
  lat.n_steps = base.n_steps;
  lat.dt = base.dt;
  lat.n_det = 0;
  lat.plain = false;
  lat.cash_lend = base.cash_lend;
  lat.cash_borrow = base.cash_borrow;
  lat.funding = base.funding;
  const int n = base.n_steps;
  lat.layers.resize(n + 1);
  lat.edges.resize(n + 1);
  lat.det_values.resize(n + 1);

  // Layer m >= 1 holds, per market node j: alive, three settlement states
  // (first default happened over the last step) and closed (earlier default).
  // Layer 0 is the single alive root.
  const NodeState kinds[3] = {NodeState::settle_cpty, NodeState::settle_hedger,
                              NodeState::settle_both};
  auto state_index = [](NodeState s) {
    switch (s) {
      case NodeState::alive: return 0;
      case NodeState::settle_cpty: return 1;
      case NodeState::settle_hedger: return 2;
      case NodeState::settle_both: return 3;
      case NodeState::closed: return 4;
    }
    return 0;
  };
  for (int m = 0; m <= n; ++m) {
    auto& layer = lat.layers[m];
    const auto& bl = base.layers[m];
    if (m == 0) {
      layer = bl;
    } else {
      layer.resize(bl.size() * 5);
      for (std::size_t j = 0; j < bl.size(); ++j) {
        for (int s = 0; s < 5; ++s) {
          LatticeNode nd = bl[j];
          nd.state = s == 0 ? NodeState::alive
                            : (s == 4 ? NodeState::closed : kinds[s - 1]);
          layer[j * 5 + s] = nd;
        }
      }
    }
    lat.det_values[m].assign(std::max<std::size_t>(layer.size(), 1), 0.0);
  }

  const double hs[3] = {hazards.counterparty_first, hazards.hedger_first,
                        hazards.simultaneous};
  const double surv = hazards.survive();
  for (int m = 0; m < n; ++m) {
    auto& edges = lat.edges[m];
    auto& layer = lat.layers[m];
    for (std::size_t i = 0; i < layer.size(); ++i) {
      LatticeNode& node = layer[i];
      const std::size_t bj = node.ups;  // market node index in base layer
      const LatticeNode& bnode = base.layers[m][bj];
      const LatticeEdge& be_up = base.edges[m][bnode.edge_begin];
      const LatticeEdge& be_dn = base.edges[m][bnode.edge_begin + 1];
      node.edge_begin = static_cast<int32_t>(edges.size());
      auto push = [&](int32_t to_market, int state, double q_mkt, double p_mkt,
                      bool up) {
        edges.push_back(LatticeEdge{
            static_cast<int32_t>(to_market * 5 + state),
            q_mkt, p_mkt, up});
      };
      if (node.state == NodeState::alive) {
        for (int dir = 0; dir < 2; ++dir) {
          const LatticeEdge& be = dir == 0 ? be_up : be_dn;
          push(be.to, 0, be.q * surv, be.p * surv, be.up);
          for (int k = 0; k < 3; ++k)
            if (hs[k] > 0.0) push(be.to, k + 1, be.q * hs[k], be.p * hs[k], be.up);
        }
      } else {
        // settled or closed: market keeps branching, state collapses to closed
        push(be_up.to, 4, be_up.q, be_up.p, true);
        push(be_dn.to, 4, be_dn.q, be_dn.p, false);
      }
      node.edge_count = static_cast<int32_t>(edges.size()) - node.edge_begin;
    }
  }
  (void)state_index;
  return lat;
}

double discounted_cum_dividend_price(const LatticeMarket& market, int asset,
                                     double x, int layer, int node_idx,
                                     bool funding_basis) {
  if (asset != 0) throw std::invalid_argument("unknown diffusive asset");
  const auto& divs = market.params.assets[0].dividends;
  if (!divs.node_independent())
    throw std::invalid_argument(
        "cum-dividend price needs node-independent dividends");
  const Lattice& lat = market.lattice;
  const std::vector<double>& basis =
      funding_basis ? market.hedge_funding_account()
                    : (x >= 0.0 ? lat.cash_lend : lat.cash_borrow);
  const LatticeNode& node = lat.layers.at(layer).at(node_idx);
  double acc = node.spot / basis[layer];
  for (int m = 1; m <= layer; ++m)
    acc += divs.increment(m, 0.0) / basis[m];
  return acc;
}

Lattice treeify(const LatticeMarket& market, int max_steps) {
  const Lattice& base = market.lattice;
  const int n = base.n_steps;
  if (n > max_steps)
    throw std::invalid_argument("treeify: too many steps for a path tree");
  Lattice lat;
  lat.n_steps = n;
  lat.dt = base.dt;
  lat.n_det = base.n_det;
  lat.plain = false;
  lat.cash_lend = base.cash_lend;
  lat.cash_borrow = base.cash_borrow;
  lat.funding = base.funding;
  lat.gate_step = base.gate_step;
  lat.gate_put_price = base.gate_put_price;
  lat.gate_event = base.gate_event;
  lat.layers.resize(n + 1);
  lat.edges.resize(n + 1);
  lat.det_values.resize(n + 1);

  const auto& asset = market.params.assets[0];
  const double u = market.up_factor();
  const double d = market.down_factor();
  const int gate = base.gate_step;

  for (int m = 0; m <= n; ++m) {
    const std::size_t count = std::size_t{1} << m;
    lat.layers[m].resize(count);
    lat.det_values[m].assign(count * std::max(lat.n_det, 1), 0.0);
    for (std::size_t b = 0; b < count; ++b) {
      const int ups = __builtin_popcountll(b);
      int tag = -1;
      if (gate >= 0 && m > gate)
        tag = __builtin_popcountll(b & ((std::size_t{1} << gate) - 1));
      const double spot =
          asset.spot * std::pow(u, ups) * std::pow(d, m - ups);
      lat.layers[m][b] =
          LatticeNode{m, ups, tag, NodeState::alive, spot, 0, 0};
      for (int k = 0; k < lat.n_det; ++k) {
        const auto& det = market.params.deterministic_assets[k];
        double v = 1.0;
        if (gate >= 0 && m > gate) {
          const bool on = !det.gated || lat.gate_event[tag] != 0;
          if (on)
            v = 1.0 + det.factor * det.strike * (m - gate) * market.params.dt /
                          lat.gate_put_price[tag];
        }
        lat.det_values[m][b * lat.n_det + k] = v;
      }
    }
  }
  const std::vector<double>& fund = market.hedge_funding_account();
  for (int m = 0; m < n; ++m) {
    auto& edges = lat.edges[m];
    const double growth = fund[m + 1] / fund[m];
    for (std::size_t b = 0; b < lat.layers[m].size(); ++b) {
      LatticeNode& node = lat.layers[m][b];
      node.edge_begin = static_cast<int32_t>(edges.size());
      node.edge_count = 2;
      const double div_up = asset.dividends.increment(m + 1, node.spot * u);
      const double div_dn = asset.dividends.increment(m + 1, node.spot * d);
      const double q =
          martingale_weight(node.spot, u, d, div_up, div_dn, growth);
      edges.push_back(LatticeEdge{
          static_cast<int32_t>(b + (std::size_t{1} << m)), q, asset.prob_up,
          true});
      edges.push_back(
          LatticeEdge{static_cast<int32_t>(b), 1.0 - q, 1.0 - asset.prob_up,
                      false});
    }
  }
  return lat;
}

std::vector<double> lattice_put_prices(const LatticeMarketParams& params,
                                       double strike, int at_step,
                                       int maturity_step) {
  if (at_step < 0 || maturity_step > params.n_steps || at_step > maturity_step)
    throw std::invalid_argument("put pricer: bad step range");
  const auto& asset = params.assets.at(0);
  const double u =
      asset.up > 0.0 ? asset.up : std::exp(asset.sigma * std::sqrt(params.dt));
  const double d = asset.down > 0.0 ? asset.down : 1.0 / u;
  auto spot_at = [&](int j, int m) {
    return asset.spot * std::pow(u, j) * std::pow(d, m - j);
  };
  std::vector<double> values(maturity_step + 1);
  for (int j = 0; j <= maturity_step; ++j)
    values[j] = std::max(strike - spot_at(j, maturity_step), 0.0);
  const auto& divs = asset.dividends;
  const auto& lend = params.accounts.cash_lend;
  for (int m = maturity_step - 1; m >= at_step; --m) {
    const double growth =
        lend.value((m + 1) * params.dt) / lend.value(m * params.dt);
    std::vector<double> next(m + 1);
    for (int j = 0; j <= m; ++j) {
      const double s = spot_at(j, m);
      const double div_up = divs.increment(m + 1, s * u);
      const double div_dn = divs.increment(m + 1, s * d);
      const double q = (s * growth - s * d - div_dn) /
                       (s * u + div_up - s * d - div_dn);
      next[j] = (q * values[j + 1] + (1.0 - q) * values[j]) / growth;
    }
    values.swap(next);
  }
  return values;
}

}  // namespace finlat
