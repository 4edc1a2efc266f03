#include "finlat/reports.hpp"

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "finlat/simd/kernels.hpp"

namespace finlat {

using json = nlohmann::ordered_json;

json report_header(const ReportContext& ctx) {
  std::ostringstream hash;
  hash << std::hex << ctx.config_hash;
  return json{{"config_hash", hash.str()},
              {"solver", json{{"tolerance", ctx.solver.tolerance},
                              {"max_iterations", ctx.solver.max_iterations},
                              {"damping", ctx.solver.damping}}},
              {"kernels", simd::kernels().name},
              {"seed", ctx.seed}};
}

void write_text(const std::string& path, const std::string& text) {
  std::filesystem::path p(path);
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << text;
}

void write_json_file(const std::string& path, const json& j) {
  write_text(path, j.dump(2) + "\n");
}

namespace {

void format_double(std::ostream& os, double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  os << buf;
}

}  // namespace

std::string solution_csv(const Generator& generator,
                         const BsdeSolution& solution,
                         const TradingStrategy& strategy) {
  const Lattice& lat = *generator.lattice;
  std::ostringstream os;
  os << "step,node_id,Y,Z,xi,psi_0l,psi_0b\n";
  for (int m = solution.start_layer; m <= lat.n_steps; ++m) {
    for (std::size_t i = 0; i < solution.y[m].size(); ++i) {
      os << m << ',' << i << ',';
      format_double(os, solution.y[m][i]);
      os << ',';
      format_double(os, m < lat.n_steps ? solution.z[m][i] : 0.0);
      os << ',';
      format_double(os, m < lat.n_steps ? solution.xi[m][i] : 0.0);
      os << ',';
      format_double(os,
                    m < lat.n_steps ? strategy.portfolio.psi_cash_l[m][i] : 0.0);
      os << ',';
      format_double(os,
                    m < lat.n_steps ? strategy.portfolio.psi_cash_b[m][i] : 0.0);
      os << '\n';
    }
  }
  return os.str();
}

std::vector<ScenarioPath> enumerate_paths(const Lattice& lattice,
                                          int max_paths, uint64_t seed) {
  const int n = lattice.n_steps;
  // count paths; fall back to sampling when too many
  double total = 1.0;
  {
    std::vector<double> count(1, 1.0);
    for (int m = 0; m < n; ++m) {
      std::vector<double> next(lattice.layers[m + 1].size(), 0.0);
      for (std::size_t i = 0; i < lattice.layers[m].size(); ++i) {
        const LatticeNode& node = lattice.layers[m][i];
        for (int e = 0; e < node.edge_count; ++e)
          next[lattice.edges[m][node.edge_begin + e].to] += count[i];
      }
      count.swap(next);
      total = 0.0;
      for (double c : count) total += c;
      if (total > 1e9) break;
    }
  }

  std::vector<ScenarioPath> out;
  if (total <= max_paths) {
    ScenarioPath cur;
    cur.node_idx.assign(n + 1, 0);
    std::function<void(int)> rec = [&](int m) {
      if (m == n) {
        ScenarioPath done = cur;
        for (int k = 1; k <= n; ++k) {
          const NodeState st = lattice.layers[k][done.node_idx[k]].state;
          if (is_settlement(st)) {
            done.tau_step = k;
            done.default_kind = st;
            break;
          }
        }
        out.push_back(done);
        return;
      }
      const LatticeNode& node = lattice.layers[m][cur.node_idx[m]];
      for (int e = 0; e < node.edge_count; ++e) {
        cur.node_idx[m + 1] = lattice.edges[m][node.edge_begin + e].to;
        rec(m + 1);
      }
    };
    rec(0);
    return out;
  }

  std::mt19937_64 rng(seed);
  out.reserve(max_paths);
  for (int p = 0; p < max_paths; ++p) {
    ScenarioPath path;
    path.node_idx.assign(n + 1, 0);
    for (int m = 0; m < n; ++m) {
      const LatticeNode& node = lattice.layers[m][path.node_idx[m]];
      double roll = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
      const LatticeEdge* chosen =
          &lattice.edges[m][node.edge_begin + node.edge_count - 1];
      for (int e = 0; e < node.edge_count; ++e) {
        const LatticeEdge& edge = lattice.edges[m][node.edge_begin + e];
        if (roll < edge.p) {
          chosen = &edge;
          break;
        }
        roll -= edge.p;
      }
      path.node_idx[m + 1] = chosen->to;
      const NodeState st = lattice.layers[m + 1][chosen->to].state;
      if (path.tau_step < 0 && is_settlement(st)) {
        path.tau_step = m + 1;
        path.default_kind = st;
      }
    }
    out.push_back(std::move(path));
  }
  return out;
}

std::string wealth_csv(const LatticeMarket& market, const Lattice& lattice,
                       const TradingStrategy& strategy, int max_paths,
                       uint64_t seed) {
  const auto paths = enumerate_paths(lattice, max_paths, seed);
  std::ostringstream os;
  os << "path_id,step,node_id,V_p,V,V_tilde,G,cash_adj,funding_adj\n";
  for (std::size_t p = 0; p < paths.size(); ++p) {
    const PathWealth w = wealth_along_path(market, lattice, strategy, paths[p]);
    for (std::size_t m = 0; m < w.wealth.size(); ++m) {
      const int step = strategy.start_step + static_cast<int>(m);
      os << p << ',' << step << ',' << paths[p].node_idx[step] << ',';
      format_double(os, w.portfolio_value[m]);
      os << ',';
      format_double(os, w.wealth[m]);
      os << ',';
      format_double(os, w.discounted[m]);
      os << ',';
      format_double(os, w.gains[m]);
      os << ',';
      format_double(os, w.cash_adjustment[m]);
      os << ',';
      format_double(os, w.funding_adjustment[m]);
      os << '\n';
    }
  }
  return os.str();
}

}  // namespace finlat
