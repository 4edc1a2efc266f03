#pragma once
// Machine-readable artifacts: JSON reports with provenance, CSV exports of
// solver solutions and wealth paths.

#include <json.hpp>

#include "finlat/config.hpp"

namespace finlat {

struct ReportContext {
  uint64_t config_hash = 0;
  SolverParams solver;
  uint64_t seed = 0;
};

nlohmann::ordered_json report_header(const ReportContext& ctx);

void write_text(const std::string& path, const std::string& text);
void write_json_file(const std::string& path, const nlohmann::ordered_json& j);

// (step, node_id, Y, Z, xi, psi_0l, psi_0b)
std::string solution_csv(const Generator& generator,
                         const BsdeSolution& solution,
                         const TradingStrategy& strategy);

// (path_id, step, node_id, V_p, V, V_tilde, G, cash_adj, funding_adj)
std::string wealth_csv(const LatticeMarket& market, const Lattice& lattice,
                       const TradingStrategy& strategy, int max_paths,
                       uint64_t seed);

// enumerate (or sample) scenario paths through a lattice
std::vector<ScenarioPath> enumerate_paths(const Lattice& lattice,
                                          int max_paths, uint64_t seed);

}  // namespace finlat
