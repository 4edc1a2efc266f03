#pragma once
// Run configuration: market, contract, solver and task sections parsed from
// a JSON config file. Parsing round-trips bit-identically through
// serialisation.

#include <cstdint>
#include <string>

#include <json.hpp>

#include "finlat/arbitrage.hpp"

namespace finlat {

struct ConfigSyntaxError : std::runtime_error {
  explicit ConfigSyntaxError(const std::string& what)
      : std::runtime_error(what) {}
};
struct ConfigSemanticError : std::runtime_error {
  explicit ConfigSemanticError(const std::string& what)
      : std::runtime_error(what) {}
};

struct PayoffConfig {
  std::string kind = "constant";  // constant|spot|forward|call|put|straddle|
                                  // put_price|det_spot
  double strike = 0.0;
  double coeff = 1.0;
  int asset = 0;
  int maturity_step = -1;
};

struct FlowConfig {
  int step = 0;
  PayoffConfig payoff;
};

struct CollateralConfig {
  bool present = false;
  std::string rule = "exogenous";  // exogenous | gained_value_fraction
  PayoffConfig value;              // exogenous shape C_t = payoff(S_t)
  double fraction = 0.0;
  bool drop_at_maturity = true;    // jump to zero at T
  std::string convention = "rehypothecated";  // or "segregated"
  double rate_received = 0.0;      // flat remuneration of C^+
  double rate_posted = 0.0;        // flat remuneration of C^-
};

struct DefaultConfig {
  bool present = false;
  double hazard_counterparty = 0.0;
  double hazard_hedger = 0.0;
  double hazard_both = 0.0;
  double recovery_counterparty = 1.0;
  double recovery_hedger = 1.0;
  std::string closeout = "clean";  // clean | exogenous
  PayoffConfig closeout_value;
};

struct AdjustmentConfig {
  std::string kind = "exogenous";  // exogenous | global_demo
  std::string name = "adjustment";
  double alpha = 1.0;
  double rate = 0.0;  // flat remuneration rate
  PayoffConfig value;
};

struct ContractConfig {
  std::vector<FlowConfig> flows;
  std::string convention = "repo_symmetric";
  double haircut = 0.0;
  CollateralConfig collateral;
  DefaultConfig defaults;
  std::vector<AdjustmentConfig> adjustments;
};

struct MarketConfig {
  double horizon = 1.0;
  int steps = 100;
  std::vector<std::pair<double, double>> rate_lend{{0.0, 0.0}};
  std::vector<std::pair<double, double>> rate_borrow{{0.0, 0.0}};
  std::vector<std::pair<double, double>> rate_funding{{0.0, 0.0}};
  double spot = 100.0;
  double sigma = 0.2;
  double up = 0.0, down = 0.0;
  double prob_up = 0.5;
  std::vector<std::pair<int, double>> dividends_absolute;
  double dividends_proportional = 0.0;
  std::string funding_mode = "repo_symmetric";  // or "cash"
  struct DetAsset {
    double strike = 100.0;
    int gate_step = 0;
    double factor = 1.0;
    bool gated = false;
  };
  std::vector<DetAsset> deterministic_assets;
};

struct MirrorConfig {
  std::string mode = "signflip";
  double rate_shift = 0.0;
};

struct TaskConfig {
  std::string operation = "price";
  double endowment = 0.0;
  double endowment_clean = 0.0;  // x1 for the ccr split
  double endowment_ccr = 0.0;    // x2
  std::string ccr_split = "adjustments_on_clean";
  int t = 0;
  std::string out_dir = ".";
  uint64_t seed = 42;
  double grid_lo = -2.0, grid_hi = 2.0, grid_step = 0.01;
  bool allow_borrowing = true;
  int comparison_pairs = 100;
  int desk_pairs = 100;
  MirrorConfig mirror;
  AppendixModelParams appendix;
};

struct RunConfig {
  MarketConfig market;
  ContractConfig contract;
  SolverParams solver;
  TaskConfig task;
};

RunConfig parse_config(const std::string& path);
RunConfig parse_config_text(const std::string& text, const std::string& name);
nlohmann::ordered_json config_to_json(const RunConfig& config);
RunConfig config_from_json(const nlohmann::ordered_json& j,
                           const std::string& name);

// FNV-1a over the canonical serialisation
uint64_t config_hash(const RunConfig& config);

// materialise the market and the (compiled) contract
LatticeMarketParams build_market_params(const MarketConfig& config);
Contract build_contract(const ContractConfig& config,
                        const LatticeMarket& market);
PayoffSpec build_payoff(const PayoffConfig& config);
std::vector<Adjustment> build_mirror(const MirrorConfig& config,
                                     const Contract& contract);

}  // namespace finlat
