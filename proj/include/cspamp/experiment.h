#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "cspamp/analysis.h"
#include "cspamp/engine.h"
#include "cspamp/parisi.h"

namespace cspamp {

const char* version();

// Exit codes of the command-line tool.
enum ExitCode : int {
  kExitOk = 0,
  kExitFailure = 1,
  kExitBadConfig = 2,
  kExitPredicateRejected = 3,
  kExitParisiNotConverged = 4,
  kExitEngineNaN = 5,
};

class ExitError : public std::runtime_error {
 public:
  ExitError(int code, const std::string& what) : std::runtime_error(what), code(code) {}
  int code;
};

struct ExperimentConfig {
  std::string predicate = "maxcut2";
  std::uint32_t n = 1u << 15;
  int d = 256;
  int r = 0;  // 0: taken from the predicate
  double delta = 0.05;
  int pieces = 3;
  double eta = 0.05;
  std::uint64_t instance_seed = 1;
  std::uint64_t engine_seed = 2;
  std::uint64_t rounding_seed = 3;
  std::uint64_t sde_seed = 4;
  std::size_t sde_paths = 100000;
  std::string cache_dir;  // empty: no cache
  std::string out_dir = ".";
  std::string tag = "run";
  unsigned threads = 0;
};

// Fills r from the predicate and checks ranges; throws ExitError(kExitBadConfig).
void validate(ExperimentConfig& cfg);
nlohmann::json to_json(const ExperimentConfig& cfg);

// Minimizer settings used for a predicate's mixture at a given delta.
MinimizeOptions parisi_options(const MixturePolynomial& xi, int pieces, double eta, double delta);
// Loads from the cache directory when given, else solves in memory.
ParisiSolution obtain_parisi(const MixturePolynomial& xi, int pieces, double eta, double delta,
                             const std::string& cache_dir, bool* from_cache = nullptr);

nlohmann::json result_json(const RunResult& res, const nlohmann::json& config, double alg_estimate);

void write_history(const std::filesystem::path& path, const RunHistory& h);
RunHistory read_history(const std::filesystem::path& path);

nlohmann::json moment_report_json(const MomentReport& rep);

struct PipelineOutcome {
  double fraction = 0.0;
  double alg_estimate = 0.0;
  double mean_f = 0.0;
  std::string csv_row;
  std::filesystem::path result_path, diag_path;
};

std::string csv_header();

// predicate check -> Parisi solution -> instance -> run -> result, diagnostics
// and one CSV line. Throws ExitError with the matching code.
PipelineOutcome run_pipeline(const ExperimentConfig& cfg, std::ostream& log);

// Printed by --dry-run.
std::string describe_plan(const ExperimentConfig& cfg);

enum class SweepAxis { kDegree, kDelta, kSize };
SweepAxis parse_axis(const std::string& name);

struct SweepOutcome {
  std::string csv;
  int failures = 0;
};

// One pipeline per value; row seeds derived from the base seeds and the value.
SweepOutcome run_sweep(const ExperimentConfig& base, SweepAxis axis, const std::vector<double>& values,
                       std::ostream& log);

}  // namespace cspamp
