#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "mwh/certificate.hpp"
#include "mwh/io.hpp"

namespace mwh {

/// Inclusive integer range [lo, hi].
struct IntRange {
  int lo = 0;
  int hi = 0;
  std::vector<int> values() const;
};

/// Certificate families selectable in ExperimentConfig::variants.
const std::vector<std::string>& certificate_families();

struct ExperimentConfig {
  std::vector<std::uint64_t> seeds;
  IntRange d{1, 2};
  IntRange depth{1, 3};
  IntRange branching{2, 3};
  IntRange r{0, 2};
  double condition_cap = 50.0;
  double zero_mass_prob = 0.1;
  double rank_deficient_prob = 0.2;
  std::vector<std::string> operators{"haar", "generalized"};
  std::vector<std::string> variants = certificate_families();
  std::string output = "results";
  // Sabotage switch for testing the exit-code contract: kernels are scaled
  // up after normalization while the big-Haar flag stays set.
  bool corrupt_normalization = false;
};

/// Missing keys keep their defaults; throws std::invalid_argument on empty
/// ranges, unknown operators or unknown families.
ExperimentConfig config_from_json(const json& j);
json config_to_json(const ExperimentConfig& c);

struct InstanceParams {
  std::uint64_t seed = 0;
  int d = 1;
  int depth = 1;
  int branching = 2;
  int r = 0;
  std::string op = "haar";
  std::uint64_t instance_seed = 0;  // derived from all of the above

  std::string tag() const;
  json to_json() const;
};

std::uint64_t splitmix64(std::uint64_t x);

/// Every (seed, d, depth, branching, r, operator) tuple with r ≤ depth, in a
/// fixed order.
std::vector<InstanceParams> expand(const ExperimentConfig& c);

struct Instance {
  InstanceParams params;
  Filtration f;
  MatrixMeasure<double> w;
  MatrixMeasure<double> v;
  ShiftOperator<double> t;
};

Instance make_instance(const InstanceParams& p, const ExperimentConfig& c);

/// Writes tree.json, measures.json and operator.json into `dir` (created if needed).
void write_instance(const Instance& inst, const std::string& dir);
Instance read_instance(const std::string& dir);

struct Record {
  InstanceParams params;
  Certificate cert;
};

/// All certificates of the selected families on one instance, per-cube
/// families collapsed to their worst cube.
std::vector<Certificate> run_certificates(const Instance& inst, const std::vector<std::string>& families);

/// Glob match with '*' and '?'.
bool glob_match(const std::string& pattern, const std::string& name);

/// Worker count from MWH_WORKERS, else hardware concurrency (at least 1).
unsigned worker_count();

/// Runs fn(i) for i in [0, n) on `workers` threads.
void parallel_for(std::size_t n, unsigned workers, const std::function<void(std::size_t)>& fn);

struct VerifyResult {
  std::vector<Record> records;
  std::size_t instances = 0;
  std::size_t failures = 0;
};

/// Runs every tuple of the config, keeping records in tuple order so the
/// output does not depend on scheduling. Names not matching `filter` are dropped.
VerifyResult verify(const ExperimentConfig& c, const std::string& filter = "*", unsigned workers = 0);

json record_to_json(const Record& r);
Record record_from_json(const json& j);
std::string csv_header();
std::string csv_row(const Record& r);

/// certificates.jsonl and summary.csv under `dir`.
void write_results(const std::vector<Record>& records, const std::string& dir);
std::vector<Record> read_records(const std::string& jsonl_path);

/// Per-name aggregate of a results file.
struct NameSummary {
  std::string name;
  std::size_t count = 0;
  std::size_t failed = 0;
  std::size_t inapplicable = 0;
  double min_slack = 0;  // over applicable records
  std::string worst;     // tag of the instance with min slack
};

/// Failing names first, then by name.
std::vector<NameSummary> summarize(const std::vector<Record>& records);

/// Histogram of slack / max(1, |rhs|) per name: name,bin_lo,bin_hi,count.
std::string slack_histogram_csv(const std::vector<Record>& records, int bins = 20);

}  // namespace mwh
