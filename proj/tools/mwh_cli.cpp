// mwh_cli: generate instances, run certificate sweeps, summarize results.
//
//   mwh_cli gen    --config cfg.json [--seed N] [--out DIR]
//   mwh_cli verify --config cfg.json [--seed N] [--out DIR] [--filter GLOB]
//   mwh_cli report RESULTS.jsonl [--histogram FILE] [--filter GLOB]
//
// Worker threads: MWH_WORKERS (default: hardware concurrency).

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>

#include <CLI11.hpp>

#include "mwh/harness.hpp"

namespace {

mwh::ExperimentConfig load_config(const std::string& path, std::optional<std::uint64_t> seed,
                                  const std::string& out) {
  auto c = mwh::config_from_json(mwh::read_json_file(path));
  if (seed) c.seeds = {*seed};
  if (!out.empty()) c.output = out;
  return c;
}

int cmd_gen(const mwh::ExperimentConfig& c) {
  std::size_t n = 0;
  for (const auto& p : mwh::expand(c)) {
    mwh::write_instance(mwh::make_instance(p, c), c.output + "/instances/" + p.tag());
    ++n;
  }
  std::cout << "wrote " << n << " instances under " << c.output << "/instances\n";
  return 0;
}

int cmd_verify(const mwh::ExperimentConfig& c, const std::string& filter) {
  const auto res = mwh::verify(c, filter);
  mwh::write_results(res.records, c.output);
  std::cout << res.instances << " instances, " << res.records.size() << " certificates, "
            << res.failures << " failed\n";
  if (res.failures == 0) return 0;

  const mwh::Record* first = nullptr;
  for (const auto& r : res.records)
    if (r.cert.applicable && !r.cert.pass) {
      first = &r;
      break;
    }
  const std::string dir = c.output + "/witness";
  mwh::write_instance(mwh::make_instance(first->params, c), dir);
  mwh::write_json_file(dir + "/certificate.json", mwh::record_to_json(*first));
  std::cerr << "FAIL " << first->cert.name << " on " << first->params.tag() << ": lhs "
            << first->cert.lhs << " > rhs " << first->cert.rhs << " (" << first->cert.detail
            << ")\nwitness written to " << dir << "\n";
  return 1;
}

int cmd_report(const std::string& path, const std::string& filter, const std::string& histogram) {
  std::vector<mwh::Record> records;
  for (auto& r : mwh::read_records(path))
    if (mwh::glob_match(filter, r.cert.name)) records.push_back(std::move(r));
  const auto rows = mwh::summarize(records);
  std::printf("%-40s %8s %8s %8s %14s  %s\n", "certificate", "count", "failed", "n/a", "min slack",
              "worst instance");
  for (const auto& s : rows)
    std::printf("%-40s %8zu %8zu %8zu %14.6g  %s\n", s.name.c_str(), s.count, s.failed, s.inapplicable,
                s.min_slack, s.worst.c_str());
  if (!histogram.empty()) {
    std::ofstream out(histogram);
    if (!out) throw std::runtime_error("cannot write " + histogram);
    out << mwh::slack_histogram_csv(records);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Matrix-weighted dyadic shift certificates"};
  app.require_subcommand(1);

  std::string config, out, filter = "*", results, histogram;
  std::optional<std::uint64_t> seed;

  auto* gen = app.add_subcommand("gen", "write tree, measures and operator JSON per instance");
  gen->add_option("--config", config, "experiment config (JSON)")->required()->check(CLI::ExistingFile);
  gen->add_option("--seed", seed, "replace the config's seed list by one seed");
  gen->add_option("--out", out, "output directory (overrides the config)");

  auto* ver = app.add_subcommand("verify", "run the certificate suite; exit 1 on any failure");
  ver->add_option("--config", config, "experiment config (JSON)")->required()->check(CLI::ExistingFile);
  ver->add_option("--seed", seed, "replace the config's seed list by one seed");
  ver->add_option("--out", out, "output directory (overrides the config)");
  ver->add_option("--filter", filter, "certificate name glob");

  auto* rep = app.add_subcommand("report", "summarize a certificates.jsonl file");
  rep->add_option("results", results, "certificates.jsonl")->required();
  rep->add_option("--filter", filter, "certificate name glob");
  rep->add_option("--histogram", histogram, "write slack histogram CSV here");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen) return cmd_gen(load_config(config, seed, out));
    if (*ver) return cmd_verify(load_config(config, seed, out), filter);
    if (*rep) return cmd_report(results, filter, histogram);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
