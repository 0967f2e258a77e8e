#include "mwh/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cinttypes>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <random>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "mwh/analysis.hpp"

namespace mwh {

namespace fs = std::filesystem;

std::vector<int> IntRange::values() const {
  std::vector<int> out;
  for (int x = lo; x <= hi; ++x) out.push_back(x);
  return out;
}

const std::vector<std::string>& certificate_families() {
  static const std::vector<std::string> names{
      "structure",          "paraproduct",          "testing",
      "theorem.well_localized", "theorem.well_localized_truncated", "theorem.band",
      "estimate.upper_triangle", "carleson",        "lemma.block_bound",
      "lemma.truncation_gap", "lemma.nec_gap",      "lemma.test_haar"};
  return names;
}

namespace {

IntRange range_from_json(const json& j, const char* key) {
  IntRange r;
  if (j.is_number_integer()) {
    r.lo = r.hi = j.get<int>();
  } else if (j.is_array() && j.size() == 2) {
    r.lo = j[0].get<int>();
    r.hi = j[1].get<int>();
  } else {
    throw std::invalid_argument(std::string("config: ") + key + " must be an integer or [lo, hi]");
  }
  if (r.lo > r.hi) throw std::invalid_argument(std::string("config: empty range for ") + key);
  return r;
}

void check_config(const ExperimentConfig& c) {
  if (c.seeds.empty()) throw std::invalid_argument("config: seeds must be nonempty");
  if (c.d.lo < 1) throw std::invalid_argument("config: d must be >= 1");
  if (c.depth.lo < 1) throw std::invalid_argument("config: depth must be >= 1");
  if (c.branching.lo < 1) throw std::invalid_argument("config: branching must be >= 1");
  if (c.r.lo < 0) throw std::invalid_argument("config: r must be >= 0");
  for (const IntRange* r : {&c.d, &c.depth, &c.branching, &c.r})
    if (r->lo > r->hi) throw std::invalid_argument("config: empty range");
  if (!(c.condition_cap >= 1.0)) throw std::invalid_argument("config: condition_cap must be >= 1");
  if (c.operators.empty()) throw std::invalid_argument("config: operators must be nonempty");
  for (const auto& o : c.operators)
    if (o != "haar" && o != "generalized") throw std::invalid_argument("config: unknown operator " + o);
  const auto& fam = certificate_families();
  for (const auto& v : c.variants)
    if (std::find(fam.begin(), fam.end(), v) == fam.end())
      throw std::invalid_argument("config: unknown certificate family " + v);
}

std::uint64_t mix(std::uint64_t h, std::uint64_t x) { return splitmix64(h ^ splitmix64(x)); }

std::string format_double(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

// A residual measured against a scale, as a certificate lhs ≤ 0.
Certificate residual_certificate(std::string name, double residual, double scale, std::string detail) {
  const double rel = scale > 0 ? residual / scale : residual;
  return make_certificate(std::move(name), rel, 0.0, std::move(detail));
}

}  // namespace

ExperimentConfig config_from_json(const json& j) {
  ExperimentConfig c;
  if (j.contains("seeds")) c.seeds = j["seeds"].get<std::vector<std::uint64_t>>();
  if (j.contains("d")) c.d = range_from_json(j["d"], "d");
  if (j.contains("depth")) c.depth = range_from_json(j["depth"], "depth");
  if (j.contains("branching")) c.branching = range_from_json(j["branching"], "branching");
  if (j.contains("r")) c.r = range_from_json(j["r"], "r");
  c.condition_cap = j.value("condition_cap", c.condition_cap);
  c.zero_mass_prob = j.value("zero_mass_prob", c.zero_mass_prob);
  c.rank_deficient_prob = j.value("rank_deficient_prob", c.rank_deficient_prob);
  if (j.contains("operators")) c.operators = j["operators"].get<std::vector<std::string>>();
  if (j.contains("variants")) c.variants = j["variants"].get<std::vector<std::string>>();
  c.output = j.value("output", c.output);
  c.corrupt_normalization = j.value("corrupt_normalization", false);
  check_config(c);
  return c;
}

json config_to_json(const ExperimentConfig& c) {
  json j;
  j["seeds"] = c.seeds;
  j["d"] = {c.d.lo, c.d.hi};
  j["depth"] = {c.depth.lo, c.depth.hi};
  j["branching"] = {c.branching.lo, c.branching.hi};
  j["r"] = {c.r.lo, c.r.hi};
  j["condition_cap"] = c.condition_cap;
  j["zero_mass_prob"] = c.zero_mass_prob;
  j["rank_deficient_prob"] = c.rank_deficient_prob;
  j["operators"] = c.operators;
  j["variants"] = c.variants;
  j["output"] = c.output;
  if (c.corrupt_normalization) j["corrupt_normalization"] = true;
  return j;
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::string InstanceParams::tag() const {
  std::ostringstream s;
  s << "s" << seed << "_d" << d << "_depth" << depth << "_b" << branching << "_r" << r << "_" << op;
  return s.str();
}

json InstanceParams::to_json() const {
  return {{"seed", seed}, {"d", d}, {"depth", depth}, {"branching", branching},
          {"r", r},       {"operator", op}, {"instance_seed", instance_seed}};
}

std::vector<InstanceParams> expand(const ExperimentConfig& c) {
  std::vector<InstanceParams> out;
  for (auto seed : c.seeds)
    for (int d : c.d.values())
      for (int depth : c.depth.values())
        for (int b : c.branching.values())
          for (int r : c.r.values()) {
            if (r >= depth) continue;
            for (std::size_t o = 0; o < c.operators.size(); ++o) {
              InstanceParams p{seed, d, depth, b, r, c.operators[o], 0};
              std::uint64_t h = splitmix64(seed);
              for (std::uint64_t x : {std::uint64_t(d), std::uint64_t(depth), std::uint64_t(b),
                                      std::uint64_t(r), std::uint64_t(c.operators[o] == "haar" ? 1 : 2)})
                h = mix(h, x);
              p.instance_seed = h;
              out.push_back(std::move(p));
            }
          }
  return out;
}

Instance make_instance(const InstanceParams& p, const ExperimentConfig& c) {
  const std::uint64_t s = p.instance_seed;
  std::mt19937_64 rng(splitmix64(s + 1));
  std::uniform_real_distribution<double> u(0.25, 1.0);
  const std::size_t leaves = count_leaves(p.depth, Branching::uniform(p.branching));
  std::vector<double> sigma(leaves);
  double total = 0;
  for (auto& x : sigma) total += (x = u(rng));
  for (auto& x : sigma) x /= total;
  Filtration f = Filtration::build(p.depth, Branching::uniform(p.branching), sigma);

  RandomMeasureOptions opts;
  opts.zero_mass_prob = c.zero_mass_prob;
  opts.rank_deficient_prob = c.rank_deficient_prob;
  auto w = random_measure(splitmix64(s + 2), f, p.d, c.condition_cap, opts);
  auto v = random_measure(splitmix64(s + 3), f, p.d, c.condition_cap, opts);

  std::uniform_int_distribution<int> pick(0, p.r);
  const int n = pick(rng);
  ShiftOperator<double> t = p.op == "haar" ? make_haar_shift(splitmix64(s + 4), f, p.r, n)
                                           : make_generalized_shift(splitmix64(s + 4), f, p.r, n);
  if (c.corrupt_normalization)
    for (auto& b : t.blocks()) b.grid *= 8.0;
  return Instance{p, std::move(f), std::move(w), std::move(v), std::move(t)};
}

void write_instance(const Instance& inst, const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw std::runtime_error("cannot create " + dir + ": " + ec.message());
  json tree = tree_to_json(inst.f, inst.params.instance_seed);
  tree["params"] = inst.params.to_json();
  write_json_file(dir + "/tree.json", tree);
  write_json_file(dir + "/measures.json", {{"W", measure_to_json(inst.w)}, {"V", measure_to_json(inst.v)}});
  write_json_file(dir + "/operator.json", operator_to_json(inst.f, inst.t));
}

Instance read_instance(const std::string& dir) {
  const json tree = read_json_file(dir + "/tree.json");
  const json ms = read_json_file(dir + "/measures.json");
  Filtration f = tree_from_json(tree);
  InstanceParams p;
  if (tree.contains("params")) {
    const json& pj = tree["params"];
    p.seed = pj.value("seed", std::uint64_t(0));
    p.d = pj.value("d", 1);
    p.depth = pj.value("depth", f.depth());
    p.branching = pj.value("branching", 0);
    p.r = pj.value("r", 0);
    p.op = pj.value("operator", std::string("haar"));
    p.instance_seed = pj.value("instance_seed", std::uint64_t(0));
  }
  auto w = measure_from_json(f, ms.at("W"));
  auto v = measure_from_json(f, ms.at("V"));
  auto t = operator_from_json(f, read_json_file(dir + "/operator.json"));
  return Instance{p, std::move(f), std::move(w), std::move(v), std::move(t)};
}

std::vector<Certificate> run_certificates(const Instance& inst, const std::vector<std::string>& families) {
  auto on = [&](const char* name) {
    return std::find(families.begin(), families.end(), name) != families.end();
  };
  std::vector<Certificate> out;
  if (families.empty()) return out;
  const Filtration& f = inst.f;
  const int d = inst.params.d;
  const int r = inst.t.complexity();
  auto add = [&](std::vector<Certificate> cs) {
    for (auto& c : collapse_by_name(cs)) out.push_back(std::move(c));
  };

  if (on("structure")) {
    const auto wl = check_well_localized(f, inst.t, inst.w, inst.v, r);
    std::string detail = "pairs=" + std::to_string(wl.pairs_checked);
    if (wl.witness)
      detail += " q=" + atom_label(f, wl.witness->q) + " R=" + atom_label(f, wl.witness->r) +
                " clause=" + std::to_string(wl.witness->clause) + (wl.witness->dual ? " dual" : "");
    out.push_back(residual_certificate("structure.well_localized", wl.max_residual, wl.scale, detail));
    out.push_back(make_certificate("structure.normalization", normalization_ratio(f, inst.t), 1.0));
  }

  WeightedOperator<double> op(f, inst.t, inst.w, inst.v);
  const WeightedOperator<double> dual = op.dual();
  const double norm = op.norm();
  const double a2 = a2_characteristic(f, inst.v, inst.w).value;

  if (on("paraproduct")) {
    const Mat<double> pi = assemble_paraproduct(op);
    const auto rep = check_replacement(op, pi);
    const double worst = *std::max_element(rep.max_residual.begin(), rep.max_residual.end());
    std::string detail;
    for (int k = 0; k < 3; ++k)
      detail += (k ? " " : "") + std::string("clause") + std::to_string(k + 1) + "=" +
                format_double(rep.max_residual[static_cast<std::size_t>(k)]);
    out.push_back(residual_certificate("paraproduct.replacement", worst, rep.scale, detail));
    const auto inv = check_t_para_invariance(op);
    out.push_back(residual_certificate("paraproduct.invariance", inv.max_residual, inv.scale,
                                       "triples=" + std::to_string(inv.triples)));
    // Entrywise in the weighted representation D^{1/2} Π D^{+1/2}: raw entries
    // along null directions of a degenerate leaf mass are not determined.
    const Mat<double> pi2 = assemble_paraproduct(op, ParaproductPath::kRootColumn);
    const Mat<double> diff = op.out_sqrt() * (pi - pi2) * op.in_pinv_sqrt();
    out.push_back(paraproduct_norm_bound(op, pi));
    out.push_back(paraproduct_norm_bound(dual, assemble_paraproduct(dual), "paraproduct.norm_bound_dual"));
    out.push_back(residual_certificate("paraproduct.two_path", diff.cwiseAbs().maxCoeff(),
                                       std::max(1.0, norm), ""));
  }

  const bool need_wl = on("testing") || on("theorem.well_localized");
  const bool need_tr = on("testing") || on("theorem.well_localized_truncated") || on("estimate.upper_triangle");
  const bool need_band = on("theorem.band") || on("lemma.test_haar") || on("lemma.nec_gap");
  TestingConstants wl, tr, band;
  if (need_wl) wl = testing_constants(op, dual, TestingVariant::kWellLocalized);
  if (need_tr) tr = testing_constants(op, dual, TestingVariant::kTruncated);
  if (need_band) band = testing_constants(op, dual, TestingVariant::kBand);

  if (on("testing")) {
    add(testing_le_norm(wl, norm));
    add(testing_le_norm(tr, norm));
  }
  if (on("theorem.well_localized")) out.push_back(theorem_bound_well_localized(wl, norm, r, d));
  if (on("theorem.well_localized_truncated")) out.push_back(theorem_bound_well_localized(tr, norm, r, d));
  if (on("theorem.band"))
    out.push_back(theorem_bound_band(band.frak.value, band.frak_dual.value, a2, r, d, norm));
  if (on("estimate.upper_triangle")) out.push_back(estimate_upper_triangle(op, tr.t2.value));
  if (on("carleson")) {
    const auto seq = random_carleson_sequence(splitmix64(inst.params.instance_seed + 5), f, inst.w);
    add(carleson_certificates(carleson_constants(f, inst.w, seq), d));
  }
  if (on("lemma.block_bound")) add(lemma_block_bound(op, a2));
  if (on("lemma.truncation_gap")) add(lemma_truncation_gap(op, a2));
  if (on("lemma.nec_gap")) {
    const double kappa = filtration_kappa(f);
    add(lemma_nec_gap(op, a2, kappa));
    out.push_back(corollary_nec("corollary.nec", band.frak.value, norm, a2, kappa, d));
    out.push_back(corollary_nec("corollary.nec_dual", band.frak_dual.value, norm, a2, kappa, d));
  }
  if (on("lemma.test_haar")) add(lemma_test_haar(op, band.frak.value, a2));
  return out;
}

bool glob_match(const std::string& pattern, const std::string& name) {
  // Iterative matcher with single-star backtracking.
  std::size_t p = 0, n = 0, star = std::string::npos, mark = 0;
  while (n < name.size()) {
    if (p < pattern.size() && (pattern[p] == '?' || pattern[p] == name[n])) {
      ++p;
      ++n;
    } else if (p < pattern.size() && pattern[p] == '*') {
      star = p++;
      mark = n;
    } else if (star != std::string::npos) {
      p = star + 1;
      n = ++mark;
    } else {
      return false;
    }
  }
  while (p < pattern.size() && pattern[p] == '*') ++p;
  return p == pattern.size();
}

unsigned worker_count() {
  if (const char* env = std::getenv("MWH_WORKERS")) {
    const long n = std::strtol(env, nullptr, 10);
    if (n > 0) return static_cast<unsigned>(n);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

void parallel_for(std::size_t n, unsigned workers, const std::function<void(std::size_t)>& fn) {
  workers = std::max(1u, std::min<unsigned>(workers, static_cast<unsigned>(std::max<std::size_t>(n, 1))));
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  for (unsigned k = 0; k < workers; ++k)
    pool.emplace_back([&] {
      for (std::size_t i; (i = next.fetch_add(1)) < n;) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!error) error = std::current_exception();
        }
      }
    });
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

VerifyResult verify(const ExperimentConfig& c, const std::string& filter, unsigned workers) {
  const auto tuples = expand(c);
  std::vector<std::vector<Record>> per(tuples.size());
  parallel_for(tuples.size(), workers ? workers : worker_count(), [&](std::size_t i) {
    if (c.variants.empty()) return;
    const Instance inst = make_instance(tuples[i], c);
    for (auto& cert : run_certificates(inst, c.variants))
      if (glob_match(filter, cert.name)) per[i].push_back(Record{tuples[i], std::move(cert)});
  });
  VerifyResult res;
  res.instances = tuples.size();
  for (auto& v : per)
    for (auto& rec : v) {
      if (rec.cert.applicable && !rec.cert.pass) ++res.failures;
      res.records.push_back(std::move(rec));
    }
  return res;
}

json record_to_json(const Record& r) {
  return {{"name", r.cert.name},     {"lhs", r.cert.lhs},   {"rhs", r.cert.rhs},
          {"slack", r.cert.slack},   {"pass", r.cert.pass}, {"applicable", r.cert.applicable},
          {"detail", r.cert.detail}, {"params", r.params.to_json()}};
}

Record record_from_json(const json& j) {
  Record r;
  r.cert.name = j.at("name").get<std::string>();
  r.cert.lhs = j.at("lhs").get<double>();
  r.cert.rhs = j.at("rhs").get<double>();
  r.cert.slack = j.at("slack").get<double>();
  r.cert.pass = j.at("pass").get<bool>();
  r.cert.applicable = j.value("applicable", true);
  r.cert.detail = j.value("detail", std::string());
  const json& p = j.at("params");
  r.params.seed = p.at("seed").get<std::uint64_t>();
  r.params.d = p.at("d").get<int>();
  r.params.depth = p.at("depth").get<int>();
  r.params.branching = p.at("branching").get<int>();
  r.params.r = p.at("r").get<int>();
  r.params.op = p.at("operator").get<std::string>();
  r.params.instance_seed = p.value("instance_seed", std::uint64_t(0));
  return r;
}

std::string csv_header() { return "name,seed,d,depth,branching,r,operator,lhs,rhs,slack,pass,applicable"; }

std::string csv_row(const Record& r) {
  std::ostringstream s;
  s << r.cert.name << ',' << r.params.seed << ',' << r.params.d << ',' << r.params.depth << ','
    << r.params.branching << ',' << r.params.r << ',' << r.params.op << ',' << format_double(r.cert.lhs)
    << ',' << format_double(r.cert.rhs) << ',' << format_double(r.cert.slack) << ','
    << (r.cert.pass ? 1 : 0) << ',' << (r.cert.applicable ? 1 : 0);
  return s.str();
}

void write_results(const std::vector<Record>& records, const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw std::runtime_error("cannot create " + dir + ": " + ec.message());
  std::ofstream jl(dir + "/certificates.jsonl");
  std::ofstream csv(dir + "/summary.csv");
  if (!jl || !csv) throw std::runtime_error("cannot write results under " + dir);
  csv << csv_header() << '\n';
  for (const auto& r : records) {
    jl << record_to_json(r).dump() << '\n';
    csv << csv_row(r) << '\n';
  }
}

std::vector<Record> read_records(const std::string& jsonl_path) {
  std::ifstream in(jsonl_path);
  if (!in) throw std::runtime_error("missing results: " + jsonl_path);
  std::vector<Record> out;
  std::string line;
  while (std::getline(in, line))
    if (!line.empty()) out.push_back(record_from_json(json::parse(line)));
  return out;
}

std::vector<NameSummary> summarize(const std::vector<Record>& records) {
  std::map<std::string, NameSummary> by;
  for (const auto& r : records) {
    auto& s = by[r.cert.name];
    const bool first = s.count == s.inapplicable;
    s.name = r.cert.name;
    ++s.count;
    if (!r.cert.applicable) {
      ++s.inapplicable;
      continue;
    }
    if (!r.cert.pass) ++s.failed;
    if (first || r.cert.slack < s.min_slack) {
      s.min_slack = r.cert.slack;
      s.worst = r.params.tag();
    }
  }
  std::vector<NameSummary> out;
  for (auto& [_, s] : by) out.push_back(std::move(s));
  std::stable_sort(out.begin(), out.end(), [](const NameSummary& a, const NameSummary& b) {
    return (a.failed > 0) > (b.failed > 0);
  });
  return out;
}

std::string slack_histogram_csv(const std::vector<Record>& records, int bins) {
  std::map<std::string, std::vector<double>> vals;
  for (const auto& r : records)
    if (r.cert.applicable) vals[r.cert.name].push_back(r.cert.slack / std::max(1.0, std::abs(r.cert.rhs)));
  std::ostringstream s;
  s << "name,bin_lo,bin_hi,count\n";
  for (const auto& [name, v] : vals) {
    const double lo = *std::min_element(v.begin(), v.end());
    const double hi = *std::max_element(v.begin(), v.end());
    const double width = hi > lo ? (hi - lo) / bins : 1.0;
    std::vector<std::size_t> counts(static_cast<std::size_t>(bins), 0);
    for (double x : v) {
      auto k = static_cast<std::size_t>(hi > lo ? (x - lo) / width : 0);
      ++counts[std::min(k, counts.size() - 1)];
    }
    for (int k = 0; k < bins; ++k)
      s << name << ',' << format_double(lo + k * width) << ',' << format_double(lo + (k + 1) * width) << ','
        << counts[static_cast<std::size_t>(k)] << '\n';
  }
  return s.str();
}

}  // namespace mwh
