// Acceptance run: one PASS/FAIL line per criterion, exit status 0 iff all pass.
//
// Criteria 3-8 share one certificate sweep over the full grid (10 seeds,
// d 1..3, depth 1..4, branching 2..3, r 0..2, both operator families).
// MWH_WORKERS sets its thread count.

#include <algorithm>
#include <chrono>
#include <cstdarg>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "mwh/analysis.hpp"
#include "mwh/harness.hpp"
#include "oracle.hpp"

using namespace mwh;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

int failures = 0;

void report(int id, const std::string& title, bool ok, const std::string& detail) {
  std::printf("%s  %2d  %-28s %s\n", ok ? "PASS" : "FAIL", id, title.c_str(), detail.c_str());
  std::fflush(stdout);
  if (!ok) ++failures;
}

std::string fmt(const char* f, ...) __attribute__((format(printf, 1, 2)));
std::string fmt(const char* f, ...) {
  char buf[512];
  va_list ap;
  va_start(ap, f);
  std::vsnprintf(buf, sizeof buf, f, ap);
  va_end(ap);
  return buf;
}

Eigen::VectorXd random_vector(std::mt19937_64& rng, Eigen::Index n) {
  std::normal_distribution<double> normal;
  Eigen::VectorXd x(n);
  for (Eigen::Index i = 0; i < n; ++i) x(i) = normal(rng);
  return x;
}

struct MeasureCase {
  Filtration f;
  MatrixMeasure<double> w;
};

// Seeds x d x depth x branching, with zero and rank-deficient leaf masses.
std::vector<MeasureCase> measure_sweep() {
  std::vector<MeasureCase> out;
  for (std::uint64_t seed = 1; seed <= 9; ++seed)
    for (int d = 1; d <= 3; ++d)
      for (int depth = 1; depth <= 4; ++depth)
        for (int b = 2; b <= 3; ++b) {
          const std::uint64_t s = splitmix64(seed * 1000 + d * 100 + depth * 10 + b);
          std::mt19937_64 rng(s);
          std::uniform_real_distribution<double> u(0.25, 1.0);
          std::vector<double> sigma(count_leaves(depth, Branching::uniform(b)));
          for (double& x : sigma) x = u(rng);
          Filtration f = Filtration::build(depth, Branching::uniform(b), sigma);
          RandomMeasureOptions opts;
          opts.zero_mass_prob = 0.15;
          opts.rank_deficient_prob = 0.3;
          auto w = random_measure(s + 1, f, d, 50.0, opts);
          out.push_back({std::move(f), std::move(w)});
        }
  return out;
}

// 1. Idempotence, mutual annihilation and L²(W) self-adjointness of E^W_Q and
// Δ^W_Q on each atom, measured as D^{1/2} X D^{+1/2}; orthogonality of the
// ranges of E^W_root and all Δ^W_Q through random vectors.
void criterion_projection_algebra(const std::vector<MeasureCase>& cases) {
  const auto t0 = Clock::now();
  double worst = 0;
  std::size_t zero_leaves = 0, deficient_leaves = 0;
  for (std::size_t i = 0; i < cases.size(); ++i) {
    const auto& [f, w] = cases[i];
    const int d = w.dim();
    for (std::size_t l = 0; l < f.num_leaves(); ++l) {
      Eigen::SelfAdjointEigenSolver<MatrixXd> es(w.leaf_mass(l));
      const double top = es.eigenvalues().maxCoeff();
      if (top <= 0) ++zero_leaves;
      else if (es.eigenvalues().minCoeff() <= 1e-12 * top) ++deficient_leaves;
    }
    const MatrixXd sq = w.sqrt_block_diagonal(), psq = w.pinv_sqrt_block_diagonal();
    for (AtomId q = 0; q < f.num_atoms(); ++q) {
      const MatrixXd s = local_block(f, sq, q, d), p = local_block(f, psq, q, d);
      auto wn = [&](const MatrixXd& x) { return (s * x * p).norm(); };
      const MatrixXd e = weighted_expectation_local(f, w, q);
      const MatrixXd dl = f.is_leaf(q) ? MatrixXd::Zero(e.rows(), e.cols()) : weighted_delta_local(f, w, q);
      const MatrixXd se = s * e * p, sd = s * dl * p;
      worst = std::max({worst, wn(e * e - e), wn(dl * dl - dl), wn(e * dl), wn(dl * e),
                        (se - se.transpose()).norm(), (sd - sd.transpose()).norm()});
    }
    std::mt19937_64 rng(i);
    for (int k = 0; k < 2; ++k) {
      const VecFunction<double> x(d, random_vector(rng, w.basis_size()));
      const VecFunction<double> y(d, random_vector(rng, w.basis_size()));
      const auto px = decompose(f, w, x, f.root());
      const auto py = decompose(f, w, y, f.root());
      const double scale = std::max(norm(x, w) * norm(y, w), 1e-300);
      for (std::size_t a = 0; a < px.size(); ++a)
        for (std::size_t b = 0; b < py.size(); ++b)
          if (a != b) worst = std::max(worst, std::abs(inner_product(px[a].value, py[b].value, w)) / scale);
    }
  }
  const double secs = seconds_since(t0);
  report(1, "projection algebra", cases.size() >= 200 && worst <= 1e-9 && secs <= 30 && zero_leaves > 0 &&
                                      deficient_leaves > 0,
         fmt("%zu instances (%zu zero, %zu rank-deficient leaf masses), max residual %.2e, %.1f s",
             cases.size(), zero_leaves, deficient_leaves, worst, secs));
}

// 2. f = Σ parts and ‖f‖² = Σ ‖parts‖² in L²(W).
void criterion_pythagoras(const std::vector<MeasureCase>& cases) {
  double worst = 0;
  for (std::size_t i = 0; i < cases.size(); ++i) {
    const auto& [f, w] = cases[i];
    std::mt19937_64 rng(1000 + i);
    for (int k = 0; k < 3; ++k) {
      const VecFunction<double> x(w.dim(), random_vector(rng, w.basis_size()));
      const double fn = norm(x, w);
      if (fn == 0) continue;
      VecFunction<double> sum = VecFunction<double>::zero(f, w.dim());
      double sq = 0;
      for (const auto& p : decompose(f, w, x, f.root())) {
        sum.values() += p.value.values();
        sq += std::pow(norm(p.value, w), 2);
      }
      VecFunction<double> diff(w.dim(), sum.values() - x.values());
      worst = std::max({worst, norm(diff, w) / fn, std::abs(sq - fn * fn) / (fn * fn)});
    }
  }
  report(2, "pythagoras", worst <= 1e-9, fmt("%zu instances, max relative residual %.2e", cases.size(), worst));
}

struct NameStats {
  std::size_t applicable = 0, failed = 0, inapplicable = 0;
  double min_slack = std::numeric_limits<double>::infinity();
  std::string worst;
};

std::map<std::string, NameStats> tally(const std::vector<Record>& records) {
  std::map<std::string, NameStats> m;
  for (const auto& r : records) {
    auto& s = m[r.cert.name];
    if (!r.cert.applicable) {
      ++s.inapplicable;
      continue;
    }
    ++s.applicable;
    if (!r.cert.pass) ++s.failed;
    if (r.cert.slack < s.min_slack) {
      s.min_slack = r.cert.slack;
      s.worst = r.params.tag();
    }
  }
  return m;
}

// Every listed name certified on at least `need` instances with no failure.
bool certified(const std::map<std::string, NameStats>& m, const std::vector<std::string>& names, std::size_t need,
               std::string& detail) {
  bool ok = true;
  std::ostringstream s;
  for (std::size_t i = 0; i < names.size(); ++i) {
    auto it = m.find(names[i]);
    const NameStats st = it == m.end() ? NameStats{} : it->second;
    ok = ok && st.applicable >= need && st.failed == 0;
    if (i) s << "; ";
    s << names[i] << " " << st.applicable - st.failed << "/" << st.applicable;
    if (st.failed) s << " (worst " << st.worst << ")";
  }
  detail = s.str();
  return ok;
}

std::vector<std::string> names_with_prefix(const std::map<std::string, NameStats>& m, const std::string& p) {
  std::vector<std::string> out;
  for (const auto& [name, _] : m)
    if (name.rfind(p, 0) == 0) out.push_back(name);
  return out;
}

// Radius-1 operator on a depth-3 binary tree whose root block varies on the
// leaves instead of being constant on the grandchildren.
bool sabotage_detected(std::string& detail) {
  auto f = Filtration::build(3, Branching::uniform(2), std::vector<double>(8, 0.125));
  ShiftOperator<double> t(1);
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> u(-1, 1);
  KernelBlock<double> b;
  b.owner = f.root();
  b.grid_rank = 3;
  b.grid.resize(8, 8);
  for (Eigen::Index i = 0; i < b.grid.size(); ++i) b.grid.data()[i] = u(rng);
  t.add_block(f, b);
  auto w = random_measure(1, f, 2, 10.0), v = random_measure(2, f, 2, 10.0);
  const auto rep = check_well_localized(f, t, w, v, 1);
  if (!rep.witness) return false;
  detail = fmt("sabotage rejected at %s, clause %d, residual %.2e", atom_label(f, rep.witness->q).c_str(),
               rep.witness->clause, rep.witness->residual / std::max(rep.scale, 1e-300));
  return !rep.pass;
}

bool carleson_hand_example(std::string& detail) {
  auto f = Filtration::build(1, Branching::uniform(2), std::vector<double>{1, 1});
  MatrixMeasure<double> w(f, {MatrixXd::Ones(1, 1), MatrixXd::Ones(1, 1)}, 1);
  std::vector<MatrixXd> a(f.num_atoms(), MatrixXd::Zero(1, 1));
  a[f.root()](0, 0) = 1;
  const auto c = carleson_constants(f, w, a);
  detail = fmt("hand example A=%.15g B=%.15g", c.a_best, c.b_best);
  return std::abs(c.a_best - 2) <= 1e-12 && std::abs(c.b_best - 2) <= 1e-12;
}

void criteria_sweep() {
  ExperimentConfig c;
  for (std::uint64_t s = 1; s <= 10; ++s) c.seeds.push_back(s);
  c.d = {1, 3};
  c.depth = {1, 4};
  c.branching = {2, 3};
  c.r = {0, 2};
  const auto t0 = Clock::now();
  const auto res = verify(c);
  const double secs = seconds_since(t0);
  std::printf("      sweep: %zu instances, %zu certificates, %zu failed, %.1f s on %u worker(s)\n", res.instances,
              res.records.size(), res.failures, secs, worker_count());
  const auto m = tally(res.records);
  std::string d1, d2;

  bool ok = certified(m, {"structure.well_localized"}, res.instances, d1);
  ok = sabotage_detected(d2) && ok;
  report(3, "well-localized checker", ok, d1 + "; " + d2);

  report(4, "paraproduct identities",
         certified(m, {"paraproduct.replacement", "paraproduct.invariance"}, 200, d1), d1);

  ok = certified(m, {"carleson.lower", "carleson.upper"}, 500, d1);
  ok = carleson_hand_example(d2) && ok;
  report(5, "carleson embedding", ok, d1 + "; " + d2);

  ok = certified(m, {"theorem.well_localized", "theorem.well_localized_truncated", "theorem.band"}, 1000, d1);
  const auto testing = names_with_prefix(m, "testing.");
  ok = !testing.empty() && certified(m, testing, res.instances, d2) && ok;
  report(6, "main theorems", ok, d1 + "; testing <= norm on every instance (" +
                                     std::to_string(testing.size()) + " constants)");

  std::vector<std::string> lemmas{"lemma.block_bound", "lemma.truncation_gap", "lemma.nec_gap"};
  for (const auto& n : names_with_prefix(m, "lemma.test_haar.")) lemmas.push_back(n);
  ok = lemmas.size() == 6 && certified(m, lemmas, 500, d1);
  std::size_t r0 = 0;
  for (const auto& r : res.records)
    if (r.cert.name == "lemma.truncation_gap" && r.params.r == 0) {
      ++r0;
      ok = ok && r.cert.rhs == 0 && r.cert.pass;
    }
  report(7, "block-level lemmas", ok && r0 > 0, d1 + fmt("; r=0 gap forced to zero on %zu instances", r0));

  report(8, "upper-triangle estimate", certified(m, {"estimate.upper_triangle"}, 500, d1), d1);
}

// 9. d = 1, depth ≤ 2: operator applications and norms against the
// triple-sum kernels and power iteration.
void criterion_oracles() {
  ExperimentConfig c;
  for (std::uint64_t s = 1; s <= 10; ++s) c.seeds.push_back(s);
  c.d = {1, 1};
  c.depth = {1, 2};
  c.branching = {2, 3};
  c.r = {0, 1};
  double worst_apply = 0, worst_norm = 0;
  std::size_t n = 0;
  for (const auto& p : expand(c)) {
    const auto inst = make_instance(p, c);
    const auto& f = inst.f;
    WeightedOperator<double> op(f, inst.t, inst.w, inst.v);
    const MatrixXd ts = adjoint_weighted(f, inst.t, inst.v);
    const double st = std::max(op.matrix().norm(), 1e-300), ss = std::max(ts.norm(), 1e-300);
    std::mt19937_64 rng(p.instance_seed);
    for (int k = 0; k < 5; ++k) {
      const auto x = random_vector(rng, op.matrix().cols());
      const Eigen::VectorXd got = apply_weighted(f, inst.t, inst.w, VecFunction<double>(1, x)).values();
      worst_apply = std::max(worst_apply, (got - oracle::apply(f, inst.t, inst.w, x)).norm() / (st * x.norm()));
      worst_apply = std::max(worst_apply, (ts * x - oracle::apply_adjoint(f, inst.t, inst.v, x)).norm() /
                                              (ss * x.norm()));
    }
    const double nt = op.norm(), pt = oracle::power_norm(op.matrix(), inst.w, inst.v);
    const double nd = op.dual().norm(), pd = oracle::power_norm(ts, inst.v, inst.w);
    worst_norm = std::max(worst_norm, std::abs(nt - pt) / std::max(nt, 1e-300));
    worst_norm = std::max(worst_norm, std::abs(nd - pd) / std::max(nd, 1e-300));
    ++n;
  }
  report(9, "oracle equivalence", n > 0 && worst_apply <= 1e-8 && worst_norm <= 1e-8,
         fmt("%zu instances, max relative error: application %.2e, norm %.2e", n, worst_apply, worst_norm));
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

// 10. Two verify runs of the CLI on the golden config, with different worker counts.
void criterion_determinism() {
  const fs::path dir = fs::temp_directory_path() / "mwh_acceptance_determinism";
  fs::remove_all(dir);
  fs::create_directories(dir);
  int codes[2];
  for (int i = 0; i < 2; ++i) {
    const std::string cmd = std::string("MWH_WORKERS=") + (i ? "3 " : "1 ") + MWH_CLI_PATH +
                            " verify --config " MWH_SOURCE_DIR "/configs/golden.json --out " +
                            (dir / std::to_string(i)).string() + " > " + (dir / "log").string() + " 2>&1";
    codes[i] = std::system(cmd.c_str());
  }
  const std::string a = slurp(dir / "0" / "summary.csv"), b = slurp(dir / "1" / "summary.csv");
  const bool same_jsonl = slurp(dir / "0" / "certificates.jsonl") == slurp(dir / "1" / "certificates.jsonl");
  const auto rows = std::count(a.begin(), a.end(), '\n');
  report(10, "determinism", codes[0] == 0 && codes[1] == 0 && !a.empty() && a == b && same_jsonl,
         fmt("golden config, 1 vs 3 workers: summary.csv %s (%ld rows), certificates.jsonl %s",
             a == b ? "identical" : "differs", static_cast<long>(rows) - 1, same_jsonl ? "identical" : "differs"));
}

}  // namespace

int main() {
  const auto cases = measure_sweep();
  criterion_projection_algebra(cases);
  criterion_pythagoras(cases);
  criteria_sweep();
  criterion_oracles();
  criterion_determinism();
  std::printf("%s: %d of 10 criteria failed\n", failures ? "FAIL" : "PASS", failures);
  return failures ? 1 : 0;
}
