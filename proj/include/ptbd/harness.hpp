#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <mutex>
#include <numeric>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "ptbd/block_structure.hpp"
#include "ptbd/generator.hpp"
#include "ptbd/problem.hpp"
#include "ptbd/random.hpp"
#include "ptbd/solvers.hpp"
#include "ptbd/tensor.hpp"

namespace ptbd {

enum class Method { npdo, accnpdo };

inline std::string to_string(Method m) { return m == Method::npdo ? "npdo" : "accnpdo"; }

inline Method method_from_string(const std::string& s) {
  if (s == "npdo") return Method::npdo;
  if (s == "accnpdo") return Method::accnpdo;
  throw std::invalid_argument("unknown method '" + s + "' (expected npdo or accnpdo)");
}

inline std::string to_string(Field f) { return f == Field::real ? "real" : "complex"; }

inline Field field_from_string(const std::string& s) {
  if (s == "real" || s == "r") return Field::real;
  if (s == "complex" || s == "c") return Field::complex;
  throw std::invalid_argument("unknown field '" + s + "' (expected real or complex)");
}

template <typename Scalar>
SolveResult<Scalar> solve(Method method, const ProblemBinding<Scalar>& binding, const FactorTuple<Scalar>& init,
                          const SolverConfig& config) {
  return method == Method::npdo ? npdo_solve(binding, init, config) : accnpdo_solve(binding, init, config);
}

// ---------------------------------------------------------------- trace CSV

inline const std::vector<std::string>& trace_columns() {
  static const std::vector<std::string> cols{"iter", "objective", "kkt_cheap", "kkt_full", "elapsed_seconds",
                                             "inner_iters"};
  return cols;
}

namespace detail {

inline std::string format_double(double v) {
  std::ostringstream s;
  s << std::setprecision(17) << v;
  return s.str();
}

}  // namespace detail

inline void write_trace_csv(std::ostream& out, const std::vector<IterationRecord>& trace) {
  const auto& cols = trace_columns();
  for (std::size_t i = 0; i < cols.size(); ++i) out << (i ? "," : "") << cols[i];
  out << '\n';
  for (const auto& r : trace) {
    out << r.outer_index << ',' << detail::format_double(r.objective) << ',' << detail::format_double(r.kkt_cheap) << ','
        << (r.kkt_full ? detail::format_double(*r.kkt_full) : "") << ',' << detail::format_double(r.elapsed_seconds)
        << ',' << (r.inner_iterations ? std::to_string(*r.inner_iterations) : "") << '\n';
  }
}

inline void write_trace_csv(const std::string& path, const std::vector<IterationRecord>& trace) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  write_trace_csv(out, trace);
}

// ------------------------------------------------------------- run summary

struct RunSummary {
  std::string method;
  std::string field;
  std::vector<Index> dims;
  std::string blocks;
  double eta = 0;
  std::uint64_t seed = 0;
  std::string status;
  int iterations = 0;
  long inner_iterations = 0;
  double initial_objective = 0;
  double objective = 0;
  double kkt_cheap = 0;
  double kkt_full = 0;
  double elapsed_seconds = 0;
  double reconstruction_error = 0;
  std::optional<double> planted_mass;
  std::optional<double> min_step_gain_ratio;
  std::optional<std::string> error;

  bool ok() const { return !error.has_value(); }
};

inline nlohmann::json to_json(const RunSummary& s) {
  nlohmann::json j{{"method", s.method},
                   {"field", s.field},
                   {"dims", s.dims},
                   {"blocks", s.blocks},
                   {"eta", s.eta},
                   {"seed", s.seed},
                   {"status", s.status},
                   {"iterations", s.iterations},
                   {"inner_iterations", s.inner_iterations},
                   {"initial_objective", s.initial_objective},
                   {"objective", s.objective},
                   {"kkt_cheap", s.kkt_cheap},
                   {"kkt_full", s.kkt_full},
                   {"elapsed_seconds", s.elapsed_seconds},
                   {"reconstruction_error", s.reconstruction_error}};
  j["planted_mass"] = s.planted_mass ? nlohmann::json(*s.planted_mass) : nlohmann::json(nullptr);
  j["min_step_gain_ratio"] = s.min_step_gain_ratio ? nlohmann::json(*s.min_step_gain_ratio) : nlohmann::json(nullptr);
  j["error"] = s.error ? nlohmann::json(*s.error) : nlohmann::json(nullptr);
  return j;
}

inline RunSummary summary_from_json(const nlohmann::json& j) {
  RunSummary s;
  s.method = j.at("method").get<std::string>();
  s.field = j.at("field").get<std::string>();
  s.dims = j.at("dims").get<std::vector<Index>>();
  s.blocks = j.at("blocks").get<std::string>();
  s.eta = j.at("eta").get<double>();
  s.seed = j.at("seed").get<std::uint64_t>();
  s.status = j.at("status").get<std::string>();
  s.iterations = j.at("iterations").get<int>();
  s.inner_iterations = j.at("inner_iterations").get<long>();
  s.initial_objective = j.at("initial_objective").get<double>();
  s.objective = j.at("objective").get<double>();
  s.kkt_cheap = j.at("kkt_cheap").get<double>();
  s.kkt_full = j.at("kkt_full").get<double>();
  s.elapsed_seconds = j.at("elapsed_seconds").get<double>();
  s.reconstruction_error = j.at("reconstruction_error").get<double>();
  if (j.contains("planted_mass") && !j["planted_mass"].is_null()) s.planted_mass = j["planted_mass"].get<double>();
  if (j.contains("min_step_gain_ratio") && !j["min_step_gain_ratio"].is_null()) {
    s.min_step_gain_ratio = j["min_step_gain_ratio"].get<double>();
  }
  if (j.contains("error") && !j["error"].is_null()) s.error = j["error"].get<std::string>();
  return s;
}

inline void write_summary_json(const std::string& path, const RunSummary& s) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  out << to_json(s).dump(2) << '\n';
}

inline RunSummary read_summary_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  return summary_from_json(nlohmann::json::parse(in));
}

template <typename Scalar>
double reconstruction_error(const DenseTensor<Scalar>& b, const SolveResult<Scalar>& r, const BlockPartition& partition) {
  const double nb = frobenius_norm(b);
  const DenseTensor<Scalar> approx = reconstruct(r.blocks, r.factors, partition);
  const double diff = (b.vec() - approx.vec()).norm();
  return nb > 0 ? diff / nb : diff;
}

template <typename Scalar>
RunSummary summarize(Method method, const ProblemBinding<Scalar>& binding, const SolveResult<Scalar>& r) {
  RunSummary s;
  s.method = to_string(method);
  s.field = to_string(field_of<Scalar>());
  s.dims = binding.tensor().dims();
  s.blocks = binding.partition().to_string();
  s.status = to_string(r.status);
  s.iterations = r.iterations;
  s.inner_iterations = r.total_inner_iterations;
  s.initial_objective = r.initial_objective;
  s.objective = r.objective;
  s.kkt_cheap = r.kkt_cheap;
  s.kkt_full = r.kkt_full;
  s.elapsed_seconds = r.elapsed_seconds;
  s.reconstruction_error = reconstruction_error(binding.tensor(), r, binding.partition());
  for (const auto& rec : r.trace) {
    if (rec.step_gain_ratio) {
      s.min_step_gain_ratio = s.min_step_gain_ratio ? std::min(*s.min_step_gain_ratio, *rec.step_gain_ratio)
                                                    : *rec.step_gain_ratio;
    }
  }
  return s;
}

// -------------------------------------------------------------- statistics

/// Ranks starting at 1, ties receive the average of the ranks they span.
inline std::vector<double> average_ranks(const std::vector<double>& x) {
  std::vector<std::size_t> idx(x.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  std::vector<double> ranks(x.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && x[idx[j + 1]] == x[idx[i]]) ++j;
    const double r = 0.5 * double(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[idx[k]] = r;
    i = j + 1;
  }
  return ranks;
}

/// Spearman rank correlation; NaN when either sample is constant.
inline double spearman(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) throw std::invalid_argument("spearman: samples differ in length");
  if (x.size() < 2) return std::numeric_limits<double>::quiet_NaN();
  const auto rx = average_ranks(x);
  const auto ry = average_ranks(y);
  const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / double(rx.size());
  const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / double(ry.size());
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0 || syy == 0) return std::numeric_limits<double>::quiet_NaN();
  return sxy / std::sqrt(sxx * syy);
}

inline double median(std::vector<double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// ------------------------------------------------------------- experiments

enum class InitKind { random, identity };

struct ExperimentOptions {
  InitKind init = InitKind::random;
  std::string out_dir;       // empty: keep results in memory only
  std::size_t threads = 0;   // 0: read PTBD_THREADS, absent means sequential
};

struct RunRecord {
  RunSummary summary;
  std::vector<IterationRecord> trace;
};

struct ExperimentReport {
  std::vector<RunRecord> runs;
};

/// Seed used for a run's random initial factors, distinct from the problem seed stream.
inline std::uint64_t init_seed(std::uint64_t problem_seed) { return sweep_seed(problem_seed ^ 0xA5A5A5A5A5A5A5A5ull, 0, false); }

template <typename Scalar>
FactorTuple<Scalar> initial_factors(InitKind kind, const std::vector<Index>& dims, const BlockPartition& partition,
                                    std::uint64_t seed) {
  if (kind == InitKind::identity) return identity_factors<Scalar>(dims, partition);
  Rng rng(seed);
  return random_factors<Scalar>(dims, partition, rng);
}

namespace detail {

template <typename Scalar>
RunRecord run_one(const ProblemSpec& spec, Method method, const SolverConfig& config, InitKind init) {
  const ProblemInstance<Scalar> inst = generate_problem<Scalar>(spec);
  const ProblemBinding<Scalar> binding(inst.B, spec.partition);
  const FactorTuple<Scalar> p0 = initial_factors<Scalar>(init, spec.dims, spec.partition, init_seed(spec.seed));
  const SolveResult<Scalar> r = solve(method, binding, p0, config);
  RunRecord rec{summarize(method, binding, r), r.trace};
  rec.summary.eta = spec.eta;
  rec.summary.seed = spec.seed;
  rec.summary.planted_mass = planted_mass(inst);
  return rec;
}

inline std::size_t threads_from_env() {
  const char* v = std::getenv("PTBD_THREADS");
  if (!v || !*v) return 1;
  char* end = nullptr;
  const long n = std::strtol(v, &end, 10);
  if (*end != '\0' || n < 1) throw std::invalid_argument("PTBD_THREADS must be a positive integer");
  return static_cast<std::size_t>(n);
}

}  // namespace detail

/// Generates and solves each spec. Failures are captured in the run's summary
/// and do not stop the sweep. With out_dir set, writes run_<i>.csv and
/// run_<i>.json per run.
inline ExperimentReport run_experiment(const std::vector<ProblemSpec>& specs, Method method, const SolverConfig& config,
                                       const ExperimentOptions& options = {}) {
  ExperimentReport report;
  report.runs.resize(specs.size());

  auto run_index = [&](std::size_t i) {
    const ProblemSpec& spec = specs[i];
    RunRecord rec;
    try {
      rec = spec.field == Field::real ? detail::run_one<double>(spec, method, config, options.init)
                                      : detail::run_one<std::complex<double>>(spec, method, config, options.init);
    } catch (const std::exception& e) {
      rec.summary.method = to_string(method);
      rec.summary.field = to_string(spec.field);
      rec.summary.dims = spec.dims;
      rec.summary.blocks = spec.partition.to_string();
      rec.summary.eta = spec.eta;
      rec.summary.seed = spec.seed;
      rec.summary.status = "error";
      rec.summary.error = e.what();
    }
    report.runs[i] = std::move(rec);
  };

  const std::size_t threads = std::max<std::size_t>(1, options.threads ? options.threads : detail::threads_from_env());
  if (threads == 1 || specs.size() < 2) {
    for (std::size_t i = 0; i < specs.size(); ++i) run_index(i);
  } else {
    std::mutex next_mutex;
    std::size_t next = 0;
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < std::min(threads, specs.size()); ++w) {
      pool.emplace_back([&] {
        for (;;) {
          std::size_t i;
          {
            std::lock_guard<std::mutex> lock(next_mutex);
            if (next >= specs.size()) return;
            i = next++;
          }
          run_index(i);
        }
      });
    }
    for (auto& t : pool) t.join();
  }

  if (!options.out_dir.empty()) {
    std::filesystem::create_directories(options.out_dir);
    for (std::size_t i = 0; i < report.runs.size(); ++i) {
      const std::string stem = options.out_dir + "/" + to_string(method) + "_run_" + std::to_string(i);
      write_trace_csv(stem + ".csv", report.runs[i].trace);
      write_summary_json(stem + ".json", report.runs[i].summary);
    }
  }
  return report;
}

/// Parses "2^-8", "0.125" or "1e-3".
inline double parse_real_literal(const std::string& text) {
  const auto caret = text.find('^');
  std::size_t used = 0;
  try {
    if (caret == std::string::npos) {
      const double v = std::stod(text, &used);
      if (used != text.size()) throw std::invalid_argument(text);
      return v;
    }
    const std::string base = text.substr(0, caret), expo = text.substr(caret + 1);
    const double b = std::stod(base, &used);
    if (used != base.size()) throw std::invalid_argument(text);
    const double e = std::stod(expo, &used);
    if (used != expo.size()) throw std::invalid_argument(text);
    return std::pow(b, e);
  } catch (const std::exception&) {
    throw std::invalid_argument("cannot parse number '" + text + "'");
  }
}

/// Eta values of a power-of-two sweep from `from` to `to` inclusive (doubling).
inline std::vector<double> eta_sweep(double from, double to) {
  if (!(from > 0) || !(to >= from)) throw std::invalid_argument("eta sweep needs 0 < from <= to");
  std::vector<double> out;
  for (double e = from; e <= to * (1 + 1e-12); e *= 2) out.push_back(e);
  return out;
}

/// Parses "1..8" or "1,2,4" into integers.
inline std::vector<int> parse_int_range(const std::string& text) {
  std::vector<int> out;
  const auto dots = text.find("..");
  try {
    if (dots != std::string::npos) {
      const int a = std::stoi(text.substr(0, dots)), b = std::stoi(text.substr(dots + 2));
      if (a > b) throw std::invalid_argument(text);
      for (int i = a; i <= b; ++i) out.push_back(i);
      return out;
    }
    std::stringstream in(text);
    std::string item;
    while (std::getline(in, item, ',')) out.push_back(std::stoi(item));
  } catch (const std::exception&) {
    throw std::invalid_argument("cannot parse integer list '" + text + "'");
  }
  if (out.empty()) throw std::invalid_argument("empty integer list");
  return out;
}

inline std::vector<Index> parse_dims(const std::string& text) {
  std::vector<Index> dims;
  for (int v : parse_int_range(text)) {
    if (v < 1) throw std::invalid_argument("dimensions must be positive");
    dims.push_back(v);
  }
  return dims;
}

}  // namespace ptbd
