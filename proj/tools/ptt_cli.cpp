// ptt: decompose tensors into TT format, convert between Tucker and TT, and
// solve 3D Sylvester equations. Every flag falls back to PTT_<FLAG> in the
// environment (flag > environment > default).

#include "ptt/ptt.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

namespace {

using namespace ptt;

struct VerifyMode {
  std::string kind = "auto";  // auto | none | full | sample
  std::size_t samples = 100000;
};

VerifyMode parse_verify(const std::string& s) {
  VerifyMode m;
  if (s == "auto" || s == "none" || s == "full") {
    m.kind = s;
  } else if (s.rfind("sample:", 0) == 0) {
    m.kind = "sample";
    m.samples = std::stoull(s.substr(7));
    if (m.samples == 0) throw std::invalid_argument("sample count must be positive");
  } else {
    throw std::invalid_argument("--verify must be auto, none, full or sample:N");
  }
  return m;
}

constexpr std::size_t full_verify_limit = std::size_t{1} << 24;

std::size_t entry_count(const std::vector<std::size_t>& dims) {
  std::size_t n = 1;
  for (auto d : dims) n = checked_mul(n, d);
  return n;
}

template <class Ref>
ErrorEstimate verify(const Ref& ref, const TTTensor& t, VerifyMode mode, std::uint64_t seed) {
  if (mode.kind == "auto") mode.kind = entry_count(t.dims()) <= full_verify_limit ? "full" : "sample";
  if (mode.kind == "full") return tt_error_full(ref, t);
  return tt_error_sample(ref, t, mode.samples, SeededStream{seed, hash_tag("verify")});
}

void write_text(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  out << text;
}

void apply_error(RunReport& rep, const ErrorEstimate& e) {
  rep.relative_error = e.value;
  rep.error_mode = e.sampled ? "sample" : "full";
  if (e.sampled) {
    rep.standard_error = e.standard_error;
    rep.samples = e.samples;
  }
}

struct DecomposeArgs {
  std::string method = "pstt2";
  std::string tensor = "hilbert";
  std::string input;
  std::vector<std::size_t> dims;
  std::vector<std::size_t> ranks;
  double tol = 0.0;
  std::size_t oversample = 5;
  std::vector<std::size_t> partition;
  std::size_t workers = 1;
  std::uint64_t seed = 0;
  std::size_t middle = 0;
  std::string drm = "khatri-rao";
  std::size_t bumps = 100;
  double gamma = 10.0;
  std::size_t latency_us = 0;
  std::size_t max_block = std::size_t{1} << 24;
  std::string verify = "auto";
  std::string output;
  std::string report;
};

int run_decompose(const DecomposeArgs& a) {
  const auto method = parse_method(a.method);
  const auto mode = parse_verify(a.verify);
  std::unique_ptr<TensorOracle> oracle;
  std::shared_ptr<const TTTensor> tt_source;
  std::shared_ptr<const DenseTensor> dense_source;
  if (a.tensor == "hilbert") {
    if (a.dims.empty()) throw std::invalid_argument("--dims is required for generated tensors");
    oracle = std::make_unique<TensorOracle>(gen_hilbert(a.dims));
  } else if (a.tensor == "gaussian-bumps") {
    if (a.dims.empty()) throw std::invalid_argument("--dims is required for generated tensors");
    oracle = std::make_unique<TensorOracle>(gen_gaussian_bumps(a.dims, a.bumps, a.gamma, a.seed));
  } else if (a.tensor == "dtf-file") {
    dense_source = std::make_shared<const DenseTensor>(read_dense(a.input));
    auto d = dense_source;
    oracle = std::make_unique<TensorOracle>(d->shape(), [d](std::span<const std::size_t> idx) { return (*d)(idx); });
  } else if (a.tensor == "tt-file") {
    tt_source = std::make_shared<const TTTensor>(read_tt(a.input));
    oracle = std::make_unique<TensorOracle>(tt_oracle(tt_source));
  } else {
    throw std::invalid_argument("--tensor must be hilbert, gaussian-bumps, dtf-file or tt-file");
  }
  if (a.latency_us) oracle->set_block_latency(std::chrono::microseconds(a.latency_us));

  DecomposeConfig cfg;
  cfg.ranks = a.ranks;
  cfg.tol = a.tol;
  cfg.oversample = a.oversample;
  cfg.partition = a.partition;
  cfg.workers = a.workers;
  cfg.seed = a.seed;
  cfg.middle = a.middle;
  cfg.max_block_scalars = a.max_block;
  if (a.drm == "khatri-rao") cfg.drm = DrmKind::khatri_rao;
  else if (a.drm == "gaussian") cfg.drm = DrmKind::gaussian;
  else throw std::invalid_argument("--drm must be khatri-rao or gaussian");
  if (method != Method::ttsvd && method != Method::parallel_ttsvd && cfg.ranks.empty())
    throw std::invalid_argument("sketching methods need --ranks");

  auto res = decompose(method, *oracle, cfg);
  RunReport rep;
  rep.command = "decompose";
  rep.method = to_string(method);
  fill_report(rep, res, cfg);
  rep.extra["tensor"] = a.tensor;
  rep.extra["drm"] = a.drm;

  bool ok = true;
  if (mode.kind != "none") {
    oracle->set_block_latency(std::chrono::microseconds(0));
    ErrorEstimate e;
    if (dense_source) e = verify(*dense_source, res.tt, mode, a.seed);
    else e = verify(*oracle, res.tt, mode, a.seed);
    apply_error(rep, e);
    if (a.tol > 0.0) ok = e.value <= a.tol;
    rep.extra["verified"] = ok;
  }
  if (!a.output.empty()) write_tt(a.output, res.tt);
  write_text(a.report, dump_report(rep));
  return ok ? 0 : 1;
}

struct ConvertArgs {
  std::string direction;
  std::string input;
  std::string output;
  std::vector<std::size_t> ranks;
  double tol = 1e-10;
  std::string basis = "weighted-svd";
  std::string verify = "auto";
  std::string report;
};

int run_convert(const ConvertArgs& a) {
  Stopwatch sw;
  RunReport rep;
  rep.command = "convert";
  rep.method = a.direction;
  rep.ranks = a.ranks;
  const auto mode = parse_verify(a.verify);
  const bool check = mode.kind == "full" || mode.kind == "auto";
  bool ok = true;
  if (a.direction == "tucker2tt") {
    const auto in = read_tucker(a.input);
    const auto out = a.ranks.empty() ? tucker2tt(in, a.tol) : tucker2tt(in, a.ranks);
    rep.dims = out.dims();
    rep.core_sizes = out.core_sizes();
    if (check && entry_count(rep.dims) <= full_verify_limit) {
      apply_error(rep, tt_error_full(tucker_full(in), out));
      if (a.ranks.empty()) ok = *rep.relative_error <= a.tol;
    }
    write_tt(a.output, out);
  } else if (a.direction == "tt2tucker") {
    const auto in = read_tt(a.input);
    FactorBasis basis;
    if (a.basis == "weighted-svd") basis = FactorBasis::weighted_svd;
    else if (a.basis == "core-svd") basis = FactorBasis::core_svd;
    else if (a.basis == "cpqr") basis = FactorBasis::cpqr;
    else throw std::invalid_argument("--basis must be weighted-svd, core-svd or cpqr");
    const auto out = a.ranks.empty() ? tt2tucker(in, Truncation::relative(a.tol), {}, basis)
                                     : tt2tucker(in, Truncation::fixed(1), a.ranks, basis);
    const auto tk = to_tucker(out);
    rep.dims = tk.dims();
    rep.core_sizes = tk.core.shape().dims();
    if (check && entry_count(rep.dims) <= full_verify_limit) {
      const auto ref = tt_full(in);
      const auto diff = tucker_full(tk) - ref;
      const double nr = frobenius_norm(ref);
      apply_error(rep, {nr > 0 ? frobenius_norm(diff) / nr : frobenius_norm(diff), 0.0, false, 0});
      if (a.ranks.empty()) ok = *rep.relative_error <= a.tol;
    }
    write_tucker(a.output, tk);
  } else {
    throw std::invalid_argument("--direction must be tucker2tt or tt2tucker");
  }
  rep.wall_time_ms = sw.ms();
  rep.extra["basis"] = a.basis;
  write_text(a.report, dump_report(rep));
  return ok ? 0 : 1;
}

NormalOperator parse_operator(const Json& j, const std::filesystem::path& base) {
  NormalOperator op;
  if (j.contains("spectrum")) {
    const auto v = j.at("spectrum").get<std::vector<double>>();
    op = NormalOperator::diagonal(Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size())));
  } else if (j.contains("matrix")) {
    const auto m = read_dense((base / j.at("matrix").get<std::string>()).string());
    if (m.order() != 2) throw std::invalid_argument("operator matrix file must hold a 2-way tensor");
    op = NormalOperator::symmetric(unfold(m, 1));
  } else {
    throw std::invalid_argument("operator needs 'spectrum' or 'matrix'");
  }
  if (j.contains("interval")) {
    const auto iv = j.at("interval").get<std::vector<double>>();
    if (iv.size() != 2) throw std::invalid_argument("interval must have two endpoints");
    op.set_interval({iv[0], iv[1]});
  }
  return op;
}

struct SolveArgs {
  std::string problem;
  std::size_t demo = 0;
  std::uint64_t seed = 0;
  double eps = 1e-9;
  std::size_t shifts = 0;
  std::string verify = "auto";
  std::string output;
  std::string report;
};

int run_solve(const SolveArgs& a) {
  Stopwatch sw;
  Sylvester3DProblem prob;
  double eps = a.eps;
  if (a.demo) {
    prob = demo_sylvester(a.demo, a.seed);
  } else {
    if (a.problem.empty()) throw std::invalid_argument("give --problem or --demo");
    std::ifstream in(a.problem);
    if (!in) throw std::runtime_error("cannot open '" + a.problem + "'");
    const auto j = Json::parse(in);
    const auto base = std::filesystem::path(a.problem).parent_path();
    prob.a = parse_operator(j.at("a"), base);
    prob.b = parse_operator(j.at("b"), base);
    prob.c = parse_operator(j.at("c"), base);
    prob.f = read_tt((base / j.at("f").get<std::string>()).string());
    if (j.contains("eps") && a.eps == SolveArgs{}.eps) eps = j.at("eps").get<double>();
  }
  const auto res = a.shifts ? tt_fadi(prob, eps, a.shifts) : tt_fadi(prob, eps);
  RunReport rep;
  rep.command = "solve-sylvester";
  rep.method = "tt-fadi";
  rep.dims = res.tt.dims();
  rep.core_sizes = res.tt.core_sizes();
  rep.seed = a.seed;
  rep.warnings = res.warnings;
  rep.per_worker_peak_scalars = {res.ops.peak_scalars};
  rep.extra["eps"] = eps;
  rep.extra["shifts"] = res.shifts.count();
  rep.extra["predicted_bound"] = res.shifts.predicted_bound();
  rep.extra["s1"] = res.s1;
  rep.extra["s2"] = res.s2;
  rep.extra["flops"] = res.ops.flops;
  rep.extra["shifted_solves"] = {{"z", res.ops.solves_z}, {"w", res.ops.solves_w}, {"y", res.ops.solves_y}};
  rep.extra["max_array_scalars"] = res.ops.max_array_scalars;
  const auto mode = parse_verify(a.verify);
  const bool small = entry_count(rep.dims) <= full_verify_limit;
  if (mode.kind == "full" || (mode.kind == "auto" && small)) {
    rep.extra["residual"] = sylvester_residual(prob, res.tt);
    if (prob.a.is_diagonal() && prob.b.is_diagonal() && prob.c.is_diagonal()) {
      apply_error(rep, tt_error_full(direct_diag_solve(prob, tt_full(prob.f)), res.tt));
    }
  }
  if (!a.output.empty()) write_tt(a.output, res.tt);
  rep.wall_time_ms = sw.ms();
  write_text(a.report, dump_report(rep));
  return 0;
}

Json file_info(const std::string& path) {
  io::Reader r(path);
  const auto magic = r.magic();
  Json j;
  j["file"] = path;
  j["format"] = magic;
  if (magic != "DTF1" && magic != "TTF1" && magic != "TKF1") throw std::runtime_error("'" + path + "' has unknown magic");
  const auto d = r.count(64);
  j["order"] = d;
  j["dims"] = io::read_dims(r, d);
  if (magic == "TTF1") j["core_sizes"] = io::read_dims(r, d + 1);
  if (magic == "TKF1") j["core_dims"] = io::read_dims(r, d);
  return j;
}

struct GenerateArgs {
  std::string kind;
  std::vector<std::size_t> dims;
  std::vector<std::size_t> ranks;
  std::uint64_t seed = 0;
  std::size_t bumps = 100;
  double gamma = 10.0;
  std::string output;
};

int run_generate(const GenerateArgs& a) {
  if (a.kind == "hilbert") write_dense(a.output, gen_hilbert(a.dims).materialize());
  else if (a.kind == "gaussian-bumps") write_dense(a.output, gen_gaussian_bumps(a.dims, a.bumps, a.gamma, a.seed).materialize());
  else if (a.kind == "random-tt") write_tt(a.output, gen_random_tt(a.dims, a.ranks, a.seed));
  else if (a.kind == "random-tucker") write_tucker(a.output, gen_random_tucker(a.dims, a.ranks, a.seed));
  else throw std::invalid_argument("--kind must be hilbert, gaussian-bumps, random-tt or random-tucker");
  return 0;
}

template <class T>
CLI::Option* flag(CLI::App* app, const std::string& name, T& value, const std::string& help) {
  std::string env = "PTT_";
  for (char c : name.substr(2)) env += c == '-' ? '_' : static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  auto* opt = app->add_option(name, value, help)->envname(env);
  if constexpr (requires { value.push_back(value.front()); }) opt->delimiter(',');
  return opt;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Parallel tensor-train construction"};
  app.require_subcommand(1);

  DecomposeArgs da;
  auto* dec = app.add_subcommand("decompose", "Compute a TT approximation of a tensor");
  flag(dec, "--method", da.method, "ttsvd, parallel-ttsvd, pstt, pstt-onepass, pstt2, pstt2-onepass or sstt");
  flag(dec, "--tensor", da.tensor, "hilbert, gaussian-bumps, dtf-file or tt-file");
  flag(dec, "--input", da.input, "Input file for dtf-file and tt-file");
  flag(dec, "--dims", da.dims, "Mode sizes, comma separated");
  flag(dec, "--ranks", da.ranks, "Target ranks r_1..r_{d-1}");
  flag(dec, "--tol", da.tol, "SVD tolerance without ranks; verification threshold");
  flag(dec, "--oversample", da.oversample, "Oversampling p (>= 2)");
  flag(dec, "--partition", da.partition, "Chunks per mode P_1..P_d");
  flag(dec, "--workers", da.workers, "Worker threads");
  flag(dec, "--seed", da.seed, "Random seed");
  flag(dec, "--middle", da.middle, "Middle index for pstt2 (0: ceil(d/2))");
  flag(dec, "--drm", da.drm, "khatri-rao or gaussian");
  flag(dec, "--bumps", da.bumps, "Number of Gaussian bumps");
  flag(dec, "--gamma", da.gamma, "Bump sharpness");
  flag(dec, "--block-latency-us", da.latency_us, "Artificial delay per sub-tensor load");
  flag(dec, "--max-block", da.max_block, "Largest sub-tensor in scalars");
  flag(dec, "--verify", da.verify, "auto, none, full or sample:N");
  flag(dec, "--output", da.output, "TTF1 output file");
  flag(dec, "--report", da.report, "JSON report file (default stdout)");

  ConvertArgs ca;
  auto* conv = app.add_subcommand("convert", "Convert between Tucker and TT");
  flag(conv, "--direction", ca.direction, "tucker2tt or tt2tucker")->required();
  flag(conv, "--input", ca.input, "TKF1 or TTF1 input")->required();
  flag(conv, "--output", ca.output, "Output file")->required();
  flag(conv, "--ranks", ca.ranks, "Fixed ranks instead of a tolerance");
  flag(conv, "--tol", ca.tol, "Relative tolerance");
  flag(conv, "--basis", ca.basis, "weighted-svd, core-svd or cpqr (tt2tucker)");
  flag(conv, "--verify", ca.verify, "auto, none or full");
  flag(conv, "--report", ca.report, "JSON report file (default stdout)");

  SolveArgs sa;
  auto* solve = app.add_subcommand("solve-sylvester", "Solve X x1 A + X x2 B + X x3 C = F in TT format");
  flag(solve, "--problem", sa.problem, "Problem JSON");
  flag(solve, "--demo", sa.demo, "Built-in diagonal problem of size n");
  flag(solve, "--seed", sa.seed, "Seed for the demo right-hand side");
  flag(solve, "--eps", sa.eps, "Accuracy");
  flag(solve, "--shifts", sa.shifts, "Fixed number of shifts (0: from eps)");
  flag(solve, "--verify", sa.verify, "auto, none or full");
  flag(solve, "--output", sa.output, "TTF1 output file");
  flag(solve, "--report", sa.report, "JSON report file (default stdout)");

  std::vector<std::string> info_files;
  auto* info = app.add_subcommand("info", "Print file headers");
  info->add_option("files", info_files, "DTF1, TTF1 or TKF1 files")->required();

  GenerateArgs ga;
  auto* gen = app.add_subcommand("generate", "Write a test tensor to a file");
  flag(gen, "--kind", ga.kind, "hilbert, gaussian-bumps, random-tt or random-tucker")->required();
  flag(gen, "--dims", ga.dims, "Mode sizes")->required();
  flag(gen, "--ranks", ga.ranks, "TT ranks (d-1) or Tucker ranks (d)");
  flag(gen, "--seed", ga.seed, "Random seed");
  flag(gen, "--bumps", ga.bumps, "Number of Gaussian bumps");
  flag(gen, "--gamma", ga.gamma, "Bump sharpness");
  flag(gen, "--output", ga.output, "Output file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    std::cerr << Json{{"schema", 1}, {"error", e.what()}}.dump() << "\n";
    return 2;
  }

  try {
    if (dec->parsed()) return run_decompose(da);
    if (conv->parsed()) return run_convert(ca);
    if (solve->parsed()) return run_solve(sa);
    if (gen->parsed()) return run_generate(ga);
    if (info->parsed()) {
      Json out = Json::array();
      for (const auto& f : info_files) out.push_back(file_info(f));
      std::cout << out.dump(2) << "\n";
      return 0;
    }
  } catch (const std::exception& e) {
    Json err{{"schema", 1}, {"error", e.what()}};
    std::cerr << err.dump() << "\n";
    return 2;
  }
  return 0;
}
