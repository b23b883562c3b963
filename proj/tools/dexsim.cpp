// dexsim command-line driver: run .dexseq files, run figure presets, fit CSV data.

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "dexsim.hpp"

namespace fs = std::filesystem;
using namespace dexsim;

namespace {

enum ExitCode { kOk = 0, kArgs = 2, kParse = 3, kSim = 4, kFit = 5 };

struct ArgError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Options {
  std::string seq_path;
  std::string preset;
  int trajectories = 0;
  std::optional<std::uint64_t> seed;
  std::string out_dir = "dexsim_out";
  double tol = 1e-8;
  std::string emit = "csv,json";
  int threads = 0;
  // fit
  std::string model, data_path, init, fix;
};

std::set<std::string> emit_set(const std::string& s) {
  std::set<std::string> out;
  std::stringstream ss(s);
  for (std::string w; std::getline(ss, w, ',');) {
    if (w.empty()) continue;
    if (w != "csv" && w != "json") throw ArgError("--emit accepts csv and json, got '" + w + "'");
    out.insert(w);
  }
  return out;
}

// flag > DEXSIM_SEED > document > 1
std::pair<std::uint64_t, std::string> resolve_seed(const Options& o, std::optional<std::uint64_t> doc_seed) {
  if (o.seed) return {*o.seed, "flag"};
  if (const char* e = std::getenv("DEXSIM_SEED"); e && *e) {
    char* end = nullptr;
    const unsigned long long v = std::strtoull(e, &end, 10);
    if (*end != '\0') throw ArgError(std::string("DEXSIM_SEED is not an integer: ") + e);
    return {v, "env"};
  }
  if (doc_seed) return {*doc_seed, "document"};
  return {1, "default"};
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ArgError("cannot open file: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw ArgError("cannot write file: " + p.string());
  out << text;
  if (!out) throw ArgError("write failed: " + p.string());
}

fs::path prepare_out(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw ArgError("cannot create output directory " + dir + ": " + ec.message());
  return fs::path(dir);
}

json meta_base(const std::string& command, std::uint64_t seed, const std::string& seed_source, int trajectories,
               double tol, const SystemParams& params) {
  return {{"format_version", 1},  {"tool", "dexsim"},   {"version", kVersion},
          {"command", command},   {"seed", seed},       {"seed_source", seed_source},
          {"trajectories", trajectories}, {"tol", tol}, {"params", params_json(params)}};
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

int cmd_preset(const Options& o) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto& names = preset_names();
  if (std::find(names.begin(), names.end(), o.preset) == names.end()) throw ArgError("unknown preset: " + o.preset);
  const auto emit = emit_set(o.emit);
  const auto [seed, src] = resolve_seed(o, std::nullopt);
  PresetConfig cfg;
  cfg.trajectories = o.trajectories;
  cfg.seed = seed;
  cfg.tol = o.tol;
  cfg.threads = o.threads;
  const fs::path dir = prepare_out(o.out_dir);
  const PresetOutput out = run_preset(o.preset, cfg);

  write_file(dir / (o.preset + ".dexseq"), out.dexseq);
  std::vector<std::string> files = {o.preset + ".dexseq"};
  if (emit.count("csv")) {
    write_file(dir / (o.preset + "_data.csv"), out.csv);
    files.push_back(o.preset + "_data.csv");
  }
  if (emit.count("json")) {
    write_file(dir / (o.preset + "_fit.json"), out.fit.dump(2) + "\n");
    files.push_back(o.preset + "_fit.json");
  }
  SystemParams used = cfg.params;
  used.efficiency = cfg.efficiency;
  json meta = meta_base("preset", seed, src, out.trajectories, o.tol, used);
  meta["preset"] = o.preset;
  meta["csv_schema"] = out.csv_schema;
  meta["summary"] = out.summary;
  meta["files"] = files;
  meta["wall_time_s"] = seconds_since(t0);
  write_file(dir / (o.preset + "_meta.json"), meta.dump(2) + "\n");
  std::cout << o.preset << ": wrote " << files.size() + 1 << " files to " << dir.string() << "\n";
  return kOk;
}

int cmd_run(const Options& o) {
  const auto t0 = std::chrono::steady_clock::now();
  if (o.seq_path.empty()) throw ArgError("run needs --seq PATH");
  if (!fs::exists(o.seq_path)) throw ArgError("sequence file not found: " + o.seq_path);
  const auto emit = emit_set(o.emit);
  const std::string text = read_file(o.seq_path);
  const ParsedSequence ps = parse_sequence(text);
  const auto [seed, src] = resolve_seed(o, ps.doc.seed);
  const int n = o.trajectories > 0 ? o.trajectories : ps.doc.trajectories.value_or(1000);
  if (n < 1) throw ArgError("trajectories must be >= 1");
  const std::string stem = fs::path(o.seq_path).stem().string();
  const fs::path dir = prepare_out(o.out_dir);

  // Deterministic ensemble state.
  LindbladOptions lo;
  lo.tol = o.tol;
  lo.method = LindbladMethod::kHybrid;
  lo.sample_dt = std::min(0.05, ps.seq.t_end / 200.0);
  const auto lres = evolve_lindblad(QuantumState::basis(BasisState::kVac), ps.seq, ps.params, ps.seq.t_end, lo);

  // Photon clicks, detector, circular analyzer, correlator.
  TrajectoryOptions to;
  to.tol = o.tol;
  const auto ens = run_ensemble(ps.seq, ps.params, n, seed, to, o.threads);
  const DetectorModel det{ps.params.irf_fwhm, ps.params.efficiency, derive_seed(seed, 1)};
  const auto detected = polarization_project(apply_detector(ens.stream, det), AnalyzerBasis::kCircular,
                                             derive_seed(seed, 2));
  const auto g2 = g2_circular(detected.filter_line(EmissionLine::kXxSs1278));

  json fit = {{"model", "decaying_sinusoid"}, {"skipped", true}, {"reason", "fewer than 8 populated g2 bins"}};
  std::vector<DataPoint> d;
  for (std::size_t i = 0; i < g2.size(); ++i)
    if (g2.co_counts[i] + g2.cross_counts[i] > 0) d.push_back({g2.bin_center(i), g2.dcp[i], g2.dcp_err[i]});
  if (d.size() >= 8) fit = fit_json(fit_dcp(d, ps.params.t_larmor_de, 25.0), decaying_sinusoid_model());

  std::vector<std::string> files;
  auto put = [&](const std::string& name, const std::string& body) {
    write_file(dir / name, body);
    files.push_back(name);
  };
  put(stem + ".dexseq", serialize(ps.doc));
  if (emit.count("csv")) {
    std::ostringstream tr, cl, gc;
    write_trace_csv(tr, lres.trace);
    put(stem + "_trace.csv", tr.str());
    write_clicks_csv(cl, detected);
    put(stem + "_clicks.csv", cl.str());
    write_correlation_csv(gc, g2);
    put(stem + "_g2.csv", gc.str());
  }
  if (emit.count("json")) {
    json gj = {{"bin_edges", g2.bin_edges}, {"co", g2.co_counts}, {"cross", g2.cross_counts},
               {"dcp", g2.dcp},             {"dcp_err", g2.dcp_err}};
    put(stem + "_g2.json", gj.dump() + "\n");
    put(stem + "_fit.json", fit.dump(2) + "\n");
  }
  json meta = meta_base("run", seed, src, n, o.tol, ps.params);
  meta["seq_path"] = o.seq_path;
  meta["csv_schema"] = {{"trace", kStateTraceHeader}, {"clicks", kClickHeader}, {"g2", kCorrelationHeader}};
  meta["detected_clicks"] = detected.records.size();
  meta["raw_clicks"] = ens.stream.records.size();
  meta["files"] = files;
  meta["wall_time_s"] = seconds_since(t0);
  write_file(dir / (stem + "_meta.json"), meta.dump(2) + "\n");
  std::cout << stem << ": " << n << " trajectories, " << detected.records.size() << " detected clicks, wrote "
            << files.size() + 1 << " files to " << dir.string() << "\n";
  return kOk;
}

std::vector<double> number_list(const std::string& s, const std::string& what) {
  std::vector<double> v;
  std::stringstream ss(s);
  for (std::string w; std::getline(ss, w, ',');) {
    const auto x = seq_detail::to_number(w);
    if (!x) throw ArgError(what + ": not a number: '" + w + "'");
    v.push_back(*x);
  }
  return v;
}

int cmd_fit(const Options& o) {
  const auto lib = model_library();
  const auto it = lib.find(o.model);
  if (it == lib.end()) throw ArgError("unknown model: " + o.model);
  const ModelSpec& m = it->second;
  if (o.data_path.empty()) throw ArgError("fit needs --data PATH");
  if (!fs::exists(o.data_path)) throw ArgError("data file not found: " + o.data_path);

  // CSV columns t,y[,sigma]; a non-numeric first line is a header.
  std::vector<DataPoint> d;
  std::stringstream in(read_file(o.data_path));
  int lineno = 0;
  for (std::string line; std::getline(in, line);) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::optional<double>> cols;
    std::stringstream ls(line);
    for (std::string c; std::getline(ls, c, ',');) cols.push_back(seq_detail::to_number(c));
    const bool numeric = cols.size() >= 2 && cols[0] && cols[1] && (cols.size() < 3 || cols[2]);
    if (!numeric) {
      if (d.empty() && lineno == 1) continue;
      throw ArgError(o.data_path + ":" + std::to_string(lineno) + ": expected t,y[,sigma]");
    }
    d.push_back({*cols[0], *cols[1], cols.size() >= 3 ? *cols[2] : 1.0});
  }
  if (o.init.empty()) throw ArgError("fit needs --init with " + std::to_string(m.arity) + " values");
  const auto init = number_list(o.init, "--init");
  if (static_cast<int>(init.size()) != m.arity)
    throw ArgError("--init needs " + std::to_string(m.arity) + " values for " + m.name);
  FitOptions fo;
  if (!o.fix.empty()) {
    fo.fixed.assign(m.arity, false);
    for (double k : number_list(o.fix, "--fix")) {
      if (k < 0 || k >= m.arity || k != std::floor(k)) throw ArgError("--fix index out of range");
      fo.fixed[static_cast<int>(k)] = true;
    }
  }
  const FitResult f = lm_fit(m, d, Eigen::Map<const VecX>(init.data(), m.arity), fo);
  json j = fit_json(f, m);
  j["data_path"] = o.data_path;
  j["n_points"] = d.size();
  if (emit_set(o.emit).count("json")) {
    const fs::path dir = prepare_out(o.out_dir);
    const std::string stem = fs::path(o.data_path).stem().string();
    write_file(dir / (stem + "_fit.json"), j.dump(2) + "\n");
  }
  std::cout << j.dump(2) << "\n";
  return kOk;
}

void common_flags(CLI::App* a, Options& o) {
  a->add_option("--trajectories", o.trajectories, "Trajectories (default: per preset or sequence)")
      ->check(CLI::PositiveNumber);
  a->add_option("--seed", o.seed, "Base RNG seed (overrides DEXSIM_SEED)");
  a->add_option("--out", o.out_dir, "Output directory")->capture_default_str();
  a->add_option("--tol", o.tol, "Integrator tolerance")->check(CLI::PositiveNumber)->capture_default_str();
  a->add_option("--emit", o.emit, "Comma list of csv,json")->capture_default_str();
  a->add_option("--threads", o.threads, "Worker threads, 0 = all cores")->check(CLI::NonNegativeNumber);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"dexsim: dark exciton spin simulator"};
  app.set_version_flag("--version", kVersion);
  Options o;
  auto* seq_opt = app.add_option("--seq", o.seq_path, "Run a .dexseq file");
  auto* preset_opt = app.add_option("--preset", o.preset, "Run a built-in preset");
  seq_opt->excludes(preset_opt);
  common_flags(&app, o);

  auto* run = app.add_subcommand("run", "Simulate a .dexseq file");
  run->add_option("--seq", o.seq_path, "Sequence file")->required();
  common_flags(run, o);

  auto* preset = app.add_subcommand("preset", "Run a figure preset");
  preset->add_option("name", o.preset, "Preset name")->required()->check(CLI::IsMember(preset_names()));
  common_flags(preset, o);

  auto* fit = app.add_subcommand("fit", "Fit a library model to t,y,sigma CSV data");
  fit->add_option("--model", o.model, "Model name")->required();
  fit->add_option("--data", o.data_path, "CSV file")->required();
  fit->add_option("--init", o.init, "Initial parameters, comma separated")->required();
  fit->add_option("--fix", o.fix, "Indices of fixed parameters");
  fit->add_option("--out", o.out_dir, "Output directory")->capture_default_str();
  fit->add_option("--emit", o.emit, "json writes <stem>_fit.json")->capture_default_str();

  app.require_subcommand(0, 1);
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kArgs;
  }

  try {
    if (*run) return cmd_run(o);
    if (*preset) return cmd_preset(o);
    if (*fit) return cmd_fit(o);
    if (!o.seq_path.empty()) return cmd_run(o);
    if (!o.preset.empty()) return cmd_preset(o);
    std::cerr << app.help();
    return kArgs;
  } catch (const ArgError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kArgs;
  } catch (const ParseError& e) {
    std::cerr << o.seq_path << ":" << e.line() << ":" << e.column() << ": " << e.message() << "\n";
    return kParse;
  } catch (const FitError& e) {
    std::cerr << "fit error: " << e.what() << "\n";
    return kFit;
  } catch (const ValidationError& e) {
    std::cerr << "invalid input: " << e.what() << "\n";
    return kArgs;
  } catch (const std::exception& e) {
    std::cerr << "simulation error: " << e.what() << "\n";
    return kSim;
  }
}
