#pragma once

// Command-line driver: block-model candidates, feature selection, evaluation,
// parameter sweeps, perturbation studies and planted-data generation.
//
// Every command writes into its own --out directory:
//   config.json  resolved options
//   <artifacts>
//   MANIFEST     "<sha256>  <relative path>" for every other file, sorted

#include <CLI11.hpp>
#include <openssl/evp.h>

#include <algorithm>
#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <mutex>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "bmfs/block_modeling.hpp"
#include "bmfs/data_io.hpp"
#include "bmfs/evaluation.hpp"
#include "bmfs/parallel.hpp"
#include "bmfs/serialize.hpp"
#include "bmfs/solver.hpp"

namespace bmfs::cli {

namespace fs = std::filesystem;
using nlohmann::json;
using detail::format_double;

inline std::string sha256_hex(const fs::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw Error("cannot read " + file.string());
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  if (!ctx || EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr) != 1) {
    EVP_MD_CTX_free(ctx);
    throw Error("sha256 unavailable");
  }
  std::array<char, 1 << 16> buf{};
  while (in) {
    in.read(buf.data(), buf.size());
    if (in.gcount() > 0) EVP_DigestUpdate(ctx, buf.data(), static_cast<std::size_t>(in.gcount()));
  }
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx, md, &len);
  EVP_MD_CTX_free(ctx);
  std::ostringstream hex;
  for (unsigned int i = 0; i < len; ++i) hex << std::hex << std::setw(2) << std::setfill('0') << int(md[i]);
  return hex.str();
}

/// Hashes every regular file below `dir` except MANIFEST itself.
inline std::vector<std::pair<std::string, std::string>> hash_tree(const fs::path& dir) {
  std::vector<std::pair<std::string, std::string>> entries;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    const std::string rel = fs::relative(e.path(), dir).generic_string();
    if (rel == "MANIFEST" || rel == "MANIFEST.tmp") continue;
    entries.emplace_back(rel, sha256_hex(e.path()));
  }
  std::sort(entries.begin(), entries.end());
  return entries;
}

inline void write_run_manifest(const fs::path& dir) {
  const fs::path tmp = dir / "MANIFEST.tmp";
  {
    std::ofstream out(tmp);
    for (const auto& [rel, hash] : hash_tree(dir)) out << hash << "  " << rel << '\n';
  }
  fs::rename(tmp, dir / "MANIFEST");
}

/// True when `dir` holds a MANIFEST whose hashes match the files on disk.
inline bool verify_run_manifest(const fs::path& dir) {
  std::ifstream in(dir / "MANIFEST");
  if (!in) return false;
  std::vector<std::pair<std::string, std::string>> listed;
  std::string line;
  while (std::getline(in, line)) {
    const auto sep = line.find("  ");
    if (sep == std::string::npos) return false;
    listed.emplace_back(line.substr(sep + 2), line.substr(0, sep));
  }
  try {
    return listed == hash_tree(dir);
  } catch (const Error&) {
    return false;
  }
}

inline void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
}

inline std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return {};
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

/// Deterministic sub-seed for one labelled unit of work.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b = 0, std::uint64_t c = 0) {
  std::seed_seq seq{base & 0xffffffffu, base >> 32, a, b, c};
  std::array<std::uint32_t, 2> words{};
  seq.generate(words.begin(), words.end());
  return (std::uint64_t{words[0]} << 32) | words[1];
}

struct Options {
  fs::path manifest;
  fs::path out;
  std::uint64_t seed = 0;
  int k = 0;  // 0: number of label classes
  int count = 10;
  int onmtf_iters = 100;
  std::vector<double> beta_bar{0.6};
  std::vector<double> gamma{0.0};
  double eta = 1e-2;
  int max_iters = 500;
  double tolerance = 1e-6;
  std::vector<Index> d{16, 64, 128, 200, 600};
  int runs = 20;
  std::string gradient_mode = "analytic";
  double delta = 1e-6;
  unsigned workers = 0;
  std::vector<fs::path> blockmodels;
  fs::path scores;
  bool all_features = false;
  std::vector<double> fractions{0.05, 0.10};
  std::vector<std::string> modes{"keep_image", "recompute_image"};
  int repeats = 5;
  PlantedSpec planted;
  std::string name = "planted";
};

inline SolverConfig solver_config(const Options& o, double beta_bar, double gamma) {
  SolverConfig cfg;
  cfg.beta_bar = beta_bar;
  cfg.gamma = gamma;
  cfg.eta = o.eta;
  cfg.max_iterations = o.max_iters;
  cfg.tolerance = o.tolerance;
  cfg.gradient_mode = parse_gradient_mode(o.gradient_mode);
  cfg.delta = o.delta;
  cfg.seed = o.seed;
  cfg.validate();
  return cfg;
}

inline json solver_json(const SolverConfig& c) {
  return {{"beta_bar", c.beta_bar},     {"gamma", c.gamma},         {"eta", c.eta},
          {"max_iters", c.max_iterations}, {"tolerance", c.tolerance}, {"patience", c.patience},
          {"gradient_mode", to_string(c.gradient_mode)}, {"delta", c.delta}};
}

inline std::string path_string(const fs::path& p) { return p.empty() ? std::string{} : fs::absolute(p).lexically_normal().generic_string(); }

inline void prepare_out(const fs::path& out) {
  if (out.empty()) throw PreconditionError("--out is required");
  fs::create_directories(out);
}

inline AttributedNetwork load_network(const Options& o) {
  if (o.manifest.empty()) throw PreconditionError("--manifest is required");
  return load_dataset(o.manifest);
}

inline std::string dataset_name(const Options& o) { return read_manifest(o.manifest).name; }

inline int resolve_k(const Options& o, const AttributedNetwork& net) {
  if (o.k > 0) return o.k;
  if (!net.has_labels()) throw PreconditionError("--k is required for unlabelled data");
  return net.num_classes();
}

/// Block-model files from --blockmodel; a directory contributes its
/// candidate_*.json files in name order.
inline std::vector<fs::path> blockmodel_files(const Options& o) {
  std::vector<fs::path> files;
  for (const auto& p : o.blockmodels) {
    if (fs::is_directory(p)) {
      std::vector<fs::path> found;
      for (const auto& e : fs::directory_iterator(p)) {
        const auto name = e.path().filename().string();
        if (e.is_regular_file() && name.rfind("candidate_", 0) == 0 && e.path().extension() == ".json")
          found.push_back(e.path());
      }
      std::sort(found.begin(), found.end());
      files.insert(files.end(), found.begin(), found.end());
    } else {
      if (!fs::exists(p)) throw Error("block model not found: " + p.string());
      files.push_back(p);
    }
  }
  if (files.empty()) throw PreconditionError("--blockmodel is required");
  return files;
}

inline BlockModel load_blockmodel_for(const fs::path& path, const AttributedNetwork& net) {
  BlockModel bm = read_blockmodel(path).model;
  if (bm.num_nodes() != net.num_nodes())
    throw DimensionError("block model " + path.string() + " has " + std::to_string(bm.num_nodes()) +
                         " nodes, dataset has " + std::to_string(net.num_nodes()));
  return bm;
}

// ---------------------------------------------------------------- commands

inline void cmd_generate(const Options& o) {
  prepare_out(o.out);
  const AttributedNetwork net = generate_planted(o.planted);
  save_dataset(net, o.out, o.name);
  const PlantedSpec& p = o.planted;
  write_json(o.out / "config.json", {{"command", "generate"},
                                     {"name", o.name},
                                     {"n", p.n},
                                     {"k", p.k},
                                     {"informative", p.d_informative},
                                     {"noise", p.d_noise},
                                     {"intra_p", p.intra_p},
                                     {"inter_p", p.inter_p},
                                     {"signal", p.signal_strength},
                                     {"seed", p.seed}});
  write_run_manifest(o.out);
}

inline void cmd_blockmodel(const Options& o) {
  const AttributedNetwork net = load_network(o);
  prepare_out(o.out);
  const int k = resolve_k(o, net);
  const CandidateSet cs = generate_candidates(net.adjacency(), k, o.count, o.seed, o.onmtf_iters, o.workers);

  std::vector<std::size_t> order(cs.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return cs[a].rre < cs[b].rre; });

  const int width = std::max<int>(2, static_cast<int>(std::to_string(cs.size() - 1).size()));
  auto file_name = [&](std::size_t i) {
    std::ostringstream s;
    s << "candidate_" << std::setw(width) << std::setfill('0') << i << ".json";
    return s.str();
  };
  for (std::size_t i = 0; i < cs.size(); ++i)
    write_json(o.out / file_name(i), to_json(StoredBlockModel{cs[i].model, cs[i].rre, cs[i].seed}));

  std::ostringstream summary;
  summary << "candidate,file,seed,rre,onmtf_initial,onmtf_final\n";
  for (std::size_t i : order)
    summary << i << ',' << file_name(i) << ',' << cs[i].seed << ',' << format_double(cs[i].rre) << ','
            << format_double(cs[i].objective_trace.front()) << ',' << format_double(cs[i].objective_trace.back())
            << '\n';
  write_text(o.out / "summary.csv", summary.str());

  write_json(o.out / "config.json", {{"command", "blockmodel"},
                                     {"manifest", path_string(o.manifest)},
                                     {"k", k},
                                     {"count", o.count},
                                     {"onmtf_iters", o.onmtf_iters},
                                     {"seed", o.seed}});
  write_run_manifest(o.out);
}

inline json trace_summary(const ObjectiveTrace& t, const Vector& r) {
  return {{"converged", t.converged()},
          {"stop", to_string(t.stop)},
          {"iterations", t.iterations()},
          {"final_loss_b", t.records.back().loss_b},
          {"final_loss_m", t.records.back().loss_m},
          {"nnz", count_nonzero(r)},
          {"warnings", t.warnings}};
}

inline void cmd_select(const Options& o) {
  if (o.beta_bar.size() != 1 || o.gamma.size() != 1)
    throw PreconditionError("select takes a single --beta-bar and --gamma value");
  const SolverConfig cfg = solver_config(o, o.beta_bar[0], o.gamma[0]);
  const AttributedNetwork net = load_network(o);
  const auto files = blockmodel_files(o);
  if (files.size() != 1) throw PreconditionError("select takes exactly one block model file");
  const BlockModel bm = load_blockmodel_for(files[0], net);
  prepare_out(o.out);

  const SolverResult res = optimize(net, bm, cfg);
  write_json(o.out / "scores.json", scores_to_json(res.scores));
  std::ostringstream trace;
  write_trace_csv(trace, res.trace);
  write_text(o.out / "trace.csv", trace.str());
  write_json(o.out / "summary.json", trace_summary(res.trace, res.scores));

  json config = solver_json(cfg);
  config["command"] = "select";
  config["manifest"] = path_string(o.manifest);
  config["blockmodel"] = path_string(files[0]);
  write_json(o.out / "config.json", config);
  write_run_manifest(o.out);
}

struct EvalRow {
  Index d = 0;
  EvaluationReport report;
  bool insufficient = false;
};

/// Insufficient support is reported as all-zero metrics with the flag set.
inline EvalRow evaluate_row(const AttributedNetwork& net, const Vector& scores, Index d, int runs, std::uint64_t seed,
                            unsigned workers) {
  EvalRow row;
  row.d = d;
  try {
    row.report = evaluate_selection(net, scores, d, runs, seed, workers);
  } catch (const InsufficientSupportError&) {
    row.insufficient = true;
    row.report.d = d;
    row.report.runs = runs;
  }
  return row;
}

inline void cmd_evaluate(const Options& o) {
  if (o.scores.empty() == !o.all_features) throw PreconditionError("give exactly one of --scores or --all-features");
  if (o.runs < 1) throw PreconditionError("--runs must be >= 1");
  const AttributedNetwork net = load_network(o);
  const std::string name = dataset_name(o);
  prepare_out(o.out);

  std::vector<EvalRow> rows;
  if (o.all_features) {
    rows.push_back(evaluate_row(net, uniform_scores(net.num_features()), net.num_features(), o.runs, o.seed, o.workers));
  } else {
    const Vector r = read_scores(o.scores);
    if (r.size() != net.num_features()) throw DimensionError("scores length does not match the dataset's feature count");
    for (Index d : o.d) {
      if (d < 1) throw PreconditionError("--d values must be >= 1");
      rows.push_back(evaluate_row(net, r, d, o.runs, o.seed, o.workers));
    }
  }

  const char* selection = o.all_features ? "all_features" : "scores";
  std::ostringstream csv;
  csv << "dataset,selection,d,acc_mean,acc_std,nmi_mean,nmi_std,insufficient_support\n";
  json reports = json::array();
  for (const auto& row : rows) {
    const auto& rp = row.report;
    csv << name << ',' << selection << ',' << row.d << ',' << format_double(rp.acc_mean) << ','
        << format_double(rp.acc_std) << ',' << format_double(rp.nmi_mean) << ',' << format_double(rp.nmi_std) << ','
        << (row.insufficient ? "true" : "false") << '\n';
    json j = to_json(rp);
    j["insufficient_support"] = row.insufficient;
    reports.push_back(j);
  }
  write_text(o.out / "report.csv", csv.str());
  write_json(o.out / "report.json", {{"dataset", name}, {"selection", selection}, {"reports", reports}});

  json config = {{"command", "evaluate"},       {"manifest", path_string(o.manifest)},
                 {"scores", path_string(o.scores)}, {"all_features", o.all_features},
                 {"d", o.d},                    {"runs", o.runs},
                 {"seed", o.seed}};
  write_json(o.out / "config.json", config);
  write_run_manifest(o.out);
}

inline std::string cell_name(std::size_t cand, std::size_t bi, std::size_t gi) {
  std::ostringstream s;
  s << "cell_c" << std::setw(3) << std::setfill('0') << cand << "_b" << std::setw(3) << bi << "_g" << std::setw(3)
    << gi;
  return s.str();
}

/// One (candidate, β̄, γ) cell. Writes scores, trace and per-d metrics.
inline void run_cell(const AttributedNetwork& net, const BlockModel& bm, const SolverConfig& cfg, const Options& o,
                     const fs::path& dir, const json& config) {
  fs::remove_all(dir);
  fs::create_directories(dir);
  json metrics = json::array();
  json summary;
  try {
    const SolverResult res = optimize(net, bm, cfg);
    write_json(dir / "scores.json", scores_to_json(res.scores));
    std::ostringstream trace;
    write_trace_csv(trace, res.trace);
    write_text(dir / "trace.csv", trace.str());
    summary = trace_summary(res.trace, res.scores);
    summary["status"] = "ok";
    for (Index d : o.d) {
      const EvalRow row = evaluate_row(net, res.scores, d, o.runs, o.seed, 1);
      json j = to_json(row.report);
      j["insufficient_support"] = row.insufficient;
      metrics.push_back(j);
    }
  } catch (const SolverAborted& e) {
    summary = {{"status", "solver_failed"}, {"error", e.what()}};
    for (Index d : o.d) {
      EvaluationReport empty;
      empty.d = d;
      empty.runs = o.runs;
      json j = to_json(empty);
      j["insufficient_support"] = false;
      metrics.push_back(j);
    }
  }
  write_json(dir / "summary.json", summary);
  write_json(dir / "metrics.json", metrics);
  write_json(dir / "config.json", config);
  write_run_manifest(dir);
}

struct SweepStats {
  std::size_t cells = 0;
  std::size_t skipped = 0;
};

inline SweepStats cmd_sweep(const Options& o) {
  if (o.beta_bar.empty() || o.gamma.empty() || o.d.empty()) throw PreconditionError("sweep grids must be non-empty");
  if (o.runs < 1) throw PreconditionError("--runs must be >= 1");
  for (double b : o.beta_bar) solver_config(o, b, 0.0);
  for (double g : o.gamma) solver_config(o, 0.6, g);
  const AttributedNetwork net = load_network(o);
  const std::string name = dataset_name(o);
  const auto files = blockmodel_files(o);
  std::vector<BlockModel> models;
  for (const auto& f : files) models.push_back(load_blockmodel_for(f, net));
  prepare_out(o.out);
  fs::create_directories(o.out / "cells");

  struct Cell {
    std::size_t cand, bi, gi;
    fs::path dir;
    json config;
  };
  std::vector<Cell> cells;
  for (std::size_t c = 0; c < models.size(); ++c)
    for (std::size_t bi = 0; bi < o.beta_bar.size(); ++bi)
      for (std::size_t gi = 0; gi < o.gamma.size(); ++gi) {
        const SolverConfig cfg = solver_config(o, o.beta_bar[bi], o.gamma[gi]);
        json config = solver_json(cfg);
        config["manifest"] = path_string(o.manifest);
        config["blockmodel"] = path_string(files[c]);
        config["d"] = o.d;
        config["runs"] = o.runs;
        config["seed"] = o.seed;
        cells.push_back({c, bi, gi, o.out / "cells" / cell_name(c, bi, gi), config});
      }

  SweepStats stats;
  stats.cells = cells.size();
  std::vector<char> pending(cells.size(), 1);
  for (std::size_t i = 0; i < cells.size(); ++i) {
    const auto& cell = cells[i];
    if (verify_run_manifest(cell.dir) && read_text(cell.dir / "config.json") == cell.config.dump(2) + "\n") {
      pending[i] = 0;
      ++stats.skipped;
    }
  }
  std::vector<std::size_t> todo;
  for (std::size_t i = 0; i < cells.size(); ++i)
    if (pending[i]) todo.push_back(i);
  parallel_for(todo.size(), o.workers, [&](std::size_t t) {
    const Cell& cell = cells[todo[t]];
    run_cell(net, models[cell.cand], solver_config(o, o.beta_bar[cell.bi], o.gamma[cell.gi]), o, cell.dir,
             cell.config);
  });

  std::ostringstream csv;
  csv << "dataset,d,beta_bar,gamma,blockmodel_id,acc_mean,acc_std,nmi_mean,nmi_std,insufficient_support,status\n";
  for (const auto& cell : cells) {
    const json metrics = read_json(cell.dir / "metrics.json");
    const std::string status = read_json(cell.dir / "summary.json").at("status").get<std::string>();
    const std::string id = files[cell.cand].stem().string();
    for (const auto& m : metrics) {
      csv << name << ',' << m.at("d").get<Index>() << ',' << format_double(o.beta_bar[cell.bi]) << ','
          << format_double(o.gamma[cell.gi]) << ',' << id << ',' << format_double(m.at("acc_mean").get<double>())
          << ',' << format_double(m.at("acc_std").get<double>()) << ','
          << format_double(m.at("nmi_mean").get<double>()) << ',' << format_double(m.at("nmi_std").get<double>())
          << ',' << (m.at("insufficient_support").get<bool>() ? "true" : "false") << ',' << status << '\n';
    }
  }
  write_text(o.out / "sweep.csv", csv.str());

  json config = {{"command", "sweep"},
                 {"manifest", path_string(o.manifest)},
                 {"beta_bar", o.beta_bar},
                 {"gamma", o.gamma},
                 {"d", o.d},
                 {"runs", o.runs},
                 {"seed", o.seed},
                 {"eta", o.eta},
                 {"max_iters", o.max_iters},
                 {"tolerance", o.tolerance},
                 {"gradient_mode", o.gradient_mode},
                 {"delta", o.delta}};
  json bms = json::array();
  for (const auto& f : files) bms.push_back(path_string(f));
  config["blockmodels"] = bms;
  write_json(o.out / "config.json", config);
  write_run_manifest(o.out);
  return stats;
}

inline PerturbMode parse_perturb_mode(const std::string& s) {
  if (s == "keep_image") return PerturbMode::keep_image;
  if (s == "recompute_image") return PerturbMode::recompute_image;
  throw PreconditionError("unknown perturbation mode '" + s + "' (expected keep_image or recompute_image)");
}

inline void cmd_perturb(const Options& o) {
  if (o.beta_bar.size() != 1 || o.gamma.size() != 1)
    throw PreconditionError("perturb takes a single --beta-bar and --gamma value");
  if (o.repeats < 1) throw PreconditionError("--repeats must be >= 1");
  const SolverConfig cfg = solver_config(o, o.beta_bar[0], o.gamma[0]);
  std::vector<PerturbMode> modes;
  for (const auto& m : o.modes) modes.push_back(parse_perturb_mode(m));
  for (double f : o.fractions)
    if (!(f >= 0.0 && f <= 1.0)) throw PreconditionError("--fractions values must lie in [0,1]");
  const AttributedNetwork net = load_network(o);
  const auto files = blockmodel_files(o);
  if (files.size() != 1) throw PreconditionError("perturb takes exactly one block model file");
  const BlockModel bm = load_blockmodel_for(files[0], net);
  prepare_out(o.out);

  const ObjectiveContext base_ctx(net, bm, cfg.delta);
  const Vector reference = optimize(base_ctx, cfg).scores;
  write_json(o.out / "reference_scores.json", scores_to_json(reference));

  struct Job {
    std::size_t fi, mi;
    int repeat;
    double distance = 0.0;
  };
  std::vector<Job> jobs;
  for (std::size_t fi = 0; fi < o.fractions.size(); ++fi)
    for (std::size_t mi = 0; mi < modes.size(); ++mi)
      for (int rep = 0; rep < o.repeats; ++rep) jobs.push_back({fi, mi, rep});
  parallel_for(jobs.size(), o.workers, [&](std::size_t j) {
    Job& job = jobs[j];
    const std::uint64_t s = derive_seed(o.seed, job.fi, static_cast<std::uint64_t>(modes[job.mi]), job.repeat);
    const BlockModel moved = perturb_allocation(bm, net.adjacency(), o.fractions[job.fi], modes[job.mi], s);
    job.distance = cosine_distance(reference, optimize(ObjectiveContext(net, moved, cfg.delta), cfg).scores);
  });

  std::ostringstream csv;
  csv << "fraction,mode,repeat,cosine_distance\n";
  for (const auto& job : jobs)
    csv << format_double(o.fractions[job.fi]) << ',' << o.modes[job.mi] << ',' << job.repeat << ','
        << format_double(job.distance) << '\n';
  write_text(o.out / "perturb.csv", csv.str());

  json config = solver_json(cfg);
  config["command"] = "perturb";
  config["manifest"] = path_string(o.manifest);
  config["blockmodel"] = path_string(files[0]);
  config["fractions"] = o.fractions;
  config["modes"] = o.modes;
  config["repeats"] = o.repeats;
  config["seed"] = o.seed;
  write_json(o.out / "config.json", config);
  write_run_manifest(o.out);
}

// ------------------------------------------------------------------ parser

inline void add_solver_flags(CLI::App* app, Options& o, bool grids) {
  auto* b = app->add_option("--beta-bar", o.beta_bar, grids ? "composition ratio grid" : "composition ratio")
                ->check(CLI::Range(0.0, 1.0));
  auto* g = app->add_option("--gamma", o.gamma, grids ? "sparsity weight grid" : "sparsity weight")
                ->check(CLI::NonNegativeNumber);
  if (!grids) {
    b->expected(1);
    g->expected(1);
  }
  app->add_option("--eta", o.eta, "constant step size")->check(CLI::PositiveNumber);
  app->add_option("--max-iters", o.max_iters, "iteration cap")->check(CLI::PositiveNumber);
  app->add_option("--tolerance", o.tolerance, "stop when |change of L_b+L_m| stays below this")
      ->check(CLI::PositiveNumber);
  app->add_option("--gradient-mode", o.gradient_mode, "analytic or paper_literal")
      ->check(CLI::IsMember({"analytic", "paper_literal"}));
  app->add_option("--delta", o.delta, "smoothing added to image matrices")->check(CLI::NonNegativeNumber);
}

/// Parses and runs one command. Returns the process exit code.
inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  Options o;
  CLI::App app{"Block-model guided unsupervised feature selection", "bmfs"};
  app.require_subcommand(1);

  auto* gen = app.add_subcommand("generate", "write a planted-partition dataset");
  gen->add_option("--out", o.out, "output directory")->required();
  gen->add_option("--name", o.name, "dataset name");
  gen->add_option("--n", o.planted.n, "nodes");
  gen->add_option("--k", o.planted.k, "blocks");
  gen->add_option("--informative", o.planted.d_informative, "informative features");
  gen->add_option("--noise", o.planted.d_noise, "noise features");
  gen->add_option("--intra-p", o.planted.intra_p, "edge probability inside a block");
  gen->add_option("--inter-p", o.planted.inter_p, "edge probability across blocks");
  gen->add_option("--signal", o.planted.signal_strength, "feature signal added on the target group");
  gen->add_option("--seed", o.planted.seed, "random seed");

  auto* bmc = app.add_subcommand("blockmodel", "fit candidate block models of the structural graph");
  bmc->add_option("--manifest", o.manifest, "dataset manifest")->required();
  bmc->add_option("--out", o.out, "output directory")->required();
  bmc->add_option("--k", o.k, "number of blocks (default: number of classes)")->check(CLI::PositiveNumber);
  bmc->add_option("--count", o.count, "number of candidates")->check(CLI::PositiveNumber);
  bmc->add_option("--onmtf-iters", o.onmtf_iters, "tri-factorization iterations")->check(CLI::PositiveNumber);
  bmc->add_option("--seed", o.seed, "seed of the first candidate");
  bmc->add_option("--workers", o.workers, "threads (0: all cores)");

  auto* sel = app.add_subcommand("select", "score features against one block model");
  sel->add_option("--manifest", o.manifest, "dataset manifest")->required();
  sel->add_option("--blockmodel", o.blockmodels, "block model JSON")->required()->expected(1);
  sel->add_option("--out", o.out, "output directory")->required();
  sel->add_option("--seed", o.seed, "recorded in config.json");
  add_solver_flags(sel, o, false);

  auto* ev = app.add_subcommand("evaluate", "cluster on the top-d features and report ACC/NMI");
  ev->add_option("--manifest", o.manifest, "dataset manifest")->required();
  ev->add_option("--scores", o.scores, "feature scores JSON");
  ev->add_flag("--all-features", o.all_features, "evaluate with every feature");
  ev->add_option("--out", o.out, "output directory")->required();
  ev->add_option("--d", o.d, "numbers of selected features");
  ev->add_option("--runs", o.runs, "k-means restarts")->check(CLI::PositiveNumber);
  ev->add_option("--seed", o.seed, "seed of the first k-means run");
  ev->add_option("--workers", o.workers, "threads (0: all cores)");

  auto* sw = app.add_subcommand("sweep", "grid over block models, beta-bar, gamma and d");
  o.beta_bar.clear();
  o.gamma.clear();
  sw->add_option("--manifest", o.manifest, "dataset manifest")->required();
  sw->add_option("--blockmodel", o.blockmodels, "block model JSON files or candidate directories")->required();
  sw->add_option("--out", o.out, "output directory")->required();
  sw->add_option("--d", o.d, "numbers of selected features");
  sw->add_option("--runs", o.runs, "k-means restarts")->check(CLI::PositiveNumber);
  sw->add_option("--seed", o.seed, "seed of the first k-means run");
  sw->add_option("--workers", o.workers, "threads (0: all cores)");
  add_solver_flags(sw, o, true);

  auto* pt = app.add_subcommand("perturb", "re-run selection on randomly re-allocated block models");
  pt->add_option("--manifest", o.manifest, "dataset manifest")->required();
  pt->add_option("--blockmodel", o.blockmodels, "block model JSON")->required()->expected(1);
  pt->add_option("--out", o.out, "output directory")->required();
  pt->add_option("--fractions", o.fractions, "fractions of nodes to move");
  pt->add_option("--modes", o.modes, "keep_image and/or recompute_image");
  pt->add_option("--repeats", o.repeats, "repeats per fraction and mode")->check(CLI::PositiveNumber);
  pt->add_option("--seed", o.seed, "perturbation seed");
  pt->add_option("--workers", o.workers, "threads (0: all cores)");
  add_solver_flags(pt, o, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err);
  }

  auto fill_grid = [](std::vector<double>& grid, double lo, double hi, double step) {
    if (!grid.empty()) return;
    const int steps = static_cast<int>(std::lround((hi - lo) / step));
    for (int i = 0; i <= steps; ++i) grid.push_back(std::round((lo + i * step) * 1e9) / 1e9);
  };
  if (sw->parsed()) {
    fill_grid(o.beta_bar, 0.0, 1.0, 0.1);
    fill_grid(o.gamma, 0.0, 5.0, 0.5);
  } else {
    if (o.beta_bar.empty()) o.beta_bar = {0.6};
    if (o.gamma.empty()) o.gamma = {0.0};
  }

  try {
    if (gen->parsed()) {
      cmd_generate(o);
      out << "wrote " << (o.out / "manifest.json").string() << '\n';
    } else if (bmc->parsed()) {
      cmd_blockmodel(o);
      out << "wrote " << o.count << " candidates to " << o.out.string() << '\n';
    } else if (sel->parsed()) {
      cmd_select(o);
      out << "wrote " << (o.out / "scores.json").string() << '\n';
    } else if (ev->parsed()) {
      cmd_evaluate(o);
      out << "wrote " << (o.out / "report.csv").string() << '\n';
    } else if (sw->parsed()) {
      const SweepStats s = cmd_sweep(o);
      out << "sweep: " << s.cells << " cells, " << s.skipped << " reused\n";
    } else if (pt->parsed()) {
      cmd_perturb(o);
      out << "wrote " << (o.out / "perturb.csv").string() << '\n';
    }
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

}  // namespace bmfs::cli
