#pragma once

// On-disk forms of block models, feature scores, solver traces and
// evaluation reports.
//
//   block model  {"k", "n", "allocation": [block id per node],
//                 "image": row-major k×k, "rre", "seed"}
//   scores       JSON array of m reals
//   trace        CSV "iteration,loss_b,loss_m,loss_total,grad_norm,nnz"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <fstream>
#include <ostream>
#include <string>
#include <vector>

#include "bmfs/data_io.hpp"
#include "bmfs/evaluation.hpp"
#include "bmfs/solver.hpp"

namespace bmfs {

struct StoredBlockModel {
  BlockModel model;
  double rre = 0.0;
  std::uint64_t seed = 0;
};

inline nlohmann::json to_json(const StoredBlockModel& s) {
  const BlockModel& bm = s.model;
  nlohmann::json j;
  j["k"] = bm.num_blocks();
  j["n"] = bm.num_nodes();
  j["allocation"] = bm.allocation.ids();
  std::vector<double> image;
  image.reserve(static_cast<std::size_t>(bm.image.size()));
  for (Index i = 0; i < bm.image.rows(); ++i)
    for (Index c = 0; c < bm.image.cols(); ++c) image.push_back(bm.image(i, c));
  j["image"] = image;
  j["rre"] = s.rre;
  j["seed"] = s.seed;
  return j;
}

inline StoredBlockModel blockmodel_from_json(const nlohmann::json& j) {
  try {
    const int k = j.at("k").get<int>();
    const Index n = j.at("n").get<Index>();
    auto ids = j.at("allocation").get<std::vector<int>>();
    if (static_cast<Index>(ids.size()) != n) throw DimensionError("block model: allocation length != n");
    const auto flat = j.at("image").get<std::vector<double>>();
    if (flat.size() != static_cast<std::size_t>(k) * static_cast<std::size_t>(k))
      throw DimensionError("block model: image must hold k*k values");
    StoredBlockModel s;
    s.model.allocation = Allocation(std::move(ids), k);
    s.model.image.resize(k, k);
    for (int i = 0; i < k; ++i)
      for (int c = 0; c < k; ++c) s.model.image(i, c) = flat[static_cast<std::size_t>(i * k + c)];
    s.rre = j.value("rre", 0.0);
    s.seed = j.value("seed", std::uint64_t{0});
    s.model.validate();
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("block model", 0, e.what());
  }
}

inline void write_json(const fs::path& path, const nlohmann::json& j) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

inline nlohmann::json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path.string(), 0, e.what());
  }
}

inline StoredBlockModel read_blockmodel(const fs::path& path) { return blockmodel_from_json(read_json(path)); }

inline nlohmann::json scores_to_json(const Vector& r) { return std::vector<double>(r.data(), r.data() + r.size()); }

inline Vector scores_from_json(const nlohmann::json& j) {
  if (!j.is_array()) throw ParseError("scores", 0, "expected a JSON array");
  const auto v = j.get<std::vector<double>>();
  Vector r = Eigen::Map<const Vector>(v.data(), static_cast<Index>(v.size()));
  if (!(r.array() >= 0.0).all()) throw PreconditionError("scores must be nonnegative");
  return r;
}

inline Vector read_scores(const fs::path& path) { return scores_from_json(read_json(path)); }

inline constexpr const char* kTraceHeader = "iteration,loss_b,loss_m,loss_total,grad_norm,nnz";

inline void write_trace_csv(std::ostream& out, const ObjectiveTrace& trace) {
  using detail::format_double;
  out << kTraceHeader << '\n';
  for (const auto& r : trace.records)
    out << r.iteration << ',' << format_double(r.loss_b) << ',' << format_double(r.loss_m) << ','
        << format_double(r.loss_total) << ',' << format_double(r.grad_norm) << ',' << r.nnz << '\n';
}

inline nlohmann::json to_json(const EvaluationReport& rep) {
  nlohmann::json j;
  j["d"] = rep.d;
  j["runs"] = rep.runs;
  j["acc_mean"] = rep.acc_mean;
  j["acc_std"] = rep.acc_std;
  j["nmi_mean"] = rep.nmi_mean;
  j["nmi_std"] = rep.nmi_std;
  j["per_run"] = nlohmann::json::array();
  for (const auto& r : rep.per_run) j["per_run"].push_back({{"seed", r.seed}, {"acc", r.acc}, {"nmi", r.nmi}});
  return j;
}

inline const char* to_string(StopReason s) { return s == StopReason::tolerance ? "tolerance" : "max_iterations"; }

}  // namespace bmfs
