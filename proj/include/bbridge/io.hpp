#pragma once

// File formats.
//
// Trajectory files are line-delimited JSON. An optional first line is a
// header object carrying "format": "bbridge-trajectories"; every other line is
//   {"id": str, "domain": str, "points": [[...], ...], "label": str?}
// with a rectangular points array of at least three rows.
//
// Sigma model files hold one JSON object:
//   {"format": "bbridge-sigma-model", "d", "weight", "domain", "epsilon",
//    "matrix", "created_by", "source_corpus_digest"}
//
// Encoder files hold {"format": "bbridge-linear-encoder", "d_in", "d_out",
// "weights", "created_by"}.

#include <openssl/evp.h>

#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iomanip>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "bbridge/bridge.hpp"
#include "bbridge/encoder.hpp"
#include "bbridge/error.hpp"
#include "bbridge/numerics.hpp"
#include "bbridge/score.hpp"
#include "bbridge/version.hpp"
#include "json.hpp"

namespace bbridge::io {

using json = nlohmann::json;

inline constexpr const char* kTrajectoryFormat = "bbridge-trajectories";
inline constexpr const char* kSigmaFormat = "bbridge-sigma-model";
inline constexpr const char* kEncoderFormat = "bbridge-linear-encoder";
inline constexpr const char* kScoreFormat = "bbridge-scores";

/// Lower-case hex SHA-256 of a file's bytes.
inline std::string file_digest(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open '" + path + "'");
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
  EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr);
  std::array<char, 1 << 16> buf{};
  while (in) {
    in.read(buf.data(), buf.size());
    if (in.gcount() > 0) EVP_DigestUpdate(ctx.get(), buf.data(), static_cast<std::size_t>(in.gcount()));
  }
  std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx.get(), md.data(), &len);
  std::ostringstream hex;
  for (unsigned int i = 0; i < len; ++i) {
    hex << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(md[i]);
  }
  return hex.str();
}

inline json matrix_to_json(const Matrix& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

/// Parses a rectangular array of arrays of finite numbers. `where` prefixes
/// diagnostics.
inline Matrix matrix_from_json(const json& rows, const std::string& where) {
  if (!rows.is_array() || rows.empty()) throw FormatError(where + ": expected a non-empty array of rows");
  const std::size_t cols = rows.front().is_array() ? rows.front().size() : 0;
  if (cols == 0) throw FormatError(where + ": row 0 must be a non-empty array");
  Matrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(cols));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& row = rows[i];
    if (!row.is_array() || row.size() != cols) {
      throw FormatError(where + ": row " + std::to_string(i) + " has " +
                        std::to_string(row.is_array() ? row.size() : 0) + " entries, expected " +
                        std::to_string(cols) + " (array must be rectangular)");
    }
    for (std::size_t j = 0; j < cols; ++j) {
      if (!row[j].is_number()) {
        throw FormatError(where + ": entry [" + std::to_string(i) + "][" + std::to_string(j) +
                          "] is not a number");
      }
      const double v = row[j].get<double>();
      if (!std::isfinite(v)) {
        throw FormatError(where + ": entry [" + std::to_string(i) + "][" + std::to_string(j) +
                          "] is not finite");
      }
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = v;
    }
  }
  return m;
}

// ---------------------------------------------------------------------------
// Trajectory files

struct TrajectoryRecord {
  LatentTrajectory trajectory;
  std::optional<std::string> label;
};

/// Validates one record line. Points are stored one point per row in the
/// file and one point per column in memory.
inline TrajectoryRecord parse_record(const json& rec, const std::string& where) {
  if (!rec.is_object()) throw FormatError(where + ": record must be a JSON object");
  auto string_field = [&](const char* key, bool required) -> std::optional<std::string> {
    if (!rec.contains(key)) {
      if (required) throw FormatError(where + ": missing field '" + key + "'");
      return std::nullopt;
    }
    if (!rec[key].is_string()) throw FormatError(where + ": field '" + key + "' must be a string");
    return rec[key].get<std::string>();
  };
  const std::string id = *string_field("id", true);
  const std::string domain = string_field("domain", false).value_or("");
  const auto label = string_field("label", false);
  if (!rec.contains("points")) throw FormatError(where + ": missing field 'points'");
  const Matrix rows = matrix_from_json(rec["points"], where + ": field 'points'");
  if (rows.rows() < 3) {
    throw FormatError(where + ": field 'points' has " + std::to_string(rows.rows()) +
                      " points, need at least 3");
  }
  return {LatentTrajectory(id, domain, rows.transpose()), label};
}

inline bool is_header(const json& obj) {
  return obj.is_object() && obj.contains("format") && !obj.contains("points");
}

/// Streams records from a trajectory file, calling `sink` for each. Returns
/// the header object (or null). Rejects duplicate ids and malformed lines
/// with the offending line number.
inline json for_each_record(const std::string& path,
                            const std::function<void(TrajectoryRecord&&)>& sink) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open trajectory file '" + path + "'");
  json header;
  std::set<std::string> ids;
  std::string line;
  long long lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string where = path + ":" + std::to_string(lineno);
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json obj;
    try {
      obj = json::parse(line);
    } catch (const json::parse_error& e) {
      throw FormatError(where + ": invalid JSON (" + e.what() + ")");
    }
    if (lineno == 1 && is_header(obj)) {
      if (obj["format"] != kTrajectoryFormat) {
        throw FormatError(where + ": unknown format '" + obj["format"].dump() + "'");
      }
      header = std::move(obj);
      continue;
    }
    TrajectoryRecord rec;
    try {
      rec = parse_record(obj, where);
    } catch (const DomainError& e) {
      throw FormatError(where + ": " + e.what());
    }
    if (!ids.insert(rec.trajectory.id()).second) {
      throw FormatError(where + ": duplicate id '" + rec.trajectory.id() + "'");
    }
    sink(std::move(rec));
  }
  return header;
}

struct TrajectoryFile {
  json header;
  std::vector<TrajectoryRecord> records;
  std::string digest;

  std::vector<LatentTrajectory> trajectories() const {
    std::vector<LatentTrajectory> out;
    out.reserve(records.size());
    for (const auto& r : records) out.push_back(r.trajectory);
    return out;
  }
};

inline TrajectoryFile read_trajectory_file(const std::string& path) {
  TrajectoryFile f;
  f.header = for_each_record(path, [&](TrajectoryRecord&& r) { f.records.push_back(std::move(r)); });
  f.digest = file_digest(path);
  return f;
}

inline json trajectory_header(json extra = json::object()) {
  json h = {{"format", kTrajectoryFormat}, {"version", 1}, {"created_by", kToolName}};
  for (auto& [k, v] : extra.items()) h[k] = v;
  return h;
}

inline void write_record(std::ostream& out, const LatentTrajectory& traj,
                         const std::optional<std::string>& label = std::nullopt) {
  json rec = {{"id", traj.id()}, {"domain", traj.domain()},
              {"points", matrix_to_json(traj.points().transpose())}};
  if (label) rec["label"] = *label;
  out << rec.dump() << '\n';
}

inline void write_trajectory_file(const std::string& path, const json& header,
                                  const std::vector<TrajectoryRecord>& records) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write '" + path + "'");
  out << header.dump() << '\n';
  for (const auto& r : records) write_record(out, r.trajectory, r.label);
}

// Raw sequences share the trajectory file format; points are raw inputs.
inline RawSequence to_raw(const LatentTrajectory& traj) {
  return {traj.id(), traj.domain(), traj.points()};
}

// ---------------------------------------------------------------------------
// Sigma models

struct SigmaModel {
  std::string domain;
  long long weight = 0;
  double epsilon = 0.0;
  SpatialCovariance sigma;
  std::string created_by = kToolName;
  std::string source_corpus_digest;

  int dim() const { return sigma.dim(); }
};

inline json to_json(const SigmaModel& m) {
  return {{"format", kSigmaFormat},
          {"d", m.dim()},
          {"weight", m.weight},
          {"domain", m.domain},
          {"epsilon", m.epsilon},
          {"matrix", matrix_to_json(m.sigma.matrix())},
          {"created_by", m.created_by},
          {"source_corpus_digest", m.source_corpus_digest}};
}

inline SigmaModel sigma_model_from_json(const json& j, const std::string& where) {
  if (!j.is_object() || j.value("format", "") != kSigmaFormat) {
    throw FormatError(where + ": not a sigma model file");
  }
  for (const char* key : {"d", "weight", "domain", "epsilon", "matrix", "source_corpus_digest"}) {
    if (!j.contains(key)) throw FormatError(where + ": missing field '" + key + "'");
  }
  if (!j["d"].is_number_integer() || !j["weight"].is_number_integer()) {
    throw FormatError(where + ": 'd' and 'weight' must be integers");
  }
  SigmaModel m;
  const long long d = j["d"].get<long long>();
  m.weight = j["weight"].get<long long>();
  m.domain = j["domain"].get<std::string>();
  m.epsilon = j["epsilon"].get<double>();
  m.created_by = j.value("created_by", "");
  m.source_corpus_digest = j["source_corpus_digest"].get<std::string>();
  const Matrix mat = matrix_from_json(j["matrix"], where + ": field 'matrix'");
  if (mat.rows() != d || mat.cols() != d) {
    throw FormatError(where + ": matrix is " + std::to_string(mat.rows()) + "x" +
                      std::to_string(mat.cols()) + " but d=" + std::to_string(d));
  }
  if (m.weight < d) {
    throw FormatError(where + ": weight " + std::to_string(m.weight) + " is smaller than d=" +
                      std::to_string(d));
  }
  try {
    m.sigma = SpatialCovariance(mat);
  } catch (const DomainError& e) {
    throw FormatError(where + ": " + e.what());
  } catch (const NotPositiveDefinite&) {
    throw FormatError(where + ": matrix is not positive-definite");
  }
  return m;
}

inline SigmaModel read_sigma_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open sigma model '" + path + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw FormatError(path + ": invalid JSON (" + e.what() + ")");
  }
  return sigma_model_from_json(j, path);
}

inline void write_sigma_model(const std::string& path, const SigmaModel& m) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write '" + path + "'");
  out << to_json(m).dump(2) << '\n';
}

// ---------------------------------------------------------------------------
// Encoders

inline void write_encoder(const std::string& path, const LinearEncoder& enc) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write '" + path + "'");
  json j = {{"format", kEncoderFormat},
            {"d_in", enc.d_in()},
            {"d_out", enc.d_out()},
            {"weights", matrix_to_json(enc.weights())},
            {"created_by", kToolName}};
  out << j.dump(2) << '\n';
}

inline LinearEncoder read_encoder(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open encoder '" + path + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw FormatError(path + ": invalid JSON (" + e.what() + ")");
  }
  if (j.value("format", "") != kEncoderFormat) throw FormatError(path + ": not an encoder file");
  const Matrix w = matrix_from_json(j.at("weights"), path + ": field 'weights'");
  if (w.rows() != j.value("d_out", -1) || w.cols() != j.value("d_in", -1)) {
    throw FormatError(path + ": weights shape does not match d_out x d_in");
  }
  return LinearEncoder(w);
}

// ---------------------------------------------------------------------------
// Score records

inline json to_json(const ScoreReport& r) {
  json j = {{"id", r.trajectory_id},
            {"bbscore", r.bbscore},
            {"statistic", r.statistic},
            {"dof", r.dof},
            {"p_value", r.p_value}};
  if (r.heuristic_score) {
    j["heuristic_score"] = *r.heuristic_score;
    j["heuristic_note"] = "reconstruction";
  }
  return j;
}

}  // namespace bbridge::io
