#pragma once

// Command implementations behind the `bbridge` CLI. Each command takes a
// plain options struct, writes its files, prints a human-readable table to
// `log` and returns a summary so tests can drive commands in-process.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "bbridge/bridge.hpp"
#include "bbridge/encoder.hpp"
#include "bbridge/error.hpp"
#include "bbridge/evalsuite.hpp"
#include "bbridge/io.hpp"
#include "bbridge/numerics.hpp"
#include "bbridge/random.hpp"
#include "bbridge/score.hpp"
#include "bbridge/version.hpp"

namespace bbridge::app {

using io::json;

/// Shared run parameters. Defaults follow the evaluation protocol: 20
/// shuffled copies per document, block sizes 1/2/5/10, windows of 3 points,
/// shrinkage 1e-7.
struct RunConfig {
  std::uint64_t seed = 0;
  double epsilon = 1e-7;
  bool use_pvalue = false;
  bool triplet_mode = false;
  int copies = 20;
  std::vector<int> block_sizes{1, 2, 5, 10};
  std::vector<int> windows{1, 2, 3};
  int window_size = 3;
  double step_size = 1e-3;
  int batch_size = 16;
  int epochs = 10;

  void validate() const {
    if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw ValidationError("--epsilon must lie in [0, 1]");
    if (copies < 1) throw ValidationError("--copies must be >= 1");
    if (window_size < 2) throw ValidationError("--window-size must be >= 2");
    for (int b : block_sizes) {
      if (b < 1) throw ValidationError("--block-sizes entries must be >= 1");
    }
    for (int w : windows) {
      if (w < 1) throw ValidationError("--windows entries must be >= 1");
    }
    if (!(step_size > 0.0)) throw ValidationError("--step-size must be positive");
    if (batch_size < 1) throw ValidationError("--batch-size must be >= 1");
    if (epochs < 0) throw ValidationError("--epochs must be >= 0");
  }
};

// ---------------------------------------------------------------------------
// Spec strings

inline std::optional<std::string> strip_prefix(const std::string& s, const std::string& prefix) {
  if (s.rfind(prefix, 0) != 0) return std::nullopt;
  return s.substr(prefix.size());
}

inline std::uint64_t parse_u64(const std::string& text, const std::string& what) {
  try {
    std::size_t pos = 0;
    const auto v = std::stoull(text, &pos);
    if (pos != text.size()) throw std::invalid_argument(text);
    return v;
  } catch (const std::exception&) {
    throw ValidationError(what + ": '" + text + "' is not an unsigned integer");
  }
}

inline double parse_double(const std::string& text, const std::string& what) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(text, &pos);
    if (pos != text.size()) throw std::invalid_argument(text);
    return v;
  } catch (const std::exception&) {
    throw ValidationError(what + ": '" + text + "' is not a number");
  }
}

/// A A^T / d + I/4 with A iid standard normal: well conditioned, dense.
inline SpatialCovariance random_spd(int d, std::uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<double> normal;
  Matrix a(d, d);
  for (Eigen::Index j = 0; j < d; ++j)
    for (Eigen::Index i = 0; i < d; ++i) a(i, j) = normal(rng);
  Matrix s = a * a.transpose() / static_cast<double>(d);
  s = 0.5 * (s + s.transpose()).eval();
  s.diagonal().array() += 0.25;
  return SpatialCovariance(std::move(s));
}

/// "identity", "random-spd:<seed>" or the path of a sigma model file.
inline SpatialCovariance parse_sigma_spec(const std::string& spec, int d) {
  if (spec == "identity") return SpatialCovariance::identity(d);
  if (auto rest = strip_prefix(spec, "random-spd:")) return random_spd(d, parse_u64(*rest, "--sigma"));
  const auto model = io::read_sigma_model(spec);
  if (model.dim() != d) {
    throw DimensionMismatch("sigma model '" + spec + "' has d=" + std::to_string(model.dim()) +
                            " but d=" + std::to_string(d) + " was requested");
  }
  return model.sigma;
}

/// Square mixing matrix I + G / (2 sqrt(d)), redrawn until comfortably
/// invertible.
inline Matrix random_mixing(int d, std::uint64_t seed) {
  for (std::uint64_t attempt = 0;; ++attempt) {
    Rng rng(splitmix64(seed + attempt));
    std::normal_distribution<double> normal;
    Matrix a = Matrix::Identity(d, d);
    for (Eigen::Index j = 0; j < d; ++j)
      for (Eigen::Index i = 0; i < d; ++i) a(i, j) += normal(rng) / (2.0 * std::sqrt(double(d)));
    Eigen::JacobiSVD<Matrix> svd(a);
    const auto sv = svd.singularValues();
    if (sv(sv.size() - 1) > 0.2 * sv(0)) return a;
  }
}

// ---------------------------------------------------------------------------
// simulate

struct SimulateOptions {
  int d = 4;
  int horizon = 50;
  int horizon_max = 0;  // > horizon: draw T uniformly from [horizon, horizon_max]
  int n = 100;
  std::string sigma = "identity";
  std::string endpoints = "zero";  // or "gaussian:<scale>"
  std::string mix = "none";        // or "random:<seed>": write A s instead of s
  std::string mix_inverse_out;     // encoder file holding A^{-1}
  std::string domain = "sim";
  std::string label;               // attached to every record when non-empty
  std::uint64_t seed = 0;
  std::string out;
};

inline std::vector<io::TrajectoryRecord> simulate(const SimulateOptions& o, std::ostream& log) {
  if (o.d < 1) throw ValidationError("--d must be >= 1");
  if (o.horizon < 2) throw ValidationError("--T must be >= 2");
  if (o.n < 0) throw ValidationError("--n must be >= 0");
  if (o.horizon_max != 0 && o.horizon_max < o.horizon) {
    throw ValidationError("--T-max must be >= --T");
  }
  const SpatialCovariance sigma = parse_sigma_spec(o.sigma, o.d);
  double endpoint_scale = 0.0;
  if (o.endpoints != "zero") {
    auto rest = strip_prefix(o.endpoints, "gaussian:");
    if (!rest) throw ValidationError("--endpoints: expected 'zero' or 'gaussian:<scale>'");
    endpoint_scale = parse_double(*rest, "--endpoints");
  }
  std::optional<Matrix> mixing;
  if (o.mix != "none") {
    auto rest = strip_prefix(o.mix, "random:");
    if (!rest) throw ValidationError("--mix: expected 'none' or 'random:<seed>'");
    mixing = random_mixing(o.d, parse_u64(*rest, "--mix"));
  }

  std::vector<io::TrajectoryRecord> records;
  for (int i = 0; i < o.n; ++i) {
    std::ostringstream id;
    id << o.domain << '-' << std::setw(6) << std::setfill('0') << i;
    const std::uint64_t doc_seed = derive_seed(o.seed, id.str());
    Rng rng(splitmix64(doc_seed ^ 0x5eedULL));
    int horizon = o.horizon;
    if (o.horizon_max > o.horizon) {
      horizon = std::uniform_int_distribution<int>(o.horizon, o.horizon_max)(rng);
    }
    std::normal_distribution<double> normal(0.0, 1.0);
    Vector s0 = Vector::Zero(o.d), sT = Vector::Zero(o.d);
    if (endpoint_scale > 0.0) {
      for (int k = 0; k < o.d; ++k) s0(k) = endpoint_scale * normal(rng);
      for (int k = 0; k < o.d; ++k) sT(k) = endpoint_scale * normal(rng);
    }
    LatentTrajectory traj = sample_bridge(o.d, horizon, sigma, s0, sT, doc_seed, id.str(), o.domain);
    if (mixing) traj = LatentTrajectory(traj.id(), traj.domain(), *mixing * traj.points());
    records.push_back({std::move(traj), o.label.empty() ? std::nullopt : std::optional(o.label)});
  }

  const json header = io::trajectory_header(
      {{"generator",
        {{"command", "simulate"}, {"d", o.d}, {"T", o.horizon}, {"T_max", o.horizon_max},
         {"n", o.n}, {"sigma", o.sigma}, {"endpoints", o.endpoints}, {"mix", o.mix},
         {"domain", o.domain}, {"seed", o.seed}}}});
  if (!o.out.empty()) io::write_trajectory_file(o.out, header, records);
  if (mixing && !o.mix_inverse_out.empty()) {
    io::write_encoder(o.mix_inverse_out, LinearEncoder(mixing->inverse()));
  }
  log << "simulate seed=" << o.seed << " d=" << o.d << " T=" << o.horizon << " n=" << o.n
      << " sigma=" << o.sigma << " -> " << (o.out.empty() ? "(memory)" : o.out) << '\n';
  return records;
}

// ---------------------------------------------------------------------------
// fit

struct FitOptions {
  std::string in;
  std::string domain;  // empty: all records
  double epsilon = 1e-7;
  std::string out;
  std::string truth;   // optional sigma spec for an error report
};

struct FitSummary {
  io::SigmaModel model;
  double log_det = 0.0;
  double trace = 0.0;
  double sigma2 = 0.0;
  std::optional<double> relative_error;
};

inline std::vector<LatentTrajectory> filter_domain(const io::TrajectoryFile& file,
                                                   const std::string& domain) {
  std::vector<LatentTrajectory> out;
  for (const auto& r : file.records) {
    if (domain.empty() || r.trajectory.domain() == domain) out.push_back(r.trajectory);
  }
  return out;
}

inline FitSummary fit(const FitOptions& o, std::ostream& log) {
  const auto file = io::read_trajectory_file(o.in);
  const auto trajs = filter_domain(file, o.domain);
  if (trajs.empty()) {
    throw InsufficientData("no trajectories" +
                           (o.domain.empty() ? std::string() : " in domain '" + o.domain + "'") +
                           " in '" + o.in + "'");
  }
  auto est = shrunk_mle(trajs, o.epsilon);

  FitSummary s;
  s.model.domain = o.domain.empty() ? trajs.front().domain() : o.domain;
  if (o.domain.empty()) {
    for (const auto& t : trajs) {
      if (t.domain() != s.model.domain) {
        s.model.domain = "*";
        break;
      }
    }
  }
  s.model.weight = est.weight;
  s.model.epsilon = o.epsilon;
  s.model.sigma = std::move(est.sigma);
  s.model.source_corpus_digest = file.digest;
  s.log_det = s.model.sigma.sigma().log_det();
  s.trace = s.model.sigma.matrix().trace();
  s.sigma2 = est.sigma2;
  if (!o.truth.empty()) {
    const auto truth = parse_sigma_spec(o.truth, s.model.dim());
    s.relative_error = relative_frobenius(s.model.sigma.matrix(), truth.matrix());
  }
  if (!o.out.empty()) io::write_sigma_model(o.out, s.model);

  log << std::setprecision(10);
  log << "fit domain=" << s.model.domain << " d=" << s.model.dim() << " weight=" << s.model.weight
      << " epsilon=" << o.epsilon << '\n'
      << "log_det=" << s.log_det << " trace=" << s.trace << " sigma2=" << s.sigma2 << '\n';
  if (s.relative_error) log << "relative_frobenius_error=" << *s.relative_error << '\n';
  return s;
}

// ---------------------------------------------------------------------------
// score

struct ScoreOptions {
  std::string in;
  std::string model;
  std::string out;
  bool in_sample = false;
  bool heuristic = false;
};

struct ScoreSummary {
  std::vector<ScoreReport> reports;
  double mean_bbscore = 0.0;
};

inline ScoreSummary score(const ScoreOptions& o, std::ostream& log) {
  const auto model = io::read_sigma_model(o.model);
  const std::string input_digest = io::file_digest(o.in);
  if (!o.in_sample && input_digest == model.source_corpus_digest) {
    throw ValidationError("model '" + o.model + "' was fitted on '" + o.in +
                          "'; pass --in-sample to score the fitting corpus");
  }
  std::ofstream out;
  if (!o.out.empty()) {
    out.open(o.out);
    if (!out) throw ValidationError("cannot write '" + o.out + "'");
    out << json{{"format", io::kScoreFormat},
                {"created_by", kToolName},
                {"input_digest", input_digest},
                {"model_digest", io::file_digest(o.model)},
                {"in_sample", o.in_sample}}
               .dump()
        << '\n';
  }
  ScoreSummary s;
  io::for_each_record(o.in, [&](io::TrajectoryRecord&& rec) {
    ScoreReport r = bbscore_batch(std::span(&rec.trajectory, 1), model.sigma).front();
    if (o.heuristic) {
      try {
        r.heuristic_score = heuristic_bbscore(rec.trajectory);
      } catch (const DegenerateVariance&) {
        r.heuristic_score.reset();
      }
    }
    if (out.is_open()) out << io::to_json(r).dump() << '\n';
    s.reports.push_back(std::move(r));
  });
  for (const auto& r : s.reports) s.mean_bbscore += r.bbscore;
  if (!s.reports.empty()) s.mean_bbscore /= static_cast<double>(s.reports.size());
  log << std::setprecision(10) << "score n=" << s.reports.size() << " mean_bbscore=" << s.mean_bbscore
      << " model=" << o.model << (o.in_sample ? " (in-sample)" : "") << '\n';
  return s;
}

// ---------------------------------------------------------------------------
// shuffle

struct ShuffleOptions {
  std::string in;
  std::string out;
  ShuffleSpec spec;
};

inline std::vector<LatentTrajectory> shuffle(const ShuffleOptions& o, std::ostream& log) {
  const auto file = io::read_trajectory_file(o.in);
  std::vector<io::TrajectoryRecord> records;
  std::size_t skipped = 0;
  for (const auto& r : file.records) {
    try {
      for (auto& c : make_shuffle_set(r.trajectory, o.spec)) records.push_back({std::move(c), r.label});
    } catch (const NoNontrivialPermutation&) {
      ++skipped;
    } catch (const InfeasibleWindows&) {
      ++skipped;
    }
  }
  if (!o.out.empty()) {
    io::write_trajectory_file(
        o.out,
        io::trajectory_header({{"generator",
                                {{"command", "shuffle"}, {"kind", shuffle_tag(o.spec)},
                                 {"copies", o.spec.copies}, {"seed", o.spec.seed},
                                 {"source_digest", file.digest}}}}),
        records);
  }
  log << "shuffle seed=" << o.spec.seed << " kind=" << shuffle_tag(o.spec)
      << " documents=" << file.records.size() << " copies=" << records.size()
      << " skipped=" << skipped << '\n';
  std::vector<LatentTrajectory> out;
  for (auto& r : records) out.push_back(std::move(r.trajectory));
  return out;
}

// ---------------------------------------------------------------------------
// discriminate

struct DiscriminateOptions {
  std::string in;
  std::string model;
  std::string out;  // optional JSON-lines table
  RunConfig config;
  bool per_document = false;
  bool global = true;
  bool local = true;
};

struct DiscriminationRow {
  std::string task;
  int parameter = 0;
  std::size_t documents = 0;
  std::size_t skipped = 0;
  long long pairs = 0;
  std::optional<double> accuracy;
};

inline DiscriminationRow run_discrimination(std::span<const LatentTrajectory> docs,
                                            const ShuffleSpec& spec,
                                            const SpatialCovariance& sigma, bool use_pvalue,
                                            Aggregation agg) {
  DiscriminationRow row;
  row.task = spec.kind == ShuffleSpec::Kind::global_block ? "global" : "local";
  row.parameter = spec.kind == ShuffleSpec::Kind::global_block ? spec.block_size : spec.num_windows;
  std::vector<ShuffleGroup> groups;
  for (const auto& d : docs) {
    try {
      groups.push_back({d, make_shuffle_set(d, spec)});
      row.pairs += static_cast<long long>(groups.back().copies.size());
      ++row.documents;
    } catch (const NoNontrivialPermutation&) {
      ++row.skipped;
    } catch (const InfeasibleWindows&) {
      ++row.skipped;
    }
  }
  if (row.pairs > 0) row.accuracy = discrimination_accuracy(groups, sigma, use_pvalue, agg);
  return row;
}

inline std::vector<DiscriminationRow> discriminate(const DiscriminateOptions& o, std::ostream& log) {
  o.config.validate();
  const auto file = io::read_trajectory_file(o.in);
  const auto model = io::read_sigma_model(o.model);
  const auto docs = file.trajectories();
  if (docs.empty()) throw EmptySet("no documents in '" + o.in + "'");
  const Aggregation agg = o.per_document ? Aggregation::per_document : Aggregation::pooled;

  std::vector<DiscriminationRow> rows;
  if (o.global) {
    for (int b : o.config.block_sizes) {
      ShuffleSpec spec{ShuffleSpec::Kind::global_block, b, 1, o.config.window_size, o.config.copies,
                       o.config.seed};
      rows.push_back(run_discrimination(docs, spec, model.sigma, o.config.use_pvalue, agg));
    }
  }
  if (o.local) {
    for (int w : o.config.windows) {
      ShuffleSpec spec{ShuffleSpec::Kind::local_window, 1, w, o.config.window_size, o.config.copies,
                       o.config.seed};
      rows.push_back(run_discrimination(docs, spec, model.sigma, o.config.use_pvalue, agg));
    }
  }

  log << "discriminate seed=" << o.config.seed << " score=" << (o.config.use_pvalue ? "p-value" : "bbscore")
      << " aggregation=" << (o.per_document ? "per-document" : "pooled") << '\n';
  log << std::left << std::setw(8) << "task" << std::setw(8) << "param" << std::setw(8) << "docs"
      << std::setw(10) << "pairs" << "accuracy(%)" << '\n';
  for (const auto& r : rows) {
    log << std::left << std::setw(8) << r.task
        << std::setw(8) << ((r.task == "global" ? "b=" : "w=") + std::to_string(r.parameter))
        << std::setw(8) << r.documents << std::setw(10) << r.pairs;
    if (r.accuracy) {
      log << std::fixed << std::setprecision(2) << 100.0 * *r.accuracy << std::defaultfloat;
    } else {
      log << "n/a";
    }
    log << '\n';
  }
  if (!o.out.empty()) {
    std::ofstream out(o.out);
    if (!out) throw ValidationError("cannot write '" + o.out + "'");
    out << json{{"format", "bbridge-discrimination"}, {"created_by", kToolName},
                {"input_digest", file.digest}, {"model_digest", io::file_digest(o.model)},
                {"seed", o.config.seed}}
               .dump()
        << '\n';
    for (const auto& r : rows) {
      json j = {{"task", r.task}, {"param", r.parameter}, {"documents", r.documents},
                {"skipped", r.skipped}, {"pairs", r.pairs}};
      j["accuracy"] = r.accuracy ? json(*r.accuracy) : json(nullptr);
      out << j.dump() << '\n';
    }
  }
  return rows;
}

// ---------------------------------------------------------------------------
// relative

struct RelativeOptions {
  std::string a;
  std::string b;
  std::string model;
  // "a-more-coherent" (every A item beats every B item) or "labels".
  std::string truth = "a-more-coherent";
  std::vector<std::string> labels;  // least to most coherent, for truth=labels
  bool use_pvalue = false;
  std::uint64_t seed = 0;
};

inline std::vector<int> label_indices(const io::TrajectoryFile& f,
                                      const std::vector<std::string>& order,
                                      const std::string& path) {
  std::vector<int> out;
  for (const auto& r : f.records) {
    if (!r.label) throw ValidationError(path + ": record '" + r.trajectory.id() + "' has no label");
    const auto it = std::find(order.begin(), order.end(), *r.label);
    if (it == order.end()) {
      throw ValidationError(path + ": label '" + *r.label + "' of '" + r.trajectory.id() +
                            "' is not in --labels");
    }
    out.push_back(static_cast<int>(it - order.begin()));
  }
  return out;
}

inline double relative(const RelativeOptions& o, std::ostream& log) {
  const auto fa = io::read_trajectory_file(o.a);
  const auto fb = io::read_trajectory_file(o.b);
  const auto model = io::read_sigma_model(o.model);
  CoherenceOrder order;
  if (o.truth == "a-more-coherent") {
    order = [](std::size_t, std::size_t) { return 1; };
  } else if (o.truth == "labels") {
    if (o.labels.empty()) throw ValidationError("--truth labels requires --labels");
    auto la = label_indices(fa, o.labels, o.a);
    auto lb = label_indices(fb, o.labels, o.b);
    order = [la = std::move(la), lb = std::move(lb)](std::size_t i, std::size_t j) {
      return la[i] > lb[j] ? 1 : (la[i] < lb[j] ? -1 : 0);
    };
  } else {
    throw ValidationError("--truth must be 'a-more-coherent' or 'labels'");
  }
  const double acc = relative_accuracy(fa.trajectories(), fb.trajectories(), order, model.sigma,
                                       o.use_pvalue);
  log << "relative seed=" << o.seed << " truth=" << o.truth
      << " score=" << (o.use_pvalue ? "p-value" : "bbscore") << '\n'
      << "|A|=" << fa.records.size() << " |B|=" << fb.records.size() << " relative_accuracy(%)="
      << std::fixed << std::setprecision(2) << 100.0 * acc << std::defaultfloat << '\n';
  return acc;
}

// ---------------------------------------------------------------------------
// classify

struct ClassifyOptions {
  std::string train;
  std::string test;
  std::string model;
  std::vector<std::string> labels{"low", "medium", "high"};
  bool use_pvalue = false;
  std::uint64_t seed = 0;
};

inline ClassificationResult classify(const ClassifyOptions& o, std::ostream& log) {
  if (o.labels.size() < 2) throw ValidationError("--labels needs at least two classes");
  const auto ftrain = io::read_trajectory_file(o.train);
  const auto ftest = io::read_trajectory_file(o.test);
  const auto model = io::read_sigma_model(o.model);
  LabeledCorpus train{o.labels, {}, {}}, test{o.labels, {}, {}};
  const auto ltrain = label_indices(ftrain, o.labels, o.train);
  const auto ltest = label_indices(ftest, o.labels, o.test);
  for (std::size_t i = 0; i < ftrain.records.size(); ++i) {
    train.items.push_back(ftrain.records[i].trajectory);
    train.labels.push_back(ltrain[i]);
  }
  for (std::size_t i = 0; i < ftest.records.size(); ++i) {
    test.items.push_back(ftest.records[i].trajectory);
    test.labels.push_back(ltest[i]);
  }
  const auto result = threshold_classify(train, test, model.sigma, o.use_pvalue);

  const std::size_t k = o.labels.size();
  std::vector<std::vector<int>> confusion(k, std::vector<int>(k, 0));
  for (std::size_t i = 0; i < result.predicted.size(); ++i) {
    ++confusion[static_cast<std::size_t>(test.labels[i])][static_cast<std::size_t>(result.predicted[i])];
  }
  log << "classify seed=" << o.seed << " score=" << (o.use_pvalue ? "p-value" : "bbscore")
      << " train=" << train.items.size() << " test=" << test.items.size() << '\n';
  log << std::setprecision(8);
  for (std::size_t t = 0; t < result.thresholds.size(); ++t) {
    log << "threshold " << o.labels[t] << "|" << o.labels[t + 1] << " = " << result.thresholds[t] << '\n';
  }
  log << "confusion (rows=true, cols=predicted):\n";
  for (std::size_t i = 0; i < k; ++i) {
    log << "  " << std::left << std::setw(10) << o.labels[i];
    for (std::size_t j = 0; j < k; ++j) log << std::setw(6) << confusion[i][j];
    log << '\n';
  }
  log << "spearman=";
  if (result.spearman) {
    log << std::fixed << std::setprecision(4) << *result.spearman << std::defaultfloat;
  } else {
    log << "n/a";
  }
  log << '\n';
  return result;
}

// ---------------------------------------------------------------------------
// compare-domains

struct CompareOptions {
  std::string a;
  std::string b;
  std::string model_a;
  std::string model_b;
  std::string model_ref;
  bool matched = false;
  std::uint64_t seed = 0;
};

inline std::vector<SwapRow> compare_domains(const CompareOptions& o, std::ostream& log) {
  const auto fa = io::read_trajectory_file(o.a);
  const auto fb = io::read_trajectory_file(o.b);
  const auto ma = io::read_sigma_model(o.model_a);
  const auto mb = io::read_sigma_model(o.model_b);
  std::optional<SpatialCovariance> ref;
  if (!o.model_ref.empty()) ref = io::read_sigma_model(o.model_ref).sigma;
  auto rows = domain_swap_compare(fa.trajectories(), fb.trajectories(), ma.sigma, mb.sigma, ref,
                                  o.matched ? Pairing::matched_ids : Pairing::cross_product);
  rows[0].model = "sigma_" + ma.domain;
  rows[1].model = "sigma_" + mb.domain;
  if (ref) rows[2].model = "sigma_ref";
  log << "compare-domains seed=" << o.seed << " pairing=" << (o.matched ? "matched" : "cross") << '\n';
  log << std::left << std::setw(24) << "model" << std::setw(10) << "pairs" << "A_more_coherent(%)" << '\n';
  for (const auto& r : rows) {
    log << std::left << std::setw(24) << r.model << std::setw(10) << r.pairs << std::fixed
        << std::setprecision(2) << 100.0 * r.fraction_a_more_coherent << std::defaultfloat << '\n';
  }
  return rows;
}

// ---------------------------------------------------------------------------
// train

struct TrainOptions {
  std::string in;
  int d_out = 0;                 // 0: same as input dimension
  std::string init = "identity"; // "identity", "random:<seed>" or an encoder file
  double init_noise = 0.0;       // iid N(0, init_noise^2) added to the initial weights
  RunConfig config;
  bool use_sigma_scalar = true;
  std::string out_encoder;
  std::string out_models;        // prefix; writes <prefix><domain>.json
  std::string truth;             // sigma spec to report recovery error against
};

struct TrainSummary {
  TrainResult result;
  std::map<std::string, double> recovery_error;
};

inline TrainSummary train_command(const TrainOptions& o, std::ostream& log) {
  o.config.validate();
  const auto file = io::read_trajectory_file(o.in);
  if (file.records.empty()) throw InsufficientData("no sequences in '" + o.in + "'");
  DomainCorpora corpora;
  for (const auto& r : file.records) corpora[r.trajectory.domain()].push_back(io::to_raw(r.trajectory));
  const int d_in = file.records.front().trajectory.dim();
  const int d_out = o.d_out > 0 ? o.d_out : d_in;

  Matrix w;
  if (o.init == "identity") {
    w = Matrix::Identity(d_out, d_in);
  } else if (auto rest = strip_prefix(o.init, "random:")) {
    Rng rng(parse_u64(*rest, "--init"));
    std::normal_distribution<double> normal(0.0, 1.0 / std::sqrt(double(d_in)));
    w.resize(d_out, d_in);
    for (Eigen::Index j = 0; j < w.cols(); ++j)
      for (Eigen::Index i = 0; i < w.rows(); ++i) w(i, j) = normal(rng);
  } else {
    w = io::read_encoder(o.init).weights();
    if (w.rows() != d_out || w.cols() != d_in) {
      throw DimensionMismatch("initial encoder is " + std::to_string(w.rows()) + "x" +
                              std::to_string(w.cols()) + ", expected " + std::to_string(d_out) +
                              "x" + std::to_string(d_in));
    }
  }
  if (o.init_noise > 0.0) {
    Rng rng(derive_seed(o.config.seed, "init-noise"));
    std::normal_distribution<double> normal(0.0, o.init_noise);
    for (Eigen::Index j = 0; j < w.cols(); ++j)
      for (Eigen::Index i = 0; i < w.rows(); ++i) w(i, j) += normal(rng);
  }

  TrainerState state;
  state.encoder = LinearEncoder(std::move(w));
  state.epsilon = o.config.epsilon;
  state.step_size = o.config.step_size;
  state.batch_size = o.config.batch_size;
  state.triplet_mode = o.config.triplet_mode;
  state.use_sigma_scalar = o.use_sigma_scalar;
  state.seed = o.config.seed;

  TrainSummary s;
  s.result = train(std::move(state), corpora, o.config.epochs);
  if (o.config.epochs == 0) {
    log << "train seed=" << o.config.seed << " epochs=0 (state unchanged)\n";
    return s;
  }
  const auto& st = s.result.state;
  if (!o.truth.empty()) {
    const auto truth = parse_sigma_spec(o.truth, d_out);
    for (const auto& [domain, sig] : st.sigma_hat) {
      s.recovery_error[domain] = relative_frobenius(sig.matrix(), truth.matrix());
    }
  }
  if (!o.out_encoder.empty()) io::write_encoder(o.out_encoder, st.encoder);
  if (!o.out_models.empty()) {
    for (const auto& [domain, sig] : st.sigma_hat) {
      io::SigmaModel m;
      m.domain = domain;
      m.sigma = sig;
      m.epsilon = st.epsilon;
      for (const auto& seq : corpora.at(domain)) m.weight += seq.horizon() - 1;
      m.source_corpus_digest = file.digest;
      io::write_sigma_model(o.out_models + domain + ".json", m);
    }
  }

  log << "train seed=" << o.config.seed << " epochs=" << o.config.epochs
      << " step=" << o.config.step_size << " batch=" << o.config.batch_size
      << " epsilon=" << o.config.epsilon << " triplet=" << (o.config.triplet_mode ? "on" : "off")
      << '\n';
  log << std::left << std::setw(8) << "epoch" << "L_NLL" << '\n' << std::setprecision(12);
  for (std::size_t e = 0; e < s.result.loss_trace.size(); ++e) {
    log << std::left << std::setw(8) << e << s.result.loss_trace[e] << '\n';
  }
  for (const auto& [domain, err] : s.recovery_error) {
    log << "recovery_error[" << domain << "]=" << std::setprecision(6) << err << '\n';
  }
  return s;
}

}  // namespace bbridge::app
