#pragma once

// Coherence evaluation harness over latent trajectories: block and window
// shuffles, original-vs-shuffled discrimination, cross-set relative
// accuracy, threshold discretisation into ordinal classes, and the
// swapped-domain-model comparison of two corpora.
//
// Shuffles permute latent points directly (one point per sentence). Scores
// are compared on a "coherence" axis where larger means more coherent:
// -bbscore by default, the p-value when lengths differ.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "bbridge/bridge.hpp"
#include "bbridge/error.hpp"
#include "bbridge/numerics.hpp"
#include "bbridge/random.hpp"
#include "bbridge/score.hpp"

namespace bbridge {

struct ShuffleSpec {
  enum class Kind { global_block, local_window };

  Kind kind = Kind::global_block;
  int block_size = 1;
  int num_windows = 1;
  int window_size = 3;
  int copies = 20;
  std::uint64_t seed = 0;
};

namespace detail {

inline LatentTrajectory with_order(const LatentTrajectory& traj, const std::vector<int>& order,
                                   std::string id) {
  Matrix pts(traj.points().rows(), traj.points().cols());
  for (std::size_t k = 0; k < order.size(); ++k) {
    pts.col(static_cast<Eigen::Index>(k)) = traj.points().col(order[k]);
  }
  return {std::move(id), traj.domain(), std::move(pts)};
}

template <typename It>
void shuffle_non_identity(It first, It last, Rng& rng) {
  std::vector<typename std::iterator_traits<It>::value_type> before(first, last);
  do {
    std::shuffle(first, last, rng);
  } while (std::equal(first, last, before.begin()));
}

}  // namespace detail

/// Splits the points into consecutive blocks of block_size (the final block
/// may be shorter) and applies a uniformly random non-identity permutation of
/// the blocks.
inline LatentTrajectory global_shuffle(const LatentTrajectory& traj, int block_size,
                                       std::uint64_t seed) {
  const int n = traj.horizon() + 1;
  if (block_size < 1) throw DomainError("global_shuffle: block size must be >= 1");
  if (n < 2 * block_size) {
    throw NoNontrivialPermutation("global_shuffle: " + std::to_string(n) +
                                  " points cannot form two blocks of size " +
                                  std::to_string(block_size));
  }
  std::vector<int> blocks((n + block_size - 1) / block_size);
  std::iota(blocks.begin(), blocks.end(), 0);
  Rng rng(seed);
  detail::shuffle_non_identity(blocks.begin(), blocks.end(), rng);
  std::vector<int> order;
  order.reserve(static_cast<std::size_t>(n));
  for (int b : blocks) {
    for (int i = b * block_size; i < std::min(n, (b + 1) * block_size); ++i) order.push_back(i);
  }
  return detail::with_order(traj, order, traj.id());
}

/// Places num_windows disjoint windows of window_size points uniformly at
/// random and gives each a non-identity internal permutation; points outside
/// the windows keep their positions.
inline LatentTrajectory local_shuffle(const LatentTrajectory& traj, int num_windows,
                                      int window_size, std::uint64_t seed) {
  const int n = traj.horizon() + 1;
  if (window_size < 2) throw DomainError("local_shuffle: window size must be >= 2");
  if (num_windows < 1) throw DomainError("local_shuffle: need at least one window");
  if (static_cast<long long>(num_windows) * window_size > n) {
    throw InfeasibleWindows("local_shuffle: " + std::to_string(num_windows) + " windows of " +
                            std::to_string(window_size) + " do not fit in " + std::to_string(n) +
                            " points");
  }
  Rng rng(seed);
  // Disjoint placements <-> choosing num_windows of n - num_windows*(size-1) slots.
  const int slots = n - num_windows * (window_size - 1);
  std::vector<int> pool(static_cast<std::size_t>(slots));
  std::iota(pool.begin(), pool.end(), 0);
  for (int k = 0; k < num_windows; ++k) {
    std::uniform_int_distribution<int> pick(k, slots - 1);
    std::swap(pool[static_cast<std::size_t>(k)], pool[static_cast<std::size_t>(pick(rng))]);
  }
  std::sort(pool.begin(), pool.begin() + num_windows);

  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  for (int k = 0; k < num_windows; ++k) {
    const int start = pool[static_cast<std::size_t>(k)] + k * (window_size - 1);
    detail::shuffle_non_identity(order.begin() + start, order.begin() + start + window_size, rng);
  }
  return detail::with_order(traj, order, traj.id());
}

inline std::string shuffle_tag(const ShuffleSpec& spec) {
  if (spec.kind == ShuffleSpec::Kind::global_block) return "g" + std::to_string(spec.block_size);
  return "l" + std::to_string(spec.num_windows) + "x" + std::to_string(spec.window_size);
}

/// Up to spec.copies shuffled copies with duplicates (and anything equal to
/// the original) discarded. Copy k is drawn from a seed derived from
/// (spec.seed, traj id, k), so results do not depend on corpus order.
inline std::vector<LatentTrajectory> make_shuffle_set(const LatentTrajectory& traj,
                                                      const ShuffleSpec& spec) {
  if (spec.copies < 1) throw DomainError("make_shuffle_set: copies must be >= 1");
  std::vector<LatentTrajectory> out;
  const std::string tag = shuffle_tag(spec);
  for (int k = 0; k < spec.copies; ++k) {
    const std::uint64_t seed =
        derive_seed(spec.seed, traj.id() + "/" + tag, static_cast<std::uint64_t>(k));
    LatentTrajectory copy = spec.kind == ShuffleSpec::Kind::global_block
                                ? global_shuffle(traj, spec.block_size, seed)
                                : local_shuffle(traj, spec.num_windows, spec.window_size, seed);
    if (copy.points() == traj.points()) continue;
    const bool seen = std::any_of(out.begin(), out.end(), [&](const LatentTrajectory& other) {
      return other.points() == copy.points();
    });
    if (seen) continue;
    out.emplace_back(traj.id() + "/" + tag + "/" + std::to_string(k), traj.domain(),
                     copy.points());
  }
  return out;
}

/// Larger is more coherent.
inline double coherence_value(const ScoreReport& r, bool use_pvalue) {
  return use_pvalue ? r.p_value : -r.bbscore;
}

struct ShuffleGroup {
  LatentTrajectory original;
  std::vector<LatentTrajectory> copies;
};

enum class Aggregation { pooled, per_document };

/// Fraction of (original, copy) pairs where the original is strictly more
/// coherent; ties earn half credit.
inline double discrimination_accuracy(std::span<const ShuffleGroup> groups,
                                      const SpatialCovariance& spatial, bool use_pvalue,
                                      Aggregation aggregation = Aggregation::pooled) {
  double credit = 0.0;
  long long pairs = 0;
  double doc_sum = 0.0;
  long long docs = 0;
  for (const auto& group : groups) {
    if (group.copies.empty()) continue;
    const double base = coherence_value(bbscore(group.original, spatial), use_pvalue);
    double group_credit = 0.0;
    for (const auto& copy : group.copies) {
      const double c = coherence_value(bbscore(copy, spatial), use_pvalue);
      group_credit += base > c ? 1.0 : (base == c ? 0.5 : 0.0);
    }
    credit += group_credit;
    pairs += static_cast<long long>(group.copies.size());
    doc_sum += group_credit / static_cast<double>(group.copies.size());
    ++docs;
  }
  if (pairs == 0) throw EmptySet("discrimination: no (original, shuffled) pairs");
  return aggregation == Aggregation::pooled ? credit / static_cast<double>(pairs)
                                            : doc_sum / static_cast<double>(docs);
}

inline std::vector<ShuffleGroup> make_shuffle_groups(std::span<const LatentTrajectory> originals,
                                                     const ShuffleSpec& spec) {
  std::vector<ShuffleGroup> groups;
  groups.reserve(originals.size());
  for (const auto& traj : originals) groups.push_back({traj, make_shuffle_set(traj, spec)});
  return groups;
}

inline double discrimination_accuracy(std::span<const LatentTrajectory> originals,
                                      const ShuffleSpec& spec, const SpatialCovariance& spatial,
                                      bool use_pvalue,
                                      Aggregation aggregation = Aggregation::pooled) {
  if (originals.empty()) throw EmptySet("discrimination: empty corpus");
  const auto groups = make_shuffle_groups(originals, spec);
  return discrimination_accuracy(groups, spatial, use_pvalue, aggregation);
}

/// Ground-truth coherence relation between a in set A and b in set B:
/// +1 when a is more coherent, -1 when less, 0 for ties (excluded).
using CoherenceOrder = std::function<int(std::size_t a, std::size_t b)>;

/// Fraction of non-tied cross pairs whose coherence-axis ordering agrees
/// strictly with the ground truth.
inline double relative_accuracy_from_values(std::span<const double> coherence_a,
                                            std::span<const double> coherence_b,
                                            const CoherenceOrder& order) {
  if (coherence_a.empty() || coherence_b.empty()) throw EmptySet("relative accuracy: empty set");
  long long hits = 0;
  long long total = 0;
  for (std::size_t i = 0; i < coherence_a.size(); ++i) {
    for (std::size_t j = 0; j < coherence_b.size(); ++j) {
      const int truth = order(i, j);
      if (truth == 0) continue;
      ++total;
      if ((truth > 0 && coherence_a[i] > coherence_b[j]) ||
          (truth < 0 && coherence_a[i] < coherence_b[j])) {
        ++hits;
      }
    }
  }
  if (total == 0) throw EmptySet("relative accuracy: every ground-truth pair is a tie");
  return static_cast<double>(hits) / static_cast<double>(total);
}

inline std::vector<double> coherence_values(std::span<const LatentTrajectory> trajs,
                                            const SpatialCovariance& spatial, bool use_pvalue) {
  std::vector<double> out;
  out.reserve(trajs.size());
  for (const auto& r : bbscore_batch(trajs, spatial)) out.push_back(coherence_value(r, use_pvalue));
  return out;
}

inline double relative_accuracy(std::span<const LatentTrajectory> set_a,
                                std::span<const LatentTrajectory> set_b,
                                const CoherenceOrder& order, const SpatialCovariance& spatial,
                                bool use_pvalue = false) {
  if (set_a.empty() || set_b.empty()) throw EmptySet("relative accuracy: empty set");
  const auto ca = coherence_values(set_a, spatial, use_pvalue);
  const auto cb = coherence_values(set_b, spatial, use_pvalue);
  return relative_accuracy_from_values(ca, cb, order);
}

// ---------------------------------------------------------------------------
// Threshold classification

/// Trajectories with ordinal labels; label_order lists labels from least to
/// most coherent and labels[i] indexes into it.
struct LabeledCorpus {
  std::vector<std::string> label_order;
  std::vector<LatentTrajectory> items;
  std::vector<int> labels;

  void add(LatentTrajectory traj, const std::string& label) {
    const auto it = std::find(label_order.begin(), label_order.end(), label);
    if (it == label_order.end()) {
      throw ValidationError("label '" + label + "' of '" + traj.id() +
                            "' is not in the declared label set");
    }
    items.push_back(std::move(traj));
    labels.push_back(static_cast<int>(it - label_order.begin()));
  }
};

/// Thresholds tau_k separating label k from k+1 on the coherence axis
/// (predict k+1 when value > tau_k). Each tau_k maximises training accuracy
/// over items labelled k or k+1; candidates are -inf, the midpoints between
/// consecutive distinct values, and +inf, and the first maximiser wins.
/// Thresholds are made non-decreasing.
inline std::vector<double> fit_thresholds(std::span<const double> values,
                                          std::span<const int> labels, int num_labels) {
  if (values.size() != labels.size()) throw LengthMismatch("fit_thresholds: size mismatch");
  constexpr double inf = std::numeric_limits<double>::infinity();
  std::vector<double> thresholds;
  for (int k = 0; k + 1 < num_labels; ++k) {
    std::vector<std::pair<double, int>> pts;  // (value, 1 if upper class)
    for (std::size_t i = 0; i < values.size(); ++i) {
      if (labels[i] == k || labels[i] == k + 1) pts.emplace_back(values[i], labels[i] == k + 1);
    }
    std::sort(pts.begin(), pts.end());
    double tau = thresholds.empty() ? -inf : thresholds.back();
    if (!pts.empty()) {
      // Sweep: threshold below index p classifies pts[p..] as upper.
      long long upper_total = 0;
      for (const auto& p : pts) upper_total += p.second;
      long long lower_below = 0, upper_below = 0;
      long long best = upper_total;  // tau = -inf: everything upper
      double best_tau = -inf;
      for (std::size_t p = 0; p < pts.size(); ++p) {
        (pts[p].second ? upper_below : lower_below) += 1;
        const bool boundary = p + 1 == pts.size() || pts[p + 1].first != pts[p].first;
        if (!boundary) continue;
        const long long correct = lower_below + (upper_total - upper_below);
        if (correct > best) {
          best = correct;
          best_tau = p + 1 == pts.size() ? inf : 0.5 * (pts[p].first + pts[p + 1].first);
        }
      }
      tau = best_tau;
    }
    if (!thresholds.empty()) tau = std::max(tau, thresholds.back());
    thresholds.push_back(tau);
  }
  return thresholds;
}

inline int predict_label(double value, std::span<const double> thresholds) {
  return static_cast<int>(std::count_if(thresholds.begin(), thresholds.end(),
                                        [&](double tau) { return value > tau; }));
}

struct ClassificationResult {
  std::vector<int> predicted;
  std::vector<double> thresholds;
  // Absent when predictions or test labels are constant.
  std::optional<double> spearman;
};

inline ClassificationResult threshold_classify_values(std::span<const double> train_values,
                                                      std::span<const int> train_labels,
                                                      std::span<const double> test_values,
                                                      std::span<const int> test_labels,
                                                      int num_labels) {
  std::vector<int> distinct(train_labels.begin(), train_labels.end());
  std::sort(distinct.begin(), distinct.end());
  distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
  if (distinct.size() < 2) {
    throw DegenerateLabels("threshold classification needs at least two distinct training labels");
  }
  ClassificationResult out;
  out.thresholds = fit_thresholds(train_values, train_labels, num_labels);
  std::vector<double> pred, truth;
  for (std::size_t i = 0; i < test_values.size(); ++i) {
    out.predicted.push_back(predict_label(test_values[i], out.thresholds));
    pred.push_back(out.predicted.back());
    truth.push_back(test_labels[i]);
  }
  try {
    out.spearman = spearman_rho(pred, truth);
  } catch (const DegenerateInput&) {
    out.spearman.reset();
  }
  return out;
}

inline ClassificationResult threshold_classify(const LabeledCorpus& train, const LabeledCorpus& test,
                                               const SpatialCovariance& spatial,
                                               bool use_pvalue = false) {
  if (train.label_order != test.label_order) {
    throw ValidationError("train and test corpora declare different label sets");
  }
  const auto tv = coherence_values(train.items, spatial, use_pvalue);
  const auto sv = coherence_values(test.items, spatial, use_pvalue);
  return threshold_classify_values(tv, train.labels, sv, test.labels,
                                   static_cast<int>(train.label_order.size()));
}

// ---------------------------------------------------------------------------
// Swapped-model comparison

enum class Pairing { cross_product, matched_ids };

struct SwapRow {
  std::string model;
  // Fraction of pairs (a, b) with bbscore(a) < bbscore(b); ties count half.
  double fraction_a_more_coherent = 0.0;
  long long pairs = 0;
};

inline SwapRow compare_under(const std::string& name, std::span<const LatentTrajectory> corpus_a,
                             std::span<const LatentTrajectory> corpus_b,
                             const SpatialCovariance& spatial, Pairing pairing) {
  const auto sa = bbscore_batch(corpus_a, spatial);
  const auto sb = bbscore_batch(corpus_b, spatial);
  double credit = 0.0;
  long long pairs = 0;
  auto tally = [&](const ScoreReport& a, const ScoreReport& b) {
    credit += a.bbscore < b.bbscore ? 1.0 : (a.bbscore == b.bbscore ? 0.5 : 0.0);
    ++pairs;
  };
  if (pairing == Pairing::cross_product) {
    for (const auto& a : sa)
      for (const auto& b : sb) tally(a, b);
  } else {
    std::map<std::string, const ScoreReport*> by_id;
    for (const auto& b : sb) by_id.emplace(b.trajectory_id, &b);
    for (const auto& a : sa) {
      if (auto it = by_id.find(a.trajectory_id); it != by_id.end()) tally(a, *it->second);
    }
  }
  if (pairs == 0) throw EmptySet("domain comparison: no pairs to compare");
  return {name, credit / static_cast<double>(pairs), pairs};
}

/// Scores both corpora under each supplied model (A's, B's and an optional
/// reference) and reports how often A looks more coherent than B.
inline std::vector<SwapRow> domain_swap_compare(std::span<const LatentTrajectory> corpus_a,
                                                std::span<const LatentTrajectory> corpus_b,
                                                const SpatialCovariance& sigma_a,
                                                const SpatialCovariance& sigma_b,
                                                const std::optional<SpatialCovariance>& sigma_ref = {},
                                                Pairing pairing = Pairing::cross_product) {
  std::vector<SwapRow> rows;
  rows.push_back(compare_under("sigma_a", corpus_a, corpus_b, sigma_a, pairing));
  rows.push_back(compare_under("sigma_b", corpus_a, corpus_b, sigma_b, pairing));
  if (sigma_ref) rows.push_back(compare_under("sigma_ref", corpus_a, corpus_b, *sigma_ref, pairing));
  return rows;
}

}  // namespace bbridge
