#pragma once

// Trainable encoder f(x) = W x with the two bridge training objectives:
//
//  * the in-batch contrastive loss, where each anchor triplet's middle point
//    competes against every other batch member's middle point substituted
//    into the anchor's bridge;
//  * the multi-domain negative log-likelihood procedure: gradient steps on
//    the within-batch trace loss with a frozen per-domain Sigma_j, then a
//    shrunk MLE refit of Sigma_j, domain by domain.
//
// Because f is linear, the residuals of the encoded sequence are W times the
// residuals of the raw sequence, and every gradient has a closed form.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "bbridge/bridge.hpp"
#include "bbridge/error.hpp"
#include "bbridge/numerics.hpp"
#include "bbridge/random.hpp"

namespace bbridge {

class LinearEncoder {
 public:
  LinearEncoder() = default;
  explicit LinearEncoder(Matrix weights) : weights_(std::move(weights)) {
    if (weights_.rows() < 1 || weights_.cols() < 1) {
      throw DomainError("LinearEncoder: weights must be at least 1x1");
    }
    if (!weights_.allFinite()) throw DomainError("LinearEncoder: non-finite weight");
  }

  static LinearEncoder identity(int dim) { return LinearEncoder(Matrix::Identity(dim, dim)); }

  int d_in() const { return static_cast<int>(weights_.cols()); }
  int d_out() const { return static_cast<int>(weights_.rows()); }
  const Matrix& weights() const { return weights_; }

 private:
  Matrix weights_;
};

/// One raw document: T+1 input vectors stored column-wise (d_in x (T+1)).
struct RawSequence {
  RawSequence() = default;
  RawSequence(std::string id_, std::string domain_, Matrix inputs_)
      : id(std::move(id_)), domain(std::move(domain_)), inputs(std::move(inputs_)) {
    if (inputs.rows() < 1 || inputs.cols() < 3) {
      throw DomainError("raw sequence '" + id + "': need d_in >= 1 and at least 3 points");
    }
    if (!inputs.allFinite()) throw DomainError("raw sequence '" + id + "': non-finite input");
  }

  int horizon() const { return static_cast<int>(inputs.cols()) - 1; }

  std::string id;
  std::string domain;
  Matrix inputs;
};

inline LatentTrajectory encode(const LinearEncoder& enc, const RawSequence& raw) {
  if (raw.inputs.rows() != enc.d_in()) {
    throw DimensionMismatch("encode '" + raw.id + "': input dimension " +
                            std::to_string(raw.inputs.rows()) + " but encoder expects " +
                            std::to_string(enc.d_in()));
  }
  return {raw.id, raw.domain, enc.weights() * raw.inputs};
}

inline std::vector<LatentTrajectory> encode_all(const LinearEncoder& enc,
                                                std::span<const RawSequence> raws) {
  std::vector<LatentTrajectory> out;
  out.reserve(raws.size());
  for (const auto& r : raws) out.push_back(encode(enc, r));
  return out;
}

// ---------------------------------------------------------------------------
// Contrastive loss

/// Positions (first, middle, last) of a positive triplet within a sequence.
/// The usual choice is (0, t, T).
struct Triplet {
  int first = 0;
  int middle = 1;
  int last = 2;
};

struct ClExample {
  std::reference_wrapper<const RawSequence> sequence;
  Triplet triplet;
};

namespace detail {

struct ClAnchor {
  Vector base;       // (1 - a) x_first + a x_last
  Vector middle;     // x_middle
  double variance;   // (m - f)(l - m) / (l - f)
};

inline std::vector<ClAnchor> cl_anchors(const LinearEncoder& enc,
                                        std::span<const ClExample> batch) {
  if (batch.empty()) throw EmptyBatch("contrastive loss: empty batch");
  std::vector<ClAnchor> anchors;
  anchors.reserve(batch.size());
  for (const auto& ex : batch) {
    const RawSequence& seq = ex.sequence.get();
    const auto [f, m, l] = ex.triplet;
    if (!(0 <= f && f < m && m < l && l <= seq.horizon())) {
      throw InvalidTriplet("sequence '" + seq.id + "': triplet (" + std::to_string(f) + ", " +
                           std::to_string(m) + ", " + std::to_string(l) +
                           ") is not strictly increasing within 0.." +
                           std::to_string(seq.horizon()));
    }
    if (seq.inputs.rows() != enc.d_in()) {
      throw DimensionMismatch("sequence '" + seq.id + "': input dimension mismatch");
    }
    const double span = l - f;
    const double a = (m - f) / span;
    anchors.push_back({(1.0 - a) * seq.inputs.col(f) + a * seq.inputs.col(l),
                       seq.inputs.col(m), (m - f) * (l - m) / span});
  }
  return anchors;
}

// logits(i, j) = -|W (x_mid_j - base_i)|^2 / (2 var_i)
inline Matrix cl_logits(const LinearEncoder& enc, const std::vector<ClAnchor>& anchors) {
  const auto n = static_cast<Eigen::Index>(anchors.size());
  Matrix logits(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      const Vector z = enc.weights() * (anchors[j].middle - anchors[i].base);
      logits(i, j) = -z.squaredNorm() / (2.0 * anchors[i].variance);
    }
  }
  return logits;
}

inline double log_sum_exp(const Eigen::Ref<const Vector>& v) {
  const double mx = v.maxCoeff();
  return mx + std::log((v.array() - mx).exp().sum());
}

}  // namespace detail

/// Mean over anchors of -log softmax of the positive among all in-batch
/// candidates.
inline double cl_loss(const LinearEncoder& enc, std::span<const ClExample> batch) {
  const auto anchors = detail::cl_anchors(enc, batch);
  const Matrix logits = detail::cl_logits(enc, anchors);
  double total = 0.0;
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    total += detail::log_sum_exp(logits.row(i).transpose()) - logits(i, i);
  }
  return total / static_cast<double>(logits.rows());
}

inline Matrix cl_gradient(const LinearEncoder& enc, std::span<const ClExample> batch) {
  const auto anchors = detail::cl_anchors(enc, batch);
  const Matrix logits = detail::cl_logits(enc, anchors);
  const auto n = logits.rows();
  Matrix grad = Matrix::Zero(enc.d_out(), enc.d_in());
  for (Eigen::Index i = 0; i < n; ++i) {
    const double lse = detail::log_sum_exp(logits.row(i).transpose());
    for (Eigen::Index j = 0; j < n; ++j) {
      const double weight = std::exp(logits(i, j) - lse) - (i == j ? 1.0 : 0.0);
      if (weight == 0.0) continue;
      const Vector u = anchors[j].middle - anchors[i].base;
      // d logit / dW = -(W u) u^T / var
      grad -= (weight / anchors[i].variance) * (enc.weights() * u) * u.transpose();
    }
  }
  return grad / static_cast<double>(n);
}

// ---------------------------------------------------------------------------
// Negative log-likelihood

/// Three interior indices 1 <= a < b < c <= T-1.
struct InteriorTriple {
  int a = 1;
  int b = 2;
  int c = 3;
};

/// Uniform over all strictly increasing interior triples.
inline InteriorTriple sample_interior_triple(int horizon, Rng& rng) {
  if (horizon < 4) {
    throw TripletInfeasible("triplet mode needs T >= 4, got T=" + std::to_string(horizon));
  }
  std::vector<int> pool(static_cast<std::size_t>(horizon - 1));
  std::iota(pool.begin(), pool.end(), 1);
  for (int k = 0; k < 3; ++k) {
    std::uniform_int_distribution<std::size_t> pick(static_cast<std::size_t>(k), pool.size() - 1);
    std::swap(pool[static_cast<std::size_t>(k)], pool[pick(rng)]);
  }
  std::sort(pool.begin(), pool.begin() + 3);
  return {pool[0], pool[1], pool[2]};
}

namespace detail {

// Raw-space statistic Q = X_r K^{-1} X_r^T for one sequence, where X_r are the
// chord residuals of the raw inputs (restricted to the triple when given) and
// K the matching block of Sigma_T. The encoded trace term is tr(S^{-1} W Q W^T).
inline Matrix raw_scatter(const RawSequence& seq, const std::optional<InteriorTriple>& triple) {
  const Matrix res = chord_residuals(seq.inputs);
  if (!triple) return residual_scatter(res, temporal_cov(seq.horizon())->cov);
  const auto [a, b, c] = *triple;
  const int T = seq.horizon();
  if (!(1 <= a && a < b && b < c && c <= T - 1)) {
    throw InvalidTriplet("sequence '" + seq.id + "': interior triple out of range");
  }
  const std::array<int, 3> idx{a, b, c};
  Matrix sub_res(res.rows(), 3);
  Matrix sub_cov(3, 3);
  for (int i = 0; i < 3; ++i) {
    sub_res.col(i) = res.col(idx[i] - 1);
    for (int j = 0; j < 3; ++j) {
      const double s = std::min(idx[i], idx[j]);
      const double t = std::max(idx[i], idx[j]);
      sub_cov(i, j) = s * (T - t) / T;
    }
  }
  return residual_scatter(sub_res, SpdMatrix(sub_cov));
}

inline Matrix batch_raw_scatter(const LinearEncoder& enc, std::span<const RawSequence> batch,
                                const SpatialCovariance& sigma_hat, bool triplet_mode,
                                std::uint64_t triplet_seed) {
  if (batch.empty()) throw EmptyBatch("NLL loss: empty batch");
  if (sigma_hat.dim() != enc.d_out()) {
    throw DimensionMismatch("NLL loss: Sigma_hat has d=" + std::to_string(sigma_hat.dim()) +
                            " but encoder outputs d=" + std::to_string(enc.d_out()));
  }
  Matrix total = Matrix::Zero(enc.d_in(), enc.d_in());
  for (const auto& seq : batch) {
    if (seq.inputs.rows() != enc.d_in()) {
      throw DimensionMismatch("sequence '" + seq.id + "': input dimension mismatch");
    }
    std::optional<InteriorTriple> triple;
    if (triplet_mode) {
      Rng rng(derive_seed(triplet_seed, seq.id));
      triple = sample_interior_triple(seq.horizon(), rng);
    }
    total += raw_scatter(seq, triple);
  }
  return total;
}

}  // namespace detail

/// Trace loss of one sequence, optionally restricted to an interior triple.
inline double nll_sequence_term(const LinearEncoder& enc, const RawSequence& seq,
                                const SpatialCovariance& sigma_hat,
                                const std::optional<InteriorTriple>& triple = std::nullopt) {
  if (seq.inputs.rows() != enc.d_in() || sigma_hat.dim() != enc.d_out()) {
    throw DimensionMismatch("sequence '" + seq.id + "': dimension mismatch");
  }
  const Matrix q = detail::raw_scatter(seq, triple);
  const Matrix wq = enc.weights() * q * enc.weights().transpose();
  return sigma_hat.sigma().solve(wq).trace();
}

/// Within-batch trace loss sum_i tr(S^{-1} R_i K_i^{-1} R_i^T). In triplet
/// mode each sequence contributes one uniformly sampled interior triple,
/// drawn from a generator seeded by (triplet_seed, sequence id).
inline double nll_batch_loss(const LinearEncoder& enc, std::span<const RawSequence> batch,
                             const SpatialCovariance& sigma_hat, bool triplet_mode,
                             std::uint64_t triplet_seed = 0) {
  const Matrix q = detail::batch_raw_scatter(enc, batch, sigma_hat, triplet_mode, triplet_seed);
  const Matrix wq = enc.weights() * q * enc.weights().transpose();
  return sigma_hat.sigma().solve(wq).trace();
}

/// d/dW tr(S^{-1} W Q W^T) = 2 S^{-1} W Q (Q symmetric).
inline Matrix nll_gradient(const LinearEncoder& enc, std::span<const RawSequence> batch,
                           const SpatialCovariance& sigma_hat, bool triplet_mode,
                           std::uint64_t triplet_seed = 0) {
  const Matrix q = detail::batch_raw_scatter(enc, batch, sigma_hat, triplet_mode, triplet_seed);
  return 2.0 * sigma_hat.sigma().solve(enc.weights() * q);
}

// ---------------------------------------------------------------------------
// Multi-domain training

struct TrainerState {
  LinearEncoder encoder;
  std::map<std::string, SpatialCovariance> sigma_hat;
  std::map<std::string, double> sigma_scalar;
  double epsilon = 1e-7;
  double step_size = 1e-3;
  int batch_size = 16;
  bool triplet_mode = false;
  // Shrink toward sigma2_j I (true) or toward I (false).
  bool use_sigma_scalar = true;
  std::uint64_t seed = 0;
};

using DomainCorpora = std::map<std::string, std::vector<RawSequence>>;

struct SigmaUpdate {
  SpatialCovariance sigma_hat;
  double sigma2 = 0.0;
  long long weight = 0;
};

/// Shrunk MLE refit for one domain:
///   sigma2 = tr(MLE) / d,  Sigma_j = (1 - eps) MLE + eps sigma2 I.
inline SigmaUpdate update_sigma_hat_full(const TrainerState& state, const std::string& domain,
                                         std::span<const RawSequence> corpus) {
  if (corpus.empty()) throw InsufficientData("domain '" + domain + "' has no sequences");
  for (const auto& seq : corpus) {
    if (seq.domain != domain) {
      throw ValidationError("sequence '" + seq.id + "' belongs to domain '" + seq.domain +
                            "', not '" + domain + "'");
    }
  }
  const auto encoded = encode_all(state.encoder, corpus);
  auto est = shrunk_mle(encoded, state.epsilon, state.use_sigma_scalar);
  return {std::move(est.sigma), est.sigma2, est.weight};
}

inline SpatialCovariance update_sigma_hat(const TrainerState& state, const std::string& domain,
                                          std::span<const RawSequence> corpus) {
  return update_sigma_hat_full(state, domain, corpus).sigma_hat;
}

/// L_NLL = sum_j sum_i (T_i - 1) log|Sigma_j| + tr(Sigma_j^{-1} R_i Sigma_{T_i}^{-1} R_i^T).
inline double total_nll(const LinearEncoder& enc, const DomainCorpora& corpora,
                        const std::map<std::string, SpatialCovariance>& sigma_hat) {
  double total = 0.0;
  for (const auto& [domain, corpus] : corpora) {
    const auto it = sigma_hat.find(domain);
    if (it == sigma_hat.end()) throw ValidationError("no Sigma_hat for domain '" + domain + "'");
    long long weight = 0;
    for (const auto& seq : corpus) weight += seq.horizon() - 1;
    total += static_cast<double>(weight) * it->second.sigma().log_det() +
             nll_batch_loss(enc, corpus, it->second, false);
  }
  return total;
}

struct TrainResult {
  TrainerState state;
  // L_NLL before training followed by one entry per epoch.
  std::vector<double> loss_trace;
};

/// Per epoch and per domain (in domain-name order): shuffled mini-batches of
/// gradient steps on the trace loss with Sigma_j frozen, then a shrunk refit
/// of Sigma_j. Throws Divergence when L_NLL exceeds ten times its initial
/// magnitude.
inline TrainResult train(TrainerState state, const DomainCorpora& corpora, int epochs) {
  if (epochs < 0) throw DomainError("epochs must be >= 0");
  if (epochs == 0) return {std::move(state), {}};
  if (corpora.empty()) throw InsufficientData("no training domains");
  if (!(state.step_size > 0.0)) throw DomainError("step size must be positive");
  if (state.batch_size < 1) throw DomainError("batch size must be >= 1");
  for (const auto& [domain, corpus] : corpora) {
    if (corpus.empty()) throw InsufficientData("domain '" + domain + "' has no sequences");
    if (!state.sigma_hat.contains(domain)) {
      auto upd = update_sigma_hat_full(state, domain, corpus);
      state.sigma_hat.insert_or_assign(domain, std::move(upd.sigma_hat));
      state.sigma_scalar[domain] = upd.sigma2;
    }
  }

  TrainResult result;
  const double initial = total_nll(state.encoder, corpora, state.sigma_hat);
  result.loss_trace.push_back(initial);

  for (int epoch = 0; epoch < epochs; ++epoch) {
    for (const auto& [domain, corpus] : corpora) {
      std::vector<std::size_t> order(corpus.size());
      std::iota(order.begin(), order.end(), std::size_t{0});
      Rng rng(derive_seed(state.seed, domain, static_cast<std::uint64_t>(epoch)));
      std::shuffle(order.begin(), order.end(), rng);

      const auto& sigma = state.sigma_hat.at(domain);
      std::vector<RawSequence> batch;
      std::uint64_t batch_index = 0;
      for (std::size_t start = 0; start < order.size(); start += state.batch_size) {
        batch.clear();
        const std::size_t stop = std::min(order.size(), start + state.batch_size);
        for (std::size_t k = start; k < stop; ++k) batch.push_back(corpus[order[k]]);
        const std::uint64_t triplet_seed =
            splitmix64(derive_seed(state.seed, domain, static_cast<std::uint64_t>(epoch)) +
                       ++batch_index);
        const Matrix grad =
            nll_gradient(state.encoder, batch, sigma, state.triplet_mode, triplet_seed);
        state.encoder = LinearEncoder(state.encoder.weights() - state.step_size * grad);
      }

      auto upd = update_sigma_hat_full(state, domain, corpus);
      state.sigma_hat.insert_or_assign(domain, std::move(upd.sigma_hat));
      state.sigma_scalar[domain] = upd.sigma2;
    }
    const double loss = total_nll(state.encoder, corpora, state.sigma_hat);
    result.loss_trace.push_back(loss);
    if (!std::isfinite(loss) || loss > initial + 9.0 * std::abs(initial)) {
      throw Divergence("training diverged at epoch " + std::to_string(epoch + 1) +
                       ": L_NLL=" + std::to_string(loss) + " (initial " +
                       std::to_string(initial) + ")");
    }
  }
  result.state = std::move(state);
  return result;
}

}  // namespace bbridge
