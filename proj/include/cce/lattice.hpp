#pragma once

// Exact inference for a linear-chain CRF over the 7-label IOB alphabet.
// Transition matrices are 9x9 and index labels 0..6 plus START (7) and STOP (8).
// A path y_1..y_T scores
//   trans(START, y_1) + sum_t emit(t, y_t) + sum_t trans(y_t, y_{t+1}) + trans(y_T, STOP).
// Everything runs in log space on doubles.

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <vector>

#include "cce/corpus.hpp"
#include "cce/error.hpp"
#include "cce/labels.hpp"

namespace cce {

using Lattice = Eigen::Matrix<double, Eigen::Dynamic, static_cast<int>(kNumLabels), Eigen::RowMajor>;
using Transitions = Eigen::Matrix<double, static_cast<int>(kNumStates), static_cast<int>(kNumStates)>;
using LabelMatrix = Eigen::Matrix<double, static_cast<int>(kNumLabels), static_cast<int>(kNumLabels)>;

struct Marginals {
  Lattice node;                    // T x 7
  std::vector<LabelMatrix> edge;   // T-1 of 7 x 7; edge[t](i, j) = P(y_t = i, y_{t+1} = j)
  double log_partition = 0;
};

namespace detail {

inline double log_sum_exp(const double* v, std::size_t n) {
  double m = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i) m = std::max(m, v[i]);
  if (!std::isfinite(m)) return m;
  double s = 0;
  for (std::size_t i = 0; i < n; ++i) s += std::exp(v[i] - m);
  return m + std::log(s);
}

inline void require_nonempty(const Lattice& lattice) {
  if (lattice.rows() == 0) throw DataError("lattice must have at least one position");
}

// alpha(t, j): log-sum of all prefixes ending in label j at t, emission included.
inline Lattice forward(const Lattice& emit, const Transitions& trans) {
  const auto T = emit.rows();
  Lattice alpha(T, kNumLabels);
  for (std::size_t j = 0; j < kNumLabels; ++j) alpha(0, j) = trans(kStartState, j) + emit(0, j);
  double buf[kNumLabels];
  for (Eigen::Index t = 1; t < T; ++t) {
    for (std::size_t j = 0; j < kNumLabels; ++j) {
      for (std::size_t i = 0; i < kNumLabels; ++i) buf[i] = alpha(t - 1, i) + trans(i, j);
      alpha(t, j) = log_sum_exp(buf, kNumLabels) + emit(t, j);
    }
  }
  return alpha;
}

// beta(t, i): log-sum of all suffixes after t given label i at t, STOP included.
inline Lattice backward(const Lattice& emit, const Transitions& trans) {
  const auto T = emit.rows();
  Lattice beta(T, kNumLabels);
  for (std::size_t i = 0; i < kNumLabels; ++i) beta(T - 1, i) = trans(i, kStopState);
  double buf[kNumLabels];
  for (Eigen::Index t = T - 2; t >= 0; --t) {
    for (std::size_t i = 0; i < kNumLabels; ++i) {
      for (std::size_t j = 0; j < kNumLabels; ++j) buf[j] = trans(i, j) + emit(t + 1, j) + beta(t + 1, j);
      beta(t, i) = log_sum_exp(buf, kNumLabels);
    }
  }
  return beta;
}

inline double log_partition_from_alpha(const Lattice& alpha, const Transitions& trans) {
  double buf[kNumLabels];
  const auto last = alpha.rows() - 1;
  for (std::size_t j = 0; j < kNumLabels; ++j) buf[j] = alpha(last, j) + trans(j, kStopState);
  return log_sum_exp(buf, kNumLabels);
}

}  // namespace detail

inline double score_sequence(const Lattice& lattice, const Transitions& trans, const TagSequence& tags) {
  if (static_cast<Eigen::Index>(tags.size()) != lattice.rows())
    throw DataError("tag sequence length " + std::to_string(tags.size()) + " != lattice length " +
                    std::to_string(lattice.rows()));
  if (tags.empty()) return trans(kStartState, kStopState);
  double s = trans(kStartState, label_index(tags.front()));
  for (std::size_t t = 0; t < tags.size(); ++t) {
    s += lattice(static_cast<Eigen::Index>(t), label_index(tags[t]));
    if (t + 1 < tags.size()) s += trans(label_index(tags[t]), label_index(tags[t + 1]));
  }
  return s + trans(label_index(tags.back()), kStopState);
}

inline double forward_log_partition(const Lattice& lattice, const Transitions& trans) {
  detail::require_nonempty(lattice);
  return detail::log_partition_from_alpha(detail::forward(lattice, trans), trans);
}

inline Marginals posterior_marginals(const Lattice& lattice, const Transitions& trans) {
  detail::require_nonempty(lattice);
  const auto T = lattice.rows();
  const Lattice alpha = detail::forward(lattice, trans);
  const Lattice beta = detail::backward(lattice, trans);
  Marginals m;
  m.log_partition = detail::log_partition_from_alpha(alpha, trans);
  m.node = ((alpha + beta).array() - m.log_partition).exp().matrix();
  m.edge.resize(static_cast<std::size_t>(T - 1));
  for (Eigen::Index t = 0; t + 1 < T; ++t) {
    auto& e = m.edge[static_cast<std::size_t>(t)];
    for (std::size_t i = 0; i < kNumLabels; ++i)
      for (std::size_t j = 0; j < kNumLabels; ++j)
        e(i, j) = std::exp(alpha(t, i) + trans(i, j) + lattice(t + 1, j) + beta(t + 1, j) - m.log_partition);
  }
  return m;
}

/// Highest-scoring label sequence. Among tied sequences, the one with the lower
/// label index at the latest differing position wins.
inline TagSequence viterbi_decode(const Lattice& lattice, const Transitions& trans) {
  detail::require_nonempty(lattice);
  const auto T = lattice.rows();
  Lattice delta(T, kNumLabels);
  std::vector<std::array<std::size_t, kNumLabels>> back(static_cast<std::size_t>(T));
  for (std::size_t j = 0; j < kNumLabels; ++j) delta(0, j) = trans(kStartState, j) + lattice(0, j);
  for (Eigen::Index t = 1; t < T; ++t) {
    for (std::size_t j = 0; j < kNumLabels; ++j) {
      std::size_t best_i = 0;
      double best = delta(t - 1, 0) + trans(0, j);
      for (std::size_t i = 1; i < kNumLabels; ++i) {
        const double s = delta(t - 1, i) + trans(i, j);
        if (s > best) {
          best = s;
          best_i = i;
        }
      }
      delta(t, j) = best + lattice(t, j);
      back[static_cast<std::size_t>(t)][j] = best_i;
    }
  }
  std::size_t best_j = 0;
  double best = delta(T - 1, 0) + trans(0, kStopState);
  for (std::size_t j = 1; j < kNumLabels; ++j) {
    const double s = delta(T - 1, j) + trans(j, kStopState);
    if (s > best) {
      best = s;
      best_j = j;
    }
  }
  TagSequence tags(static_cast<std::size_t>(T));
  for (Eigen::Index t = T - 1; t >= 0; --t) {
    tags[static_cast<std::size_t>(t)] = label_from_index(best_j);
    if (t > 0) best_j = back[static_cast<std::size_t>(t)][best_j];
  }
  return tags;
}

/// Negative log-likelihood of `gold` and its gradient. d_emissions is
/// overwritten with d(nll)/d(emissions); the transition gradient is added into
/// d_trans.
inline double chain_nll_gradient(const Lattice& lattice, const Transitions& trans, const TagSequence& gold,
                                 Lattice& d_emissions, Transitions& d_trans) {
  const Marginals m = posterior_marginals(lattice, trans);
  const double nll = m.log_partition - score_sequence(lattice, trans, gold);
  const auto T = lattice.rows();
  d_emissions = m.node;
  for (Eigen::Index t = 0; t < T; ++t) d_emissions(t, label_index(gold[static_cast<std::size_t>(t)])) -= 1.0;

  for (std::size_t j = 0; j < kNumLabels; ++j) {
    d_trans(kStartState, j) += m.node(0, j);
    d_trans(j, kStopState) += m.node(T - 1, j);
  }
  for (const auto& e : m.edge) d_trans.topLeftCorner<kNumLabels, kNumLabels>() += e;
  d_trans(kStartState, label_index(gold.front())) -= 1.0;
  d_trans(label_index(gold.back()), kStopState) -= 1.0;
  for (std::size_t t = 0; t + 1 < gold.size(); ++t) d_trans(label_index(gold[t]), label_index(gold[t + 1])) -= 1.0;
  return nll;
}

}  // namespace cce
