// SI-SNR / SDR evaluation and the permutation-invariant training loss.
//
// Both metrics mean-center their inputs. SI-SNR projects the estimate onto
// the reference: s_t = (<e,s>/<s,s>) s, SI-SNR = 10 log10(|s_t|^2/|e-s_t|^2).
// SDR here is the plain signal-to-error ratio, not the BSS-Eval subspace
// decomposition. Values clamp at +/-100 dB so results stay finite and
// serializable.
#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "mitas/ops.hpp"
#include "mitas/tensor.hpp"

namespace mitas {

inline constexpr double kMetricClampDb = 100.0;

namespace detail {

inline std::vector<double> centered(const std::vector<double>& x) {
  const double mean = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
  std::vector<double> out(x.size());
  for (size_t i = 0; i < x.size(); ++i) out[i] = x[i] - mean;
  return out;
}

inline double dot_d(const std::vector<double>& a, const std::vector<double>& b) {
  double acc = 0;
  for (size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

inline double clamp_db(double num, double den) {
  if (num == 0.0) return -kMetricClampDb;
  if (den == 0.0) return kMetricClampDb;
  return std::clamp(10.0 * std::log10(num / den), -kMetricClampDb, kMetricClampDb);
}

}  // namespace detail

inline double si_snr(const std::vector<double>& estimate, const std::vector<double>& reference) {
  if (estimate.size() != reference.size() || estimate.empty())
    throw std::invalid_argument("si_snr: estimate and reference must be equal-length, nonempty");
  const auto est = detail::centered(estimate);
  const auto ref = detail::centered(reference);
  const double ref_energy = detail::dot_d(ref, ref);
  if (ref_energy == 0.0)
    throw std::invalid_argument("si_snr: reference is zero after mean-centering");
  const double alpha = detail::dot_d(est, ref) / ref_energy;
  double target_energy = 0, error_energy = 0;
  for (size_t i = 0; i < est.size(); ++i) {
    const double t = alpha * ref[i];
    const double e = est[i] - t;
    target_energy += t * t;
    error_energy += e * e;
  }
  return detail::clamp_db(target_energy, error_energy);
}

inline double sdr(const std::vector<double>& estimate, const std::vector<double>& reference) {
  if (estimate.size() != reference.size() || estimate.empty())
    throw std::invalid_argument("sdr: estimate and reference must be equal-length, nonempty");
  const auto est = detail::centered(estimate);
  const auto ref = detail::centered(reference);
  const double ref_energy = detail::dot_d(ref, ref);
  if (ref_energy == 0.0) throw std::invalid_argument("sdr: reference is zero after mean-centering");
  double error_energy = 0;
  for (size_t i = 0; i < est.size(); ++i) {
    const double e = ref[i] - est[i];
    error_energy += e * e;
  }
  return detail::clamp_db(ref_energy, error_energy);
}

struct PermScore {
  std::vector<int> permutation;  // estimate index assigned to each reference
  double mean_si_snr = 0;
};

// Best assignment of estimates to references by mean SI-SNR, exhaustive over
// permutations (C <= 4); ties resolve to the lexicographically smallest
// permutation.
inline PermScore pit_best_assignment(const std::vector<std::vector<double>>& estimates,
                                     const std::vector<std::vector<double>>& references) {
  const size_t C = references.size();
  if (C == 0 || estimates.size() != C)
    throw std::invalid_argument("pit: estimate/reference count mismatch");
  if (C > 4) throw std::invalid_argument("pit: exhaustive permutation search limited to C <= 4");
  std::vector<std::vector<double>> score(C, std::vector<double>(C));
  for (size_t i = 0; i < C; ++i)
    for (size_t j = 0; j < C; ++j) score[i][j] = si_snr(estimates[i], references[j]);

  std::vector<int> perm(C);
  std::iota(perm.begin(), perm.end(), 0);
  PermScore best;
  bool first = true;
  do {
    double mean = 0;
    for (size_t c = 0; c < C; ++c) mean += score[static_cast<size_t>(perm[c])][c];
    mean /= static_cast<double>(C);
    if (first || mean > best.mean_si_snr) {
      best.permutation = perm;
      best.mean_si_snr = mean;
      first = false;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

struct EvalResult {
  double si_snr = 0;   // mean over sources, PIT-matched
  double si_snri = 0;  // improvement over scoring the mixture as every estimate
  double sdr = 0;
  double sdri = 0;
  std::vector<int> permutation;
};

inline EvalResult evaluate_separation(const std::vector<double>& mixture,
                                      const std::vector<std::vector<double>>& estimates,
                                      const std::vector<std::vector<double>>& references) {
  const size_t C = references.size();
  const PermScore best = pit_best_assignment(estimates, references);
  EvalResult r;
  r.permutation = best.permutation;
  r.si_snr = best.mean_si_snr;
  double mix_si_snr = 0, est_sdr = 0, mix_sdr = 0;
  for (size_t c = 0; c < C; ++c) {
    mix_si_snr += si_snr(mixture, references[c]);
    est_sdr += sdr(estimates[static_cast<size_t>(best.permutation[c])], references[c]);
    mix_sdr += sdr(mixture, references[c]);
  }
  mix_si_snr /= static_cast<double>(C);
  est_sdr /= static_cast<double>(C);
  mix_sdr /= static_cast<double>(C);
  r.si_snri = r.si_snr - mix_si_snr;
  r.sdr = est_sdr;
  r.sdri = est_sdr - mix_sdr;
  return r;
}

// ---------------------------------------------------------------------------
// Differentiable loss path
// ---------------------------------------------------------------------------

// SI-SNR in dB as a recorded scalar. At the clamp the result is a constant
// (zero gradient), matching the evaluation-side semantics.
template <typename S>
TensorPtr<S> si_snr_db(const TensorPtr<S>& estimate, const TensorPtr<S>& reference,
                       Tape<S>* tape = nullptr) {
  if (estimate->numel() != reference->numel())
    throw std::invalid_argument("si_snr_db: estimate and reference must be equal length");
  auto est = mean_center(estimate, tape);
  auto ref = mean_center(reference, tape);
  auto ref_energy = dot(ref, ref, tape);
  if (ref_energy->data[0] == S(0))
    throw std::invalid_argument("si_snr_db: reference is zero after mean-centering");
  auto alpha = scalar_div(dot(est, ref, tape), ref_energy, tape);
  auto target = scale_by(ref, alpha, tape);
  auto error = sub(est, target, tape);
  auto num = dot(target, target, tape);
  auto den = dot(error, error, tape);
  if (num->data[0] == S(0)) return scalar_tensor<S>(static_cast<S>(-kMetricClampDb));
  if (den->data[0] == S(0)) return scalar_tensor<S>(static_cast<S>(kMetricClampDb));
  auto db = scale(scalar_log10(scalar_div(num, den, tape), tape), S(10), tape);
  if (db->data[0] > S(kMetricClampDb)) return scalar_tensor<S>(static_cast<S>(kMetricClampDb));
  if (db->data[0] < S(-kMetricClampDb)) return scalar_tensor<S>(static_cast<S>(-kMetricClampDb));
  return db;
}

template <typename S>
struct PitLoss {
  TensorPtr<S> loss;  // -max_pi mean_c si_snr(estimate[pi(c)], reference[c])
  std::vector<int> permutation;
};

// Differentiable through the selected permutation branch.
template <typename S>
PitLoss<S> pit_loss(const TensorPtr<S>& estimates, const TensorPtr<S>& references,
                    Tape<S>* tape = nullptr) {
  detail::require_rank(estimates, 2, "pit_loss", "estimates");
  detail::require_rank(references, 2, "pit_loss", "references");
  if (estimates->dim(0) != references->dim(0) || estimates->dim(1) != references->dim(1)) {
    std::ostringstream os;
    os << "pit_loss: estimates " << estimates->shape_str() << " vs references "
       << references->shape_str();
    throw std::invalid_argument(os.str());
  }
  const int C = estimates->dim(0);
  if (C > 4) throw std::invalid_argument("pit_loss: exhaustive permutation search limited to C <= 4");

  std::vector<std::vector<TensorPtr<S>>> score(C, std::vector<TensorPtr<S>>(C));
  for (int i = 0; i < C; ++i) {
    auto est_i = slice_rows(estimates, i, i + 1, tape);
    for (int j = 0; j < C; ++j) {
      auto ref_j = slice_rows(references, j, j + 1, tape);
      score[static_cast<size_t>(i)][static_cast<size_t>(j)] = si_snr_db(est_i, ref_j, tape);
    }
  }

  std::vector<int> perm(static_cast<size_t>(C));
  std::iota(perm.begin(), perm.end(), 0);
  std::vector<int> best_perm;
  double best_mean = 0;
  bool first = true;
  do {
    double mean = 0;
    for (int c = 0; c < C; ++c)
      mean += static_cast<double>(score[static_cast<size_t>(perm[static_cast<size_t>(c)])]
                                       [static_cast<size_t>(c)]->data[0]);
    mean /= C;
    if (first || mean > best_mean) {
      best_perm = perm;
      best_mean = mean;
      first = false;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));

  TensorPtr<S> acc;
  for (int c = 0; c < C; ++c) {
    const auto& s = score[static_cast<size_t>(best_perm[static_cast<size_t>(c)])][static_cast<size_t>(c)];
    acc = acc ? add(acc, s, tape) : s;
  }
  PitLoss<S> out;
  out.loss = scale(acc, S(-1) / static_cast<S>(C), tape);
  out.permutation = std::move(best_perm);
  return out;
}

}  // namespace mitas
