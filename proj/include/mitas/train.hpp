// Adaptive-moment training on the permutation-invariant SI-SNR loss.
//
// Each step draws its batch (record indices and segment offsets) from an RNG
// keyed by (seed, step index), so runs are reproducible and resumable from
// any step. Gradients accumulate across the batch on one store, then get
// batch-averaged, global-norm clipped, and applied.
#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "mitas/audio.hpp"
#include "mitas/metrics.hpp"
#include "mitas/model.hpp"
#include "mitas/registry.hpp"

namespace mitas {

struct TrainConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double clip_norm = 5.0;
  int segment_len = 8000;  // samples (1 s at 8 kHz)
  int batch_size = 4;
  int max_steps = 3000;
  uint64_t seed = 0;

  void validate() const {
    if (clip_norm <= 0) throw std::invalid_argument("train config: clip_norm must be > 0");
    if (learning_rate <= 0) throw std::invalid_argument("train config: learning_rate must be > 0");
    if (batch_size < 1 || segment_len < 1 || max_steps < 0)
      throw std::invalid_argument("train config: batch/segment/steps must be positive");
  }
};

struct StepLog {
  int step = 0;        // 1-based, global across resumes
  double loss = 0;     // batch-mean PIT loss (negative mean SI-SNR, dB)
  double grad_norm = 0;  // global L2 norm after batch averaging, before clipping
};

class TrainingDiverged : public std::runtime_error {
 public:
  TrainingDiverged(int step, const std::string& what) : std::runtime_error(what), step(step) {}
  int step;
};

template <typename S = float>
class Trainer {
 public:
  Trainer(TrainConfig cfg, std::vector<MixtureRecord> records,
          const ModelConfig& model_cfg, std::shared_ptr<ParameterStore<S>> store,
          int start_step = 0)
      : cfg_(cfg), records_(std::move(records)), model_(model_cfg, std::move(store)),
        step_(start_step) {
    cfg_.validate();
    if (records_.empty()) throw std::invalid_argument("trainer: empty corpus");
    if (cfg_.segment_len < model_.config().encoder_window)
      throw std::invalid_argument("trainer: segment_len shorter than the encoder window");
    for (const auto& rec : records_) {
      if (rec.mixture.length() < model_.config().encoder_window)
        throw std::invalid_argument("trainer: record " + rec.id + " shorter than encoder window");
      if (static_cast<int>(rec.sources.size()) != model_.config().sources)
        throw std::invalid_argument("trainer: record " + rec.id + " has wrong source count");
    }
    const auto& params = model_.store()->canonical();
    m_.reserve(params.size());
    v_.reserve(params.size());
    for (const auto& [k, t] : params) {
      m_.emplace_back(t->data.size(), S(0));
      v_.emplace_back(t->data.size(), S(0));
    }
  }

  const SeparationModel<S>& model() const { return model_; }
  int current_step() const { return step_; }

  std::vector<std::vector<S>>& adam_m() { return m_; }
  std::vector<std::vector<S>>& adam_v() { return v_; }

  StepLog step() {
    auto& store = *model_.store();
    store.zero_grad();
    std::mt19937_64 rng(detail::mix_seed(cfg_.seed, static_cast<uint64_t>(step_)));

    double loss_sum = 0;
    for (int b = 0; b < cfg_.batch_size; ++b) {
      const auto& rec = records_[rng() % records_.size()];
      const int rec_len = rec.mixture.length();
      const int seg = std::min(cfg_.segment_len, rec_len);
      const int max_off = rec_len - seg;
      const int off = max_off > 0 ? static_cast<int>(rng() % static_cast<uint64_t>(max_off + 1)) : 0;

      auto mixture = zeros<S>({seg});
      for (int i = 0; i < seg; ++i)
        mixture->data[static_cast<size_t>(i)] = static_cast<S>(rec.mixture.samples[static_cast<size_t>(off + i)]);
      const int analyzed = model_.analyzed_len(seg);
      const int C = model_.config().sources;
      auto refs = zeros<S>({C, analyzed});
      for (int c = 0; c < C; ++c)
        for (int i = 0; i < analyzed; ++i)
          refs->data[static_cast<size_t>(c) * analyzed + i] =
              static_cast<S>(rec.sources[static_cast<size_t>(c)].samples[static_cast<size_t>(off + i)]);

      Tape<S> tape;
      auto out = model_.forward(mixture, &tape);
      auto pit = pit_loss(out.sources, refs, &tape);
      loss_sum += static_cast<double>(pit.loss->data[0]);
      tape.backward(pit.loss);
    }
    const double mean_loss = loss_sum / cfg_.batch_size;
    if (!std::isfinite(mean_loss))
      throw TrainingDiverged(step_ + 1, "non-finite loss at step " + std::to_string(step_ + 1));

    // batch-average, then global-norm clip
    const S inv_batch = S(1) / static_cast<S>(cfg_.batch_size);
    double norm_sq = 0;
    for (const auto& [k, t] : store.canonical()) {
      for (auto& g : t->grad) {
        g *= inv_batch;
        norm_sq += static_cast<double>(g) * static_cast<double>(g);
      }
    }
    const double grad_norm = std::sqrt(norm_sq);
    const S clip_scale =
        grad_norm > cfg_.clip_norm ? static_cast<S>(cfg_.clip_norm / grad_norm) : S(1);

    ++step_;
    const double t = static_cast<double>(step_);
    const S bias1 = static_cast<S>(1.0 / (1.0 - std::pow(cfg_.beta1, t)));
    const S bias2 = static_cast<S>(1.0 / (1.0 - std::pow(cfg_.beta2, t)));
    const S b1 = static_cast<S>(cfg_.beta1), b2 = static_cast<S>(cfg_.beta2);
    const S lr = static_cast<S>(cfg_.learning_rate), eps = static_cast<S>(cfg_.adam_eps);
    size_t pi = 0;
    for (const auto& [k, tnsr] : store.canonical()) {
      auto& m = m_[pi];
      auto& v = v_[pi];
      for (size_t i = 0; i < tnsr->data.size(); ++i) {
        const S g = tnsr->grad[i] * clip_scale;
        m[i] = b1 * m[i] + (S(1) - b1) * g;
        v[i] = b2 * v[i] + (S(1) - b2) * g * g;
        tnsr->data[i] -= lr * (m[i] * bias1) / (std::sqrt(v[i] * bias2) + eps);
      }
      ++pi;
    }
    return StepLog{step_, mean_loss, grad_norm};
  }

  std::vector<StepLog> run(int steps) {
    std::vector<StepLog> logs;
    logs.reserve(static_cast<size_t>(steps));
    for (int i = 0; i < steps; ++i) logs.push_back(step());
    return logs;
  }

 private:
  TrainConfig cfg_;
  std::vector<MixtureRecord> records_;
  SeparationModel<S> model_;
  int step_;
  std::vector<std::vector<S>> m_, v_;  // aligned with store.canonical() order
};

}  // namespace mitas
