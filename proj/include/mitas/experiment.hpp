// Experiment harness: evaluation over a corpus, the 16-scheme ablation with
// its summary and size-vs-performance CSV artifacts, and the noise /
// starting-point-shift robustness protocols.
//
// Every run is a pure function of (inputs, config, seed); CSV cells use
// fixed-precision formatting so repeated runs are byte-identical.
#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "mitas/audio.hpp"
#include "mitas/metrics.hpp"
#include "mitas/model.hpp"
#include "mitas/train.hpp"

namespace mitas {

namespace fmt_detail {

inline std::string fixed(double v, int prec = 4) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", prec, v);
  return buf;
}

inline std::string perm_str(const std::vector<int>& perm) {
  std::string s;
  for (int p : perm) s += static_cast<char>('0' + p);
  return s;
}

}  // namespace fmt_detail

// ---------------------------------------------------------------------------
// Corpus evaluation
// ---------------------------------------------------------------------------

template <typename S>
EvalResult evaluate_record(const SeparationModel<S>& model, const MixtureRecord& rec) {
  const int T = rec.mixture.length();
  auto mix = zeros<S>({T});
  for (int i = 0; i < T; ++i) mix->data[static_cast<size_t>(i)] = static_cast<S>(rec.mixture.samples[static_cast<size_t>(i)]);
  const auto out = model.forward(mix, nullptr);
  const int Tp = out.analyzed_len;
  const int C = model.config().sources;

  std::vector<std::vector<double>> estimates(static_cast<size_t>(C)), references(static_cast<size_t>(C));
  for (int c = 0; c < C; ++c) {
    estimates[static_cast<size_t>(c)].resize(static_cast<size_t>(Tp));
    for (int i = 0; i < Tp; ++i)
      estimates[static_cast<size_t>(c)][static_cast<size_t>(i)] =
          static_cast<double>(out.sources->data[static_cast<size_t>(c) * Tp + i]);
    references[static_cast<size_t>(c)].assign(rec.sources[static_cast<size_t>(c)].samples.begin(),
                                              rec.sources[static_cast<size_t>(c)].samples.begin() + Tp);
  }
  std::vector<double> mixture(rec.mixture.samples.begin(), rec.mixture.samples.begin() + Tp);
  return evaluate_separation(mixture, estimates, references);
}

struct EvalRow {
  std::string utterance_id;
  std::string scheme;
  EvalResult result;
};

template <typename S>
std::vector<EvalRow> run_eval(const SeparationModel<S>& model,
                              const std::vector<MixtureRecord>& records) {
  std::vector<EvalRow> rows;
  rows.reserve(records.size());
  for (const auto& rec : records)
    rows.push_back({rec.id, model.config().sharing.label(), evaluate_record(model, rec)});
  return rows;
}

inline double mean_si_snri(const std::vector<EvalRow>& rows) {
  double acc = 0;
  for (const auto& r : rows) acc += r.result.si_snri;
  return rows.empty() ? 0 : acc / static_cast<double>(rows.size());
}

inline double mean_sdri(const std::vector<EvalRow>& rows) {
  double acc = 0;
  for (const auto& r : rows) acc += r.result.sdri;
  return rows.empty() ? 0 : acc / static_cast<double>(rows.size());
}

inline void write_eval_csv(const std::string& path, const std::vector<EvalRow>& rows) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw std::runtime_error("write_eval_csv: cannot open " + path);
  f << "utterance_id,scheme,si_snr,si_snri,sdr,sdri,permutation\n";
  for (const auto& r : rows) {
    f << r.utterance_id << "," << r.scheme << "," << fmt_detail::fixed(r.result.si_snr) << ","
      << fmt_detail::fixed(r.result.si_snri) << "," << fmt_detail::fixed(r.result.sdr) << ","
      << fmt_detail::fixed(r.result.sdri) << "," << fmt_detail::perm_str(r.result.permutation)
      << "\n";
  }
}

// ---------------------------------------------------------------------------
// Ablation
// ---------------------------------------------------------------------------

struct ExperimentRow {
  std::string label;   // e.g. "MiTAS_ss", "Conv-TasNet (Base-Model)"
  std::string scheme;  // two-letter code
  std::string family;  // base | shared | simplified
  int64_t size_params = 0;
  double compression_pct = 0;
  double si_snri_db = 0;
  double sdri_db = 0;
};

struct AblateOptions {
  ModelConfig base;          // family base architecture; sharing field ignored
  std::string family_label;  // "TasNet" or "Conv-TasNet"
  TrainConfig train;         // per-variant budget; max_steps 0 skips training
  std::string out_dir;
};

namespace detail {

template <typename S>
ExperimentRow run_ablate_variant(const ModelConfig& cfg, const ModelConfig& baseline,
                                 const TrainConfig& tc,
                                 const std::vector<MixtureRecord>& records,
                                 std::string label, std::string family) {
  auto store = build_parameter_store<S>(cfg, tc.seed);
  Trainer<S> trainer(tc, records, cfg, store);
  trainer.run(tc.max_steps);
  const auto rows = run_eval(trainer.model(), records);
  const auto report = audit(cfg, baseline);
  ExperimentRow row;
  row.label = std::move(label);
  row.scheme = cfg.sharing.label();
  row.family = std::move(family);
  row.size_params = report.total;
  row.compression_pct = report.compression_pct;
  row.si_snri_db = mean_si_snri(rows);
  row.sdri_db = mean_sdri(rows);
  return row;
}

}  // namespace detail

// Trains and evaluates all 16 sharing schemes plus the two structural
// controls under one budget and seed. Emits <out>/ablation_summary.csv and
// <out>/size_vs_performance.csv.
template <typename S = float>
std::vector<ExperimentRow> run_ablate(const AblateOptions& opts,
                                      const std::vector<MixtureRecord>& records) {
  const bool conv_family = opts.family_label == "Conv-TasNet";
  ModelConfig base = opts.base;
  base.sharing = SharingConfig{};

  std::vector<ExperimentRow> rows;
  for (const auto& scheme : enumerate_ablation_grid()) {
    ModelConfig cfg = base;
    cfg.sharing = scheme;
    std::string label, family;
    if (scheme.unshared()) {
      label = opts.family_label + " (Base-Model)";
      family = "base";
    } else {
      label = (conv_family ? "Conv-MiTAS_" : "MiTAS_") + scheme.label();
      family = "shared";
    }
    rows.push_back(detail::run_ablate_variant<S>(cfg, base, opts.train, records,
                                                 std::move(label), std::move(family)));
  }
  ModelConfig s1 = base;
  s1.stacks = 1;
  rows.push_back(detail::run_ablate_variant<S>(s1, base, opts.train, records,
                                               "Simplified-Base-Model 1", "simplified"));
  ModelConfig s2 = base;
  s2.blocks_per_stack = 1;
  rows.push_back(detail::run_ablate_variant<S>(s2, base, opts.train, records,
                                               "Simplified-Base-Model 2", "simplified"));

  namespace fs = std::filesystem;
  fs::create_directories(opts.out_dir);
  {
    std::ofstream f(fs::path(opts.out_dir) / "ablation_summary.csv", std::ios::trunc);
    if (!f) throw std::runtime_error("run_ablate: cannot write ablation_summary.csv");
    f << "model,scheme,size_params,compression_pct,si_snri_db,sdri_db\n";
    for (const auto& r : rows) {
      f << r.label << "," << r.scheme << "," << r.size_params << ","
        << fmt_detail::fixed(r.compression_pct, 2) << "," << fmt_detail::fixed(r.si_snri_db)
        << "," << fmt_detail::fixed(r.sdri_db) << "\n";
    }
  }
  {
    std::ofstream f(fs::path(opts.out_dir) / "size_vs_performance.csv", std::ios::trunc);
    if (!f) throw std::runtime_error("run_ablate: cannot write size_vs_performance.csv");
    f << "model,params,si_snri_db,family\n";
    for (const auto& r : rows)
      f << r.label << "," << r.size_params << "," << fmt_detail::fixed(r.si_snri_db) << ","
        << r.family << "\n";
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Starting-point shift sensitivity
// ---------------------------------------------------------------------------

// Separates the same record from shifted starting points over a common-length
// window and reports the SI-SNRi change against the unshifted case.
template <typename S>
std::vector<std::pair<int, double>> run_shift_test(const SeparationModel<S>& model,
                                                   const MixtureRecord& rec,
                                                   const std::vector<int>& shifts) {
  int max_shift = 0;
  for (int s : shifts) {
    if (s < 0) throw std::invalid_argument("run_shift_test: negative shift");
    max_shift = std::max(max_shift, s);
  }
  const int T = rec.mixture.length();
  const int window = T - max_shift;
  if (window < model.config().encoder_window) {
    std::ostringstream os;
    os << "run_shift_test: input too short: " << T << " samples leaves window " << window
       << " after max shift " << max_shift << " (need >= " << model.config().encoder_window << ")";
    throw std::invalid_argument(os.str());
  }

  auto eval_at = [&](int shift) {
    MixtureRecord cut;
    cut.id = rec.id;
    cut.mixture.samples.assign(rec.mixture.samples.begin() + shift,
                               rec.mixture.samples.begin() + shift + window);
    for (const auto& src : rec.sources) {
      AudioClip c;
      c.samples.assign(src.samples.begin() + shift, src.samples.begin() + shift + window);
      cut.sources.push_back(std::move(c));
    }
    return evaluate_record(model, cut).si_snri;
  };

  std::vector<std::pair<int, double>> out;
  out.reserve(shifts.size());
  double base_val = 0;
  bool have_base = false;
  for (int s : shifts) {
    const double v = eval_at(s);
    if (!have_base) {
      // first entry is the reference point (shift 0 by convention)
      base_val = s == 0 ? v : eval_at(0);
      have_base = true;
    }
    out.emplace_back(s, v - base_val);
  }
  return out;
}

inline void write_shift_csv(const std::string& path,
                            const std::vector<std::pair<int, double>>& rows) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw std::runtime_error("write_shift_csv: cannot open " + path);
  f << "shift,delta_si_snri_db\n";
  for (const auto& [s, d] : rows) f << s << "," << fmt_detail::fixed(d) << "\n";
}

// ---------------------------------------------------------------------------
// Noise robustness
// ---------------------------------------------------------------------------

struct NoiseCell {
  NoiseKind kind;
  double snr_db = 0;
  double mean_si_snri = 0;
};

struct NoiseTestResult {
  double clean_mean_si_snri = 0;
  std::vector<NoiseCell> cells;  // SNR-major, kind-minor
};

template <typename S>
NoiseTestResult run_noise_test(const SeparationModel<S>& model,
                               const std::vector<MixtureRecord>& records,
                               const std::vector<NoiseKind>& kinds,
                               const std::vector<double>& snrs, const std::string& noise_dir,
                               uint64_t seed) {
  NoiseTestResult result;
  result.clean_mean_si_snri = mean_si_snri(run_eval(model, records));
  for (double snr : snrs) {
    for (NoiseKind kind : kinds) {
      double acc = 0;
      for (size_t i = 0; i < records.size(); ++i) {
        const uint64_t cell_seed = detail::mix_seed(
            seed, detail::fnv1a(std::string(noise_kind_name(kind)) + "/" +
                                std::to_string(snr) + "/" + std::to_string(i)));
        MixtureRecord noisy = add_noise(records[i], kind, snr, noise_dir, cell_seed);
        acc += evaluate_record(model, noisy).si_snri;
      }
      result.cells.push_back({kind, snr, acc / static_cast<double>(records.size())});
    }
  }
  return result;
}

inline void write_noise_csv(const std::string& path, const std::string& model_label,
                            const NoiseTestResult& result) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw std::runtime_error("write_noise_csv: cannot open " + path);
  f << "model,clean";
  for (const auto& cell : result.cells) {
    f << "," << noise_kind_name(cell.kind) << "_"
      << fmt_detail::fixed(cell.snr_db, 0) << "db";
  }
  f << "\n" << model_label << "," << fmt_detail::fixed(result.clean_mean_si_snri);
  for (const auto& cell : result.cells) f << "," << fmt_detail::fixed(cell.mean_si_snri);
  f << "\n";
}

}  // namespace mitas
