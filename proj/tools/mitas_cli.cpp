// mitas: train, audit, ablate, separate and probe TasNet/Conv-TasNet models
// with cross-layer parameter sharing.
//
// Every subcommand is deterministic given its flags and --seed; tabular
// outputs are CSV with a header row. Failures print a single
// "error: <message>" line to stderr and exit nonzero.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mitas/mitas.hpp"

namespace fs = std::filesystem;

namespace {

std::string family_of(const mitas::ModelConfig& cfg) {
  return cfg.skip_connections ? "Conv-TasNet" : "TasNet";
}

std::string variant_label(const mitas::ModelConfig& cfg) {
  if (cfg.sharing.unshared()) return family_of(cfg) + " (Base-Model)";
  const std::string prefix = cfg.skip_connections ? "Conv-MiTAS_" : "MiTAS_";
  return prefix + cfg.sharing.label();
}

mitas::ModelConfig config_from_flags(const std::string& preset_name, const std::string& scheme) {
  mitas::ModelConfig cfg = mitas::preset(preset_name);
  cfg.sharing = mitas::parse_scheme(scheme);
  return cfg;
}

struct TrainArgs {
  std::string corpus;
  std::string preset_name = "tiny";
  std::string scheme = "ss";
  std::string checkpoint;
  std::string log_path;
  int steps = 3000;
  uint64_t seed = 0;
  double lr = 1e-3;
  double clip = 5.0;
  int batch = 4;
  int segment = 8000;
  int checkpoint_every = 500;
  bool resume = false;
};

int cmd_train(const TrainArgs& a) {
  auto records = mitas::read_corpus(a.corpus);
  mitas::TrainConfig tc;
  tc.learning_rate = a.lr;
  tc.clip_norm = a.clip;
  tc.batch_size = a.batch;
  tc.segment_len = a.segment;
  tc.max_steps = a.steps;
  tc.seed = a.seed;

  mitas::ModelConfig cfg;
  std::shared_ptr<mitas::ParameterStore<float>> store;
  std::optional<mitas::Checkpoint<float>> resumed;
  int start_step = 0;
  if (a.resume) {
    resumed = mitas::load_checkpoint<float>(a.checkpoint);
    cfg = resumed->config;
    store = resumed->store;
    start_step = resumed->step;
    tc.seed = resumed->seed;
    std::printf("resuming from %s at step %d\n", a.checkpoint.c_str(), start_step);
  } else {
    cfg = config_from_flags(a.preset_name, a.scheme);
    store = mitas::build_parameter_store<float>(cfg, a.seed);
  }

  mitas::Trainer<float> trainer(tc, records, cfg, store, start_step);
  if (resumed && resumed->has_optimizer) {
    trainer.adam_m() = resumed->adam_m;
    trainer.adam_v() = resumed->adam_v;
  }

  std::ofstream log;
  if (!a.log_path.empty()) {
    log.open(a.log_path, std::ios::trunc);
    if (!log) throw std::runtime_error("cannot open training log " + a.log_path);
    log << "step,loss,grad_norm\n";
  }

  auto save = [&](int step) {
    mitas::save_checkpoint(a.checkpoint, cfg, tc.seed, step, *store, &trainer.adam_m(),
                           &trainer.adam_v());
  };

  try {
    while (trainer.current_step() < a.steps) {
      const auto s = trainer.step();
      if (log.is_open())
        log << s.step << "," << mitas::fmt_detail::fixed(s.loss) << ","
            << mitas::fmt_detail::fixed(s.grad_norm, 6) << "\n";
      if (s.step % 100 == 0 || s.step == a.steps)
        std::printf("step %d  loss %.4f  grad_norm %.4f\n", s.step, s.loss, s.grad_norm);
      if (s.step % a.checkpoint_every == 0) save(s.step);
    }
  } catch (const mitas::TrainingDiverged& e) {
    std::fprintf(stderr, "error: %s; last saved checkpoint retained at %s\n", e.what(),
                 a.checkpoint.c_str());
    return 2;
  }
  save(trainer.current_step());
  std::printf("saved checkpoint to %s (step %d)\n", a.checkpoint.c_str(), trainer.current_step());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"TasNet/Conv-TasNet with cross-layer parameter sharing (MiTAS)"};
  app.require_subcommand(1);
  static const std::vector<std::string> kPresets = {"tasnet_base", "convtasnet_base",
                                                    "simplified1", "simplified2", "tiny"};

  // gen-corpus
  auto* gen = app.add_subcommand("gen-corpus", "Generate the synthetic two-speaker corpus");
  std::string gen_out;
  int gen_count = 20;
  double gen_duration = 2.0;
  uint64_t gen_seed = 7;
  gen->add_option("--out-dir", gen_out, "Output directory")->required();
  gen->add_option("--count", gen_count, "Number of records");
  gen->add_option("--duration", gen_duration, "Record duration in seconds");
  gen->add_option("--seed", gen_seed, "Corpus seed");

  // audit
  auto* aud = app.add_subcommand("audit", "Parameter count and compression report");
  std::string aud_preset = "convtasnet_base", aud_scheme = "nn", aud_baseline, aud_out;
  aud->add_option("--preset", aud_preset, "Model preset")->check(CLI::IsMember(kPresets));
  aud->add_option("--scheme", aud_scheme, "Sharing scheme (two letters of n/s/d/a)");
  aud->add_option("--baseline-preset", aud_baseline,
                  "Baseline for the compression ratio (default: family base)")
      ->check(CLI::IsMember(kPresets));
  aud->add_option("--out", aud_out, "Also write a CSV row to this path");

  // train
  auto* tr = app.add_subcommand("train", "Train a model on a corpus manifest");
  TrainArgs ta;
  tr->add_option("--corpus", ta.corpus, "Corpus manifest.csv")->required();
  tr->add_option("--preset", ta.preset_name, "Model preset")->check(CLI::IsMember(kPresets));
  tr->add_option("--scheme", ta.scheme, "Sharing scheme");
  tr->add_option("--checkpoint", ta.checkpoint, "Checkpoint path (written)")->required();
  tr->add_option("--steps", ta.steps, "Total optimization steps");
  tr->add_option("--seed", ta.seed, "Training seed");
  tr->add_option("--lr", ta.lr, "Step size");
  tr->add_option("--clip", ta.clip, "Global gradient-norm clip");
  tr->add_option("--batch", ta.batch, "Segments per step");
  tr->add_option("--segment", ta.segment, "Segment length in samples");
  tr->add_option("--log", ta.log_path, "Write per-step CSV log here");
  tr->add_flag("--resume", ta.resume, "Continue from an existing checkpoint");

  // eval
  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint on a corpus");
  std::string ev_ckpt, ev_corpus, ev_out;
  ev->add_option("--checkpoint", ev_ckpt, "Checkpoint path")->required();
  ev->add_option("--corpus", ev_corpus, "Corpus manifest.csv")->required();
  ev->add_option("--out", ev_out, "Per-utterance CSV output");

  // separate
  auto* sep = app.add_subcommand("separate", "Separate a mixture WAV into sources");
  std::string sep_ckpt, sep_input, sep_out = ".";
  sep->add_option("--checkpoint", sep_ckpt, "Checkpoint path")->required();
  sep->add_option("--input", sep_input, "Input mixture WAV (PCM16 mono 8 kHz)")->required();
  sep->add_option("--out-dir", sep_out, "Output directory");

  // ablate
  auto* ab = app.add_subcommand("ablate", "Run the 16-scheme ablation plus simplified controls");
  std::string ab_preset = "tiny", ab_corpus, ab_out;
  int ab_steps = 150;
  uint64_t ab_seed = 0;
  int ab_batch = 4, ab_segment = 8000;
  double ab_lr = 1e-3, ab_clip = 5.0;
  ab->add_option("--preset", ab_preset, "Family base preset")->check(CLI::IsMember(kPresets));
  ab->add_option("--corpus", ab_corpus, "Corpus manifest.csv")->required();
  ab->add_option("--out-dir", ab_out, "Directory for the CSV artifacts")->required();
  ab->add_option("--steps", ab_steps, "Training steps per variant (0 = audit/eval only)");
  ab->add_option("--seed", ab_seed, "Shared seed for all variants");
  ab->add_option("--batch", ab_batch, "Segments per step");
  ab->add_option("--segment", ab_segment, "Segment length in samples");
  ab->add_option("--lr", ab_lr, "Step size");
  ab->add_option("--clip", ab_clip, "Global gradient-norm clip");

  // shift-test
  auto* sh = app.add_subcommand("shift-test", "Starting-point shift sensitivity");
  std::string sh_ckpt, sh_corpus, sh_out;
  int sh_index = 0, sh_max = 250, sh_step = 25;
  sh->add_option("--checkpoint", sh_ckpt, "Checkpoint path")->required();
  sh->add_option("--corpus", sh_corpus, "Corpus manifest.csv")->required();
  sh->add_option("--index", sh_index, "Record index to probe");
  sh->add_option("--max-shift", sh_max, "Largest shift in samples");
  sh->add_option("--step", sh_step, "Shift increment in samples");
  sh->add_option("--out", sh_out, "CSV output path")->required();

  // noise-test
  auto* no = app.add_subcommand("noise-test", "SI-SNRi under additive noise");
  std::string no_ckpt, no_corpus, no_dir, no_out;
  std::vector<double> no_snrs = {0.0, 3.0, 5.0};
  std::vector<std::string> no_kinds = {"gaussian", "file"};
  uint64_t no_seed = 0;
  no->add_option("--checkpoint", no_ckpt, "Checkpoint path")->required();
  no->add_option("--corpus", no_corpus, "Corpus manifest.csv")->required();
  no->add_option("--noise-dir", no_dir, "Directory of noise WAVs (for kind=file)");
  no->add_option("--snr", no_snrs, "SNR grid in dB");
  no->add_option("--kinds", no_kinds, "Noise kinds: gaussian and/or file");
  no->add_option("--seed", no_seed, "Noise seed");
  no->add_option("--out", no_out, "CSV output path")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) {
      auto records = mitas::generate_synthetic_corpus(gen_count, gen_duration, gen_seed);
      mitas::write_corpus(gen_out, records);
      std::printf("wrote %d records to %s\n", gen_count, gen_out.c_str());
      return 0;
    }

    if (aud->parsed()) {
      const mitas::ModelConfig cfg = config_from_flags(aud_preset, aud_scheme);
      std::string baseline_name = aud_baseline;
      if (baseline_name.empty())
        baseline_name = (aud_preset == "simplified1" || aud_preset == "simplified2")
                            ? "convtasnet_base"
                            : aud_preset;
      const auto report = mitas::audit(cfg, mitas::preset(baseline_name));
      std::fputs(report.text_table().c_str(), stdout);
      if (!aud_out.empty()) {
        std::ofstream f(aud_out, std::ios::trunc);
        if (!f) throw std::runtime_error("cannot open " + aud_out);
        f << "model_label,scheme,size_params,compression_pct\n";
        f << variant_label(cfg) << "," << cfg.sharing.label() << "," << report.total << ","
          << mitas::fmt_detail::fixed(report.compression_pct, 2) << "\n";
      }
      return 0;
    }

    if (tr->parsed()) return cmd_train(ta);

    if (ev->parsed()) {
      auto ck = mitas::load_checkpoint<float>(ev_ckpt);
      mitas::SeparationModel<float> model(ck.config, ck.store);
      auto records = mitas::read_corpus(ev_corpus);
      auto rows = mitas::run_eval(model, records);
      if (!ev_out.empty()) mitas::write_eval_csv(ev_out, rows);
      std::printf("records %zu  mean SI-SNRi %.4f dB  mean SDRi %.4f dB\n", rows.size(),
                  mitas::mean_si_snri(rows), mitas::mean_sdri(rows));
      return 0;
    }

    if (sep->parsed()) {
      auto ck = mitas::load_checkpoint<float>(sep_ckpt);
      mitas::SeparationModel<float> model(ck.config, ck.store);
      const auto clip = mitas::read_wav(sep_input);
      auto mix = mitas::zeros<float>({clip.length()});
      for (int i = 0; i < clip.length(); ++i)
        mix->data[static_cast<size_t>(i)] = static_cast<float>(clip.samples[static_cast<size_t>(i)]);
      const auto out = model.forward(mix, nullptr);
      fs::create_directories(sep_out);
      const std::string stem = fs::path(sep_input).stem().string();
      for (int c = 0; c < ck.config.sources; ++c) {
        mitas::AudioClip est;
        est.samples.resize(static_cast<size_t>(out.analyzed_len));
        for (int i = 0; i < out.analyzed_len; ++i)
          est.samples[static_cast<size_t>(i)] =
              static_cast<double>(out.sources->data[static_cast<size_t>(c) * out.analyzed_len + i]);
        const std::string path =
            (fs::path(sep_out) / (stem + "_s" + std::to_string(c + 1) + ".wav")).string();
        mitas::write_wav(path, est);
        std::printf("%s\n", path.c_str());
      }
      return 0;
    }

    if (ab->parsed()) {
      mitas::AblateOptions opts;
      opts.base = mitas::preset(ab_preset);
      opts.family_label = family_of(opts.base);
      opts.train.learning_rate = ab_lr;
      opts.train.clip_norm = ab_clip;
      opts.train.batch_size = ab_batch;
      opts.train.segment_len = ab_segment;
      opts.train.max_steps = ab_steps;
      opts.train.seed = ab_seed;
      opts.out_dir = ab_out;
      auto records = mitas::read_corpus(ab_corpus);
      const auto rows = mitas::run_ablate<float>(opts, records);
      for (const auto& r : rows)
        std::printf("%-28s %s  %9lld  %6.2f%%  %8.4f dB  %8.4f dB\n", r.label.c_str(),
                    r.scheme.c_str(), static_cast<long long>(r.size_params), r.compression_pct,
                    r.si_snri_db, r.sdri_db);
      std::printf("wrote %s/ablation_summary.csv and size_vs_performance.csv\n", ab_out.c_str());
      return 0;
    }

    if (sh->parsed()) {
      auto ck = mitas::load_checkpoint<float>(sh_ckpt);
      mitas::SeparationModel<float> model(ck.config, ck.store);
      auto records = mitas::read_corpus(sh_corpus);
      if (sh_index < 0 || sh_index >= static_cast<int>(records.size()))
        throw std::invalid_argument("record index out of range");
      std::vector<int> shifts;
      for (int s = 0; s <= sh_max; s += sh_step) shifts.push_back(s);
      const auto rows = mitas::run_shift_test(model, records[static_cast<size_t>(sh_index)], shifts);
      mitas::write_shift_csv(sh_out, rows);
      double worst = 0;
      for (const auto& [s, d] : rows) worst = std::max(worst, std::abs(d));
      std::printf("max |delta SI-SNRi| over %zu shifts: %.4f dB; wrote %s\n", rows.size(), worst,
                  sh_out.c_str());
      return 0;
    }

    if (no->parsed()) {
      auto ck = mitas::load_checkpoint<float>(no_ckpt);
      mitas::SeparationModel<float> model(ck.config, ck.store);
      auto records = mitas::read_corpus(no_corpus);
      std::vector<mitas::NoiseKind> kinds;
      for (const auto& k : no_kinds) {
        if (k == "gaussian") kinds.push_back(mitas::NoiseKind::Gaussian);
        else if (k == "file") kinds.push_back(mitas::NoiseKind::File);
        else throw std::invalid_argument("unknown noise kind \"" + k + "\"");
      }
      const auto result = mitas::run_noise_test(model, records, kinds, no_snrs, no_dir, no_seed);
      mitas::write_noise_csv(no_out, variant_label(ck.config), result);
      std::printf("clean %.4f dB", result.clean_mean_si_snri);
      for (const auto& cell : result.cells)
        std::printf("  %s@%.0fdB %.4f", mitas::noise_kind_name(cell.kind), cell.snr_db,
                    cell.mean_si_snri);
      std::printf("; wrote %s\n", no_out.c_str());
      return 0;
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
