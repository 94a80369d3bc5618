// Acceptance suite: runs every criterion at its stated tolerance and prints
// one pass/fail line per criterion. Exit code is the number of failures.
//
// The overfit run (criterion 7) trains the tiny stack-shared model on the
// default 20-record synthetic corpus; criteria 8 and 10 reuse that model.
// Absolute dB values are not comparable to published WSJ0-2mix results; the
// corpus here is synthetic.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "mitas/mitas.hpp"

namespace fs = std::filesystem;
using namespace mitas;

namespace {

struct Criterion {
  bool pass = true;
  std::string detail;
};

double now_s() {
  using clock = std::chrono::steady_clock;
  return std::chrono::duration<double>(clock::now().time_since_epoch()).count();
}

std::string fmt(double v, int prec = 4) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", prec, v);
  return buf;
}

// ---------------------------------------------------------------------------
// 1. Conv-TasNet family parameter audit
// ---------------------------------------------------------------------------
Criterion criterion1() {
  Criterion c;
  const double t0 = now_s();
  const ModelConfig base = preset("convtasnet_base");
  const auto base_report = audit(base);
  auto ratio = [&](const char* scheme) {
    ModelConfig cfg = base;
    cfg.sharing = parse_scheme(scheme);
    return audit(cfg, base).compression_pct;
  };
  const double ss = ratio("ss"), sn = ratio("sn"), ns = ratio("ns");
  const double s1 = audit(preset("simplified1"), base).compression_pct;
  const double elapsed = now_s() - t0;

  c.pass = base_report.total >= 4950000 && base_report.total <= 5250000 &&
           std::abs(ss - 36.0) <= 3.0 && std::abs(sn - 77.0) <= 3.0 &&
           std::abs(ns - 58.0) <= 3.0 && std::abs(s1 - 36.0) <= 3.0 && elapsed < 1.0;
  std::ostringstream os;
  os << "total=" << base_report.total << " ss=" << fmt(ss, 1) << "% sn=" << fmt(sn, 1)
     << "% ns=" << fmt(ns, 1) << "% simplified1=" << fmt(s1, 1) << "% [" << fmt(elapsed, 3)
     << "s]";
  c.detail = os.str();
  return c;
}

// ---------------------------------------------------------------------------
// 2. TasNet family parameter audit
// ---------------------------------------------------------------------------
Criterion criterion2() {
  Criterion c;
  const double t0 = now_s();
  const ModelConfig base = preset("tasnet_base");
  ModelConfig ss4 = base;
  ss4.sharing = parse_scheme("ss");
  ModelConfig ss6 = ss4;
  ss6.stacks = 6;
  const auto r4 = audit(ss4, base);
  const auto r6 = audit(ss6, base);
  const double elapsed = now_s() - t0;

  c.pass = std::abs(r4.compression_pct - 26.7) <= 3.0 && r4.total == r6.total && elapsed < 1.0;
  std::ostringstream os;
  os << "ss=" << fmt(r4.compression_pct, 1) << "% R=4 total=" << r4.total
     << " R=6 total=" << r6.total << " [" << fmt(elapsed, 3) << "s]";
  c.detail = os.str();
  return c;
}

// ---------------------------------------------------------------------------
// 3. Shared-vs-copied equivalence, all 16 schemes, tiny preset, f64
// ---------------------------------------------------------------------------
Criterion criterion3() {
  Criterion c;
  const double t0 = now_s();
  std::mt19937_64 rng(101);
  auto x = uniform_tensor<double>({400}, -0.5, 0.5, rng);
  double worst_fwd = 0, worst_grad = 0;
  std::string worst_scheme;

  for (const auto& scheme : enumerate_ablation_grid()) {
    ModelConfig cfg = preset("tiny");
    cfg.sharing = scheme;
    auto shared_store = build_parameter_store<double>(cfg, 103);
    SeparationModel<double> shared(cfg, shared_store);
    ModelConfig copied_cfg = cfg;
    copied_cfg.sharing = SharingConfig{};
    auto copied_store = clone_unshared(*shared_store, cfg);
    SeparationModel<double> copied(copied_cfg, copied_store);

    const int Tp = shared.analyzed_len(400);
    std::mt19937_64 ref_rng(107);
    auto refs = uniform_tensor<double>({2, Tp}, -0.5, 0.5, ref_rng);

    Tape<double> ta, tb;
    auto oa = shared.forward(x, &ta);
    auto ob = copied.forward(x, &tb);
    for (size_t i = 0; i < oa.sources->data.size(); ++i)
      worst_fwd = std::max(worst_fwd, std::abs(oa.sources->data[i] - ob.sources->data[i]));
    ta.backward(pit_loss(oa.sources, refs, &ta).loss);
    tb.backward(pit_loss(ob.sources, refs, &tb).loss);

    for (const auto& [ck, t] : shared_store->canonical()) {
      for (size_t i = 0; i < t->grad.size(); ++i) {
        double site_sum = 0;
        for (const auto& spec : parameter_sites(cfg)) {
          if (!(canonicalize(spec.key, cfg.sharing) == ck)) continue;
          site_sum += copied_store->lookup(spec.key)->grad[i];
        }
        const double denom = std::max(std::abs(t->grad[i]), std::abs(site_sum));
        const double rel = denom > 0 ? std::abs(t->grad[i] - site_sum) / denom : 0.0;
        if (rel > worst_grad) {
          worst_grad = rel;
          worst_scheme = scheme.label();
        }
      }
    }
  }
  const double elapsed = now_s() - t0;
  c.pass = worst_fwd <= 1e-12 && worst_grad < 1e-10 && elapsed < 30.0;
  std::ostringstream os;
  os << "16 schemes, max fwd diff=" << worst_fwd << " max grad rel=" << worst_grad
     << (worst_scheme.empty() ? "" : " (" + worst_scheme + ")") << " [" << fmt(elapsed, 1)
     << "s]";
  c.detail = os.str();
  return c;
}

// ---------------------------------------------------------------------------
// 4. Full-model finite-difference gradient check (f64, <= 5k params)
// ---------------------------------------------------------------------------
Criterion criterion4() {
  Criterion c;
  const double t0 = now_s();
  const ModelConfig cfg = preset("tiny");  // unshared: every site is a distinct parameter
  auto store = build_parameter_store<double>(cfg, 109);
  SeparationModel<double> model(cfg, store);
  const int64_t param_count = store->total_scalars();

  std::mt19937_64 rng(113);
  auto x = uniform_tensor<double>({400}, -0.5, 0.5, rng);
  const int Tp = model.analyzed_len(400);
  auto refs = uniform_tensor<double>({2, Tp}, -0.5, 0.5, rng);

  auto loss_value = [&] {
    auto out = model.forward(x);
    return pit_loss(out.sources, refs).loss->data[0];
  };
  store->zero_grad();
  {
    Tape<double> tape;
    auto out = model.forward(x, &tape);
    tape.backward(pit_loss(out.sources, refs, &tape).loss);
  }

  const double h = 1e-6, rel_tol = 1e-4, abs_tol = 1e-8;
  int checked = 0, failed = 0;
  double worst_rel = 0;
  std::string worst_key;
  for (const auto& [key, t] : store->canonical()) {
    for (size_t i = 0; i < t->data.size(); ++i) {
      const double saved = t->data[i];
      t->data[i] = saved + h;
      const double fp = loss_value();
      t->data[i] = saved - h;
      const double fm = loss_value();
      t->data[i] = saved;
      const double numeric = (fp - fm) / (2.0 * h);
      const double analytic = t->grad[i];
      const double abs_err = std::abs(analytic - numeric);
      const double denom = std::max(std::abs(analytic), std::abs(numeric));
      const double rel = denom > 0 ? abs_err / denom : 0.0;
      ++checked;
      if (!(abs_err < abs_tol || rel < rel_tol)) {
        ++failed;
        if (rel > worst_rel) {
          worst_rel = rel;
          worst_key = key.str() + "[" + std::to_string(i) + "]";
        }
      }
    }
  }
  const double elapsed = now_s() - t0;
  c.pass = param_count <= 5000 && failed == 0 && elapsed < 120.0;
  std::ostringstream os;
  os << param_count << " params, " << checked << " coords checked, " << failed << " failures";
  if (failed > 0) os << " (worst " << worst_key << " rel=" << worst_rel << ")";
  os << " [" << fmt(elapsed, 1) << "s]";
  c.detail = os.str();
  return c;
}

// ---------------------------------------------------------------------------
// 5. Metric properties
// ---------------------------------------------------------------------------
Criterion criterion5() {
  Criterion c;
  std::mt19937_64 rng(127);
  std::uniform_real_distribution<double> amp(0.01, 50.0);

  double max_dev = 0;
  for (int i = 0; i < 1000; ++i) {
    const int T = 64 + static_cast<int>(rng() % 448);
    std::vector<double> e(static_cast<size_t>(T)), s(static_cast<size_t>(T));
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    for (auto& v : e) v = dist(rng);
    for (auto& v : s) v = dist(rng);
    const double base = si_snr(e, s);
    auto e2 = e;
    auto s2 = s;
    const double ka = amp(rng), kb = amp(rng);
    for (auto& v : e2) v *= ka;
    for (auto& v : s2) v *= kb;
    max_dev = std::max(max_dev, std::abs(si_snr(e2, s2) - base));
  }

  int pit_mismatches = 0;
  for (int C : {2, 3}) {
    for (int iter = 0; iter < 200; ++iter) {
      const int T = 48;
      std::vector<std::vector<double>> est(static_cast<size_t>(C)), refs(static_cast<size_t>(C));
      std::vector<double> est_flat, ref_flat;
      std::uniform_real_distribution<double> dist(-1.0, 1.0);
      for (int k = 0; k < C; ++k) {
        est[static_cast<size_t>(k)].resize(T);
        refs[static_cast<size_t>(k)].resize(T);
        for (auto& v : est[static_cast<size_t>(k)]) v = dist(rng);
        for (auto& v : refs[static_cast<size_t>(k)]) v = dist(rng);
        est_flat.insert(est_flat.end(), est[static_cast<size_t>(k)].begin(),
                        est[static_cast<size_t>(k)].end());
        ref_flat.insert(ref_flat.end(), refs[static_cast<size_t>(k)].begin(),
                        refs[static_cast<size_t>(k)].end());
      }
      std::vector<int> perm(static_cast<size_t>(C));
      std::iota(perm.begin(), perm.end(), 0);
      double best = -1e18;
      do {
        double mean = 0;
        for (int k = 0; k < C; ++k)
          mean += si_snr(est[static_cast<size_t>(perm[static_cast<size_t>(k)])],
                         refs[static_cast<size_t>(k)]);
        best = std::max(best, mean / C);
      } while (std::next_permutation(perm.begin(), perm.end()));
      const auto pit =
          pit_loss(make_tensor<double>({C, T}, est_flat), make_tensor<double>({C, T}, ref_flat));
      if (std::abs(-pit.loss->data[0] - best) > 1e-9) ++pit_mismatches;
    }
  }

  bool zero_improvement = true;
  for (int C : {2, 3}) {
    std::vector<std::vector<double>> refs;
    std::vector<double> mix(96, 0.0);
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    for (int k = 0; k < C; ++k) {
      std::vector<double> r(96);
      for (auto& v : r) v = dist(rng);
      for (size_t i = 0; i < mix.size(); ++i) mix[i] += r[i];
      refs.push_back(std::move(r));
    }
    const auto res = evaluate_separation(
        mix, std::vector<std::vector<double>>(static_cast<size_t>(C), mix), refs);
    if (res.si_snri != 0.0) zero_improvement = false;
  }

  c.pass = max_dev < 1e-9 && pit_mismatches == 0 && zero_improvement;
  std::ostringstream os;
  os << "scale-invariance max dev=" << max_dev << " dB over 1000 cases; pit mismatches="
     << pit_mismatches << "/400; mixture-as-estimate si_snri==0: "
     << (zero_improvement ? "yes" : "no");
  c.detail = os.str();
  return c;
}

// ---------------------------------------------------------------------------
// 6. Mixing exactness over the SNR grid, both noise kinds
// ---------------------------------------------------------------------------
Criterion criterion6(const fs::path& work) {
  Criterion c;
  const auto noise_dir = work / "noise_wavs";
  fs::create_directories(noise_dir);
  {
    std::mt19937_64 rng(131);
    AudioClip file_noise;
    file_noise.samples.resize(6000);
    std::normal_distribution<double> g(0.0, 0.2);
    for (auto& v : file_noise.samples) v = g(rng);
    write_wav((noise_dir / "wideband.wav").string(), file_noise);
  }

  AudioClip sig, interf;
  sig.samples.resize(8000);
  interf.samples.resize(8000);
  std::mt19937_64 rng(137);
  std::normal_distribution<double> g(0.0, 0.15);
  for (int i = 0; i < 8000; ++i) {
    sig.samples[static_cast<size_t>(i)] =
        0.3 * std::sin(2.0 * std::numbers::pi * 261.0 * i / kSampleRate);
    interf.samples[static_cast<size_t>(i)] = g(rng);
  }

  double worst = 0;
  for (double snr : {-5.0, 0.0, 3.0, 5.0, 10.0}) {
    const auto rec = mix_at_snr(sig, interf, snr);
    const double measured = 10.0 * std::log10(signal_power(rec.sources[0].samples) /
                                              signal_power(rec.sources[1].samples));
    worst = std::max(worst, std::abs(measured - snr));
    for (NoiseKind kind : {NoiseKind::Gaussian, NoiseKind::File}) {
      const auto noisy = add_noise(rec, kind, snr, noise_dir.string(), 139);
      std::vector<double> pre(noisy.mixture.samples.size());
      for (size_t i = 0; i < pre.size(); ++i)
        pre[i] = noisy.mixture.samples[i] - noisy.noise->samples[i];
      const double m = 10.0 * std::log10(signal_power(pre) / signal_power(noisy.noise->samples));
      worst = std::max(worst, std::abs(m - snr));
    }
  }
  c.pass = worst < 1e-6;
  c.detail = "max |requested - measured| = " + fmt(worst * 1e9, 3) + " nano-dB over grid";
  return c;
}

struct OverfitResult {
  std::shared_ptr<ParameterStore<float>> store;
  ModelConfig cfg;
  std::vector<MixtureRecord> corpus;
  double si_snri = 0;
  double elapsed = 0;
  int steps = 0;
};

// ---------------------------------------------------------------------------
// 7. Overfit capability on the default synthetic corpus
// ---------------------------------------------------------------------------
Criterion criterion7(OverfitResult& out) {
  Criterion c;
  const double t0 = now_s();
  out.corpus = generate_synthetic_corpus(20, 2.0, 7);
  out.cfg = preset("tiny");
  out.cfg.sharing = parse_scheme("ss");
  out.store = build_parameter_store<float>(out.cfg, 0);
  TrainConfig tc;  // recipe defaults: lr 1e-3, clip 5, 1 s segments, batch 4
  tc.seed = 0;
  out.steps = 300;
  tc.max_steps = out.steps;
  Trainer<float> trainer(tc, out.corpus, out.cfg, out.store);
  trainer.run(out.steps);
  out.si_snri = mean_si_snri(run_eval(trainer.model(), out.corpus));
  out.elapsed = now_s() - t0;
  c.pass = out.si_snri >= 10.0 && out.steps <= 3000 && out.elapsed < 600.0;
  std::ostringstream os;
  os << "training-set SI-SNRi=" << fmt(out.si_snri, 2) << " dB after " << out.steps
     << " steps [" << fmt(out.elapsed, 1) << "s]";
  c.detail = os.str();
  return c;
}

// ---------------------------------------------------------------------------
// 8. Shift sensitivity of the overfit model
// ---------------------------------------------------------------------------
Criterion criterion8(const OverfitResult& overfit) {
  Criterion c;
  if (!overfit.store) {
    c.pass = false;
    c.detail = "skipped: overfit model unavailable";
    return c;
  }
  SeparationModel<float> model(overfit.cfg, overfit.store);
  std::vector<int> shifts;
  for (int s = 0; s <= 250; s += 25) shifts.push_back(s);
  const auto rows = run_shift_test(model, overfit.corpus[0], shifts);
  double worst = 0;
  for (const auto& [s, d] : rows)
    if (s > 0) worst = std::max(worst, std::abs(d));
  c.pass = worst <= 0.2;
  c.detail = "max |delta SI-SNRi| over shifts 25..250 = " + fmt(worst, 4) + " dB";
  return c;
}

// ---------------------------------------------------------------------------
// 9. Byte-identical ablation CSVs for identical seeds
// ---------------------------------------------------------------------------
Criterion criterion9(const fs::path& work) {
  Criterion c;
  const auto corpus = generate_synthetic_corpus(6, 1.0, 3);
  auto run_to = [&](const fs::path& dir) {
    AblateOptions opts;
    opts.base = preset("tiny");
    opts.family_label = "Conv-TasNet";
    opts.train.max_steps = 3;
    opts.train.segment_len = 4000;
    opts.train.seed = 1;
    opts.out_dir = dir.string();
    run_ablate<float>(opts, corpus);
  };
  run_to(work / "ablate_a");
  run_to(work / "ablate_b");
  auto slurp = [](const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  };
  const bool summary_same = slurp(work / "ablate_a" / "ablation_summary.csv") ==
                            slurp(work / "ablate_b" / "ablation_summary.csv");
  const bool points_same = slurp(work / "ablate_a" / "size_vs_performance.csv") ==
                           slurp(work / "ablate_b" / "size_vs_performance.csv");
  c.pass = summary_same && points_same &&
           !slurp(work / "ablate_a" / "ablation_summary.csv").empty();
  c.detail = std::string("summary ") + (summary_same ? "identical" : "DIFFERS") + ", points " +
             (points_same ? "identical" : "DIFFERS");
  return c;
}

// ---------------------------------------------------------------------------
// 10. Table-shape fidelity of the CSV artifacts
// ---------------------------------------------------------------------------
Criterion criterion10(const fs::path& work, const OverfitResult& overfit) {
  Criterion c;
  std::vector<std::string> problems;

  {
    std::ifstream f(work / "ablate_a" / "ablation_summary.csv");
    std::string header;
    std::getline(f, header);
    if (header != "model,scheme,size_params,compression_pct,si_snri_db,sdri_db")
      problems.push_back("summary header");
    std::set<std::string> schemes;
    int rows = 0, simplified = 0, labeled_base = 0;
    std::string line;
    while (std::getline(f, line)) {
      if (line.empty()) continue;
      ++rows;
      const auto comma = line.find(',');
      const std::string label = line.substr(0, comma);
      const std::string scheme = line.substr(comma + 1, 2);
      if (label.find("Simplified-Base-Model") != std::string::npos)
        ++simplified;
      else
        schemes.insert(scheme);
      if (label.find("(Base-Model)") != std::string::npos) ++labeled_base;
    }
    if (rows != 18) problems.push_back("summary rows=" + std::to_string(rows));
    if (schemes.size() != 16) problems.push_back("summary schemes=" + std::to_string(schemes.size()));
    if (simplified != 2) problems.push_back("summary simplified=" + std::to_string(simplified));
    if (labeled_base != 1) problems.push_back("summary base rows=" + std::to_string(labeled_base));
  }
  {
    std::ifstream f(work / "ablate_a" / "size_vs_performance.csv");
    std::string header;
    std::getline(f, header);
    if (header != "model,params,si_snri_db,family") problems.push_back("points header");
    bool base = false, s1 = false, s2 = false;
    std::string line;
    while (std::getline(f, line)) {
      if (line.find(",base") != std::string::npos) base = true;
      if (line.find("Simplified-Base-Model 1") != std::string::npos) s1 = true;
      if (line.find("Simplified-Base-Model 2") != std::string::npos) s2 = true;
    }
    if (!base || !s1 || !s2) problems.push_back("points missing base/simplified rows");
  }
  if (overfit.store) {
    SeparationModel<float> model(overfit.cfg, overfit.store);
    std::vector<MixtureRecord> subset(overfit.corpus.begin(), overfit.corpus.begin() + 4);
    const auto result = run_noise_test(model, subset, {NoiseKind::Gaussian, NoiseKind::File},
                                       {0.0, 3.0, 5.0}, (work / "noise_wavs").string(), 5);
    const auto csv = (work / "noise_grid.csv").string();
    write_noise_csv(csv, "MiTAS_ss", result);
    std::ifstream f(csv);
    std::string header, row;
    std::getline(f, header);
    std::getline(f, row);
    if (header != "model,clean,gaussian_0db,file_0db,gaussian_3db,file_3db,gaussian_5db,file_5db")
      problems.push_back("noise grid header");
    if (result.cells.size() != 6) problems.push_back("noise grid cells");
    if (row.rfind("MiTAS_ss,", 0) != 0) problems.push_back("noise grid row label");
  } else {
    problems.push_back("noise grid skipped");
  }

  c.pass = problems.empty();
  if (c.pass) {
    c.detail = "summary 16+2+labeled-base rows; points families; noise grid 2 kinds x 3 SNRs";
  } else {
    c.detail = "problems:";
    for (const auto& p : problems) c.detail += " " + p + ";";
  }
  return c;
}

}  // namespace

int main() {
  const fs::path work = fs::temp_directory_path() / "mitas_acceptance";
  fs::remove_all(work);
  fs::create_directories(work);

  int failures = 0;
  OverfitResult overfit;
  const struct {
    const char* name;
    std::function<Criterion()> run;
  } criteria[] = {
      {"1 Conv-TasNet family audit", [] { return criterion1(); }},
      {"2 TasNet family audit", [] { return criterion2(); }},
      {"3 shared-vs-copied equivalence", [] { return criterion3(); }},
      {"4 finite-difference gradient check", [] { return criterion4(); }},
      {"5 metric properties", [] { return criterion5(); }},
      {"6 mixing exactness", [&] { return criterion6(work); }},
      {"7 overfit capability", [&] { return criterion7(overfit); }},
      {"8 shift sensitivity", [&] { return criterion8(overfit); }},
      {"9 ablation determinism", [&] { return criterion9(work); }},
      {"10 table-shape fidelity", [&] { return criterion10(work, overfit); }},
  };

  for (const auto& entry : criteria) {
    Criterion result;
    try {
      result = entry.run();
    } catch (const std::exception& e) {
      result.pass = false;
      result.detail = std::string("exception: ") + e.what();
    }
    std::printf("[%s] criterion %s: %s\n", result.pass ? "PASS" : "FAIL", entry.name,
                result.detail.c_str());
    std::fflush(stdout);
    if (!result.pass) ++failures;
  }

  fs::remove_all(work);
  if (failures == 0) std::printf("acceptance: all 10 criteria passed\n");
  else std::printf("acceptance: %d criteria FAILED\n", failures);
  return failures;
}
