#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "mitas/checkpoint.hpp"
#include "mitas/experiment.hpp"
#include "mitas/train.hpp"

using namespace mitas;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const char* name) {
  const auto dir = fs::temp_directory_path() / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

TrainConfig small_budget(int steps, uint64_t seed = 5) {
  TrainConfig tc;
  tc.segment_len = 2000;
  tc.batch_size = 2;
  tc.max_steps = steps;
  tc.seed = seed;
  return tc;
}

}  // namespace

TEST_CASE("two runs with an identical seed produce identical loss curves") {
  const auto records = generate_synthetic_corpus(4, 0.5, 3);
  auto run = [&] {
    ModelConfig cfg = preset("tiny");
    cfg.sharing = parse_scheme("ss");
    Trainer<float> trainer(small_budget(6), records, cfg, build_parameter_store<float>(cfg, 5));
    std::vector<double> losses;
    for (const auto& log : trainer.run(6)) losses.push_back(log.loss);
    return losses;
  };
  CHECK(run() == run());
}

TEST_CASE("a tiny clip norm freezes the parameters") {
  const auto records = generate_synthetic_corpus(3, 0.5, 11);
  auto drift_with = [&](double clip) {
    ModelConfig cfg = preset("tiny");
    auto store = build_parameter_store<float>(cfg, 1);
    std::map<ParamKey, std::vector<float>> before;
    for (const auto& [k, t] : store->canonical()) before[k] = t->data;
    auto tc = small_budget(5);
    tc.clip_norm = clip;
    Trainer<float> trainer(tc, records, cfg, store);
    trainer.run(5);
    double max_drift = 0;
    for (const auto& [k, t] : store->canonical()) {
      const auto& b = before[k];
      for (size_t i = 0; i < t->data.size(); ++i)
        max_drift = std::max(max_drift, std::abs(static_cast<double>(t->data[i] - b[i])));
    }
    return max_drift;
  };
  const double frozen = drift_with(1e-9);
  const double normal = drift_with(5.0);
  CHECK(frozen < 1e-3);  // adam_eps floors the update at ~lr*clip/eps per step
  CHECK(frozen < normal / 4.0);
}

TEST_CASE("a short training run reduces the loss") {
  const auto records = generate_synthetic_corpus(2, 0.5, 13);
  ModelConfig cfg = preset("tiny");
  cfg.sharing = parse_scheme("ss");
  Trainer<float> trainer(small_budget(40, 17), records, cfg, build_parameter_store<float>(cfg, 17));
  const auto logs = trainer.run(40);
  const double first = logs.front().loss;
  double last_avg = 0;
  for (size_t i = logs.size() - 5; i < logs.size(); ++i) last_avg += logs[i].loss;
  last_avg /= 5.0;
  CHECK(last_avg < first);
}

TEST_CASE("training aborts with the step number when the loss goes non-finite") {
  const auto records = generate_synthetic_corpus(2, 0.5, 19);
  ModelConfig cfg = preset("tiny");
  auto store = build_parameter_store<float>(cfg, 23);
  store->lookup(site_key(Site::Decoder, Role::Weight))->data[0] =
      std::numeric_limits<float>::quiet_NaN();
  Trainer<float> trainer(small_budget(3), records, cfg, store);
  CHECK_THROWS_AS(trainer.step(), TrainingDiverged);
  try {
    auto fresh = build_parameter_store<float>(cfg, 23);
    fresh->lookup(site_key(Site::Decoder, Role::Weight))->data[0] =
        std::numeric_limits<float>::quiet_NaN();
    Trainer<float> t2(small_budget(3), records, cfg, fresh);
    t2.step();
    FAIL("expected divergence");
  } catch (const TrainingDiverged& e) {
    CHECK(e.step == 1);
    CHECK_THAT(e.what(), Catch::Matchers::ContainsSubstring("step 1"));
  }
}

TEST_CASE("least-squares-fit decoder approximately inverts the encoder") {
  ModelConfig cfg = preset("tiny");
  auto store = build_parameter_store<double>(cfg, 29);
  SeparationModel<double> model(cfg, store);

  std::mt19937_64 rng(31);
  auto x = uniform_tensor<double>({512}, -0.8, 0.8, rng);
  auto features = model.encode(x);  // [N, F]
  const int N = cfg.encoder_channels, L = cfg.encoder_window, stride = cfg.encoder_stride;
  const int F = features->dim(1);
  const int T = model.analyzed_len(512);
  const int dims = N * L;

  // design: reconstruction[s] = sum_{n,l} w[n,l] * f[n, (s-l)/stride]
  auto f_at = [&](int n, int frame) {
    return (frame >= 0 && frame < F) ? features->data[static_cast<size_t>(n) * F + frame] : 0.0;
  };
  std::vector<double> gram(static_cast<size_t>(dims) * dims, 0.0), rhs(static_cast<size_t>(dims), 0.0);
  std::vector<double> row(static_cast<size_t>(dims));
  for (int s = 0; s < T; ++s) {
    std::fill(row.begin(), row.end(), 0.0);
    for (int l = 0; l < L; ++l) {
      if ((s - l) % stride != 0) continue;
      const int frame = (s - l) / stride;
      for (int n = 0; n < N; ++n) row[static_cast<size_t>(n) * L + l] = f_at(n, frame);
    }
    for (int i = 0; i < dims; ++i) {
      if (row[static_cast<size_t>(i)] == 0.0) continue;
      rhs[static_cast<size_t>(i)] += row[static_cast<size_t>(i)] * x->data[static_cast<size_t>(s)];
      for (int j = 0; j < dims; ++j)
        gram[static_cast<size_t>(i) * dims + j] += row[static_cast<size_t>(i)] * row[static_cast<size_t>(j)];
    }
  }
  for (int i = 0; i < dims; ++i) gram[static_cast<size_t>(i) * dims + i] += 1e-9;

  // Gaussian elimination with partial pivoting
  std::vector<double> w(rhs);
  for (int col = 0; col < dims; ++col) {
    int pivot = col;
    for (int r = col + 1; r < dims; ++r)
      if (std::abs(gram[static_cast<size_t>(r) * dims + col]) >
          std::abs(gram[static_cast<size_t>(pivot) * dims + col]))
        pivot = r;
    for (int c = 0; c < dims; ++c)
      std::swap(gram[static_cast<size_t>(col) * dims + c], gram[static_cast<size_t>(pivot) * dims + c]);
    std::swap(w[static_cast<size_t>(col)], w[static_cast<size_t>(pivot)]);
    const double d = gram[static_cast<size_t>(col) * dims + col];
    for (int r = 0; r < dims; ++r) {
      if (r == col) continue;
      const double factor = gram[static_cast<size_t>(r) * dims + col] / d;
      if (factor == 0.0) continue;
      for (int c = col; c < dims; ++c)
        gram[static_cast<size_t>(r) * dims + c] -= factor * gram[static_cast<size_t>(col) * dims + c];
      w[static_cast<size_t>(r)] -= factor * w[static_cast<size_t>(col)];
    }
  }
  for (int i = 0; i < dims; ++i) w[static_cast<size_t>(i)] /= gram[static_cast<size_t>(i) * dims + i];

  auto rel_err = [&](const TensorPtr<double>& recon) {
    double num = 0, den = 0;
    for (int s = 0; s < T; ++s) {
      const double d = recon->data[static_cast<size_t>(s)] - x->data[static_cast<size_t>(s)];
      num += d * d;
      den += x->data[static_cast<size_t>(s)] * x->data[static_cast<size_t>(s)];
    }
    return std::sqrt(num / den);
  };

  const double untrained = rel_err(model.decode(features));

  auto dec = store->lookup(site_key(Site::Decoder, Role::Weight));
  for (int n = 0; n < N; ++n)
    for (int l = 0; l < L; ++l)
      dec->data[static_cast<size_t>(n) * L + l] = w[static_cast<size_t>(n) * L + l];
  const double fitted = rel_err(model.decode(features));  // all-ones masks

  CHECK(fitted < untrained);
  CHECK(fitted < 0.5);

  // zero masks give zero waveforms
  auto silent = model.decode(zeros<double>({N, F}));
  for (double v : silent->data) CHECK(v == 0.0);
}

TEST_CASE("checkpoints round-trip the model and resume training exactly") {
  const auto dir = temp_dir("mitas_ckpt");
  const auto records = generate_synthetic_corpus(3, 0.5, 37);
  ModelConfig cfg = preset("tiny");
  cfg.sharing = parse_scheme("sd");
  const auto path = (dir / "model.ckpt").string();

  // one continuous 8-step run
  auto store_a = build_parameter_store<float>(cfg, 41);
  Trainer<float> cont(small_budget(8, 43), records, cfg, store_a);
  cont.run(8);

  // 4 steps, checkpoint, reload, 4 more
  auto store_b = build_parameter_store<float>(cfg, 41);
  Trainer<float> first(small_budget(8, 43), records, cfg, store_b);
  first.run(4);
  save_checkpoint(path, cfg, 43, first.current_step(), *store_b, &first.adam_m(), &first.adam_v());

  auto ck = load_checkpoint<float>(path);
  CHECK(ck.step == 4);
  CHECK(ck.config.sharing.label() == "sd");
  Trainer<float> second(small_budget(8, 43), records, ck.config, ck.store, ck.step);
  REQUIRE(ck.has_optimizer);
  second.adam_m() = ck.adam_m;
  second.adam_v() = ck.adam_v;
  second.run(4);

  auto it_a = store_a->canonical().begin();
  auto it_b = ck.store->canonical().begin();
  for (; it_a != store_a->canonical().end(); ++it_a, ++it_b) {
    REQUIRE(it_b != ck.store->canonical().end());
    CHECK(it_a->second->data == it_b->second->data);
  }

  // loading into the wrong dtype is rejected
  CHECK_THROWS_WITH(load_checkpoint<double>(path), Catch::Matchers::ContainsSubstring("dtype"));
  CHECK_THROWS(load_checkpoint<float>((dir / "missing.ckpt").string()));
}

TEST_CASE("checkpointed forward is identical after reload") {
  const auto dir = temp_dir("mitas_ckpt_fwd");
  ModelConfig cfg = preset("tiny");
  cfg.sharing = parse_scheme("aa");
  auto store = build_parameter_store<float>(cfg, 47);
  const auto path = (dir / "fwd.ckpt").string();
  save_checkpoint(path, cfg, 47, 0, *store);
  auto ck = load_checkpoint<float>(path);

  std::mt19937_64 rng(53);
  auto x = uniform_tensor<float>({600}, -0.5f, 0.5f, rng);
  SeparationModel<float> a(cfg, store), b(ck.config, ck.store);
  CHECK(a.forward(x).sources->data == b.forward(x).sources->data);
}

TEST_CASE("experiment runners emit the documented table shapes") {
  const auto dir = temp_dir("mitas_runs");
  const auto records = generate_synthetic_corpus(3, 0.5, 59);

  SECTION("ablation rows and files") {
    AblateOptions opts;
    opts.base = preset("tiny");
    opts.family_label = "Conv-TasNet";
    opts.train = small_budget(0);
    opts.out_dir = (dir / "ablate").string();
    const auto rows = run_ablate<float>(opts, records);
    REQUIRE(rows.size() == 18);  // 16 schemes + 2 simplified controls
    CHECK(rows[0].label == "Conv-TasNet (Base-Model)");
    CHECK(rows[0].family == "base");
    CHECK(rows[0].compression_pct == 100.0);
    std::set<std::string> schemes;
    for (size_t i = 0; i < 16; ++i) schemes.insert(rows[i].scheme);
    CHECK(schemes.size() == 16);
    CHECK(rows[16].label == "Simplified-Base-Model 1");
    CHECK(rows[17].label == "Simplified-Base-Model 2");
    CHECK(rows[16].family == "simplified");

    std::ifstream summary(fs::path(opts.out_dir) / "ablation_summary.csv");
    std::string header;
    std::getline(summary, header);
    CHECK(header == "model,scheme,size_params,compression_pct,si_snri_db,sdri_db");
    int count = 0;
    std::string line;
    while (std::getline(summary, line))
      if (!line.empty()) ++count;
    CHECK(count == 18);

    std::ifstream points(fs::path(opts.out_dir) / "size_vs_performance.csv");
    std::getline(points, header);
    CHECK(header == "model,params,si_snri_db,family");
    bool has_base = false, has_s1 = false, has_s2 = false;
    while (std::getline(points, line)) {
      if (line.find("Base-Model),") != std::string::npos && line.find("base") != std::string::npos)
        has_base = true;
      if (line.find("Simplified-Base-Model 1") != std::string::npos) has_s1 = true;
      if (line.find("Simplified-Base-Model 2") != std::string::npos) has_s2 = true;
    }
    CHECK(has_base);
    CHECK(has_s1);
    CHECK(has_s2);
  }

  SECTION("shift test is exactly zero at shift zero") {
    auto model = SeparationModel<float>::random(preset("tiny"), 61);
    const auto rows = run_shift_test(model, records[0], {0, 25, 50});
    REQUIRE(rows.size() == 3);
    CHECK(rows[0].first == 0);
    CHECK(rows[0].second == 0.0);
    const auto csv = (dir / "shift.csv").string();
    write_shift_csv(csv, rows);
    std::ifstream f(csv);
    std::string header;
    std::getline(f, header);
    CHECK(header == "shift,delta_si_snri_db");
  }

  SECTION("noise grid covers kinds x SNRs plus the clean column") {
    auto model = SeparationModel<float>::random(preset("tiny"), 67);
    const auto noise_dir = (dir / "noise").string();
    fs::create_directories(noise_dir);
    write_wav(noise_dir + "/hum.wav", [] {
      AudioClip c;
      c.samples.resize(1600);
      for (int i = 0; i < 1600; ++i)
        c.samples[static_cast<size_t>(i)] = 0.4 * std::sin(2.0 * std::numbers::pi * 120.0 * i / kSampleRate);
      return c;
    }());
    const auto result =
        run_noise_test(model, records, {NoiseKind::Gaussian, NoiseKind::File}, {0.0, 3.0, 5.0},
                       noise_dir, 71);
    REQUIRE(result.cells.size() == 6);
    CHECK(result.cells[0].kind == NoiseKind::Gaussian);
    CHECK(result.cells[1].kind == NoiseKind::File);
    CHECK(result.cells[0].snr_db == 0.0);
    CHECK(result.cells[5].snr_db == 5.0);
    const auto csv = (dir / "noise.csv").string();
    write_noise_csv(csv, "MiTAS_ss", result);
    std::ifstream f(csv);
    std::string header, row;
    std::getline(f, header);
    CHECK(header ==
          "model,clean,gaussian_0db,file_0db,gaussian_3db,file_3db,gaussian_5db,file_5db");
    std::getline(f, row);
    CHECK(row.rfind("MiTAS_ss,", 0) == 0);
  }

  SECTION("eval rows serialize with the permutation column") {
    auto model = SeparationModel<float>::random(preset("tiny"), 73);
    const auto rows = run_eval(model, records);
    REQUIRE(rows.size() == records.size());
    const auto csv = (dir / "eval.csv").string();
    write_eval_csv(csv, rows);
    std::ifstream f(csv);
    std::string header;
    std::getline(f, header);
    CHECK(header == "utterance_id,scheme,si_snr,si_snri,sdr,sdri,permutation");
    std::string line;
    int count = 0;
    while (std::getline(f, line))
      if (!line.empty()) ++count;
    CHECK(count == static_cast<int>(records.size()));
  }
}
