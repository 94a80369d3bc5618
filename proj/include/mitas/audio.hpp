// WAV I/O, SNR-controlled mixing, noise injection, and the synthetic
// two-speaker corpus.
//
// The pipeline is fixed at PCM 16-bit mono 8 kHz; anything else is rejected
// (no resampling in scope). All randomized operations are pure functions of
// their inputs and a seed.
#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <optional>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace mitas {

inline constexpr int kSampleRate = 8000;

struct AudioClip {
  std::vector<double> samples;  // in [-1, 1]
  int sample_rate = kSampleRate;

  int length() const { return static_cast<int>(samples.size()); }
};

struct MixtureRecord {
  std::string id;
  AudioClip mixture;
  std::vector<AudioClip> sources;  // scaled so mixture == sum(sources) + noise exactly
  double snr_db = 0;               // mixing SNR between source 1 and source 2
  std::optional<AudioClip> noise;  // scaled noise actually added, if any
  std::string noise_kind;          // "none", "gaussian" or "file"
  double noise_snr_db = 0;
  uint64_t seed = 0;
  double normalization_gain = 1.0;  // peak-normalization factor applied post-mix
};

enum class NoiseKind { Gaussian, File };

inline const char* noise_kind_name(NoiseKind k) {
  return k == NoiseKind::Gaussian ? "gaussian" : "file";
}

// ---------------------------------------------------------------------------
// WAV PCM-16 mono 8 kHz
// ---------------------------------------------------------------------------

namespace wav_detail {

inline uint32_t read_u32(const unsigned char* p) {
  return static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
         (static_cast<uint32_t>(p[2]) << 16) | (static_cast<uint32_t>(p[3]) << 24);
}
inline uint16_t read_u16(const unsigned char* p) {
  return static_cast<uint16_t>(p[0] | (p[1] << 8));
}
inline void put_u32(std::string& s, uint32_t v) {
  s.push_back(static_cast<char>(v & 0xff));
  s.push_back(static_cast<char>((v >> 8) & 0xff));
  s.push_back(static_cast<char>((v >> 16) & 0xff));
  s.push_back(static_cast<char>((v >> 24) & 0xff));
}
inline void put_u16(std::string& s, uint16_t v) {
  s.push_back(static_cast<char>(v & 0xff));
  s.push_back(static_cast<char>((v >> 8) & 0xff));
}

}  // namespace wav_detail

inline AudioClip read_wav(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("read_wav: cannot open " + path);
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(f)),
                                   std::istreambuf_iterator<char>());
  if (bytes.size() < 44 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0)
    throw std::runtime_error("read_wav: " + path + " is not a RIFF/WAVE file");

  uint16_t audio_format = 0, channels = 0, bits = 0;
  uint32_t rate = 0;
  bool have_fmt = false;
  size_t data_off = 0, data_len = 0;
  size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const char* tag = reinterpret_cast<const char*>(bytes.data() + pos);
    const uint32_t chunk_len = wav_detail::read_u32(bytes.data() + pos + 4);
    const size_t body = pos + 8;
    if (std::memcmp(tag, "fmt ", 4) == 0 && body + 16 <= bytes.size()) {
      audio_format = wav_detail::read_u16(bytes.data() + body);
      channels = wav_detail::read_u16(bytes.data() + body + 2);
      rate = wav_detail::read_u32(bytes.data() + body + 4);
      bits = wav_detail::read_u16(bytes.data() + body + 14);
      have_fmt = true;
    } else if (std::memcmp(tag, "data", 4) == 0) {
      data_off = body;
      data_len = std::min<size_t>(chunk_len, bytes.size() - body);
    }
    pos = body + chunk_len + (chunk_len & 1);  // chunks are word-aligned
  }
  if (!have_fmt || data_off == 0)
    throw std::runtime_error("read_wav: " + path + " has no fmt/data chunk");
  if (audio_format != 1 || channels != 1 || bits != 16 || rate != kSampleRate) {
    std::ostringstream os;
    os << "read_wav: " << path << " has format=" << audio_format << " channels=" << channels
       << " rate=" << rate << " bits=" << bits << "; expected PCM mono " << kSampleRate
       << " Hz 16-bit";
    throw std::runtime_error(os.str());
  }
  AudioClip clip;
  clip.sample_rate = static_cast<int>(rate);
  clip.samples.resize(data_len / 2);
  for (size_t i = 0; i < clip.samples.size(); ++i) {
    const int16_t q = static_cast<int16_t>(wav_detail::read_u16(bytes.data() + data_off + 2 * i));
    clip.samples[i] = static_cast<double>(q) / 32767.0;
  }
  return clip;
}

inline void write_wav(const std::string& path, const AudioClip& clip) {
  if (clip.sample_rate != kSampleRate) {
    std::ostringstream os;
    os << "write_wav: clip has sample rate " << clip.sample_rate << ", pipeline requires "
       << kSampleRate;
    throw std::invalid_argument(os.str());
  }
  const uint32_t data_len = static_cast<uint32_t>(clip.samples.size() * 2);
  std::string out;
  out.reserve(44 + data_len);
  out += "RIFF";
  wav_detail::put_u32(out, 36 + data_len);
  out += "WAVEfmt ";
  wav_detail::put_u32(out, 16);
  wav_detail::put_u16(out, 1);  // PCM
  wav_detail::put_u16(out, 1);  // mono
  wav_detail::put_u32(out, kSampleRate);
  wav_detail::put_u32(out, kSampleRate * 2);  // byte rate
  wav_detail::put_u16(out, 2);                // block align
  wav_detail::put_u16(out, 16);               // bits
  out += "data";
  wav_detail::put_u32(out, data_len);
  for (double v : clip.samples) {
    const double c = std::clamp(v, -1.0, 1.0);
    const auto q = static_cast<int16_t>(std::lround(c * 32767.0));
    wav_detail::put_u16(out, static_cast<uint16_t>(q));
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("write_wav: cannot open " + path + " for writing");
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw std::runtime_error("write_wav: short write to " + path);
}

// ---------------------------------------------------------------------------
// Mixing
// ---------------------------------------------------------------------------

inline double signal_power(const std::vector<double>& x) {
  if (x.empty()) return 0;
  double acc = 0;
  for (double v : x) acc += v * v;
  return acc / static_cast<double>(x.size());
}

inline std::vector<double> loop_to_length(const std::vector<double>& x, size_t len) {
  if (x.empty()) throw std::invalid_argument("loop_to_length: empty signal");
  std::vector<double> out(len);
  for (size_t i = 0; i < len; ++i) out[i] = x[i % x.size()];
  return out;
}

// Scales the interference so that 10*log10(P_signal / P_interference) equals
// snr_db, then peak-normalizes the mixture to 0.9. Sources are stored after
// the same normalization, so mixture == sources[0] + sources[1] exactly.
inline MixtureRecord mix_at_snr(const AudioClip& signal, const AudioClip& interference,
                                double snr_db) {
  if (signal.samples.empty()) throw std::invalid_argument("mix_at_snr: empty signal");
  const auto interf = loop_to_length(interference.samples, signal.samples.size());
  const double p_sig = signal_power(signal.samples);
  const double p_int = signal_power(interf);
  if (p_sig == 0.0) throw std::invalid_argument("mix_at_snr: signal has zero power");
  if (p_int == 0.0) throw std::invalid_argument("mix_at_snr: interference has zero power");
  const double alpha = std::sqrt(p_sig / (p_int * std::pow(10.0, snr_db / 10.0)));

  MixtureRecord rec;
  rec.snr_db = snr_db;
  rec.noise_kind = "none";
  const size_t T = signal.samples.size();
  std::vector<double> mix(T);
  double peak = 0;
  for (size_t i = 0; i < T; ++i) {
    mix[i] = signal.samples[i] + alpha * interf[i];
    peak = std::max(peak, std::abs(mix[i]));
  }
  const double gain = peak > 0 ? 0.9 / peak : 1.0;
  rec.normalization_gain = gain;
  rec.mixture.samples.resize(T);
  rec.sources.resize(2);
  rec.sources[0].samples.resize(T);
  rec.sources[1].samples.resize(T);
  for (size_t i = 0; i < T; ++i) {
    rec.sources[0].samples[i] = gain * signal.samples[i];
    rec.sources[1].samples[i] = gain * alpha * interf[i];
    rec.mixture.samples[i] = rec.sources[0].samples[i] + rec.sources[1].samples[i];
  }
  return rec;
}

// Contaminates the mixture with noise at snr_db measured against the
// mixture's power, then re-normalizes everything to a 0.9 peak.
inline MixtureRecord add_noise(const MixtureRecord& in, NoiseKind kind, double snr_db,
                               const std::string& noise_dir, uint64_t seed) {
  const size_t T = in.mixture.samples.size();
  std::mt19937_64 rng(seed);
  std::vector<double> noise;
  if (kind == NoiseKind::Gaussian) {
    std::normal_distribution<double> dist(0.0, 1.0);
    noise.resize(T);
    for (auto& v : noise) v = dist(rng);
  } else {
    namespace fs = std::filesystem;
    std::vector<std::string> files;
    if (!noise_dir.empty() && fs::is_directory(noise_dir)) {
      for (const auto& entry : fs::directory_iterator(noise_dir))
        if (entry.is_regular_file() && entry.path().extension() == ".wav")
          files.push_back(entry.path().string());
    }
    if (files.empty())
      throw std::runtime_error("add_noise: no WAV files in noise directory \"" + noise_dir + "\"");
    std::sort(files.begin(), files.end());
    const auto& pick = files[rng() % files.size()];
    noise = loop_to_length(read_wav(pick).samples, T);
  }
  const double p_mix = signal_power(in.mixture.samples);
  const double p_noise = signal_power(noise);
  if (p_mix == 0.0) throw std::invalid_argument("add_noise: mixture has zero power");
  if (p_noise == 0.0) throw std::invalid_argument("add_noise: noise has zero power");
  const double beta = std::sqrt(p_mix / (p_noise * std::pow(10.0, snr_db / 10.0)));

  MixtureRecord rec = in;
  rec.noise_kind = noise_kind_name(kind);
  rec.noise_snr_db = snr_db;
  std::vector<double> mix(T);
  double peak = 0;
  for (size_t i = 0; i < T; ++i) {
    mix[i] = in.mixture.samples[i] + beta * noise[i];
    peak = std::max(peak, std::abs(mix[i]));
  }
  const double gain = peak > 0 ? 0.9 / peak : 1.0;
  rec.normalization_gain = in.normalization_gain * gain;
  rec.mixture.samples.resize(T);
  AudioClip scaled_noise;
  scaled_noise.samples.resize(T);
  for (size_t i = 0; i < T; ++i) {
    rec.mixture.samples[i] = gain * mix[i];
    scaled_noise.samples[i] = gain * beta * noise[i];
  }
  for (auto& src : rec.sources)
    for (auto& v : src.samples) v *= gain;
  rec.noise = std::move(scaled_noise);
  return rec;
}

// ---------------------------------------------------------------------------
// Synthetic corpus
// ---------------------------------------------------------------------------

namespace corpus_detail {

// "Speaker 1": amplitude-modulated harmonic tone with a random fundamental.
inline std::vector<double> harmonic_voice(int T, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  const double f0 = 90.0 + 170.0 * u01(rng);
  const double am_rate = 1.0 + 3.0 * u01(rng);
  const double am_phase = 2.0 * std::numbers::pi * u01(rng);
  const int harmonics = 3 + static_cast<int>(u01(rng) * 3.0);
  std::vector<double> phase(static_cast<size_t>(harmonics)), amp(static_cast<size_t>(harmonics));
  for (int h = 0; h < harmonics; ++h) {
    phase[static_cast<size_t>(h)] = 2.0 * std::numbers::pi * u01(rng);
    amp[static_cast<size_t>(h)] = (0.5 + 0.5 * u01(rng)) / (h + 1.0);
  }
  std::vector<double> x(static_cast<size_t>(T));
  for (int t = 0; t < T; ++t) {
    const double tt = static_cast<double>(t) / kSampleRate;
    double v = 0;
    for (int h = 0; h < harmonics; ++h)
      v += amp[static_cast<size_t>(h)] *
           std::sin(2.0 * std::numbers::pi * f0 * (h + 1) * tt + phase[static_cast<size_t>(h)]);
    const double env = 0.55 + 0.45 * std::sin(2.0 * std::numbers::pi * am_rate * tt + am_phase);
    x[static_cast<size_t>(t)] = env * v;
  }
  return x;
}

// "Speaker 2": band-filtered noise with a random band, windowed-sinc FIR.
inline std::vector<double> band_noise_voice(int T, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const double f_lo = 1200.0 + 700.0 * u01(rng);
  const double f_hi = f_lo + 800.0 + 700.0 * u01(rng);
  const double am_rate = 0.8 + 2.0 * u01(rng);
  const double am_phase = 2.0 * std::numbers::pi * u01(rng);

  constexpr int taps = 129;
  const int half = taps / 2;
  std::vector<double> fir(taps);
  auto sinc_lp = [](double fc, int n) {
    // normalized lowpass impulse at cutoff fc (Hz), sample offset n
    const double w = 2.0 * fc / kSampleRate;
    if (n == 0) return w;
    const double x = std::numbers::pi * n;
    return w * std::sin(x * w) / (x * w);
  };
  for (int i = 0; i < taps; ++i) {
    const int n = i - half;
    const double window = 0.54 - 0.46 * std::cos(2.0 * std::numbers::pi * i / (taps - 1));
    fir[static_cast<size_t>(i)] = (sinc_lp(f_hi, n) - sinc_lp(f_lo, n)) * window;
  }

  std::vector<double> white(static_cast<size_t>(T));
  for (auto& v : white) v = gauss(rng);
  std::vector<double> x(static_cast<size_t>(T), 0.0);
  for (int t = 0; t < T; ++t) {
    double acc = 0;
    for (int i = 0; i < taps; ++i) {
      const int src = t - i + half;
      if (src >= 0 && src < T) acc += fir[static_cast<size_t>(i)] * white[static_cast<size_t>(src)];
    }
    const double tt = static_cast<double>(t) / kSampleRate;
    const double env = 0.7 + 0.3 * std::sin(2.0 * std::numbers::pi * am_rate * tt + am_phase);
    x[static_cast<size_t>(t)] = env * acc;
  }
  return x;
}

inline void normalize_rms(std::vector<double>& x, double target_rms) {
  const double p = signal_power(x);
  if (p <= 0) throw std::logic_error("normalize_rms: zero-power synthetic source");
  const double g = target_rms / std::sqrt(p);
  for (auto& v : x) v *= g;
}

}  // namespace corpus_detail

// Two statistically distinct sources per record, mixed at an SNR drawn
// uniformly from [-5, 5] dB. Record i draws everything from seed ^ i.
inline std::vector<MixtureRecord> generate_synthetic_corpus(int count, double duration_s,
                                                            uint64_t seed) {
  if (count < 1) throw std::invalid_argument("generate_synthetic_corpus: count must be >= 1");
  const int T = static_cast<int>(std::lround(duration_s * kSampleRate));
  if (T < 1) throw std::invalid_argument("generate_synthetic_corpus: duration too short");
  std::vector<MixtureRecord> records;
  records.reserve(static_cast<size_t>(count));
  for (int i = 0; i < count; ++i) {
    const uint64_t rec_seed = seed ^ static_cast<uint64_t>(i);
    std::mt19937_64 rng(rec_seed);
    auto a = corpus_detail::harmonic_voice(T, rng);
    auto b = corpus_detail::band_noise_voice(T, rng);
    corpus_detail::normalize_rms(a, 0.1);
    corpus_detail::normalize_rms(b, 0.1);
    std::uniform_real_distribution<double> snr_dist(-5.0, 5.0);
    const double snr = snr_dist(rng);
    AudioClip ca, cb;
    ca.samples = std::move(a);
    cb.samples = std::move(b);
    MixtureRecord rec = mix_at_snr(ca, cb, snr);
    rec.seed = rec_seed;
    char buf[32];
    std::snprintf(buf, sizeof(buf), "rec_%04d", i);
    rec.id = buf;
    records.push_back(std::move(rec));
  }
  return records;
}

// ---------------------------------------------------------------------------
// Corpus manifest (CSV: id,mixture,sources,snr_db,noise_kind,noise_snr_db,seed;
// source paths are ';'-joined, paths relative to the manifest directory)
// ---------------------------------------------------------------------------

inline void write_corpus(const std::string& dir, const std::vector<MixtureRecord>& records) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  std::ofstream manifest(fs::path(dir) / "manifest.csv", std::ios::trunc);
  if (!manifest) throw std::runtime_error("write_corpus: cannot write manifest in " + dir);
  manifest << "id,mixture,sources,snr_db,noise_kind,noise_snr_db,seed\n";
  for (const auto& rec : records) {
    const std::string mix_name = rec.id + "_mix.wav";
    write_wav((fs::path(dir) / mix_name).string(), rec.mixture);
    std::string src_names;
    for (size_t c = 0; c < rec.sources.size(); ++c) {
      const std::string name = rec.id + "_s" + std::to_string(c + 1) + ".wav";
      write_wav((fs::path(dir) / name).string(), rec.sources[c]);
      if (c) src_names += ";";
      src_names += name;
    }
    manifest << rec.id << "," << mix_name << "," << src_names << "," << rec.snr_db << ","
             << rec.noise_kind << "," << rec.noise_snr_db << "," << rec.seed << "\n";
  }
}

inline std::vector<MixtureRecord> read_corpus(const std::string& manifest_path) {
  namespace fs = std::filesystem;
  std::ifstream f(manifest_path);
  if (!f) throw std::runtime_error("read_corpus: cannot open manifest " + manifest_path);
  const fs::path base = fs::path(manifest_path).parent_path();
  std::string line;
  if (!std::getline(f, line)) throw std::runtime_error("read_corpus: empty manifest");
  std::vector<MixtureRecord> records;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cols;
    std::stringstream ss(line);
    std::string col;
    while (std::getline(ss, col, ',')) cols.push_back(col);
    if (cols.size() != 7)
      throw std::runtime_error("read_corpus: malformed manifest line: " + line);
    MixtureRecord rec;
    rec.id = cols[0];
    rec.mixture = read_wav((base / cols[1]).string());
    std::stringstream srcs(cols[2]);
    std::string src;
    while (std::getline(srcs, src, ';')) rec.sources.push_back(read_wav((base / src).string()));
    rec.snr_db = std::stod(cols[3]);
    rec.noise_kind = cols[4];
    rec.noise_snr_db = std::stod(cols[5]);
    rec.seed = std::stoull(cols[6]);
    records.push_back(std::move(rec));
  }
  return records;
}

}  // namespace mitas
