// Copyright 2026 The orthokws Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//   http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Waveform handling: 16-bit PCM WAV I/O, MFCC extraction, SNR-controlled
// mixing and time-shift augmentation.

#ifndef ORTHOKWS_AUDIO_HPP_
#define ORTHOKWS_AUDIO_HPP_

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <limits>
#include <mutex>
#include <numbers>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace orthokws {

inline constexpr int kSampleRate = 16000;
inline constexpr std::size_t kClipSamples = 16000;

class AudioInputError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Zero-power signal or noise handed to the SNR mixer.
class DegenerateInputError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct Clip {
  std::vector<double> samples;  // in [-1, 1]
  int sample_rate = kSampleRate;
  int label = -1;
};

// ---------------------------------------------------------------------------
// WAV I/O

namespace detail {

inline std::uint32_t read_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) |
         (static_cast<std::uint32_t>(p[3]) << 24);
}

inline std::uint16_t read_u16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

inline void put_u32(std::string& s, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) s.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline void put_u16(std::string& s, std::uint16_t v) {
  s.push_back(static_cast<char>(v & 0xff));
  s.push_back(static_cast<char>(v >> 8));
}

}  // namespace detail

/// Reads a mono 16-bit PCM RIFF/WAVE file. Any sample rate is returned as-is;
/// callers decide whether it is acceptable.
inline Clip read_wav(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw AudioInputError("cannot open " + path);
  std::vector<unsigned char> buf((std::istreambuf_iterator<char>(in)),
                                 std::istreambuf_iterator<char>());
  if (buf.size() < 12 || std::memcmp(buf.data(), "RIFF", 4) != 0 ||
      std::memcmp(buf.data() + 8, "WAVE", 4) != 0) {
    throw AudioInputError(path + ": not a RIFF/WAVE file");
  }
  std::size_t pos = 12;
  bool have_fmt = false;
  Clip clip;
  std::uint16_t channels = 0, bits = 0, format = 0;
  while (pos + 8 <= buf.size()) {
    const std::uint32_t size = detail::read_u32(&buf[pos + 4]);
    const unsigned char* body = &buf[pos + 8];
    const std::size_t avail = std::min<std::size_t>(size, buf.size() - pos - 8);
    if (std::memcmp(&buf[pos], "fmt ", 4) == 0 && avail >= 16) {
      format = detail::read_u16(body);
      channels = detail::read_u16(body + 2);
      clip.sample_rate = static_cast<int>(detail::read_u32(body + 4));
      bits = detail::read_u16(body + 14);
      have_fmt = true;
    } else if (std::memcmp(&buf[pos], "data", 4) == 0) {
      if (!have_fmt) throw AudioInputError(path + ": data chunk before fmt");
      if (format != 1 || bits != 16 || channels != 1) {
        throw AudioInputError(path + ": need PCM 16-bit mono, got format " +
                              std::to_string(format) + ", " + std::to_string(bits) +
                              " bits, " + std::to_string(channels) + " channels");
      }
      const std::size_t n = avail / 2;
      clip.samples.resize(n);
      for (std::size_t i = 0; i < n; ++i) {
        const auto v = static_cast<std::int16_t>(detail::read_u16(body + 2 * i));
        clip.samples[i] = static_cast<double>(v) / 32768.0;
      }
      return clip;
    }
    pos += 8 + size + (size & 1);
  }
  throw AudioInputError(path + ": no data chunk");
}

/// Writes mono 16-bit PCM; samples are clipped to [-1, 1] and rounded.
inline void write_wav(const std::string& path, const Clip& clip) {
  const auto n = static_cast<std::uint32_t>(clip.samples.size());
  std::string out = "RIFF";
  detail::put_u32(out, 36 + 2 * n);
  out += "WAVEfmt ";
  detail::put_u32(out, 16);
  detail::put_u16(out, 1);
  detail::put_u16(out, 1);
  detail::put_u32(out, static_cast<std::uint32_t>(clip.sample_rate));
  detail::put_u32(out, static_cast<std::uint32_t>(clip.sample_rate) * 2);
  detail::put_u16(out, 2);
  detail::put_u16(out, 16);
  out += "data";
  detail::put_u32(out, 2 * n);
  for (double s : clip.samples) {
    const long v = std::clamp(std::lround(s * 32768.0), -32768L, 32767L);
    detail::put_u16(out, static_cast<std::uint16_t>(static_cast<std::int16_t>(v)));
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw AudioInputError("cannot write " + path);
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
}

/// Zero-pads the tail or centre-crops to exactly n samples.
inline std::vector<double> fit_length(std::span<const double> x, std::size_t n) {
  std::vector<double> out(n, 0.0);
  if (x.size() <= n) {
    std::copy(x.begin(), x.end(), out.begin());
  } else {
    const std::size_t off = (x.size() - n) / 2;
    std::copy(x.begin() + static_cast<std::ptrdiff_t>(off),
              x.begin() + static_cast<std::ptrdiff_t>(off + n), out.begin());
  }
  return out;
}

/// Reads a keyword clip and normalises it to one second at 16 kHz.
inline Clip load_clip(const std::string& path) {
  Clip c = read_wav(path);
  if (c.sample_rate != kSampleRate) {
    throw AudioInputError(path + ": sample rate " + std::to_string(c.sample_rate) +
                          " Hz, expected 16000");
  }
  c.samples = fit_length(c.samples, kClipSamples);
  return c;
}

// ---------------------------------------------------------------------------
// Features

inline std::size_t frame_count(std::size_t n, std::size_t window, std::size_t hop) {
  if (n < window) return 0;
  return 1 + (n - window) / hop;
}

/// Periodic Hann window.
inline std::vector<double> hann_window(std::size_t n) {
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i) {
    w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) /
                                static_cast<double>(n));
  }
  return w;
}

/// Hann-windowed frames, [T x window] row-major.
inline std::vector<double> frame_signal(std::span<const double> x,
                                        std::size_t window = 480,
                                        std::size_t hop = 160) {
  if (hop == 0 || window == 0) throw AudioInputError("frame_signal: zero window or hop");
  if (x.size() < window) {
    throw AudioInputError("frame_signal: " + std::to_string(x.size()) +
                          " samples is shorter than the " + std::to_string(window) +
                          "-sample window");
  }
  const std::size_t t = frame_count(x.size(), window, hop);
  const std::vector<double> w = hann_window(window);
  std::vector<double> frames(t * window);
  for (std::size_t f = 0; f < t; ++f) {
    for (std::size_t i = 0; i < window; ++i) {
      frames[f * window + i] = x[f * hop + i] * w[i];
    }
  }
  return frames;
}

inline double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
inline double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

struct MfccConfig {
  int sample_rate = kSampleRate;
  std::size_t window = 480;   // 30 ms
  std::size_t hop = 160;      // 10 ms
  std::size_t fft_size = 512;
  std::size_t n_mels = 64;
  std::size_t n_coeffs = 40;
  double f_min = 20.0;
  double f_max = 8000.0;
  double log_floor = 1e-6;
};

/// MFCC matrix, [n_coeffs x n_frames] row-major.
struct FeatureMap {
  std::size_t n_coeffs = 0;
  std::size_t n_frames = 0;
  std::vector<double> values;
  double at(std::size_t c, std::size_t t) const { return values[c * n_frames + t]; }
};

/// Triangular filters on the HTK mel scale with unit peaks; rows are filters,
/// columns are FFT bins 0..fft/2.
inline std::vector<double> mel_filterbank(const MfccConfig& cfg) {
  const std::size_t bins = cfg.fft_size / 2 + 1;
  std::vector<double> edges(cfg.n_mels + 2);
  const double lo = hz_to_mel(cfg.f_min), hi = hz_to_mel(cfg.f_max);
  for (std::size_t i = 0; i < edges.size(); ++i) {
    edges[i] = mel_to_hz(lo + (hi - lo) * static_cast<double>(i) /
                                  static_cast<double>(cfg.n_mels + 1));
  }
  std::vector<double> fb(cfg.n_mels * bins, 0.0);
  for (std::size_t m = 0; m < cfg.n_mels; ++m) {
    const double l = edges[m], c = edges[m + 1], u = edges[m + 2];
    for (std::size_t k = 0; k < bins; ++k) {
      const double f = static_cast<double>(k) * cfg.sample_rate /
                       static_cast<double>(cfg.fft_size);
      const double w = std::min((f - l) / (c - l), (u - f) / (u - c));
      fb[m * bins + k] = std::max(0.0, w);
    }
  }
  return fb;
}

/// Owns an FFTW plan; one instance per thread.
class MfccExtractor {
 public:
  explicit MfccExtractor(MfccConfig cfg = {})
      : cfg_(cfg),
        filterbank_(mel_filterbank(cfg)),
        dct_(cfg.n_coeffs * cfg.n_mels) {
    if (cfg.window > cfg.fft_size) throw AudioInputError("window longer than FFT");
    const std::size_t n = cfg.n_mels;
    for (std::size_t k = 0; k < cfg.n_coeffs; ++k) {
      const double s = std::sqrt((k == 0 ? 1.0 : 2.0) / static_cast<double>(n));
      for (std::size_t j = 0; j < n; ++j) {
        dct_[k * n + j] = s * std::cos(std::numbers::pi * static_cast<double>(k) *
                                       (2.0 * static_cast<double>(j) + 1.0) /
                                       (2.0 * static_cast<double>(n)));
      }
    }
    std::lock_guard<std::mutex> lock(planner_mutex());
    in_ = fftw_alloc_real(cfg.fft_size);
    out_ = fftw_alloc_complex(cfg.fft_size / 2 + 1);
    plan_ = fftw_plan_dft_r2c_1d(static_cast<int>(cfg.fft_size), in_, out_,
                                 FFTW_ESTIMATE);
  }

  MfccExtractor(const MfccExtractor&) = delete;
  MfccExtractor& operator=(const MfccExtractor&) = delete;

  ~MfccExtractor() {
    std::lock_guard<std::mutex> lock(planner_mutex());
    fftw_destroy_plan(plan_);
    fftw_free(in_);
    fftw_free(out_);
  }

  const MfccConfig& config() const { return cfg_; }
  const std::vector<double>& filterbank() const { return filterbank_; }

  /// Power spectrum of one windowed frame, bins 0..fft/2.
  std::vector<double> power_spectrum(std::span<const double> frame) {
    std::fill(in_, in_ + cfg_.fft_size, 0.0);
    std::copy(frame.begin(), frame.end(), in_);
    fftw_execute(plan_);
    std::vector<double> p(cfg_.fft_size / 2 + 1);
    for (std::size_t k = 0; k < p.size(); ++k) {
      p[k] = out_[k][0] * out_[k][0] + out_[k][1] * out_[k][1];
    }
    return p;
  }

  std::vector<double> mel_energies(std::span<const double> frame) {
    const std::vector<double> p = power_spectrum(frame);
    std::vector<double> mel(cfg_.n_mels, 0.0);
    for (std::size_t m = 0; m < cfg_.n_mels; ++m) {
      for (std::size_t k = 0; k < p.size(); ++k) {
        mel[m] += filterbank_[m * p.size() + k] * p[k];
      }
    }
    return mel;
  }

  FeatureMap compute(std::span<const double> samples) {
    const std::vector<double> frames = frame_signal(samples, cfg_.window, cfg_.hop);
    const std::size_t t = frames.size() / cfg_.window;
    FeatureMap fm{cfg_.n_coeffs, t, std::vector<double>(cfg_.n_coeffs * t)};
    std::vector<double> logmel(cfg_.n_mels);
    for (std::size_t f = 0; f < t; ++f) {
      const std::vector<double> mel = mel_energies(
          std::span<const double>(frames).subspan(f * cfg_.window, cfg_.window));
      for (std::size_t m = 0; m < cfg_.n_mels; ++m) {
        logmel[m] = std::log(mel[m] + cfg_.log_floor);
      }
      for (std::size_t k = 0; k < cfg_.n_coeffs; ++k) {
        double acc = 0.0;
        for (std::size_t m = 0; m < cfg_.n_mels; ++m) acc += dct_[k * cfg_.n_mels + m] * logmel[m];
        fm.values[k * t + f] = acc;
      }
    }
    return fm;
  }

 private:
  static std::mutex& planner_mutex() {
    static std::mutex m;
    return m;
  }

  MfccConfig cfg_;
  std::vector<double> filterbank_;
  std::vector<double> dct_;
  double* in_ = nullptr;
  fftw_complex* out_ = nullptr;
  fftw_plan plan_ = nullptr;
};

inline FeatureMap mfcc(const Clip& clip) {
  thread_local MfccExtractor extractor;
  return extractor.compute(clip.samples);
}

// ---------------------------------------------------------------------------
// Mixing and augmentation

/// Mean of squares.
inline double rms_power(std::span<const double> x) {
  if (x.empty()) throw AudioInputError("rms_power: empty signal");
  double s = 0.0;
  for (double v : x) s += v * v;
  return s / static_cast<double>(x.size());
}

/// n samples of noise read circularly from offset.
inline std::vector<double> noise_segment(std::span<const double> noise,
                                         std::size_t offset, std::size_t n) {
  if (noise.empty()) throw AudioInputError("noise_segment: empty noise");
  std::vector<double> seg(n);
  for (std::size_t i = 0; i < n; ++i) seg[i] = noise[(offset + i) % noise.size()];
  return seg;
}

/// Gain g with P_s / (g^2 P_n) == 10^(snr/10).
inline double snr_gain(double signal_power, double noise_power, double snr_db) {
  if (!(signal_power > 0.0) || !(noise_power > 0.0)) {
    throw DegenerateInputError("snr mixing needs non-zero signal and noise power");
  }
  if (std::isinf(snr_db) && snr_db > 0) return 0.0;
  return std::sqrt(signal_power / (noise_power * std::pow(10.0, snr_db / 10.0)));
}

struct MixResult {
  Clip mixed;                        // clipped to [-1, 1]
  std::vector<double> scaled_noise;  // g * noise segment, before clipping
  double gain = 0.0;
};

/// signal + g * noise at the requested SNR, noise cropped/tiled from a random
/// offset. Power is measured over the whole signal and the used noise segment.
template <typename Rng>
MixResult mix_at_snr(const Clip& signal, const Clip& noise, double snr_db, Rng& rng) {
  if (signal.samples.empty() || noise.samples.empty()) {
    throw DegenerateInputError("mix_at_snr: empty signal or noise");
  }
  std::uniform_int_distribution<std::size_t> pick(0, noise.samples.size() - 1);
  const std::size_t offset = pick(rng);
  std::vector<double> seg = noise_segment(noise.samples, offset, signal.samples.size());
  const double g = snr_gain(rms_power(signal.samples), rms_power(seg), snr_db);
  MixResult r;
  r.gain = g;
  r.mixed = signal;
  r.scaled_noise.resize(seg.size());
  for (std::size_t i = 0; i < seg.size(); ++i) {
    r.scaled_noise[i] = g * seg[i];
    r.mixed.samples[i] = std::clamp(signal.samples[i] + r.scaled_noise[i], -1.0, 1.0);
  }
  return r;
}

/// Delays (positive) or advances (negative) by whole samples, zero-filling.
inline Clip shift_samples(const Clip& clip, std::ptrdiff_t shift) {
  Clip out = clip;
  const auto n = static_cast<std::ptrdiff_t>(clip.samples.size());
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const std::ptrdiff_t src = i - shift;
    out.samples[static_cast<std::size_t>(i)] =
        (src >= 0 && src < n) ? clip.samples[static_cast<std::size_t>(src)] : 0.0;
  }
  return out;
}

template <typename Rng>
Clip time_shift(const Clip& clip, double max_shift_ms, Rng& rng) {
  if (max_shift_ms < 0) throw AudioInputError("time_shift: negative max shift");
  const auto max_shift = static_cast<std::ptrdiff_t>(
      std::floor(max_shift_ms * clip.sample_rate / 1000.0));
  if (max_shift == 0) return clip;
  std::uniform_int_distribution<std::ptrdiff_t> pick(-max_shift, max_shift);
  return shift_samples(clip, pick(rng));
}

}  // namespace orthokws

#endif  // ORTHOKWS_AUDIO_HPP_
