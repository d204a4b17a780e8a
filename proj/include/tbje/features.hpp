/* Copyright 2026 The TBJE Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "tbje/dataset.hpp"
#include "tbje/tensor.hpp"

namespace tbje {

// ---------------------------------------------------------------------------
// Linguistic front-end

struct TokenizedText {
  std::vector<std::string> tokens;
  bool empty = false;  // nothing survived; tokens holds a single unk
};

/// Lowercases, drops punctuation and symbols (joining the pieces they
/// separated), keeps letters and digits, and splits on whitespace.
TokenizedText tokenize(std::string_view utf8);

inline constexpr std::size_t kEmbeddingWidth = 300;

class Vocabulary {
 public:
  static constexpr std::size_t kPad = 0;
  static constexpr std::size_t kUnk = 1;
  static constexpr std::string_view kPadToken = "<pad>";
  static constexpr std::string_view kUnkToken = "unk";

  Vocabulary();

  /// Every distinct token of the training documents, sorted, after the
  /// reserved entries.
  static Vocabulary build(std::span<const std::vector<std::string>> train_documents);

  std::size_t size() const { return tokens_.size(); }
  const std::vector<std::string>& tokens() const { return tokens_; }
  std::size_t lookup(std::string_view token) const;

  /// Fills the embedding table from a text file of "token v1 ... v300" lines.
  /// An optional "count dim" header line is skipped. Tokens absent from the
  /// file keep a zero row and are reported by missing().
  void load_embeddings(const std::filesystem::path& path, std::size_t width = kEmbeddingWidth);
  void set_embeddings(Tensor table);
  const Tensor& embeddings() const { return embeddings_; }
  bool has_embeddings() const { return embeddings_.rank() == 2; }
  const std::vector<std::string>& missing() const { return missing_; }

  /// [tokens x width] rows of the embedding table.
  Tensor embed(std::span<const std::string> tokens) const;

  /// One token per line in index order.
  std::string to_text() const;
  static Vocabulary from_text(std::string_view text);
  std::uint64_t hash() const;

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, std::size_t> index_;
  Tensor embeddings_;
  std::vector<std::string> missing_;
};

// ---------------------------------------------------------------------------
// Acoustic front-end

struct MelConfig {
  double sample_rate = 22050.0;
  std::size_t fft_size = 2048;
  std::size_t hop_length = 256;
  std::size_t window_length = 1024;
  std::size_t bands = 80;
  std::size_t stride = 16;
  double floor = 1e-5;
  double min_frequency = 0.0;
  double max_frequency = 0.0;  // 0 means Nyquist

  void validate() const;
  std::size_t bins() const { return fft_size / 2 + 1; }
  double upper_frequency() const { return max_frequency > 0 ? max_frequency : sample_rate / 2; }
};

double hz_to_mel(double hz);
double mel_to_hz(double mel);

/// Center frequency of each band, in Hz.
std::vector<double> mel_band_centers(const MelConfig& cfg);

/// [bands x bins] triangular filters with unit peaks.
Tensor mel_filter_bank(const MelConfig& cfg);

/// Periodic Hann window of the configured window length.
std::vector<double> hann_window(std::size_t length);

/// Frame count of an unpadded signal; 0 when shorter than one window.
std::size_t frame_count(std::size_t samples, const MelConfig& cfg);

struct Spectrogram {
  Tensor values;             // [frames x width]
  bool padded = false;       // input was shorter than one window
};

/// |STFT| of windowed frames, each zero-padded to the FFT size. [frames x bins]
Spectrogram stft_magnitude(std::span<const double> wave, const MelConfig& cfg);

/// Filter bank applied to the magnitude spectrum, before compression.
Spectrogram mel_energies(std::span<const double> wave, const MelConfig& cfg);

/// Row 0 of every group of `stride` rows: ceil(rows / stride) rows.
Tensor reduce_frames(const Tensor& frames, std::size_t stride);

/// Log mel spectrogram after temporal reduction. [ceil(frames/stride) x bands]
Spectrogram mel_spectrogram(std::span<const double> wave, const MelConfig& cfg);

/// Maps ln(floor)..corpus_max onto [0, 1], clipping outside values.
Tensor normalize_log_mel(const Tensor& log_mel, double corpus_max, double floor);

struct Waveform {
  std::vector<double> samples;  // mono, in [-1, 1]
  double sample_rate = 0.0;
};

/// PCM 8/16/24/32-bit or IEEE float RIFF/WAVE; channels are averaged.
Waveform read_wav(const std::filesystem::path& path);
void write_wav(const std::filesystem::path& path, const Waveform& wave);

/// Linear-interpolation resampler. Adequate for speech-band features; no
/// anti-alias filter is applied when downsampling.
std::vector<double> resample_linear(std::span<const double> samples, double from_rate,
                                    double to_rate);

// ---------------------------------------------------------------------------

/// Keeps the first n rows or zero-pads the tail; the mask marks real rows.
ModalityInput pad_truncate(const Tensor& sequence, std::size_t n);

}  // namespace tbje
