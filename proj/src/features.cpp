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

#include "tbje/features.hpp"

#include <fftw3.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <mutex>
#include <numbers>
#include <set>
#include <sstream>

#include "tbje/error.hpp"
#include "tbje/serialize.hpp"

namespace tbje {

namespace {

// Decodes one UTF-8 code point; returns 0xFFFD and advances one byte on
// malformed input.
char32_t next_code_point(std::string_view s, std::size_t& i) {
  const auto b0 = static_cast<unsigned char>(s[i]);
  auto cont = [&](std::size_t k) -> int {
    if (i + k >= s.size()) return -1;
    const auto b = static_cast<unsigned char>(s[i + k]);
    return (b & 0xC0) == 0x80 ? (b & 0x3F) : -1;
  };
  if (b0 < 0x80) {
    ++i;
    return b0;
  }
  std::size_t len = 0;
  char32_t cp = 0;
  if ((b0 & 0xE0) == 0xC0) len = 2, cp = b0 & 0x1F;
  else if ((b0 & 0xF0) == 0xE0) len = 3, cp = b0 & 0x0F;
  else if ((b0 & 0xF8) == 0xF0) len = 4, cp = b0 & 0x07;
  if (len == 0) {
    ++i;
    return 0xFFFD;
  }
  for (std::size_t k = 1; k < len; ++k) {
    const int c = cont(k);
    if (c < 0) {
      ++i;
      return 0xFFFD;
    }
    cp = (cp << 6) | static_cast<char32_t>(c);
  }
  i += len;
  return cp;
}

void append_utf8(std::string& out, char32_t cp) {
  if (cp < 0x80) {
    out.push_back(static_cast<char>(cp));
  } else if (cp < 0x800) {
    out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else if (cp < 0x10000) {
    out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else {
    out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  }
}

bool is_space(char32_t c) {
  return c == ' ' || (c >= 0x09 && c <= 0x0D) || c == 0x85 || c == 0xA0 || c == 0x1680 ||
         (c >= 0x2000 && c <= 0x200A) || c == 0x2028 || c == 0x2029 || c == 0x202F ||
         c == 0x205F || c == 0x3000;
}

// Letters of the scripts we lowercase or keep as-is; anything else that is not
// a digit counts as a symbol.
bool is_word_char(char32_t c) {
  if (c < 0x80) return std::isalnum(static_cast<int>(c)) != 0;
  if (c >= 0xC0 && c <= 0x24F) return c != 0xD7 && c != 0xF7;
  if (c == 0xAA || c == 0xB5 || c == 0xBA) return true;
  if (c >= 0x370 && c <= 0x3FF) return c != 0x37E && c != 0x387 && c != 0x375;
  if (c >= 0x400 && c <= 0x52F) return !(c >= 0x482 && c <= 0x489);
  if (c >= 0x5D0 && c <= 0x5EA) return true;                 // Hebrew letters
  if (c >= 0x620 && c <= 0x64A) return true;                 // Arabic letters
  if (c >= 0x660 && c <= 0x669) return true;                 // Arabic-Indic digits
  if (c >= 0x900 && c <= 0x97F) return c != 0x964 && c != 0x965;  // Devanagari
  if (c >= 0x3040 && c <= 0x30FF) return c != 0x30FB;        // kana
  if (c >= 0x4E00 && c <= 0x9FFF) return true;               // CJK ideographs
  if (c >= 0xAC00 && c <= 0xD7A3) return true;               // Hangul syllables
  if (c >= 0xFF10 && c <= 0xFF19) return true;               // fullwidth digits
  return false;
}

char32_t to_lower(char32_t c) {
  if (c < 0x80) return static_cast<char32_t>(std::tolower(static_cast<int>(c)));
  if ((c >= 0xC0 && c <= 0xDE) && c != 0xD7) return c + 0x20;
  if (c >= 0x100 && c <= 0x137) return c | 1;
  if (c >= 0x139 && c <= 0x148) return (c & 1) ? c + 1 : c;
  if (c >= 0x14A && c <= 0x177) return c | 1;
  if (c == 0x178) return 0xFF;
  if (c >= 0x179 && c <= 0x17E) return (c & 1) ? c + 1 : c;
  if (c >= 0x391 && c <= 0x3AB && c != 0x3A2) return c + 0x20;
  if (c >= 0x386 && c <= 0x38F) {
    switch (c) {
      case 0x386: return 0x3AC;
      case 0x388: return 0x3AD;
      case 0x389: return 0x3AE;
      case 0x38A: return 0x3AF;
      case 0x38C: return 0x3CC;
      case 0x38E: return 0x3CD;
      case 0x38F: return 0x3CE;
      default: return c;
    }
  }
  if (c >= 0x410 && c <= 0x42F) return c + 0x20;
  if (c >= 0x400 && c <= 0x40F) return c + 0x50;
  if (c >= 0x460 && c <= 0x4FF && c != 0x482 && !(c >= 0x483 && c <= 0x489) && c != 0x4C0)
    return (c >= 0x4C1 && c <= 0x4CE) ? ((c & 1) ? c + 1 : c) : (c | 1);
  return c;
}

}  // namespace

TokenizedText tokenize(std::string_view utf8) {
  TokenizedText out;
  std::string current;
  auto flush = [&] {
    if (!current.empty()) out.tokens.push_back(std::move(current));
    current.clear();
  };
  for (std::size_t i = 0; i < utf8.size();) {
    const char32_t c = next_code_point(utf8, i);
    if (is_space(c)) flush();
    else if (is_word_char(c)) append_utf8(current, to_lower(c));
  }
  flush();
  if (out.tokens.empty()) {
    out.tokens.emplace_back(Vocabulary::kUnkToken);
    out.empty = true;
  }
  return out;
}

// ---------------------------------------------------------------------------

Vocabulary::Vocabulary() {
  tokens_ = {std::string(kPadToken), std::string(kUnkToken)};
  index_ = {{tokens_[0], kPad}, {tokens_[1], kUnk}};
}

Vocabulary Vocabulary::build(std::span<const std::vector<std::string>> train_documents) {
  std::set<std::string> distinct;
  for (const auto& doc : train_documents) distinct.insert(doc.begin(), doc.end());
  Vocabulary v;
  for (const auto& t : distinct) {
    if (v.index_.count(t)) continue;
    v.index_.emplace(t, v.tokens_.size());
    v.tokens_.push_back(t);
  }
  return v;
}

std::size_t Vocabulary::lookup(std::string_view token) const {
  auto it = index_.find(std::string(token));
  return it == index_.end() ? kUnk : it->second;
}

void Vocabulary::load_embeddings(const std::filesystem::path& path, std::size_t width) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open embedding file " + path.string());
  std::vector<double> table(tokens_.size() * width, 0.0);
  std::vector<bool> found(tokens_.size(), false);
  std::string line;
  std::size_t line_no = 0;
  std::vector<double> row;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::istringstream fields(line);
    std::string token;
    fields >> token;
    row.clear();
    std::string field;
    while (fields >> field) {
      double value = 0.0;
      const char* end = field.data() + field.size();
      auto [ptr, ec] = std::from_chars(field.data(), end, value);
      if (ec != std::errc() || ptr != end) {
        throw IoError(path.string() + ":" + std::to_string(line_no) + ": bad number '" + field + "'");
      }
      row.push_back(value);
    }
    if (line_no == 1 && row.size() == 1) continue;  // "count dim" header
    if (row.size() != width) {
      throw IoError(path.string() + ":" + std::to_string(line_no) + ": expected " +
                    std::to_string(width) + " values, found " + std::to_string(row.size()));
    }
    auto it = index_.find(token);
    if (it == index_.end() || it->second == kPad || found[it->second]) continue;
    std::copy(row.begin(), row.end(), table.begin() + static_cast<std::ptrdiff_t>(it->second * width));
    found[it->second] = true;
  }
  missing_.clear();
  for (std::size_t i = 2; i < tokens_.size(); ++i)
    if (!found[i]) missing_.push_back(tokens_[i]);
  embeddings_ = Tensor(Shape{tokens_.size(), width}, std::move(table));
}

void Vocabulary::set_embeddings(Tensor table) {
  if (table.rank() != 2 || table.rows() != tokens_.size()) {
    throw DimensionError("embedding table " + shape_string(table.shape()) + " for a vocabulary of " +
                         std::to_string(tokens_.size()));
  }
  embeddings_ = std::move(table);
}

Tensor Vocabulary::embed(std::span<const std::string> tokens) const {
  if (!has_embeddings()) throw ContractError("vocabulary has no embedding table");
  if (tokens.empty()) throw ContractError("embed: empty token list");
  const std::size_t w = embeddings_.cols();
  std::vector<double> out(tokens.size() * w);
  const auto table = embeddings_.data();
  for (std::size_t r = 0; r < tokens.size(); ++r) {
    const std::size_t idx = lookup(tokens[r]);
    std::copy_n(table.begin() + static_cast<std::ptrdiff_t>(idx * w), w,
                out.begin() + static_cast<std::ptrdiff_t>(r * w));
  }
  return Tensor(Shape{tokens.size(), w}, std::move(out));
}

std::string Vocabulary::to_text() const {
  std::string out;
  for (const auto& t : tokens_) out += t + "\n";
  return out;
}

Vocabulary Vocabulary::from_text(std::string_view text) {
  Vocabulary v;
  v.tokens_.clear();
  v.index_.clear();
  std::size_t pos = 0;
  while (pos < text.size()) {
    auto nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    std::string token(text.substr(pos, nl - pos));
    if (v.index_.count(token)) throw IoError("vocabulary: duplicate token '" + token + "'");
    v.index_.emplace(token, v.tokens_.size());
    v.tokens_.push_back(std::move(token));
    pos = nl + 1;
  }
  if (v.tokens_.size() < 2 || v.tokens_[kPad] != kPadToken || v.tokens_[kUnk] != kUnkToken) {
    throw IoError("vocabulary: reserved tokens missing from the first two lines");
  }
  return v;
}

std::uint64_t Vocabulary::hash() const { return io::fnv1a(to_text()); }

// ---------------------------------------------------------------------------

void MelConfig::validate() const {
  auto fail = [](const std::string& m) { throw ConfigError("mel config: " + m); };
  if (!(sample_rate > 0)) fail("sample rate must be positive");
  if (bands < 1) fail("band count must be >= 1");
  if (stride < 1) fail("stride must be >= 1");
  if (hop_length < 1) fail("hop length must be >= 1");
  if (window_length < 1) fail("window length must be >= 1");
  if (fft_size < window_length) fail("FFT size must be >= window length");
  if (!(floor > 0)) fail("log floor must be positive");
  if (min_frequency < 0 || upper_frequency() <= min_frequency || upper_frequency() > sample_rate / 2)
    fail("frequency range must satisfy 0 <= min < max <= sample_rate/2");
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

namespace {

std::vector<double> mel_edges(const MelConfig& cfg) {
  const double lo = hz_to_mel(cfg.min_frequency), hi = hz_to_mel(cfg.upper_frequency());
  std::vector<double> edges(cfg.bands + 2);
  for (std::size_t i = 0; i < edges.size(); ++i)
    edges[i] = mel_to_hz(lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(cfg.bands + 1));
  return edges;
}

}  // namespace

std::vector<double> mel_band_centers(const MelConfig& cfg) {
  cfg.validate();
  auto edges = mel_edges(cfg);
  return {edges.begin() + 1, edges.end() - 1};
}

Tensor mel_filter_bank(const MelConfig& cfg) {
  cfg.validate();
  const auto edges = mel_edges(cfg);
  const std::size_t bins = cfg.bins();
  std::vector<double> w(cfg.bands * bins, 0.0);
  for (std::size_t m = 0; m < cfg.bands; ++m) {
    const double left = edges[m], center = edges[m + 1], right = edges[m + 2];
    for (std::size_t k = 0; k < bins; ++k) {
      const double f = static_cast<double>(k) * cfg.sample_rate / static_cast<double>(cfg.fft_size);
      const double rise = (f - left) / (center - left);
      const double fall = (right - f) / (right - center);
      w[m * bins + k] = std::max(0.0, std::min(rise, fall));
    }
  }
  return Tensor(Shape{cfg.bands, bins}, std::move(w));
}

std::vector<double> hann_window(std::size_t length) {
  std::vector<double> w(length);
  for (std::size_t n = 0; n < length; ++n)
    w[n] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(n) / static_cast<double>(length));
  return w;
}

std::size_t frame_count(std::size_t samples, const MelConfig& cfg) {
  if (samples < cfg.window_length) return 0;
  return 1 + (samples - cfg.window_length) / cfg.hop_length;
}

namespace {

// FFTW planning is not thread-safe; execution on distinct buffers is.
std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

class RealFft {
 public:
  explicit RealFft(std::size_t n) : n_(n) {
    in_ = fftw_alloc_real(n);
    out_ = fftw_alloc_complex(n / 2 + 1);
    std::lock_guard lock(planner_mutex());
    plan_ = fftw_plan_dft_r2c_1d(static_cast<int>(n), in_, out_, FFTW_ESTIMATE);
  }
  ~RealFft() {
    {
      std::lock_guard lock(planner_mutex());
      fftw_destroy_plan(plan_);
    }
    fftw_free(in_);
    fftw_free(out_);
  }
  RealFft(const RealFft&) = delete;
  RealFft& operator=(const RealFft&) = delete;

  double* input() { return in_; }
  void magnitude(double* out) {
    fftw_execute(plan_);
    for (std::size_t k = 0; k <= n_ / 2; ++k) out[k] = std::hypot(out_[k][0], out_[k][1]);
  }

 private:
  std::size_t n_;
  double* in_;
  fftw_complex* out_;
  fftw_plan plan_;
};

}  // namespace

Spectrogram stft_magnitude(std::span<const double> wave, const MelConfig& cfg) {
  cfg.validate();
  if (wave.empty()) throw ContractError("stft: empty waveform");
  Spectrogram out;
  std::size_t frames = frame_count(wave.size(), cfg);
  if (frames == 0) {
    frames = 1;
    out.padded = true;
  }
  const auto window = hann_window(cfg.window_length);
  const std::size_t bins = cfg.bins();
  std::vector<double> values(frames * bins);
  RealFft fft(cfg.fft_size);
  for (std::size_t t = 0; t < frames; ++t) {
    double* buf = fft.input();
    std::fill_n(buf, cfg.fft_size, 0.0);
    const std::size_t start = t * cfg.hop_length;
    for (std::size_t n = 0; n < cfg.window_length && start + n < wave.size(); ++n)
      buf[n] = wave[start + n] * window[n];
    fft.magnitude(values.data() + t * bins);
  }
  out.values = Tensor(Shape{frames, bins}, std::move(values));
  return out;
}

Spectrogram mel_energies(std::span<const double> wave, const MelConfig& cfg) {
  auto spec = stft_magnitude(wave, cfg);
  const auto bank = mel_filter_bank(cfg);
  spec.values = matmul(spec.values, transpose(bank));
  return spec;
}

Tensor reduce_frames(const Tensor& frames, std::size_t stride) {
  if (stride == 0) throw ConfigError("reduce_frames: stride must be >= 1");
  const std::size_t rows = (frames.rows() + stride - 1) / stride;
  const std::size_t w = frames.cols();
  const auto src = frames.data();
  std::vector<double> out(rows * w);
  for (std::size_t i = 0; i < rows; ++i)
    std::copy_n(src.begin() + static_cast<std::ptrdiff_t>(i * stride * w), w,
                out.begin() + static_cast<std::ptrdiff_t>(i * w));
  return Tensor(Shape{rows, w}, std::move(out));
}

Spectrogram mel_spectrogram(std::span<const double> wave, const MelConfig& cfg) {
  auto spec = mel_energies(wave, cfg);
  Tensor reduced = reduce_frames(spec.values, cfg.stride);
  for (auto& v : reduced.mutable_data()) v = std::log(std::max(cfg.floor, v));
  spec.values = reduced;
  return spec;
}

Tensor normalize_log_mel(const Tensor& log_mel, double corpus_max, double floor) {
  const double lo = std::log(floor);
  const double span = corpus_max - lo;
  Tensor out = log_mel.clone();
  for (auto& v : out.mutable_data()) v = span > 0 ? std::clamp((v - lo) / span, 0.0, 1.0) : 0.0;
  return out;
}

// ---------------------------------------------------------------------------

namespace {

std::uint32_t le32(const std::string& b, std::size_t at) {
  return static_cast<std::uint32_t>(static_cast<unsigned char>(b[at])) |
         static_cast<std::uint32_t>(static_cast<unsigned char>(b[at + 1])) << 8 |
         static_cast<std::uint32_t>(static_cast<unsigned char>(b[at + 2])) << 16 |
         static_cast<std::uint32_t>(static_cast<unsigned char>(b[at + 3])) << 24;
}
std::uint16_t le16(const std::string& b, std::size_t at) {
  return static_cast<std::uint16_t>(static_cast<unsigned char>(b[at]) |
                                    static_cast<unsigned char>(b[at + 1]) << 8);
}

}  // namespace

Waveform read_wav(const std::filesystem::path& path) {
  const std::string b = io::read_file(path);
  auto fail = [&](const std::string& m) -> Waveform { throw IoError(path.string() + ": " + m); };
  if (b.size() < 12 || b.compare(0, 4, "RIFF") != 0 || b.compare(8, 4, "WAVE") != 0)
    return fail("not a RIFF/WAVE file");
  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  std::size_t data_at = 0, data_size = 0;
  for (std::size_t pos = 12; pos + 8 <= b.size();) {
    const std::string id = b.substr(pos, 4);
    const std::size_t size = le32(b, pos + 4);
    const std::size_t body = pos + 8;
    if (body + size > b.size() && id != "data") return fail("truncated chunk '" + id + "'");
    if (id == "fmt ") {
      if (size < 16) return fail("short fmt chunk");
      format = le16(b, body);
      channels = le16(b, body + 2);
      rate = le32(b, body + 4);
      bits = le16(b, body + 14);
      if (format == 0xFFFE && size >= 26) format = le16(b, body + 24);  // extensible
    } else if (id == "data") {
      data_at = body;
      data_size = std::min(size, b.size() - body);
    }
    pos = body + size + (size & 1);
  }
  if (channels == 0 || rate == 0) return fail("missing fmt chunk");
  if (data_at == 0) return fail("missing data chunk");
  const bool pcm = format == 1, ieee = format == 3;
  if (!(pcm && (bits == 8 || bits == 16 || bits == 24 || bits == 32)) && !(ieee && (bits == 32 || bits == 64)))
    return fail("unsupported sample format " + std::to_string(format) + "/" + std::to_string(bits) + " bit");
  const std::size_t width = bits / 8, frame = width * channels;
  const std::size_t frames = data_size / frame;
  Waveform w;
  w.sample_rate = rate;
  w.samples.resize(frames);
  for (std::size_t f = 0; f < frames; ++f) {
    double acc = 0.0;
    for (std::size_t c = 0; c < channels; ++c) {
      const char* p = b.data() + data_at + f * frame + c * width;
      double v = 0.0;
      if (ieee && bits == 32) {
        float x;
        std::memcpy(&x, p, 4);
        v = x;
      } else if (ieee) {
        std::memcpy(&v, p, 8);
      } else if (bits == 8) {
        v = (static_cast<unsigned char>(p[0]) - 128.0) / 128.0;
      } else {
        std::int64_t x = 0;
        for (std::size_t k = 0; k < width; ++k)
          x |= static_cast<std::int64_t>(static_cast<unsigned char>(p[k])) << (8 * k);
        const std::int64_t sign = std::int64_t{1} << (bits - 1);
        x = (x ^ sign) - sign;
        v = static_cast<double>(x) / static_cast<double>(sign);
      }
      acc += v;
    }
    w.samples[f] = acc / channels;
  }
  return w;
}

void write_wav(const std::filesystem::path& path, const Waveform& wave) {
  std::string b;
  auto put32 = [&](std::uint32_t v) {
    for (int k = 0; k < 4; ++k) b.push_back(static_cast<char>((v >> (8 * k)) & 0xFF));
  };
  auto put16 = [&](std::uint16_t v) {
    b.push_back(static_cast<char>(v & 0xFF));
    b.push_back(static_cast<char>(v >> 8));
  };
  const auto data_size = static_cast<std::uint32_t>(wave.samples.size() * 2);
  b += "RIFF";
  put32(36 + data_size);
  b += "WAVEfmt ";
  put32(16);
  put16(1);
  put16(1);
  put32(static_cast<std::uint32_t>(wave.sample_rate));
  put32(static_cast<std::uint32_t>(wave.sample_rate) * 2);
  put16(2);
  put16(16);
  b += "data";
  put32(data_size);
  for (double s : wave.samples) {
    const double c = std::clamp(s, -1.0, 32767.0 / 32768.0);
    put16(static_cast<std::uint16_t>(static_cast<std::int16_t>(std::lround(c * 32768.0))));
  }
  io::write_file(path, b);
}

std::vector<double> resample_linear(std::span<const double> samples, double from_rate,
                                    double to_rate) {
  if (!(from_rate > 0) || !(to_rate > 0)) throw ConfigError("resample: rates must be positive");
  if (samples.empty()) return {};
  if (from_rate == to_rate) return {samples.begin(), samples.end()};
  const auto n = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::floor(static_cast<double>(samples.size()) * to_rate / from_rate)));
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double pos = static_cast<double>(i) * from_rate / to_rate;
    const auto j = static_cast<std::size_t>(pos);
    if (j + 1 >= samples.size()) {
      out[i] = samples.back();
    } else {
      const double frac = pos - static_cast<double>(j);
      out[i] = samples[j] + frac * (samples[j + 1] - samples[j]);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

ModalityInput pad_truncate(const Tensor& sequence, std::size_t n) {
  if (sequence.rank() != 2) throw DimensionError("pad_truncate: expected [t x w], got " + shape_string(sequence.shape()));
  if (n == 0) throw ConfigError("pad_truncate: length must be >= 1");
  const std::size_t t = sequence.rows(), w = sequence.cols();
  const std::size_t keep = std::min(t, n);
  std::vector<double> out(n * w, 0.0);
  const auto src = sequence.data();
  std::copy_n(src.begin(), keep * w, out.begin());
  Mask mask(n, 0);
  std::fill_n(mask.begin(), keep, 1);
  return {Tensor(Shape{n, w}, std::move(out)), std::move(mask)};
}

}  // namespace tbje
