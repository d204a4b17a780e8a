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

#include <gtest/gtest.h>

#include <cmath>
#include <complex>
#include <filesystem>
#include <fstream>
#include <numbers>

#include "mel_oracle.hpp"
#include "test_support.hpp"
#include "tbje/error.hpp"
#include "tbje/features.hpp"

namespace tbje {
namespace {

using Tokens = std::vector<std::string>;

TEST(Tokenize, Examples) {
  EXPECT_EQ(tokenize("Hello, World!").tokens, (Tokens{"hello", "world"}));
  auto empty = tokenize("");
  EXPECT_EQ(empty.tokens, (Tokens{"unk"}));
  EXPECT_TRUE(empty.empty);
  EXPECT_TRUE(tokenize(" ?!... ").empty);
  EXPECT_EQ(tokenize("don't  re-use it.").tokens, (Tokens{"dont", "reuse", "it"}));
}

TEST(Tokenize, MixedScriptFixture) {
  // Frozen output; changing it changes every downstream vocabulary.
  const auto got = tokenize("Ünïcödé STRASSE №42, ΑΒΓ-δ! Привет 2024 ☺ #tag café\t\xff" "x");
  EXPECT_EQ(got.tokens, (Tokens{"ünïcödé", "strasse", "42", "αβγδ", "привет", "2024", "tag", "café", "x"}));
}

TEST(Tokenize, IdempotentOnOwnOutput) {
  Rng rng(31);
  const std::vector<std::string> pieces = {"A", "b", "Z", "9", " ", ",", "!", "É", "ж", "Σ", "-", "\n", "'", "😀", "x"};
  for (int trial = 0; trial < 300; ++trial) {
    std::string s;
    const std::size_t n = rng.below(20);
    for (std::size_t i = 0; i < n; ++i) s += pieces[rng.below(pieces.size())];
    const auto once = tokenize(s).tokens;
    std::string joined;
    for (const auto& t : once) joined += t + " ";
    EXPECT_EQ(tokenize(joined).tokens, once) << s;
    EXPECT_EQ(tokenize(s).tokens, once);
  }
}

class TempDir : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = std::filesystem::temp_directory_path() /
           ("tbje_features_" + std::to_string(::testing::UnitTest::GetInstance()->random_seed()) + "_" +
            ::testing::UnitTest::GetInstance()->current_test_info()->name());
    std::filesystem::create_directories(dir_);
  }
  void TearDown() override { std::filesystem::remove_all(dir_); }
  std::filesystem::path dir_;
};

using VocabularyTest = TempDir;

TEST_F(VocabularyTest, BuildsFromTrainTokens) {
  const std::vector<Tokens> docs = {tokenize("a b").tokens, tokenize("b c").tokens};
  auto v = Vocabulary::build(docs);
  EXPECT_EQ(v.tokens(), (Tokens{"<pad>", "unk", "a", "b", "c"}));
  EXPECT_EQ(v.lookup("c"), 4u);
  EXPECT_EQ(v.lookup("zebra"), Vocabulary::kUnk);
  auto again = Vocabulary::from_text(v.to_text());
  EXPECT_EQ(again.tokens(), v.tokens());
  EXPECT_EQ(again.hash(), v.hash());
  EXPECT_NE(Vocabulary::build(std::vector<Tokens>{{"a"}}).hash(), v.hash());
}

TEST_F(VocabularyTest, EmbeddingFileAndFallback) {
  auto v = Vocabulary::build(std::vector<Tokens>{{"a", "b", "c"}});
  {
    std::ofstream f(dir_ / "emb.txt");
    f << "4 3\n";
    f << "a 1 2 3\n";
    f << "zz 9 9 9\n";
    f << "c -1 0.5 1e-3\n";
  }
  v.load_embeddings(dir_ / "emb.txt", 3);
  EXPECT_EQ(v.missing(), (Tokens{"b"}));
  auto rows = v.embed(Tokens{"a", "b", "c", "nope"});
  const std::vector<double> expect = {1, 2, 3, 0, 0, 0, -1, 0.5, 1e-3, 0, 0, 0};
  for (std::size_t i = 0; i < expect.size(); ++i) EXPECT_EQ(rows[i], expect[i]);

  {
    std::ofstream f(dir_ / "bad.txt");
    f << "a 1 2\n";
  }
  EXPECT_THROW(v.load_embeddings(dir_ / "bad.txt", 3), IoError);
  EXPECT_THROW(v.load_embeddings(dir_ / "absent.txt", 3), IoError);
}

TEST(Mel, MatchesDirectDftOracle) {
  Rng rng(32);
  MelConfig c;
  c.sample_rate = 16000;
  c.fft_size = 512;
  c.window_length = 400;
  c.hop_length = 160;
  c.bands = 40;
  for (std::size_t len : {std::size_t{100}, std::size_t{400}, std::size_t{1000}, std::size_t{4096}}) {
    std::vector<double> x(len);
    for (auto& v : x) v = rng.uniform(-1, 1);
    const auto expect = testing::reference_mel_energies(x, c);
    const auto got = mel_energies(x, c);
    ASSERT_EQ(got.values.rows(), expect.size());
    EXPECT_EQ(got.padded, len < c.window_length);
    double worst = 0;
    for (std::size_t t = 0; t < expect.size(); ++t)
      for (std::size_t m = 0; m < c.bands; ++m)
        worst = std::max(worst, testing::rel_err(got.values.at(t, m), expect[t][m]));
    EXPECT_LT(worst, 1e-6) << len;
  }
}

TEST(Mel, SilenceIsTheLogFloor) {
  MelConfig c;
  std::vector<double> x(5000, 0.0);
  auto out = mel_spectrogram(x, c);
  EXPECT_EQ(out.values.cols(), 80u);
  for (double v : out.values.data()) EXPECT_EQ(v, std::log(1e-5));
}

TEST(Mel, SineAtBandCenterDominatesNeighbours) {
  MelConfig c;
  c.stride = 1;
  const auto centers = mel_band_centers(c);
  for (std::size_t band : {20u, 40u, 60u, 75u}) {
    std::vector<double> x(8192);
    for (std::size_t n = 0; n < x.size(); ++n)
      x[n] = 0.5 * std::sin(2 * std::numbers::pi * centers[band] * double(n) / c.sample_rate);
    auto out = mel_spectrogram(x, c);
    for (std::size_t t = 0; t < out.values.rows(); ++t) {
      EXPECT_GT(out.values.at(t, band), out.values.at(t, band - 1)) << band;
      EXPECT_GT(out.values.at(t, band), out.values.at(t, band + 1)) << band;
    }
  }
}

TEST(Mel, FrameArithmetic) {
  MelConfig c;
  const std::size_t len = c.window_length + 159 * c.hop_length;
  EXPECT_EQ(frame_count(len, c), 160u);
  auto out = mel_spectrogram(std::vector<double>(len, 0.1), c);
  EXPECT_EQ(out.values.rows(), 10u);
  auto odd = mel_spectrogram(std::vector<double>(len + c.hop_length, 0.1), c);
  EXPECT_EQ(odd.values.rows(), 11u);
  auto short_wave = mel_spectrogram(std::vector<double>(10, 0.1), c);
  EXPECT_TRUE(short_wave.padded);
  EXPECT_EQ(short_wave.values.rows(), 1u);
  EXPECT_THROW(mel_spectrogram(std::vector<double>{}, c), ContractError);
}

TEST(Mel, ReductionKeepsFirstFrameOfEachGroup) {
  std::vector<double> v(35);
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = double(i);
  auto r = reduce_frames(Tensor(Shape{35, 1}, v), 16);
  EXPECT_EQ(r.rows(), 3u);
  EXPECT_EQ(r[0], 0.0);
  EXPECT_EQ(r[1], 16.0);
  EXPECT_EQ(r[2], 32.0);
}

TEST(Mel, FilterBankShapeAndGoldenValues) {
  MelConfig c;
  auto bank = mel_filter_bank(c);
  ASSERT_EQ(bank.shape(), (Shape{80, 1025}));
  for (double v : bank.data()) EXPECT_GE(v, 0.0);
  for (std::size_t k = 0; k < 1025; ++k) {
    double s = 0;
    for (std::size_t m = 0; m < 80; ++m) s += bank.at(m, k);
    EXPECT_LE(s, 1.0 + 1e-12);
  }
  // Frozen from the default configuration.
  auto row_sum = [&](std::size_t m) {
    double s = 0;
    for (std::size_t k = 0; k < 1025; ++k) s += bank.at(m, k);
    return s;
  };
  EXPECT_NEAR(hz_to_mel(1000.0), 999.9855371396243, 1e-9);
  EXPECT_NEAR(mel_to_hz(hz_to_mel(4321.0)), 4321.0, 1e-9);
  EXPECT_NEAR(row_sum(0), 2.298007347838156, 1e-12);
  EXPECT_NEAR(row_sum(40), 9.427695850900662, 1e-12);
  EXPECT_NEAR(row_sum(79), 36.601239210317296, 1e-12);
  MelConfig bad = c;
  bad.fft_size = 512;
  EXPECT_THROW(mel_filter_bank(bad), ConfigError);
}

TEST(Mel, NormalizationMapsFloorAndMax) {
  const double lo = std::log(1e-5);
  auto out = normalize_log_mel(Tensor::vector({lo, 2.0, 0.5 * (lo + 2.0), 5.0}), 2.0, 1e-5);
  EXPECT_EQ(out[0], 0.0);
  EXPECT_EQ(out[1], 1.0);
  EXPECT_NEAR(out[2], 0.5, 1e-15);
  EXPECT_EQ(out[3], 1.0);
}

using WavTest = TempDir;

TEST_F(WavTest, RoundTripAndResample) {
  Waveform w;
  w.sample_rate = 8000;
  for (int n = 0; n < 800; ++n) w.samples.push_back(0.5 * std::sin(2 * std::numbers::pi * 200 * n / 8000.0));
  write_wav(dir_ / "a.wav", w);
  auto r = read_wav(dir_ / "a.wav");
  EXPECT_EQ(r.sample_rate, 8000.0);
  ASSERT_EQ(r.samples.size(), 800u);
  for (std::size_t i = 0; i < 800; ++i) EXPECT_NEAR(r.samples[i], w.samples[i], 1.0 / 32768);

  auto up = resample_linear(w.samples, 8000, 16000);
  EXPECT_EQ(up.size(), 1600u);
  for (std::size_t i = 0; i + 2 < up.size(); i += 2) EXPECT_EQ(up[i], w.samples[i / 2]);
  for (std::size_t i = 0; i + 2 < up.size(); ++i)
    EXPECT_NEAR(up[i], 0.5 * std::sin(2 * std::numbers::pi * 200 * double(i) / 16000.0), 2e-3);
  EXPECT_EQ(resample_linear(w.samples, 8000, 8000), w.samples);

  {
    std::ofstream f(dir_ / "junk.wav");
    f << "not audio";
  }
  EXPECT_THROW(read_wav(dir_ / "junk.wav"), IoError);
}

TEST(PadTruncate, Examples) {
  Rng rng(33);
  auto full = testing::random_tensor(Shape{40, 3}, rng);
  auto same = pad_truncate(full, 40);
  EXPECT_EQ(same.mask, Mask(40, 1));
  for (std::size_t i = 0; i < full.numel(); ++i) EXPECT_EQ(same.features[i], full[i]);

  auto shortseq = testing::random_tensor(Shape{3, 2}, rng);
  auto padded = pad_truncate(shortseq, 5);
  EXPECT_EQ(padded.mask, (Mask{1, 1, 1, 0, 0}));
  for (std::size_t i = 0; i < 6; ++i) EXPECT_EQ(padded.features[i], shortseq[i]);
  for (std::size_t i = 6; i < 10; ++i) EXPECT_EQ(padded.features[i], 0.0);

  auto longseq = testing::random_tensor(Shape{100, 2}, rng);
  auto cut = pad_truncate(longseq, 40);
  EXPECT_EQ(cut.features.rows(), 40u);
  for (std::size_t i = 0; i < 80; ++i) EXPECT_EQ(cut.features[i], longseq[i]);
}

}  // namespace
}  // namespace tbje
