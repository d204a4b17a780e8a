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
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "tbje/dataset.hpp"
#include "tbje/nn.hpp"
#include "tbje/tensor.hpp"

namespace tbje {

enum class DropoutMode : std::uint8_t {
  per_sublayer,  // after attention, MLP and glimpse sub-functions
  per_block,     // after the attention sub-function only
};

enum class Variant : std::uint8_t {
  automatic,  // monomodal for one modality, joint otherwise
  monomodal,  // self-attention + MLP blocks, no in-block glimpse
  joint,      // lockstep co-attention blocks with an in-block glimpse layer
};

struct ModalityConfig {
  Modality modality = Modality::linguistic;
  std::size_t input_width = 0;
  std::size_t length = 0;             // padded row count N
  std::size_t glimpses = 0;           // 0 means "equal to length"
  bool positional_encoding = false;

  std::size_t glimpse_count() const { return glimpses == 0 ? length : glimpses; }
};

struct EncoderConfig {
  std::size_t blocks = 6;
  std::size_t width = 512;
  std::size_t heads = 4;
  std::size_t ff_width = 1024;
  double dropout_block = 0.1;
  double dropout_classifier = 0.5;
  DropoutMode dropout_mode = DropoutMode::per_sublayer;
  Variant variant = Variant::automatic;
  Modality primary = Modality::linguistic;
  std::vector<ModalityConfig> modalities;
  Task task = Task::sentiment7;
  double layer_norm_eps = 1e-5;

  bool has(Modality m) const;
  const ModalityConfig& modality(Modality m) const;
  /// Variant after resolving `automatic`.
  Variant resolved_variant() const;
  bool in_block_glimpse() const { return resolved_variant() == Variant::joint; }

  /// Throws ConfigError describing the first violated invariant.
  void validate() const;

  /// Canonical text form (JSON with sorted keys), stable across runs.
  std::string to_text() const;
  static EncoderConfig from_text(const std::string& text);
};

/// L (300-wide, 50 rows, positional encoding on) + A (80-wide, 40 rows),
/// primary L, 6 blocks of width 512 with 4 heads and a 1024-wide MLP.
EncoderConfig full_size_encoder_config();

/// Throws ConfigError naming the first structural field where `actual`
/// differs from `expected`, with both values.
void check_compatible(const EncoderConfig& expected, const EncoderConfig& actual);

/// Soft-attention glimpses: a shared row embedding W_m (width -> 2*width) and
/// one scoring vector per glimpse (rows of `vectors`, each 2*width wide).
struct GlimpseParams {
  Linear embed;
  Tensor vectors;  // [G x 2*width]

  static GlimpseParams init(std::size_t width, std::size_t count, Rng& rng);
  std::size_t count() const { return vectors.rows(); }

  template <typename Fn>
  void visit(const std::string& prefix, Fn&& fn) {
    embed.visit(prefix + ".embed", fn);
    fn(prefix + ".vectors", vectors);
  }
};

/// [G x N] attention weights; row i is softmax over valid rows of v_i . (W_m M_j).
Tensor glimpse_weights(const Tensor& m, const GlimpseParams& params, const Mask& mask);

/// [G x width]; row i is the weighted sum of the rows of `m`.
Tensor glimpse(const Tensor& m, const GlimpseParams& params, const Mask& mask);

struct EncoderBlock {
  MhaParams attention;
  LayerNormParams attention_norm;
  MlpParams mlp;
  LayerNormParams mlp_norm;
  std::optional<GlimpseParams> glimpse;
  std::optional<LayerNormParams> glimpse_norm;
};

struct ModalityEncoder {
  ModalityConfig config;
  Linear input;                   // input_width -> width
  std::vector<EncoderBlock> blocks;
  GlimpseParams pool;             // final glimpse of size 1
  Tensor positions;               // [N x width], constant; zeros when disabled
};

/// All learnable parameters of one encoder-classifier, addressable by name.
struct TbjeModel {
  EncoderConfig config;
  std::uint64_t vocabulary_hash = 0;
  std::vector<ModalityEncoder> encoders;  // in config.modalities order
  LayerNormParams classifier_norm;
  Linear classifier;

  static TbjeModel create(const EncoderConfig& config, std::uint64_t seed);

  const ModalityEncoder& encoder(Modality m) const;
  /// Handles sharing storage with the model, in a stable order.
  ParameterList parameters() const;
  /// Independent deep copy.
  TbjeModel clone() const;
  void zero_grad();
};

/// Per-modality block states: states[m][0] is the projected input and
/// states[m][b] the output of block b.
struct Encoding {
  std::map<Modality, std::vector<Tensor>> states;
  std::map<Modality, Mask> masks;

  const Tensor& final_state(Modality m) const { return states.at(m).back(); }
};

using ExampleInputs = std::map<Modality, ModalityInput>;

/// x W + b, plus the positional table when enabled for the modality.
Tensor project_input(const ModalityEncoder& encoder, const ModalityInput& input);

/// Stack of self-attention + MLP blocks on one modality (no in-block glimpse).
std::vector<Tensor> encode_monomodal(const ModalityInput& input, const ModalityEncoder& encoder,
                                     const EncoderConfig& config, const ForwardContext& ctx);

/// Lockstep encoding: at block b the primary modality runs self-attention and
/// every other modality y runs MHA(y, x_b, x_b) against the primary's block-b
/// input x_b; each block then applies the MLP and, for the joint variant, the
/// glimpse sublayer.
Encoding encode_joint(const ExampleInputs& inputs, const TbjeModel& model,
                      const ForwardContext& ctx);

/// Dispatches on the resolved variant.
Encoding encode(const ExampleInputs& inputs, const TbjeModel& model, const ForwardContext& ctx);

/// Final size-1 glimpse per modality, element-wise sum, classifier dropout,
/// W_a(LayerNorm(s)). Returns [1 x classes] logits.
Tensor classify(const Encoding& encoding, const TbjeModel& model, const ForwardContext& ctx);

Tensor forward(const TbjeModel& model, const ExampleInputs& inputs, const ForwardContext& ctx);

/// [batch x classes] logits for every example of `split`.
Tensor forward_batch(const TbjeModel& model, const Split& split, const ForwardContext& ctx);

// Checkpoint layout (little-endian):
//   "TBJM" | u32 version | string config (canonical text) | u64 vocabulary hash
//   | u32 tensor count | count x (string name | TBJT tensor)
// where string = u32 byte length + bytes.
inline constexpr std::uint32_t kCheckpointVersion = 1;

std::string serialize_model(const TbjeModel& model);
TbjeModel deserialize_model(const std::string& bytes);
void save_model(const std::filesystem::path& path, const TbjeModel& model);
TbjeModel load_model(const std::filesystem::path& path);
/// Loads and checks structural compatibility with `expected`.
TbjeModel load_model(const std::filesystem::path& path, const EncoderConfig& expected);

}  // namespace tbje
