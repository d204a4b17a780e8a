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

#include "tbje/model.hpp"

#include <algorithm>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "tbje/error.hpp"
#include "tbje/serialize.hpp"

namespace tbje {

using nlohmann::json;

namespace {

std::string_view dropout_mode_name(DropoutMode m) {
  return m == DropoutMode::per_block ? "per_block" : "per_sublayer";
}

DropoutMode parse_dropout_mode(const std::string& s) {
  if (s == "per_sublayer") return DropoutMode::per_sublayer;
  if (s == "per_block") return DropoutMode::per_block;
  throw ConfigError("unknown dropout_mode '" + s + "' (expected per_sublayer or per_block)");
}

std::string_view variant_name(Variant v) {
  switch (v) {
    case Variant::automatic: return "auto";
    case Variant::monomodal: return "monomodal";
    case Variant::joint: return "joint";
  }
  return "?";
}

Variant parse_variant(const std::string& s) {
  if (s == "auto") return Variant::automatic;
  if (s == "monomodal") return Variant::monomodal;
  if (s == "joint") return Variant::joint;
  throw ConfigError("unknown variant '" + s + "' (expected auto, monomodal or joint)");
}

void reject_unknown_keys(const json& j, std::initializer_list<std::string_view> known,
                         const std::string& where) {
  for (const auto& [key, value] : j.items()) {
    if (std::find(known.begin(), known.end(), key) == known.end()) {
      throw ConfigError(where + ": unknown key '" + key + "'");
    }
  }
}

template <typename T>
T get_field(const json& j, const char* key, const std::string& where) {
  if (!j.contains(key)) throw ConfigError(where + ": missing key '" + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(where + ": bad value for '" + key + "': " + e.what());
  }
}

// Visits every learnable tensor with its hierarchical name, in a fixed order.
template <typename Fn>
void visit_parameters(TbjeModel& model, Fn&& fn) {
  for (auto& enc : model.encoders) {
    const std::string tag(modality_tag(enc.config.modality));
    enc.input.visit(tag + ".input", fn);
    for (std::size_t b = 0; b < enc.blocks.size(); ++b) {
      auto& block = enc.blocks[b];
      const std::string p = tag + ".block" + std::to_string(b);
      block.attention.visit(p + ".attention", fn);
      block.attention_norm.visit(p + ".attention_norm", fn);
      block.mlp.visit(p + ".mlp", fn);
      block.mlp_norm.visit(p + ".mlp_norm", fn);
      if (block.glimpse) block.glimpse->visit(p + ".glimpse", fn);
      if (block.glimpse_norm) block.glimpse_norm->visit(p + ".glimpse_norm", fn);
    }
    enc.pool.visit(tag + ".pool", fn);
  }
  model.classifier_norm.visit("classifier.norm", fn);
  model.classifier.visit("classifier.output", fn);
}

}  // namespace

// ---------------------------------------------------------------------------
// EncoderConfig

bool EncoderConfig::has(Modality m) const {
  return std::any_of(modalities.begin(), modalities.end(),
                     [m](const ModalityConfig& c) { return c.modality == m; });
}

const ModalityConfig& EncoderConfig::modality(Modality m) const {
  for (const auto& c : modalities) {
    if (c.modality == m) return c;
  }
  throw ConfigError("modality " + std::string(modality_tag(m)) + " is not configured");
}

Variant EncoderConfig::resolved_variant() const {
  if (variant != Variant::automatic) return variant;
  return modalities.size() == 1 ? Variant::monomodal : Variant::joint;
}

void EncoderConfig::validate() const {
  if (width == 0) throw ConfigError("width must be positive");
  if (heads == 0 || width % heads != 0) {
    throw ConfigError("width " + std::to_string(width) + " is not divisible by heads " +
                      std::to_string(heads));
  }
  if (ff_width == 0) throw ConfigError("ff_width must be positive");
  for (double p : {dropout_block, dropout_classifier}) {
    if (!(p >= 0.0 && p < 1.0)) throw ConfigError("dropout rates must lie in [0, 1)");
  }
  if (!(layer_norm_eps > 0.0)) throw ConfigError("layer_norm_eps must be positive");
  if (modalities.empty()) throw ConfigError("at least one modality is required");
  std::set<Modality> seen;
  for (const auto& m : modalities) {
    const std::string tag(modality_tag(m.modality));
    if (!seen.insert(m.modality).second) throw ConfigError("modality " + tag + " listed twice");
    if (m.input_width == 0) throw ConfigError(tag + ": input_width must be positive");
    if (m.length == 0) throw ConfigError(tag + ": length must be positive");
  }
  if (!has(primary)) {
    throw ConfigError("primary modality " + std::string(modality_tag(primary)) +
                      " is not among the configured modalities");
  }
  const auto v = resolved_variant();
  if (v == Variant::monomodal && modalities.size() != 1) {
    throw ConfigError("the monomodal variant takes exactly one modality");
  }
  if (v == Variant::joint) {
    for (const auto& m : modalities) {
      if (m.glimpse_count() != m.length) {
        throw ConfigError(std::string(modality_tag(m.modality)) + ": glimpse count " +
                          std::to_string(m.glimpse_count()) + " must equal length " +
                          std::to_string(m.length) + " for the glimpse residual");
      }
    }
  }
}

std::string EncoderConfig::to_text() const {
  json mods = json::array();
  for (const auto& m : modalities) {
    mods.push_back({{"tag", std::string(modality_tag(m.modality))},
                    {"input_width", m.input_width},
                    {"length", m.length},
                    {"glimpses", m.glimpses},
                    {"positional_encoding", m.positional_encoding}});
  }
  json j = {{"blocks", blocks},
            {"width", width},
            {"heads", heads},
            {"ff_width", ff_width},
            {"dropout_block", dropout_block},
            {"dropout_classifier", dropout_classifier},
            {"dropout_mode", std::string(dropout_mode_name(dropout_mode))},
            {"variant", std::string(variant_name(variant))},
            {"primary", std::string(modality_tag(primary))},
            {"modalities", mods},
            {"task", std::string(task_name(task))},
            {"layer_norm_eps", layer_norm_eps}};
  return j.dump();
}

EncoderConfig EncoderConfig::from_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("encoder config is not valid JSON: ") + e.what());
  }
  const std::string where = "encoder config";
  reject_unknown_keys(j,
                      {"blocks", "width", "heads", "ff_width", "dropout_block",
                       "dropout_classifier", "dropout_mode", "variant", "primary", "modalities",
                       "task", "layer_norm_eps"},
                      where);
  EncoderConfig c;
  c.blocks = get_field<std::size_t>(j, "blocks", where);
  c.width = get_field<std::size_t>(j, "width", where);
  c.heads = get_field<std::size_t>(j, "heads", where);
  c.ff_width = get_field<std::size_t>(j, "ff_width", where);
  c.dropout_block = get_field<double>(j, "dropout_block", where);
  c.dropout_classifier = get_field<double>(j, "dropout_classifier", where);
  c.dropout_mode = parse_dropout_mode(get_field<std::string>(j, "dropout_mode", where));
  c.variant = parse_variant(get_field<std::string>(j, "variant", where));
  c.primary = parse_modality(get_field<std::string>(j, "primary", where));
  c.task = parse_task(get_field<std::string>(j, "task", where));
  c.layer_norm_eps = get_field<double>(j, "layer_norm_eps", where);
  for (const auto& m : get_field<json>(j, "modalities", where)) {
    reject_unknown_keys(m, {"tag", "input_width", "length", "glimpses", "positional_encoding"},
                        where + " modality");
    ModalityConfig mc;
    mc.modality = parse_modality(get_field<std::string>(m, "tag", where));
    mc.input_width = get_field<std::size_t>(m, "input_width", where);
    mc.length = get_field<std::size_t>(m, "length", where);
    mc.glimpses = get_field<std::size_t>(m, "glimpses", where);
    mc.positional_encoding = get_field<bool>(m, "positional_encoding", where);
    c.modalities.push_back(mc);
  }
  c.validate();
  return c;
}

EncoderConfig full_size_encoder_config() {
  EncoderConfig c;
  c.modalities = {
      {Modality::linguistic, 300, 50, 0, true},
      {Modality::acoustic, 80, 40, 0, false},
  };
  return c;
}

void check_compatible(const EncoderConfig& expected, const EncoderConfig& actual) {
  auto mismatch = [](const std::string& field, const std::string& got, const std::string& want) {
    throw ConfigError("config mismatch on " + field + ": checkpoint has " + got +
                      ", expected " + want);
  };
  auto cmp = [&](const std::string& field, auto got, auto want) {
    if (got != want) {
      std::ostringstream g, w;
      g << got;
      w << want;
      mismatch(field, g.str(), w.str());
    }
  };
  cmp("blocks", actual.blocks, expected.blocks);
  cmp("width", actual.width, expected.width);
  cmp("heads", actual.heads, expected.heads);
  cmp("ff_width", actual.ff_width, expected.ff_width);
  cmp("variant", variant_name(actual.resolved_variant()), variant_name(expected.resolved_variant()));
  cmp("primary", modality_tag(actual.primary), modality_tag(expected.primary));
  cmp("task", task_name(actual.task), task_name(expected.task));
  cmp("modality count", actual.modalities.size(), expected.modalities.size());
  for (std::size_t i = 0; i < expected.modalities.size(); ++i) {
    const auto& a = actual.modalities[i];
    const auto& e = expected.modalities[i];
    const std::string tag(modality_tag(e.modality));
    cmp("modality " + std::to_string(i), modality_tag(a.modality), modality_tag(e.modality));
    cmp(tag + ".input_width", a.input_width, e.input_width);
    cmp(tag + ".length", a.length, e.length);
    cmp(tag + ".glimpses", a.glimpse_count(), e.glimpse_count());
    cmp(tag + ".positional_encoding", a.positional_encoding, e.positional_encoding);
  }
}

// ---------------------------------------------------------------------------
// Glimpse

GlimpseParams GlimpseParams::init(std::size_t width, std::size_t count, Rng& rng) {
  GlimpseParams p;
  p.embed = Linear::init(width, 2 * width, rng);
  const double limit = std::sqrt(6.0 / static_cast<double>(count + 2 * width));
  std::vector<double> v(count * 2 * width);
  for (auto& x : v) x = rng.uniform(-limit, limit);
  p.vectors = Tensor(Shape{count, 2 * width}, std::move(v));
  p.vectors.set_requires_grad(true);
  return p;
}

Tensor glimpse_weights(const Tensor& m, const GlimpseParams& params, const Mask& mask) {
  if (m.rank() != 2 || m.cols() != params.embed.in_width()) {
    throw DimensionError("glimpse: input " + shape_string(m.shape()) + " does not match width " +
                         std::to_string(params.embed.in_width()));
  }
  if (!mask.empty()) {
    if (mask.size() != m.rows()) {
      throw DimensionError("glimpse: mask of length " + std::to_string(mask.size()) + " for " +
                           std::to_string(m.rows()) + " rows");
    }
    if (std::none_of(mask.begin(), mask.end(), [](auto f) { return f != 0; })) {
      throw ContractError("glimpse: every row is masked");
    }
  }
  const auto embedded = params.embed(m);                          // [N x 2k], computed once
  const auto scores = matmul(params.vectors, transpose(embedded));  // [G x N]
  return softmax(mask_columns(scores, mask), 1);
}

Tensor glimpse(const Tensor& m, const GlimpseParams& params, const Mask& mask) {
  return matmul(glimpse_weights(m, params, mask), m);
}

// ---------------------------------------------------------------------------
// TbjeModel

TbjeModel TbjeModel::create(const EncoderConfig& config, std::uint64_t seed) {
  config.validate();
  TbjeModel model;
  model.config = config;
  Rng root(seed);
  const bool glimpses = config.in_block_glimpse();
  for (std::size_t mi = 0; mi < config.modalities.size(); ++mi) {
    const auto& mc = config.modalities[mi];
    Rng rng = root.split(static_cast<std::uint64_t>(mc.modality) + 1);
    ModalityEncoder enc;
    enc.config = mc;
    enc.input = Linear::init(mc.input_width, config.width, rng);
    for (std::size_t b = 0; b < config.blocks; ++b) {
      EncoderBlock block;
      block.attention = MhaParams::init(config.width, config.heads, rng);
      block.attention_norm = LayerNormParams::init(config.width);
      block.mlp = MlpParams::init(config.width, config.ff_width, rng);
      block.mlp_norm = LayerNormParams::init(config.width);
      if (glimpses) {
        block.glimpse = GlimpseParams::init(config.width, mc.glimpse_count(), rng);
        block.glimpse_norm = LayerNormParams::init(config.width);
      }
      enc.blocks.push_back(std::move(block));
    }
    enc.pool = GlimpseParams::init(config.width, 1, rng);
    enc.positions = mc.positional_encoding ? positional_encoding(mc.length, config.width)
                                           : Tensor::zeros(Shape{mc.length, config.width});
    model.encoders.push_back(std::move(enc));
  }
  Rng head = root.split(100);
  model.classifier_norm = LayerNormParams::init(config.width);
  model.classifier = Linear::init(config.width, task_classes(config.task), head);
  return model;
}

const ModalityEncoder& TbjeModel::encoder(Modality m) const {
  for (const auto& e : encoders) {
    if (e.config.modality == m) return e;
  }
  throw ConfigError("model has no encoder for modality " + std::string(modality_tag(m)));
}

ParameterList TbjeModel::parameters() const {
  ParameterList out;
  visit_parameters(const_cast<TbjeModel&>(*this),
                   [&out](const std::string& name, Tensor& t) { out.push_back({name, t}); });
  return out;
}

TbjeModel TbjeModel::clone() const {
  TbjeModel copy = *this;
  visit_parameters(copy, [](const std::string&, Tensor& t) { t = t.clone(); });
  return copy;
}

void TbjeModel::zero_grad() {
  visit_parameters(*this, [](const std::string&, Tensor& t) { t.zero_grad(); });
}

// ---------------------------------------------------------------------------
// Forward

Tensor project_input(const ModalityEncoder& encoder, const ModalityInput& input) {
  const auto& mc = encoder.config;
  if (input.features.rank() != 2 || input.features.cols() != mc.input_width ||
      input.features.rows() != mc.length) {
    throw DimensionError(std::string(modality_tag(mc.modality)) + ": input " +
                         shape_string(input.features.shape()) + " does not match configured [" +
                         std::to_string(mc.length) + "x" + std::to_string(mc.input_width) + "]");
  }
  auto x = encoder.input(input.features);
  return mc.positional_encoding ? add(x, encoder.positions) : x;
}

namespace {

struct BlockRates {
  double attention, mlp, glimpse;
};

BlockRates block_rates(const EncoderConfig& c) {
  const double p = c.dropout_block;
  if (c.dropout_mode == DropoutMode::per_block) return {p, 0.0, 0.0};
  return {p, p, p};
}

// One block: attention sublayer (self when keys == x), MLP sublayer, optional
// glimpse sublayer.
Tensor run_block(const EncoderBlock& block, const Tensor& x, const Mask& x_mask, const Tensor& keys,
                 const Mask& key_mask, const EncoderConfig& config, const ForwardContext& ctx) {
  const auto rates = block_rates(config);
  const double eps = config.layer_norm_eps;
  auto h = sublayer(
      x,
      [&](const Tensor& q) { return multi_head_attention(q, keys, keys, block.attention, key_mask); },
      block.attention_norm, rates.attention, ctx, eps);
  h = sublayer(
      h, [&](const Tensor& v) { return mlp(v, block.mlp); }, block.mlp_norm, rates.mlp, ctx, eps);
  if (block.glimpse) {
    h = sublayer(
        h, [&](const Tensor& v) { return glimpse(v, *block.glimpse, x_mask); }, *block.glimpse_norm,
        rates.glimpse, ctx, eps);
  }
  return h;
}

}  // namespace

std::vector<Tensor> encode_monomodal(const ModalityInput& input, const ModalityEncoder& encoder,
                                     const EncoderConfig& config, const ForwardContext& ctx) {
  std::vector<Tensor> states{project_input(encoder, input)};
  for (const auto& block : encoder.blocks) {
    if (block.glimpse) throw ConfigError("encode_monomodal: block carries a glimpse layer");
    const auto& x = states.back();
    states.push_back(run_block(block, x, input.mask, x, input.mask, config, ctx));
  }
  return states;
}

Encoding encode_joint(const ExampleInputs& inputs, const TbjeModel& model,
                      const ForwardContext& ctx) {
  const auto& config = model.config;
  if (!inputs.contains(config.primary)) {
    throw ConfigError("primary modality " + std::string(modality_tag(config.primary)) +
                      " is missing from the inputs");
  }
  Encoding enc;
  for (const auto& e : model.encoders) {
    const auto m = e.config.modality;
    auto it = inputs.find(m);
    if (it == inputs.end()) {
      throw ConfigError("modality " + std::string(modality_tag(m)) + " is missing from the inputs");
    }
    enc.states[m].push_back(project_input(e, it->second));
    enc.masks[m] = it->second.mask;
  }
  const Mask& primary_mask = enc.masks.at(config.primary);
  for (std::size_t b = 0; b < config.blocks; ++b) {
    // Block-b input of the primary modality, shared by every co-attention.
    const Tensor primary_in = enc.states.at(config.primary)[b];
    for (const auto& e : model.encoders) {
      const auto m = e.config.modality;
      auto& states = enc.states.at(m);
      const Tensor y = states[b];
      const bool is_primary = m == config.primary;
      states.push_back(run_block(e.blocks[b], y, enc.masks.at(m), is_primary ? y : primary_in,
                                 is_primary ? enc.masks.at(m) : primary_mask, config, ctx));
    }
  }
  return enc;
}

Encoding encode(const ExampleInputs& inputs, const TbjeModel& model, const ForwardContext& ctx) {
  if (model.config.resolved_variant() == Variant::joint) return encode_joint(inputs, model, ctx);
  const auto& e = model.encoders.front();
  const auto m = e.config.modality;
  auto it = inputs.find(m);
  if (it == inputs.end()) {
    throw ConfigError("modality " + std::string(modality_tag(m)) + " is missing from the inputs");
  }
  Encoding enc;
  enc.states[m] = encode_monomodal(it->second, e, model.config, ctx);
  enc.masks[m] = it->second.mask;
  return enc;
}

Tensor classify(const Encoding& encoding, const TbjeModel& model, const ForwardContext& ctx) {
  std::optional<Tensor> s;
  for (const auto& e : model.encoders) {
    const auto m = e.config.modality;
    auto pooled = glimpse(encoding.final_state(m), e.pool, encoding.masks.at(m));
    s = s ? add(*s, pooled) : pooled;
  }
  auto dropped = dropout(*s, model.config.dropout_classifier, ctx.dropout_rng());
  return model.classifier(model.classifier_norm(dropped, model.config.layer_norm_eps));
}

Tensor forward(const TbjeModel& model, const ExampleInputs& inputs, const ForwardContext& ctx) {
  return classify(encode(inputs, model, ctx), model, ctx);
}

Tensor forward_batch(const TbjeModel& model, const Split& split, const ForwardContext& ctx) {
  if (split.size() == 0) throw ContractError("forward_batch: empty split");
  std::vector<Tensor> rows;
  rows.reserve(split.size());
  for (std::size_t i = 0; i < split.size(); ++i) rows.push_back(forward(model, split.example(i), ctx));
  return rows.size() == 1 ? rows.front() : concat(rows, 0);
}

// ---------------------------------------------------------------------------
// Checkpoints

std::string serialize_model(const TbjeModel& model) {
  std::ostringstream out(std::ios::binary);
  out.write("TBJM", 4);
  io::write_u32(out, kCheckpointVersion);
  io::write_string(out, model.config.to_text());
  io::write_u64(out, model.vocabulary_hash);
  const auto params = model.parameters();
  io::write_u32(out, static_cast<std::uint32_t>(params.size()));
  for (const auto& p : params) {
    io::write_string(out, p.name);
    write_tensor(out, p.tensor);
  }
  return out.str();
}

TbjeModel deserialize_model(const std::string& bytes) {
  std::istringstream in(bytes, std::ios::binary);
  io::expect_magic(in, "TBJM", "checkpoint");
  const auto version = io::read_u32(in);
  if (version != kCheckpointVersion) {
    throw IoError("checkpoint: unsupported format version " + std::to_string(version) +
                  " (this build reads " + std::to_string(kCheckpointVersion) + ")");
  }
  const auto config = EncoderConfig::from_text(io::read_string(in));
  TbjeModel model = TbjeModel::create(config, 0);
  model.vocabulary_hash = io::read_u64(in);
  const auto count = io::read_u32(in);
  std::map<std::string, Tensor> loaded;
  for (std::uint32_t i = 0; i < count; ++i) {
    auto name = io::read_string(in);
    loaded.emplace(std::move(name), read_tensor(in));
  }
  std::size_t used = 0;
  visit_parameters(model, [&](const std::string& name, Tensor& t) {
    auto it = loaded.find(name);
    if (it == loaded.end()) throw IoError("checkpoint: missing parameter '" + name + "'");
    if (it->second.shape() != t.shape()) {
      throw IoError("checkpoint: parameter '" + name + "' has shape " +
                    shape_string(it->second.shape()) + ", expected " + shape_string(t.shape()));
    }
    t = it->second;
    t.set_requires_grad(true);
    ++used;
  });
  if (used != loaded.size()) throw IoError("checkpoint: unexpected extra parameters");
  return model;
}

void save_model(const std::filesystem::path& path, const TbjeModel& model) {
  io::write_file(path, serialize_model(model));
}

TbjeModel load_model(const std::filesystem::path& path) {
  try {
    return deserialize_model(io::read_file(path));
  } catch (const IoError& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

TbjeModel load_model(const std::filesystem::path& path, const EncoderConfig& expected) {
  auto model = load_model(path);
  check_compatible(expected, model.config);
  return model;
}

}  // namespace tbje
