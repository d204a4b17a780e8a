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

#include "tbje/config.hpp"

#include <algorithm>

#include <nlohmann/json.hpp>

#include "tbje/error.hpp"
#include "tbje/serialize.hpp"

namespace tbje {

using nlohmann::json;

namespace {

json tags(const std::vector<Modality>& mods) {
  json a = json::array();
  for (auto m : mods) a.push_back(std::string(modality_tag(m)));
  return a;
}

std::vector<Modality> parse_tags(const json& j, const std::string& key) {
  std::vector<Modality> out;
  for (const auto& t : j) {
    const auto m = parse_modality(t.get<std::string>());
    if (std::find(out.begin(), out.end(), m) != out.end())
      throw ConfigError(key + ": modality " + t.get<std::string>() + " listed twice");
    out.push_back(m);
  }
  return out;
}

json to_json(const RunConfig& c) {
  const json enc = json::parse(c.encoder.to_text());
  json encoder = {{"modalities", tags(c.modalities)},
                  {"positional_encoding", tags(c.positional_encoding)}};
  for (const char* k : {"blocks", "width", "heads", "ff_width", "dropout_block", "dropout_classifier",
                        "dropout_mode", "variant", "primary", "task", "layer_norm_eps"})
    encoder[k] = enc.at(k);
  const auto& t = c.train;
  json train = {{"lr", t.lr},
                {"batch_size", t.batch_size},
                {"decay_factor", t.decay_factor},
                {"max_decays", t.max_decays},
                {"patience", t.patience},
                {"ensemble", t.ensemble},
                {"max_epochs", t.max_epochs},
                {"beta1", t.beta1},
                {"beta2", t.beta2},
                {"adam_eps", t.adam_eps},
                {"sentiment_boundary", t.sentiment_boundary}};
  json lengths = json::object();
  for (const auto& [m, n] : c.lengths) lengths[std::string(modality_tag(m))] = n;
  const auto& m = c.mel;
  json mel = {{"sample_rate", m.sample_rate}, {"fft_size", m.fft_size},  {"hop_length", m.hop_length},
              {"window_length", m.window_length}, {"bands", m.bands},  {"stride", m.stride},
              {"floor", m.floor},                 {"min_frequency", m.min_frequency},
              {"max_frequency", m.max_frequency}};
  return {{"seed", c.seed},
          {"encoder", encoder},
          {"train", train},
          {"features", {{"lengths", lengths}, {"embedding_width", c.embedding_width}, {"mel", mel}}}};
}

// Overlays `patch` onto `base`, rejecting keys `base` does not have.
void merge(json& base, const json& patch, const std::string& where) {
  if (!patch.is_object()) throw ConfigError(where + ": expected an object");
  for (auto it = patch.begin(); it != patch.end(); ++it) {
    const std::string path = where.empty() ? it.key() : where + "." + it.key();
    if (!base.contains(it.key())) throw ConfigError("unknown config key '" + path + "'");
    json& slot = base[it.key()];
    if (slot.is_object() && it.key() != "lengths") {
      merge(slot, it.value(), path);
    } else if (slot.is_object()) {
      // lengths: any subset of modality tags
      if (!it.value().is_object()) throw ConfigError(path + ": expected an object");
      for (auto l = it.value().begin(); l != it.value().end(); ++l) {
        parse_modality(l.key());
        slot[l.key()] = l.value();
      }
    } else {
      slot = it.value();
    }
  }
}

template <typename T>
T get(const json& j, const char* key, const std::string& where) {
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(where + "." + key + ": wrong type");
  }
}

RunConfig from_json(const json& j) {
  RunConfig c;
  c.seed = get<std::uint64_t>(j, "seed", "config");
  const json& e = j.at("encoder");
  c.modalities = parse_tags(e.at("modalities"), "encoder.modalities");
  c.positional_encoding = parse_tags(e.at("positional_encoding"), "encoder.positional_encoding");
  json enc = e;
  enc.erase("positional_encoding");
  enc["modalities"] = json::array();
  for (auto m : c.modalities)
    enc["modalities"].push_back({{"tag", std::string(modality_tag(m))},
                                 {"input_width", 1},
                                 {"length", 1},
                                 {"glimpses", 0},
                                 {"positional_encoding", false}});
  c.encoder = EncoderConfig::from_text(enc.dump());
  c.encoder.modalities.clear();

  const json& t = j.at("train");
  const std::string tw = "train";
  c.train.lr = get<double>(t, "lr", tw);
  c.train.batch_size = get<std::size_t>(t, "batch_size", tw);
  c.train.decay_factor = get<double>(t, "decay_factor", tw);
  c.train.max_decays = get<std::size_t>(t, "max_decays", tw);
  c.train.patience = get<std::size_t>(t, "patience", tw);
  c.train.ensemble = get<std::size_t>(t, "ensemble", tw);
  c.train.max_epochs = get<std::size_t>(t, "max_epochs", tw);
  c.train.beta1 = get<double>(t, "beta1", tw);
  c.train.beta2 = get<double>(t, "beta2", tw);
  c.train.adam_eps = get<double>(t, "adam_eps", tw);
  c.train.sentiment_boundary = get<double>(t, "sentiment_boundary", tw);

  const json& f = j.at("features");
  c.lengths.clear();
  for (auto it = f.at("lengths").begin(); it != f.at("lengths").end(); ++it)
    c.lengths[parse_modality(it.key())] = get<std::size_t>(f.at("lengths"), it.key().c_str(), "features.lengths");
  c.embedding_width = get<std::size_t>(f, "embedding_width", "features");
  const json& m = f.at("mel");
  const std::string mw = "features.mel";
  c.mel.sample_rate = get<double>(m, "sample_rate", mw);
  c.mel.fft_size = get<std::size_t>(m, "fft_size", mw);
  c.mel.hop_length = get<std::size_t>(m, "hop_length", mw);
  c.mel.window_length = get<std::size_t>(m, "window_length", mw);
  c.mel.bands = get<std::size_t>(m, "bands", mw);
  c.mel.stride = get<std::size_t>(m, "stride", mw);
  c.mel.floor = get<double>(m, "floor", mw);
  c.mel.min_frequency = get<double>(m, "min_frequency", mw);
  c.mel.max_frequency = get<double>(m, "max_frequency", mw);
  c.validate();
  return c;
}

}  // namespace

std::string RunConfig::to_text() const { return to_json(*this).dump(2) + "\n"; }

RunConfig RunConfig::from_text(const std::string& text) {
  json patch;
  try {
    patch = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  json base = to_json(RunConfig{});
  merge(base, patch, "");
  return from_json(base);
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  try {
    return from_text(io::read_file(path));
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

void RunConfig::apply_override(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0)
    throw ConfigError("override '" + assignment + "' is not key=value");
  const std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);

  json base = to_json(*this);
  json* slot = &base;
  std::string walked;
  for (std::size_t pos = 0;;) {
    const auto dot = key.find('.', pos);
    const std::string part = key.substr(pos, dot == std::string::npos ? std::string::npos : dot - pos);
    walked += (walked.empty() ? "" : ".") + part;
    if (!slot->is_object() || !slot->contains(part)) throw ConfigError("unknown config key '" + walked + "'");
    slot = &(*slot)[part];
    if (dot == std::string::npos) break;
    pos = dot + 1;
  }
  json value;
  if (slot->is_array()) {
    value = json::array();
    std::size_t pos = 0;
    while (pos <= text.size() && !text.empty()) {
      auto comma = text.find(',', pos);
      if (comma == std::string::npos) comma = text.size();
      value.push_back(text.substr(pos, comma - pos));
      pos = comma + 1;
    }
  } else if (slot->is_string()) {
    value = text;
  } else {
    try {
      value = json::parse(text);
    } catch (const json::parse_error&) {
      throw ConfigError("override '" + key + "': cannot parse '" + text + "'");
    }
  }
  *slot = value;
  *this = from_json(base);
}

EncoderConfig RunConfig::encoder_for(const BundleManifest& manifest) const {
  EncoderConfig c = encoder;
  c.modalities.clear();
  for (auto m : modalities) {
    if (!manifest.has(m))
      throw ConfigError("config selects modality " + std::string(modality_tag(m)) +
                        " but the bundle does not provide it");
    const auto& spec = manifest.modality(m);
    ModalityConfig mc;
    mc.modality = m;
    mc.input_width = spec.width;
    mc.length = spec.length;
    mc.positional_encoding =
        std::find(positional_encoding.begin(), positional_encoding.end(), m) != positional_encoding.end();
    c.modalities.push_back(mc);
  }
  c.validate();
  return c;
}

void RunConfig::validate() const {
  if (modalities.empty()) throw ConfigError("encoder.modalities must name at least one modality");
  if (std::find(modalities.begin(), modalities.end(), encoder.primary) == modalities.end())
    throw ConfigError("encoder.primary " + std::string(modality_tag(encoder.primary)) +
                      " is not among encoder.modalities");
  train.validate();
  mel.validate();
  for (const auto& [m, n] : lengths)
    if (n == 0) throw ConfigError("features.lengths." + std::string(modality_tag(m)) + " must be >= 1");
  if (embedding_width == 0) throw ConfigError("features.embedding_width must be >= 1");
  EncoderConfig probe = encoder;
  for (auto m : modalities) probe.modalities.push_back({m, 1, 1, 0, false});
  probe.validate();
}

}  // namespace tbje
