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

#include "tbje/bundle.hpp"

#include <algorithm>
#include <set>

#include <nlohmann/json.hpp>

#include "tbje/error.hpp"
#include "tbje/rng.hpp"
#include "tbje/serialize.hpp"

namespace tbje {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

template <typename T>
T field(const json& j, const char* key, const std::string& where) {
  if (!j.contains(key)) throw IoError(where + ": missing key '" + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw IoError(where + ": bad value for '" + key + "'");
  }
}

json mel_to_json(const MelConfig& m) {
  return {{"sample_rate", m.sample_rate}, {"fft_size", m.fft_size},     {"hop_length", m.hop_length},
          {"window_length", m.window_length}, {"bands", m.bands},      {"stride", m.stride},
          {"floor", m.floor},                 {"min_frequency", m.min_frequency},
          {"max_frequency", m.max_frequency}};
}

MelConfig mel_from_json(const json& j) {
  const std::string w = "manifest acoustic.mel";
  MelConfig m;
  m.sample_rate = field<double>(j, "sample_rate", w);
  m.fft_size = field<std::size_t>(j, "fft_size", w);
  m.hop_length = field<std::size_t>(j, "hop_length", w);
  m.window_length = field<std::size_t>(j, "window_length", w);
  m.bands = field<std::size_t>(j, "bands", w);
  m.stride = field<std::size_t>(j, "stride", w);
  m.floor = field<double>(j, "floor", w);
  m.min_frequency = field<double>(j, "min_frequency", w);
  m.max_frequency = field<double>(j, "max_frequency", w);
  return m;
}

void check_split_name(const std::string& name) {
  const bool ok = !name.empty() && std::all_of(name.begin(), name.end(), [](char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-';
  });
  if (!ok) throw ContractError("split name '" + name + "' must be [A-Za-z0-9_-]+");
}

Tensor mask_tensor(const ModalityBatch& b) {
  std::vector<double> v(b.mask.begin(), b.mask.end());
  return Tensor(Shape{b.batch_size(), b.length()}, std::move(v));
}

Mask mask_from_tensor(const Tensor& t, const std::string& where) {
  Mask m(t.numel());
  const auto d = t.data();
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (d[i] != 0.0 && d[i] != 1.0) throw IoError(where + ": mask entries must be 0 or 1");
    m[i] = d[i] != 0.0;
  }
  return m;
}

}  // namespace

// ---------------------------------------------------------------------------
// Manifest

const ModalitySpec& BundleManifest::modality(Modality m) const {
  for (const auto& s : modalities)
    if (s.modality == m) return s;
  throw ConfigError("bundle has no " + std::string(modality_tag(m)) + " modality");
}

bool BundleManifest::has(Modality m) const {
  return std::any_of(modalities.begin(), modalities.end(), [&](const auto& s) { return s.modality == m; });
}

std::string BundleManifest::to_text() const {
  json j;
  j["format"] = kBundleFormat;
  j["version"] = version;
  j["source"] = source;
  json mods = json::array();
  for (const auto& m : modalities)
    mods.push_back({{"modality", modality_tag(m.modality)}, {"width", m.width}, {"length", m.length}});
  j["modalities"] = mods;
  j["splits"] = splits;
  j["labels"] = {"sentiment", "happy", "sad", "angry", "fear", "disgust", "surprise"};
  if (vocabulary) {
    j["vocabulary"] = {{"file", vocabulary->file},
                       {"hash", vocabulary->hash},
                       {"size", vocabulary->size},
                       {"missing", vocabulary->missing}};
  }
  if (acoustic) {
    j["acoustic"] = {{"mel", mel_to_json(acoustic->mel)},
                     {"train_max", acoustic->train_max},
                     {"padded_ids", acoustic->padded_ids}};
  }
  if (!empty_transcripts.empty()) j["empty_transcripts"] = empty_transcripts;
  return j.dump(2) + "\n";
}

BundleManifest BundleManifest::from_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw IoError(std::string("manifest: ") + e.what());
  }
  const std::string w = "manifest";
  if (field<std::string>(j, "format", w) != kBundleFormat) throw IoError("manifest: not a TBJE bundle");
  BundleManifest m;
  m.version = field<std::uint32_t>(j, "version", w);
  if (m.version != kBundleVersion) throw IoError("manifest: unsupported version " + std::to_string(m.version));
  m.source = field<std::string>(j, "source", w);
  for (const auto& e : field<json>(j, "modalities", w)) {
    ModalitySpec s;
    try {
      s.modality = parse_modality(field<std::string>(e, "modality", w));
    } catch (const ConfigError& err) {
      throw IoError(std::string("manifest: ") + err.what());
    }
    s.width = field<std::size_t>(e, "width", w);
    s.length = field<std::size_t>(e, "length", w);
    m.modalities.push_back(s);
  }
  m.splits = field<std::map<std::string, std::size_t>>(j, "splits", w);
  if (j.contains("vocabulary")) {
    const auto& v = j["vocabulary"];
    m.vocabulary = VocabularyInfo{field<std::string>(v, "file", w), field<std::uint64_t>(v, "hash", w),
                                  field<std::size_t>(v, "size", w),
                                  field<std::vector<std::string>>(v, "missing", w)};
  }
  if (j.contains("acoustic")) {
    const auto& a = j["acoustic"];
    m.acoustic = AcousticInfo{mel_from_json(field<json>(a, "mel", w)), field<double>(a, "train_max", w),
                              field<std::vector<std::string>>(a, "padded_ids", w)};
  }
  if (j.contains("empty_transcripts"))
    m.empty_transcripts = field<std::vector<std::string>>(j, "empty_transcripts", w);
  return m;
}

// ---------------------------------------------------------------------------
// Bundle

const Split& DatasetBundle::split(const std::string& name) const {
  auto it = splits.find(name);
  if (it == splits.end()) throw ConfigError("bundle has no '" + name + "' split");
  return it->second;
}

std::uint64_t DatasetBundle::vocabulary_hash() const {
  return vocabulary_text.empty() ? 0 : io::fnv1a(vocabulary_text);
}

void DatasetBundle::validate() const {
  if (manifest.splits.size() != splits.size()) throw ContractError("bundle: manifest and split list disagree");
  std::set<Modality> seen;
  for (const auto& s : manifest.modalities)
    if (!seen.insert(s.modality).second)
      throw ContractError("bundle: modality " + std::string(modality_tag(s.modality)) + " listed twice");
  for (const auto& [name, split] : splits) {
    check_split_name(name);
    auto it = manifest.splits.find(name);
    if (it == manifest.splits.end() || it->second != split.size())
      throw ContractError("bundle: split '" + name + "' size disagrees with the manifest");
    split.validate();
    if (split.modalities.size() != manifest.modalities.size())
      throw ContractError("bundle: split '" + name + "' modality set disagrees with the manifest");
    for (const auto& spec : manifest.modalities) {
      auto b = split.modalities.find(spec.modality);
      if (b == split.modalities.end())
        throw ContractError("bundle: split '" + name + "' lacks " + std::string(modality_tag(spec.modality)));
      if (b->second.width() != spec.width || b->second.length() != spec.length)
        throw ContractError("bundle: split '" + name + "' " + std::string(modality_tag(spec.modality)) +
                            " is " + shape_string(b->second.features.shape()) + ", manifest says N=" +
                            std::to_string(spec.length) + " width=" + std::to_string(spec.width));
    }
  }
  if (manifest.vocabulary && manifest.vocabulary->hash != vocabulary_hash())
    throw ContractError("bundle: vocabulary hash disagrees with the manifest");
}

void write_bundle(const fs::path& dir, const DatasetBundle& bundle) {
  bundle.validate();
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  for (const auto& [name, split] : bundle.splits) {
    const fs::path sub = dir / name;
    fs::create_directories(sub, ec);
    if (ec) throw IoError("cannot create " + sub.string() + ": " + ec.message());
    std::string ids;
    for (const auto& id : split.ids) {
      if (id.find('\n') != std::string::npos) throw ContractError("example id contains a newline");
      ids += id + "\n";
    }
    io::write_file(sub / "ids.txt", ids);
    save_tensor(sub / "labels.tbjt", split.labels.to_tensor());
    for (const auto& [m, batch] : split.modalities) {
      const std::string tag(modality_tag(m));
      save_tensor(sub / (tag + ".features.tbjt"), batch.features);
      save_tensor(sub / (tag + ".mask.tbjt"), mask_tensor(batch));
    }
  }
  if (bundle.manifest.vocabulary) io::write_file(dir / bundle.manifest.vocabulary->file, bundle.vocabulary_text);
  io::write_file(dir / "manifest.json", bundle.manifest.to_text());
}

DatasetBundle read_bundle(const fs::path& dir) {
  DatasetBundle b;
  b.manifest = BundleManifest::from_text(io::read_file(dir / "manifest.json"));
  if (b.manifest.vocabulary) b.vocabulary_text = io::read_file(dir / b.manifest.vocabulary->file);
  for (const auto& [name, count] : b.manifest.splits) {
    check_split_name(name);
    const fs::path sub = dir / name;
    Split s;
    const std::string ids = io::read_file(sub / "ids.txt");
    for (std::size_t pos = 0; pos < ids.size();) {
      auto nl = ids.find('\n', pos);
      if (nl == std::string::npos) nl = ids.size();
      s.ids.push_back(ids.substr(pos, nl - pos));
      pos = nl + 1;
    }
    try {
      s.labels = Labels::from_tensor(load_tensor(sub / "labels.tbjt"));
    } catch (const ContractError& e) {
      throw IoError((sub / "labels.tbjt").string() + ": " + e.what());
    } catch (const DimensionError& e) {
      throw IoError((sub / "labels.tbjt").string() + ": " + e.what());
    }
    for (const auto& spec : b.manifest.modalities) {
      const std::string tag(modality_tag(spec.modality));
      ModalityBatch batch;
      batch.modality = spec.modality;
      batch.features = load_tensor(sub / (tag + ".features.tbjt"));
      const auto mask_path = sub / (tag + ".mask.tbjt");
      batch.mask = mask_from_tensor(load_tensor(mask_path), mask_path.string());
      s.modalities[spec.modality] = std::move(batch);
    }
    if (s.size() != count)
      throw IoError(sub.string() + ": " + std::to_string(s.size()) + " ids, manifest says " + std::to_string(count));
    b.splits[name] = std::move(s);
  }
  try {
    b.validate();
  } catch (const ContractError& e) {
    throw IoError(dir.string() + ": " + e.what());
  } catch (const DimensionError& e) {
    throw IoError(dir.string() + ": " + e.what());
  }
  return b;
}

// ---------------------------------------------------------------------------

EncoderConfig config_for_bundle(const EncoderConfig& base, const BundleManifest& manifest) {
  EncoderConfig c = base;
  std::vector<ModalityConfig> mods;
  for (const auto& spec : manifest.modalities) {
    ModalityConfig mc;
    mc.modality = spec.modality;
    mc.input_width = spec.width;
    mc.length = spec.length;
    if (base.has(spec.modality)) {
      const auto& prior = base.modality(spec.modality);
      mc.glimpses = prior.glimpses;
      mc.positional_encoding = prior.positional_encoding;
    } else {
      mc.positional_encoding = spec.modality == Modality::linguistic;
    }
    mods.push_back(mc);
  }
  c.modalities = std::move(mods);
  if (!c.has(c.primary)) c.primary = c.modalities.front().modality;
  c.validate();
  return c;
}

void check_bundle_compatible(const EncoderConfig& config, const BundleManifest& manifest) {
  for (const auto& m : config.modalities) {
    if (!manifest.has(m.modality))
      throw ConfigError("config mismatch: model uses " + std::string(modality_tag(m.modality)) +
                        " but the bundle does not provide it");
    const auto& spec = manifest.modality(m.modality);
    if (spec.width != m.input_width)
      throw ConfigError("config mismatch on " + std::string(modality_tag(m.modality)) + " width: model has " +
                        std::to_string(m.input_width) + ", bundle has " + std::to_string(spec.width));
    if (spec.length != m.length)
      throw ConfigError("config mismatch on " + std::string(modality_tag(m.modality)) + " length: model has " +
                        std::to_string(m.length) + ", bundle has " + std::to_string(spec.length));
  }
}

// ---------------------------------------------------------------------------
// Synthetic data

namespace {

constexpr std::size_t kClasses = 7;

std::array<std::uint8_t, kEmotionCount> emotions_for(std::size_t c) {
  return {static_cast<std::uint8_t>(c >= 4), static_cast<std::uint8_t>(c <= 2),
          static_cast<std::uint8_t>(c <= 1), static_cast<std::uint8_t>(c == 2 || c == 5),
          static_cast<std::uint8_t>(c % 2 == 0), static_cast<std::uint8_t>(c == 3 || c == 6)};
}

}  // namespace

DatasetBundle make_synthetic_bundle(const SyntheticSpec& spec) {
  if (spec.modalities.empty()) throw ConfigError("synthetic: at least one modality required");
  DatasetBundle bundle;
  bundle.manifest.source = "synthetic";
  bundle.manifest.modalities = spec.modalities;
  const Rng root(spec.seed);

  // Prototypes are shared by every split.
  std::map<Modality, std::vector<std::vector<double>>> prototypes;
  for (const auto& m : spec.modalities) {
    if (m.width == 0 || m.length == 0) throw ConfigError("synthetic: width and length must be >= 1");
    Rng r = root.split(0).split(static_cast<std::uint64_t>(m.modality));
    auto& table = prototypes[m.modality];
    for (std::size_t c = 0; c < kClasses; ++c) {
      std::vector<double> v(m.width);
      for (auto& x : v) x = r.uniform(-1.0, 1.0);
      table.push_back(std::move(v));
    }
  }

  for (const auto& [name, count] : spec.splits) {
    check_split_name(name);
    if (count == 0) throw ConfigError("synthetic: split '" + name + "' must hold at least one example");
    Rng split_rng = root.split(1).split(io::fnv1a(name));
    std::vector<std::size_t> classes(count);
    for (std::size_t i = 0; i < count; ++i) classes[i] = i % kClasses;
    split_rng.split(0).shuffle(std::span<std::size_t>(classes));

    Split s;
    std::map<Modality, std::vector<ModalityInput>> rows;
    for (std::size_t i = 0; i < count; ++i) {
      Rng ex = split_rng.split(1 + i);
      const std::size_t c = classes[i];
      s.ids.push_back(name + "-" + std::to_string(i));
      const double raw = std::clamp(static_cast<double>(c) - 3.0 + ex.uniform(-0.4, 0.4), -3.0, 3.0);
      s.labels.sentiment.push_back(raw);
      s.labels.emotions.push_back(emotions_for(c));
      for (const auto& m : spec.modalities) {
        const std::size_t valid = 1 + ex.below(m.length);
        std::vector<double> f(m.length * m.width, 0.0);
        Mask mask(m.length, 0);
        for (std::size_t r = 0; r < valid; ++r) {
          mask[r] = 1;
          for (std::size_t j = 0; j < m.width; ++j)
            f[r * m.width + j] = prototypes[m.modality][c][j] + spec.noise * ex.uniform(-1.0, 1.0);
        }
        rows[m.modality].push_back({Tensor(Shape{m.length, m.width}, std::move(f)), std::move(mask)});
      }
    }
    for (auto& [m, list] : rows) s.modalities[m] = ModalityBatch::stack(m, list);
    bundle.manifest.splits[name] = count;
    bundle.splits[name] = std::move(s);
  }
  bundle.validate();
  return bundle;
}

}  // namespace tbje
