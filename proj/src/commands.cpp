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

#include "tbje/commands.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <iomanip>
#include <ostream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "tbje/error.hpp"
#include "tbje/metrics.hpp"
#include "tbje/serialize.hpp"

namespace tbje {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

// RFC 4180 records: quoted fields may hold commas, doubled quotes and newlines.
std::vector<std::vector<std::string>> parse_csv(const std::string& text, const std::string& where) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string field;
  bool quoted = false, field_started = false;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field += c;
      }
      continue;
    }
    if (c == '"' && field.empty() && !field_started) {
      quoted = true;
      field_started = true;
    } else if (c == ',') {
      row.push_back(std::move(field));
      field.clear();
      field_started = false;
    } else if (c == '\n' || c == '\r') {
      if (c == '\r' && i + 1 < text.size() && text[i + 1] == '\n') ++i;
      row.push_back(std::move(field));
      field.clear();
      field_started = false;
      if (!(row.size() == 1 && row[0].empty())) rows.push_back(std::move(row));
      row.clear();
    } else {
      field += c;
      field_started = true;
    }
  }
  if (quoted) throw IoError(where + ": unterminated quoted field");
  if (field_started || !field.empty() || !row.empty()) {
    row.push_back(std::move(field));
    rows.push_back(std::move(row));
  }
  return rows;
}

double parse_number(const std::string& s, const std::string& where) {
  double v = 0.0;
  const char* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || ptr != end || s.empty()) throw IoError(where + ": bad number '" + s + "'");
  return v;
}

void progress_line(std::ostream* out, const std::string& line) {
  if (out) *out << line << '\n' << std::flush;
}

}  // namespace

// ---------------------------------------------------------------------------
// extract-features

std::vector<ManifestRow> read_manifest(const fs::path& csv) {
  const auto rows = parse_csv(io::read_file(csv), csv.string());
  if (rows.empty()) throw IoError(csv.string() + ": empty manifest");
  const auto& header = rows.front();
  std::map<std::string, std::size_t> col;
  for (std::size_t i = 0; i < header.size(); ++i) {
    const auto& name = header[i];
    if (std::find(kManifestColumns.begin(), kManifestColumns.end(), name) == kManifestColumns.end())
      throw IoError(csv.string() + ": unknown column '" + name + "'");
    if (!col.emplace(name, i).second) throw IoError(csv.string() + ": column '" + name + "' repeated");
  }
  for (const char* required : {"id", "split", "sentiment", "happy", "sad", "angry", "fear", "disgust", "surprise"})
    if (!col.count(required)) throw IoError(csv.string() + ": missing column '" + required + "'");
  const std::vector<std::pair<std::string, Modality>> sources = {
      {"transcript", Modality::linguistic}, {"audio", Modality::acoustic}, {"visual", Modality::visual}};
  if (std::none_of(sources.begin(), sources.end(), [&](const auto& s) { return col.count(s.first) > 0; }))
    throw IoError(csv.string() + ": needs at least one of the transcript, audio, visual columns");

  const fs::path base = csv.parent_path();
  std::vector<ManifestRow> out;
  std::set<std::string> ids;
  std::vector<std::string> missing;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    const std::string where = csv.string() + ":" + std::to_string(r + 1);
    if (row.size() != header.size())
      throw IoError(where + ": " + std::to_string(row.size()) + " fields, header has " +
                    std::to_string(header.size()));
    ManifestRow m;
    m.id = row[col["id"]];
    m.split = row[col["split"]];
    if (m.id.empty()) throw IoError(where + ": empty id");
    if (m.id.find('\n') != std::string::npos) throw IoError(where + ": id contains a newline");
    if (!ids.insert(m.id).second) throw IoError(where + ": duplicate id '" + m.id + "'");
    if (m.split.empty()) throw IoError(where + ": empty split");
    m.sentiment = parse_number(row[col["sentiment"]], where);
    if (!(m.sentiment >= -3.0 && m.sentiment <= 3.0))
      throw IoError(where + ": sentiment " + row[col["sentiment"]] + " outside [-3, 3]");
    for (std::size_t e = 0; e < kEmotionCount; ++e) {
      const std::string& v = row[col[std::string(kEmotionNames[e])]];
      if (v != "0" && v != "1") throw IoError(where + ": " + std::string(kEmotionNames[e]) + " must be 0 or 1");
      m.emotions[e] = v == "1";
    }
    for (const auto& [name, modality] : sources) {
      if (!col.count(name)) continue;
      const std::string& rel = row[col[name]];
      const fs::path p = base / rel;
      if (rel.empty() || !fs::is_regular_file(p)) missing.push_back(m.id + " " + name + ": " + p.string());
      m.sources[modality] = p;
    }
    out.push_back(std::move(m));
  }
  if (!missing.empty()) {
    std::string msg = std::to_string(missing.size()) + " missing input file(s):";
    for (const auto& line : missing) msg += "\n  " + line;
    throw IoError(msg);
  }
  if (out.empty()) throw IoError(csv.string() + ": no examples");
  return out;
}

DatasetBundle extract_features(const ExtractOptions& options) {
  const RunConfig& cfg = options.config;
  cfg.validate();
  const auto rows = read_manifest(options.manifest);
  std::vector<Modality> present;
  for (const auto& [m, p] : rows.front().sources) present.push_back(m);
  if (std::none_of(rows.begin(), rows.end(), [](const auto& r) { return r.split == "train"; }))
    throw IoError(options.manifest.string() + ": no 'train' rows");
  const bool has_text = rows.front().sources.count(Modality::linguistic) > 0;
  if (has_text && !options.embeddings) throw ConfigError("transcripts need an embedding file (--embeddings)");
  if (has_text && !fs::is_regular_file(*options.embeddings))
    throw IoError("1 missing input file(s):\n  embeddings: " + options.embeddings->string());

  DatasetBundle bundle;
  bundle.manifest.source = "extracted";
  std::map<std::string, std::vector<std::size_t>> by_split;
  for (std::size_t i = 0; i < rows.size(); ++i) by_split[rows[i].split].push_back(i);

  // Per-example sequences before padding.
  std::map<Modality, std::vector<Tensor>> sequences;

  if (has_text) {
    std::vector<std::vector<std::string>> docs(rows.size());
    std::vector<std::vector<std::string>> train_docs;
    for (std::size_t i = 0; i < rows.size(); ++i) {
      auto t = tokenize(io::read_file(rows[i].sources.at(Modality::linguistic)));
      if (t.empty) bundle.manifest.empty_transcripts.push_back(rows[i].id);
      docs[i] = std::move(t.tokens);
      if (rows[i].split == "train") train_docs.push_back(docs[i]);
    }
    Vocabulary vocab = Vocabulary::build(train_docs);
    vocab.load_embeddings(*options.embeddings, cfg.embedding_width);
    bundle.vocabulary_text = vocab.to_text();
    bundle.manifest.vocabulary = VocabularyInfo{"vocab.txt", vocab.hash(), vocab.size(), vocab.missing()};
    for (const auto& d : docs) sequences[Modality::linguistic].push_back(vocab.embed(d));
  }

  if (rows.front().sources.count(Modality::acoustic)) {
    AcousticInfo info;
    info.mel = cfg.mel;
    info.train_max = -std::numeric_limits<double>::infinity();
    auto& seq = sequences[Modality::acoustic];
    for (const auto& row : rows) {
      Waveform w = read_wav(row.sources.at(Modality::acoustic));
      if (w.samples.empty()) throw IoError(row.sources.at(Modality::acoustic).string() + ": no samples");
      if (w.sample_rate != cfg.mel.sample_rate)
        w.samples = resample_linear(w.samples, w.sample_rate, cfg.mel.sample_rate);
      auto spec = mel_spectrogram(w.samples, cfg.mel);
      if (spec.padded) info.padded_ids.push_back(row.id);
      if (row.split == "train")
        for (double v : spec.values.data()) info.train_max = std::max(info.train_max, v);
      seq.push_back(spec.values);
    }
    for (auto& t : seq) t = normalize_log_mel(t, info.train_max, cfg.mel.floor);
    bundle.manifest.acoustic = info;
  }

  if (rows.front().sources.count(Modality::visual)) {
    auto& seq = sequences[Modality::visual];
    std::size_t width = 0;
    for (const auto& row : rows) {
      const auto& path = row.sources.at(Modality::visual);
      Tensor t = load_tensor(path);
      if (t.rank() != 2) throw IoError(path.string() + ": visual features must be [frames x width], got " + shape_string(t.shape()));
      if (width == 0) width = t.cols();
      if (t.cols() != width)
        throw IoError(path.string() + ": visual width " + std::to_string(t.cols()) + ", earlier files have " +
                      std::to_string(width));
      for (double v : t.data())
        if (!std::isfinite(v)) throw IoError(path.string() + ": non-finite visual feature");
      seq.push_back(t);
    }
  }

  for (auto m : present) {
    const auto len_it = cfg.lengths.find(m);
    if (len_it == cfg.lengths.end())
      throw ConfigError("features.lengths has no entry for " + std::string(modality_tag(m)));
    bundle.manifest.modalities.push_back({m, sequences.at(m).front().cols(), len_it->second});
  }

  for (const auto& [name, indices] : by_split) {
    Split s;
    for (auto i : indices) {
      s.ids.push_back(rows[i].id);
      s.labels.sentiment.push_back(rows[i].sentiment);
      s.labels.emotions.push_back(rows[i].emotions);
    }
    for (const auto& spec : bundle.manifest.modalities) {
      std::vector<ModalityInput> padded;
      for (auto i : indices) padded.push_back(pad_truncate(sequences.at(spec.modality)[i], spec.length));
      s.modalities[spec.modality] = ModalityBatch::stack(spec.modality, padded);
    }
    bundle.manifest.splits[name] = s.size();
    bundle.splits[name] = std::move(s);
  }
  bundle.validate();
  return bundle;
}

DatasetBundle cmd_extract_features(const ExtractOptions& options) {
  auto bundle = extract_features(options);
  write_bundle(options.out, bundle);
  return bundle;
}

// ---------------------------------------------------------------------------
// train

std::string member_stem(std::size_t index) { return "member_" + std::to_string(index); }

std::string TrainSummary::to_text() const {
  json members_json = json::array();
  for (const auto& m : members)
    members_json.push_back({{"index", m.index},
                            {"seed", m.seed},
                            {"epochs", m.epochs},
                            {"best_valid_accuracy", m.best_valid_accuracy},
                            {"stop", m.early_stopped ? "early_stop" : "max_epochs"},
                            {"checkpoint", member_stem(m.index) + ".tbjm"}});
  json j = {{"config", json::parse(config_text)}, {"members", members_json}};
  return j.dump(2) + "\n";
}

namespace {

std::string log_text(const TrainState& state) {
  std::string out;
  for (const auto& r : state.log) out += r.to_json() + "\n";
  return out;
}

}  // namespace

TrainSummary cmd_train(const TrainOptions& options) {
  const RunConfig& cfg = options.config;
  cfg.validate();
  const DatasetBundle bundle = read_bundle(options.bundle);
  const EncoderConfig encoder = cfg.encoder_for(bundle.manifest);
  const Split& train = bundle.split("train");
  const Split& valid = bundle.split("valid");

  std::error_code ec;
  fs::create_directories(options.out, ec);
  if (ec) throw IoError("cannot create " + options.out.string() + ": " + ec.message());
  io::write_file(options.out / "config.json", cfg.to_text());

  TrainSummary summary;
  summary.config_text = cfg.to_text();
  for (std::size_t i = 0; i < cfg.train.ensemble; ++i) {
    const std::string stem = member_stem(i);
    const fs::path state_path = options.out / (stem + ".state.tbjs");
    const fs::path log_path = options.out / (stem + ".log.jsonl");
    const std::uint64_t seed = cfg.seed + i;

    TrainState state;
    if (options.resume && fs::exists(state_path)) {
      state = load_state(state_path);
      check_compatible(encoder, state.model.config);
      if (state.seed != seed)
        throw ConfigError(state_path.string() + ": saved seed " + std::to_string(state.seed) +
                          " does not match " + std::to_string(seed));
      progress_line(options.progress, stem + ": resuming after epoch " + std::to_string(state.epochs_done));
    } else {
      TbjeModel model = TbjeModel::create(encoder, seed);
      model.vocabulary_hash = bundle.vocabulary_hash();
      state = initial_state(model, cfg.train, seed);
    }

    try {
      fit(
          state, train, cfg.train,
          [&](const TbjeModel& m, std::size_t) { return evaluate_accuracy(m, valid, cfg.train.sentiment_boundary); },
          [&](const TrainState& s) {
            save_state(state_path, s);
            io::write_file(log_path, log_text(s));
            const auto& r = s.log.back();
            std::ostringstream line;
            line << stem << " epoch " << r.epoch << " lr " << r.lr << " loss " << r.train_loss << " valid "
                 << r.valid_accuracy << " " << schedule_event_name(r.event);
            progress_line(options.progress, line.str());
            return true;
          });
    } catch (const NumericError& e) {
      throw NumericError(std::string(e.what()) + " (state after the last completed epoch is in " +
                         state_path.string() + ")");
    }
    save_model(options.out / (stem + ".tbjm"), state.best);
    save_state(state_path, state);
    io::write_file(log_path, log_text(state));
    summary.members.push_back({i, seed, state.epochs_done, state.schedule.best(), state.schedule.stopped()});
  }
  io::write_file(options.out / "summary.json", summary.to_text());
  return summary;
}

// ---------------------------------------------------------------------------
// evaluate

namespace {

json scores_json(const BinaryScores& s) {
  return {{"accuracy", s.accuracy}, {"f1_weighted", s.f1_weighted}, {"f1_unweighted", s.f1_unweighted}};
}

BinaryScores binary_scores(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> gold) {
  std::vector<std::size_t> p(pred.begin(), pred.end()), g(gold.begin(), gold.end());
  return {accuracy(p, g), f1_weighted(pred, gold), f1_unweighted(pred, gold)};
}

}  // namespace

std::string EvaluationReport::to_text() const {
  json j = {{"task", std::string(task_name(task))},
            {"split", split},
            {"examples", examples},
            {"members", members},
            {"accuracy", accuracy}};
  if (binary) {
    j["f1_weighted"] = binary->f1_weighted;
    j["f1_unweighted"] = binary->f1_unweighted;
  }
  if (!emotions.empty()) {
    json e = json::object();
    for (const auto& [name, s] : emotions) e[name] = scores_json(s);
    j["emotions"] = e;
    j["emotion_mean"] = scores_json(*emotion_mean);
  }
  return j.dump(2) + "\n";
}

EvaluationReport evaluate_probabilities(const Tensor& probs, const Labels& labels, Task task, double boundary) {
  EvaluationReport r;
  r.task = task;
  r.examples = labels.size();
  r.accuracy = score_accuracy(probs, labels, task, boundary);
  const std::size_t n = labels.size();
  if (task == Task::sentiment2) {
    std::vector<std::uint8_t> pred(n), gold(n);
    for (std::size_t i = 0; i < n; ++i) {
      pred[i] = probs.at(i, 1) > probs.at(i, 0);
      gold[i] = static_cast<std::uint8_t>(sentiment_bin2(labels.sentiment[i], boundary));
    }
    r.binary = binary_scores(pred, gold);
  } else if (task == Task::emotions6) {
    BinaryScores mean;
    for (std::size_t e = 0; e < kEmotionCount; ++e) {
      std::vector<std::uint8_t> pred(n), gold(n);
      for (std::size_t i = 0; i < n; ++i) {
        pred[i] = probs.at(i, e) >= 0.5;
        gold[i] = labels.emotions[i][e];
      }
      const auto s = binary_scores(pred, gold);
      r.emotions[std::string(kEmotionNames[e])] = s;
      mean.accuracy += s.accuracy / kEmotionCount;
      mean.f1_weighted += s.f1_weighted / kEmotionCount;
      mean.f1_unweighted += s.f1_unweighted / kEmotionCount;
    }
    r.emotion_mean = mean;
  }
  return r;
}

EvaluationReport cmd_evaluate(const EvaluateOptions& options) {
  if (options.checkpoints.empty()) throw ConfigError("evaluate: no checkpoints given");
  const DatasetBundle bundle = read_bundle(options.bundle);
  const Split& split = bundle.split(options.split);
  std::vector<TbjeModel> models;
  for (const auto& path : options.checkpoints) {
    TbjeModel m = load_model(path);
    check_bundle_compatible(m.config, bundle.manifest);
    if (!models.empty()) check_compatible(models.front().config, m.config);
    if (m.vocabulary_hash != 0 && bundle.vocabulary_hash() != 0 && m.vocabulary_hash != bundle.vocabulary_hash())
      throw ConfigError(path.string() + ": trained with a different vocabulary than the bundle");
    models.push_back(std::move(m));
  }
  const Tensor probs = ensemble_predict(models, split);
  EvaluationReport report = evaluate_probabilities(probs, split.labels, models.front().config.task,
                                                   options.sentiment_boundary);
  report.split = options.split;
  report.members = models.size();
  if (options.report) io::write_file(*options.report, report.to_text());
  return report;
}

// ---------------------------------------------------------------------------
// gradcheck

GradcheckReport cmd_gradcheck(const GradcheckRunOptions& o) {
  if (o.modalities.empty()) throw ConfigError("gradcheck: at least one modality required");
  const std::map<Modality, std::size_t> widths = {
      {Modality::linguistic, 6}, {Modality::acoustic, 5}, {Modality::visual, 4}};
  SyntheticSpec spec;
  spec.modalities.clear();
  for (auto m : o.modalities) spec.modalities.push_back({m, widths.at(m), o.length});
  spec.splits = {{"train", o.batch}};
  spec.seed = o.seed;
  const DatasetBundle data = make_synthetic_bundle(spec);

  EncoderConfig base;
  base.blocks = o.blocks;
  base.width = o.width;
  base.heads = o.heads;
  base.ff_width = 2 * o.width;
  base.task = o.task;
  base.primary = o.modalities.front();
  EncoderConfig cfg = config_for_bundle(base, data.manifest);
  const TbjeModel model = TbjeModel::create(cfg, o.seed);
  const Split& batch = data.split("train");
  return gradcheck(
      model.parameters(),
      [&] { return task_loss(forward_batch(model, batch, ForwardContext{}), batch.labels, cfg.task); }, o.check);
}

std::string gradcheck_table(const GradcheckReport& report) {
  std::ostringstream out;
  out << "parameter\tcoordinates\tmax_rel_error\tstatus\n";
  for (const auto& p : report.parameters)
    out << p.name << '\t' << p.coordinates << '\t' << std::scientific << std::setprecision(3)
        << p.max_relative_error << std::defaultfloat << '\t' << (p.passed ? "ok" : "FAIL") << '\n';
  return out.str();
}

// ---------------------------------------------------------------------------
// sweep-blocks

std::vector<SweepRow> cmd_sweep_blocks(const SweepOptions& options) {
  if (options.blocks.empty()) throw ConfigError("sweep-blocks: empty block list");
  const DatasetBundle bundle = read_bundle(options.bundle);
  const Split& train = bundle.split("train");
  const Split& valid = bundle.split("valid");
  const Split* test = bundle.splits.count("test") ? &bundle.split("test") : nullptr;
  std::vector<SweepRow> rows;
  for (std::size_t b : options.blocks) {
    RunConfig cfg = options.config;
    cfg.encoder.blocks = b;
    cfg.validate();
    const EncoderConfig encoder = cfg.encoder_for(bundle.manifest);
    const auto start = std::chrono::steady_clock::now();
    SweepRow row;
    row.blocks = b;
    std::vector<TbjeModel> members;
    for (std::size_t i = 0; i < cfg.train.ensemble; ++i) {
      TbjeModel model = TbjeModel::create(encoder, cfg.seed + i);
      TrainState state = fit(model, train, valid, cfg.train, cfg.seed + i);
      row.epochs += state.epochs_done;
      members.push_back(std::move(state.best));
    }
    for (const auto& p : members.front().parameters()) row.parameters += p.tensor.numel();
    const Task task = encoder.task;
    const double boundary = cfg.train.sentiment_boundary;
    row.valid_accuracy = score_accuracy(ensemble_predict(members, valid), valid.labels, task, boundary);
    if (test) row.test_accuracy = score_accuracy(ensemble_predict(members, *test), test->labels, task, boundary);
    row.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::ostringstream line;
    line << "blocks " << b << ": valid " << row.valid_accuracy << ", " << row.epochs << " epochs, " << row.seconds
         << " s";
    progress_line(options.progress, line.str());
    rows.push_back(row);
  }
  return rows;
}

std::string sweep_table(const std::vector<SweepRow>& rows) {
  std::ostringstream out;
  out << "blocks\tparameters\tepochs\tvalid_accuracy\ttest_accuracy\tseconds\n";
  out << std::setprecision(6);
  for (const auto& r : rows) {
    out << r.blocks << '\t' << r.parameters << '\t' << r.epochs << '\t' << r.valid_accuracy << '\t';
    if (std::isnan(r.test_accuracy)) out << "NA";
    else out << r.test_accuracy;
    out << '\t' << std::fixed << std::setprecision(3) << r.seconds << std::defaultfloat << std::setprecision(6)
        << '\n';
  }
  return out.str();
}

// ---------------------------------------------------------------------------

DatasetBundle cmd_synth(const fs::path& out, const SyntheticSpec& spec) {
  auto bundle = make_synthetic_bundle(spec);
  write_bundle(out, bundle);
  return bundle;
}

}  // namespace tbje
