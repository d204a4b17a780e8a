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

// tbje command-line entry point.

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "tbje/commands.hpp"
#include "tbje/error.hpp"
#include "tbje/serialize.hpp"

namespace {

using namespace tbje;
namespace fs = std::filesystem;

enum ExitCode : int {
  kOk = 0,
  kUsage = 1,
  kConfig = 2,
  kIo = 3,
  kNumeric = 4,
  kCheckFailed = 5,
  kInternal = 6,
};

std::vector<Modality> parse_modalities(const std::string& list) {
  std::vector<Modality> out;
  std::stringstream in(list);
  std::string tag;
  while (std::getline(in, tag, ','))
    if (!tag.empty()) out.push_back(parse_modality(tag));
  if (out.empty()) throw ConfigError("empty modality list");
  return out;
}

struct Globals {
  std::optional<std::uint64_t> seed;
  std::optional<std::string> config;
  std::vector<std::string> overrides;

  RunConfig run_config() const {
    RunConfig cfg = config ? RunConfig::load(*config) : RunConfig{};
    for (const auto& o : overrides) cfg.apply_override(o);
    if (seed) cfg.seed = *seed;
    cfg.validate();
    return cfg;
  }
};

int run(int argc, char** argv) {
  CLI::App app{"Transformer-based joint-encoding models for multimodal sentiment and emotion classification"};
  app.require_subcommand(1);
  app.fallthrough();  // global options may follow the subcommand
  app.set_version_flag("--version", "tbje 0.1.0");
  Globals g;
  app.add_option("--seed", g.seed, "Master seed (overrides the config file)");
  app.add_option("--config", g.config, "JSON run configuration; missing keys keep their defaults")
      ->check(CLI::ExistingFile);
  app.add_option("--set", g.overrides, "Override one config key, e.g. --set train.lr=1e-3 (repeatable)");

  // extract-features
  auto* extract = app.add_subcommand("extract-features", "Build a dataset bundle from a manifest CSV");
  ExtractOptions ex;
  std::string ex_embeddings;
  extract->add_option("--manifest", ex.manifest, "Manifest CSV")->required();
  extract->add_option("--out", ex.out, "Output bundle directory")->required();
  extract->add_option("--embeddings", ex_embeddings, "Word-vector text file (token v1 ... v300 per line)");

  // train
  auto* train = app.add_subcommand("train", "Train the ensemble on a bundle");
  TrainOptions tr;
  bool quiet = false;
  train->add_option("--bundle", tr.bundle, "Bundle directory")->required();
  train->add_option("--out", tr.out, "Run directory for checkpoints and logs")->required();
  train->add_flag("--resume", tr.resume, "Continue from saved member states in --out");
  train->add_flag("--quiet", quiet, "No per-epoch progress lines");

  // evaluate
  auto* evaluate = app.add_subcommand("evaluate", "Score an ensemble of checkpoints on a bundle split");
  EvaluateOptions ev;
  std::string ev_report;
  evaluate->add_option("--bundle", ev.bundle, "Bundle directory")->required();
  evaluate->add_option("--checkpoint", ev.checkpoints, "Model checkpoint (repeatable)")->required();
  evaluate->add_option("--split", ev.split, "Split to score")->capture_default_str();
  auto* boundary = evaluate->add_option("--boundary", ev.sentiment_boundary,
                                        "Two-class boundary; scores below it are negative");
  evaluate->add_option("--report", ev_report, "Also write the report to this file");

  // gradcheck
  auto* gc = app.add_subcommand("gradcheck", "Finite-difference check of every parameter tensor");
  GradcheckRunOptions go;
  std::string gc_modalities = "L,A", gc_task = "sentiment-7";
  gc->add_option("--modalities", gc_modalities, "Comma-separated modality tags, primary first")
      ->capture_default_str();
  gc->add_option("--blocks", go.blocks)->capture_default_str();
  gc->add_option("--width", go.width)->capture_default_str();
  gc->add_option("--heads", go.heads)->capture_default_str();
  gc->add_option("--length", go.length, "Sequence length of every modality")->capture_default_str();
  gc->add_option("--batch", go.batch)->capture_default_str();
  gc->add_option("--task", gc_task, "sentiment-2, sentiment-7 or emotions-6")->capture_default_str();
  gc->add_option("--step", go.check.step, "Central-difference step")->capture_default_str();
  gc->add_option("--tolerance", go.check.tolerance, "Maximum relative error")->capture_default_str();

  // sweep-blocks
  auto* sweep = app.add_subcommand("sweep-blocks", "Train and score one ensemble per block count");
  SweepOptions sw;
  std::string sw_blocks = "1,2,4,6", sw_out;
  sweep->add_option("--bundle", sw.bundle, "Bundle directory")->required();
  sweep->add_option("--blocks", sw_blocks, "Comma-separated block counts")->capture_default_str();
  sweep->add_option("--out", sw_out, "Also write the table to this file");

  // synth
  auto* synth = app.add_subcommand("synth", "Write a separable synthetic bundle");
  SyntheticSpec sy;
  std::string sy_modalities = "L,A,V", sy_out;
  std::size_t sy_train = 32, sy_valid = 16, sy_test = 16;
  synth->add_option("--out", sy_out, "Output bundle directory")->required();
  synth->add_option("--modalities", sy_modalities)->capture_default_str();
  synth->add_option("--train", sy_train)->capture_default_str();
  synth->add_option("--valid", sy_valid)->capture_default_str();
  synth->add_option("--test", sy_test)->capture_default_str();
  synth->add_option("--noise", sy.noise, "Standard deviation around the class prototypes")->capture_default_str();

  // print-config
  auto* print = app.add_subcommand("print-config", "Print the effective run configuration");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  if (*extract) {
    ex.config = g.run_config();
    if (!ex_embeddings.empty()) ex.embeddings = ex_embeddings;
    const auto bundle = cmd_extract_features(ex);
    std::cout << "wrote " << ex.out.string() << ":";
    for (const auto& [name, n] : bundle.manifest.splits) std::cout << ' ' << name << '=' << n;
    std::cout << '\n';
    if (bundle.manifest.vocabulary && !bundle.manifest.vocabulary->missing.empty())
      std::cerr << bundle.manifest.vocabulary->missing.size()
                << " train tokens have no pretrained vector (listed in manifest.json)\n";
    if (!bundle.manifest.empty_transcripts.empty())
      std::cerr << bundle.manifest.empty_transcripts.size() << " transcripts are empty\n";
    return kOk;
  }
  if (*train) {
    tr.config = g.run_config();
    if (!quiet) tr.progress = &std::cerr;
    const auto summary = cmd_train(tr);
    std::cout << summary.to_text();
    return kOk;
  }
  if (*evaluate) {
    ev.sentiment_boundary = boundary->count() ? ev.sentiment_boundary : g.run_config().train.sentiment_boundary;
    if (!ev_report.empty()) ev.report = ev_report;
    std::cout << cmd_evaluate(ev).to_text();
    return kOk;
  }
  if (*gc) {
    go.modalities = parse_modalities(gc_modalities);
    go.task = parse_task(gc_task);
    go.seed = g.seed.value_or(0);
    go.check.seed = go.seed;
    const auto report = cmd_gradcheck(go);
    std::cout << gradcheck_table(report);
    std::cout << "max relative error " << report.max_relative_error << " in " << report.seconds << " s: "
              << (report.passed() ? "PASS" : "FAIL") << '\n';
    return report.passed() ? kOk : kCheckFailed;
  }
  if (*sweep) {
    sw.config = g.run_config();
    sw.blocks.clear();
    std::stringstream in(sw_blocks);
    std::string item;
    while (std::getline(in, item, ',')) {
      if (item.empty()) continue;
      try {
        std::size_t used = 0;
        const long long v = std::stoll(item, &used);
        if (used != item.size() || v < 0) throw std::invalid_argument(item);
        sw.blocks.push_back(static_cast<std::size_t>(v));
      } catch (const std::exception&) {
        throw ConfigError("--blocks: '" + item + "' is not a non-negative integer");
      }
    }
    sw.progress = &std::cerr;
    const auto table = sweep_table(cmd_sweep_blocks(sw));
    if (!sw_out.empty()) io::write_file(sw_out, table);
    std::cout << table;
    return kOk;
  }
  if (*synth) {
    std::vector<ModalitySpec> keep;
    const SyntheticSpec defaults;
    for (auto m : parse_modalities(sy_modalities))
      for (const auto& s : defaults.modalities)
        if (s.modality == m) keep.push_back(s);
    sy.modalities = keep;
    sy.splits = {{"train", sy_train}, {"valid", sy_valid}};
    if (sy_test > 0) sy.splits["test"] = sy_test;
    sy.seed = g.seed.value_or(0);
    cmd_synth(sy_out, sy);
    std::cout << "wrote " << sy_out << '\n';
    return kOk;
  }
  if (*print) {
    std::cout << g.run_config().to_text();
    return kOk;
  }
  return kUsage;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfig;
  } catch (const IoError& e) {
    std::cerr << "i/o error: " << e.what() << '\n';
    return kIo;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << '\n';
    return kNumeric;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << '\n';
    return kInternal;
  }
}
