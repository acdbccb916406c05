// Copyright 2026 The stilab Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// stilab command-line tool: attrs, synth, train, eval, saliency.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "dataset_files.h"
#include "json.hpp"
#include "stilab/attributes.h"
#include "stilab/corpus.h"
#include "stilab/embedding_io.h"
#include "stilab/error.h"
#include "stilab/eval.h"
#include "stilab/random.h"
#include "stilab/trainer.h"

namespace fs = std::filesystem;
using nlohmann::json;

namespace stilab::cli {
namespace {

std::string UtcNow() {
  const std::time_t now =
      std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string Hex(std::uint64_t v) {
  char buf[24];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(v));
  return buf;
}

// Collects inputs and outputs of one command and writes its manifest.
class Run {
 public:
  // `tag` distinguishes runs of one command that share an output directory.
  Run(std::string command, std::string tag, fs::path out_dir,
      std::uint64_t seed)
      : command_(std::move(command)), tag_(std::move(tag)),
        out_dir_(std::move(out_dir)), seed_(seed), started_(UtcNow()) {}

  const fs::path &out_dir() const { return out_dir_; }
  json &result() { return result_; }

  void Input(const fs::path &p) { inputs_.push_back(p); }
  void Output(const fs::path &p) { artifacts_.push_back(p); }

  fs::path ManifestPath() const {
    const std::string suffix = tag_.empty() ? "" : "_" + tag_;
    return out_dir_ / ("run_manifest_" + command_ + suffix + ".json");
  }

  void Write(const std::string &config, const std::string &error) {
    std::uint64_t h = Fnv1a64("");
    for (const auto &p : inputs_) {
      std::error_code ec;
      if (!fs::is_regular_file(p, ec)) {
        h = Fnv1a64("missing:" + p.string(), h);
        continue;
      }
      const auto bytes = io::ReadFileBytes(p);
      h = Fnv1a64(std::string_view(bytes.data(), bytes.size()), h);
    }
    json j;
    j["command"] = command_;
    j["seed"] = seed_;
    j["config"] = config;
    j["fingerprint"] = Hex(h);
    j["inputs"] = json::array();
    for (const auto &p : inputs_) j["inputs"].push_back(p.string());
    artifacts_.push_back(ManifestPath());
    j["artifacts"] = json::array();
    for (const auto &p : artifacts_) j["artifacts"].push_back(p.string());
    j["started_utc"] = started_;
    j["finished_utc"] = UtcNow();
    j["status"] = error.empty() ? "ok" : "error";
    if (!error.empty()) j["error"] = error;
    j["result"] = result_;
    std::ofstream out(ManifestPath(), std::ios::trunc);
    out << j.dump(2) << '\n';
  }

 private:
  std::string command_;
  std::string tag_;
  fs::path out_dir_;
  std::uint64_t seed_;
  std::string started_;
  std::vector<fs::path> inputs_;
  std::vector<fs::path> artifacts_;
  json result_ = json::object();
};

bool OnOff(const std::string &v) { return v == "on"; }

struct ExtractorFlags {
  std::string endpoint = std::string(attributes::kMockEndpoint);
  double temperature = 0.7;
  int max_tokens = 256;
  double timeout = 5.0;

  void Add(CLI::App *cmd) {
    cmd->add_option("--endpoint", endpoint,
                    "Keyword extraction endpoint URL, or 'mock'")
        ->capture_default_str();
    cmd->add_option("--extractor-temperature", temperature)
        ->capture_default_str();
    cmd->add_option("--max-tokens", max_tokens)->capture_default_str();
    cmd->add_option("--extractor-timeout", timeout, "Seconds")
        ->capture_default_str();
  }

  attributes::ExtractionClientConfig Config() const {
    attributes::ExtractionClientConfig c;
    c.endpoint = endpoint;
    c.sampling_temperature = temperature;
    c.max_output_tokens = max_tokens;
    c.timeout_seconds = timeout;
    c = attributes::ApplyEnvironment(c);
    c.Validate();
    return c;
  }
};

corpus::ClassTexts TextsFor(const corpus::SyntheticCorpus &c,
                            std::size_t num_attributes,
                            const ExtractorFlags &extractor) {
  const encoders::TextEncoder text(c.spec.text_table_seed, c.spec.dim);
  return corpus::BuildClassTexts(c.descriptions, num_attributes,
                                 extractor.Config(),
                                 attributes::StopwordSet::Default(), text);
}

void AddInputs(Run &run, const fs::path &data_dir) {
  for (const auto &p : DatasetFiles(data_dir)) run.Input(p);
}

// ---------------------------------------------------------------------------

struct AttrsCmd {
  std::string corpus_path;
  std::size_t num_attributes = 8;
  std::string stopwords_path;
  ExtractorFlags extractor;

  void Add(CLI::App *cmd) {
    cmd->add_option("--corpus", corpus_path, "Description corpus (JSONL)")
        ->required();
    cmd->add_option("--num-attributes", num_attributes, "N_a")
        ->capture_default_str();
    cmd->add_option("--stopwords", stopwords_path,
                    "Stopword list (default: built-in)");
    extractor.Add(cmd);
  }

  void Execute(Run &run) const {
    run.Input(corpus_path);
    const auto corpus = attributes::LoadDescriptionCorpus(corpus_path);
    attributes::StopwordSet stopwords = attributes::StopwordSet::Default();
    if (!stopwords_path.empty()) {
      run.Input(stopwords_path);
      stopwords = attributes::StopwordSet::Load(stopwords_path);
    }
    const auto config = extractor.Config();
    std::vector<attributes::AttributeRecord> records;
    std::size_t shortfalls = 0;
    for (const auto &[name, description] : corpus) {
      records.push_back(attributes::BuildAttributeRecord(
          description, num_attributes, config, stopwords));
      if (records.back().shortfall) ++shortfalls;
    }
    const fs::path out = run.out_dir() / "attributes.jsonl";
    attributes::WriteAttributeRecords(out, records);
    run.Output(out);
    run.result()["records"] = records.size();
    run.result()["shortfalls"] = shortfalls;
    std::cout << "wrote " << records.size() << " attribute records to "
              << out.string() << '\n';
  }
};

struct SynthCmd {
  corpus::SyntheticCorpusSpec spec;

  void Add(CLI::App *cmd) {
    cmd->add_option("--num-concepts", spec.num_concepts)->capture_default_str();
    cmd->add_option("--seen-classes", spec.seen_classes)->capture_default_str();
    cmd->add_option("--unseen-classes", spec.unseen_classes)
        ->capture_default_str();
    cmd->add_option("--videos-per-class", spec.videos_per_class)
        ->capture_default_str();
    cmd->add_option("--frames", spec.num_frames, "T")->capture_default_str();
    cmd->add_option("--patches", spec.num_patches, "N_p")
        ->capture_default_str();
    cmd->add_option("--dim", spec.dim, "D")->capture_default_str();
    cmd->add_option("--noise-scale", spec.noise_scale)->capture_default_str();
    cmd->add_option("--distractors", spec.num_distractors)
        ->capture_default_str();
    cmd->add_option("--background-concept-patches",
                    spec.background_concept_patches)
        ->capture_default_str();
    cmd->add_option("--text-seed", spec.text_table_seed)
        ->capture_default_str();
  }

  void Execute(Run &run, std::uint64_t seed) {
    spec.seed = seed;
    const auto c = corpus::GenerateSyntheticCorpus(spec);
    for (const auto &p : SaveDataset(run.out_dir(), c)) {
      run.Output(p);
      run.Input(p);  // the fingerprint covers the generated corpus
    }
    run.result()["classes"] = c.classes.size();
    run.result()["videos"] = c.videos.size();
    std::cout << "wrote " << c.classes.size() << " classes, "
              << c.videos.size() << " videos to " << run.out_dir().string()
              << '\n';
  }
};

struct TrainCmd {
  std::string data_dir;
  std::string resume;
  trainer::TrainConfig config;
  std::string spatial = "on";
  std::string temporal = "on";
  ExtractorFlags extractor;

  void Add(CLI::App *cmd) {
    cmd->add_option("--data", data_dir, "Dataset directory")->required();
    cmd->add_option("--resume", resume, "Checkpoint to continue from");
    cmd->add_option("--learning-rate", config.learning_rate)
        ->capture_default_str();
    cmd->add_option("--weight-decay", config.weight_decay)
        ->capture_default_str();
    cmd->add_option("--epochs", config.epochs)->capture_default_str();
    cmd->add_option("--batch-size", config.batch_size)->capture_default_str();
    cmd->add_option("--num-attributes", config.num_attributes, "N_a")
        ->capture_default_str();
    cmd->add_option("--tau-saliency", config.tau_saliency)
        ->capture_default_str();
    cmd->add_option("--beta1", config.beta1)->capture_default_str();
    cmd->add_option("--beta2", config.beta2)->capture_default_str();
    cmd->add_option("--epsilon", config.epsilon)->capture_default_str();
    cmd->add_option("--toggle-spatial", spatial)
        ->check(CLI::IsMember({"on", "off"}))
        ->capture_default_str();
    cmd->add_option("--toggle-temporal", temporal)
        ->check(CLI::IsMember({"on", "off"}))
        ->capture_default_str();
    extractor.Add(cmd);
  }

  void Execute(Run &run, std::uint64_t seed) {
    AddInputs(run, data_dir);
    const auto c = LoadDataset(data_dir);
    config.seed = seed;
    config.toggles = {OnOff(spatial), OnOff(temporal)};
    config.Validate();
    const auto texts = TextsFor(c, config.num_attributes, extractor);
    const auto train_set =
        eval::MakeClassSubset(c, texts, c.SeenClassIndices());

    trainer::TrainState state;
    if (!resume.empty()) {
      run.Input(resume);
      state = trainer::LoadCheckpoint(resume);
      const std::size_t done = state.epoch;
      state.config = config;
      state.model.sti = config.Sti();
      state.epoch = done;
    } else {
      state = trainer::TrainState::Initialize(c.spec.dim, config);
    }
    trainer::Fit(state, train_set);

    const fs::path ckpt = run.out_dir() / "checkpoint.stickpt";
    const fs::path loss = run.out_dir() / "loss.csv";
    trainer::SaveCheckpoint(ckpt, state);
    run.Output(ckpt);
    trainer::WriteLossCsv(loss, state.loss_history);
    run.Output(loss);
    run.result()["epochs"] = state.epoch;
    run.result()["first_epoch_loss"] = state.loss_history.front();
    run.result()["final_epoch_loss"] = state.loss_history.back();
    std::printf("trained %zu epochs, mean loss %.6f -> %.6f\n", state.epoch,
                state.loss_history.front(), state.loss_history.back());
  }
};

struct EvalCmd {
  std::string data_dir;
  std::string checkpoint;
  std::string mode = "zero-shot";
  std::size_t subset_size = 0;
  std::vector<std::size_t> shots = {2, 4, 8, 16};
  std::size_t fewshot_epochs = 50;
  std::string spatial;
  std::string temporal;
  ExtractorFlags extractor;

  void Add(CLI::App *cmd) {
    cmd->add_option("--data", data_dir, "Dataset directory")->required();
    cmd->add_option("--checkpoint", checkpoint)->required();
    cmd->add_option("--mode", mode)
        ->check(CLI::IsMember({"zero-shot", "seen", "few-shot"}))
        ->capture_default_str();
    cmd->add_option("--subset-size", subset_size,
                    "Classes per split (0: 160/220 of the pool)")
        ->capture_default_str();
    cmd->add_option("--shots", shots, "Few-shot K values")
        ->capture_default_str();
    cmd->add_option("--fewshot-epochs", fewshot_epochs)->capture_default_str();
    cmd->add_option("--toggle-spatial", spatial,
                    "on/off (default: as trained)")
        ->check(CLI::IsMember({"on", "off"}));
    cmd->add_option("--toggle-temporal", temporal,
                    "on/off (default: as trained)")
        ->check(CLI::IsMember({"on", "off"}));
    extractor.Add(cmd);
  }

  void Execute(Run &run, std::uint64_t seed) const {
    AddInputs(run, data_dir);
    run.Input(checkpoint);
    const auto c = LoadDataset(data_dir);
    trainer::TrainState state = trainer::LoadCheckpoint(checkpoint);
    if (!spatial.empty()) state.config.toggles.spatial = OnOff(spatial);
    if (!temporal.empty()) state.config.toggles.temporal = OnOff(temporal);
    state.model.sti = state.config.Sti();
    const auto texts = TextsFor(c, state.config.num_attributes, extractor);
    const auto pool =
        mode == "seen" ? c.SeenClassIndices() : c.UnseenClassIndices();
    if (pool.empty()) {
      throw Error(ErrorCode::kInvalidArgument, "no classes for mode " + mode);
    }

    const fs::path out =
        run.out_dir() / ("metrics_" + std::string(mode) + ".csv");
    if (mode == "few-shot") {
      const auto full = eval::MakeClassSubset(c, texts, pool);
      std::vector<eval::ShotRow> rows;
      json per_k = json::array();
      for (std::size_t k : shots) {
        const auto ft = trainer::FewShotFinetune(
            state.model, full, k, fewshot_epochs, MixSeed(seed, k),
            state.config);
        std::set<std::size_t> used(ft.sample.indices.begin(),
                                   ft.sample.indices.end());
        std::vector<std::size_t> rest;
        for (std::size_t i = 0; i < full.size(); ++i) {
          if (!used.count(i)) rest.push_back(i);
        }
        if (rest.empty()) {
          for (std::size_t i = 0; i < full.size(); ++i) rest.push_back(i);
        }
        const auto metrics =
            eval::EvaluateSplit(full.Subset(rest), ft.state.model);
        rows.push_back({k, metrics});
        per_k.push_back({{"shots", k},
                         {"top1", metrics.top1},
                         {"top5", metrics.top5},
                         {"shortfall", ft.sample.shortfall}});
        std::printf("K=%zu top1=%.4f top5=%.4f%s\n", k, metrics.top1,
                    metrics.top5, ft.sample.shortfall ? " (shortfall)" : "");
      }
      eval::WriteFewShotReport(out, rows);
      run.result()["few_shot"] = per_k;
    } else {
      std::size_t size = subset_size;
      if (size == 0) size = std::max<std::size_t>(1, (pool.size() * 160 + 110) / 220);
      std::vector<eval::SplitRow> rows;
      std::vector<double> top1;
      for (int split = 1; split <= 3; ++split) {
        const auto pick = eval::SampleCategorySubset(
            pool.size(), size, MixSeed(seed, static_cast<std::uint64_t>(split)));
        std::vector<std::size_t> classes;
        for (std::size_t p : pick) classes.push_back(pool[p]);
        const auto metrics = eval::EvaluateSplit(
            eval::MakeClassSubset(c, texts, classes), state.model);
        rows.push_back({split, metrics});
        top1.push_back(metrics.top1);
        std::printf("split %d: top1=%.4f top5=%.4f (%zu videos, %zu classes)\n",
                    split, metrics.top1, metrics.top5, metrics.videos,
                    classes.size());
      }
      eval::WriteMetricReport(out, rows);
      const auto agg = eval::AggregateSplits(top1);
      run.result()["top1_mean"] = agg.mean;
      run.result()["top1_std"] = agg.std;
      std::printf("top1 %.4f +- %.4f\n", agg.mean, agg.std);
    }
    run.Output(out);
  }
};

struct SaliencyCmd {
  std::string data_dir;
  std::string checkpoint;
  std::string video_id;
  std::string class_name;
  ExtractorFlags extractor;

  void Add(CLI::App *cmd) {
    cmd->add_option("--data", data_dir, "Dataset directory")->required();
    cmd->add_option("--checkpoint", checkpoint)->required();
    cmd->add_option("--video-id", video_id)->required();
    cmd->add_option("--class", class_name, "Class name")->required();
    extractor.Add(cmd);
  }

  std::string Tag() const {
    std::string stem = video_id + "_" + class_name;
    for (char &ch : stem) {
      if (ch == ' ' || ch == '/') ch = '_';
    }
    return stem;
  }

  void Execute(Run &run) const {
    AddInputs(run, data_dir);
    run.Input(checkpoint);
    const auto c = LoadDataset(data_dir);
    const trainer::TrainState state = trainer::LoadCheckpoint(checkpoint);
    const corpus::Video *video = nullptr;
    for (const auto &v : c.videos) {
      if (v.id == video_id) video = &v;
    }
    if (video == nullptr) {
      throw Error(ErrorCode::kNotFound, "no video '" + video_id + "'");
    }
    std::size_t cls = c.classes.size();
    for (std::size_t k = 0; k < c.classes.size(); ++k) {
      if (c.classes[k].name == class_name) cls = k;
    }
    if (cls == c.classes.size()) {
      throw Error(ErrorCode::kNotFound, "no class '" + class_name + "'");
    }
    const encoders::TextEncoder text(c.spec.text_table_seed, c.spec.dim);
    const auto record = attributes::BuildAttributeRecord(
        c.descriptions[cls], state.config.num_attributes, extractor.Config(),
        attributes::StopwordSet::Default());
    const auto rows = eval::ComputeSaliency(
        video->raw, text.EncodeSentence(record.prompt_sentence), state.model);
    const fs::path out = run.out_dir() / ("saliency_" + Tag() + ".csv");
    eval::ExportSaliency(out, rows);
    run.Output(out);
    run.result()["frames"] = rows.size();
    std::cout << "wrote " << rows.size() << " frames to " << out.string()
              << '\n';
  }
};

}  // namespace
}  // namespace stilab::cli

int main(int argc, char **argv) {
  using namespace stilab::cli;
  CLI::App app{"stilab: spatio-temporal interaction toolkit"};
  app.require_subcommand(1);
  app.set_config("--config", "", "TOML/INI file; command-line flags win");
  std::uint64_t seed = 0;
  std::string out_dir = ".";
  app.add_option("--seed", seed, "Single source of randomness")
      ->capture_default_str();
  app.add_option("--out-dir", out_dir, "Directory for outputs")
      ->capture_default_str();

  AttrsCmd attrs;
  SynthCmd synth;
  TrainCmd train;
  EvalCmd eval_cmd;
  SaliencyCmd saliency;
  attrs.Add(app.add_subcommand("attrs", "Extract descriptive attributes"));
  synth.Add(app.add_subcommand("synth", "Generate a synthetic corpus"));
  train.Add(app.add_subcommand("train", "Train on the seen classes"));
  eval_cmd.Add(app.add_subcommand("eval", "Evaluate a checkpoint"));
  saliency.Add(app.add_subcommand("saliency", "Export frame saliency"));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError &e) {
    return app.exit(e);
  }

  CLI::App *cmd = app.get_subcommands().front();
  // Global flags plus the active subcommand's.
  std::string config_text;
  {
    std::istringstream all(app.config_to_str(true, false));
    const std::string prefix = cmd->get_name() + ".";
    std::string line;
    while (std::getline(all, line)) {
      const auto eq = line.find('=');
      const auto dot = line.find('.');
      if (dot == std::string::npos || dot > eq || line.rfind(prefix, 0) == 0) {
        config_text += line + '\n';
      }
    }
  }
  std::unique_ptr<Run> run;
  try {
    std::filesystem::create_directories(out_dir);
    const std::string &name = cmd->get_name();
    const std::string tag = name == "eval"       ? eval_cmd.mode
                            : name == "saliency" ? saliency.Tag()
                                                 : "";
    run = std::make_unique<Run>(name, tag, out_dir, seed);
    if (name == "attrs") attrs.Execute(*run);
    else if (name == "synth") synth.Execute(*run, seed);
    else if (name == "train") train.Execute(*run, seed);
    else if (name == "eval") eval_cmd.Execute(*run, seed);
    else saliency.Execute(*run);
    run->Write(config_text, "");
    return 0;
  } catch (const std::exception &e) {
    std::cerr << "error: " << e.what() << '\n';
    if (run) {
      try {
        run->Write(config_text, e.what());
      } catch (const std::exception &) {
      }
    }
    return 1;
  }
}
