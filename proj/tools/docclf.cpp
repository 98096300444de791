// Command-line driver. Every failure ends in one line on stderr:
//   error: <code>: <message>
// and a nonzero exit status.

#include "docclf/cli/commands.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <string>
#include <vector>

namespace {

using docclf::cli::CliError;
using docclf::cli::CommandOptions;

struct Flags {
  std::vector<std::string> configs;
  std::vector<std::string> sets;
  std::optional<long long> seed;
  std::optional<int> workers;
  std::optional<int> batch_per_worker;
  std::optional<bool> deterministic;
  std::string out, data, checkpoint, image_checkpoint, text_checkpoint;
  std::vector<int> k_list;
};

std::string one_line(std::string msg) {
  for (auto &c : msg)
    if (c == '\n' || c == '\r') c = ' ';
  return msg;
}

int fail(const std::string &code, const std::string &msg) {
  std::cerr << "error: " << code << ": " << one_line(msg) << std::endl;
  return code == "usage" ? 2 : 1;
}

} // namespace

int main(int argc, char **argv) {
  CLI::App app{"Dual-modality document classification: training, evaluation and scaling benchmarks"};
  app.require_subcommand(1);
  app.set_version_flag("--version", docclf::cli::kVersion);
  Flags f;

  const auto common = [&](CLI::App *cmd, const std::string &batch_stage) {
    cmd->add_option("--config", f.configs, "YAML config layered over the built-in defaults (repeatable)");
    cmd->add_option("--set", f.sets, "Override one key, e.g. --set train.pretrain.epochs=2 (repeatable)");
    cmd->add_option("--seed", f.seed, "Seed for data, initialization and shuffling");
    cmd->add_option("--workers", f.workers, "Data-parallel worker count k")->check(CLI::PositiveNumber);
    if (!batch_stage.empty()) {
      cmd->add_option("--batch-per-worker", f.batch_per_worker, "Per-worker minibatch n")
          ->check(CLI::PositiveNumber);
    }
    cmd->add_flag("--deterministic,!--no-deterministic", f.deterministic, "Fixed-order gradient reduction");
    cmd->add_option("--out", f.out, "Output directory")->required();
  };

  auto *gen = app.add_subcommand("gen-data", "Generate a synthetic corpus");
  common(gen, "");
  auto *pre = app.add_subcommand("pretrain", "Train the image network from scratch");
  common(pre, "pretrain");
  pre->add_option("--data", f.data, "Corpus directory")->required();
  auto *ft = app.add_subcommand("finetune", "Retrain only the classifier head of an image checkpoint");
  common(ft, "finetune");
  ft->add_option("--data", f.data, "Corpus directory")->required();
  ft->add_option("--checkpoint", f.checkpoint, "Source image checkpoint")->required();
  auto *txt = app.add_subcommand("train-text", "Train the text encoder");
  common(txt, "text");
  txt->add_option("--data", f.data, "Corpus directory")->required();
  auto *ens = app.add_subcommand("ensemble-eval", "Evaluate image, text and fused predictions over splits");
  common(ens, "");
  ens->add_option("--data", f.data, "Corpus directory")->required();
  ens->add_option("--image-checkpoint", f.image_checkpoint, "Image model checkpoint")->required();
  ens->add_option("--text-checkpoint", f.text_checkpoint, "Text model checkpoint")->required();
  auto *bench = app.add_subcommand("bench-scaling", "Measure training throughput against worker count");
  common(bench, "pretrain");
  bench->add_option("--data", f.data, "Corpus directory")->required();
  bench->add_option("--k", f.k_list, "Worker counts, e.g. --k 1 2 4")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp &e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion &e) {
    return app.exit(e);
  } catch (const CLI::ParseError &e) {
    return fail("usage", e.what());
  }

  CLI::App *cmd = app.get_subcommands().front();
  const std::string name = cmd->get_name();
  const std::string stage = name == "train-text" ? "text" : name == "finetune" ? "finetune" : "pretrain";

  try {
    std::vector<std::filesystem::path> files(f.configs.begin(), f.configs.end());
    CommandOptions opts;
    opts.config = docclf::cli::load_layered(files, f.sets);
    if (f.seed) {
      if (*f.seed < 0) throw CliError("usage", "--seed must be non-negative");
      opts.config["seed"] = *f.seed;
    }
    if (f.workers) opts.config["parallel"]["workers"] = *f.workers;
    if (f.batch_per_worker) opts.config["train"][stage]["batch_per_worker"] = *f.batch_per_worker;
    if (f.deterministic) opts.config["parallel"]["deterministic"] = *f.deterministic;
    opts.out = f.out;
    opts.data = f.data;
    opts.checkpoint = f.checkpoint;
    opts.image_checkpoint = f.image_checkpoint;
    opts.text_checkpoint = f.text_checkpoint;
    opts.k_list = f.k_list;

    if (name == "gen-data")
      docclf::cli::gen_data(opts, std::cout);
    else if (name == "pretrain")
      docclf::cli::pretrain(opts, std::cout);
    else if (name == "finetune")
      docclf::cli::finetune(opts, std::cout);
    else if (name == "train-text")
      docclf::cli::train_text(opts, std::cout);
    else if (name == "ensemble-eval")
      docclf::cli::ensemble_eval(opts, std::cout);
    else
      docclf::cli::bench_scaling(opts, std::cout);
  } catch (const CliError &e) {
    return fail(e.code(), e.what());
  } catch (const std::exception &e) {
    return fail("internal", e.what());
  }
  return 0;
}
