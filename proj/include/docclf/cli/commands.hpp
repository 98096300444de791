#ifndef DOCCLF_CLI_COMMANDS_HPP
#define DOCCLF_CLI_COMMANDS_HPP

#include "docclf/cli/config.hpp"

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace docclf::cli {

inline constexpr const char *kVersion = "0.1.0";

struct CommandOptions {
  Config config;
  std::filesystem::path out;
  /// Corpus directory, or a gen-data output directory holding one.
  std::filesystem::path data;
  std::filesystem::path checkpoint;
  std::filesystem::path image_checkpoint;
  std::filesystem::path text_checkpoint;
  /// bench-scaling worker counts; empty means bench.k_list.
  std::vector<int> k_list;
};

/// Each command writes its artifacts and manifest.json under `opts.out`,
/// logs progress to `log` and returns the manifest. Failures are CliError.
Config gen_data(const CommandOptions &opts, std::ostream &log);
Config pretrain(const CommandOptions &opts, std::ostream &log);
Config finetune(const CommandOptions &opts, std::ostream &log);
Config train_text(const CommandOptions &opts, std::ostream &log);
Config ensemble_eval(const CommandOptions &opts, std::ostream &log);
Config bench_scaling(const CommandOptions &opts, std::ostream &log);

/// `dir/corpus` when it holds a corpus manifest, otherwise `dir`.
std::filesystem::path resolve_corpus_dir(const std::filesystem::path &dir);

/// Per-class split of `labels` into (train, val), `val_fraction` of each
/// class rounded to nearest going to val. Deterministic in `seed`.
std::pair<std::vector<std::size_t>, std::vector<std::size_t>>
holdout_split(const std::vector<int> &labels, double val_fraction, std::uint64_t seed);

} // namespace docclf::cli

#endif // DOCCLF_CLI_COMMANDS_HPP
