#include "docclf/cli/commands.hpp"

#include "docclf/data/corpus.hpp"
#include "docclf/data/splits.hpp"
#include "docclf/eval/ensemble.hpp"
#include "docclf/optim/optimizer.hpp"
#include "docclf/optim/schedule.hpp"
#include "docclf/parallel/trainer.hpp"
#include "docclf/serialize.hpp"
#include "docclf/train/tasks.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>
#include <thread>

namespace docclf::cli {

namespace fs = std::filesystem;

namespace {

std::uint64_t seed_of(const Config &cfg) {
  const auto &s = at_path(cfg, "seed");
  if (!s.is_number_integer() || s.get<long long>() < 0) throw CliError("config", "seed must be a non-negative integer");
  return s.get<std::uint64_t>();
}

void ensure_out(const fs::path &out) {
  if (out.empty()) throw CliError("usage", "--out is required");
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec || !fs::is_directory(out)) throw CliError("io", "cannot create output directory " + out.string());
  const auto probe = out / ".write-test";
  std::ofstream os(probe);
  if (!os) throw CliError("io", "output directory " + out.string() + " is not writable");
  os.close();
  fs::remove(probe, ec);
}

std::ofstream open_out(const fs::path &path) {
  std::ofstream os(path);
  if (!os) throw CliError("io", "cannot write " + path.string());
  return os;
}

Corpus read_corpus(const fs::path &data) {
  if (data.empty()) throw CliError("usage", "--data is required");
  const auto dir = resolve_corpus_dir(data);
  try {
    return load_corpus(dir);
  } catch (const std::exception &e) {
    throw CliError("data", "cannot load corpus from " + dir.string() + ": " + e.what());
  }
}

Config manifest(const std::string &command, const CommandOptions &opts, double seconds, Config artifacts,
                Config results) {
  return {{"command", command},
          {"version", kVersion},
          {"seed", seed_of(opts.config)},
          {"config", opts.config},
          {"artifacts", std::move(artifacts)},
          {"wall_seconds", seconds},
          {"results", std::move(results)}};
}

Config finish(const fs::path &out, Config m) {
  auto os = open_out(out / "manifest.json");
  os << m.dump(2) << '\n';
  return m;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string hex(std::uint64_t v) {
  std::ostringstream ss;
  ss << std::hex << std::setw(16) << std::setfill('0') << v;
  return ss.str();
}

void write_metrics(const fs::path &path, const std::vector<EpochRecord> &epochs) {
  auto os = open_out(path);
  os << "epoch,train_loss,val_acc,lr\n" << std::setprecision(10);
  for (const auto &e : epochs) {
    os << e.epoch + 1 << ',' << e.train_loss << ',';
    if (!std::isnan(e.val_acc)) os << e.val_acc;
    os << ',' << e.lr << '\n';
  }
}

void log_epochs(std::ostream &log, const std::vector<EpochRecord> &epochs) {
  for (const auto &e : epochs) {
    log << "epoch " << e.epoch + 1 << " loss " << e.train_loss;
    if (!std::isnan(e.val_acc)) log << " val_acc " << e.val_acc;
    log << " lr " << e.lr << '\n';
  }
}

Config epoch_summary(const TrainResult &r) {
  Config j = {{"steps", r.steps.size()}, {"train_seconds", r.seconds}};
  if (!r.epochs.empty()) {
    j["final_train_loss"] = r.epochs.back().train_loss;
    if (!std::isnan(r.epochs.back().val_acc)) j["final_val_acc"] = r.epochs.back().val_acc;
  }
  return j;
}

/// Runs `fn` and rethrows anything but CliError with the given code.
template <typename Fn>
auto guarded(const std::string &code, Fn &&fn) {
  try {
    return fn();
  } catch (const CliError &) {
    throw;
  } catch (const std::exception &e) {
    throw CliError(code, e.what());
  }
}

template <typename Scalar>
double image_accuracy(EfficientNet<Scalar> &model, const ImageData<Scalar> &data, const std::vector<std::size_t> &ids) {
  return evaluate(predict_classes(predict_images(model, data, ids)), labels_of(data.labels, ids));
}

template <typename Scalar>
Config save_model(const fs::path &path, const NetworkGraph<Scalar> &net, Config meta) {
  Checkpoint<Scalar> ckpt;
  ckpt.meta = std::move(meta);
  net.export_to(ckpt);
  guarded("io", [&] {
    save_checkpoint(path, ckpt);
    return 0;
  });
  return path.filename().string();
}

template <typename Scalar>
Config run_pretrain(const CommandOptions &opts, std::ostream &log, const Corpus &corpus) {
  const auto &cfg = opts.config;
  const auto seed = seed_of(cfg);
  const auto mcfg = image_model_config(cfg, corpus.spec.num_classes);
  if (mcfg.in_channels != 1) throw CliError("config", "model.image.in_channels must be 1 for grayscale documents");
  const auto pcfg = parallel_config(cfg, "pretrain");
  auto stage = stage_settings(cfg, "pretrain");
  stage.train.lr = reference_lr(stage.base_lr, pcfg.batch_per_worker, pcfg.workers);
  const auto [train, val] = holdout_split(corpus.labels(), stage.val_fraction, seed);

  auto data = std::make_shared<const ImageData<Scalar>>(prepare_images<Scalar>(corpus, mcfg.input_size));
  ImageTask<Scalar> task(EfficientNet<Scalar>(mcfg, seed), data, stage.augment, detail::mix_seed(seed, 7));
  log << "pretrain: " << count_params(task.network()) << " parameters, input " << mcfg.input_size << ", "
      << train.size() << " train / " << val.size() << " val, k=" << pcfg.workers << " n=" << pcfg.batch_per_worker
      << " lr=" << stage.train.lr << '\n';
  TrainHooks<ImageTask<Scalar>> hooks;
  if (!val.empty()) hooks.evaluate = [&](ImageTask<Scalar> &t) { return image_accuracy(t.model(), *data, val); };
  const auto result = guarded("config", [&] { return train_parallel(task, train, pcfg, stage.train, hooks); });
  log_epochs(log, result.epochs);

  write_metrics(opts.out / "metrics.csv", result.epochs);
  const Config meta = {{"kind", "image"}, {"model", to_json(mcfg)}, {"seed", seed}, {"command", "pretrain"}};
  auto ckpt = save_model(opts.out / "model.ckpt", task.network(), meta);
  Config results = epoch_summary(result);
  results["reference_lr"] = stage.train.lr;
  results["parameters"] = count_params(task.network());
  results["input_size"] = mcfg.input_size;
  return Config{{"artifacts", Config::array({ckpt, "metrics.csv"})}, {"results", results}};
}

template <typename Scalar>
Config run_finetune(const CommandOptions &opts, std::ostream &log, const Corpus &corpus) {
  const auto &cfg = opts.config;
  const auto seed = seed_of(cfg);
  if (opts.checkpoint.empty()) throw CliError("usage", "--checkpoint is required");
  const auto source = guarded("checkpoint", [&] { return load_checkpoint<Scalar>(opts.checkpoint); });
  if (source.meta.value("kind", "") != "image")
    throw CliError("checkpoint", opts.checkpoint.string() + " is not an image model checkpoint");
  auto model = guarded("checkpoint", [&] {
    EfficientNet<Scalar> m(efficientnet_config_from_json(source.meta.at("model")), seed);
    m.network().import_from(source);
    return m;
  });
  if (model.config().in_channels != 1) throw CliError("checkpoint", "source model does not take grayscale input");
  const int source_classes = model.config().num_classes;
  model.reset_head(corpus.spec.num_classes, detail::mix_seed(seed, 11));
  freeze(model.network(), {"head"});

  std::map<std::string, std::uint64_t> before;
  for (const auto &g : model.network().groups())
    if (g != "head") before[g] = model.network().checksum(g);

  const auto pcfg = parallel_config(cfg, "finetune");
  auto stage = stage_settings(cfg, "finetune");
  stage.train.lr = reference_lr(stage.base_lr, pcfg.batch_per_worker, pcfg.workers);
  const auto [train, val] = holdout_split(corpus.labels(), stage.val_fraction, seed);
  const auto mcfg = model.config();
  auto data = std::make_shared<const ImageData<Scalar>>(prepare_images<Scalar>(corpus, mcfg.input_size));
  ImageTask<Scalar> task(std::move(model), data, stage.augment, detail::mix_seed(seed, 7));
  log << "finetune: head " << source_classes << " -> " << mcfg.num_classes << " classes, "
      << count_trainable_params(task.network()) << " trainable of " << count_params(task.network()) << ", lr="
      << stage.train.lr << '\n';
  TrainHooks<ImageTask<Scalar>> hooks;
  if (!val.empty()) hooks.evaluate = [&](ImageTask<Scalar> &t) { return image_accuracy(t.model(), *data, val); };
  const auto result = guarded("config", [&] { return train_parallel(task, train, pcfg, stage.train, hooks); });
  log_epochs(log, result.epochs);

  Config frozen = Config::object();
  for (const auto &[g, sum] : before) {
    const auto after = task.network().checksum(g);
    if (after != sum) throw CliError("internal", "frozen group '" + g + "' changed during fine-tuning");
    frozen[g] = hex(after);
  }
  write_metrics(opts.out / "metrics.csv", result.epochs);
  const Config meta = {{"kind", "image"},
                       {"model", to_json(mcfg)},
                       {"seed", seed},
                       {"command", "finetune"},
                       {"source", fs::absolute(opts.checkpoint).string()}};
  unfreeze_all(task.network());
  auto ckpt = save_model(opts.out / "model.ckpt", task.network(), meta);
  Config results = epoch_summary(result);
  results["reference_lr"] = stage.train.lr;
  results["frozen_checksums"] = frozen;
  results["head_checksum"] = hex(task.network().checksum("head"));
  return Config{{"artifacts", Config::array({ckpt, "metrics.csv"})}, {"results", results}};
}

template <typename Scalar>
Config run_train_text(const CommandOptions &opts, std::ostream &log, const Corpus &corpus) {
  const auto &cfg = opts.config;
  const auto seed = seed_of(cfg);
  const auto mcfg = text_model_config(cfg, corpus.spec.num_classes);
  if (corpus.spec.vocab_size > mcfg.vocab_size) {
    throw CliError("data", "corpus vocabulary of " + std::to_string(corpus.spec.vocab_size) +
                               " exceeds model.text.vocab_size " + std::to_string(mcfg.vocab_size));
  }
  const auto pcfg = parallel_config(cfg, "text");
  auto stage = stage_settings(cfg, "text");
  Config warnings = Config::array();
  if (stage.layerwise) {
    const auto lrs = layerwise_lrs(stage.decay, mcfg.num_layers);
    stage.train.group_lrs = lrs.by_group();
    stage.train.lr = stage.decay.eta_body;
    for (const auto &w : lrs.warnings) {
      log << "warning: " << w << '\n';
      warnings.push_back(w);
    }
  } else {
    stage.train.lr = reference_lr(stage.base_lr, pcfg.batch_per_worker, pcfg.workers);
  }
  const auto [train, val] = holdout_split(corpus.labels(), stage.val_fraction, seed);

  auto data = std::make_shared<const TextData>(prepare_text(corpus, mcfg.max_len));
  TextTask<Scalar> task(TextEncoder<Scalar>(mcfg, seed), data);
  log << "train-text: " << count_params(task.network()) << " parameters, " << train.size() << " train / "
      << val.size() << " val, k=" << pcfg.workers << " n=" << pcfg.batch_per_worker << '\n';
  TrainHooks<TextTask<Scalar>> hooks;
  if (!val.empty()) {
    hooks.evaluate = [&](TextTask<Scalar> &t) {
      return evaluate(predict_classes(predict_texts(t.model(), *data, val)), labels_of(data->labels, val));
    };
  }
  const auto result = guarded("config", [&] { return train_parallel(task, train, pcfg, stage.train, hooks); });
  log_epochs(log, result.epochs);

  write_metrics(opts.out / "metrics.csv", result.epochs);
  const Config meta = {{"kind", "text"}, {"model", to_json(mcfg)}, {"seed", seed}, {"command", "train-text"}};
  auto ckpt = save_model(opts.out / "model.ckpt", task.network(), meta);
  Config results = epoch_summary(result);
  results["group_lrs"] = stage.train.group_lrs;
  results["warnings"] = warnings;
  return Config{{"artifacts", Config::array({ckpt, "metrics.csv"})}, {"results", results}};
}

template <typename Scalar>
Config run_bench(const CommandOptions &opts, std::ostream &log, const Corpus &corpus) {
  const auto &cfg = opts.config;
  const auto seed = seed_of(cfg);
  auto k_list = opts.k_list;
  if (k_list.empty()) k_list = guarded("config", [&] { return at_path(cfg, "bench.k_list").get<std::vector<int>>(); });
  const long steps = guarded("config", [&] { return at_path(cfg, "bench.steps").get<long>(); });
  const long warmup = guarded("config", [&] { return at_path(cfg, "bench.warmup").get<long>(); });
  if (steps < 1 || warmup < 0) throw CliError("config", "bench.steps must be >= 1 and bench.warmup >= 0");
  const auto mode =
      guarded("config", [&] { return parse_scaling_mode(at_path(cfg, "bench.mode").get<std::string>()); });

  const auto mcfg = image_model_config(cfg, corpus.spec.num_classes);
  const auto pcfg = parallel_config(cfg, "pretrain");
  auto stage = stage_settings(cfg, "pretrain");
  stage.train.lr = reference_lr(stage.base_lr, pcfg.batch_per_worker, 1);
  auto data = std::make_shared<const ImageData<Scalar>>(prepare_images<Scalar>(corpus, mcfg.input_size));
  const ImageTask<Scalar> task(EfficientNet<Scalar>(mcfg, seed), data, stage.augment, detail::mix_seed(seed, 7));
  std::vector<std::size_t> ids(corpus.size());
  std::iota(ids.begin(), ids.end(), std::size_t{0});

  const auto report =
      guarded("config", [&] { return measure_speedup(task, ids, k_list, pcfg, stage.train, steps, warmup, mode); });
  for (const auto &w : report.warnings) log << "warning: " << w << '\n';
  {
    auto os = open_out(opts.out / "scaling.csv");
    report.write_csv(os);
  }
  report.write_csv(log);
  const unsigned threads = std::thread::hardware_concurrency();
  log << "hardware threads: " << threads << '\n';
  log << "reference point: 4 GPU workers, 75.4% time reduction, S(4) ~ 4.07\n";

  Config rows = Config::array();
  for (const auto &r : report.rows) {
    rows.push_back({{"k", r.k},
                    {"wall_seconds", r.wall_seconds},
                    {"samples_per_sec", r.samples_per_sec},
                    {"speedup", r.speedup},
                    {"efficiency", r.efficiency}});
  }
  Config results = {{"rows", rows},
                    {"warnings", report.warnings},
                    {"hardware_threads", threads},
                    {"steps", steps},
                    {"warmup", warmup},
                    {"mode", to_string(mode)},
                    {"reference", {{"workers", 4}, {"time_reduction", 0.754}, {"speedup", 1.0 / (1.0 - 0.754)}}}};
  return Config{{"artifacts", Config::array({"scaling.csv"})}, {"results", results}};
}

template <typename Fn>
Config dispatch_precision(const std::string &precision, Fn &&fn) {
  return precision == "double" ? fn(double{}) : fn(float{});
}

} // namespace

fs::path resolve_corpus_dir(const fs::path &dir) {
  if (fs::exists(dir / "corpus" / "manifest.json")) return dir / "corpus";
  return dir;
}

std::pair<std::vector<std::size_t>, std::vector<std::size_t>>
holdout_split(const std::vector<int> &labels, double val_fraction, std::uint64_t seed) {
  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(i);
  std::mt19937_64 rng(detail::mix_seed(seed, 0x5eed));
  std::vector<std::size_t> train, val;
  for (auto &[cls, ids] : by_class) {
    for (std::size_t i = ids.size(); i > 1; --i) std::swap(ids[i - 1], ids[static_cast<std::size_t>(rng() % i)]);
    const auto n_val = static_cast<std::size_t>(std::lround(val_fraction * static_cast<double>(ids.size())));
    val.insert(val.end(), ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(n_val));
    train.insert(train.end(), ids.begin() + static_cast<std::ptrdiff_t>(n_val), ids.end());
  }
  std::sort(train.begin(), train.end());
  std::sort(val.begin(), val.end());
  return {train, val};
}

Config gen_data(const CommandOptions &opts, std::ostream &log) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto spec = corpus_spec(opts.config);
  ensure_out(opts.out);
  const auto corpus = generate_corpus(spec, seed_of(opts.config));
  const auto corpus_manifest = guarded("io", [&] { return save_corpus(corpus, opts.out / "corpus"); });
  log << "gen-data: " << corpus.size() << " documents in " << spec.num_classes << " classes -> "
      << (opts.out / "corpus").string() << '\n';
  Config results = {{"documents", corpus.size()}, {"num_classes", spec.num_classes}, {"spec", to_json(spec)}};
  return finish(opts.out,
                manifest("gen-data", opts, seconds_since(t0), Config::array({"corpus/manifest.json"}), results));
}

namespace {

template <typename Runner>
Config training_command(const std::string &name, const std::string &stage, const CommandOptions &opts,
                        Runner &&runner) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto settings = stage_settings(opts.config, stage);
  const auto corpus = read_corpus(opts.data);
  ensure_out(opts.out);
  Config produced = dispatch_precision(settings.precision, [&](auto tag) { return runner(tag, corpus); });
  produced["results"]["documents"] = corpus.size();
  produced["results"]["data"] = fs::absolute(resolve_corpus_dir(opts.data)).string();
  return finish(opts.out, manifest(name, opts, seconds_since(t0), produced["artifacts"], produced["results"]));
}

} // namespace

Config pretrain(const CommandOptions &opts, std::ostream &log) {
  return training_command("pretrain", "pretrain", opts, [&](auto tag, const Corpus &c) {
    return run_pretrain<decltype(tag)>(opts, log, c);
  });
}

Config finetune(const CommandOptions &opts, std::ostream &log) {
  return training_command("finetune", "finetune", opts, [&](auto tag, const Corpus &c) {
    return run_finetune<decltype(tag)>(opts, log, c);
  });
}

Config train_text(const CommandOptions &opts, std::ostream &log) {
  return training_command("train-text", "text", opts, [&](auto tag, const Corpus &c) {
    return run_train_text<decltype(tag)>(opts, log, c);
  });
}

Config bench_scaling(const CommandOptions &opts, std::ostream &log) {
  return training_command("bench-scaling", "pretrain", opts, [&](auto tag, const Corpus &c) {
    return run_bench<decltype(tag)>(opts, log, c);
  });
}

Config ensemble_eval(const CommandOptions &opts, std::ostream &log) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto &cfg = opts.config;
  if (opts.image_checkpoint.empty() || opts.text_checkpoint.empty())
    throw CliError("usage", "--image-checkpoint and --text-checkpoint are required");
  const auto weights = fusion_weights(cfg);
  const double grid_step = guarded("config", [&] { return at_path(cfg, "ensemble.grid_step").get<double>(); });
  const auto reducer =
      guarded("config", [&] { return parse_reducer(at_path(cfg, "ensemble.reducer").get<std::string>()); });
  const auto corpus = read_corpus(opts.data);
  ensure_out(opts.out);
  const auto seed = seed_of(cfg);

  const auto image_ckpt = guarded("checkpoint", [&] { return load_checkpoint<float>(opts.image_checkpoint); });
  const auto text_ckpt = guarded("checkpoint", [&] { return load_checkpoint<float>(opts.text_checkpoint); });
  if (image_ckpt.meta.value("kind", "") != "image")
    throw CliError("checkpoint", opts.image_checkpoint.string() + " is not an image model checkpoint");
  if (text_ckpt.meta.value("kind", "") != "text")
    throw CliError("checkpoint", opts.text_checkpoint.string() + " is not a text model checkpoint");
  auto image_model = guarded("checkpoint", [&] {
    EfficientNet<float> m(efficientnet_config_from_json(image_ckpt.meta.at("model")), seed);
    m.network().import_from(image_ckpt);
    return m;
  });
  auto text_model = guarded("checkpoint", [&] {
    TextEncoder<float> m(text_encoder_config_from_json(text_ckpt.meta.at("model")), seed);
    m.network().import_from(text_ckpt);
    return m;
  });
  const int classes = image_model.config().num_classes;
  if (text_model.config().num_classes != classes) {
    throw CliError("checkpoint", "class-count mismatch: image model has " + std::to_string(classes) +
                                     ", text model has " + std::to_string(text_model.config().num_classes));
  }
  if (corpus.spec.num_classes != classes) {
    throw CliError("data", "corpus has " + std::to_string(corpus.spec.num_classes) + " classes, models have " +
                               std::to_string(classes));
  }
  if (corpus.spec.vocab_size > text_model.config().vocab_size)
    throw CliError("data", "corpus vocabulary exceeds the text model's vocab_size");

  auto protocol = split_protocol(cfg);
  const auto plans = guarded("data", [&] { return make_splits(corpus.labels(), classes, protocol); });

  std::vector<std::size_t> all(corpus.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  const auto image_data = prepare_images<float>(corpus, image_model.config().input_size);
  const auto text_data = prepare_text(corpus, text_model.config().max_len);
  const PredictionMatrix p_image = predict_images(image_model, image_data, all);
  const PredictionMatrix p_text = predict_texts(text_model, text_data, all);
  const auto labels = corpus.labels();

  const auto rows = [](const PredictionMatrix &p, const std::vector<std::size_t> &ids) {
    PredictionMatrix out(static_cast<Eigen::Index>(ids.size()), p.cols());
    for (std::size_t i = 0; i < ids.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = p.row(static_cast<Eigen::Index>(ids[i]));
    return out;
  };

  std::vector<SplitResult> results;
  Config split_json = Config::array();
  for (const auto &plan : plans) {
    FusionWeights w = weights;
    const auto val_labels = labels_of(labels, plan.val);
    if (grid_step > 0.0)
      w = guarded("config", [&] { return grid_search_weights(rows(p_text, plan.val), rows(p_image, plan.val), val_labels, grid_step); });
    const auto test_labels = labels_of(labels, plan.test);
    const auto ti = rows(p_image, plan.test), tt = rows(p_text, plan.test);
    SplitResult r;
    r.split_id = plan.split_id;
    r.image_acc = evaluate(predict_classes(ti), test_labels);
    r.text_acc = evaluate(predict_classes(tt), test_labels);
    r.ensemble_acc = evaluate(predict_classes(fuse(tt, ti, w)), test_labels);
    r.weights = w;
    log << "split " << r.split_id << ": image " << r.image_acc << " text " << r.text_acc << " ensemble "
        << r.ensemble_acc << " (w1=" << w.w1 << ", w2=" << w.w2 << ")\n";
    results.push_back(r);
    split_json.push_back(to_json(plan));
  }
  {
    auto os = open_out(opts.out / "report.csv");
    os << std::setprecision(10);
    write_report_csv(os, results, reducer);
  }
  {
    auto os = open_out(opts.out / "splits.json");
    os << split_json.dump() << '\n';
  }

  Config summary = Config::object();
  for (const auto r : {Reducer::median, Reducer::mean}) {
    std::vector<double> image, text, ens;
    for (const auto &s : results) {
      image.push_back(s.image_acc);
      text.push_back(s.text_acc);
      ens.push_back(s.ensemble_acc);
    }
    summary[to_string(r)] = {{"image_acc", reduce(r, image)}, {"text_acc", reduce(r, text)}, {"ensemble_acc", reduce(r, ens)}};
  }
  log << "summary (" << to_string(reducer) << "): image " << summary[to_string(reducer)]["image_acc"] << " text "
      << summary[to_string(reducer)]["text_acc"] << " ensemble " << summary[to_string(reducer)]["ensemble_acc"]
      << '\n';
  Config res = {{"splits", plans.size()},
                {"report_reducer", to_string(reducer)},
                {"summary", summary},
                {"grid_search", grid_step > 0.0},
                {"image_checkpoint", fs::absolute(opts.image_checkpoint).string()},
                {"text_checkpoint", fs::absolute(opts.text_checkpoint).string()},
                {"data", fs::absolute(resolve_corpus_dir(opts.data)).string()}};
  return finish(opts.out, manifest("ensemble-eval", opts, seconds_since(t0),
                                   Config::array({"report.csv", "splits.json"}), res));
}

} // namespace docclf::cli
