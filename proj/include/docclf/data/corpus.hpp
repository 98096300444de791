#ifndef DOCCLF_DATA_CORPUS_HPP
#define DOCCLF_DATA_CORPUS_HPP

#include "docclf/tensor.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace docclf {

/// Synthetic dual-modality corpus description.
struct CorpusSpec {
  int num_classes = 4;
  /// One count per class.
  std::vector<int> docs_per_class{25, 25, 25, 25};
  int image_size = 32;
  int vocab_size = 128;
  /// Mean content length in tokens; each document varies by up to 25%.
  int text_len = 24;
  double image_noise = 0.05;
  double text_noise = 0.05;
  /// Probability that the text signal follows the label; otherwise the
  /// text class is drawn uniformly over all classes.
  double agreement = 1.0;
  /// Fraction of documents whose image carries no class signal (blank page).
  double image_drop = 0.0;
  /// Fraction whose text carries no class signal (generic words only). The
  /// two dropped sets never overlap, so one modality always carries signal.
  double text_drop = 0.0;
  /// Seeds the class layout templates and keyword sets. Corpora that share
  /// it share classes even when their documents differ.
  std::uint64_t template_seed = 1;

  void validate() const;
  int total_docs() const;
  /// Number of class-specific keywords per class.
  int keywords_per_class() const;

  static CorpusSpec uniform(int num_classes, int per_class);
};

/// Per-class counts of a 3482-document, 10-class skewed collection.
std::vector<int> tobacco_like_distribution();

struct Document {
  /// [1, image_size, image_size] grayscale in [0, 1], white background.
  Tensor<float> image;
  /// Content token ids, no special tokens.
  std::vector<std::int32_t> tokens;
  int label = 0;
  /// Class whose vocabulary generated the text; -1 when the text is generic.
  int text_class = 0;
  bool image_informative = true;
};

struct Corpus {
  CorpusSpec spec;
  std::uint64_t seed = 0;
  std::vector<Document> docs;

  std::vector<int> labels() const;
  std::size_t size() const { return docs.size(); }
};

/// Pure function of (spec, seed).
Corpus generate_corpus(const CorpusSpec &spec, std::uint64_t seed);

/// Class layout templates: a grid of on/off cells per class, distinct for
/// every pair of classes.
std::vector<std::vector<std::uint8_t>> layout_templates(const CorpusSpec &spec);
constexpr int kLayoutGrid = 4;

/// Noise-free rendering of a class template.
Tensor<float> render_template(const CorpusSpec &spec, int cls);

/// Writes manifest.json, images/NNNNNN.bin and tokens/NNNNNN.txt.
nlohmann::json save_corpus(const Corpus &corpus, const std::filesystem::path &dir);
Corpus load_corpus(const std::filesystem::path &dir);

nlohmann::json to_json(const CorpusSpec &spec);
CorpusSpec corpus_spec_from_json(const nlohmann::json &j);

} // namespace docclf

#endif // DOCCLF_DATA_CORPUS_HPP
