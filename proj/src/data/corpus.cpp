#include "docclf/data/corpus.hpp"

#include "docclf/data/tokenize.hpp"
#include "docclf/serialize.hpp"

#include <algorithm>
#include <bit>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>

namespace docclf {

namespace {

constexpr float kBackground = 1.0f;
constexpr float kInk = 0.2f;

std::string doc_stem(std::size_t i) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%06zu", i);
  return buf;
}

struct Keywords {
  std::vector<std::vector<std::int32_t>> per_class;
  std::vector<std::int32_t> generic;
};

Keywords keyword_sets(const CorpusSpec &spec) {
  std::vector<std::int32_t> ids(static_cast<std::size_t>(spec.vocab_size - kFirstContentToken));
  std::iota(ids.begin(), ids.end(), kFirstContentToken);
  std::mt19937_64 rng(spec.template_seed ^ 0x6b657977ULL);
  for (std::size_t i = ids.size(); i > 1; --i) std::swap(ids[i - 1], ids[static_cast<std::size_t>(rng() % i)]);
  const auto k = static_cast<std::size_t>(spec.keywords_per_class());
  Keywords kw;
  for (int c = 0; c < spec.num_classes; ++c) {
    const auto first = ids.begin() + static_cast<std::ptrdiff_t>(static_cast<std::size_t>(c) * k);
    kw.per_class.emplace_back(first, first + static_cast<std::ptrdiff_t>(k));
  }
  kw.generic.assign(ids.begin() + static_cast<std::ptrdiff_t>(static_cast<std::size_t>(spec.num_classes) * k),
                    ids.end());
  return kw;
}

constexpr int kTextures = 6;

/// Fill style of a class's ink blocks: solid, rules, columns, checker,
/// wide rules, diagonal hatching.
bool inked(int texture, int x, int y) {
  switch (texture) {
  case 1: return y % 2 == 0;
  case 2: return x % 2 == 0;
  case 3: return (x + y) % 2 == 0;
  case 4: return y % 3 == 0;
  case 5: return (x + y) % 3 == 0;
  default: return true;
  }
}

/// Draws ink blocks for the cells of `pattern`, offset by (dx, dy).
void paint(Tensor<float> &img, int size, const std::vector<std::uint8_t> &pattern, int texture, int dx, int dy) {
  for (int gy = 0; gy < kLayoutGrid; ++gy)
    for (int gx = 0; gx < kLayoutGrid; ++gx) {
      if (!pattern[static_cast<std::size_t>(gy * kLayoutGrid + gx)]) continue;
      const int x0 = gx * size / kLayoutGrid, x1 = (gx + 1) * size / kLayoutGrid;
      const int y0 = gy * size / kLayoutGrid, y1 = (gy + 1) * size / kLayoutGrid;
      const int margin = std::max(1, (x1 - x0) / 8);
      for (int y = y0 + margin; y < y1 - margin; ++y)
        for (int x = x0 + margin; x < x1 - margin; ++x) {
          const int yy = y + dy, xx = x + dx;
          if (yy >= 0 && yy < size && xx >= 0 && xx < size && inked(texture, x, y)) img.at(0, yy, xx) = kInk;
        }
    }
}

} // namespace

void CorpusSpec::validate() const {
  if (num_classes < 2 || num_classes > 64) throw std::invalid_argument("corpus: num_classes must lie in [2, 64]");
  if (static_cast<int>(docs_per_class.size()) != num_classes)
    throw std::invalid_argument("corpus: docs_per_class needs one entry per class");
  for (std::size_t c = 0; c < docs_per_class.size(); ++c) {
    if (docs_per_class[c] < 1)
      throw std::invalid_argument("corpus: docs_per_class for class " + std::to_string(c) + " must be >= 1");
  }
  if (image_size < 2 * kLayoutGrid) throw std::invalid_argument("corpus: image_size must be >= 8");
  if (vocab_size < kFirstContentToken + 2 * (num_classes + 1))
    throw std::invalid_argument("corpus: vocab_size too small for the class keyword sets");
  if (text_len < 1) throw std::invalid_argument("corpus: text_len must be >= 1");
  const auto unit = [](double v) { return v >= 0.0 && v <= 1.0; };
  if (!unit(image_noise) || !unit(text_noise) || !unit(agreement) || !unit(image_drop) || !unit(text_drop))
    throw std::invalid_argument("corpus: noise, agreement and drop fractions must lie in [0, 1]");
  if (image_drop + text_drop > 1.0) throw std::invalid_argument("corpus: image_drop + text_drop must be <= 1");
}

int CorpusSpec::total_docs() const { return std::accumulate(docs_per_class.begin(), docs_per_class.end(), 0); }

int CorpusSpec::keywords_per_class() const { return (vocab_size - kFirstContentToken) / (num_classes + 1); }

CorpusSpec CorpusSpec::uniform(int num_classes, int per_class) {
  CorpusSpec spec;
  spec.num_classes = num_classes;
  spec.docs_per_class.assign(static_cast<std::size_t>(std::max(num_classes, 0)), per_class);
  return spec;
}

std::vector<int> tobacco_like_distribution() { return {230, 599, 431, 567, 620, 188, 201, 265, 120, 261}; }

std::vector<int> Corpus::labels() const {
  std::vector<int> out;
  out.reserve(docs.size());
  for (const auto &d : docs) out.push_back(d.label);
  return out;
}

std::vector<std::vector<std::uint8_t>> layout_templates(const CorpusSpec &spec) {
  constexpr int cells = kLayoutGrid * kLayoutGrid;
  std::mt19937_64 rng(spec.template_seed);
  std::vector<std::uint32_t> codes;
  while (static_cast<int>(codes.size()) < spec.num_classes) {
    const auto code = static_cast<std::uint32_t>(rng() & ((1u << cells) - 1));
    const int on = std::popcount(code);
    if (on < 4 || on > cells - 4) continue;
    bool distinct = true;
    for (auto other : codes) distinct = distinct && std::popcount(code ^ other) >= 3;
    if (distinct) codes.push_back(code);
  }
  std::vector<std::vector<std::uint8_t>> out;
  for (auto code : codes) {
    std::vector<std::uint8_t> pattern(cells);
    for (int i = 0; i < cells; ++i) pattern[static_cast<std::size_t>(i)] = (code >> i) & 1u;
    out.push_back(std::move(pattern));
  }
  return out;
}

Tensor<float> render_template(const CorpusSpec &spec, int cls) {
  const auto templates = layout_templates(spec);
  auto img = Tensor<float>::constant({1, spec.image_size, spec.image_size}, kBackground);
  paint(img, spec.image_size, templates.at(static_cast<std::size_t>(cls)), cls % kTextures, 0, 0);
  return img;
}

Corpus generate_corpus(const CorpusSpec &spec, std::uint64_t seed) {
  spec.validate();
  const auto templates = layout_templates(spec);
  const auto keywords = keyword_sets(spec);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> pixel_noise(0.0, 1.0);
  std::uniform_int_distribution<int> jitter(-1, 1);
  std::uniform_int_distribution<int> any_class(0, spec.num_classes - 1);
  std::uniform_int_distribution<std::int32_t> any_content(kFirstContentToken, spec.vocab_size - 1);
  const int spread = spec.text_len / 4;
  std::uniform_int_distribution<int> length_delta(-spread, spread);

  std::vector<int> labels;
  for (int c = 0; c < spec.num_classes; ++c) labels.insert(labels.end(), spec.docs_per_class[static_cast<std::size_t>(c)], c);
  for (std::size_t i = labels.size(); i > 1; --i) std::swap(labels[i - 1], labels[static_cast<std::size_t>(rng() % i)]);

  Corpus corpus;
  corpus.spec = spec;
  corpus.seed = seed;
  corpus.docs.reserve(labels.size());
  for (int label : labels) {
    Document doc;
    doc.label = label;
    const double u = unit(rng);
    doc.image_informative = u >= spec.image_drop;
    const bool text_informative = u < 1.0 - spec.text_drop;

    doc.image = Tensor<float>::constant({1, spec.image_size, spec.image_size}, kBackground);
    const int dx = spec.image_noise > 0 ? jitter(rng) : 0;
    const int dy = spec.image_noise > 0 ? jitter(rng) : 0;
    if (doc.image_informative) paint(doc.image, spec.image_size, templates[static_cast<std::size_t>(label)], label % kTextures, dx, dy);
    if (spec.image_noise > 0) {
      for (Index i = 0; i < doc.image.size(); ++i)
        doc.image[i] = std::clamp(static_cast<float>(doc.image[i] + spec.image_noise * pixel_noise(rng)), 0.0f, 1.0f);
    }

    doc.text_class = unit(rng) < spec.agreement ? label : any_class(rng);
    if (!text_informative) doc.text_class = -1;
    const int len = std::max(1, spec.text_len + length_delta(rng));
    doc.tokens.reserve(static_cast<std::size_t>(len));
    for (int t = 0; t < len; ++t) {
      if (doc.text_class < 0) {
        const auto &pool = keywords.generic;
        doc.tokens.push_back(pool[static_cast<std::size_t>(rng() % pool.size())]);
      } else if (unit(rng) >= spec.text_noise) {
        const auto &pool = keywords.per_class[static_cast<std::size_t>(doc.text_class)];
        doc.tokens.push_back(pool[static_cast<std::size_t>(rng() % pool.size())]);
      } else {
        doc.tokens.push_back(any_content(rng));
      }
    }
    corpus.docs.push_back(std::move(doc));
  }
  return corpus;
}

nlohmann::json to_json(const CorpusSpec &spec) {
  return {{"num_classes", spec.num_classes}, {"docs_per_class", spec.docs_per_class},
          {"image_size", spec.image_size},   {"vocab_size", spec.vocab_size},
          {"text_len", spec.text_len},       {"image_noise", spec.image_noise},
          {"text_noise", spec.text_noise},   {"agreement", spec.agreement},
          {"image_drop", spec.image_drop},   {"text_drop", spec.text_drop},
          {"template_seed", spec.template_seed}};
}

CorpusSpec corpus_spec_from_json(const nlohmann::json &j) {
  CorpusSpec spec;
  spec.num_classes = j.at("num_classes").get<int>();
  // A single count means a uniform corpus; "tobacco_like" the skewed table.
  const auto &per = j.at("docs_per_class");
  if (per.is_number_integer())
    spec.docs_per_class.assign(static_cast<std::size_t>(std::max(spec.num_classes, 0)), per.get<int>());
  else if (per.is_string() && per.get<std::string>() == "tobacco_like")
    spec.docs_per_class = tobacco_like_distribution();
  else
    spec.docs_per_class = per.get<std::vector<int>>();
  spec.image_size = j.at("image_size").get<int>();
  spec.vocab_size = j.at("vocab_size").get<int>();
  spec.text_len = j.at("text_len").get<int>();
  spec.image_noise = j.value("image_noise", 0.0);
  spec.text_noise = j.value("text_noise", 0.0);
  spec.agreement = j.value("agreement", 1.0);
  spec.image_drop = j.value("image_drop", 0.0);
  spec.text_drop = j.value("text_drop", 0.0);
  spec.template_seed = j.value("template_seed", std::uint64_t{1});
  spec.validate();
  return spec;
}

nlohmann::json save_corpus(const Corpus &corpus, const std::filesystem::path &dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir / "images");
  fs::create_directories(dir / "tokens");
  nlohmann::json docs = nlohmann::json::array();
  for (std::size_t i = 0; i < corpus.docs.size(); ++i) {
    const auto &d = corpus.docs[i];
    const std::string image = "images/" + doc_stem(i) + ".bin";
    const std::string tokens = "tokens/" + doc_stem(i) + ".txt";
    save_tensor(dir / image, d.image);
    std::ofstream os(dir / tokens);
    if (!os) throw std::runtime_error("cannot write " + (dir / tokens).string());
    for (std::size_t t = 0; t < d.tokens.size(); ++t) os << (t ? " " : "") << d.tokens[t];
    os << '\n';
    docs.push_back({{"index", i},
                    {"label", d.label},
                    {"text_class", d.text_class},
                    {"image_informative", d.image_informative},
                    {"image", image},
                    {"tokens", tokens}});
  }
  nlohmann::json manifest = {{"format", "docclf-corpus"},
                             {"version", 1},
                             {"spec", to_json(corpus.spec)},
                             {"seed", corpus.seed},
                             {"num_documents", corpus.docs.size()},
                             {"documents", docs}};
  std::ofstream os(dir / "manifest.json");
  if (!os) throw std::runtime_error("cannot write " + (dir / "manifest.json").string());
  os << manifest.dump(1) << '\n';
  return manifest;
}

Corpus load_corpus(const std::filesystem::path &dir) {
  std::ifstream is(dir / "manifest.json");
  if (!is) throw std::runtime_error("no corpus manifest at " + (dir / "manifest.json").string());
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(is);
  } catch (const nlohmann::json::exception &e) {
    throw FormatError("corpus manifest: " + std::string(e.what()));
  }
  if (manifest.value("format", "") != "docclf-corpus") throw FormatError(dir.string() + " is not a corpus directory");
  Corpus corpus;
  corpus.spec = corpus_spec_from_json(manifest.at("spec"));
  corpus.seed = manifest.at("seed").get<std::uint64_t>();
  for (const auto &entry : manifest.at("documents")) {
    Document d;
    d.label = entry.at("label").get<int>();
    d.text_class = entry.at("text_class").get<int>();
    d.image_informative = entry.value("image_informative", true);
    d.image = load_tensor<float>(dir / entry.at("image").get<std::string>());
    std::ifstream ts(dir / entry.at("tokens").get<std::string>());
    if (!ts) throw std::runtime_error("missing token file for document " + entry.at("index").dump());
    for (std::int32_t id; ts >> id;) {
      if (id < kFirstContentToken || id >= corpus.spec.vocab_size)
        throw FormatError("token id " + std::to_string(id) + " outside the corpus vocabulary");
      d.tokens.push_back(id);
    }
    if (d.label < 0 || d.label >= corpus.spec.num_classes) throw FormatError("document label out of range");
    corpus.docs.push_back(std::move(d));
  }
  return corpus;
}

} // namespace docclf
