#include "docclf/data/corpus.hpp"
#include "docclf/data/image.hpp"
#include "docclf/data/splits.hpp"
#include "docclf/data/tokenize.hpp"
#include "docclf/train/tasks.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <set>

using namespace docclf;

namespace {

std::vector<int> labels_from_counts(const std::vector<int> &counts) {
  std::vector<int> labels;
  for (std::size_t c = 0; c < counts.size(); ++c) labels.insert(labels.end(), counts[c], static_cast<int>(c));
  std::mt19937_64 rng(3);
  std::shuffle(labels.begin(), labels.end(), rng);
  return labels;
}

void expect_valid_plans(const std::vector<SplitPlan> &plans, const std::vector<int> &labels, int classes,
                        const SplitProtocol &p) {
  ASSERT_EQ(static_cast<int>(plans.size()), p.n_splits);
  std::set<std::uint64_t> seeds;
  for (const auto &plan : plans) {
    seeds.insert(plan.seed);
    EXPECT_EQ(static_cast<int>(plan.train.size()), p.train_size);
    EXPECT_EQ(static_cast<int>(plan.val.size()), p.val_size);
    EXPECT_EQ(plan.test.size(), labels.size() - plan.train.size() - plan.val.size());
    std::set<std::size_t> all;
    std::vector<int> per_class(static_cast<std::size_t>(classes), 0);
    for (const auto *part : {&plan.train, &plan.val, &plan.test})
      for (auto id : *part) EXPECT_TRUE(all.insert(id).second) << "index " << id << " in two parts";
    EXPECT_EQ(all.size(), labels.size());
    for (const auto *part : {&plan.train, &plan.val})
      for (auto id : *part) ++per_class[static_cast<std::size_t>(labels[id])];
    for (int c = 0; c < classes; ++c) EXPECT_EQ(per_class[static_cast<std::size_t>(c)], p.per_class_quota);
  }
  EXPECT_EQ(static_cast<int>(seeds.size()), p.n_splits);
}

} // namespace

TEST(Corpus, BalancedLabels) {
  const auto c = generate_corpus(CorpusSpec::uniform(4, 25), 1);
  ASSERT_EQ(c.size(), 100u);
  std::vector<int> count(4, 0);
  for (const auto &d : c.docs) {
    ++count[static_cast<std::size_t>(d.label)];
    EXPECT_EQ(d.image.shape(), (Shape{1, 32, 32}));
    EXPECT_TRUE((d.image.array() >= 0.0f).all() && (d.image.array() <= 1.0f).all());
    for (auto t : d.tokens) {
      EXPECT_GE(t, kFirstContentToken);
      EXPECT_LT(t, 128);
    }
  }
  EXPECT_EQ(count, (std::vector<int>{25, 25, 25, 25}));
}

TEST(Corpus, PureFunctionOfSpecAndSeed) {
  const auto spec = CorpusSpec::uniform(3, 10);
  const auto a = generate_corpus(spec, 5), b = generate_corpus(spec, 5), c = generate_corpus(spec, 6);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a.docs[i].image, b.docs[i].image);
    EXPECT_EQ(a.docs[i].tokens, b.docs[i].tokens);
    EXPECT_EQ(a.docs[i].label, b.docs[i].label);
  }
  bool differs = false;
  for (std::size_t i = 0; i < a.size(); ++i) differs = differs || !(a.docs[i].image == c.docs[i].image);
  EXPECT_TRUE(differs);
}

TEST(Corpus, TemplatesDistinct) {
  const auto spec = CorpusSpec::uniform(16, 1);
  const auto t = layout_templates(spec);
  for (std::size_t i = 0; i < t.size(); ++i)
    for (std::size_t j = i + 1; j < t.size(); ++j) EXPECT_NE(t[i], t[j]);
}

TEST(Corpus, NoiselessImagesAreNearestTemplateSeparable) {
  auto spec = CorpusSpec::uniform(6, 20);
  spec.image_noise = 0.0;
  spec.text_noise = 0.0;
  const auto corpus = generate_corpus(spec, 2);
  std::vector<Tensor<float>> templates;
  for (int c = 0; c < 6; ++c) templates.push_back(render_template(spec, c));
  int correct = 0;
  for (const auto &d : corpus.docs) {
    int best = 0;
    double best_dist = 1e300;
    for (int c = 0; c < 6; ++c) {
      const double dist = (d.image.array() - templates[static_cast<std::size_t>(c)].array()).square().sum();
      if (dist < best_dist) best_dist = dist, best = c;
    }
    correct += best == d.label;
  }
  EXPECT_EQ(correct, 120);
}

TEST(Corpus, AgreementMonteCarlo) {
  auto spec = CorpusSpec::uniform(4, 2500);
  spec.image_size = 8;
  spec.text_len = 4;
  spec.agreement = 0.5;
  const auto corpus = generate_corpus(spec, 9);
  int match = 0;
  for (const auto &d : corpus.docs) match += d.text_class == d.label;
  EXPECT_NEAR(match / 10000.0, 0.5 + 0.5 / 4, 0.02);
}

TEST(Corpus, FullAgreementAlwaysMatches) {
  const auto corpus = generate_corpus(CorpusSpec::uniform(5, 40), 4);
  for (const auto &d : corpus.docs) EXPECT_EQ(d.text_class, d.label);
}

TEST(Corpus, ComplementaryDropsAreDisjoint) {
  auto spec = CorpusSpec::uniform(4, 100);
  spec.image_drop = 0.3;
  spec.text_drop = 0.3;
  const auto corpus = generate_corpus(spec, 11);
  int no_image = 0, no_text = 0;
  for (const auto &d : corpus.docs) {
    EXPECT_FALSE(!d.image_informative && d.text_class < 0);
    no_image += !d.image_informative;
    no_text += d.text_class < 0;
  }
  EXPECT_NEAR(no_image / 400.0, 0.3, 0.07);
  EXPECT_NEAR(no_text / 400.0, 0.3, 0.07);
}

TEST(Corpus, SkewedDistribution) {
  const auto counts = tobacco_like_distribution();
  EXPECT_EQ(counts.size(), 10u);
  EXPECT_EQ(std::accumulate(counts.begin(), counts.end(), 0), 3482);
  EXPECT_NE(*std::min_element(counts.begin(), counts.end()), *std::max_element(counts.begin(), counts.end()));
}

TEST(Corpus, RejectsBadSpecs) {
  auto spec = CorpusSpec::uniform(4, 10);
  spec.agreement = 1.5;
  EXPECT_THROW(generate_corpus(spec, 1), std::invalid_argument);
  spec = CorpusSpec::uniform(4, 10);
  spec.docs_per_class[2] = 0;
  EXPECT_THROW(generate_corpus(spec, 1), std::invalid_argument);
}

TEST(Corpus, SaveLoadRoundTrip) {
  const auto dir = std::filesystem::temp_directory_path() / "docclf_test_corpus";
  std::filesystem::remove_all(dir);
  const auto corpus = generate_corpus(CorpusSpec::uniform(3, 4), 8);
  save_corpus(corpus, dir);
  const auto back = load_corpus(dir);
  ASSERT_EQ(back.size(), corpus.size());
  EXPECT_EQ(back.seed, corpus.seed);
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    EXPECT_EQ(back.docs[i].image, corpus.docs[i].image);
    EXPECT_EQ(back.docs[i].tokens, corpus.docs[i].tokens);
    EXPECT_EQ(back.docs[i].label, corpus.docs[i].label);
  }
  std::filesystem::remove_all(dir);
}

TEST(Resize, SameSizeIsIdentity) {
  std::mt19937_64 rng(1);
  const auto img = Tensor<double>::uniform({1, 7, 7}, 0.0, 1.0, rng);
  EXPECT_LT((resize(img, 7).array() - img.array()).abs().maxCoeff(), 1e-7);
}

TEST(Resize, ConstantStaysConstant) {
  const auto out = resize(Tensor<double>::constant({1, 5, 5}, 0.3), 13);
  EXPECT_LT((out.array() - 0.3).abs().maxCoeff(), 1e-12);
}

TEST(Resize, CheckerboardTwoToFour) {
  const auto out = resize(Tensor<double>::from({1, 2, 2}, {0, 1, 1, 0}), 4);
  const auto expect = Tensor<double>::from(
      {1, 4, 4}, {0, .25, .75, 1, .25, .375, .625, .75, .75, .625, .375, .25, 1, .75, .25, 0});
  EXPECT_LT((out.array() - expect.array()).abs().maxCoeff(), 1e-12);
}

TEST(Resize, StaysInUnitRange) {
  std::mt19937_64 rng(2);
  const auto out = resize(Tensor<double>::uniform({1, 9, 9}, 0.0, 1.0, rng), 20);
  EXPECT_TRUE((out.array() >= 0.0).all() && (out.array() <= 1.0).all());
}

TEST(Shear, ZeroIsIdentity) {
  std::mt19937_64 rng(3);
  const auto img = Tensor<double>::uniform({1, 6, 6}, 0.0, 1.0, rng);
  EXPECT_EQ(shear(img, 0.0), img);
}

TEST(Shear, FortyFiveDegreesShiftsOneColumnPerRow) {
  auto img = Tensor<double>::constant({1, 5, 5}, 1.0);
  img.at(0, 1, 3) = 0.0; // one row above the centre row 2
  img.at(0, 2, 3) = 0.0;
  const auto out = shear(img, 45.0);
  EXPECT_NEAR(out.at(0, 1, 2), 0.0, 1e-12);
  EXPECT_NEAR(out.at(0, 1, 3), 1.0, 1e-12);
  EXPECT_NEAR(out.at(0, 2, 3), 0.0, 1e-12);
}

TEST(Shear, FillsWithWhite) {
  const auto out = shear(Tensor<double>::zeros({1, 9, 9}), 30.0);
  EXPECT_EQ(out.at(0, 0, 8), 1.0);
  EXPECT_EQ(out.at(0, 4, 4), 0.0);
}

TEST(Augment, AnglesBoundedAndUniform) {
  const AugmentConfig cfg;
  std::vector<int> bins(10, 0);
  for (std::uint64_t i = 0; i < 10000; ++i) {
    const double a = draw_shear_angle(cfg, 7, i % 3, i);
    ASSERT_GE(a, -5.0);
    ASSERT_LE(a, 5.0);
    ++bins[static_cast<std::size_t>(std::min(9, static_cast<int>((a + 5.0))))];
  }
  double chi2 = 0.0;
  for (int b : bins) chi2 += (b - 1000.0) * (b - 1000.0) / 1000.0;
  EXPECT_LT(chi2, 27.88); // 99.9% quantile at 9 degrees of freedom
}

TEST(Augment, TrainingPathOnly) {
  const auto corpus = generate_corpus(CorpusSpec::uniform(2, 4), 1);
  const auto data = prepare_images<double>(corpus, 32);
  const std::vector<std::size_t> ids{0, 3, 5};
  EXPECT_EQ(image_batch(data, ids), image_batch(data, ids));
  AugmentConfig aug;
  const auto a = image_batch(data, ids, &aug, 1, 0);
  EXPECT_FALSE(a == image_batch(data, ids));
  EXPECT_EQ(a, image_batch(data, ids, &aug, 1, 0));
  EXPECT_FALSE(a == image_batch(data, ids, &aug, 1, 1));
  aug.enabled = false;
  EXPECT_EQ(image_batch(data, ids, &aug, 1, 0), image_batch(data, ids));
}

TEST(Tokenize, EmptyContent) {
  const auto e = tokenize(std::span<const std::int32_t>{}, 6);
  EXPECT_EQ(e.ids, (std::vector<std::int32_t>{kCls, kSep, kPad, kPad, kPad, kPad}));
  EXPECT_EQ(e.mask, (std::vector<std::uint8_t>{1, 1, 0, 0, 0, 0}));
}

TEST(Tokenize, ExactFit) {
  const std::vector<std::int32_t> content{7, 8, 9};
  const auto e = tokenize(content, 5);
  EXPECT_EQ(e.ids, (std::vector<std::int32_t>{kCls, 7, 8, 9, kSep}));
  EXPECT_TRUE(std::all_of(e.mask.begin(), e.mask.end(), [](auto m) { return m == 1; }));
}

TEST(Tokenize, TruncatesTo510) {
  std::vector<std::int32_t> content(600);
  std::iota(content.begin(), content.end(), 4);
  const auto e = tokenize(content, 512);
  ASSERT_EQ(e.ids.size(), 512u);
  EXPECT_EQ(e.ids.front(), kCls);
  EXPECT_EQ(e.ids.back(), kSep);
  EXPECT_EQ(e.ids[510], content[509]);
}

TEST(Tokenize, VocabularyLookup) {
  const Vocabulary v({"invoice", "total"});
  const auto e = tokenize("total due invoice", v, 6);
  EXPECT_EQ(e.ids, (std::vector<std::int32_t>{kCls, 5, kUnk, 4, kSep, kPad}));
  EXPECT_EQ(Vocabulary::synthetic(10).size(), 10u);
}

TEST(Splits, FullProtocol) {
  const auto labels = labels_from_counts(tobacco_like_distribution());
  const SplitProtocol p{10, 800, 200, 100, 42};
  const auto plans = make_splits(labels, 10, p);
  expect_valid_plans(plans, labels, 10, p);
  for (const auto &plan : plans) EXPECT_EQ(plan.test.size(), 2482u);
}

TEST(Splits, DeskAnalog) {
  const auto labels = labels_from_counts({40, 28, 34, 34, 34, 34, 34, 34, 38, 38});
  ASSERT_EQ(labels.size(), 348u);
  const SplitProtocol p{10, 80, 20, 10, 1};
  const auto plans = make_splits(labels, 10, p);
  expect_valid_plans(plans, labels, 10, p);
  EXPECT_EQ(plans[0].test.size(), 248u);
}

TEST(Splits, DistinctTrainSets) {
  const auto labels = labels_from_counts(std::vector<int>(5, 30));
  const auto plans = make_splits(labels, 5, SplitProtocol{10, 40, 10, 10, 3});
  for (std::size_t i = 0; i < plans.size(); ++i)
    for (std::size_t j = i + 1; j < plans.size(); ++j) {
      auto a = plans[i].train, b = plans[j].train;
      std::sort(a.begin(), a.end());
      std::sort(b.begin(), b.end());
      EXPECT_NE(a, b);
    }
}

TEST(Splits, DeterministicInSeed) {
  const auto labels = labels_from_counts(std::vector<int>(4, 20));
  const SplitProtocol p{3, 24, 8, 8, 5};
  const auto a = make_splits(labels, 4, p), b = make_splits(labels, 4, p);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i].train, b[i].train);
}

TEST(Splits, InfeasibleQuotaNamesClass) {
  const auto labels = labels_from_counts({20, 20, 5, 20});
  try {
    make_splits(labels, 4, SplitProtocol{2, 24, 8, 8, 1});
    FAIL();
  } catch (const std::exception &e) {
    EXPECT_NE(std::string(e.what()).find("class 2"), std::string::npos) << e.what();
  }
}

TEST(Splits, JsonRoundTrip) {
  const auto labels = labels_from_counts(std::vector<int>(3, 10));
  const auto plan = make_splits(labels, 3, SplitProtocol{1, 9, 3, 4, 2}).front();
  const auto back = split_plan_from_json(to_json(plan));
  EXPECT_EQ(back.train, plan.train);
  EXPECT_EQ(back.val, plan.val);
  EXPECT_EQ(back.test, plan.test);
  EXPECT_EQ(back.seed, plan.seed);
}

TEST(TokenBatch, TrimsToLongestRealSequence) {
  auto spec = CorpusSpec::uniform(2, 3);
  spec.text_len = 4;
  const auto corpus = generate_corpus(spec, 1);
  const auto data = prepare_text(corpus, 32);
  const std::vector<std::size_t> ids{0, 1, 2};
  const auto b = token_batch(data, ids);
  std::size_t longest = 0;
  for (auto id : ids) longest = std::max(longest, corpus.docs[id].tokens.size() + 2);
  EXPECT_EQ(static_cast<std::size_t>(b.length), longest);
  EXPECT_EQ(b.ids.size(), 3 * longest);
}
