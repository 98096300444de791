#ifndef DOCCLF_TRAIN_TASKS_HPP
#define DOCCLF_TRAIN_TASKS_HPP

// Glue between the corpus and the two model families: preprocessed datasets,
// the per-shard losses the parallel trainer needs, and batched inference.

#include "docclf/data/corpus.hpp"
#include "docclf/data/image.hpp"
#include "docclf/data/tokenize.hpp"
#include "docclf/eval/ensemble.hpp"
#include "docclf/model/efficientnet.hpp"
#include "docclf/model/text_encoder.hpp"

#include <memory>
#include <span>
#include <vector>

namespace docclf {

template <typename Scalar>
struct ImageData {
  /// [1, size, size] per document, already resized.
  std::vector<Tensor<Scalar>> images;
  std::vector<int> labels;
  int size = 0;
};

template <typename Scalar>
ImageData<Scalar> prepare_images(const Corpus &corpus, int input_size) {
  ImageData<Scalar> data;
  data.size = input_size;
  for (const auto &d : corpus.docs) {
    const auto img = d.image.dim(1) == input_size ? d.image : resize(d.image, input_size);
    data.images.push_back(img.template cast<Scalar>());
    data.labels.push_back(d.label);
  }
  return data;
}

struct TextData {
  std::vector<Encoded> encoded;
  std::vector<int> labels;
  int max_len = 0;
};

TextData prepare_text(const Corpus &corpus, int max_len);

/// Stacks documents into [n, 1, S, S]; sheared per (seed, epoch, id) when
/// `augment` is given.
template <typename Scalar>
Tensor<Scalar> image_batch(const ImageData<Scalar> &data, std::span<const std::size_t> ids,
                           const AugmentConfig *augment = nullptr, std::uint64_t seed = 0, int epoch = 0) {
  const Index s = data.size, plane = s * s;
  Tensor<Scalar> batch({static_cast<Index>(ids.size()), 1, s, s});
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const auto &src = data.images.at(ids[i]);
    if (augment && augment->enabled) {
      const double theta = draw_shear_angle(*augment, seed, static_cast<std::uint64_t>(epoch), ids[i]);
      batch.array().segment(static_cast<Index>(i) * plane, plane) = shear(src, theta).array();
    } else {
      batch.array().segment(static_cast<Index>(i) * plane, plane) = src.array();
    }
  }
  return batch;
}

/// Pads to the longest real sequence among `ids`. Padded keys are masked,
/// so trimming the common tail of padding does not change the outputs.
TokenBatch token_batch(const TextData &data, std::span<const std::size_t> ids);

std::vector<int> labels_of(const std::vector<int> &labels, std::span<const std::size_t> ids);

template <typename Scalar_>
class ImageTask {
public:
  using Scalar = Scalar_;

  ImageTask(EfficientNet<Scalar> model, std::shared_ptr<const ImageData<Scalar>> data, AugmentConfig augment,
            std::uint64_t seed)
      : model_(std::move(model)), data_(std::move(data)), augment_(augment), seed_(seed) {
    if (data_->size != model_.config().input_size)
      throw DimensionError("image task: data size " + std::to_string(data_->size) + " differs from model input " +
                           std::to_string(model_.config().input_size));
  }

  NetworkGraph<Scalar> &network() { return model_.network(); }
  EfficientNet<Scalar> &model() { return model_; }
  const ImageData<Scalar> &data() const { return *data_; }

  Var<Scalar> loss(Graph<Scalar> &g, std::span<const std::size_t> ids, int epoch) {
    const auto batch = image_batch(*data_, ids, &augment_, seed_, epoch);
    const auto labels = labels_of(data_->labels, ids);
    return softmax_crossentropy(model_.logits(g, batch), std::span<const int>(labels));
  }

private:
  EfficientNet<Scalar> model_;
  std::shared_ptr<const ImageData<Scalar>> data_;
  AugmentConfig augment_;
  std::uint64_t seed_;
};

template <typename Scalar_>
class TextTask {
public:
  using Scalar = Scalar_;

  TextTask(TextEncoder<Scalar> model, std::shared_ptr<const TextData> data)
      : model_(std::move(model)), data_(std::move(data)) {
    if (data_->max_len > model_.config().max_len)
      throw DimensionError("text task: sequences of " + std::to_string(data_->max_len) + " exceed model max_len " +
                           std::to_string(model_.config().max_len));
  }

  NetworkGraph<Scalar> &network() { return model_.network(); }
  TextEncoder<Scalar> &model() { return model_; }
  const TextData &data() const { return *data_; }

  Var<Scalar> loss(Graph<Scalar> &g, std::span<const std::size_t> ids, int) {
    const auto labels = labels_of(data_->labels, ids);
    return softmax_crossentropy(model_.logits(g, token_batch(*data_, ids)), std::span<const int>(labels));
  }

private:
  TextEncoder<Scalar> model_;
  std::shared_ptr<const TextData> data_;
};

/// Class probabilities for `ids`, evaluated in inference mode in chunks.
template <typename Scalar>
PredictionMatrix predict_images(EfficientNet<Scalar> &model, const ImageData<Scalar> &data,
                                const std::vector<std::size_t> &ids, std::size_t chunk = 64) {
  PredictionMatrix out(static_cast<Index>(ids.size()), model.config().num_classes);
  for (std::size_t start = 0; start < ids.size(); start += chunk) {
    const std::span<const std::size_t> part(ids.data() + start, std::min(chunk, ids.size() - start));
    const auto probs = model.predict_proba(image_batch(data, part));
    out.middleRows(static_cast<Index>(start), static_cast<Index>(part.size())) =
        probs.matrix(static_cast<Index>(part.size()), model.config().num_classes).template cast<double>();
  }
  return out;
}

template <typename Scalar>
PredictionMatrix predict_texts(TextEncoder<Scalar> &model, const TextData &data, const std::vector<std::size_t> &ids,
                               std::size_t chunk = 64) {
  PredictionMatrix out(static_cast<Index>(ids.size()), model.config().num_classes);
  for (std::size_t start = 0; start < ids.size(); start += chunk) {
    const std::span<const std::size_t> part(ids.data() + start, std::min(chunk, ids.size() - start));
    const auto probs = model.predict_proba(token_batch(data, part));
    out.middleRows(static_cast<Index>(start), static_cast<Index>(part.size())) =
        probs.matrix(static_cast<Index>(part.size()), model.config().num_classes).template cast<double>();
  }
  return out;
}


} // namespace docclf

#endif // DOCCLF_TRAIN_TASKS_HPP
