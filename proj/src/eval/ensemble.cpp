#include "docclf/eval/ensemble.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <stdexcept>

namespace docclf {

void FusionWeights::validate() const {
  if (w1 < 0.0 || w2 < 0.0) throw std::invalid_argument("fusion weights must be >= 0");
  if (std::abs(w1 + w2 - 1.0) > 1e-9) throw std::invalid_argument("fusion weights must sum to 1");
}

namespace detail {

PredictionMatrix fuse_weighted(const std::vector<PredictionMatrix> &preds, const std::vector<double> &weights) {
  if (preds.empty() || preds.size() != weights.size())
    throw std::invalid_argument("fuse: need one weight per model");
  double total = 0.0;
  for (double w : weights) {
    if (w < 0.0) throw std::invalid_argument("fuse: weights must be >= 0");
    total += w;
  }
  if (std::abs(total - 1.0) > 1e-9) throw std::invalid_argument("fuse: weights must sum to 1");
  PredictionMatrix out = PredictionMatrix::Zero(preds.front().rows(), preds.front().cols());
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (preds[i].rows() != out.rows() || preds[i].cols() != out.cols()) {
      throw std::invalid_argument("fuse: prediction shapes differ (" + std::to_string(preds[i].rows()) + "x" +
                                  std::to_string(preds[i].cols()) + " vs " + std::to_string(out.rows()) + "x" +
                                  std::to_string(out.cols()) + ")");
    }
    out += weights[i] * preds[i];
  }
  return out;
}

} // namespace detail

PredictionMatrix fuse(const PredictionMatrix &p_text, const PredictionMatrix &p_image, const FusionWeights &w) {
  w.validate();
  return detail::fuse_weighted({p_text, p_image}, {w.w1, w.w2});
}

Prediction fuse(const Prediction &p_text, const Prediction &p_image, const FusionWeights &w) {
  const PredictionMatrix t = p_text.transpose();
  const PredictionMatrix i = p_image.transpose();
  return fuse(t, i, w).row(0).transpose();
}

int predict_class(const Eigen::Ref<const Eigen::VectorXd> &p) {
  if (p.size() == 0) throw std::invalid_argument("predict_class: empty prediction");
  Eigen::Index best = 0;
  for (Eigen::Index i = 1; i < p.size(); ++i)
    if (p[i] > p[best]) best = i;
  return static_cast<int>(best);
}

std::vector<int> predict_classes(const PredictionMatrix &probs) {
  std::vector<int> out(static_cast<std::size_t>(probs.rows()));
  for (Eigen::Index r = 0; r < probs.rows(); ++r) out[static_cast<std::size_t>(r)] = predict_class(probs.row(r).transpose());
  return out;
}

double evaluate(const std::vector<int> &predictions, const std::vector<int> &labels) {
  if (predictions.size() != labels.size()) throw std::invalid_argument("evaluate: prediction/label count mismatch");
  if (labels.empty()) throw std::invalid_argument("evaluate: no samples");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) hits += predictions[i] == labels[i];
  return static_cast<double>(hits) / static_cast<double>(labels.size());
}

std::vector<double> grid_candidates(double step) {
  if (!(step > 0.0 && step <= 1.0)) throw std::invalid_argument("grid search: step must lie in (0, 1]");
  std::vector<double> out;
  const auto count = static_cast<long>(std::floor(1.0 / step + 1e-9));
  for (long i = 0; i <= count; ++i) out.push_back(std::min(1.0, static_cast<double>(i) * step));
  const auto add = [&](double v) {
    for (double c : out)
      if (std::abs(c - v) < 1e-9) return;
    out.push_back(v);
  };
  add(0.5);
  add(1.0);
  std::sort(out.begin(), out.end());
  return out;
}

FusionWeights grid_search_weights(const PredictionMatrix &val_text, const PredictionMatrix &val_image,
                                  const std::vector<int> &labels, double step) {
  if (labels.empty()) throw std::invalid_argument("grid search: empty validation set");
  if (static_cast<std::size_t>(val_text.rows()) != labels.size())
    throw std::invalid_argument("grid search: one label per validation row required");
  long best_hits = -1;
  double best_w1 = 0.5;
  for (double w1 : grid_candidates(step)) {
    const auto pred = predict_classes(fuse(val_text, val_image, FusionWeights{w1, 1.0 - w1}));
    long hits = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) hits += pred[i] == labels[i];
    const bool better = hits > best_hits ||
                        (hits == best_hits && (std::abs(w1 - 0.5) < std::abs(best_w1 - 0.5) - 1e-12 ||
                                               (std::abs(std::abs(w1 - 0.5) - std::abs(best_w1 - 0.5)) <= 1e-12 &&
                                                w1 < best_w1)));
    if (better) {
      best_hits = hits;
      best_w1 = w1;
    }
  }
  return {best_w1, 1.0 - best_w1};
}

double median_accuracy(std::vector<double> accs) {
  if (accs.empty()) throw std::invalid_argument("median: empty list");
  std::sort(accs.begin(), accs.end());
  const std::size_t m = accs.size() / 2;
  return accs.size() % 2 ? accs[m] : 0.5 * (accs[m - 1] + accs[m]);
}

double mean_accuracy(const std::vector<double> &accs) {
  if (accs.empty()) throw std::invalid_argument("mean: empty list");
  return std::accumulate(accs.begin(), accs.end(), 0.0) / static_cast<double>(accs.size());
}

std::string to_string(Reducer r) { return r == Reducer::median ? "median" : "mean"; }

Reducer parse_reducer(const std::string &name) {
  if (name == "median") return Reducer::median;
  if (name == "mean") return Reducer::mean;
  throw std::invalid_argument("unknown reducer '" + name + "'");
}

double reduce(Reducer r, const std::vector<double> &values) {
  return r == Reducer::median ? median_accuracy(values) : mean_accuracy(values);
}

void write_report_csv(std::ostream &os, const std::vector<SplitResult> &results, Reducer reducer) {
  if (results.empty()) throw std::invalid_argument("report: no split results");
  os << "split_id,image_acc,text_acc,ensemble_acc,w1,w2\n";
  std::vector<double> image, text, ens, w1, w2;
  for (const auto &r : results) {
    os << r.split_id << ',' << r.image_acc << ',' << r.text_acc << ',' << r.ensemble_acc << ',' << r.weights.w1 << ','
       << r.weights.w2 << '\n';
    image.push_back(r.image_acc);
    text.push_back(r.text_acc);
    ens.push_back(r.ensemble_acc);
    w1.push_back(r.weights.w1);
    w2.push_back(r.weights.w2);
  }
  const Reducer other = reducer == Reducer::median ? Reducer::mean : Reducer::median;
  for (Reducer r : {reducer, other})
    os << to_string(r) << ',' << reduce(r, image) << ',' << reduce(r, text) << ',' << reduce(r, ens) << ','
       << reduce(r, w1) << ',' << reduce(r, w2) << '\n';
}

} // namespace docclf
