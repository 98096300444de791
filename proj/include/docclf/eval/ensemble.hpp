#ifndef DOCCLF_EVAL_ENSEMBLE_HPP
#define DOCCLF_EVAL_ENSEMBLE_HPP

#include <Eigen/Dense>

#include <iosfwd>
#include <string>
#include <vector>

namespace docclf {

using Prediction = Eigen::VectorXd;
/// One probability row per sample.
using PredictionMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// w1 weighs the text model, w2 the image model.
struct FusionWeights {
  double w1 = 0.5;
  double w2 = 0.5;

  void validate() const;
};

namespace detail {

/// sum_i w_i * P_i with sum_i w_i = 1 and w_i >= 0.
PredictionMatrix fuse_weighted(const std::vector<PredictionMatrix> &preds, const std::vector<double> &weights);

} // namespace detail

Prediction fuse(const Prediction &p_text, const Prediction &p_image, const FusionWeights &w);
PredictionMatrix fuse(const PredictionMatrix &p_text, const PredictionMatrix &p_image, const FusionWeights &w);

/// argmax with ties going to the lowest index.
int predict_class(const Eigen::Ref<const Eigen::VectorXd> &p);
std::vector<int> predict_classes(const PredictionMatrix &probs);

/// Fraction of positions where prediction equals label.
double evaluate(const std::vector<int> &predictions, const std::vector<int> &labels);

/// w1 values tried by the grid search: multiples of `step` in [0, 1], plus
/// 0.5 and 1 when the step does not land on them.
std::vector<double> grid_candidates(double step);

/// Best validation accuracy over grid_candidates(step); ties go to the w1
/// nearest 0.5, then the lower w1.
FusionWeights grid_search_weights(const PredictionMatrix &val_text, const PredictionMatrix &val_image,
                                  const std::vector<int> &labels, double step);

double median_accuracy(std::vector<double> accs);
double mean_accuracy(const std::vector<double> &accs);

enum class Reducer { median, mean };
std::string to_string(Reducer r);
Reducer parse_reducer(const std::string &name);
double reduce(Reducer r, const std::vector<double> &values);

struct SplitResult {
  int split_id = 0;
  double image_acc = 0.0;
  double text_acc = 0.0;
  double ensemble_acc = 0.0;
  FusionWeights weights;
};

/// Header, one row per split, then median and mean summary rows labelled in
/// the first column. The row for `reducer` comes first.
void write_report_csv(std::ostream &os, const std::vector<SplitResult> &results, Reducer reducer);

} // namespace docclf

#endif // DOCCLF_EVAL_ENSEMBLE_HPP
