#ifndef DOCCLF_OPTIM_SCHEDULE_HPP
#define DOCCLF_OPTIM_SCHEDULE_HPP

#include <map>
#include <string>
#include <vector>

namespace docclf {

/// Linear scaling rule: base * (n * k) / 256.
double reference_lr(double base, int n, int k);

/// Slanted triangular schedule over steps 0..total_steps.
struct StlrConfig {
  double eta_max = 0.1;
  long total_steps = 1000;
  double cut_frac = 0.1;
  double ratio = 32.0;

  /// floor(total_steps * cut_frac).
  long cut() const;
  void validate() const;
};

/// Rises linearly from eta_max/ratio to eta_max at cut, then falls linearly
/// back to eta_max/ratio at total_steps. Throws for t outside [0, T].
double stlr_lr(long t, const StlrConfig &cfg);

struct LayerwiseDecayConfig {
  double eta_top = 1e-6;
  double eta_body = 3e-5;
  double xi = 0.95;
};

struct LayerwiseLrs {
  double head = 0.0;
  /// Encoder layer rates, bottom layer first.
  std::vector<double> layers;
  double embedding = 0.0;
  /// One message per rate that fell below 1e-12.
  std::vector<std::string> warnings;

  /// Keyed by group name: "head", "embedding", "encoder.1".."encoder.L".
  std::map<std::string, double> by_group() const;
};

/// Top encoder layer gets eta_body, each layer below it xi times the one
/// above; the embedding takes the bottom layer's rate.
LayerwiseLrs layerwise_lrs(const LayerwiseDecayConfig &cfg, int num_layers);

} // namespace docclf

#endif // DOCCLF_OPTIM_SCHEDULE_HPP
