#include "docclf/optim/schedule.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace docclf {

double reference_lr(double base, int n, int k) {
  if (n < 1 || k < 1) throw std::invalid_argument("reference_lr: n and k must be >= 1");
  return base * static_cast<double>(n) * static_cast<double>(k) / 256.0;
}

long StlrConfig::cut() const { return static_cast<long>(std::floor(static_cast<double>(total_steps) * cut_frac)); }

void StlrConfig::validate() const {
  if (!(eta_max > 0.0)) throw std::invalid_argument("stlr: eta_max must be > 0");
  if (!(cut_frac > 0.0 && cut_frac < 1.0)) throw std::invalid_argument("stlr: cut_frac must lie in (0, 1)");
  if (!(ratio > 1.0)) throw std::invalid_argument("stlr: ratio must be > 1");
  if (cut() < 1) throw std::invalid_argument("stlr: total_steps * cut_frac must be >= 1");
  if (cut() >= total_steps) throw std::invalid_argument("stlr: cut must precede the last step");
}

double stlr_lr(long t, const StlrConfig &cfg) {
  cfg.validate();
  if (t < 0 || t > cfg.total_steps) {
    throw std::out_of_range("stlr: step " + std::to_string(t) + " outside [0, " + std::to_string(cfg.total_steps) +
                            "]");
  }
  const long cut = cfg.cut();
  // The decay denominator is T - cut; it equals cut * (1/cut_frac - 1)
  // whenever T * cut_frac is whole and keeps the endpoint exact otherwise.
  const double p = t < cut ? static_cast<double>(t) / static_cast<double>(cut)
                           : 1.0 - static_cast<double>(t - cut) / static_cast<double>(cfg.total_steps - cut);
  return cfg.eta_max * (1.0 + p * (cfg.ratio - 1.0)) / cfg.ratio;
}

std::map<std::string, double> LayerwiseLrs::by_group() const {
  std::map<std::string, double> out{{"head", head}, {"embedding", embedding}};
  for (std::size_t i = 0; i < layers.size(); ++i) out["encoder." + std::to_string(i + 1)] = layers[i];
  return out;
}

LayerwiseLrs layerwise_lrs(const LayerwiseDecayConfig &cfg, int num_layers) {
  if (num_layers < 1) throw std::invalid_argument("layerwise_lrs: num_layers must be >= 1");
  if (!(cfg.xi > 0.0)) throw std::invalid_argument("layerwise_lrs: xi must be > 0");
  LayerwiseLrs out;
  out.head = cfg.eta_top;
  out.layers.resize(static_cast<std::size_t>(num_layers));
  double rate = cfg.eta_body;
  for (int depth = 0; depth < num_layers; ++depth) {
    out.layers[static_cast<std::size_t>(num_layers - 1 - depth)] = rate;
    rate *= cfg.xi;
  }
  out.embedding = out.layers.front();

  const auto flag = [&](const std::string &group, double lr) {
    if (lr < 1e-12) {
      std::ostringstream msg;
      msg << "learning rate for " << group << " is " << lr << " (xi=" << cfg.xi << "); the group will barely train";
      out.warnings.push_back(msg.str());
    }
  };
  flag("head", out.head);
  for (std::size_t i = 0; i < out.layers.size(); ++i) flag("encoder." + std::to_string(i + 1), out.layers[i]);
  flag("embedding", out.embedding);
  return out;
}

} // namespace docclf
