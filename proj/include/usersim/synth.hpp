#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "usersim/data.hpp"

namespace usersim::synth {

/// Planted-world generation settings. Feedback is drawn by thresholding a
/// noisy preference score, so the Bayes-optimal positive probability is
/// known in closed form and available through the oracle.
struct SynthConfig {
  std::size_t items = 500;
  std::size_t sessions = 2000;
  std::size_t session_length = 12;
  std::size_t embed_dim = 8;  // |E|
  int num_classes = 2;
  double noise_sd = 0.05;   // feedback noise scale
  double threshold = 0.0;   // positive iff <u,e> + noise > threshold
  double temperature = 1.5;  // logging-policy softmax temperature
};

SynthConfig parse_synth_config(const std::string& path);

/// Ground-truth scorer for the planted world: knows every session's latent
/// preference vector and returns the exact positive probability
/// Phi((<u,e> - threshold) / noise_sd) for any (session, item) pair.
class SynthOracle {
 public:
  SynthOracle() = default;
  SynthOracle(SynthConfig config, data::ItemCatalog catalog,
              std::vector<std::string> session_ids, std::vector<std::vector<double>> preferences);

  double positive_probability(std::size_t session_index, std::size_t item_index) const;
  double positive_probability(const std::string& session_id, const std::string& item_id) const;

  const std::vector<double>& preference(std::size_t session_index) const;
  std::size_t session_count() const { return preferences_.size(); }

 private:
  SynthConfig config_;
  data::ItemCatalog catalog_;
  std::vector<std::string> session_ids_;
  std::unordered_map<std::string, std::size_t> session_index_;
  std::vector<std::vector<double>> preferences_;
};

struct SynthWorld {
  data::ItemCatalog catalog;
  std::vector<data::Session> sessions;
  SynthOracle oracle;
};

/// Generates the corpus: item embeddings uniform in (-0.99, 0.99)^|E|, one
/// unit-norm preference u per session, logging policy sampling items with
/// probability proportional to exp(temperature * <u,e>), feedback positive
/// iff <u,e> + Normal(0, noise_sd) > threshold. Bit-identical for identical
/// (config, seed).
SynthWorld synth_world(const SynthConfig& config, std::uint64_t seed);

}  // namespace usersim::synth
