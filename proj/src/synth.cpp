#include "usersim/synth.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>

namespace usersim::synth {

namespace {

constexpr std::uint64_t kItemsTag = 0x6974656d73ULL;     // "items"
constexpr std::uint64_t kSessionTag = 0x73657373ULL;     // "sess"

std::string padded_id(char prefix, std::size_t index, std::size_t count) {
  std::size_t width = 1;
  for (std::size_t c = count; c >= 10; c /= 10) ++width;
  std::string digits = std::to_string(index);
  std::string out(1, prefix);
  out.append(width > digits.size() ? width - digits.size() : 0, '0');
  out += digits;
  return out;
}

double dot(const std::vector<double>& u, const double* e) {
  double s = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) s += u[i] * e[i];
  return s;
}

}  // namespace

SynthConfig parse_synth_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  SynthConfig config;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(path + ": line " + std::to_string(line_no) + ": expected key=value");
    }
    const std::string key = line.substr(0, eq);
    const std::string value = line.substr(eq + 1);
    const auto as_size = [&](std::size_t& field) {
      unsigned long v = 0;
      const auto [p, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
      if (ec != std::errc() || p != value.data() + value.size()) {
        throw ConfigError(path + ": bad value for " + key + ": '" + value + "'");
      }
      field = v;
    };
    const auto as_double = [&](double& field) {
      double v = 0.0;
      const auto [p, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
      if (ec != std::errc() || p != value.data() + value.size()) {
        throw ConfigError(path + ": bad value for " + key + ": '" + value + "'");
      }
      field = v;
    };
    if (key == "items") {
      as_size(config.items);
    } else if (key == "sessions") {
      as_size(config.sessions);
    } else if (key == "session_length") {
      as_size(config.session_length);
    } else if (key == "embed_dim") {
      as_size(config.embed_dim);
    } else if (key == "num_classes") {
      std::size_t v = 0;
      as_size(v);
      config.num_classes = static_cast<int>(v);
    } else if (key == "noise_sd") {
      as_double(config.noise_sd);
    } else if (key == "threshold") {
      as_double(config.threshold);
    } else if (key == "temperature") {
      as_double(config.temperature);
    } else {
      throw ConfigError(path + ": unknown key '" + key + "'");
    }
  }
  return config;
}

SynthOracle::SynthOracle(SynthConfig config, data::ItemCatalog catalog,
                         std::vector<std::string> session_ids,
                         std::vector<std::vector<double>> preferences)
    : config_(config),
      catalog_(std::move(catalog)),
      session_ids_(std::move(session_ids)),
      preferences_(std::move(preferences)) {
  for (std::size_t i = 0; i < session_ids_.size(); ++i) session_index_[session_ids_[i]] = i;
}

double SynthOracle::positive_probability(std::size_t session_index,
                                         std::size_t item_index) const {
  if (session_index >= preferences_.size()) {
    throw ContractError("oracle: session index out of range");
  }
  const double score = dot(preferences_[session_index], catalog_.embedding(item_index)) -
                       config_.threshold;
  if (config_.noise_sd <= 0.0) return score > 0.0 ? 1.0 : 0.0;
  return normal_cdf(score / config_.noise_sd);
}

double SynthOracle::positive_probability(const std::string& session_id,
                                         const std::string& item_id) const {
  const auto it = session_index_.find(session_id);
  if (it == session_index_.end()) throw DataError("oracle: unknown session '" + session_id + "'");
  return positive_probability(it->second, catalog_.require(item_id));
}

const std::vector<double>& SynthOracle::preference(std::size_t session_index) const {
  if (session_index >= preferences_.size()) {
    throw ContractError("oracle: session index out of range");
  }
  return preferences_[session_index];
}

SynthWorld synth_world(const SynthConfig& config, std::uint64_t seed) {
  if (config.items == 0 || config.sessions == 0 || config.session_length == 0 ||
      config.embed_dim == 0) {
    throw ConfigError("synth_world: counts and dimensions must be positive");
  }
  if (config.num_classes != 2) {
    throw ConfigError("synth_world: the planted world models K=2 feedback classes");
  }

  SynthWorld world;

  // Catalog.
  {
    Rng rng(derive_seed(seed, kItemsTag));
    std::vector<std::string> ids(config.items);
    nn::Tensor embeddings({config.items, config.embed_dim});
    for (std::size_t i = 0; i < config.items; ++i) {
      ids[i] = padded_id('i', i, config.items);
      for (std::size_t d = 0; d < config.embed_dim; ++d) {
        embeddings[i * config.embed_dim + d] = rng.uniform(-0.99, 0.99);
      }
    }
    world.catalog = data::ItemCatalog(config.embed_dim, std::move(ids), std::move(embeddings));
  }

  // Sessions: latent preference, policy-tilted item draws, thresholded feedback.
  std::vector<std::string> session_ids(config.sessions);
  std::vector<std::vector<double>> preferences(config.sessions);
  world.sessions.resize(config.sessions);
  std::vector<double> scores(config.items);
  std::vector<double> probs(config.items);
  for (std::size_t s = 0; s < config.sessions; ++s) {
    Rng rng(derive_seed(seed, kSessionTag, s));
    std::vector<double> u(config.embed_dim);
    double norm = 0.0;
    do {
      norm = 0.0;
      for (double& v : u) {
        v = rng.normal();
        norm += v * v;
      }
    } while (norm < 1e-24);
    norm = std::sqrt(norm);
    for (double& v : u) v /= norm;

    double max_score = -1e300;
    for (std::size_t i = 0; i < config.items; ++i) {
      scores[i] = dot(u, world.catalog.embedding(i));
      max_score = std::max(max_score, config.temperature * scores[i]);
    }
    double total = 0.0;
    for (std::size_t i = 0; i < config.items; ++i) {
      probs[i] = std::exp(config.temperature * scores[i] - max_score);
      total += probs[i];
    }

    data::Session& session = world.sessions[s];
    session.id = padded_id('s', s, config.sessions);
    session.steps.reserve(config.session_length);
    for (std::size_t pos = 0; pos < config.session_length; ++pos) {
      const double r = rng.uniform01() * total;
      double acc = 0.0;
      std::size_t item = config.items - 1;
      for (std::size_t i = 0; i < config.items; ++i) {
        acc += probs[i];
        if (r < acc) {
          item = i;
          break;
        }
      }
      const double noisy = scores[item] + config.noise_sd * rng.normal();
      const int feedback = noisy > config.threshold ? 1 : 0;
      session.steps.push_back(data::StepRecord{item, feedback});
    }
    session_ids[s] = session.id;
    preferences[s] = std::move(u);
  }

  world.oracle = SynthOracle(config, world.catalog, std::move(session_ids), std::move(preferences));
  return world;
}

}  // namespace usersim::synth
