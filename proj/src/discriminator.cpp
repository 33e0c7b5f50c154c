#include "usersim/discriminator.hpp"

#include <algorithm>
#include <cmath>

namespace usersim::model {

namespace {
constexpr std::uint64_t kDiscTag = 0x64697363ULL;  // "disc"
}

Discriminator::Discriminator(const Dims& dims, std::uint64_t seed) : dims_(dims) {
  if (dims.embed_dim == 0 || dims.feedback_dim == 0 || dims.hidden == 0 || dims.action_dim == 0 ||
      dims.head_hidden == 0 || dims.num_classes < 2) {
    throw ConfigError("discriminator dims must be positive with at least two feedback classes");
  }
  if (dims.fake_classes != dims.num_classes && dims.fake_classes != 1) {
    throw ConfigError("fake_classes must equal num_classes or 1");
  }
  Rng rng(derive_seed(seed, kDiscTag));
  nn::register_dense(params_, kFeedbackPrefix, static_cast<std::size_t>(dims.num_classes),
                     dims.feedback_dim, rng);
  nn::register_gru(params_, kGruPrefix, dims.embed_dim + dims.feedback_dim, dims.hidden, rng);
  nn::register_dense(params_, "disc.act", dims.embed_dim, dims.action_dim, rng);
  nn::register_dense(params_, "disc.head0", dims.hidden + dims.action_dim, dims.head_hidden, rng);
  nn::register_dense(params_, "disc.head1", dims.head_hidden, dims.logit_count(), rng);
}

std::size_t real_block_slot(int feedback, int num_classes) {
  if (feedback < 0 || feedback >= num_classes) {
    throw ContractError("feedback class " + std::to_string(feedback) + " outside [0, " +
                        std::to_string(num_classes) + ")");
  }
  return static_cast<std::size_t>(num_classes - 1 - feedback);
}

std::size_t fake_target_index(int feedback, const Discriminator::Dims& dims) {
  const std::size_t k = static_cast<std::size_t>(dims.num_classes);
  if (dims.fake_classes == 1) {
    real_block_slot(feedback, dims.num_classes);  // validate the class
    return k;
  }
  return k + real_block_slot(feedback, dims.num_classes);
}

nn::ValueId disc_encode_graph(nn::Tape& tape, const nn::BoundStore& store,
                              const Discriminator::Dims& dims, const StateBatch& states) {
  return encode_state_graph(tape, store, Discriminator::kFeedbackPrefix,
                            Discriminator::kGruPrefix, states, dims.hidden);
}

nn::ValueId disc_head_graph(nn::Tape& tape, const nn::BoundStore& store, nn::ValueId preference,
                            nn::ValueId action_embeds) {
  const nn::ValueId encoded_action =
      nn::dense_graph(tape, store, "disc.act", action_embeds, nn::Activation::tanh);
  nn::ValueId h = tape.concat_cols(preference, encoded_action);
  h = nn::dense_graph(tape, store, "disc.head0", h, nn::Activation::tanh);
  return nn::dense_graph(tape, store, "disc.head1", h, nn::Activation::identity);
}

nn::ValueId classify_graph(nn::Tape& tape, const nn::BoundStore& store,
                           const Discriminator::Dims& dims, const StateBatch& states,
                           nn::ValueId action_embeds) {
  return disc_head_graph(tape, store, disc_encode_graph(tape, store, dims, states),
                         action_embeds);
}

nn::ValueId prob_real_graph(nn::Tape& tape, const Discriminator::Dims& dims, nn::ValueId probs) {
  return tape.sum_cols(probs, 0, static_cast<std::size_t>(dims.num_classes));
}

nn::ValueId prob_fake_graph(nn::Tape& tape, const Discriminator::Dims& dims, nn::ValueId probs) {
  return tape.sum_cols(probs, static_cast<std::size_t>(dims.num_classes), dims.logit_count());
}

nn::Tensor classify(const data::State& state, const nn::Tensor& action_embed,
                    const data::ItemCatalog& catalog, const Discriminator& disc) {
  if (action_embed.numel() != disc.dims().embed_dim) {
    throw ShapeError("action embedding has dimension " + std::to_string(action_embed.numel()) +
                     ", expected " + std::to_string(disc.dims().embed_dim));
  }
  const data::State* one[] = {&state};
  const StateBatch batch = make_state_batch(catalog, one, disc.dims().num_classes);
  nn::Tape tape;
  const nn::ValueId logits = classify_graph(
      tape, nn::BoundStore::freeze(disc.params()), disc.dims(), batch,
      tape.constant(nn::Tensor({1, action_embed.numel()}, action_embed.raw())));
  return nn::Tensor({tape.value(logits).cols()}, tape.value(logits).raw());
}

nn::Tensor class_probs(const nn::Tensor& logits) { return nn::softmax(logits); }

namespace {
double block_mass(const nn::Tensor& probs, std::size_t lo, std::size_t hi) {
  if (probs.numel() < hi) throw ShapeError("probability vector shorter than the class blocks");
  double s = 0.0;
  for (std::size_t i = lo; i < hi; ++i) s += probs[i];
  return s;
}
}  // namespace

double prob_real(const nn::Tensor& probs, int num_classes) {
  return block_mass(probs, 0, static_cast<std::size_t>(num_classes));
}

double prob_fake(const nn::Tensor& probs, int num_classes) {
  return block_mass(probs, static_cast<std::size_t>(num_classes), probs.numel());
}

std::vector<FeedbackScore> predict_feedback_batch(const Discriminator& disc,
                                                  const data::ItemCatalog& catalog,
                                                  std::span<const data::State* const> states,
                                                  std::span<const std::size_t> actions) {
  if (states.size() != actions.size() || states.empty()) {
    throw ContractError("predict_feedback: need matching nonempty state/action batches");
  }
  const int k = disc.dims().num_classes;
  std::vector<FeedbackScore> out;
  out.reserve(states.size());

  constexpr std::size_t kChunk = 512;
  for (std::size_t start = 0; start < states.size(); start += kChunk) {
    const std::size_t count = std::min(kChunk, states.size() - start);
    const StateBatch batch = make_state_batch(catalog, states.subspan(start, count), k);
    const nn::Tensor action_embeds =
        gather_action_embeddings(catalog, actions.subspan(start, count));
    nn::Tape tape;
    const nn::ValueId logits =
        classify_graph(tape, nn::BoundStore::freeze(disc.params()), disc.dims(), batch,
                       tape.constant(action_embeds));
    const nn::ValueId probs = tape.softmax_rows(logits);
    const nn::Tensor& p = tape.value(probs);
    for (std::size_t b = 0; b < count; ++b) {
      FeedbackScore fs;
      fs.score = p.at(b, 0);  // real block, top feedback class
      double real_mass = 0.0;
      for (std::size_t slot = 0; slot < static_cast<std::size_t>(k); ++slot) {
        real_mass += p.at(b, slot);
      }
      fs.real_block.resize(static_cast<std::size_t>(k));
      std::size_t best_slot = 0;
      double best = -1.0;
      for (std::size_t slot = 0; slot < static_cast<std::size_t>(k); ++slot) {
        const double renorm = p.at(b, slot) / real_mass;
        fs.real_block[static_cast<std::size_t>(k) - 1 - slot] = renorm;
        if (renorm > best) {  // strict: ties keep the lower slot
          best = renorm;
          best_slot = slot;
        }
      }
      fs.feedback = k - 1 - static_cast<int>(best_slot);
      out.push_back(std::move(fs));
    }
  }
  return out;
}

std::pair<int, double> predict_feedback(const data::State& state, const std::string& action_id,
                                        const data::ItemCatalog& catalog,
                                        const Discriminator& disc) {
  const std::size_t action = catalog.require(action_id);
  const data::State* one[] = {&state};
  const std::size_t acts[] = {action};
  const FeedbackScore fs = predict_feedback_batch(disc, catalog, one, acts)[0];
  return {fs.feedback, fs.score};
}

nn::ValueId disc_unsup_loss_graph(nn::Tape& tape, const Discriminator::Dims& dims,
                                  nn::ValueId real_logits, nn::ValueId fake_logits) {
  const nn::ValueId real_mass = prob_real_graph(tape, dims, tape.softmax_rows(real_logits));
  const nn::ValueId fake_mass = prob_fake_graph(tape, dims, tape.softmax_rows(fake_logits));
  const nn::ValueId total =
      tape.add(mean_log_mass_graph(tape, real_mass), mean_log_mass_graph(tape, fake_mass));
  return tape.scale(total, -1.0);
}

nn::ValueId disc_sup_loss_graph(nn::Tape& tape, const Discriminator::Dims& dims,
                                nn::ValueId real_logits, std::span<const int> real_feedback,
                                nn::ValueId fake_logits, std::span<const int> fake_feedback,
                                double lambda) {
  if (lambda < 0.0) throw ContractError("lambda must be nonnegative");
  if (real_feedback.empty()) throw ContractError("disc_sup_loss: empty real batch");

  std::vector<std::size_t> real_targets(real_feedback.size());
  for (std::size_t i = 0; i < real_feedback.size(); ++i) {
    real_targets[i] = real_block_slot(real_feedback[i], dims.num_classes);
  }
  const nn::ValueId real_probs = tape.softmax_rows(real_logits);
  const nn::ValueId real_term =
      mean_log_mass_graph(tape, tape.gather_cols(real_probs, std::move(real_targets)));

  if (fake_feedback.empty() || lambda == 0.0) return tape.scale(real_term, -1.0);

  std::vector<std::size_t> fake_targets(fake_feedback.size());
  for (std::size_t i = 0; i < fake_feedback.size(); ++i) {
    fake_targets[i] = fake_target_index(fake_feedback[i], dims);
  }
  const nn::ValueId fake_probs = tape.softmax_rows(fake_logits);
  const nn::ValueId fake_term =
      mean_log_mass_graph(tape, tape.gather_cols(fake_probs, std::move(fake_targets)));
  return tape.scale(tape.add(real_term, tape.scale(fake_term, lambda)), -1.0);
}

namespace {

struct LogitPair {
  nn::Tape tape;
  nn::ValueId real_logits;
  nn::ValueId fake_logits;
};

/// Classifies real and fake pairs on one tape with a frozen discriminator;
/// when the two batches share the same states the encoder still runs twice,
/// which only the training step (in train.cpp) bothers to avoid.
void build_logits(LogitPair& lp, const Discriminator& disc, const data::ItemCatalog& catalog,
                  std::span<const data::State* const> real_states,
                  std::span<const std::size_t> real_actions,
                  std::span<const data::State* const> fake_states,
                  const nn::Tensor& fake_action_embeds) {
  if (real_states.empty() || fake_states.empty()) {
    throw ContractError("discriminator losses need nonempty real and fake batches");
  }
  const auto store = nn::BoundStore::freeze(disc.params());
  const StateBatch real_batch = make_state_batch(catalog, real_states, disc.dims().num_classes);
  const StateBatch fake_batch = make_state_batch(catalog, fake_states, disc.dims().num_classes);
  const nn::Tensor real_embeds = gather_action_embeddings(catalog, real_actions);
  lp.real_logits = classify_graph(lp.tape, store, disc.dims(), real_batch,
                                  lp.tape.constant(real_embeds));
  lp.fake_logits = classify_graph(lp.tape, store, disc.dims(), fake_batch,
                                  lp.tape.constant(fake_action_embeds));
}

}  // namespace

double disc_unsup_loss(const Discriminator& disc, const data::ItemCatalog& catalog,
                       std::span<const data::State* const> real_states,
                       std::span<const std::size_t> real_actions,
                       std::span<const data::State* const> fake_states,
                       const nn::Tensor& fake_action_embeds) {
  LogitPair lp;
  build_logits(lp, disc, catalog, real_states, real_actions, fake_states, fake_action_embeds);
  return lp.tape.scalar(
      disc_unsup_loss_graph(lp.tape, disc.dims(), lp.real_logits, lp.fake_logits));
}

double disc_sup_loss(const Discriminator& disc, const data::ItemCatalog& catalog,
                     std::span<const data::State* const> real_states,
                     std::span<const std::size_t> real_actions, std::span<const int> real_feedback,
                     std::span<const data::State* const> fake_states,
                     const nn::Tensor& fake_action_embeds, std::span<const int> fake_feedback,
                     double lambda) {
  LogitPair lp;
  build_logits(lp, disc, catalog, real_states, real_actions, fake_states, fake_action_embeds);
  return lp.tape.scalar(disc_sup_loss_graph(lp.tape, disc.dims(), lp.real_logits, real_feedback,
                                            lp.fake_logits, fake_feedback, lambda));
}

double disc_loss(const Discriminator& disc, const data::ItemCatalog& catalog,
                 std::span<const data::State* const> real_states,
                 std::span<const std::size_t> real_actions, std::span<const int> real_feedback,
                 std::span<const data::State* const> fake_states,
                 const nn::Tensor& fake_action_embeds, std::span<const int> fake_feedback,
                 double alpha, double lambda) {
  if (alpha < 0.0) throw ContractError("alpha must be nonnegative");
  LogitPair lp;
  build_logits(lp, disc, catalog, real_states, real_actions, fake_states, fake_action_embeds);
  const nn::ValueId unsup =
      disc_unsup_loss_graph(lp.tape, disc.dims(), lp.real_logits, lp.fake_logits);
  const nn::ValueId sup = disc_sup_loss_graph(lp.tape, disc.dims(), lp.real_logits, real_feedback,
                                              lp.fake_logits, fake_feedback, lambda);
  return lp.tape.scalar(lp.tape.add(unsup, lp.tape.scale(sup, alpha)));
}

double gen_unsup_loss(const Generator& gen, const Discriminator& disc,
                      const data::ItemCatalog& catalog,
                      std::span<const data::State* const> states) {
  if (states.empty()) throw ContractError("gen_unsup_loss: empty batch");
  const StateBatch batch = make_state_batch(catalog, states, gen.dims().num_classes);
  nn::Tape tape;
  const nn::ValueId generated =
      generate_graph(tape, nn::BoundStore::freeze(gen.params()), gen.dims(), batch);
  const nn::ValueId logits = classify_graph(tape, nn::BoundStore::freeze(disc.params()),
                                            disc.dims(), batch, generated);
  const nn::ValueId fake_mass = prob_fake_graph(tape, disc.dims(), tape.softmax_rows(logits));
  return tape.scalar(mean_log_mass_graph(tape, fake_mass));
}

double gen_loss(const Generator& gen, const Discriminator& disc, const data::ItemCatalog& catalog,
                std::span<const data::State* const> states, std::span<const std::size_t> actions,
                double beta) {
  if (beta < 0.0) throw ContractError("beta must be nonnegative");
  return gen_unsup_loss(gen, disc, catalog, states) +
         beta * gen_sup_loss(gen, catalog, states, actions);
}

}  // namespace usersim::model
