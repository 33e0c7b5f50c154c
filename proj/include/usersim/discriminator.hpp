#pragma once

#include <cstdint>
#include <span>
#include <utility>

#include "usersim/encoding.hpp"
#include "usersim/generator.hpp"

namespace usersim::model {

/// The joint real/fake and feedback judge. Mirrors the generator's encoder
/// (own parameters), encodes the action embedding through a dense layer,
/// and classifies concat(p^D, e^D) into K real-feedback classes followed by
/// the fake block: K classes normally, or a single collapsed fake class for
/// the three-logit ablation.
///
/// Logit layout: the real block comes first and each block orders feedback
/// classes by descending class index, so for K=2 the four logits are
/// [real-positive, real-negative, fake-positive, fake-negative].
class Discriminator {
 public:
  struct Dims {
    std::size_t embed_dim = 20;     // |E|
    std::size_t feedback_dim = 10;  // |F|
    std::size_t hidden = 128;       // H
    std::size_t action_dim = 32;    // e^D width
    std::size_t head_hidden = 128;
    int num_classes = 2;  // K
    int fake_classes = 2;  // K, or 1 for the collapsed-fake ablation

    std::size_t logit_count() const {
      return static_cast<std::size_t>(num_classes + fake_classes);
    }
  };

  Discriminator() = default;
  Discriminator(const Dims& dims, std::uint64_t seed);

  const Dims& dims() const { return dims_; }
  nn::ParameterStore& params() { return params_; }
  const nn::ParameterStore& params() const { return params_; }

  static constexpr const char* kFeedbackPrefix = "disc.fb";
  static constexpr const char* kGruPrefix = "disc.gru";

 private:
  Dims dims_;
  nn::ParameterStore params_;
};

/// Position of feedback class f inside the real block (descending class
/// order: the top class sits at slot 0).
std::size_t real_block_slot(int feedback, int num_classes);

/// Target logit index for a fake pair carrying ground-truth feedback f.
std::size_t fake_target_index(int feedback, const Discriminator::Dims& dims);

/// Encoder half: p^D [B x H] for a batch of states.
nn::ValueId disc_encode_graph(nn::Tape& tape, const nn::BoundStore& store,
                              const Discriminator::Dims& dims, const StateBatch& states);

/// Head half: logits [B x (K + fake)] from p^D and action embeddings
/// [B x |E|] (real rows or generator output alike).
nn::ValueId disc_head_graph(nn::Tape& tape, const nn::BoundStore& store, nn::ValueId preference,
                            nn::ValueId action_embeds);

nn::ValueId classify_graph(nn::Tape& tape, const nn::BoundStore& store,
                           const Discriminator::Dims& dims, const StateBatch& states,
                           nn::ValueId action_embeds);

/// Block masses from class probabilities [B x (K+fake)] -> [B x 1].
nn::ValueId prob_real_graph(nn::Tape& tape, const Discriminator::Dims& dims, nn::ValueId probs);
nn::ValueId prob_fake_graph(nn::Tape& tape, const Discriminator::Dims& dims, nn::ValueId probs);

// Value-level operations.

/// Logits for one (state, action-embedding) pair.
nn::Tensor classify(const data::State& state, const nn::Tensor& action_embed,
                    const data::ItemCatalog& catalog, const Discriminator& disc);

/// Softmax over a logit vector.
nn::Tensor class_probs(const nn::Tensor& logits);

/// Real-block / fake-block probability mass; the two sum to 1.
double prob_real(const nn::Tensor& probs, int num_classes);
double prob_fake(const nn::Tensor& probs, int num_classes);

struct FeedbackScore {
  int feedback = 0;               // argmax over the renormalized real block
  double score = 0.0;             // p(real-positive) before renormalization
  std::vector<double> real_block;  // renormalized real-block distribution,
                                   // indexed by feedback class
};

/// Feedback prediction for a batch of (state, action) pairs. Ties in the
/// renormalized real block break toward the lower logit slot, i.e. the
/// higher feedback class.
std::vector<FeedbackScore> predict_feedback_batch(const Discriminator& disc,
                                                  const data::ItemCatalog& catalog,
                                                  std::span<const data::State* const> states,
                                                  std::span<const std::size_t> actions);

std::pair<int, double> predict_feedback(const data::State& state, const std::string& action_id,
                                        const data::ItemCatalog& catalog,
                                        const Discriminator& disc);

// Loss graphs. Fake actions enter as constant tensors (no gradient reaches
// the generator from the discriminator's losses).

/// -(mean log real-mass(real pairs) + mean log fake-mass(fake pairs)).
nn::ValueId disc_unsup_loss_graph(nn::Tape& tape, const Discriminator::Dims& dims,
                                  nn::ValueId real_logits, nn::ValueId fake_logits);

/// -(mean log p[target] over real pairs) - lambda * (mean log p[fake
/// target] over fake pairs). Targets carry the ground-truth feedback of the
/// real pair each fake shadows.
nn::ValueId disc_sup_loss_graph(nn::Tape& tape, const Discriminator::Dims& dims,
                                nn::ValueId real_logits, std::span<const int> real_feedback,
                                nn::ValueId fake_logits, std::span<const int> fake_feedback,
                                double lambda);

// Value-level loss evaluators (fakes given explicitly as embeddings).

double disc_unsup_loss(const Discriminator& disc, const data::ItemCatalog& catalog,
                       std::span<const data::State* const> real_states,
                       std::span<const std::size_t> real_actions,
                       std::span<const data::State* const> fake_states,
                       const nn::Tensor& fake_action_embeds);

double disc_sup_loss(const Discriminator& disc, const data::ItemCatalog& catalog,
                     std::span<const data::State* const> real_states,
                     std::span<const std::size_t> real_actions, std::span<const int> real_feedback,
                     std::span<const data::State* const> fake_states,
                     const nn::Tensor& fake_action_embeds, std::span<const int> fake_feedback,
                     double lambda);

/// Eq-style composite: unsup + alpha * sup on the same batches.
double disc_loss(const Discriminator& disc, const data::ItemCatalog& catalog,
                 std::span<const data::State* const> real_states,
                 std::span<const std::size_t> real_actions, std::span<const int> real_feedback,
                 std::span<const data::State* const> fake_states,
                 const nn::Tensor& fake_action_embeds, std::span<const int> fake_feedback,
                 double alpha, double lambda);

/// mean log fake-mass(s, G(s)): the generator's adversarial objective,
/// differentiable into the generator with the discriminator frozen.
double gen_unsup_loss(const Generator& gen, const Discriminator& disc,
                      const data::ItemCatalog& catalog,
                      std::span<const data::State* const> states);

/// gen_unsup_loss + beta * gen_sup_loss.
double gen_loss(const Generator& gen, const Discriminator& disc, const data::ItemCatalog& catalog,
                std::span<const data::State* const> states, std::span<const std::size_t> actions,
                double beta);

}  // namespace usersim::model
