#pragma once

#include <cstdint>
#include <span>

#include "usersim/encoding.hpp"

namespace usersim::model {

/// The policy imitator: a feedback-embedding + GRU encoder producing the
/// preference vector p^E, and a two-layer tanh decoder mapping p^E to a
/// synthetic item embedding G(s) in (-1, 1)^|E|.
class Generator {
 public:
  struct Dims {
    std::size_t embed_dim = 20;    // |E|
    std::size_t feedback_dim = 10;  // |F|
    std::size_t hidden = 128;      // H
    int num_classes = 2;           // K
  };

  Generator() = default;
  Generator(const Dims& dims, std::uint64_t seed);

  const Dims& dims() const { return dims_; }
  nn::ParameterStore& params() { return params_; }
  const nn::ParameterStore& params() const { return params_; }

  static constexpr const char* kFeedbackPrefix = "gen.fb";
  static constexpr const char* kGruPrefix = "gen.gru";

 private:
  Dims dims_;
  nn::ParameterStore params_;
};

/// Encoder output p^E for a batch of states -> [B x H].
nn::ValueId encode_graph(nn::Tape& tape, const nn::BoundStore& store, const Generator::Dims& dims,
                         const StateBatch& states);

/// Full generator: decoder applied to p^E -> [B x |E|], components in (-1, 1).
nn::ValueId generate_graph(nn::Tape& tape, const nn::BoundStore& store, const Generator::Dims& dims,
                           const StateBatch& states);

/// Mean over the batch of ||e_a - G(s)||^2_2 against constant targets.
nn::ValueId gen_sup_loss_graph(nn::Tape& tape, nn::ValueId generated, const nn::Tensor& targets);

/// mean(log(clamp(fake_mass))) for a [B x 1] column of fake-block masses;
/// shared by both adversarial losses.
nn::ValueId mean_log_mass_graph(nn::Tape& tape, nn::ValueId masses);

// Value-level operations (single state / explicit batches).

/// F_n for one feedback class.
nn::Tensor feedback_embed(int feedback, const Generator& gen);
/// F_n for an explicit indicator vector of length K.
nn::Tensor feedback_embed(const nn::Tensor& one_hot, const Generator& gen);

/// p^E for one state.
nn::Tensor encode_state(const data::State& state, const data::ItemCatalog& catalog,
                        const Generator& gen);

/// G(s) for one state.
nn::Tensor generate(const data::State& state, const data::ItemCatalog& catalog,
                    const Generator& gen);

/// Batched G(s) values (no gradients) -> [B x |E|].
nn::Tensor generate_batch(const Generator& gen, const data::ItemCatalog& catalog,
                          std::span<const data::State* const> states);

/// Mean squared-L2 imitation loss over (state, action) pairs.
double gen_sup_loss(const Generator& gen, const data::ItemCatalog& catalog,
                    std::span<const data::State* const> states,
                    std::span<const std::size_t> actions);

}  // namespace usersim::model
