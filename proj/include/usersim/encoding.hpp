#pragma once

#include <span>
#include <vector>

#include "usersim/data.hpp"
#include "usersim/layers.hpp"

namespace usersim::model {

/// A batch of states unpacked into per-position constant tensors: item
/// embeddings [B x |E|] and feedback one-hots [B x K] for each of the N
/// window positions, oldest first.
struct StateBatch {
  std::vector<nn::Tensor> item_embeds;
  std::vector<nn::Tensor> feedback_onehots;
  std::size_t batch = 0;
  std::size_t window = 0;
};

StateBatch make_state_batch(const data::ItemCatalog& catalog,
                            std::span<const data::State* const> states, int num_classes);

/// Gathers catalog rows for a batch of action indices -> [B x |E|].
nn::Tensor gather_action_embeddings(const data::ItemCatalog& catalog,
                                    std::span<const std::size_t> actions);

/// F_n = tanh(W_F f_n + b_F) for a batch of one-hots [B x K] -> [B x |F|].
/// One (W_F, b_F) pair under `prefix` serves every sequence position.
nn::ValueId feedback_embed_graph(nn::Tape& tape, const nn::BoundStore& store,
                                 const std::string& prefix, nn::ValueId onehots);

/// Runs the GRU over I_n = concat(e_n, F_n) from h_0 = 0 and returns the
/// final hidden state [B x H]. `fb_prefix` names the feedback embedding,
/// `gru_prefix` the cell.
nn::ValueId encode_state_graph(nn::Tape& tape, const nn::BoundStore& store,
                               const std::string& fb_prefix, const std::string& gru_prefix,
                               const StateBatch& states, std::size_t hidden);

}  // namespace usersim::model
