#include "usersim/encoding.hpp"

namespace usersim::model {

StateBatch make_state_batch(const data::ItemCatalog& catalog,
                            std::span<const data::State* const> states, int num_classes) {
  if (states.empty()) throw ContractError("state batch must be nonempty");
  const std::size_t window = states[0]->size();
  const std::size_t batch = states.size();
  const std::size_t embed_dim = catalog.dim();
  const std::size_t classes = static_cast<std::size_t>(num_classes);

  StateBatch out;
  out.batch = batch;
  out.window = window;
  out.item_embeds.reserve(window);
  out.feedback_onehots.reserve(window);
  for (std::size_t n = 0; n < window; ++n) {
    nn::Tensor embeds({batch, embed_dim});
    nn::Tensor onehots({batch, classes});
    for (std::size_t b = 0; b < batch; ++b) {
      const data::State& s = *states[b];
      if (s.size() != window) {
        throw ContractError("state batch mixes window lengths " + std::to_string(window) +
                            " and " + std::to_string(s.size()));
      }
      const data::StepRecord& step = s.steps[n];
      if (step.item >= catalog.size()) throw DataError("state references an unknown item index");
      const double* e = catalog.embedding(step.item);
      for (std::size_t d = 0; d < embed_dim; ++d) embeds[b * embed_dim + d] = e[d];
      if (step.feedback < 0 || static_cast<std::size_t>(step.feedback) >= classes) {
        throw ContractError("feedback class " + std::to_string(step.feedback) +
                            " outside [0, " + std::to_string(classes) + ")");
      }
      onehots[b * classes + static_cast<std::size_t>(step.feedback)] = 1.0;
    }
    out.item_embeds.push_back(std::move(embeds));
    out.feedback_onehots.push_back(std::move(onehots));
  }
  return out;
}

nn::Tensor gather_action_embeddings(const data::ItemCatalog& catalog,
                                    std::span<const std::size_t> actions) {
  nn::Tensor out({actions.size(), catalog.dim()});
  for (std::size_t b = 0; b < actions.size(); ++b) {
    if (actions[b] >= catalog.size()) {
      throw DataError("unknown item index " + std::to_string(actions[b]));
    }
    const double* e = catalog.embedding(actions[b]);
    for (std::size_t d = 0; d < catalog.dim(); ++d) out[b * catalog.dim() + d] = e[d];
  }
  return out;
}

nn::ValueId feedback_embed_graph(nn::Tape& tape, const nn::BoundStore& store,
                                 const std::string& prefix, nn::ValueId onehots) {
  const nn::ValueId w = store.get(tape, prefix + ".W");
  const nn::ValueId b = store.get(tape, prefix + ".b");
  return tape.tanh_op(tape.add_row(tape.matmul_nt(onehots, w), b));
}

nn::ValueId encode_state_graph(nn::Tape& tape, const nn::BoundStore& store,
                               const std::string& fb_prefix, const std::string& gru_prefix,
                               const StateBatch& states, std::size_t hidden) {
  nn::ValueId h = tape.constant(nn::Tensor::zeros({states.batch, hidden}));
  for (std::size_t n = 0; n < states.window; ++n) {
    const nn::ValueId embeds = tape.constant(states.item_embeds[n]);
    const nn::ValueId fb = feedback_embed_graph(tape, store, fb_prefix,
                                                tape.constant(states.feedback_onehots[n]));
    h = nn::gru_step_graph(tape, store, gru_prefix, h, tape.concat_cols(embeds, fb));
  }
  return h;
}

}  // namespace usersim::model
