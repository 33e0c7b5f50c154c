#include "usersim/generator.hpp"

namespace usersim::model {

namespace {
constexpr std::uint64_t kGeneratorTag = 0x67656e65ULL;  // "gene"
}

Generator::Generator(const Dims& dims, std::uint64_t seed) : dims_(dims) {
  if (dims.embed_dim == 0 || dims.feedback_dim == 0 || dims.hidden == 0 || dims.num_classes < 2) {
    throw ConfigError("generator dims must be positive with at least two feedback classes");
  }
  Rng rng(derive_seed(seed, kGeneratorTag));
  nn::register_dense(params_, kFeedbackPrefix, static_cast<std::size_t>(dims.num_classes),
                     dims.feedback_dim, rng);
  nn::register_gru(params_, kGruPrefix, dims.embed_dim + dims.feedback_dim, dims.hidden, rng);
  nn::register_dense(params_, "gen.dec0", dims.hidden, dims.hidden, rng);
  nn::register_dense(params_, "gen.dec1", dims.hidden, dims.embed_dim, rng);
}

nn::ValueId encode_graph(nn::Tape& tape, const nn::BoundStore& store, const Generator::Dims& dims,
                         const StateBatch& states) {
  return encode_state_graph(tape, store, Generator::kFeedbackPrefix, Generator::kGruPrefix, states,
                            dims.hidden);
}

nn::ValueId generate_graph(nn::Tape& tape, const nn::BoundStore& store, const Generator::Dims& dims,
                           const StateBatch& states) {
  nn::ValueId h = encode_graph(tape, store, dims, states);
  h = nn::dense_graph(tape, store, "gen.dec0", h, nn::Activation::tanh);
  return nn::dense_graph(tape, store, "gen.dec1", h, nn::Activation::tanh);
}

nn::ValueId gen_sup_loss_graph(nn::Tape& tape, nn::ValueId generated, const nn::Tensor& targets) {
  const nn::ValueId diff = tape.sub(tape.constant(targets), generated);
  const double batch = static_cast<double>(targets.rows());
  return tape.scale(tape.sum_all(tape.mul(diff, diff)), 1.0 / batch);
}

nn::ValueId mean_log_mass_graph(nn::Tape& tape, nn::ValueId masses) {
  return tape.mean_all(tape.log_op(tape.clamp_min(masses, 1e-12)));
}

nn::Tensor feedback_embed(const nn::Tensor& one_hot, const Generator& gen) {
  if (one_hot.numel() != static_cast<std::size_t>(gen.dims().num_classes)) {
    throw ShapeError("feedback indicator length " + std::to_string(one_hot.numel()) +
                     ", expected " + std::to_string(gen.dims().num_classes));
  }
  nn::Tape tape;
  const nn::ValueId out =
      feedback_embed_graph(tape, nn::BoundStore::freeze(gen.params()), Generator::kFeedbackPrefix,
                           tape.constant(nn::Tensor({1, one_hot.numel()}, one_hot.raw())));
  return nn::Tensor({tape.value(out).cols()}, tape.value(out).raw());
}

nn::Tensor feedback_embed(int feedback, const Generator& gen) {
  return feedback_embed(
      nn::Tensor({static_cast<std::size_t>(gen.dims().num_classes)},
                 data::feedback_one_hot(feedback, gen.dims().num_classes)),
      gen);
}

nn::Tensor encode_state(const data::State& state, const data::ItemCatalog& catalog,
                        const Generator& gen) {
  const data::State* one[] = {&state};
  const StateBatch batch = make_state_batch(catalog, one, gen.dims().num_classes);
  nn::Tape tape;
  const nn::ValueId out = encode_graph(tape, nn::BoundStore::freeze(gen.params()), gen.dims(),
                                       batch);
  return nn::Tensor({tape.value(out).cols()}, tape.value(out).raw());
}

nn::Tensor generate(const data::State& state, const data::ItemCatalog& catalog,
                    const Generator& gen) {
  const data::State* one[] = {&state};
  const StateBatch batch = make_state_batch(catalog, one, gen.dims().num_classes);
  nn::Tape tape;
  const nn::ValueId out = generate_graph(tape, nn::BoundStore::freeze(gen.params()), gen.dims(),
                                         batch);
  return nn::Tensor({tape.value(out).cols()}, tape.value(out).raw());
}

nn::Tensor generate_batch(const Generator& gen, const data::ItemCatalog& catalog,
                          std::span<const data::State* const> states) {
  const StateBatch batch = make_state_batch(catalog, states, gen.dims().num_classes);
  nn::Tape tape;
  const nn::ValueId out = generate_graph(tape, nn::BoundStore::freeze(gen.params()), gen.dims(),
                                         batch);
  return tape.value(out);
}

double gen_sup_loss(const Generator& gen, const data::ItemCatalog& catalog,
                    std::span<const data::State* const> states,
                    std::span<const std::size_t> actions) {
  if (states.empty() || states.size() != actions.size()) {
    throw ContractError("gen_sup_loss: need matching nonempty state/action batches");
  }
  const StateBatch batch = make_state_batch(catalog, states, gen.dims().num_classes);
  const nn::Tensor targets = gather_action_embeddings(catalog, actions);
  nn::Tape tape;
  const nn::ValueId generated = generate_graph(tape, nn::BoundStore::freeze(gen.params()),
                                               gen.dims(), batch);
  return tape.scalar(gen_sup_loss_graph(tape, generated, targets));
}

}  // namespace usersim::model
