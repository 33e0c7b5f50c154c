#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <unordered_map>
#include <vector>

#include "usersim/common.hpp"
#include "usersim/tensor.hpp"

namespace usersim::data {

/// Item id -> dense embedding, all rows sharing one dimension and every
/// component strictly inside (-1, +1). Row order is the source-file order
/// and is the canonical item order everywhere else.
class ItemCatalog {
 public:
  ItemCatalog() = default;
  ItemCatalog(std::size_t dim, std::vector<std::string> ids, nn::Tensor embeddings);

  std::size_t size() const { return ids_.size(); }
  std::size_t dim() const { return dim_; }
  const std::string& id(std::size_t index) const { return ids_[index]; }
  const std::vector<std::string>& ids() const { return ids_; }
  const nn::Tensor& embeddings() const { return embeddings_; }

  /// -1 when the id is unknown.
  int find(const std::string& id) const;
  /// Throws DataError naming the id when unknown.
  std::size_t require(const std::string& id) const;

  const double* embedding(std::size_t index) const { return embeddings_.data() + index * dim_; }
  std::vector<double> embedding_copy(std::size_t index) const;

 private:
  std::size_t dim_ = 0;
  std::vector<std::string> ids_;
  std::unordered_map<std::string, std::size_t> index_;
  nn::Tensor embeddings_;  // [size x dim]
};

/// One browsed item with the user's reaction. Feedback classes are
/// 0 = negative (skip) and, for the default K=2, 1 = positive
/// (click/purchase).
struct StepRecord {
  std::size_t item = 0;  // catalog index
  int feedback = 0;      // in [0, K)

  friend bool operator==(const StepRecord&, const StepRecord&) = default;
};

/// One-hot indicator of length K for a feedback class.
std::vector<double> feedback_one_hot(int feedback, int num_classes);

struct Session {
  std::string id;
  std::vector<StepRecord> steps;
};

/// Sliding window of exactly N (item, feedback) pairs, oldest first.
struct State {
  std::vector<StepRecord> steps;

  std::size_t size() const { return steps.size(); }
  friend bool operator==(const State&, const State&) = default;
};

/// Feedback class -> reward; total over all K classes.
struct RewardMap {
  std::vector<double> by_class;

  static RewardMap defaults(int num_classes);
  double reward(int feedback) const;
};

struct Transition {
  State state;
  std::size_t action = 0;  // catalog index
  int feedback = 0;
  double reward = 0.0;
};

struct IngestStats {
  std::size_t removed_items = 0;
  std::size_t removed_pairs = 0;
  std::size_t dropped_short_sessions = 0;
  std::size_t kept_sessions = 0;
};

/// Catalog + filtered sessions, the storable part of a dataset. Transitions
/// are (re)derived from it for a given window length N.
struct Corpus {
  ItemCatalog catalog;
  std::vector<Session> sessions;
  int num_classes = 2;
  int min_count = 5;
  IngestStats stats;
};

/// Corpus plus the derived MDP transitions and the train/test split. The
/// test set holds exactly the final transition of every contributing
/// session; everything else is train.
struct Dataset {
  ItemCatalog catalog;
  std::vector<Session> sessions;  // only sessions contributing transitions
  int num_classes = 2;
  int window = 20;  // N
  RewardMap rewards;
  std::vector<Transition> transitions;
  std::vector<std::size_t> session_of;  // transition index -> session index
  std::vector<char> is_test;            // split tag per transition
  IngestStats stats;

  std::vector<std::size_t> train_indices() const;
  std::vector<std::size_t> test_indices() const;
};

// --- text formats -----------------------------------------------------------
//
// Log file: one record per line, tab-separated
//     session_id <TAB> item_id <TAB> feedback_class_index
// grouped by session and chronological within each session.
//
// Embedding file: header line `|E|=<int>`, then per item
//     item_id v1 v2 ... v|E|
// space-separated decimals. Writers emit %.17g so both formats round-trip
// bit-exactly.

ItemCatalog read_embeddings(std::istream& in, std::size_t& line_no);
ItemCatalog read_embeddings_file(const std::string& path);
void write_embeddings(std::ostream& out, const ItemCatalog& catalog);
void write_embeddings_file(const std::string& path, const ItemCatalog& catalog);

std::vector<Session> read_logs(std::istream& in, const ItemCatalog& catalog, int num_classes,
                               std::size_t& line_no);
std::vector<Session> read_logs_file(const std::string& path, const ItemCatalog& catalog,
                                    int num_classes);
void write_logs(std::ostream& out, const std::vector<Session>& sessions,
                const ItemCatalog& catalog);
void write_logs_file(const std::string& path, const std::vector<Session>& sessions,
                     const ItemCatalog& catalog);

/// Single-file bundle of the embedding and log sections plus ingest
/// metadata; what `ingest` writes and `train`/`eval-*` read.
void save_corpus(const std::string& path, const Corpus& corpus);
Corpus load_corpus(const std::string& path);

// --- operations --------------------------------------------------------------

/// Removes items whose corpus frequency is below min_count, deletes their
/// pairs from every session, and drops sessions that become empty.
/// (Sessions too short for a window are dropped later, when transitions are
/// derived for a concrete N.)
Corpus apply_min_count(Corpus corpus, int min_count);

/// Full ingestion pipeline for a given window length: parse, min-count
/// filter, derive transitions, split.
Dataset ingest_logs(const std::string& log_path, const std::string& embedding_path, int min_count,
                    int window, int num_classes, RewardMap rewards);

/// Derives transitions for one session: the first N pairs form the initial
/// state, the (N+1)th item is the first action, and the window then slides
/// one step at a time. Sessions with length <= N yield an empty list.
std::vector<Transition> build_transitions(const Session& session, int window,
                                          const RewardMap& rewards);

/// Derives transitions for every session and applies the last-tuple test
/// split.
Dataset build_dataset(Corpus corpus, int window, RewardMap rewards);

/// Deterministic transition: drop the oldest pair, append (action, feedback).
State next_state(const State& s, std::size_t action, int feedback, const ItemCatalog& catalog);
State next_state(const State& s, const std::string& action_id, int feedback,
                 const ItemCatalog& catalog);

/// Duplicates positive-feedback transitions (sampling with replacement,
/// seeded) until positives/total >= target_ratio. Positive means feedback
/// class != 0. The input transitions are all retained unchanged.
std::vector<Transition> upsample_positive(const std::vector<Transition>& transitions,
                                          double target_ratio, std::uint64_t seed);

}  // namespace usersim::data
