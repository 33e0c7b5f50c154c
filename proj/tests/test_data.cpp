#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "usersim/data.hpp"
#include "usersim/synth.hpp"

using namespace usersim;
using namespace usersim::data;

namespace {

ItemCatalog tiny_catalog(const std::vector<std::string>& ids, std::size_t dim,
                         std::uint64_t seed = 7) {
  Rng rng(seed);
  nn::Tensor emb({ids.size(), dim});
  for (std::size_t i = 0; i < emb.numel(); ++i) emb[i] = rng.uniform(-0.9, 0.9);
  return ItemCatalog(dim, ids, std::move(emb));
}

Session session_of(const ItemCatalog& catalog, const std::string& id,
                   const std::vector<std::pair<std::string, int>>& steps) {
  Session s{id, {}};
  for (const auto& [item, fb] : steps) s.steps.push_back({catalog.require(item), fb});
  return s;
}

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST_CASE("feedback one-hot encoding") {
  CHECK(feedback_one_hot(0, 2) == std::vector<double>{1.0, 0.0});
  CHECK(feedback_one_hot(1, 2) == std::vector<double>{0.0, 1.0});
  CHECK_THROWS_AS(feedback_one_hot(2, 2), ContractError);
}

TEST_CASE("catalog rejects out-of-range embeddings and duplicates") {
  CHECK_THROWS_AS(ItemCatalog(1, {"a"}, nn::Tensor({1, 1}, {1.0})), DataError);
  CHECK_THROWS_AS(ItemCatalog(1, {"a", "a"}, nn::Tensor({2, 1}, {0.1, 0.2})), DataError);
  CHECK_THROWS_AS(ItemCatalog(1, {"a b"}, nn::Tensor({1, 1}, {0.1})), DataError);
  const ItemCatalog c = tiny_catalog({"a", "b"}, 3);
  CHECK(c.find("a") == 0);
  CHECK(c.find("missing") == -1);
  CHECK_THROWS_AS(c.require("missing"), DataError);
}

TEST_CASE("build_transitions slides the window") {
  const ItemCatalog c = tiny_catalog({"A", "B", "C", "D", "E"}, 2);
  const RewardMap rewards = RewardMap::defaults(2);
  const Session s =
      session_of(c, "s1", {{"A", 1}, {"B", 0}, {"C", 1}, {"D", 0}, {"E", 1}});

  SUBCASE("five steps with N=3 yield two transitions") {
    const auto ts = build_transitions(s, 3, rewards);
    REQUIRE(ts.size() == 2);
    CHECK(ts[0].state.steps ==
          std::vector<StepRecord>{{c.require("A"), 1}, {c.require("B"), 0}, {c.require("C"), 1}});
    CHECK(ts[0].action == c.require("D"));
    CHECK(ts[0].feedback == 0);
    CHECK(ts[0].reward == 0.0);
    CHECK(ts[1].state.steps ==
          std::vector<StepRecord>{{c.require("B"), 0}, {c.require("C"), 1}, {c.require("D"), 0}});
    CHECK(ts[1].action == c.require("E"));
    CHECK(ts[1].feedback == 1);
    CHECK(ts[1].reward == 1.0);
  }
  SUBCASE("length exactly N+1 yields one transition") {
    CHECK(build_transitions(s, 4, rewards).size() == 1);
  }
  SUBCASE("length N yields none") { CHECK(build_transitions(s, 5, rewards).empty()); }
}

TEST_CASE("next_state drops the oldest pair and appends the action") {
  const ItemCatalog c = tiny_catalog({"A", "B", "C", "D"}, 2);
  State s{{{c.require("A"), 1}, {c.require("B"), 0}, {c.require("C"), 1}}};
  const State original = s;
  const State next = next_state(s, std::string("D"), 0, c);
  CHECK(next.steps ==
        std::vector<StepRecord>{{c.require("B"), 0}, {c.require("C"), 1}, {c.require("D"), 0}});
  CHECK(s == original);  // value semantics
  CHECK_THROWS_AS(next_state(s, std::string("Z"), 0, c), DataError);

  SUBCASE("N applications replace the whole window") {
    State rolled = s;
    for (int i = 0; i < 3; ++i) rolled = next_state(rolled, c.require("D"), 1, c);
    for (const StepRecord& step : rolled.steps) {
      CHECK(step.item == c.require("D"));
      CHECK(step.feedback == 1);
    }
    CHECK(rolled.size() == 3);
  }
}

TEST_CASE("consecutive dataset transitions satisfy the transition rule") {
  const synth::SynthConfig config{.items = 40, .sessions = 25, .session_length = 9,
                                  .embed_dim = 4};
  const synth::SynthWorld world = synth_world(config, 11);
  Corpus corpus{world.catalog, world.sessions, 2, 1, {}};
  const Dataset d = build_dataset(corpus, 4, RewardMap::defaults(2));

  REQUIRE(!d.transitions.empty());
  for (std::size_t i = 0; i + 1 < d.transitions.size(); ++i) {
    if (d.session_of[i] != d.session_of[i + 1]) continue;
    const Transition& a = d.transitions[i];
    const Transition& b = d.transitions[i + 1];
    CHECK(b.state == next_state(a.state, a.action, a.feedback, d.catalog));
  }
  for (const Transition& t : d.transitions) CHECK(t.state.size() == 4);
}

TEST_CASE("train/test split takes exactly the last tuple per session") {
  const synth::SynthConfig config{.items = 30, .sessions = 12, .session_length = 7,
                                  .embed_dim = 3};
  const synth::SynthWorld world = synth_world(config, 3);
  Corpus corpus{world.catalog, world.sessions, 2, 1, {}};
  const Dataset d = build_dataset(corpus, 5, RewardMap::defaults(2));

  const auto train = d.train_indices();
  const auto test = d.test_indices();
  CHECK(train.size() + test.size() == d.transitions.size());
  CHECK(test.size() == d.sessions.size());
  // Temporal order: the test transition is the last one of its session.
  std::set<std::size_t> test_sessions;
  for (const std::size_t i : test) {
    CHECK(test_sessions.insert(d.session_of[i]).second);
    for (const std::size_t j : train) {
      if (d.session_of[j] == d.session_of[i]) CHECK(j < i);
    }
  }
  // Single-transition sessions: session_length 7, N=6 -> 1 transition each.
  const Dataset d1 = build_dataset(Corpus{world.catalog, world.sessions, 2, 1, {}}, 6,
                                   RewardMap::defaults(2));
  CHECK(d1.train_indices().empty());
  CHECK(d1.test_indices().size() == d1.sessions.size());
}

TEST_CASE("upsample_positive") {
  const ItemCatalog c = tiny_catalog({"A", "B"}, 2);
  const auto make = [&](int positives, int negatives) {
    std::vector<Transition> ts;
    for (int i = 0; i < positives + negatives; ++i) {
      Transition t;
      t.state.steps = {{c.require("A"), 0}};
      t.action = c.require("B");
      t.feedback = i < positives ? 1 : 0;
      t.reward = t.feedback;
      ts.push_back(t);
    }
    return ts;
  };

  SUBCASE("already balanced input is unchanged") {
    const auto ts = make(5, 5);
    CHECK(upsample_positive(ts, 0.5, 1).size() == 10);
  }
  SUBCASE("1 positive and 9 negatives at target 0.5 add 8 duplicates") {
    const auto out = upsample_positive(make(1, 9), 0.5, 1);
    CHECK(out.size() == 18);
    std::size_t pos = 0;
    for (const auto& t : out) pos += t.feedback != 0;
    CHECK(pos == 9);
  }
  SUBCASE("zero target is the identity") {
    CHECK(upsample_positive(make(0, 4), 0.0, 1).size() == 4);
  }
  SUBCASE("no positives with positive target is unsatisfiable") {
    CHECK_THROWS_AS(upsample_positive(make(0, 4), 0.25, 1), ContractError);
  }
  SUBCASE("originals are retained unchanged, duplicates are copies") {
    const auto ts = make(2, 8);
    const auto out = upsample_positive(ts, 0.5, 99);
    REQUIRE(out.size() >= ts.size());
    for (std::size_t i = 0; i < ts.size(); ++i) {
      CHECK(out[i].state == ts[i].state);
      CHECK(out[i].action == ts[i].action);
      CHECK(out[i].feedback == ts[i].feedback);
    }
    for (std::size_t i = ts.size(); i < out.size(); ++i) CHECK(out[i].feedback != 0);
    // Deterministic under the seed.
    const auto again = upsample_positive(ts, 0.5, 99);
    REQUIRE(again.size() == out.size());
    for (std::size_t i = 0; i < out.size(); ++i) CHECK(again[i].action == out[i].action);
  }
}

TEST_CASE("embedding and log files round-trip exactly") {
  const synth::SynthConfig config{.items = 17, .sessions = 5, .session_length = 6,
                                  .embed_dim = 3};
  const synth::SynthWorld world = synth_world(config, 21);

  const std::string emb_path = temp_path("usersim_test_emb.txt");
  const std::string log_path = temp_path("usersim_test_logs.txt");
  write_embeddings_file(emb_path, world.catalog);
  write_logs_file(log_path, world.sessions, world.catalog);

  const ItemCatalog catalog2 = read_embeddings_file(emb_path);
  CHECK(catalog2.ids() == world.catalog.ids());
  CHECK(catalog2.embeddings().raw() == world.catalog.embeddings().raw());

  const auto sessions2 = read_logs_file(log_path, catalog2, 2);
  REQUIRE(sessions2.size() == world.sessions.size());
  for (std::size_t i = 0; i < sessions2.size(); ++i) {
    CHECK(sessions2[i].id == world.sessions[i].id);
    CHECK(sessions2[i].steps == world.sessions[i].steps);
  }
  std::remove(emb_path.c_str());
  std::remove(log_path.c_str());
}

TEST_CASE("log parsing errors carry line numbers and offenders") {
  const ItemCatalog c = tiny_catalog({"A", "B"}, 2);
  SUBCASE("malformed line") {
    std::istringstream in("s1\tA\t1\ns1\tB\n");
    std::size_t line_no = 0;
    CHECK_THROWS_WITH_AS(read_logs(in, c, 2, line_no),
                         "line 2: expected session_id<TAB>item_id<TAB>feedback, got 2 fields",
                         ParseError);
  }
  SUBCASE("bad feedback class") {
    std::istringstream in("s1\tA\t3\n");
    std::size_t line_no = 0;
    CHECK_THROWS_AS(read_logs(in, c, 2, line_no), ParseError);
  }
  SUBCASE("unknown items are listed") {
    std::istringstream in("s1\tA\t1\ns1\tZZ\t0\ns2\tQQ\t0\n");
    std::size_t line_no = 0;
    CHECK_THROWS_WITH_AS(read_logs(in, c, 2, line_no),
                         "logs reference 2 item id(s) missing from the embeddings: QQ, ZZ",
                         DataError);
  }
  SUBCASE("session blocks must not repeat") {
    std::istringstream in("s1\tA\t1\ns2\tB\t0\ns1\tA\t0\n");
    std::size_t line_no = 0;
    CHECK_THROWS_AS(read_logs(in, c, 2, line_no), DataError);
  }
  SUBCASE("embedding header is mandatory") {
    std::istringstream in("A 0.5 0.5\n");
    std::size_t line_no = 0;
    CHECK_THROWS_AS(read_embeddings(in, line_no), ParseError);
  }
}

TEST_CASE("min-count filtering") {
  const ItemCatalog c = tiny_catalog({"A", "B", "C", "X"}, 2);
  std::vector<Session> sessions = {
      session_of(c, "s1", {{"A", 1}, {"B", 0}, {"X", 1}, {"C", 0}, {"A", 1}}),
      session_of(c, "s2", {{"B", 1}, {"C", 0}, {"B", 0}, {"C", 1}, {"A", 0}}),
  };

  SUBCASE("no removals when every item is frequent enough") {
    Corpus corpus{c, sessions, 2, 1, {}};
    const Corpus out = apply_min_count(std::move(corpus), 1);
    CHECK(out.stats.removed_items == 0);
    CHECK(out.catalog.size() == 4);
    CHECK(out.sessions[0].steps.size() == 5);
  }
  SUBCASE("rare item is removed and its session shrinks to N+1") {
    Corpus corpus{c, sessions, 2, 1, {}};
    const Corpus out = apply_min_count(std::move(corpus), 2);
    CHECK(out.stats.removed_items == 1);  // X
    CHECK(out.stats.removed_pairs == 1);
    CHECK(out.catalog.find("X") == -1);
    CHECK(out.catalog.size() == 3);
    REQUIRE(out.sessions.size() == 2);
    CHECK(out.sessions[0].steps.size() == 4);  // N+1 for N=3
    const Dataset d = build_dataset(out, 3, RewardMap::defaults(2));
    CHECK(d.stats.dropped_short_sessions == 0);
    // Session s1 survives with exactly one transition.
    std::size_t s1_count = 0;
    for (std::size_t i = 0; i < d.transitions.size(); ++i) s1_count += d.session_of[i] == 0;
    CHECK(s1_count == 1);
  }
  SUBCASE("all sessions too short leaves an empty dataset with a diagnostic") {
    Corpus corpus{c, sessions, 2, 1, {}};
    const Dataset d = build_dataset(std::move(corpus), 5, RewardMap::defaults(2));
    CHECK(d.transitions.empty());
    CHECK(d.sessions.empty());
    CHECK(d.stats.dropped_short_sessions == 2);
  }
}

TEST_CASE("ingestion is idempotent on an already-filtered corpus") {
  const synth::SynthConfig config{.items = 60, .sessions = 40, .session_length = 8,
                                  .embed_dim = 4};
  const synth::SynthWorld world = synth_world(config, 5);
  const std::string emb1 = temp_path("usersim_idem_emb1.txt");
  const std::string log1 = temp_path("usersim_idem_log1.txt");
  write_embeddings_file(emb1, world.catalog);
  write_logs_file(log1, world.sessions, world.catalog);

  const Dataset first = ingest_logs(log1, emb1, 3, 4, 2, RewardMap::defaults(2));
  // Re-emit the filtered corpus and ingest again with the same min_count.
  const std::string emb2 = temp_path("usersim_idem_emb2.txt");
  const std::string log2 = temp_path("usersim_idem_log2.txt");
  write_embeddings_file(emb2, first.catalog);
  write_logs_file(log2, first.sessions, first.catalog);
  const Dataset second = ingest_logs(log2, emb2, 3, 4, 2, RewardMap::defaults(2));

  CHECK(second.catalog.ids() == first.catalog.ids());
  CHECK(second.catalog.embeddings().raw() == first.catalog.embeddings().raw());
  CHECK(second.transitions.size() == first.transitions.size());
  CHECK(second.stats.removed_items == 0);
  for (const std::string& p : {emb1, log1, emb2, log2}) std::remove(p.c_str());
}

TEST_CASE("corpus bundle save/load round-trips") {
  const synth::SynthConfig config{.items = 25, .sessions = 10, .session_length = 6,
                                  .embed_dim = 3};
  const synth::SynthWorld world = synth_world(config, 8);
  Corpus corpus{world.catalog, world.sessions, 2, 4, {}};
  const std::string path = temp_path("usersim_corpus.txt");
  save_corpus(path, corpus);
  const Corpus loaded = load_corpus(path);
  CHECK(loaded.min_count == 4);
  CHECK(loaded.num_classes == 2);
  CHECK(loaded.catalog.ids() == corpus.catalog.ids());
  CHECK(loaded.catalog.embeddings().raw() == corpus.catalog.embeddings().raw());
  REQUIRE(loaded.sessions.size() == corpus.sessions.size());
  for (std::size_t i = 0; i < loaded.sessions.size(); ++i) {
    CHECK(loaded.sessions[i].steps == corpus.sessions[i].steps);
  }
  std::remove(path.c_str());
}

TEST_CASE("synthetic world determinism and noiseless limit") {
  const synth::SynthConfig config{.items = 30, .sessions = 15, .session_length = 5,
                                  .embed_dim = 4};
  SUBCASE("same config and seed give bit-identical corpora") {
    const synth::SynthWorld a = synth_world(config, 123);
    const synth::SynthWorld b = synth_world(config, 123);
    CHECK(a.catalog.embeddings().raw() == b.catalog.embeddings().raw());
    REQUIRE(a.sessions.size() == b.sessions.size());
    for (std::size_t i = 0; i < a.sessions.size(); ++i) {
      CHECK(a.sessions[i].steps == b.sessions[i].steps);
    }
    const synth::SynthWorld c2 = synth_world(config, 124);
    bool all_equal = true;
    for (std::size_t i = 0; i < a.sessions.size(); ++i) {
      all_equal = all_equal && a.sessions[i].steps == c2.sessions[i].steps;
    }
    CHECK_FALSE(all_equal);
  }
  SUBCASE("noiseless threshold zero makes feedback the score sign") {
    synth::SynthConfig quiet = config;
    quiet.noise_sd = 0.0;
    const synth::SynthWorld world = synth_world(quiet, 9);
    for (std::size_t s = 0; s < world.sessions.size(); ++s) {
      const auto& u = world.oracle.preference(s);
      for (const StepRecord& step : world.sessions[s].steps) {
        double score = 0.0;
        for (std::size_t d = 0; d < u.size(); ++d) {
          score += u[d] * world.catalog.embedding(step.item)[d];
        }
        CHECK(step.feedback == (score > 0.0 ? 1 : 0));
        CHECK(world.oracle.positive_probability(s, step.item) == (score > 0.0 ? 1.0 : 0.0));
      }
    }
  }
  SUBCASE("config validation") {
    synth::SynthConfig bad = config;
    bad.items = 0;
    CHECK_THROWS_AS(synth_world(bad, 1), ConfigError);
  }
}
