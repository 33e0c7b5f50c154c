#include "usersim/data.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace usersim::data {

namespace {

bool has_whitespace(const std::string& s) {
  return std::any_of(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c); });
}

void strip_cr(std::string& line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
}

double parse_double(std::string_view text, std::size_t line_no) {
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    throw ParseError("line " + std::to_string(line_no) + ": bad number '" + std::string(text) +
                     "'");
  }
  return value;
}

long parse_int(std::string_view text, std::size_t line_no) {
  long value = 0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    throw ParseError("line " + std::to_string(line_no) + ": bad integer '" + std::string(text) +
                     "'");
  }
  return value;
}

std::vector<std::string_view> split(std::string_view line, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(sep, start);
    if (pos == std::string_view::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::ifstream open_input(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  return in;
}

std::ofstream open_output(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  return out;
}

}  // namespace

ItemCatalog::ItemCatalog(std::size_t dim, std::vector<std::string> ids, nn::Tensor embeddings)
    : dim_(dim), ids_(std::move(ids)), embeddings_(std::move(embeddings)) {
  if (dim_ == 0) throw DataError("embedding dimension must be positive");
  if (embeddings_.numel() != ids_.size() * dim_) {
    throw DataError("embedding matrix size does not match id count");
  }
  index_.reserve(ids_.size());
  for (std::size_t i = 0; i < ids_.size(); ++i) {
    const std::string& id = ids_[i];
    if (id.empty() || has_whitespace(id)) throw DataError("bad item id '" + id + "'");
    if (!index_.emplace(id, i).second) throw DataError("duplicate item id '" + id + "'");
  }
  for (std::size_t i = 0; i < embeddings_.numel(); ++i) {
    const double v = embeddings_[i];
    if (!(v > -1.0 && v < 1.0)) {
      throw DataError("embedding component " + format_double(v) + " of item '" +
                      ids_[i / dim_] + "' is outside (-1, +1)");
    }
  }
}

int ItemCatalog::find(const std::string& id) const {
  const auto it = index_.find(id);
  return it == index_.end() ? -1 : static_cast<int>(it->second);
}

std::size_t ItemCatalog::require(const std::string& id) const {
  const int i = find(id);
  if (i < 0) throw DataError("unknown item '" + id + "'");
  return static_cast<std::size_t>(i);
}

std::vector<double> ItemCatalog::embedding_copy(std::size_t index) const {
  const double* row = embedding(index);
  return std::vector<double>(row, row + dim_);
}

std::vector<double> feedback_one_hot(int feedback, int num_classes) {
  if (feedback < 0 || feedback >= num_classes) {
    throw ContractError("feedback class " + std::to_string(feedback) + " outside [0, " +
                        std::to_string(num_classes) + ")");
  }
  std::vector<double> one_hot(static_cast<std::size_t>(num_classes), 0.0);
  one_hot[static_cast<std::size_t>(feedback)] = 1.0;
  return one_hot;
}

RewardMap RewardMap::defaults(int num_classes) {
  RewardMap map;
  map.by_class.assign(static_cast<std::size_t>(num_classes), 1.0);
  map.by_class[0] = 0.0;  // negative feedback earns nothing
  return map;
}

double RewardMap::reward(int feedback) const {
  if (feedback < 0 || static_cast<std::size_t>(feedback) >= by_class.size()) {
    throw ContractError("feedback class " + std::to_string(feedback) + " outside the reward map");
  }
  return by_class[static_cast<std::size_t>(feedback)];
}

std::vector<std::size_t> Dataset::train_indices() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < transitions.size(); ++i) {
    if (!is_test[i]) out.push_back(i);
  }
  return out;
}

std::vector<std::size_t> Dataset::test_indices() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < transitions.size(); ++i) {
    if (is_test[i]) out.push_back(i);
  }
  return out;
}

ItemCatalog read_embeddings(std::istream& in, std::size_t& line_no) {
  std::string line;
  if (!std::getline(in, line)) throw ParseError("embedding data: missing |E| header");
  strip_cr(line);
  ++line_no;
  if (line.rfind("|E|=", 0) != 0) {
    throw ParseError("line " + std::to_string(line_no) + ": expected |E|=<int> header, got '" +
                     line + "'");
  }
  const long dim = parse_int(std::string_view(line).substr(4), line_no);
  if (dim <= 0) throw ParseError("line " + std::to_string(line_no) + ": |E| must be positive");

  std::vector<std::string> ids;
  std::vector<double> values;
  while (std::getline(in, line)) {
    strip_cr(line);
    ++line_no;
    if (line.empty()) continue;
    const auto fields = split(line, ' ');
    if (fields.size() != static_cast<std::size_t>(dim) + 1) {
      throw ParseError("line " + std::to_string(line_no) + ": expected item id plus " +
                       std::to_string(dim) + " values, got " + std::to_string(fields.size()) +
                       " fields");
    }
    ids.emplace_back(fields[0]);
    for (std::size_t i = 1; i < fields.size(); ++i) values.push_back(parse_double(fields[i], line_no));
  }
  if (ids.empty()) throw DataError("embedding data: no items");
  return ItemCatalog(static_cast<std::size_t>(dim), std::move(ids),
                     nn::Tensor({ids.size(), static_cast<std::size_t>(dim)}, std::move(values)));
}

ItemCatalog read_embeddings_file(const std::string& path) {
  std::ifstream in = open_input(path);
  std::size_t line_no = 0;
  try {
    return read_embeddings(in, line_no);
  } catch (const ParseError& e) {
    throw ParseError(path + ": " + e.what());
  } catch (const DataError& e) {
    throw DataError(path + ": " + e.what());
  }
}

void write_embeddings(std::ostream& out, const ItemCatalog& catalog) {
  out << "|E|=" << catalog.dim() << "\n";
  for (std::size_t i = 0; i < catalog.size(); ++i) {
    out << catalog.id(i);
    const double* row = catalog.embedding(i);
    for (std::size_t d = 0; d < catalog.dim(); ++d) out << ' ' << format_double(row[d]);
    out << "\n";
  }
}

void write_embeddings_file(const std::string& path, const ItemCatalog& catalog) {
  std::ofstream out = open_output(path);
  write_embeddings(out, catalog);
}

std::vector<Session> read_logs(std::istream& in, const ItemCatalog& catalog, int num_classes,
                               std::size_t& line_no) {
  std::vector<Session> sessions;
  std::vector<std::string> unknown;  // distinct, in first-seen order
  std::unordered_map<std::string, bool> seen_session;
  std::string line;
  while (std::getline(in, line)) {
    strip_cr(line);
    ++line_no;
    if (line.empty()) continue;
    const auto fields = split(line, '\t');
    if (fields.size() != 3) {
      throw ParseError("line " + std::to_string(line_no) +
                       ": expected session_id<TAB>item_id<TAB>feedback, got " +
                       std::to_string(fields.size()) + " fields");
    }
    const std::string session_id(fields[0]);
    const std::string item_id(fields[1]);
    const long feedback = parse_int(fields[2], line_no);
    if (feedback < 0 || feedback >= num_classes) {
      throw ParseError("line " + std::to_string(line_no) + ": feedback class " +
                       std::to_string(feedback) + " outside [0, " + std::to_string(num_classes) +
                       ")");
    }
    if (sessions.empty() || sessions.back().id != session_id) {
      const auto [it, inserted] = seen_session.emplace(session_id, true);
      if (!inserted) {
        throw DataError("line " + std::to_string(line_no) + ": session '" + session_id +
                        "' appears in more than one block; records must be grouped by session");
      }
      sessions.push_back(Session{session_id, {}});
    }
    const int item = catalog.find(item_id);
    if (item < 0) {
      if (std::find(unknown.begin(), unknown.end(), item_id) == unknown.end()) {
        unknown.push_back(item_id);
      }
      continue;
    }
    sessions.back().steps.push_back(StepRecord{static_cast<std::size_t>(item),
                                               static_cast<int>(feedback)});
  }
  if (!unknown.empty()) {
    std::sort(unknown.begin(), unknown.end());
    std::string list;
    const std::size_t shown = std::min<std::size_t>(unknown.size(), 10);
    for (std::size_t i = 0; i < shown; ++i) {
      if (i) list += ", ";
      list += unknown[i];
    }
    if (unknown.size() > shown) {
      list += ", and " + std::to_string(unknown.size() - shown) + " more";
    }
    throw DataError("logs reference " + std::to_string(unknown.size()) +
                    " item id(s) missing from the embeddings: " + list);
  }
  return sessions;
}

std::vector<Session> read_logs_file(const std::string& path, const ItemCatalog& catalog,
                                    int num_classes) {
  std::ifstream in = open_input(path);
  std::size_t line_no = 0;
  try {
    return read_logs(in, catalog, num_classes, line_no);
  } catch (const ParseError& e) {
    throw ParseError(path + ": " + e.what());
  } catch (const DataError& e) {
    throw DataError(path + ": " + e.what());
  }
}

void write_logs(std::ostream& out, const std::vector<Session>& sessions,
                const ItemCatalog& catalog) {
  for (const Session& session : sessions) {
    for (const StepRecord& step : session.steps) {
      out << session.id << '\t' << catalog.id(step.item) << '\t' << step.feedback << "\n";
    }
  }
}

void write_logs_file(const std::string& path, const std::vector<Session>& sessions,
                     const ItemCatalog& catalog) {
  std::ofstream out = open_output(path);
  write_logs(out, sessions, catalog);
}

void save_corpus(const std::string& path, const Corpus& corpus) {
  std::ofstream out = open_output(path);
  out << "USERSIM-DATASET 1\n";
  out << "min_count=" << corpus.min_count << "\n";
  out << "num_classes=" << corpus.num_classes << "\n";
  out << "[embeddings]\n";
  write_embeddings(out, corpus.catalog);
  out << "[logs]\n";
  write_logs(out, corpus.sessions, corpus.catalog);
}

Corpus load_corpus(const std::string& path) {
  std::ifstream in = open_input(path);
  std::string line;
  if (!std::getline(in, line)) throw ParseError(path + ": empty file");
  strip_cr(line);
  if (line != "USERSIM-DATASET 1") {
    throw DataError(path + ": not a dataset file (bad header '" + line + "')");
  }
  Corpus corpus;
  std::size_t line_no = 1;
  bool in_embeddings = false;
  while (std::getline(in, line)) {
    strip_cr(line);
    ++line_no;
    if (line == "[embeddings]") {
      in_embeddings = true;
      break;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ParseError(path + ": line " + std::to_string(line_no) + ": expected key=value");
    }
    const std::string key = line.substr(0, eq);
    const long value = parse_int(std::string_view(line).substr(eq + 1), line_no);
    if (key == "min_count") {
      corpus.min_count = static_cast<int>(value);
    } else if (key == "num_classes") {
      corpus.num_classes = static_cast<int>(value);
    } else {
      throw ParseError(path + ": line " + std::to_string(line_no) + ": unknown key '" + key + "'");
    }
  }
  if (!in_embeddings) throw ParseError(path + ": missing [embeddings] section");

  // Split the remaining stream at the [logs] marker.
  std::ostringstream embeddings_text, logs_text;
  bool in_logs = false;
  while (std::getline(in, line)) {
    strip_cr(line);
    if (!in_logs && line == "[logs]") {
      in_logs = true;
      continue;
    }
    (in_logs ? logs_text : embeddings_text) << line << "\n";
  }
  if (!in_logs) throw ParseError(path + ": missing [logs] section");

  try {
    std::istringstream emb(embeddings_text.str());
    std::size_t emb_line = 0;
    corpus.catalog = read_embeddings(emb, emb_line);
    std::istringstream logs(logs_text.str());
    std::size_t log_line = 0;
    corpus.sessions = read_logs(logs, corpus.catalog, corpus.num_classes, log_line);
  } catch (const ParseError& e) {
    throw ParseError(path + ": " + e.what());
  } catch (const DataError& e) {
    throw DataError(path + ": " + e.what());
  }
  return corpus;
}

Corpus apply_min_count(Corpus corpus, int min_count) {
  if (min_count < 1) throw ContractError("min_count must be >= 1");
  corpus.min_count = min_count;

  std::vector<std::size_t> freq(corpus.catalog.size(), 0);
  for (const Session& session : corpus.sessions) {
    for (const StepRecord& step : session.steps) ++freq[step.item];
  }

  std::vector<int> remap(corpus.catalog.size(), -1);
  std::vector<std::string> kept_ids;
  std::vector<double> kept_values;
  for (std::size_t i = 0; i < corpus.catalog.size(); ++i) {
    if (freq[i] >= static_cast<std::size_t>(min_count)) {
      remap[i] = static_cast<int>(kept_ids.size());
      kept_ids.push_back(corpus.catalog.id(i));
      const double* row = corpus.catalog.embedding(i);
      kept_values.insert(kept_values.end(), row, row + corpus.catalog.dim());
    } else {
      ++corpus.stats.removed_items;
    }
  }
  if (corpus.stats.removed_items == 0) return corpus;  // nothing to rewrite
  if (kept_ids.empty()) throw DataError("min-count filter removed every item");

  const std::size_t dim = corpus.catalog.dim();
  const std::size_t kept_count = kept_ids.size();
  corpus.catalog = ItemCatalog(dim, std::move(kept_ids),
                               nn::Tensor({kept_count, dim}, std::move(kept_values)));

  std::vector<Session> kept_sessions;
  for (Session& session : corpus.sessions) {
    Session filtered{session.id, {}};
    for (const StepRecord& step : session.steps) {
      if (remap[step.item] >= 0) {
        filtered.steps.push_back(StepRecord{static_cast<std::size_t>(remap[step.item]),
                                            step.feedback});
      } else {
        ++corpus.stats.removed_pairs;
      }
    }
    if (!filtered.steps.empty()) kept_sessions.push_back(std::move(filtered));
  }
  corpus.sessions = std::move(kept_sessions);
  return corpus;
}

std::vector<Transition> build_transitions(const Session& session, int window,
                                          const RewardMap& rewards) {
  if (window < 1) throw ContractError("window length N must be >= 1");
  std::vector<Transition> out;
  const std::size_t n = static_cast<std::size_t>(window);
  if (session.steps.size() <= n) return out;
  for (std::size_t t = 0; t + n < session.steps.size(); ++t) {
    Transition tr;
    tr.state.steps.assign(session.steps.begin() + static_cast<std::ptrdiff_t>(t),
                          session.steps.begin() + static_cast<std::ptrdiff_t>(t + n));
    const StepRecord& next = session.steps[t + n];
    tr.action = next.item;
    tr.feedback = next.feedback;
    tr.reward = rewards.reward(next.feedback);
    out.push_back(std::move(tr));
  }
  return out;
}

Dataset build_dataset(Corpus corpus, int window, RewardMap rewards) {
  if (static_cast<int>(rewards.by_class.size()) != corpus.num_classes) {
    throw ConfigError("reward map has " + std::to_string(rewards.by_class.size()) +
                      " classes, dataset has " + std::to_string(corpus.num_classes));
  }
  Dataset d;
  d.catalog = std::move(corpus.catalog);
  d.num_classes = corpus.num_classes;
  d.window = window;
  d.rewards = std::move(rewards);
  d.stats = corpus.stats;

  for (Session& session : corpus.sessions) {
    std::vector<Transition> transitions = build_transitions(session, window, d.rewards);
    if (transitions.empty()) {
      ++d.stats.dropped_short_sessions;
      continue;
    }
    const std::size_t session_index = d.sessions.size();
    d.sessions.push_back(std::move(session));
    for (std::size_t i = 0; i < transitions.size(); ++i) {
      d.transitions.push_back(std::move(transitions[i]));
      d.session_of.push_back(session_index);
      d.is_test.push_back(i + 1 == transitions.size() ? 1 : 0);
    }
  }
  d.stats.kept_sessions = d.sessions.size();
  return d;
}

Dataset ingest_logs(const std::string& log_path, const std::string& embedding_path, int min_count,
                    int window, int num_classes, RewardMap rewards) {
  Corpus corpus;
  corpus.num_classes = num_classes;
  corpus.catalog = read_embeddings_file(embedding_path);
  corpus.sessions = read_logs_file(log_path, corpus.catalog, num_classes);
  corpus = apply_min_count(std::move(corpus), min_count);
  return build_dataset(std::move(corpus), window, std::move(rewards));
}

State next_state(const State& s, std::size_t action, int feedback, const ItemCatalog& catalog) {
  if (s.steps.empty()) throw ContractError("next_state: empty state");
  if (action >= catalog.size()) {
    throw DataError("unknown item index " + std::to_string(action));
  }
  State out;
  out.steps.assign(s.steps.begin() + 1, s.steps.end());
  out.steps.push_back(StepRecord{action, feedback});
  return out;
}

State next_state(const State& s, const std::string& action_id, int feedback,
                 const ItemCatalog& catalog) {
  return next_state(s, catalog.require(action_id), feedback, catalog);
}

std::vector<Transition> upsample_positive(const std::vector<Transition>& transitions,
                                          double target_ratio, std::uint64_t seed) {
  if (target_ratio < 0.0 || target_ratio > 1.0) {
    throw ContractError("target_ratio must lie in [0, 1]");
  }
  std::vector<Transition> out = transitions;
  if (target_ratio == 0.0 || transitions.empty()) return out;

  std::vector<std::size_t> positives;
  for (std::size_t i = 0; i < transitions.size(); ++i) {
    if (transitions[i].feedback != 0) positives.push_back(i);
  }
  std::size_t pos = positives.size();
  std::size_t total = transitions.size();
  if (static_cast<double>(pos) >= target_ratio * static_cast<double>(total)) return out;
  if (positives.empty()) {
    throw ContractError("upsample_positive: no positive transitions to duplicate");
  }
  if (target_ratio >= 1.0) {
    throw ContractError("upsample_positive: target ratio 1 is unreachable by duplication");
  }
  Rng rng(seed);
  while (static_cast<double>(pos) < target_ratio * static_cast<double>(total)) {
    out.push_back(transitions[positives[rng.uniform_index(positives.size())]]);
    ++pos;
    ++total;
  }
  return out;
}

}  // namespace usersim::data
