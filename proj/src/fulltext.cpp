#include "heta/fulltext.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

#include <json.hpp>
#ifdef _OPENMP
#include <omp.h>
#endif

namespace heta::fulltext {
namespace {

const std::set<std::string>& stopword_set() {
  static const std::set<std::string> kStopwords = {
      "a", "an", "and", "are", "as", "at", "be", "by", "for", "from",
      "in", "is", "it", "of", "on", "or", "that", "the", "to", "with"};
  return kStopwords;
}

// Crude suffix stripper; enough to conflate plural/gerund forms.
std::string stem_token(const std::string& token) {
  auto ends_with = [&](const char* suffix) {
    std::string_view s(suffix);
    return token.size() > s.size() + 2 && token.compare(token.size() - s.size(), s.size(), s) == 0;
  };
  if (ends_with("ing")) return token.substr(0, token.size() - 3);
  if (ends_with("ies")) return token.substr(0, token.size() - 3) + "y";
  if (ends_with("es")) return token.substr(0, token.size() - 2);
  if (ends_with("s")) return token.substr(0, token.size() - 1);
  return token;
}

std::vector<std::string> apply_options(std::vector<std::string> tokens, const IndexOptions& opts) {
  if (opts.remove_stopwords) {
    std::vector<std::string> kept;
    kept.reserve(tokens.size());
    for (auto& t : tokens)
      if (!stopword_set().count(t)) kept.push_back(std::move(t));
    tokens = std::move(kept);
  }
  if (opts.stem) {
    for (auto& t : tokens) t = stem_token(t);
  }
  return tokens;
}

}  // namespace

std::vector<std::string> InvertedIndex::analyze(const std::string& text) const {
  return apply_options(tokenize(text), options_);
}

InvertedIndex InvertedIndex::build(const std::vector<ingest::Chunk>& chunks,
                                   const IndexOptions& opts) {
  InvertedIndex index;
  index.options_ = opts;
  std::map<std::string, std::map<std::string, std::int64_t>> term_to_tf;
  for (const auto& chunk : chunks) {
    if (index.doc_lengths_.count(chunk.chunk_id))
      raise(ErrorKind::DuplicateId, "chunk indexed twice: " + chunk.chunk_id);
    auto tokens = apply_options(tokenize(chunk.text), opts);
    index.doc_lengths_[chunk.chunk_id] = static_cast<std::int64_t>(tokens.size());
    for (const auto& token : tokens) ++term_to_tf[token][chunk.chunk_id];
  }
  for (auto& [term, tf_map] : term_to_tf) {
    auto& list = index.postings_[term];
    list.reserve(tf_map.size());
    for (auto& [chunk_id, tf] : tf_map) list.push_back(Posting{chunk_id, tf});
  }
  std::int64_t total = 0;
  for (const auto& [id, len] : index.doc_lengths_) total += len;
  index.avgdl_ =
      index.doc_lengths_.empty() ? 0.0 : static_cast<double>(total) / index.doc_lengths_.size();
  return index;
}

double InvertedIndex::score_candidate(const Bm25Params& params,
                                      const std::vector<std::string>& terms,
                                      const std::string& chunk_id) const {
  const double n_docs = static_cast<double>(doc_lengths_.size());
  const double dl = static_cast<double>(doc_lengths_.at(chunk_id));
  double score = 0.0;
  for (const auto& term : terms) {
    auto it = postings_.find(term);
    if (it == postings_.end()) continue;
    const auto& list = it->second;
    auto pit = std::lower_bound(list.begin(), list.end(), chunk_id,
                                [](const Posting& p, const std::string& id) { return p.chunk_id < id; });
    if (pit == list.end() || pit->chunk_id != chunk_id) continue;
    const double df = static_cast<double>(list.size());
    const double idf = std::log((n_docs - df + 0.5) / (df + 0.5) + 1.0);
    const double tf = static_cast<double>(pit->tf);
    const double denom = tf + params.k1 * (1.0 - params.b + params.b * dl / avgdl_);
    score += idf * (tf * (params.k1 + 1.0)) / denom;
  }
  return score;
}

double InvertedIndex::bm25_score(const Bm25Params& params,
                                 const std::vector<std::string>& query_terms,
                                 const std::string& chunk_id) const {
  if (!doc_lengths_.count(chunk_id))
    raise(ErrorKind::UnknownChunk, "not indexed: " + chunk_id);
  // Set semantics: sorted unique terms so the summation order is fixed.
  std::vector<std::string> terms(query_terms);
  std::sort(terms.begin(), terms.end());
  terms.erase(std::unique(terms.begin(), terms.end()), terms.end());
  return score_candidate(params, terms, chunk_id);
}

std::vector<ScoredHit> InvertedIndex::search_impl(const Bm25Params& params,
                                                  const std::string& query, int k,
                                                  bool parallel) const {
  if (k < 0) raise(ErrorKind::MalformedInput, "k must be non-negative");
  auto terms = analyze(query);
  std::sort(terms.begin(), terms.end());
  terms.erase(std::unique(terms.begin(), terms.end()), terms.end());
  if (terms.empty()) return {};

  std::set<std::string> candidate_set;
  for (const auto& term : terms) {
    auto it = postings_.find(term);
    if (it == postings_.end()) continue;
    for (const auto& posting : it->second) candidate_set.insert(posting.chunk_id);
  }
  std::vector<std::string> candidates(candidate_set.begin(), candidate_set.end());
  std::vector<double> scores(candidates.size(), 0.0);

  const auto n = static_cast<std::int64_t>(candidates.size());
  if (parallel) {
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < n; ++i) scores[i] = score_candidate(params, terms, candidates[i]);
  } else {
    for (std::int64_t i = 0; i < n; ++i) scores[i] = score_candidate(params, terms, candidates[i]);
  }

  std::vector<std::size_t> order(candidates.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return candidates[a] < candidates[b];
  });
  if (order.size() > static_cast<std::size_t>(k)) order.resize(static_cast<std::size_t>(k));

  std::vector<ScoredHit> hits;
  hits.reserve(order.size());
  for (auto idx : order) hits.push_back(ScoredHit{candidates[idx], scores[idx]});
  return hits;
}

std::vector<ScoredHit> InvertedIndex::search_keyword(const Bm25Params& params,
                                                     const std::string& query, int k) const {
  return search_impl(params, query, k, true);
}

std::vector<ScoredHit> InvertedIndex::search_keyword_serial(const Bm25Params& params,
                                                            const std::string& query,
                                                            int k) const {
  return search_impl(params, query, k, false);
}

void InvertedIndex::snapshot_file(const std::string& path) const {
  nlohmann::json j;
  j["options"] = {{"remove_stopwords", options_.remove_stopwords}, {"stem", options_.stem}};
  nlohmann::json docs = nlohmann::json::object();
  for (const auto& [id, len] : doc_lengths_) docs[id] = len;
  j["doc_lengths"] = std::move(docs);
  nlohmann::json terms = nlohmann::json::object();
  for (const auto& [term, list] : postings_) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& posting : list) arr.push_back({{"chunk_id", posting.chunk_id}, {"tf", posting.tf}});
    terms[term] = std::move(arr);
  }
  j["postings"] = std::move(terms);
  write_file(path, j.dump(2) + "\n");
}

InvertedIndex InvertedIndex::restore_file(const std::string& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::exception& e) {
    raise(ErrorKind::CorruptSnapshot, std::string("fulltext snapshot unreadable: ") + e.what());
  }
  InvertedIndex index;
  try {
    index.options_.remove_stopwords = j.at("options").at("remove_stopwords").get<bool>();
    index.options_.stem = j.at("options").at("stem").get<bool>();
    for (const auto& [id, len] : j.at("doc_lengths").items())
      index.doc_lengths_[id] = len.get<std::int64_t>();
    for (const auto& [term, arr] : j.at("postings").items()) {
      auto& list = index.postings_[term];
      for (const auto& entry : arr)
        list.push_back(Posting{entry.at("chunk_id").get<std::string>(),
                               entry.at("tf").get<std::int64_t>()});
      for (std::size_t i = 1; i < list.size(); ++i)
        if (!(list[i - 1].chunk_id < list[i].chunk_id))
          raise(ErrorKind::CorruptSnapshot, "postings out of order for term: " + term);
      for (const auto& posting : list)
        if (!index.doc_lengths_.count(posting.chunk_id))
          raise(ErrorKind::CorruptSnapshot, "posting references unknown chunk: " + posting.chunk_id);
    }
  } catch (const nlohmann::json::exception& e) {
    raise(ErrorKind::CorruptSnapshot, std::string("fulltext snapshot malformed: ") + e.what());
  }
  std::int64_t total = 0;
  for (const auto& [id, len] : index.doc_lengths_) total += len;
  index.avgdl_ =
      index.doc_lengths_.empty() ? 0.0 : static_cast<double>(total) / index.doc_lengths_.size();
  return index;
}

}  // namespace heta::fulltext
