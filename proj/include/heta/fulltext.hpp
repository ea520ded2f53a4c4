#pragma once

// Inverted index with Okapi BM25 ranking. idf uses the +1 smoothing variant
// so scores never go negative; repeated query terms count once.

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "heta/common.hpp"
#include "heta/ingest.hpp"

namespace heta::fulltext {

struct Bm25Params {
  double k1 = 1.2;
  double b = 0.75;
};

struct IndexOptions {
  bool remove_stopwords = false;
  bool stem = false;
};

struct Posting {
  std::string chunk_id;
  std::int64_t tf = 0;
};

class InvertedIndex {
public:
  InvertedIndex() = default;

  static InvertedIndex build(const std::vector<ingest::Chunk>& chunks,
                             const IndexOptions& opts = {});  // DuplicateId

  // Sum over unique query terms of idf(t) * tf(k1+1)/(tf + k1(1-b+b*dl/avgdl)),
  // idf(t) = ln((N - df + 0.5)/(df + 0.5) + 1). UnknownChunk when unindexed.
  double bm25_score(const Bm25Params& params, const std::vector<std::string>& query_terms,
                    const std::string& chunk_id) const;

  // Candidates are chunks containing at least one query term; parallel scoring.
  std::vector<ScoredHit> search_keyword(const Bm25Params& params, const std::string& query,
                                        int k) const;
  std::vector<ScoredHit> search_keyword_serial(const Bm25Params& params, const std::string& query,
                                               int k) const;

  std::int64_t doc_count() const { return static_cast<std::int64_t>(doc_lengths_.size()); }
  double avgdl() const { return avgdl_; }
  const std::map<std::string, std::vector<Posting>>& postings() const { return postings_; }
  const std::map<std::string, std::int64_t>& doc_lengths() const { return doc_lengths_; }

  // Applies the index's configured stopword/stemming options to raw text.
  std::vector<std::string> analyze(const std::string& text) const;

  void snapshot_file(const std::string& path) const;           // canonical JSON
  static InvertedIndex restore_file(const std::string& path);  // CorruptSnapshot

private:
  std::vector<ScoredHit> search_impl(const Bm25Params& params, const std::string& query, int k,
                                     bool parallel) const;
  double score_candidate(const Bm25Params& params, const std::vector<std::string>& terms,
                         const std::string& chunk_id) const;

  std::map<std::string, std::vector<Posting>> postings_;
  std::map<std::string, std::int64_t> doc_lengths_;
  double avgdl_ = 0.0;
  IndexOptions options_;
};

}  // namespace heta::fulltext
