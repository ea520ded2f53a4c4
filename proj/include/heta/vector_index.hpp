#pragma once

// Embedded dense-vector store. Search is an exact flat scan: the parallel
// kernel scores records with OpenMP, the serial kernel is the reference the
// tests and the benchmark compare against. Both produce identical rankings.

#include <cstdint>
#include <map>
#include <memory>
#include <shared_mutex>
#include <string>
#include <vector>

#include "heta/common.hpp"
#include "heta/embed.hpp"

namespace heta::vector_index {

struct VectorRecord {
  std::string chunk_id;
  embed::EmbeddingVector vector;
  std::map<std::string, std::string> payload;  // doc_id, modality at minimum
};

struct CollectionMeta {
  std::string name;
  int dim = 0;
  std::string metric = "cosine";
  std::int64_t count = 0;
};

// Equality predicate over payload entries; every listed pair must match.
using PayloadFilter = std::map<std::string, std::string>;

class VectorCollection {
public:
  VectorCollection(std::string name, int dim);

  CollectionMeta meta() const;
  std::int64_t insert(std::vector<VectorRecord> records);  // DimensionMismatch, DuplicateId

  // Top-k by cosine descending, ties by chunk_id ascending. Exact.
  std::vector<ScoredHit> search_topk(const embed::EmbeddingVector& query, int k,
                                     const PayloadFilter* filter = nullptr) const;
  std::vector<ScoredHit> search_topk_serial(const embed::EmbeddingVector& query, int k,
                                            const PayloadFilter* filter = nullptr) const;

  void snapshot(const std::string& dir) const;
  static std::unique_ptr<VectorCollection> restore(const std::string& dir);  // CorruptSnapshot

  const std::vector<VectorRecord>& records() const { return records_; }

private:
  std::vector<ScoredHit> scan(const embed::EmbeddingVector& query, int k,
                              const PayloadFilter* filter, bool parallel) const;

  std::string name_;
  int dim_;
  std::vector<VectorRecord> records_;
  std::map<std::string, std::size_t> by_id_;
  mutable std::shared_mutex mutex_;
};

// Named collections, matching the create/insert/search surface.
class VectorStore {
public:
  CollectionMeta create_collection(const std::string& name, int dim);  // AlreadyExists
  VectorCollection& collection(const std::string& name);               // UnknownCollection
  const VectorCollection& collection(const std::string& name) const;
  bool has_collection(const std::string& name) const;

private:
  std::map<std::string, std::unique_ptr<VectorCollection>> collections_;
};

}  // namespace heta::vector_index
