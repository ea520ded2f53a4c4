#pragma once

// Dense embeddings. The built-in deterministic embedder hashes tokens into
// signed buckets (64-bit FNV-1a) and L2-normalizes, so every test can
// recompute vectors exactly. A remote provider speaks the embeddings HTTP
// format through the gateway's transport.

#include <string>
#include <vector>

namespace heta::embed {

struct EmbeddingVector {
  std::vector<float> values;

  int dim() const { return static_cast<int>(values.size()); }
  bool is_zero() const;
};

enum class EmbedderKind { deterministic_hash, remote_http };

struct EmbedderSpec {
  EmbedderKind kind = EmbedderKind::deterministic_hash;
  int dim = 256;
  std::string endpoint;    // required for remote_http
  std::string model_name;
  int max_inflight = 4;    // bound on concurrent remote requests
  int timeout_ms = 30000;
  int max_retries = 2;
};

void validate(const EmbedderSpec& spec);  // MalformedInput on bad spec

class Embedder {
public:
  explicit Embedder(EmbedderSpec spec);

  EmbeddingVector embed_text(const std::string& text) const;

  // Batch kernel, parallel over texts. Element i equals embed_text(texts[i]).
  std::vector<EmbeddingVector> embed_batch(const std::vector<std::string>& texts) const;
  // Serial reference kept for tests and the kernel benchmark.
  std::vector<EmbeddingVector> embed_batch_serial(const std::vector<std::string>& texts) const;

  const EmbedderSpec& spec() const { return spec_; }

private:
  EmbeddingVector embed_hash(const std::string& text) const;
  EmbeddingVector embed_remote(const std::string& text) const;

  EmbedderSpec spec_;
};

// Dot product over unit (or zero-sentinel) vectors, clamped to [-1, 1].
// Cosine with a zero vector is 0. DimensionMismatch when dims differ.
double cosine_similarity(const EmbeddingVector& a, const EmbeddingVector& b);

}  // namespace heta::embed
