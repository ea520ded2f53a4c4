#include "heta/embed.hpp"

#include <algorithm>
#include <cmath>
#include <exception>

#ifdef _OPENMP
#include <omp.h>
#endif

#include <json.hpp>

#include "heta/common.hpp"
#include "heta/gateway.hpp"

namespace heta::embed {

bool EmbeddingVector::is_zero() const {
  return std::all_of(values.begin(), values.end(), [](float v) { return v == 0.0f; });
}

void validate(const EmbedderSpec& spec) {
  if (spec.dim <= 0) raise(ErrorKind::MalformedInput, "embedder.dim must be positive");
  if (spec.kind == EmbedderKind::remote_http && spec.endpoint.empty())
    raise(ErrorKind::MalformedInput, "remote_http embedder requires an endpoint");
}

Embedder::Embedder(EmbedderSpec spec) : spec_(std::move(spec)) { validate(spec_); }

EmbeddingVector Embedder::embed_hash(const std::string& text) const {
  const int dim = spec_.dim;
  std::vector<double> acc(static_cast<std::size_t>(dim), 0.0);
  bool any = false;
  for (const auto& token : tokenize(text)) {
    const std::uint64_t h = fnv1a64(token);
    const auto bucket = static_cast<std::size_t>(h % static_cast<std::uint64_t>(dim));
    const double sign = (h >> 63) ? -1.0 : 1.0;
    acc[bucket] += sign;
    any = true;
  }
  EmbeddingVector v;
  v.values.assign(static_cast<std::size_t>(dim), 0.0f);
  if (!any) return v;  // empty-text sentinel
  double norm_sq = 0.0;
  for (double x : acc) norm_sq += x * x;
  if (norm_sq == 0.0) return v;  // buckets cancelled exactly
  const double norm = std::sqrt(norm_sq);
  for (int i = 0; i < dim; ++i) v.values[i] = static_cast<float>(acc[i] / norm);
  return v;
}

EmbeddingVector Embedder::embed_remote(const std::string& text) const {
  nlohmann::json body;
  body["model"] = spec_.model_name;
  body["input"] = nlohmann::json::array({text});
  nlohmann::json resp = gateway::http_post_json_retry(spec_.endpoint, body, spec_.timeout_ms,
                                                      spec_.max_retries);
  if (!resp.contains("data") || !resp["data"].is_array() || resp["data"].empty() ||
      !resp["data"][0].contains("embedding"))
    raise(ErrorKind::ProviderUnavailable, "embedding response missing data[0].embedding");
  std::vector<double> raw;
  for (const auto& x : resp["data"][0]["embedding"]) raw.push_back(x.get<double>());
  if (static_cast<int>(raw.size()) != spec_.dim)
    raise(ErrorKind::DimensionMismatch,
          "remote embedding dim " + std::to_string(raw.size()) + " != configured " +
              std::to_string(spec_.dim));
  double norm_sq = 0.0;
  for (double x : raw) norm_sq += x * x;
  EmbeddingVector v;
  v.values.assign(raw.size(), 0.0f);
  if (norm_sq == 0.0) return v;
  const double norm = std::sqrt(norm_sq);
  for (std::size_t i = 0; i < raw.size(); ++i) v.values[i] = static_cast<float>(raw[i] / norm);
  return v;
}

EmbeddingVector Embedder::embed_text(const std::string& text) const {
  return spec_.kind == EmbedderKind::deterministic_hash ? embed_hash(text) : embed_remote(text);
}

std::vector<EmbeddingVector> Embedder::embed_batch(const std::vector<std::string>& texts) const {
  std::vector<EmbeddingVector> out(texts.size());
  std::exception_ptr first_error = nullptr;
#ifdef _OPENMP
  const int threads = spec_.kind == EmbedderKind::remote_http
                          ? std::max(1, spec_.max_inflight)
                          : omp_get_max_threads();
#pragma omp parallel for schedule(dynamic) num_threads(threads)
  for (std::size_t i = 0; i < texts.size(); ++i) {
    try {
      out[i] = embed_text(texts[i]);
    } catch (...) {
#pragma omp critical
      if (!first_error) first_error = std::current_exception();
    }
  }
#else
  for (std::size_t i = 0; i < texts.size(); ++i) {
    try {
      out[i] = embed_text(texts[i]);
    } catch (...) {
      if (!first_error) first_error = std::current_exception();
    }
  }
#endif
  if (first_error) std::rethrow_exception(first_error);
  return out;
}

std::vector<EmbeddingVector> Embedder::embed_batch_serial(
    const std::vector<std::string>& texts) const {
  std::vector<EmbeddingVector> out;
  out.reserve(texts.size());
  for (const auto& t : texts) out.push_back(embed_text(t));
  return out;
}

double cosine_similarity(const EmbeddingVector& a, const EmbeddingVector& b) {
  if (a.dim() != b.dim())
    raise(ErrorKind::DimensionMismatch, "cosine over dims " + std::to_string(a.dim()) + " and " +
                                            std::to_string(b.dim()));
  double dot = 0.0;
  for (std::size_t i = 0; i < a.values.size(); ++i)
    dot += static_cast<double>(a.values[i]) * static_cast<double>(b.values[i]);
  return std::clamp(dot, -1.0, 1.0);
}

}  // namespace heta::embed
