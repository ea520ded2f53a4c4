#include <doctest.h>

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "heta/common.hpp"
#include "heta/embed.hpp"
#include "support/oracles.hpp"

using namespace heta;
using namespace heta::embed;

namespace {

// Bucket-arithmetic oracle: recompute the signed-bucket accumulation straight
// from the written rule, with its own FNV implementation.
std::vector<float> oracle_embed(const std::string& text, int dim) {
  std::vector<double> acc(static_cast<std::size_t>(dim), 0.0);
  bool any = false;
  for (const auto& token : tokenize(text)) {
    const std::uint64_t h = oracle::fnv1a64(token);
    acc[static_cast<std::size_t>(h % static_cast<std::uint64_t>(dim))] +=
        (h >> 63) ? -1.0 : 1.0;
    any = true;
  }
  std::vector<float> out(static_cast<std::size_t>(dim), 0.0f);
  if (!any) return out;
  double norm = 0.0;
  for (double v : acc) norm += v * v;
  norm = std::sqrt(norm);
  if (norm == 0.0) return out;
  for (std::size_t i = 0; i < acc.size(); ++i) out[i] = static_cast<float>(acc[i] / norm);
  return out;
}

double norm_of(const EmbeddingVector& v) {
  double s = 0.0;
  for (float x : v.values) s += static_cast<double>(x) * static_cast<double>(x);
  return std::sqrt(s);
}

}  // namespace

TEST_SUITE("embed") {

TEST_CASE("empty text embeds to the zero sentinel") {
  Embedder embedder({EmbedderKind::deterministic_hash, 256});
  auto v = embedder.embed_text("");
  CHECK(v.dim() == 256);
  CHECK(v.is_zero());
  CHECK(norm_of(v) == 0.0);
  CHECK(embedder.embed_text("  ,,, !!").is_zero());
}

TEST_CASE("embedding is deterministic") {
  Embedder embedder({EmbedderKind::deterministic_hash, 256});
  auto a = embedder.embed_text("industrial robot arms");
  auto b = embedder.embed_text("industrial robot arms");
  CHECK(a.values == b.values);
}

TEST_CASE("vectors match the bucket-arithmetic oracle") {
  for (int dim : {16, 64, 256}) {
    Embedder embedder({EmbedderKind::deterministic_hash, dim});
    for (const std::string& text :
         {std::string("apple banana"), std::string("Jane Miller founded Acme Robotics in 2003."),
          std::string("one one one two"), std::string("x")}) {
      CAPTURE(dim);
      CAPTURE(text);
      auto got = embedder.embed_text(text);
      auto want = oracle_embed(text, dim);
      REQUIRE(got.values.size() == want.size());
      for (std::size_t i = 0; i < want.size(); ++i) CHECK(got.values[i] == doctest::Approx(want[i]).epsilon(1e-7));
    }
  }
}

TEST_CASE("nonzero vectors are unit length") {
  Embedder embedder({EmbedderKind::deterministic_hash, 256});
  std::mt19937 rng(7);
  for (int trial = 0; trial < 30; ++trial) {
    std::string text;
    const int words = 1 + static_cast<int>(rng() % 12);
    for (int w = 0; w < words; ++w) text += "w" + std::to_string(rng() % 40) + " ";
    auto v = embedder.embed_text(text);
    if (v.is_zero()) continue;
    CHECK(norm_of(v) == doctest::Approx(1.0).epsilon(1e-6));
  }
}

TEST_CASE("subset query reaches the expected cosine when buckets are disjoint") {
  // With two tokens in distinct buckets and one query token, the dot product
  // is 1/sqrt(2). The oracle recomputes the buckets to confirm the premise.
  Embedder embedder({EmbedderKind::deterministic_hash, 256});
  const std::uint64_t ha = oracle::fnv1a64("apple");
  const std::uint64_t hb = oracle::fnv1a64("banana");
  REQUIRE(ha % 256 != hb % 256);
  auto both = embedder.embed_text("apple banana");
  auto one = embedder.embed_text("apple");
  CHECK(cosine_similarity(both, one) == doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-6));
}

TEST_CASE("embed_batch equals pointwise embed_text") {
  Embedder embedder({EmbedderKind::deterministic_hash, 256});

  SUBCASE("empty batch") { CHECK(embedder.embed_batch({}).empty()); }

  SUBCASE("batch of 100 equals 100 single calls") {
    std::vector<std::string> texts;
    for (int i = 0; i < 100; ++i) texts.push_back("phrase number " + std::to_string(i * 37 % 50));
    auto batch = embedder.embed_batch(texts);
    REQUIRE(batch.size() == texts.size());
    for (std::size_t i = 0; i < texts.size(); ++i)
      CHECK(batch[i].values == embedder.embed_text(texts[i]).values);
  }

  SUBCASE("parallel batch equals the serial reference") {
    std::vector<std::string> texts;
    for (int i = 0; i < 64; ++i) texts.push_back("mixed " + std::to_string(i) + " payload");
    auto par = embedder.embed_batch(texts);
    auto ser = embedder.embed_batch_serial(texts);
    REQUIRE(par.size() == ser.size());
    for (std::size_t i = 0; i < par.size(); ++i) CHECK(par[i].values == ser[i].values);
  }
}

TEST_CASE("cosine_similarity contract") {
  EmbeddingVector a{{1.0f, 0.0f}};
  EmbeddingVector b{{0.0f, 1.0f}};
  EmbeddingVector zero{{0.0f, 0.0f}};
  CHECK(cosine_similarity(a, b) == 0.0);
  CHECK(cosine_similarity(a, a) == doctest::Approx(1.0));
  CHECK(cosine_similarity(a, zero) == 0.0);
  CHECK(cosine_similarity(zero, zero) == 0.0);

  EmbeddingVector neg{{-1.0f, 0.0f}};
  CHECK(cosine_similarity(a, neg) == doctest::Approx(-1.0));

  EmbeddingVector short_v{{1.0f}};
  CHECK_THROWS_WITH_AS(cosine_similarity(a, short_v), doctest::Contains("DimensionMismatch"), Error);
}

TEST_CASE("spec validation rejects bad configurations") {
  CHECK_THROWS_AS(validate({EmbedderKind::deterministic_hash, 0}), Error);
  CHECK_THROWS_AS(validate({EmbedderKind::deterministic_hash, -4}), Error);
  EmbedderSpec remote;
  remote.kind = EmbedderKind::remote_http;
  remote.dim = 256;
  remote.endpoint = "";
  CHECK_THROWS_AS(validate(remote), Error);
}

}  // TEST_SUITE
