#pragma once

// Corpus ingestion: normalized parser output in, unified multimodal chunks out.
// Text blocks are concatenated into one document token stream and windowed;
// each table/image/formula block becomes a standalone chunk.

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

namespace heta::ingest {

enum class Modality { text, table, image, formula };

const char* to_string(Modality m);
Modality modality_from_string(const std::string& s);  // MalformedInput on unknown values

struct Block {
  Modality block_type = Modality::text;
  int page = 1;
  std::string content;
  std::optional<std::string> media_path;
};

struct ParsedDocument {
  std::string doc_id;
  std::string title;
  std::vector<Block> blocks;
};

struct TokenSpan {
  std::int64_t start = 0;
  std::int64_t end = 0;
};

struct Chunk {
  std::string chunk_id;  // doc_id + ":" + zero-padded ordinal
  std::string doc_id;
  std::pair<int, int> page_span{1, 1};
  Modality modality = Modality::text;
  std::string text;
  std::optional<std::string> media_path;
  std::int64_t token_count = 0;
  TokenSpan parent_span;  // token offsets into the document stream; zero-length for non-text
  std::map<std::string, std::string> metadata;
};

struct ChunkPolicy {
  std::int64_t window = 512;
  std::int64_t overlap = 64;
};

ParsedDocument parsed_document_from_json(const nlohmann::json& j);
ParsedDocument load_parsed_document(const std::string& path);

std::vector<Chunk> chunk_document(const ParsedDocument& doc, const ChunkPolicy& policy);

// Writes one chunk JSON object per line. Deterministic for identical inputs.
void build_corpus(const std::vector<ParsedDocument>& docs, const ChunkPolicy& policy,
                  const std::string& out_path);

nlohmann::json chunk_to_json(const Chunk& chunk);
Chunk chunk_from_json(const nlohmann::json& j);

// A loaded corpus file with id lookup. Immutable once constructed.
class Corpus {
public:
  Corpus() = default;
  static Corpus load(const std::string& path);
  static Corpus from_chunks(std::vector<Chunk> chunks);

  const std::vector<Chunk>& chunks() const { return chunks_; }
  const Chunk* find(const std::string& chunk_id) const;
  const Chunk& at(const std::string& chunk_id) const;  // UnknownChunk when absent
  bool contains(const std::string& chunk_id) const { return find(chunk_id) != nullptr; }
  std::size_t size() const { return chunks_.size(); }

private:
  std::vector<Chunk> chunks_;
  std::map<std::string, std::size_t> by_id_;
};

}  // namespace heta::ingest
