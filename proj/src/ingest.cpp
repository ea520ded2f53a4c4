#include "heta/ingest.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>
#include <sstream>

#include "heta/common.hpp"

namespace heta::ingest {

namespace {
constexpr int kOrdinalWidth = 4;

std::string make_chunk_id(const std::string& doc_id, int ordinal) {
  std::string num = std::to_string(ordinal);
  if (static_cast<int>(num.size()) < kOrdinalWidth)
    num.insert(0, kOrdinalWidth - num.size(), '0');
  return doc_id + ":" + num;
}

struct ByteSpan {
  std::size_t begin = 0;
  std::size_t end = 0;
};

// Byte ranges of the tokens tokenize() would produce, so chunk text can be
// sliced from the original content with case and punctuation intact.
std::vector<ByteSpan> token_byte_spans(const std::string& text) {
  std::vector<ByteSpan> spans;
  std::size_t start = 0;
  bool in_token = false;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const auto c = static_cast<unsigned char>(text[i]);
    const bool word = std::isalnum(c) || c >= 0x80;
    if (word && !in_token) {
      start = i;
      in_token = true;
    } else if (!word && in_token) {
      spans.push_back({start, i});
      in_token = false;
    }
  }
  if (in_token) spans.push_back({start, text.size()});
  return spans;
}
}  // namespace

const char* to_string(Modality m) {
  switch (m) {
    case Modality::text: return "text";
    case Modality::table: return "table";
    case Modality::image: return "image";
    case Modality::formula: return "formula";
  }
  return "text";
}

Modality modality_from_string(const std::string& s) {
  if (s == "text") return Modality::text;
  if (s == "table") return Modality::table;
  if (s == "image") return Modality::image;
  if (s == "formula") return Modality::formula;
  raise(ErrorKind::MalformedInput, "unknown block_type \"" + s + "\"");
}

ParsedDocument parsed_document_from_json(const nlohmann::json& j) {
  if (!j.is_object()) raise(ErrorKind::MalformedInput, "document root must be an object");
  ParsedDocument doc;
  if (!j.contains("doc_id") || !j["doc_id"].is_string() || j["doc_id"].get<std::string>().empty())
    raise(ErrorKind::MalformedInput, "doc_id missing or empty");
  doc.doc_id = j["doc_id"].get<std::string>();
  doc.title = j.value("title", std::string());
  if (!j.contains("blocks") || !j["blocks"].is_array())
    raise(ErrorKind::MalformedInput, "blocks missing or not an array");
  for (const auto& jb : j["blocks"]) {
    Block b;
    if (!jb.contains("block_type") || !jb["block_type"].is_string())
      raise(ErrorKind::MalformedInput, "block_type missing");
    b.block_type = modality_from_string(jb["block_type"].get<std::string>());
    if (!jb.contains("page") || !jb["page"].is_number_integer())
      raise(ErrorKind::MalformedInput, "page missing");
    b.page = jb["page"].get<int>();
    if (b.page < 1) raise(ErrorKind::MalformedInput, "page must be >= 1");
    b.content = jb.value("content", std::string());
    if (jb.contains("media_path") && !jb["media_path"].is_null())
      b.media_path = jb["media_path"].get<std::string>();
    if (b.content.empty() && !(b.block_type == Modality::image && b.media_path.has_value()))
      raise(ErrorKind::MalformedInput, "block content empty");
    doc.blocks.push_back(std::move(b));
  }
  if (doc.blocks.empty()) raise(ErrorKind::EmptyDocument, "document " + doc.doc_id + " has zero blocks");
  return doc;
}

ParsedDocument load_parsed_document(const std::string& path) {
  std::string raw = read_file(path);
  nlohmann::json j = nlohmann::json::parse(raw, nullptr, false);
  if (j.is_discarded()) raise(ErrorKind::MalformedInput, "invalid JSON in " + path);
  return parsed_document_from_json(j);
}

std::vector<Chunk> chunk_document(const ParsedDocument& doc, const ChunkPolicy& policy) {
  if (policy.window <= policy.overlap || policy.overlap < 0)
    raise(ErrorKind::InvalidPolicy, "window must exceed overlap and overlap must be >= 0");

  struct TokenOrigin {
    std::size_t block_index;
    int page;
    ByteSpan bytes;   // within the block content
    std::size_t tail; // slice end when this token closes a block segment
  };
  std::vector<TokenOrigin> stream;

  struct Pending {
    std::size_t block_index;  // reading-order sort key, then token position
    std::int64_t token_pos;
    Chunk chunk;
  };
  std::vector<Pending> pending;

  for (std::size_t bi = 0; bi < doc.blocks.size(); ++bi) {
    const Block& block = doc.blocks[bi];
    if (block.block_type == Modality::text) {
      const auto spans = token_byte_spans(block.content);
      for (std::size_t t = 0; t < spans.size(); ++t) {
        // The tail runs to the next token so trailing punctuation survives.
        const std::size_t tail =
            t + 1 < spans.size() ? spans[t + 1].begin : block.content.size();
        stream.push_back({bi, block.page, spans[t], tail});
      }
    } else {
      Chunk c;
      c.doc_id = doc.doc_id;
      c.modality = block.block_type;
      c.text = block.content;
      c.media_path = block.media_path;
      c.page_span = {block.page, block.page};
      c.token_count = static_cast<std::int64_t>(tokenize(c.text).size());
      auto pos = static_cast<std::int64_t>(stream.size());
      c.parent_span = {pos, pos};
      pending.push_back({bi, pos, std::move(c)});
    }
  }

  const auto total = static_cast<std::int64_t>(stream.size());
  if (total > 0) {
    const std::int64_t stride = policy.window - policy.overlap;
    std::int64_t start = 0;
    while (true) {
      const std::int64_t end = std::min(start + policy.window, total);
      Chunk c;
      c.doc_id = doc.doc_id;
      c.modality = Modality::text;
      c.parent_span = {start, end};
      c.token_count = end - start;
      int page_lo = stream[start].page;
      int page_hi = stream[start].page;
      // One slice of original block content per contiguous block segment.
      std::string text;
      std::int64_t i = start;
      while (i < end) {
        std::int64_t j = i;
        while (j + 1 < end && stream[j + 1].block_index == stream[i].block_index) ++j;
        const std::string& content = doc.blocks[stream[i].block_index].content;
        const std::size_t lo = stream[i].bytes.begin;
        const std::size_t hi = stream[j].tail;
        if (!text.empty()) text.push_back('\n');
        text += trim(std::string_view(content).substr(lo, hi - lo));
        for (std::int64_t t = i; t <= j; ++t) {
          page_lo = std::min(page_lo, stream[t].page);
          page_hi = std::max(page_hi, stream[t].page);
        }
        i = j + 1;
      }
      c.text = std::move(text);
      c.page_span = {page_lo, page_hi};
      pending.push_back({stream[start].block_index, start, std::move(c)});
      if (start + policy.window >= total) break;
      start += stride;
    }
  }

  std::stable_sort(pending.begin(), pending.end(), [](const Pending& a, const Pending& b) {
    if (a.block_index != b.block_index) return a.block_index < b.block_index;
    return a.token_pos < b.token_pos;
  });

  std::vector<Chunk> chunks;
  chunks.reserve(pending.size());
  int ordinal = 0;
  for (auto& p : pending) {
    p.chunk.chunk_id = make_chunk_id(doc.doc_id, ordinal++);
    if (!doc.title.empty()) p.chunk.metadata["title"] = doc.title;
    chunks.push_back(std::move(p.chunk));
  }
  return chunks;
}

void build_corpus(const std::vector<ParsedDocument>& docs, const ChunkPolicy& policy,
                  const std::string& out_path) {
  std::set<std::string> seen;
  for (const auto& doc : docs)
    if (!seen.insert(doc.doc_id).second)
      raise(ErrorKind::DuplicateDocId, "doc_id \"" + doc.doc_id + "\" appears twice");

  std::string out;
  for (const auto& doc : docs)
    for (const auto& chunk : chunk_document(doc, policy)) {
      out += chunk_to_json(chunk).dump();
      out.push_back('\n');
    }
  write_file(out_path, out);
}

nlohmann::json chunk_to_json(const Chunk& chunk) {
  nlohmann::json j;
  j["chunk_id"] = chunk.chunk_id;
  j["doc_id"] = chunk.doc_id;
  j["page_span"] = {chunk.page_span.first, chunk.page_span.second};
  j["modality"] = to_string(chunk.modality);
  j["text"] = chunk.text;
  j["media_path"] = chunk.media_path.has_value() ? nlohmann::json(*chunk.media_path)
                                                 : nlohmann::json(nullptr);
  j["token_count"] = chunk.token_count;
  j["parent_span"] = {chunk.parent_span.start, chunk.parent_span.end};
  j["metadata"] = chunk.metadata;
  return j;
}

Chunk chunk_from_json(const nlohmann::json& j) {
  Chunk c;
  try {
    c.chunk_id = j.at("chunk_id").get<std::string>();
    c.doc_id = j.at("doc_id").get<std::string>();
    c.page_span = {j.at("page_span")[0].get<int>(), j.at("page_span")[1].get<int>()};
    c.modality = modality_from_string(j.at("modality").get<std::string>());
    c.text = j.at("text").get<std::string>();
    if (!j.at("media_path").is_null()) c.media_path = j["media_path"].get<std::string>();
    c.token_count = j.at("token_count").get<std::int64_t>();
    c.parent_span = {j.at("parent_span")[0].get<std::int64_t>(),
                     j.at("parent_span")[1].get<std::int64_t>()};
    if (j.contains("metadata"))
      c.metadata = j["metadata"].get<std::map<std::string, std::string>>();
  } catch (const nlohmann::json::exception& e) {
    raise(ErrorKind::MalformedInput, std::string("bad chunk record: ") + e.what());
  }
  return c;
}

Corpus Corpus::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) raise(ErrorKind::IoError, "cannot open corpus " + path);
  std::vector<Chunk> chunks;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded())
      raise(ErrorKind::MalformedInput, "corpus line " + std::to_string(lineno) + " is not JSON");
    chunks.push_back(chunk_from_json(j));
  }
  return from_chunks(std::move(chunks));
}

Corpus Corpus::from_chunks(std::vector<Chunk> chunks) {
  Corpus corpus;
  corpus.chunks_ = std::move(chunks);
  for (std::size_t i = 0; i < corpus.chunks_.size(); ++i) {
    if (!corpus.by_id_.emplace(corpus.chunks_[i].chunk_id, i).second)
      raise(ErrorKind::DuplicateId, "duplicate chunk_id " + corpus.chunks_[i].chunk_id);
  }
  return corpus;
}

const Chunk* Corpus::find(const std::string& chunk_id) const {
  auto it = by_id_.find(chunk_id);
  return it == by_id_.end() ? nullptr : &chunks_[it->second];
}

const Chunk& Corpus::at(const std::string& chunk_id) const {
  const Chunk* c = find(chunk_id);
  if (!c) raise(ErrorKind::UnknownChunk, "chunk " + chunk_id + " not in corpus");
  return *c;
}

}  // namespace heta::ingest
