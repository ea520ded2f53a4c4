#pragma once

// Shared primitives: the error model, the corpus-wide tokenizer, hashing and
// small file helpers. Every module tokenizes text through this header so the
// ingest, fulltext and embedding layers agree on token boundaries.

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace heta {

enum class ErrorKind {
  MalformedInput,
  EmptyDocument,
  InvalidPolicy,
  DuplicateDocId,
  ProviderUnavailable,
  DimensionMismatch,
  AlreadyExists,
  DuplicateId,
  UnknownCollection,
  CorruptSnapshot,
  UnknownChunk,
  UnknownEntity,
  SchemaError,
  TypeMismatch,
  UnknownTable,
  UnknownColumn,
  EmptyAggregate,
  MissingBinding,
  UnknownTemplate,
  FixtureMissing,
  ParseError,
  RangeError,
  MisalignedRun,
  ConfigError,
  BindError,
  IoError,
};

const char* to_string(ErrorKind kind);

class Error : public std::runtime_error {
public:
  Error(ErrorKind kind, const std::string& message);
  ErrorKind kind() const { return kind_; }
  const std::string& message() const { return message_; }  // without the kind prefix

private:
  ErrorKind kind_;
  std::string message_;
};

[[noreturn]] void raise(ErrorKind kind, const std::string& message);

// Warnings go to stderr and are retained in-process so callers (and tests)
// can inspect degraded-path behavior.
void warn(const std::string& message);
std::vector<std::string> drain_warnings();

// A store-level search hit: chunk id plus the store's raw score.
struct ScoredHit {
  std::string chunk_id;
  double score = 0.0;
};

// Lowercase maximal alphanumeric runs. ASCII letters are folded to lowercase;
// bytes >= 0x80 count as word characters so non-ASCII text still forms tokens.
std::vector<std::string> tokenize(std::string_view text);

// Sentence boundaries = '.', '!' or '?'. Empty pieces dropped, whitespace
// trimmed. Shared by the pattern triple extractor and the fact checker.
std::vector<std::string> split_sentences(std::string_view text);

std::uint64_t fnv1a64(std::string_view data);

std::uint32_t crc32_bytes(std::string_view data, std::uint32_t seed = 0);
std::uint32_t crc32_file(const std::string& path, std::uint32_t seed = 0);

std::string read_file(const std::string& path);
void write_file(const std::string& path, std::string_view data);

std::string lowercase(std::string_view s);
std::string trim(std::string_view s);

// Lowercase + collapse internal whitespace runs to single spaces. This is the
// entity-id normalization used across the graph layer.
std::string normalize_entity_name(std::string_view s);

}  // namespace heta
