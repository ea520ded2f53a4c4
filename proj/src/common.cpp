#include "heta/common.hpp"

#include <zlib.h>

#include <cstdio>
#include <fstream>
#include <mutex>
#include <sstream>

namespace heta {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::MalformedInput: return "MalformedInput";
    case ErrorKind::EmptyDocument: return "EmptyDocument";
    case ErrorKind::InvalidPolicy: return "InvalidPolicy";
    case ErrorKind::DuplicateDocId: return "DuplicateDocId";
    case ErrorKind::ProviderUnavailable: return "ProviderUnavailable";
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::AlreadyExists: return "AlreadyExists";
    case ErrorKind::DuplicateId: return "DuplicateId";
    case ErrorKind::UnknownCollection: return "UnknownCollection";
    case ErrorKind::CorruptSnapshot: return "CorruptSnapshot";
    case ErrorKind::UnknownChunk: return "UnknownChunk";
    case ErrorKind::UnknownEntity: return "UnknownEntity";
    case ErrorKind::SchemaError: return "SchemaError";
    case ErrorKind::TypeMismatch: return "TypeMismatch";
    case ErrorKind::UnknownTable: return "UnknownTable";
    case ErrorKind::UnknownColumn: return "UnknownColumn";
    case ErrorKind::EmptyAggregate: return "EmptyAggregate";
    case ErrorKind::MissingBinding: return "MissingBinding";
    case ErrorKind::UnknownTemplate: return "UnknownTemplate";
    case ErrorKind::FixtureMissing: return "FixtureMissing";
    case ErrorKind::ParseError: return "ParseError";
    case ErrorKind::RangeError: return "RangeError";
    case ErrorKind::MisalignedRun: return "MisalignedRun";
    case ErrorKind::ConfigError: return "ConfigError";
    case ErrorKind::BindError: return "BindError";
    case ErrorKind::IoError: return "IoError";
  }
  return "Unknown";
}

Error::Error(ErrorKind kind, const std::string& message)
    : std::runtime_error(std::string(to_string(kind)) + ": " + message),
      kind_(kind),
      message_(message) {}

void raise(ErrorKind kind, const std::string& message) { throw Error(kind, message); }

namespace {
std::mutex g_warn_mutex;
std::vector<std::string> g_warnings;
}  // namespace

void warn(const std::string& message) {
  std::lock_guard<std::mutex> lock(g_warn_mutex);
  g_warnings.push_back(message);
  std::fprintf(stderr, "warning: %s\n", message.c_str());
}

std::vector<std::string> drain_warnings() {
  std::lock_guard<std::mutex> lock(g_warn_mutex);
  std::vector<std::string> out;
  out.swap(g_warnings);
  return out;
}

namespace {
inline bool is_word_byte(unsigned char c) {
  return (c >= '0' && c <= '9') || (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || c >= 0x80;
}
inline char fold(unsigned char c) {
  if (c >= 'A' && c <= 'Z') return static_cast<char>(c - 'A' + 'a');
  return static_cast<char>(c);
}
}  // namespace

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string current;
  for (unsigned char c : text) {
    if (is_word_byte(c)) {
      current.push_back(fold(c));
    } else if (!current.empty()) {
      tokens.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  return tokens;
}

std::vector<std::string> split_sentences(std::string_view text) {
  std::vector<std::string> sentences;
  std::string current;
  for (char c : text) {
    if (c == '.' || c == '!' || c == '?') {
      std::string piece = trim(current);
      if (!piece.empty()) sentences.push_back(std::move(piece));
      current.clear();
    } else {
      current.push_back(c);
    }
  }
  std::string tail = trim(current);
  if (!tail.empty()) sentences.push_back(std::move(tail));
  return sentences;
}

std::uint64_t fnv1a64(std::string_view data) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : data) {
    h ^= static_cast<std::uint64_t>(c);
    h *= 1099511628211ULL;
  }
  return h;
}

std::uint32_t crc32_bytes(std::string_view data, std::uint32_t seed) {
  return static_cast<std::uint32_t>(
      ::crc32(seed, reinterpret_cast<const Bytef*>(data.data()), static_cast<uInt>(data.size())));
}

std::uint32_t crc32_file(const std::string& path, std::uint32_t seed) {
  return crc32_bytes(read_file(path), seed);
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) raise(ErrorKind::IoError, "cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_file(const std::string& path, std::string_view data) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) raise(ErrorKind::IoError, "cannot write " + path);
  out.write(data.data(), static_cast<std::streamsize>(data.size()));
  if (!out) raise(ErrorKind::IoError, "short write to " + path);
}

std::string lowercase(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (unsigned char c : s) out.push_back(fold(c));
  return out;
}

std::string trim(std::string_view s) {
  size_t begin = 0;
  size_t end = s.size();
  while (begin < end && std::isspace(static_cast<unsigned char>(s[begin]))) ++begin;
  while (end > begin && std::isspace(static_cast<unsigned char>(s[end - 1]))) --end;
  return std::string(s.substr(begin, end - begin));
}

std::string normalize_entity_name(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  bool pending_space = false;
  for (unsigned char c : s) {
    if (std::isspace(c)) {
      if (!out.empty()) pending_space = true;
    } else {
      if (pending_space) {
        out.push_back(' ');
        pending_space = false;
      }
      out.push_back(fold(c));
    }
  }
  return out;
}

}  // namespace heta
