#include "heta/vector_index.hpp"

#include <algorithm>
#include <cstring>
#include <filesystem>
#include <limits>
#include <mutex>

#include <json.hpp>

namespace fs = std::filesystem;

namespace heta::vector_index {

namespace {

constexpr double kExcluded = -std::numeric_limits<double>::infinity();

bool payload_matches(const VectorRecord& rec, const PayloadFilter& filter) {
  for (const auto& [key, value] : filter) {
    auto it = rec.payload.find(key);
    if (it == rec.payload.end() || it->second != value) return false;
  }
  return true;
}

void append_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint32_t read_u32(const std::string& data, std::size_t& pos) {
  if (pos + 4 > data.size()) raise(ErrorKind::CorruptSnapshot, "records.bin truncated");
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i)
    v |= static_cast<std::uint32_t>(static_cast<unsigned char>(data[pos + i])) << (8 * i);
  pos += 4;
  return v;
}

std::string read_str(const std::string& data, std::size_t& pos) {
  std::uint32_t len = read_u32(data, pos);
  if (pos + len > data.size()) raise(ErrorKind::CorruptSnapshot, "records.bin truncated");
  std::string s = data.substr(pos, len);
  pos += len;
  return s;
}

}  // namespace

VectorCollection::VectorCollection(std::string name, int dim)
    : name_(std::move(name)), dim_(dim) {
  if (dim_ <= 0) raise(ErrorKind::MalformedInput, "collection dim must be positive");
}

CollectionMeta VectorCollection::meta() const {
  std::shared_lock lock(mutex_);
  return {name_, dim_, "cosine", static_cast<std::int64_t>(records_.size())};
}

std::int64_t VectorCollection::insert(std::vector<VectorRecord> records) {
  std::unique_lock lock(mutex_);
  for (const auto& rec : records) {
    if (rec.vector.dim() != dim_)
      raise(ErrorKind::DimensionMismatch, "record " + rec.chunk_id + " has dim " +
                                              std::to_string(rec.vector.dim()) + ", collection is " +
                                              std::to_string(dim_));
    if (by_id_.count(rec.chunk_id))
      raise(ErrorKind::DuplicateId, "chunk_id " + rec.chunk_id + " already present");
  }
  // Re-check against the batch itself.
  {
    std::map<std::string, int> batch_ids;
    for (const auto& rec : records)
      if (++batch_ids[rec.chunk_id] > 1)
        raise(ErrorKind::DuplicateId, "chunk_id " + rec.chunk_id + " duplicated in batch");
  }
  const auto inserted = static_cast<std::int64_t>(records.size());
  for (auto& rec : records) {
    by_id_.emplace(rec.chunk_id, records_.size());
    records_.push_back(std::move(rec));
  }
  return inserted;
}

std::vector<ScoredHit> VectorCollection::scan(const embed::EmbeddingVector& query, int k,
                                              const PayloadFilter* filter, bool parallel) const {
  if (k < 1) raise(ErrorKind::MalformedInput, "k must be >= 1");
  if (query.dim() != dim_)
    raise(ErrorKind::DimensionMismatch, "query dim " + std::to_string(query.dim()) +
                                            " != collection dim " + std::to_string(dim_));
  std::shared_lock lock(mutex_);
  const auto n = records_.size();
  std::vector<double> scores(n, kExcluded);

  auto score_one = [&](std::size_t i) {
    const VectorRecord& rec = records_[i];
    if (filter && !payload_matches(rec, *filter)) return;
    double dot = 0.0;
    const float* a = rec.vector.values.data();
    const float* b = query.values.data();
    for (int d = 0; d < dim_; ++d) dot += static_cast<double>(a[d]) * static_cast<double>(b[d]);
    scores[i] = dot;
  };

  if (parallel) {
#pragma omp parallel for schedule(static)
    for (std::size_t i = 0; i < n; ++i) score_one(i);
  } else {
    for (std::size_t i = 0; i < n; ++i) score_one(i);
  }

  std::vector<std::size_t> order;
  order.reserve(n);
  for (std::size_t i = 0; i < n; ++i)
    if (scores[i] != kExcluded) order.push_back(i);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return records_[a].chunk_id < records_[b].chunk_id;
  });
  if (order.size() > static_cast<std::size_t>(k)) order.resize(static_cast<std::size_t>(k));

  std::vector<ScoredHit> hits;
  hits.reserve(order.size());
  for (std::size_t i : order) hits.push_back({records_[i].chunk_id, scores[i]});
  return hits;
}

std::vector<ScoredHit> VectorCollection::search_topk(const embed::EmbeddingVector& query, int k,
                                                     const PayloadFilter* filter) const {
  return scan(query, k, filter, true);
}

std::vector<ScoredHit> VectorCollection::search_topk_serial(const embed::EmbeddingVector& query,
                                                            int k,
                                                            const PayloadFilter* filter) const {
  return scan(query, k, filter, false);
}

void VectorCollection::snapshot(const std::string& dir) const {
  std::shared_lock lock(mutex_);
  fs::create_directories(dir);

  nlohmann::json meta;
  meta["name"] = name_;
  meta["dim"] = dim_;
  meta["metric"] = "cosine";
  meta["count"] = records_.size();
  const std::string meta_text = meta.dump(2) + "\n";

  std::string bin;
  for (const auto& rec : records_) {
    append_u32(bin, static_cast<std::uint32_t>(rec.chunk_id.size()));
    bin += rec.chunk_id;
    append_u32(bin, static_cast<std::uint32_t>(rec.payload.size()));
    for (const auto& [key, value] : rec.payload) {
      append_u32(bin, static_cast<std::uint32_t>(key.size()));
      bin += key;
      append_u32(bin, static_cast<std::uint32_t>(value.size()));
      bin += value;
    }
    for (float f : rec.vector.values) {
      static_assert(sizeof(float) == 4);
      std::uint32_t word;
      std::memcpy(&word, &f, 4);
      append_u32(bin, word);  // little-endian f32
    }
  }

  write_file(dir + "/meta.json", meta_text);
  write_file(dir + "/records.bin", bin);
  std::uint32_t crc = crc32_bytes(meta_text);
  crc = crc32_bytes(bin, crc);
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%08x\n", crc);
  write_file(dir + "/checksum", buf);
}

std::unique_ptr<VectorCollection> VectorCollection::restore(const std::string& dir) {
  if (!fs::exists(dir + "/meta.json") || !fs::exists(dir + "/records.bin") ||
      !fs::exists(dir + "/checksum"))
    raise(ErrorKind::CorruptSnapshot, "snapshot files missing in " + dir);
  const std::string meta_text = read_file(dir + "/meta.json");
  const std::string bin = read_file(dir + "/records.bin");

  std::uint32_t crc = crc32_bytes(meta_text);
  crc = crc32_bytes(bin, crc);
  char expect[16];
  std::snprintf(expect, sizeof(expect), "%08x\n", crc);
  if (read_file(dir + "/checksum") != expect)
    raise(ErrorKind::CorruptSnapshot, "checksum mismatch in " + dir);

  nlohmann::json meta = nlohmann::json::parse(meta_text, nullptr, false);
  if (meta.is_discarded()) raise(ErrorKind::CorruptSnapshot, "meta.json unreadable");
  auto coll = std::make_unique<VectorCollection>(meta.at("name").get<std::string>(),
                                                 meta.at("dim").get<int>());
  const auto count = meta.at("count").get<std::size_t>();

  std::vector<VectorRecord> records;
  std::size_t pos = 0;
  for (std::size_t r = 0; r < count; ++r) {
    VectorRecord rec;
    rec.chunk_id = read_str(bin, pos);
    const std::uint32_t npayload = read_u32(bin, pos);
    for (std::uint32_t p = 0; p < npayload; ++p) {
      std::string key = read_str(bin, pos);
      rec.payload[key] = read_str(bin, pos);
    }
    rec.vector.values.resize(static_cast<std::size_t>(coll->dim_));
    for (int d = 0; d < coll->dim_; ++d) {
      std::uint32_t word = read_u32(bin, pos);
      float f;
      std::memcpy(&f, &word, 4);
      rec.vector.values[static_cast<std::size_t>(d)] = f;
    }
    records.push_back(std::move(rec));
  }
  if (pos != bin.size()) raise(ErrorKind::CorruptSnapshot, "trailing bytes in records.bin");
  coll->insert(std::move(records));
  return coll;
}

CollectionMeta VectorStore::create_collection(const std::string& name, int dim) {
  if (collections_.count(name))
    raise(ErrorKind::AlreadyExists, "collection " + name + " already exists");
  collections_.emplace(name, std::make_unique<VectorCollection>(name, dim));
  return collections_.at(name)->meta();
}

VectorCollection& VectorStore::collection(const std::string& name) {
  auto it = collections_.find(name);
  if (it == collections_.end()) raise(ErrorKind::UnknownCollection, "no collection " + name);
  return *it->second;
}

const VectorCollection& VectorStore::collection(const std::string& name) const {
  auto it = collections_.find(name);
  if (it == collections_.end()) raise(ErrorKind::UnknownCollection, "no collection " + name);
  return *it->second;
}

bool VectorStore::has_collection(const std::string& name) const {
  return collections_.count(name) > 0;
}

}  // namespace heta::vector_index
