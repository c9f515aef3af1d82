// Copyright 2026 The GRAIL Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "grail/corpus.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include <fmt/format.h>
#include <json.hpp>

#include "grail/error.hpp"
#include "grail/io.hpp"

namespace grail {

using json = nlohmann::json;

const char* modality_name(Modality m) noexcept {
  switch (m) {
    case Modality::kText: return "text";
    case Modality::kTable: return "table";
    case Modality::kImage: return "image";
  }
  return "text";
}

Modality parse_modality(std::string_view name) {
  if (name == "text") return Modality::kText;
  if (name == "table") return Modality::kTable;
  if (name == "image") return Modality::kImage;
  fail(ErrorCode::kFormat, fmt::format("unknown modality '{}'", name));
}

std::optional<std::size_t> CorpusIndex::find(std::string_view id) const {
  auto it = rows_.find(std::string(id));
  if (it == rows_.end()) return std::nullopt;
  return it->second;
}

std::size_t CorpusIndex::row_of(std::string_view id) const {
  auto r = find(id);
  if (!r) fail(ErrorCode::kNotFound, fmt::format("unknown evidence id '{}'", id));
  return *r;
}

void CorpusIndex::build_lookup() {
  rows_.clear();
  rows_.reserve(ids_.size());
  for (std::size_t r = 0; r < ids_.size(); ++r) {
    auto [it, inserted] = rows_.emplace(ids_[r], r);
    if (!inserted) fail(ErrorCode::kDuplicateId, fmt::format("duplicate id '{}'", ids_[r]));
  }
  std::vector<std::uint32_t> order(ids_.size());
  std::iota(order.begin(), order.end(), 0u);
  std::sort(order.begin(), order.end(),
            [this](std::uint32_t a, std::uint32_t b) { return ids_[a] < ids_[b]; });
  id_order_.assign(ids_.size(), 0);
  for (std::uint32_t rank = 0; rank < order.size(); ++rank) id_order_[order[rank]] = rank;
}

CorpusIndex ingest(std::vector<MetadataRecord> meta, std::size_t dim, std::vector<float> vectors) {
  if (dim == 0) fail(ErrorCode::kDimensionMismatch, "corpus dimension must be positive");
  if (vectors.size() != meta.size() * dim) {
    fail(ErrorCode::kDimensionMismatch,
         fmt::format("{} metadata rows and {} floats do not form rows of dimension {}",
                     meta.size(), vectors.size(), dim));
  }
  for (std::size_t i = 0; i < vectors.size(); ++i) {
    if (!std::isfinite(vectors[i])) {
      fail(ErrorCode::kNonFinite, fmt::format("non-finite component in row {} ('{}')", i / dim,
                                              meta[i / dim].id));
    }
  }
  CorpusIndex c;
  c.dim_ = dim;
  c.data_ = std::move(vectors);
  c.ids_.reserve(meta.size());
  for (const auto& m : meta) c.ids_.push_back(m.id);
  c.records_ = std::move(meta);
  c.build_lookup();
  return c;
}

CorpusIndex normalize(const CorpusIndex& corpus) {
  CorpusIndex c = corpus;
  for (std::size_t r = 0; r < c.size(); ++r) {
    float* row = c.data_.data() + r * c.dim_;
    double norm = 0.0;
    for (std::size_t k = 0; k < c.dim_; ++k) norm += double(row[k]) * row[k];
    norm = std::sqrt(norm);
    if (norm == 0.0) {
      fail(ErrorCode::kInvalidArgument, fmt::format("zero-norm row for id '{}'", c.ids_[r]));
    }
    for (std::size_t k = 0; k < c.dim_; ++k) row[k] = static_cast<float>(row[k] / norm);
  }
  return c;
}

void write_vector_file(const std::filesystem::path& path, std::uint32_t count, std::uint32_t dim,
                       std::span<const float> data) {
  if (data.size() != std::size_t(count) * dim) {
    fail(ErrorCode::kDimensionMismatch, "vector payload does not match count*dim");
  }
  io::ByteWriter w;
  w.bytes(kVectorMagic, 4);
  w.u32(kVectorVersion);
  w.u32(count);
  w.u32(dim);
  for (float x : data) w.f32(x);
  io::write_file(path, w.buffer());
}

VectorBlock read_vector_file(const std::filesystem::path& path) {
  const std::string bytes = io::read_file(path);
  io::ByteReader r(bytes, path.string());
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kVectorMagic, 4) != 0) {
    fail(ErrorCode::kBadMagic, fmt::format("{}: not a GRLE vector file", path.string()));
  }
  r.skip(4);
  const std::uint32_t version = r.u32();
  if (version != kVectorVersion) {
    fail(ErrorCode::kVersionMismatch,
         fmt::format("{}: vector file version {} (expected {})", path.string(), version,
                     kVectorVersion));
  }
  VectorBlock block;
  block.count = r.u32();
  block.dim = r.u32();
  const std::size_t n = std::size_t(block.count) * block.dim;
  if (r.remaining() < n * 4) {
    fail(ErrorCode::kTruncated,
         fmt::format("{}: declared {} rows of dim {} but only {} complete rows present",
                     path.string(), block.count, block.dim,
                     block.dim == 0 ? 0 : r.remaining() / (4 * std::size_t(block.dim))));
  }
  block.data.resize(n);
  for (std::size_t i = 0; i < n; ++i) block.data[i] = r.f32();
  return block;
}

void write_metadata(const std::filesystem::path& path, std::span<const MetadataRecord> meta) {
  std::string out;
  for (const auto& m : meta) {
    json j;
    j["id"] = m.id;
    j["modality"] = modality_name(m.modality);
    if (m.payload) j["payload"] = *m.payload;
    out += j.dump();
    out += '\n';
  }
  io::write_file(path, out);
}

std::vector<MetadataRecord> read_metadata(const std::filesystem::path& path) {
  const std::string text = io::read_file(path);
  std::vector<MetadataRecord> meta;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const json j = json::parse(line);
      MetadataRecord m;
      m.id = j.at("id").get<std::string>();
      m.modality = parse_modality(j.value("modality", std::string("text")));
      if (j.contains("payload") && !j["payload"].is_null()) m.payload = j["payload"].get<std::string>();
      meta.push_back(std::move(m));
    } catch (const json::exception& e) {
      fail(ErrorCode::kFormat, fmt::format("{}:{}: {}", path.string(), lineno, e.what()));
    }
  }
  return meta;
}

void save_corpus(const CorpusIndex& corpus, const std::filesystem::path& vectors,
                 const std::filesystem::path& meta) {
  write_vector_file(vectors, static_cast<std::uint32_t>(corpus.size()),
                    static_cast<std::uint32_t>(corpus.dim()), corpus.matrix());
  std::vector<MetadataRecord> records;
  records.reserve(corpus.size());
  for (std::size_t r = 0; r < corpus.size(); ++r) records.push_back(corpus.record(r));
  write_metadata(meta, records);
}

CorpusIndex load_corpus(const std::filesystem::path& vectors, const std::filesystem::path& meta) {
  VectorBlock block = read_vector_file(vectors);
  std::vector<MetadataRecord> records = read_metadata(meta);
  if (records.size() != block.count) {
    fail(ErrorCode::kDimensionMismatch,
         fmt::format("{} metadata rows but {} vectors", records.size(), block.count));
  }
  return ingest(std::move(records), block.dim, std::move(block.data));
}

void validate_task(const RetrievalTask& task, const CorpusIndex& corpus) {
  if (task.gold.empty()) fail(ErrorCode::kContract, fmt::format("task '{}' has no gold ids", task.qid));
  if (task.query.size() != corpus.dim()) {
    fail(ErrorCode::kDimensionMismatch,
         fmt::format("task '{}' query has dim {}, corpus has {}", task.qid, task.query.size(),
                     corpus.dim()));
  }
  std::unordered_set<std::string_view> gold;
  for (const auto& id : task.gold) {
    corpus.row_of(id);
    if (!gold.insert(id).second) {
      fail(ErrorCode::kDuplicateId, fmt::format("task '{}' repeats gold id '{}'", task.qid, id));
    }
  }
  for (const auto& id : task.context) {
    corpus.row_of(id);
    if (!gold.contains(id)) {
      fail(ErrorCode::kContract, fmt::format("task '{}' context id '{}' is not gold", task.qid, id));
    }
  }
  if (task.target) {
    corpus.row_of(*task.target);
    if (!gold.contains(*task.target)) {
      fail(ErrorCode::kContract, fmt::format("task '{}' target '{}' is not gold", task.qid, *task.target));
    }
    if (std::find(task.context.begin(), task.context.end(), *task.target) != task.context.end()) {
      fail(ErrorCode::kContract,
           fmt::format("task '{}' target '{}' is also in the context", task.qid, *task.target));
    }
  }
  if (task.anchor && task.anchor->size() != corpus.dim()) {
    fail(ErrorCode::kDimensionMismatch, fmt::format("task '{}' anchor has wrong dimension", task.qid));
  }
}

namespace {

std::vector<double> unit(std::vector<double> v, const std::string& qid) {
  double n = 0.0;
  for (double x : v) n += x * x;
  n = std::sqrt(n);
  if (n == 0.0 || !std::isfinite(n)) {
    fail(ErrorCode::kInvalidArgument, fmt::format("task '{}' has a zero or non-finite query", qid));
  }
  for (double& x : v) x /= n;
  return v;
}

std::vector<double> read_vec(const json& j) {
  std::vector<double> v;
  v.reserve(j.size());
  for (const auto& x : j) v.push_back(static_cast<double>(x.get<float>()));
  return v;
}

}  // namespace

std::vector<RetrievalTask> parse_tasks(std::string_view jsonl, const CorpusIndex& corpus) {
  std::vector<RetrievalTask> tasks;
  std::istringstream in{std::string(jsonl)};
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    RetrievalTask t;
    try {
      const json j = json::parse(line);
      t.qid = j.at("qid").get<std::string>();
      if (j.contains("query_vec")) {
        t.query = read_vec(j["query_vec"]);
      } else if (j.contains("query_ref")) {
        const auto row = corpus.row(corpus.row_of(j["query_ref"].get<std::string>()));
        t.query.assign(row.begin(), row.end());
      } else {
        fail(ErrorCode::kFormat, fmt::format("task '{}' has neither query_vec nor query_ref", t.qid));
      }
      t.gold = j.at("gold").get<std::vector<std::string>>();
      if (j.contains("context")) t.context = j["context"].get<std::vector<std::string>>();
      if (j.contains("target") && !j["target"].is_null()) t.target = j["target"].get<std::string>();
      t.qtype = j.value("qtype", std::string());
      if (j.contains("anchor_vec")) t.anchor = read_vec(j["anchor_vec"]);
    } catch (const json::exception& e) {
      fail(ErrorCode::kFormat, fmt::format("tasks line {}: {}", lineno, e.what()));
    }
    if (t.query.size() != corpus.dim()) {
      fail(ErrorCode::kDimensionMismatch,
           fmt::format("task '{}' query has dim {}, corpus has {}", t.qid, t.query.size(), corpus.dim()));
    }
    t.query = unit(std::move(t.query), t.qid);
    validate_task(t, corpus);
    tasks.push_back(std::move(t));
  }
  return tasks;
}

std::vector<RetrievalTask> read_tasks(const std::filesystem::path& path, const CorpusIndex& corpus) {
  return parse_tasks(io::read_file(path), corpus);
}

void write_tasks(const std::filesystem::path& path, std::span<const RetrievalTask> tasks) {
  std::string out;
  for (const auto& t : tasks) {
    json j;
    j["qid"] = t.qid;
    std::vector<float> q(t.query.begin(), t.query.end());
    j["query_vec"] = q;
    j["gold"] = t.gold;
    if (!t.context.empty()) j["context"] = t.context;
    if (t.target) j["target"] = *t.target;
    if (!t.qtype.empty()) j["qtype"] = t.qtype;
    if (t.anchor) j["anchor_vec"] = std::vector<float>(t.anchor->begin(), t.anchor->end());
    out += j.dump();
    out += '\n';
  }
  io::write_file(path, out);
}

std::vector<RetrievalTask> expand_leave_one_out(std::span<const RetrievalTask> tasks,
                                                const CorpusIndex& corpus) {
  std::vector<RetrievalTask> out;
  for (const auto& t : tasks) {
    if (t.target) {
      fail(ErrorCode::kContract,
           fmt::format("task '{}' already has a target; leave-one-out needs full gold sets", t.qid));
    }
    for (const auto& id : t.gold) corpus.row_of(id);
    if (t.gold.size() < 2) continue;
    for (std::size_t k = 0; k < t.gold.size(); ++k) {
      RetrievalTask inst;
      inst.qid = fmt::format("{}#{}", t.qid, k);
      inst.query = t.query;
      inst.gold = t.gold;
      inst.target = t.gold[k];
      for (std::size_t j = 0; j < t.gold.size(); ++j) {
        if (j != k) inst.context.push_back(t.gold[j]);
      }
      inst.qtype = t.qtype;
      inst.anchor = t.anchor;
      out.push_back(std::move(inst));
    }
  }
  return out;
}

}  // namespace grail
