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

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace grail {

enum class Modality : std::uint8_t { kText, kTable, kImage };

const char* modality_name(Modality m) noexcept;
/// Throws kFormat for anything other than "text", "table" or "image".
Modality parse_modality(std::string_view name);

/// One row of the metadata JSON-lines file.
struct MetadataRecord {
  std::string id;
  Modality modality = Modality::kText;
  std::optional<std::string> payload;
};

/// Dense, immutable evidence corpus. Rows are float32, row-major.
class CorpusIndex {
 public:
  CorpusIndex() = default;

  std::size_t dim() const { return dim_; }
  std::size_t size() const { return ids_.size(); }

  std::span<const float> row(std::size_t r) const {
    return {data_.data() + r * dim_, dim_};
  }
  std::span<const float> matrix() const { return data_; }
  const std::string& id(std::size_t r) const { return ids_[r]; }
  Modality modality(std::size_t r) const { return records_[r].modality; }
  const MetadataRecord& record(std::size_t r) const { return records_[r]; }

  std::optional<std::size_t> find(std::string_view id) const;
  /// Throws kNotFound naming the id.
  std::size_t row_of(std::string_view id) const;
  bool contains(std::string_view id) const { return find(id).has_value(); }

  /// Ordinal of each row when rows are sorted by id; used for tie-breaking.
  std::uint32_t id_order(std::size_t r) const { return id_order_[r]; }

 private:
  friend CorpusIndex ingest(std::vector<MetadataRecord> meta, std::size_t dim,
                            std::vector<float> vectors);
  friend CorpusIndex normalize(const CorpusIndex& corpus);

  void build_lookup();

  std::size_t dim_ = 0;
  std::vector<float> data_;
  std::vector<std::string> ids_;
  std::vector<MetadataRecord> records_;
  std::vector<std::uint32_t> id_order_;
  std::unordered_map<std::string, std::size_t> rows_;
};

/// Validates and loads a corpus. `vectors` holds meta.size() * dim floats.
/// Errors: dimension mismatch, duplicate id, non-finite component (with row).
CorpusIndex ingest(std::vector<MetadataRecord> meta, std::size_t dim, std::vector<float> vectors);

/// Copy of `corpus` with every row scaled to unit L2 norm. Zero rows fail with
/// the offending id.
CorpusIndex normalize(const CorpusIndex& corpus);

// Vector file: "GRLE", u32 version (1), u32 count, u32 dim, then count*dim
// float32, all little-endian, row-major.
inline constexpr char kVectorMagic[4] = {'G', 'R', 'L', 'E'};
inline constexpr std::uint32_t kVectorVersion = 1;

struct VectorBlock {
  std::uint32_t count = 0;
  std::uint32_t dim = 0;
  std::vector<float> data;
};

void write_vector_file(const std::filesystem::path& path, std::uint32_t count, std::uint32_t dim,
                       std::span<const float> data);
/// Errors: kBadMagic, kVersionMismatch, kTruncated, kIo.
VectorBlock read_vector_file(const std::filesystem::path& path);

void write_metadata(const std::filesystem::path& path, std::span<const MetadataRecord> meta);
std::vector<MetadataRecord> read_metadata(const std::filesystem::path& path);

void save_corpus(const CorpusIndex& corpus, const std::filesystem::path& vectors,
                 const std::filesystem::path& meta);
/// Loads and validates; does not renormalise, so save/load is bitwise.
CorpusIndex load_corpus(const std::filesystem::path& vectors, const std::filesystem::path& meta);

struct RetrievalTask {
  std::string qid;
  std::vector<double> query;
  std::vector<std::string> gold;
  std::vector<std::string> context;
  std::optional<std::string> target;
  std::string qtype;
  std::optional<std::vector<double>> anchor;
};

/// Checks the task invariants against the corpus: nonempty gold, all ids
/// present, context within gold, target in gold and not in context.
void validate_task(const RetrievalTask& task, const CorpusIndex& corpus);

/// Task JSON-lines. Query vectors are L2-normalised on load; "query_ref"
/// copies the referenced corpus row.
std::vector<RetrievalTask> read_tasks(const std::filesystem::path& path, const CorpusIndex& corpus);
std::vector<RetrievalTask> parse_tasks(std::string_view jsonl, const CorpusIndex& corpus);
void write_tasks(const std::filesystem::path& path, std::span<const RetrievalTask> tasks);

/// Turns each task with |gold| >= 2 into |gold| completion instances, one per
/// withheld target with the rest of the gold set as context. Smaller tasks
/// are dropped. Instance qids are "<qid>#<k>".
std::vector<RetrievalTask> expand_leave_one_out(std::span<const RetrievalTask> tasks,
                                                const CorpusIndex& corpus);

}  // namespace grail
