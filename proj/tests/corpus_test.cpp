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

#include <cmath>
#include <fstream>
#include <limits>

#include <gtest/gtest.h>

#include "grail/error.hpp"
#include "grail/io.hpp"
#include "test_util.hpp"

namespace grail {
namespace {

using testing_util::TempDir;

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error raised";
  return ErrorCode::kInvalidArgument;
}

std::vector<MetadataRecord> ids(std::initializer_list<const char*> names) {
  std::vector<MetadataRecord> out;
  for (const char* n : names) out.push_back({n, Modality::kText, std::nullopt});
  return out;
}

TEST(Corpus, IngestRejectsBadInput) {
  EXPECT_EQ(code_of([] { ingest(ids({"a", "b"}), 2, {1, 0, 0}); }), ErrorCode::kDimensionMismatch);
  EXPECT_EQ(code_of([] { ingest(ids({"a", "a"}), 2, {1, 0, 0, 1}); }), ErrorCode::kDuplicateId);
  const float nan = std::numeric_limits<float>::quiet_NaN();
  EXPECT_EQ(code_of([&] { ingest(ids({"a", "b"}), 2, {1, 0, nan, 1}); }), ErrorCode::kNonFinite);
  EXPECT_EQ(code_of([] { normalize(ingest(ids({"a"}), 2, {0, 0})); }), ErrorCode::kInvalidArgument);
}

TEST(Corpus, NormalizeGivesUnitRows) {
  const CorpusIndex c = normalize(ingest(ids({"a", "b"}), 2, {3, 4, 0, 2}));
  EXPECT_FLOAT_EQ(c.row(0)[0], 0.6f);
  EXPECT_FLOAT_EQ(c.row(0)[1], 0.8f);
  EXPECT_FLOAT_EQ(c.row(1)[1], 1.0f);
  EXPECT_EQ(c.row_of("b"), 1u);
  EXPECT_FALSE(c.contains("z"));
  EXPECT_EQ(code_of([&] { c.row_of("z"); }), ErrorCode::kNotFound);
}

TEST(Corpus, SaveLoadIsBitwise) {
  TempDir dir("corpus");
  const CorpusIndex c = testing_util::random_corpus(50, 7, 3);
  save_corpus(c, dir / "v.grle", dir / "m.jsonl");
  const CorpusIndex back = load_corpus(dir / "v.grle", dir / "m.jsonl");
  ASSERT_EQ(back.size(), c.size());
  for (std::size_t i = 0; i < c.size(); ++i) {
    EXPECT_EQ(back.id(i), c.id(i));
    EXPECT_EQ(back.modality(i), c.modality(i));
  }
  EXPECT_EQ(std::memcmp(back.matrix().data(), c.matrix().data(), c.matrix().size() * 4), 0);
  save_corpus(back, dir / "v2.grle", dir / "m2.jsonl");
  EXPECT_EQ(io::read_file(dir / "v.grle"), io::read_file(dir / "v2.grle"));
  EXPECT_EQ(io::read_file(dir / "m.jsonl"), io::read_file(dir / "m2.jsonl"));
}

TEST(Corpus, VectorFileErrors) {
  TempDir dir("grle");
  const std::vector<float> data{1, 2, 3, 4};
  write_vector_file(dir / "ok.grle", 2, 2, data);
  std::string bytes = io::read_file(dir / "ok.grle");

  io::write_file(dir / "magic.grle", "XXXX" + bytes.substr(4));
  EXPECT_EQ(code_of([&] { read_vector_file(dir / "magic.grle"); }), ErrorCode::kBadMagic);

  std::string v2 = bytes;
  v2[4] = 2;
  io::write_file(dir / "ver.grle", v2);
  EXPECT_EQ(code_of([&] { read_vector_file(dir / "ver.grle"); }), ErrorCode::kVersionMismatch);

  io::write_file(dir / "short.grle", bytes.substr(0, bytes.size() - 3));
  EXPECT_EQ(code_of([&] { read_vector_file(dir / "short.grle"); }), ErrorCode::kTruncated);

  EXPECT_EQ(code_of([&] { read_vector_file(dir / "missing.grle"); }), ErrorCode::kIo);
}

TEST(Corpus, TasksParseAndValidate) {
  const CorpusIndex c = testing_util::corpus_of({{1, 0}, {0, 1}, {1, 1}}, {"a", "b", "c"});
  const auto tasks = parse_tasks(
      R"({"qid":"q1","query_vec":[3,4],"gold":["a","b"],"qtype":"x"})"
      "\n"
      R"({"qid":"q2","query_ref":"c","gold":["a","b","c"],"context":["a"],"target":"b"})",
      c);
  ASSERT_EQ(tasks.size(), 2u);
  EXPECT_NEAR(tasks[0].query[0], 0.6, 1e-12);
  EXPECT_NEAR(tasks[0].query[1], 0.8, 1e-12);
  EXPECT_EQ(tasks[1].target, "b");

  EXPECT_EQ(code_of([&] { parse_tasks(R"({"qid":"q","query_vec":[1,0],"gold":["z"]})", c); }),
            ErrorCode::kNotFound);
  EXPECT_EQ(code_of([&] { parse_tasks(R"({"qid":"q","query_vec":[1,0,0],"gold":["a"]})", c); }),
            ErrorCode::kDimensionMismatch);
  EXPECT_EQ(code_of([&] {
              parse_tasks(
                  R"({"qid":"q","query_vec":[1,0],"gold":["a","b"],"context":["a"],"target":"a"})", c);
            }),
            ErrorCode::kContract);
  EXPECT_EQ(code_of([&] { parse_tasks("{not json", c); }), ErrorCode::kFormat);
}

TEST(Corpus, TasksRoundTripThroughFile) {
  TempDir dir("tasks");
  const CorpusIndex c = testing_util::corpus_of({{1, 0}, {0, 1}, {1, 1}}, {"a", "b", "c"});
  auto tasks = parse_tasks(R"({"qid":"q1","query_vec":[1,0],"gold":["a","c"],"qtype":"x"})", c);
  write_tasks(dir / "t.jsonl", tasks);
  const auto back = read_tasks(dir / "t.jsonl", c);
  ASSERT_EQ(back.size(), 1u);
  EXPECT_EQ(back[0].gold, tasks[0].gold);
  EXPECT_EQ(back[0].qtype, "x");
}

TEST(Corpus, LeaveOneOutExpansion) {
  const CorpusIndex c = testing_util::corpus_of({{1, 0}, {0, 1}, {1, 1}}, {"a", "b", "c"});
  const auto tasks = parse_tasks(
      R"({"qid":"q1","query_vec":[1,0],"gold":["a","b","c"],"qtype":"x"})"
      "\n"
      R"({"qid":"q2","query_vec":[1,0],"gold":["a"]})",
      c);
  const auto inst = expand_leave_one_out(tasks, c);
  ASSERT_EQ(inst.size(), 3u);  // the singleton gold set is dropped
  for (const auto& t : inst) {
    EXPECT_EQ(t.context.size(), 2u);
    ASSERT_TRUE(t.target);
    EXPECT_EQ(std::count(t.context.begin(), t.context.end(), *t.target), 0);
    EXPECT_EQ(t.qtype, "x");
  }
  EXPECT_EQ(inst[0].qid, "q1#0");
  EXPECT_EQ(*inst[1].target, "b");
}

}  // namespace
}  // namespace grail
