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


#include "grail/grail.h"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include <gtest/gtest.h>
#include <json.hpp>

namespace {

namespace fs = std::filesystem;

struct Dir {
  Dir() {
    std::random_device rd;
    path = fs::temp_directory_path() / ("grail-capi-" + std::to_string(rd()));
    fs::create_directories(path);
  }
  ~Dir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
  std::string operator/(const std::string& name) const { return (path / name).string(); }
  fs::path path;
};

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

TEST(CApi, StatusNamesAndLastError) {
  EXPECT_STREQ(grail_status_name(GRAIL_OK), "ok");
  EXPECT_STREQ(grail_status_name(GRAIL_INTERNAL), "internal");
  EXPECT_STRNE(grail_status_name(GRAIL_DIMENSION_MISMATCH), "unknown");
  EXPECT_STREQ(grail_status_name(static_cast<grail_status>(42)), "unknown");

  grail_corpus* c = nullptr;
  EXPECT_EQ(grail_corpus_load("/nonexistent/x.grle", "/nonexistent/x.jsonl", &c), GRAIL_IO);
  EXPECT_EQ(c, nullptr);
  EXPECT_NE(std::string(grail_last_error()), "");
  EXPECT_EQ(grail_set_log_level("loud"), GRAIL_INVALID_ARGUMENT);
  EXPECT_EQ(grail_set_log_level("warn"), GRAIL_OK);
  EXPECT_EQ(grail_set_run_config("{not json"), GRAIL_FORMAT);
  EXPECT_EQ(grail_set_run_config(nullptr), GRAIL_OK);
}

TEST(CApi, CorpusFromArraysAndTopK) {
  const std::vector<float> v{3, 0, 0, 0, 1, 0, 1, 1, 0};
  const char* ids[] = {"a", "b", "c"};
  grail_corpus* c = nullptr;
  ASSERT_EQ(grail_corpus_from_arrays(3, 3, v.data(), ids, &c), GRAIL_OK);
  EXPECT_EQ(grail_corpus_count(c), 3u);
  EXPECT_EQ(grail_corpus_dim(c), 3u);
  EXPECT_STREQ(grail_corpus_id(c, 2), "c");
  EXPECT_EQ(grail_corpus_id(c, 3), nullptr);

  const double q[] = {1, 0.1, 0};
  size_t rows[3];
  double scores[3];
  size_t found = 0;
  ASSERT_EQ(grail_top_k(c, q, 3, 3, 2, rows, scores, &found), GRAIL_OK);
  ASSERT_EQ(found, 3u);
  EXPECT_EQ(rows[0], 0u);
  EXPECT_EQ(rows[1], 2u);
  EXPECT_EQ(rows[2], 1u);
  EXPECT_NEAR(scores[0], 1.0, 1e-7);
  EXPECT_NEAR(scores[1], 1.1 / std::sqrt(2.0), 1e-7);
  EXPECT_EQ(grail_top_k(c, q, 2, 1, 1, rows, scores, &found), GRAIL_DIMENSION_MISMATCH);
  EXPECT_EQ(grail_top_k(c, q, 3, 0, 1, rows, scores, &found), GRAIL_INVALID_ARGUMENT);
  EXPECT_EQ(grail_top_k(nullptr, q, 3, 1, 1, rows, scores, &found), GRAIL_INVALID_ARGUMENT);

  const char* dup[] = {"a", "a", "c"};
  grail_corpus* bad = nullptr;
  EXPECT_EQ(grail_corpus_from_arrays(3, 3, v.data(), dup, &bad), GRAIL_DUPLICATE_ID);
  std::vector<float> nan = v;
  nan[4] = NAN;
  EXPECT_EQ(grail_corpus_from_arrays(3, 3, nan.data(), ids, &bad), GRAIL_NON_FINITE);
  EXPECT_EQ(bad, nullptr);

  Dir d;
  ASSERT_EQ(grail_corpus_save(c, (d / "c.grle").c_str(), (d / "c.jsonl").c_str()), GRAIL_OK);
  grail_corpus* back = nullptr;
  ASSERT_EQ(grail_corpus_load((d / "c.grle").c_str(), (d / "c.jsonl").c_str(), &back), GRAIL_OK);
  ASSERT_EQ(grail_corpus_save(back, (d / "d.grle").c_str(), (d / "d.jsonl").c_str()), GRAIL_OK);
  EXPECT_EQ(slurp(d / "c.grle"), slurp(d / "d.grle"));
  EXPECT_EQ(slurp(d / "c.jsonl"), slurp(d / "d.jsonl"));
  grail_corpus_free(back);
  grail_corpus_free(c);
  grail_corpus_free(nullptr);
}

TEST(CApi, ParamsAndGapRequest) {
  grail_params* p = nullptr;
  EXPECT_EQ(grail_params_create(4, 1, "sideways", 0, &p), GRAIL_INVALID_ARGUMENT);
  ASSERT_EQ(grail_params_create(4, 1, "gap", 0, &p), GRAIL_OK);
  EXPECT_EQ(grail_params_dim(p), 4u);
  EXPECT_EQ(grail_params_perturb(p, 1, -1.0), GRAIL_INVALID_ARGUMENT);
  ASSERT_EQ(grail_params_perturb(p, 1, 0.1), GRAIL_OK);

  const double q[] = {0.5, 0.5, 0.5, 0.5};
  const double ctx[] = {1, 0, 0, 0, 0, 1, 0, 0};
  double h[4], g = 0, tau = 0;
  ASSERT_EQ(grail_gap_request(p, q, 4, ctx, 2, h, &g, &tau), GRAIL_OK);
  EXPECT_GT(g, 0.0);
  EXPECT_LT(g, 1.0);
  EXPECT_GE(tau, 1e-3);
  EXPECT_LE(tau, 10.0);
  double mean = 0;
  for (double x : h) mean += x / 4;
  EXPECT_NEAR(mean, 0.0, 1e-12);
  EXPECT_EQ(grail_gap_request(p, q, 3, ctx, 2, h, nullptr, nullptr), GRAIL_DIMENSION_MISMATCH);

  Dir d;
  ASSERT_EQ(grail_params_save(p, (d / "p.grlp").c_str()), GRAIL_OK);
  grail_params* back = nullptr;
  ASSERT_EQ(grail_params_load((d / "p.grlp").c_str(), &back), GRAIL_OK);
  double h2[4];
  ASSERT_EQ(grail_gap_request(back, q, 4, ctx, 2, h2, nullptr, nullptr), GRAIL_OK);
  for (int i = 0; i < 4; ++i) EXPECT_NEAR(h[i], h2[i], 1e-6);
  ASSERT_EQ(grail_params_save(back, (d / "q.grlp").c_str()), GRAIL_OK);
  EXPECT_EQ(slurp(d / "p.grlp"), slurp(d / "q.grlp"));
  {
    std::ofstream(d / "junk.grlp") << "nope";
  }
  grail_params* junk = nullptr;
  EXPECT_EQ(grail_params_load((d / "junk.grlp").c_str(), &junk), GRAIL_FORMAT);
  EXPECT_EQ(junk, nullptr);
  grail_params_free(back);
  grail_params_free(p);
}

TEST(CApi, SynthTrainAndEvaluate) {
  Dir d;
  char* report = nullptr;
  ASSERT_EQ(grail_synth("dim=24,compose_tasks=20,aggregate_tasks=20,background=80,distractors=4",
                        d.path.c_str(), &report),
            GRAIL_OK)
      << grail_last_error();
  auto j = nlohmann::json::parse(report);
  grail_free_string(report);
  EXPECT_EQ(j.at("tasks").get<int>(), 40);
  EXPECT_EQ(grail_synth("dimension=3", d.path.c_str(), nullptr), GRAIL_INVALID_ARGUMENT);

  grail_corpus* c = nullptr;
  ASSERT_EQ(grail_corpus_load((d / "corpus.grle").c_str(), (d / "meta.jsonl").c_str(), &c), GRAIL_OK);
  grail_tasks* t = nullptr;
  ASSERT_EQ(grail_tasks_load(c, (d / "tasks.jsonl").c_str(), &t), GRAIL_OK);
  EXPECT_EQ(grail_tasks_count(t), 40u);

  grail_params* p = nullptr;
  ASSERT_EQ(grail_params_create(24, 1, "gap", 3, &p), GRAIL_OK);
  ASSERT_EQ(grail_train_steer(c, t, p, "epochs=3,lr=1e-3,batch=8", (d / "steer").c_str(), nullptr),
            GRAIL_OK)
      << grail_last_error();
  EXPECT_TRUE(fs::exists(d.path / "steer" / "training.csv"));
  EXPECT_EQ(grail_train_steer(c, t, p, "epochz=3", (d / "steer").c_str(), nullptr),
            GRAIL_INVALID_ARGUMENT);

  grail_router* r = nullptr;
  ASSERT_EQ(grail_train_router(t, "compose=1,aggregate=0", "iterations=200", (d / "router").c_str(),
                               &r, nullptr),
            GRAIL_OK)
      << grail_last_error();
  int label = -1;
  const std::vector<double> q(24, 0.2);
  ASSERT_EQ(grail_router_route(r, q.data(), 24, &label), GRAIL_OK);
  EXPECT_TRUE(label == 0 || label == 1);
  grail_router* missing = nullptr;
  EXPECT_EQ(grail_train_router(t, "compose=1", "", (d / "r2").c_str(), &missing, nullptr),
            GRAIL_NOT_FOUND);

  grail_specialists spec{p, r, nullptr, 0.0};
  ASSERT_EQ(grail_build_pool(c, t, "hybrid", &spec, "3+2", 1, (d / "a").c_str(), nullptr), GRAIL_OK)
      << grail_last_error();
  ASSERT_EQ(grail_build_pool(c, t, "hybrid", &spec, "3+2", 3, (d / "b").c_str(), nullptr), GRAIL_OK);
  EXPECT_EQ(slurp(d / "a/pool_hybrid.csv"), slurp(d / "b/pool_hybrid.csv"));
  EXPECT_EQ(grail_build_pool(c, t, "hybrid", &spec, "3+", 1, (d / "a").c_str(), nullptr),
            GRAIL_FORMAT);

  ASSERT_EQ(grail_complete(c, t, "gap", &spec, "1,5", 1, (d / "a").c_str(), &report), GRAIL_OK);
  j = nlohmann::json::parse(report);
  grail_free_string(report);
  EXPECT_TRUE(j.is_object());
  EXPECT_TRUE(fs::exists(d.path / "a" / "completion_gap.csv"));

  double worst = 1.0;
  ASSERT_EQ(grail_grad_check(c, t, p, 4, 2, 1, &worst, nullptr), GRAIL_OK);
  EXPECT_LT(worst, 1e-4);

  grail_router_free(r);
  grail_params_free(p);
  grail_tasks_free(t);
  grail_corpus_free(c);
}

}  // namespace
