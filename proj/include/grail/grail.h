/* Copyright 2026 The GRAIL Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef GRAIL_GRAIL_H_
#define GRAIL_GRAIL_H_

/* C interface to the grail retrieval core. Every call returns a status; on
 * failure grail_last_error() holds a one-line message for the calling thread.
 * Strings returned through char** are owned by the caller and released with
 * grail_free_string. Handles are released with their *_free function, which
 * accepts NULL. */

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

#if defined(GRAIL_BUILDING_LIBRARY)
#define GRAIL_API __attribute__((visibility("default")))
#else
#define GRAIL_API
#endif

typedef enum grail_status {
  GRAIL_OK = 0,
  GRAIL_INVALID_ARGUMENT = 1,
  GRAIL_DIMENSION_MISMATCH = 2,
  GRAIL_NON_FINITE = 3,
  GRAIL_DUPLICATE_ID = 4,
  GRAIL_NOT_FOUND = 5,
  GRAIL_BAD_MAGIC = 6,
  GRAIL_VERSION_MISMATCH = 7,
  GRAIL_TRUNCATED = 8,
  GRAIL_IO = 9,
  GRAIL_CONTRACT = 10,
  GRAIL_FORMAT = 11,
  GRAIL_INTERNAL = 99
} grail_status;

typedef struct grail_corpus grail_corpus;
typedef struct grail_tasks grail_tasks;
typedef struct grail_params grail_params;
typedef struct grail_router grail_router;

/* Borrowed specialists for completion, pool and eval runs. Any pointer may be
 * NULL. A non-empty route_map ("compose=1,aggregate=0") selects per-qtype
 * oracle routing in hybrid mode instead of the router. tau_base <= 0 means
 * the default 0.05. */
typedef struct grail_specialists {
  const grail_params* gap;
  const grail_router* router;
  const char* route_map;
  double tau_base;
} grail_specialists;

GRAIL_API const char* grail_last_error(void);
GRAIL_API const char* grail_status_name(grail_status status);
GRAIL_API void grail_free_string(char* s);

/* trace | debug | info | warn | error | off. Logs go to stderr. */
GRAIL_API grail_status grail_set_log_level(const char* level);

/* JSON object echoed into every JSON report as "run_config"; NULL clears. */
GRAIL_API grail_status grail_set_run_config(const char* json);

/* ---- corpus ---- */

/* Validates and L2-normalises `count` rows of `dim` floats. */
GRAIL_API grail_status grail_corpus_from_arrays(size_t count, size_t dim, const float* vectors,
                                                const char* const* ids, grail_corpus** out);
/* Reads raw vectors + metadata, validates and normalises. */
GRAIL_API grail_status grail_corpus_ingest(const char* vectors_path, const char* meta_path,
                                           grail_corpus** out);
/* Reads an already normalised corpus bit for bit. */
GRAIL_API grail_status grail_corpus_load(const char* vectors_path, const char* meta_path,
                                         grail_corpus** out);
GRAIL_API grail_status grail_corpus_save(const grail_corpus* corpus, const char* vectors_path,
                                         const char* meta_path);
GRAIL_API size_t grail_corpus_count(const grail_corpus* corpus);
GRAIL_API size_t grail_corpus_dim(const grail_corpus* corpus);
/* NULL when row is out of range. Valid while the corpus lives. */
GRAIL_API const char* grail_corpus_id(const grail_corpus* corpus, size_t row);
GRAIL_API void grail_corpus_free(grail_corpus* corpus);

/* Exact top-k by inner product. rows/scores must hold k entries; *found
 * receives the number written. */
GRAIL_API grail_status grail_top_k(const grail_corpus* corpus, const double* query, size_t dim,
                                   size_t k, size_t workers, size_t* rows, double* scores,
                                   size_t* found);

/* ---- tasks ---- */

GRAIL_API grail_status grail_tasks_load(const grail_corpus* corpus, const char* path,
                                        grail_tasks** out);
/* Leave-one-out expansion into completion instances. */
GRAIL_API grail_status grail_tasks_expand(const grail_corpus* corpus, const grail_tasks* tasks,
                                          grail_tasks** out);
GRAIL_API size_t grail_tasks_count(const grail_tasks* tasks);
GRAIL_API void grail_tasks_free(grail_tasks* tasks);

/* ---- steering parameters ---- */

/* mode is "gap" or "additive". */
GRAIL_API grail_status grail_params_create(size_t dim, int use_mix, const char* mode,
                                           uint64_t seed, grail_params** out);
/* Adds N(0, scale^2) noise to every steering tensor. */
GRAIL_API grail_status grail_params_perturb(grail_params* params, uint64_t seed, double scale);
GRAIL_API grail_status grail_params_load(const char* path, grail_params** out);
GRAIL_API grail_status grail_params_save(const grail_params* params, const char* path);
GRAIL_API size_t grail_params_dim(const grail_params* params);
GRAIL_API void grail_params_free(grail_params* params);

/* One gap-aware steering step. context is n_context rows of dim doubles;
 * h_req receives dim doubles. g and tau may be NULL. */
GRAIL_API grail_status grail_gap_request(const grail_params* params, const double* query,
                                         size_t dim, const double* context, size_t n_context,
                                         double* h_req, double* g, double* tau);

/* ---- router ---- */

GRAIL_API grail_status grail_router_load(const char* path, grail_router** out);
GRAIL_API grail_status grail_router_save(const grail_router* router, const char* path);
/* 0 additive, 1 gap. */
GRAIL_API grail_status grail_router_route(const grail_router* router, const double* query,
                                          size_t dim, int* label);
GRAIL_API void grail_router_free(grail_router* router);

/* ---- pipelines ----
 * Each writes its reports into out_dir (created if missing) and returns the
 * summary JSON through *report when report is not NULL. options is a
 * "key=value,key=value" list; unknown keys are rejected. */

GRAIL_API grail_status grail_ingest(const char* vectors_path, const char* meta_path,
                                    const char* out_dir, char** report);
GRAIL_API grail_status grail_synth(const char* options, const char* out_dir, char** report);
GRAIL_API grail_status grail_train_steer(const grail_corpus* corpus, const grail_tasks* tasks,
                                         grail_params* params, const char* options,
                                         const char* out_dir, char** report);
GRAIL_API grail_status grail_train_align(const grail_corpus* corpus, const grail_tasks* tasks,
                                         grail_params* params, const char* options,
                                         const char* out_dir, char** report);
/* route_map labels each qtype. The trained router is returned in *out. */
GRAIL_API grail_status grail_train_router(const grail_tasks* tasks, const char* route_map,
                                          const char* options, const char* out_dir,
                                          grail_router** out, char** report);
/* mode: query_only | additive | gap | hybrid. ks: "1,5,10". */
GRAIL_API grail_status grail_complete(const grail_corpus* corpus, const grail_tasks* tasks,
                                      const char* mode, const grail_specialists* specialists,
                                      const char* ks, size_t workers, const char* out_dir,
                                      char** report);
/* schedule: "3+2+3+2", "[5]*2", ... */
GRAIL_API grail_status grail_build_pool(const grail_corpus* corpus, const grail_tasks* tasks,
                                        const char* mode, const grail_specialists* specialists,
                                        const char* schedule, size_t workers, const char* out_dir,
                                        char** report);
GRAIL_API grail_status grail_eval(const grail_corpus* corpus, const grail_tasks* tasks,
                                  const grail_specialists* specialists, const char* ks,
                                  const char* schedule, size_t workers, const char* out_dir,
                                  char** report);
/* *max_rel_error receives the worst relative error over all batches. */
GRAIL_API grail_status grail_grad_check(const grail_corpus* corpus, const grail_tasks* tasks,
                                        grail_params* params, size_t batch, size_t batches,
                                        uint64_t seed, double* max_rel_error, char** report);

#ifdef __cplusplus
}
#endif

#endif  /* GRAIL_GRAIL_H_ */
