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

#define GRAIL_BUILDING_LIBRARY
#include "grail/grail.h"

#include <cstring>
#include <exception>
#include <filesystem>
#include <memory>
#include <new>
#include <string>

#include <json.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "grail/corpus.hpp"
#include "grail/error.hpp"
#include "grail/router.hpp"
#include "grail/runner.hpp"
#include "grail/search.hpp"
#include "grail/steering.hpp"

struct grail_corpus {
  grail::CorpusIndex index;
};

struct grail_tasks {
  std::vector<grail::RetrievalTask> items;
};

struct grail_params {
  grail::SteeringParams p;
};

struct grail_router {
  grail::RouterParams r;
};

namespace {

thread_local std::string t_last_error;

grail_status set_error(grail_status status, const std::string& message) {
  t_last_error = message;
  return status;
}

template <typename Fn>
grail_status guarded(Fn&& fn) {
  try {
    t_last_error.clear();
    fn();
    return GRAIL_OK;
  } catch (const grail::Error& e) {
    return set_error(static_cast<grail_status>(static_cast<int>(e.code())), e.what());
  } catch (const std::bad_alloc&) {
    return set_error(GRAIL_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return set_error(GRAIL_INTERNAL, e.what());
  } catch (...) {
    return set_error(GRAIL_INTERNAL, "unknown error");
  }
}

void require(bool ok, const char* what) {
  if (!ok) grail::fail(grail::ErrorCode::kInvalidArgument, what);
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.data(), s.size() + 1);
  return out;
}

void emit(const nlohmann::json& j, char** report) {
  if (report) *report = dup_string(j.dump(2));
}

std::filesystem::path out_path(const char* dir) {
  require(dir != nullptr, "output directory is required");
  std::filesystem::path p(dir);
  std::error_code ec;
  std::filesystem::create_directories(p, ec);
  if (ec) grail::fail(grail::ErrorCode::kIo, "cannot create " + p.string() + ": " + ec.message());
  return p;
}

grail::run::Specialists specialists_of(const grail_specialists* s) {
  grail::run::Specialists out;
  if (!s) return out;
  if (s->gap) out.gap = &s->gap->p;
  if (s->router) out.router = &s->router->r;
  if (s->route_map && *s->route_map) out.oracle = grail::parse_route_map(s->route_map);
  if (s->tau_base > 0) out.tau_base = s->tau_base;
  return out;
}

}  // namespace

extern "C" {

const char* grail_last_error(void) { return t_last_error.c_str(); }

const char* grail_status_name(grail_status status) {
  if (status == GRAIL_OK) return "ok";
  if (status == GRAIL_INTERNAL) return "internal";
  if (status >= GRAIL_INVALID_ARGUMENT && status <= GRAIL_FORMAT) {
    return grail::error_code_name(static_cast<grail::ErrorCode>(static_cast<int>(status)));
  }
  return "unknown";
}

void grail_free_string(char* s) { std::free(s); }

grail_status grail_set_log_level(const char* level) {
  return guarded([&] {
    require(level != nullptr, "null argument");
    const auto lvl = spdlog::level::from_str(level);
    if (lvl == spdlog::level::off && std::string(level) != "off") {
      grail::fail(grail::ErrorCode::kInvalidArgument, std::string("unknown log level '") + level + "'");
    }
    static const bool installed = [] {
      spdlog::set_default_logger(spdlog::stderr_color_mt("grail"));
      return true;
    }();
    (void)installed;
    spdlog::set_level(lvl);
  });
}

grail_status grail_set_run_config(const char* json) {
  return guarded([&] {
    if (!json) {
      grail::run::set_run_config(nullptr);
      return;
    }
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(json);
    } catch (const nlohmann::json::exception& e) {
      grail::fail(grail::ErrorCode::kFormat, std::string("run config: ") + e.what());
    }
    require(j.is_object(), "run config must be a JSON object");
    grail::run::set_run_config(std::move(j));
  });
}

grail_status grail_corpus_from_arrays(size_t count, size_t dim, const float* vectors,
                                      const char* const* ids, grail_corpus** out) {
  return guarded([&] {
    require(out && ids && (vectors || count == 0), "null argument");
    std::vector<grail::MetadataRecord> meta(count);
    for (size_t i = 0; i < count; ++i) {
      require(ids[i] != nullptr, "null id");
      meta[i].id = ids[i];
    }
    std::vector<float> data(vectors, vectors + count * dim);
    auto c = std::make_unique<grail_corpus>();
    c->index = grail::normalize(grail::ingest(std::move(meta), dim, std::move(data)));
    *out = c.release();
  });
}

grail_status grail_corpus_ingest(const char* vectors_path, const char* meta_path,
                                 grail_corpus** out) {
  return guarded([&] {
    require(out && vectors_path && meta_path, "null argument");
    grail::VectorBlock block = grail::read_vector_file(vectors_path);
    auto c = std::make_unique<grail_corpus>();
    c->index = grail::normalize(
        grail::ingest(grail::read_metadata(meta_path), block.dim, std::move(block.data)));
    *out = c.release();
  });
}

grail_status grail_corpus_load(const char* vectors_path, const char* meta_path,
                               grail_corpus** out) {
  return guarded([&] {
    require(out && vectors_path && meta_path, "null argument");
    auto c = std::make_unique<grail_corpus>();
    c->index = grail::load_corpus(vectors_path, meta_path);
    *out = c.release();
  });
}

grail_status grail_corpus_save(const grail_corpus* corpus, const char* vectors_path,
                               const char* meta_path) {
  return guarded([&] {
    require(corpus && vectors_path && meta_path, "null argument");
    grail::save_corpus(corpus->index, vectors_path, meta_path);
  });
}

size_t grail_corpus_count(const grail_corpus* corpus) { return corpus ? corpus->index.size() : 0; }

size_t grail_corpus_dim(const grail_corpus* corpus) { return corpus ? corpus->index.dim() : 0; }

const char* grail_corpus_id(const grail_corpus* corpus, size_t row) {
  if (!corpus || row >= corpus->index.size()) return nullptr;
  return corpus->index.id(row).c_str();
}

void grail_corpus_free(grail_corpus* corpus) { delete corpus; }

grail_status grail_top_k(const grail_corpus* corpus, const double* query, size_t dim, size_t k,
                         size_t workers, size_t* rows, double* scores, size_t* found) {
  return guarded([&] {
    require(corpus && query && rows && scores && found, "null argument");
    const grail::Searcher searcher(corpus->index, workers);
    const auto list = searcher.top_k(std::span<const double>(query, dim), k);
    for (size_t i = 0; i < list.hits.size(); ++i) {
      rows[i] = list.hits[i].row;
      scores[i] = list.hits[i].score;
    }
    *found = list.hits.size();
  });
}

grail_status grail_tasks_load(const grail_corpus* corpus, const char* path, grail_tasks** out) {
  return guarded([&] {
    require(corpus && path && out, "null argument");
    auto t = std::make_unique<grail_tasks>();
    t->items = grail::read_tasks(path, corpus->index);
    *out = t.release();
  });
}

grail_status grail_tasks_expand(const grail_corpus* corpus, const grail_tasks* tasks,
                                grail_tasks** out) {
  return guarded([&] {
    require(corpus && tasks && out, "null argument");
    auto t = std::make_unique<grail_tasks>();
    t->items = grail::expand_leave_one_out(tasks->items, corpus->index);
    *out = t.release();
  });
}

size_t grail_tasks_count(const grail_tasks* tasks) { return tasks ? tasks->items.size() : 0; }

void grail_tasks_free(grail_tasks* tasks) { delete tasks; }

grail_status grail_params_create(size_t dim, int use_mix, const char* mode, uint64_t seed,
                                 grail_params** out) {
  return guarded([&] {
    require(out != nullptr, "null argument");
    require(dim > 0, "dim must be positive");
    const auto m = grail::parse_steering_mode(mode ? mode : "gap");
    auto p = std::make_unique<grail_params>();
    p->p = grail::SteeringParams::create(dim, 64, use_mix != 0, m, seed);
    *out = p.release();
  });
}

grail_status grail_params_perturb(grail_params* params, uint64_t seed, double scale) {
  return guarded([&] {
    require(params != nullptr, "null argument");
    grail::perturb(params->p, seed, scale);
  });
}

grail_status grail_params_load(const char* path, grail_params** out) {
  return guarded([&] {
    require(path && out, "null argument");
    auto p = std::make_unique<grail_params>();
    p->p = grail::load_params(path);
    *out = p.release();
  });
}

grail_status grail_params_save(const grail_params* params, const char* path) {
  return guarded([&] {
    require(params && path, "null argument");
    grail::save_params(params->p, path);
  });
}

size_t grail_params_dim(const grail_params* params) { return params ? params->p.dim : 0; }

void grail_params_free(grail_params* params) { delete params; }

grail_status grail_gap_request(const grail_params* params, const double* query, size_t dim,
                               const double* context, size_t n_context, double* h_req, double* g,
                               double* tau) {
  return guarded([&] {
    require(params && query && h_req && (context || n_context == 0), "null argument");
    std::vector<std::vector<double>> ctx(n_context);
    for (size_t i = 0; i < n_context; ++i) ctx[i].assign(context + i * dim, context + (i + 1) * dim);
    const auto s = grail::gap_request(std::span<const double>(query, dim), ctx, params->p);
    std::copy(s.h_req.begin(), s.h_req.end(), h_req);
    if (g) *g = s.g;
    if (tau) *tau = s.tau_dyn;
  });
}

grail_status grail_router_load(const char* path, grail_router** out) {
  return guarded([&] {
    require(path && out, "null argument");
    auto r = std::make_unique<grail_router>();
    r->r = grail::load_router(path);
    *out = r.release();
  });
}

grail_status grail_router_save(const grail_router* router, const char* path) {
  return guarded([&] {
    require(router && path, "null argument");
    grail::save_router(router->r, path);
  });
}

grail_status grail_router_route(const grail_router* router, const double* query, size_t dim,
                                int* label) {
  return guarded([&] {
    require(router && query && label, "null argument");
    *label = grail::route(std::span<const double>(query, dim), router->r);
  });
}

void grail_router_free(grail_router* router) { delete router; }

grail_status grail_ingest(const char* vectors_path, const char* meta_path, const char* out_dir,
                          char** report) {
  return guarded([&] {
    require(vectors_path && meta_path, "null argument");
    emit(grail::run::ingest(vectors_path, meta_path, out_path(out_dir)), report);
  });
}

grail_status grail_synth(const char* options, const char* out_dir, char** report) {
  return guarded([&] {
    const auto opts = grail::run::parse_options(options ? options : "");
    emit(grail::run::synth(opts, out_path(out_dir)), report);
  });
}

grail_status grail_train_steer(const grail_corpus* corpus, const grail_tasks* tasks,
                               grail_params* params, const char* options, const char* out_dir,
                               char** report) {
  return guarded([&] {
    require(corpus && tasks && params, "null argument");
    const auto opts = grail::run::parse_options(options ? options : "");
    emit(grail::run::train_steering(corpus->index, tasks->items, params->p, opts,
                                    out_path(out_dir)),
         report);
  });
}

grail_status grail_train_align(const grail_corpus* corpus, const grail_tasks* tasks,
                               grail_params* params, const char* options, const char* out_dir,
                               char** report) {
  return guarded([&] {
    require(corpus && tasks && params, "null argument");
    const auto opts = grail::run::parse_options(options ? options : "");
    emit(grail::run::train_alignment(corpus->index, tasks->items, params->p, opts,
                                     out_path(out_dir)),
         report);
  });
}

grail_status grail_train_router(const grail_tasks* tasks, const char* route_map,
                                const char* options, const char* out_dir, grail_router** out,
                                char** report) {
  return guarded([&] {
    require(tasks && route_map && out, "null argument");
    const auto opts = grail::run::parse_options(options ? options : "");
    auto r = std::make_unique<grail_router>();
    const auto j = grail::run::train_router(tasks->items, grail::parse_route_map(route_map), r->r,
                                            opts, out_path(out_dir));
    emit(j, report);
    *out = r.release();
  });
}

grail_status grail_complete(const grail_corpus* corpus, const grail_tasks* tasks,
                            const char* mode, const grail_specialists* specialists,
                            const char* ks, size_t workers, const char* out_dir, char** report) {
  return guarded([&] {
    require(corpus && tasks && mode && ks, "null argument");
    const auto k = grail::run::parse_ks(ks);
    emit(grail::run::complete(corpus->index, tasks->items, grail::parse_retrieval_mode(mode),
                              specialists_of(specialists), k, workers, out_path(out_dir)),
         report);
  });
}

grail_status grail_build_pool(const grail_corpus* corpus, const grail_tasks* tasks,
                              const char* mode, const grail_specialists* specialists,
                              const char* schedule, size_t workers, const char* out_dir,
                              char** report) {
  return guarded([&] {
    require(corpus && tasks && mode && schedule, "null argument");
    emit(grail::run::build_pool(corpus->index, tasks->items, grail::parse_retrieval_mode(mode),
                                specialists_of(specialists), grail::parse_schedule(schedule),
                                workers, out_path(out_dir)),
         report);
  });
}

grail_status grail_eval(const grail_corpus* corpus, const grail_tasks* tasks,
                        const grail_specialists* specialists, const char* ks,
                        const char* schedule, size_t workers, const char* out_dir,
                        char** report) {
  return guarded([&] {
    require(corpus && tasks && ks && schedule, "null argument");
    const auto k = grail::run::parse_ks(ks);
    emit(grail::run::eval(corpus->index, tasks->items, specialists_of(specialists), k,
                          grail::parse_schedule(schedule), workers, out_path(out_dir)),
         report);
  });
}

grail_status grail_grad_check(const grail_corpus* corpus, const grail_tasks* tasks,
                              grail_params* params, size_t batch, size_t batches, uint64_t seed,
                              double* max_rel_error, char** report) {
  return guarded([&] {
    require(corpus && tasks && params, "null argument");
    const auto j = grail::run::grad_check(corpus->index, tasks->items, params->p, batch, batches,
                                          seed);
    if (max_rel_error) *max_rel_error = j.at("max_rel_error_value").get<double>();
    emit(j, report);
  });
}

}  // extern "C"
