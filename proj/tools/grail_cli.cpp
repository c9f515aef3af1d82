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

// grail: command-line driver over the C API.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "grail/grail.h"

namespace {

struct Failure {
  grail_status status;
  std::string message;
};

[[noreturn]] void die(grail_status status, std::string message) {
  throw Failure{status, std::move(message)};
}

void check(grail_status status) {
  if (status != GRAIL_OK) die(status, grail_last_error());
}

// Keys accepted in --config files and --set. Anything under "synth." is
// forwarded to the generator, which validates it.
const std::set<std::string> kKnownKeys = {
    "corpus",     "meta",        "tasks",      "params",       "router",  "schedule",
    "mode",       "k",           "seed",       "out",          "workers", "route_map",
    "tau_base",   "use_mix",     "batch",      "epochs",       "lr",      "tau",
    "negatives",  "weight_decay", "qtype",     "strategy",     "router_iterations",
    "router_lr",  "holdout",     "grad_batch", "grad_batches", "perturb"};

bool known(const std::string& key) {
  return kKnownKeys.count(key) > 0 || key.rfind("synth.", 0) == 0;
}

void put(std::map<std::string, std::string>& cfg, const std::string& key, const std::string& value,
         const std::string& origin) {
  if (!known(key)) die(GRAIL_INVALID_ARGUMENT, "unknown config key '" + key + "' in " + origin);
  cfg[key] = value;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

void load_config(std::map<std::string, std::string>& cfg, const std::string& path) {
  std::ifstream in(path);
  if (!in) die(GRAIL_IO, "cannot read config " + path);
  std::string line;
  int n = 0;
  while (std::getline(in, line)) {
    ++n;
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      die(GRAIL_FORMAT, path + ":" + std::to_string(n) + ": expected key=value");
    }
    put(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)), path);
  }
}

class Run {
 public:
  explicit Run(std::map<std::string, std::string> cfg) : cfg_(std::move(cfg)) {}

  bool has(const std::string& key) const { return cfg_.count(key) > 0; }

  std::string get(const std::string& key, const std::string& fallback) const {
    const auto it = cfg_.find(key);
    return it == cfg_.end() ? fallback : it->second;
  }

  const std::string& need(const std::string& key) const {
    const auto it = cfg_.find(key);
    if (it == cfg_.end()) die(GRAIL_INVALID_ARGUMENT, "missing required --" + key);
    return it->second;
  }

  std::size_t workers() const { return std::stoul(get("workers", "0")); }
  std::uint64_t seed() const { return std::stoull(get("seed", "0")); }

  // "a=1,b=2" from the given config keys, renamed where the pipeline uses
  // another name.
  std::string options(const std::vector<std::pair<std::string, std::string>>& keys) const {
    std::string out;
    for (const auto& [cfg_key, opt_key] : keys) {
      const auto it = cfg_.find(cfg_key);
      if (it == cfg_.end()) continue;
      if (!out.empty()) out += ',';
      out += opt_key + "=" + it->second;
    }
    return out;
  }

  const std::map<std::string, std::string>& all() const { return cfg_; }

 private:
  std::map<std::string, std::string> cfg_;
};

struct CorpusDeleter {
  void operator()(grail_corpus* p) const { grail_corpus_free(p); }
};
struct TasksDeleter {
  void operator()(grail_tasks* p) const { grail_tasks_free(p); }
};
struct ParamsDeleter {
  void operator()(grail_params* p) const { grail_params_free(p); }
};
struct RouterDeleter {
  void operator()(grail_router* p) const { grail_router_free(p); }
};
using Corpus = std::unique_ptr<grail_corpus, CorpusDeleter>;
using Tasks = std::unique_ptr<grail_tasks, TasksDeleter>;
using Params = std::unique_ptr<grail_params, ParamsDeleter>;
using Router = std::unique_ptr<grail_router, RouterDeleter>;

Corpus load_corpus(const Run& r) {
  grail_corpus* c = nullptr;
  const std::string& vectors = r.need("corpus");
  const std::string& meta = r.need("meta");
  check(grail_corpus_load(vectors.c_str(), meta.c_str(), &c));
  return Corpus(c);
}

Tasks load_tasks(const Run& r, const grail_corpus* c) {
  grail_tasks* t = nullptr;
  check(grail_tasks_load(c, r.need("tasks").c_str(), &t));
  return Tasks(t);
}

Params load_params(const Run& r) {
  grail_params* p = nullptr;
  check(grail_params_load(r.need("params").c_str(), &p));
  return Params(p);
}

Params new_params(const Run& r, std::size_t dim, const std::string& mode) {
  const std::string mix = r.get("use_mix", "true");
  if (mix != "true" && mix != "false") die(GRAIL_INVALID_ARGUMENT, "use_mix must be true or false");
  grail_params* p = nullptr;
  check(grail_params_create(dim, mix == "true" ? 1 : 0, mode.c_str(), r.seed(), &p));
  return Params(p);
}

// A route map is given inline ("compose=1,aggregate=0") or as a file holding
// that text, such as routes.txt from synth.
std::string route_map(const std::string& value) {
  std::error_code ec;
  if (!std::filesystem::is_regular_file(value, ec)) return value;
  std::ifstream in(value);
  std::stringstream ss;
  ss << in.rdbuf();
  return trim(ss.str().substr(0, ss.str().find('\n')));
}

void print_report(char* report) {
  if (!report) return;
  std::cout << report << "\n";
  grail_free_string(report);
}

const std::vector<std::pair<std::string, std::string>> kTrainKeys = {
    {"batch", "batch"}, {"epochs", "epochs"}, {"lr", "lr"},
    {"tau", "tau"},     {"negatives", "negatives"}, {"weight_decay", "weight_decay"},
    {"seed", "seed"},   {"workers", "workers"}};

int cmd_ingest(const Run& r) {
  char* report = nullptr;
  check(grail_ingest(r.need("corpus").c_str(), r.need("meta").c_str(), r.need("out").c_str(),
                     &report));
  print_report(report);
  return 0;
}

int cmd_synth(const Run& r) {
  std::string opts;
  for (const auto& [k, v] : r.all()) {
    if (k.rfind("synth.", 0) != 0) continue;
    if (!opts.empty()) opts += ',';
    opts += k.substr(6) + "=" + v;
  }
  if (r.has("seed")) opts += (opts.empty() ? "" : ",") + std::string("seed=") + r.get("seed", "");
  char* report = nullptr;
  check(grail_synth(opts.c_str(), r.need("out").c_str(), &report));
  print_report(report);
  return 0;
}

int cmd_train_steer(const Run& r) {
  const Corpus c = load_corpus(r);
  const Tasks t = load_tasks(r, c.get());
  const Params p = r.has("params") ? load_params(r)
                                   : new_params(r, grail_corpus_dim(c.get()), r.get("mode", "gap"));
  auto keys = kTrainKeys;
  keys.emplace_back("qtype", "qtype");
  char* report = nullptr;
  check(grail_train_steer(c.get(), t.get(), p.get(), r.options(keys).c_str(),
                          r.need("out").c_str(), &report));
  print_report(report);
  return 0;
}

int cmd_train_align(const Run& r) {
  const Corpus c = load_corpus(r);
  const Tasks t = load_tasks(r, c.get());
  const Params p = r.has("params") ? load_params(r)
                                   : new_params(r, grail_corpus_dim(c.get()), "gap");
  auto keys = kTrainKeys;
  keys.emplace_back("strategy", "strategy");
  char* report = nullptr;
  check(grail_train_align(c.get(), t.get(), p.get(), r.options(keys).c_str(),
                          r.need("out").c_str(), &report));
  print_report(report);
  return 0;
}

int cmd_train_router(const Run& r) {
  const Corpus c = load_corpus(r);
  const Tasks t = load_tasks(r, c.get());
  const std::string routes = route_map(r.need("route_map"));
  const std::string opts = r.options(
      {{"router_iterations", "iterations"}, {"router_lr", "lr"}, {"holdout", "holdout"}, {"seed", "seed"}});
  grail_router* router = nullptr;
  char* report = nullptr;
  check(grail_train_router(t.get(), routes.c_str(), opts.c_str(), r.need("out").c_str(), &router,
                           &report));
  Router owned(router);
  print_report(report);
  return 0;
}

// Specialists named by --params, --router and route_map; the handles live in
// the holder.
struct SpecialistHolder {
  Params gap;
  Router router;
  std::string routes;
  grail_specialists s{};
};

void specialists(const Run& r, SpecialistHolder& h) {
  if (r.has("params")) {
    h.gap = load_params(r);
    h.s.gap = h.gap.get();
  }
  if (r.has("router")) {
    grail_router* router = nullptr;
    check(grail_router_load(r.need("router").c_str(), &router));
    h.router.reset(router);
    h.s.router = router;
  }
  if (r.has("route_map")) {
    h.routes = route_map(r.need("route_map"));
    h.s.route_map = h.routes.c_str();
  }
  h.s.tau_base = std::stod(r.get("tau_base", "0"));
}

int cmd_complete(const Run& r) {
  const Corpus c = load_corpus(r);
  const Tasks t = load_tasks(r, c.get());
  SpecialistHolder h;
  specialists(r, h);
  char* report = nullptr;
  check(grail_complete(c.get(), t.get(), r.need("mode").c_str(), &h.s,
                       r.get("k", "1,5,10").c_str(), r.workers(), r.need("out").c_str(), &report));
  print_report(report);
  return 0;
}

int cmd_build_pool(const Run& r) {
  const Corpus c = load_corpus(r);
  const Tasks t = load_tasks(r, c.get());
  SpecialistHolder h;
  specialists(r, h);
  char* report = nullptr;
  check(grail_build_pool(c.get(), t.get(), r.need("mode").c_str(), &h.s,
                         r.get("schedule", "3+2+3+2").c_str(), r.workers(), r.need("out").c_str(),
                         &report));
  print_report(report);
  return 0;
}

int cmd_eval(const Run& r) {
  const Corpus c = load_corpus(r);
  const Tasks t = load_tasks(r, c.get());
  SpecialistHolder h;
  specialists(r, h);
  char* report = nullptr;
  check(grail_eval(c.get(), t.get(), &h.s, r.get("k", "1,5,10").c_str(),
                   r.get("schedule", "3+2+3+2").c_str(), r.workers(), r.need("out").c_str(),
                   &report));
  print_report(report);
  return 0;
}

int cmd_grad_check(const Run& r) {
  const Corpus c = load_corpus(r);
  const Tasks t = load_tasks(r, c.get());
  Params p;
  if (r.has("params")) {
    p = load_params(r);
  } else {
    p = new_params(r, grail_corpus_dim(c.get()), r.get("mode", "gap"));
    check(grail_params_perturb(p.get(), r.seed(), std::stod(r.get("perturb", "0.1"))));
  }
  double worst = 0.0;
  char* report = nullptr;
  check(grail_grad_check(c.get(), t.get(), p.get(), std::stoul(r.get("grad_batch", "4")),
                         std::stoul(r.get("grad_batches", "10")), r.seed(), &worst, &report));
  if (r.has("out")) {
    std::filesystem::create_directories(r.need("out"));
    std::ofstream(std::filesystem::path(r.need("out")) / "grad_check.json") << report << "\n";
  }
  grail_free_string(report);
  std::cout << "max_rel_error " << worst << "\n";
  if (worst > 1e-4) die(GRAIL_CONTRACT, "gradient check failed: max relative error above 1e-4");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"grail: gap-aware retrieval experiments"};
  app.require_subcommand(1);

  std::map<std::string, std::string> flags;
  std::string config_path;
  std::vector<std::string> sets;

  const std::vector<std::pair<std::string, std::string>> kFlags = {
      {"corpus", "Vector file (.grle)"},
      {"meta", "Metadata JSON lines"},
      {"tasks", "Task JSON lines"},
      {"params", "Steering parameter file"},
      {"router", "Router file"},
      {"schedule", "Step schedule, e.g. 3+2+3+2"},
      {"mode", "query_only | additive | gap | hybrid"},
      {"k", "Comma-separated K values"},
      {"seed", "Random seed"},
      {"out", "Output directory"},
      {"workers", "Worker threads (0 = all cores)"},
      {"route-map", "qtype=label list or a file holding one"},
  };

  const std::vector<std::pair<std::string, std::string>> kCommands = {
      {"ingest", "Validate, normalise and store a corpus"},
      {"synth", "Generate the seeded synthetic suite"},
      {"train-align", "Train per-modality alignment projections"},
      {"train-steer", "Train the steering parameters"},
      {"train-router", "Fit the routing probe"},
      {"complete", "Evidence set completion"},
      {"build-pool", "Sequential pool construction"},
      {"eval", "Completion and pool reports for every available mode"},
      {"grad-check", "Finite-difference gradient check"},
  };

  std::vector<CLI::App*> subs;
  for (const auto& [name, help] : kCommands) {
    CLI::App* sub = app.add_subcommand(name, help);
    for (const auto& [flag, fhelp] : kFlags) {
      std::string key = flag;
      std::replace(key.begin(), key.end(), '-', '_');
      sub->add_option("--" + flag, flags[key], fhelp);
    }
    sub->add_option("--config", config_path, "Flat key=value config file");
    sub->add_option("--set", sets, "Extra key=value setting (repeatable)");
    subs.push_back(sub);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    nlohmann::json err = {{"error", "invalid_argument"}, {"status", 1}, {"message", e.what()}};
    std::cerr << err.dump() << "\n";
    return 2;
  }

  try {
    if (const char* level = std::getenv("GRAIL_LOG")) {
      check(grail_set_log_level(level));
    } else {
      check(grail_set_log_level("info"));
    }
    std::map<std::string, std::string> cfg;
    if (!config_path.empty()) load_config(cfg, config_path);
    CLI::App* sub = app.get_subcommands().front();
    for (const auto& [flag, help] : kFlags) {
      if (sub->count("--" + flag) == 0) continue;
      std::string key = flag;
      std::replace(key.begin(), key.end(), '-', '_');
      cfg[key] = flags[key];
    }
    for (const std::string& s : sets) {
      const auto eq = s.find('=');
      if (eq == std::string::npos) die(GRAIL_INVALID_ARGUMENT, "--set expects key=value, got '" + s + "'");
      put(cfg, trim(s.substr(0, eq)), trim(s.substr(eq + 1)), "--set");
    }

    nlohmann::json echo = nlohmann::json::object();
    for (const auto& [k, v] : cfg) echo[k] = v;
    echo["command"] = sub->get_name();
    check(grail_set_run_config(echo.dump().c_str()));

    const Run run(std::move(cfg));
    const std::string& name = sub->get_name();
    if (name == "ingest") return cmd_ingest(run);
    if (name == "synth") return cmd_synth(run);
    if (name == "train-align") return cmd_train_align(run);
    if (name == "train-steer") return cmd_train_steer(run);
    if (name == "train-router") return cmd_train_router(run);
    if (name == "complete") return cmd_complete(run);
    if (name == "build-pool") return cmd_build_pool(run);
    if (name == "eval") return cmd_eval(run);
    return cmd_grad_check(run);
  } catch (const Failure& f) {
    nlohmann::json err = {{"error", grail_status_name(f.status)},
                          {"status", static_cast<int>(f.status)},
                          {"message", f.message}};
    std::cerr << err.dump() << "\n";
    return f.status == GRAIL_OK ? 1 : static_cast<int>(f.status);
  } catch (const std::exception& e) {
    nlohmann::json err = {{"error", "invalid_argument"}, {"status", 1}, {"message", e.what()}};
    std::cerr << err.dump() << "\n";
    return 1;
  }
}
