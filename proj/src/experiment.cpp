// Copyright (C) 2026 The se3flow authors
// SPDX-License-Identifier: Apache-2.0
#include "se3flow/experiment.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <ostream>
#include <sstream>

#include "se3flow/errors.hpp"

namespace fs = std::filesystem;

namespace se3flow {
namespace {

// Distinguishes the pair-construction stream from the SGD stream that shares
// the user-facing seed.
constexpr std::uint64_t kPairStreamSalt = 0x9e3779b97f4a7c15ull;
// Network width used by the CLI commands (tests pick their own shapes).
const std::vector<int> kDefaultHidden = {64, 64};

std::uint64_t pair_stream_seed(std::uint64_t seed) {
  return seed ^ kPairStreamSalt;
}

std::string fmt17(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

std::string trim(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && (s[b] == ' ' || s[b] == '\t')) ++b;
  while (e > b && (s[e - 1] == ' ' || s[e - 1] == '\t')) --e;
  return s.substr(b, e - b);
}

int parse_int(const std::string& v) {
  std::size_t pos = 0;
  int out = 0;
  try {
    out = std::stoi(v, &pos);
  } catch (const std::logic_error&) {
    pos = std::string::npos;
  }
  if (pos != v.size()) throw std::invalid_argument("not an integer: " + v);
  return out;
}

std::uint64_t parse_u64(const std::string& v) {
  std::size_t pos = 0;
  unsigned long long out = 0;
  try {
    out = std::stoull(v, &pos);
  } catch (const std::logic_error&) {
    pos = std::string::npos;
  }
  if (pos != v.size()) throw std::invalid_argument("not an integer: " + v);
  return out;
}

double parse_double(const std::string& v) {
  std::size_t pos = 0;
  double out = 0.0;
  try {
    out = std::stod(v, &pos);
  } catch (const std::logic_error&) {
    pos = std::string::npos;
  }
  if (pos != v.size() || !std::isfinite(out)) {
    throw std::invalid_argument("not a finite number: " + v);
  }
  return out;
}

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> items;
  std::string item;
  std::istringstream is(v);
  while (std::getline(is, item, ',')) items.push_back(trim(item));
  return items;
}

LrSchedule schedule_from_name(const std::string& v) {
  if (v == "cosine") return LrSchedule::cosine;
  if (v == "constant") return LrSchedule::constant;
  throw std::invalid_argument("unknown learning-rate schedule: " + v);
}

std::string schedule_name(LrSchedule s) {
  return s == LrSchedule::cosine ? "cosine" : "constant";
}

StepConvention convention_from_name(const std::string& v) {
  if (v == "spatial") return StepConvention::spatial;
  if (v == "body") return StepConvention::body;
  throw std::invalid_argument("unknown step convention: " + v);
}

std::string convention_name(StepConvention c) {
  return c == StepConvention::spatial ? "spatial" : "body";
}

SolverKind solver_kind_from_name(const std::string& v) {
  if (v == "euler") return SolverKind::euler;
  if (v == "rk4") return SolverKind::rk4;
  if (v == "rk45") return SolverKind::rk45;
  throw std::invalid_argument("unknown solver kind: " + v);
}

std::string solver_kind_name(SolverKind k) {
  switch (k) {
    case SolverKind::euler: return "euler";
    case SolverKind::rk4: return "rk4";
    case SolverKind::rk45: return "rk45";
  }
  throw std::invalid_argument("unknown solver kind enum value");
}

ChainMode chain_mode_from_name(const std::string& v) {
  if (v == "autoregressive") return ChainMode::autoregressive;
  if (v == "joint") return ChainMode::joint;
  throw std::invalid_argument("unknown chain mode: " + v);
}

std::string chain_mode_name(ChainMode m) {
  return m == ChainMode::autoregressive ? "autoregressive" : "joint";
}

void set_train_key(TrainConfig& tc, const std::string& key,
                   const std::string& value) {
  if (key == "learning_rate") {
    tc.learning_rate = parse_double(value);
  } else if (key == "batch_size") {
    tc.batch_size = parse_int(value);
  } else if (key == "epochs") {
    tc.epochs = parse_int(value);
  } else if (key == "rectified_step_budget") {
    tc.rectified_step_budget = parse_int(value);
  } else if (key == "mix_ratio") {
    tc.mix_ratio = parse_double(value);
  } else if (key == "seed") {
    tc.seed = parse_u64(value);
  } else if (key == "lr_schedule") {
    tc.lr_schedule = schedule_from_name(value);
  } else if (key == "noise_scale") {
    tc.noise_scale = parse_double(value);
  } else if (key == "grad_clip") {
    tc.grad_clip = parse_double(value);
  } else if (key == "convention") {
    tc.convention = convention_from_name(value);
  } else {
    throw std::invalid_argument("unknown key: " + key);
  }
}

// Shared by the file parser and flag overrides; throws std::invalid_argument
// with a human-readable reason.
void set_config_key(ExperimentConfig& cfg, const std::string& section,
                    const std::string& key, const std::string& value) {
  if (section == "experiment") {
    if (key == "task") {
      cfg.task = task_from_name(value);
    } else if (key == "train_dataset") {
      cfg.train_dataset = value;
    } else if (key == "test_dataset") {
      cfg.test_dataset = value;
    } else if (key == "flow1_checkpoint") {
      cfg.flow1_checkpoint = value;
    } else if (key == "flow2_checkpoint") {
      cfg.flow2_checkpoint = value;
    } else if (key == "reflow_pairs") {
      cfg.reflow_pairs = value;
    } else if (key == "output_dir") {
      cfg.output_dir = value;
    } else if (key == "pairs_per_action") {
      cfg.pairs_per_action = parse_int(value);
    } else if (key == "reflow_count") {
      cfg.reflow_count = parse_int(value);
    } else {
      throw std::invalid_argument("unknown key: " + key);
    }
  } else if (section == "flow1") {
    set_train_key(cfg.flow1, key, value);
  } else if (section == "flow2") {
    set_train_key(cfg.flow2, key, value);
  } else if (section == "solver") {
    if (key == "kind") {
      cfg.solver.kind = solver_kind_from_name(value);
    } else if (key == "steps") {
      cfg.solver.steps = parse_int(value);
    } else if (key == "rtol") {
      cfg.solver.rtol = parse_double(value);
    } else if (key == "atol") {
      cfg.solver.atol = parse_double(value);
    } else if (key == "max_steps") {
      cfg.solver.max_steps = parse_int(value);
    } else {
      throw std::invalid_argument("unknown key: " + key);
    }
  } else if (section == "eval") {
    if (key == "steps_list") {
      std::vector<int> steps;
      for (const std::string& item : split_list(value)) {
        steps.push_back(parse_int(item));
      }
      cfg.steps_list = std::move(steps);
    } else if (key == "seeds") {
      std::vector<std::uint64_t> seeds;
      for (const std::string& item : split_list(value)) {
        seeds.push_back(parse_u64(item));
      }
      cfg.seeds = std::move(seeds);
    } else if (key == "chain_mode") {
      cfg.chain_mode = chain_mode_from_name(value);
    } else {
      throw std::invalid_argument("unknown key: " + key);
    }
  } else {
    throw std::invalid_argument("unknown section: " + section);
  }
}

void require_path(const std::string& path, const char* what) {
  if (path.empty()) {
    throw ConfigError(std::string("no ") + what + " configured");
  }
  if (!fs::exists(path)) {
    throw ConfigError(std::string(what) + " does not exist: " + path);
  }
}

fs::path ensure_output_dir(const ExperimentConfig& cfg) {
  const fs::path dir = cfg.output_dir.empty() ? fs::path(".")
                                              : fs::path(cfg.output_dir);
  fs::create_directories(dir);
  return dir;
}

Dataset load_task_dataset(const std::string& path, Task task,
                          const char* what) {
  require_path(path, what);
  const Dataset data = load_dataset(path);
  if (data.task != task) {
    throw ConfigError(std::string(what) + " " + path + " holds task " +
                      task_name(data.task) + " but the experiment is " +
                      task_name(task));
  }
  return data;
}

Checkpoint load_stage_checkpoint(const std::string& path, Task task,
                                 const char* what) {
  require_path(path, what);
  const Checkpoint ckpt = load_checkpoint(path);
  if (ckpt.task != task) {
    throw ConfigError(std::string(what) + " " + path + " was trained on " +
                      task_name(ckpt.task) + " but the experiment is " +
                      task_name(task));
  }
  return ckpt;
}

void append_train_section(std::ostringstream& os, const char* name,
                          const TrainConfig& tc) {
  os << "[" << name << "]\n"
     << "learning_rate = " << fmt17(tc.learning_rate) << "\n"
     << "batch_size = " << tc.batch_size << "\n"
     << "epochs = " << tc.epochs << "\n"
     << "rectified_step_budget = " << tc.rectified_step_budget << "\n"
     << "mix_ratio = " << fmt17(tc.mix_ratio) << "\n"
     << "seed = " << tc.seed << "\n"
     << "lr_schedule = " << schedule_name(tc.lr_schedule) << "\n"
     << "noise_scale = " << fmt17(tc.noise_scale) << "\n"
     << "grad_clip = " << fmt17(tc.grad_clip) << "\n"
     << "convention = " << convention_name(tc.convention) << "\n";
}

// Multi-budget evaluation shared by the eval and ablate commands.
int eval_and_report(const ExperimentConfig& cfg,
                    const std::string& checkpoint_path,
                    const std::vector<int>& steps_list,
                    const std::string& prefix, std::ostream& log) {
  const Checkpoint ckpt =
      load_stage_checkpoint(checkpoint_path, cfg.task, "checkpoint");
  const Dataset test =
      load_task_dataset(cfg.test_dataset, cfg.task, "test dataset");

  std::vector<EvalRun> runs;
  int failed = 0;
  if (steps_list.empty()) {
    const EvalReport report =
        run_eval(ckpt, test, cfg.solver, cfg.seeds, "", cfg.chain_mode);
    runs = report.runs;
    failed = report.failed_runs;
  } else {
    const StepAblation ablation = step_ablation(
        ckpt, test, steps_list, cfg.seeds, "", cfg.chain_mode);
    runs = ablation.runs;
    failed = ablation.failed_runs;
  }

  const fs::path dir = ensure_output_dir(cfg);
  write_effective_config(cfg);
  const fs::path per_action = dir / (prefix + "_per_action.csv");
  const fs::path agg = dir / (prefix + "_aggregate.csv");
  write_per_action_csv(per_action.string(), runs);
  const std::vector<AggregateReport> rows =
      runs.empty() ? std::vector<AggregateReport>{} : aggregate(runs);
  write_aggregate_csv(agg.string(), rows);

  log << flow_stage_name(ckpt.stage) << " on " << task_name(test.task)
      << ": " << runs.size() << " runs";
  if (failed > 0) log << " (" << failed << " failed, excluded)";
  log << "\n" << render_side_by_side(rows);
  log << "wrote " << per_action.string() << "\n";
  log << "wrote " << agg.string() << "\n";
  return failed > 0 ? kExitPartialEval : kExitSuccess;
}

constexpr char kPairMagic[8] = {'S', 'E', '3', 'F', 'P', 'A', 'I', 'R'};
constexpr std::uint32_t kPairVersion = 1;

void put_bytes(std::ostream& os, const void* p, std::size_t n) {
  os.write(static_cast<const char*>(p), std::streamsize(n));
}

template <typename T>
void put(std::ostream& os, T v) {
  put_bytes(os, &v, sizeof v);
}

struct Reader {
  std::ifstream in;
  std::uint64_t offset = 0;
  explicit Reader(const std::string& path) : in(path, std::ios::binary) {
    if (!in) throw FormatError("cannot open pair file: " + path);
  }
  void read(void* p, std::size_t n, const char* what) {
    in.read(static_cast<char*>(p), std::streamsize(n));
    if (std::size_t(in.gcount()) != n) {
      std::ostringstream os;
      os << "pair file truncated at byte " << offset + std::size_t(in.gcount())
         << " while reading " << what;
      throw FormatError(os.str());
    }
    offset += n;
  }
  template <typename T>
  T get(const char* what) {
    T v;
    read(&v, sizeof v, what);
    return v;
  }
};

void put_pose(std::ostream& os, const Pose& p) {
  const Mat4 m = p.homogeneous();
  for (int i = 0; i < 4; ++i) {
    for (int j = 0; j < 4; ++j) put<double>(os, m(i, j));
  }
}

Pose get_pose(Reader& r, std::uint32_t pair_index, const char* which) {
  Mat4 m;
  const std::uint64_t at = r.offset;
  for (int i = 0; i < 4; ++i) {
    for (int j = 0; j < 4; ++j) m(i, j) = r.get<double>("pose entry");
  }
  try {
    return Pose::from_homogeneous(m);
  } catch (const std::invalid_argument& e) {
    std::ostringstream os;
    os << "invalid " << which << " pose for pair " << pair_index
       << " at byte " << at << ": " << e.what();
    throw FormatError(os.str());
  }
}

}  // namespace

ExperimentConfig default_experiment_config() {
  ExperimentConfig cfg;
  const char* root = std::getenv(kOutputRootEnv);
  cfg.output_dir = (root != nullptr && root[0] != '\0') ? root : ".";
  return cfg;
}

ExperimentConfig parse_experiment_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open config file: " + path);

  ExperimentConfig cfg = default_experiment_config();
  std::string line;
  std::string section = "experiment";
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const std::string stripped = trim(line);
    if (stripped.empty() || stripped[0] == '#' || stripped[0] == ';') {
      continue;
    }
    if (stripped.front() == '[') {
      if (stripped.back() != ']') {
        std::ostringstream os;
        os << "line " << line_no << ": unterminated section header";
        throw FormatError(os.str());
      }
      section = trim(stripped.substr(1, stripped.size() - 2));
      if (section != "experiment" && section != "flow1" &&
          section != "flow2" && section != "solver" && section != "eval") {
        std::ostringstream os;
        os << "line " << line_no << ": unknown section: " << section;
        throw FormatError(os.str());
      }
      continue;
    }
    const std::size_t eq = stripped.find('=');
    if (eq == std::string::npos) {
      std::ostringstream os;
      os << "line " << line_no << ": expected key = value, got \"" << stripped
         << "\"";
      throw FormatError(os.str());
    }
    const std::string key = trim(stripped.substr(0, eq));
    const std::string value = trim(stripped.substr(eq + 1));
    try {
      set_config_key(cfg, section, key, value);
    } catch (const std::invalid_argument& e) {
      std::ostringstream os;
      os << "line " << line_no << ": [" << section << "] " << e.what();
      throw FormatError(os.str());
    } catch (const FormatError& e) {
      std::ostringstream os;
      os << "line " << line_no << ": [" << section << "] " << e.what();
      throw FormatError(os.str());
    }
  }
  return cfg;
}

void apply_config_override(ExperimentConfig& cfg, const std::string& key,
                           const std::string& value) {
  const std::size_t dot = key.find('.');
  if (dot == std::string::npos) {
    throw ConfigError("override key must look like section.key: " + key);
  }
  try {
    set_config_key(cfg, key.substr(0, dot), key.substr(dot + 1), value);
  } catch (const std::invalid_argument& e) {
    throw ConfigError("override " + key + ": " + e.what());
  } catch (const FormatError& e) {
    throw ConfigError("override " + key + ": " + e.what());
  }
}

std::string serialize_experiment_config(const ExperimentConfig& cfg) {
  std::ostringstream os;
  os << "[experiment]\n"
     << "task = " << task_name(cfg.task) << "\n"
     << "train_dataset = " << cfg.train_dataset << "\n"
     << "test_dataset = " << cfg.test_dataset << "\n"
     << "flow1_checkpoint = " << cfg.flow1_checkpoint << "\n"
     << "flow2_checkpoint = " << cfg.flow2_checkpoint << "\n"
     << "reflow_pairs = " << cfg.reflow_pairs << "\n"
     << "output_dir = " << cfg.output_dir << "\n"
     << "pairs_per_action = " << cfg.pairs_per_action << "\n"
     << "reflow_count = " << cfg.reflow_count << "\n\n";
  append_train_section(os, "flow1", cfg.flow1);
  os << "\n";
  append_train_section(os, "flow2", cfg.flow2);
  os << "\n[solver]\n"
     << "kind = " << solver_kind_name(cfg.solver.kind) << "\n"
     << "steps = " << cfg.solver.steps << "\n"
     << "rtol = " << fmt17(cfg.solver.rtol) << "\n"
     << "atol = " << fmt17(cfg.solver.atol) << "\n"
     << "max_steps = " << cfg.solver.max_steps << "\n\n[eval]\n";
  os << "steps_list = ";
  for (std::size_t i = 0; i < cfg.steps_list.size(); ++i) {
    os << (i ? "," : "") << cfg.steps_list[i];
  }
  os << "\nseeds = ";
  for (std::size_t i = 0; i < cfg.seeds.size(); ++i) {
    os << (i ? "," : "") << cfg.seeds[i];
  }
  os << "\nchain_mode = " << chain_mode_name(cfg.chain_mode) << "\n";
  return os.str();
}

std::string write_effective_config(const ExperimentConfig& cfg) {
  const fs::path dir = ensure_output_dir(cfg);
  const fs::path path = dir / "effective_config.ini";
  std::ofstream out(path);
  if (!out) {
    throw FormatError("cannot open config file for write: " + path.string());
  }
  out << serialize_experiment_config(cfg);
  if (!out.flush()) {
    throw FormatError("failed writing config file: " + path.string());
  }
  return path.string();
}

void save_reflow_pairs(const std::string& path,
                       const std::vector<TrainingPair>& pairs, Task task,
                       std::uint64_t seed) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot open pair file for write: " + path);
  put_bytes(out, kPairMagic, sizeof kPairMagic);
  put<std::uint32_t>(out, kPairVersion);
  put<std::uint32_t>(out, std::uint32_t(task));
  put<std::uint64_t>(out, seed);
  put<std::uint32_t>(out, std::uint32_t(pairs.size()));
  for (const TrainingPair& pair : pairs) {
    put<std::uint32_t>(out, std::uint32_t(pair.demo_index));
    put<std::uint32_t>(out, std::uint32_t(pair.action_index));
    put_pose(out, pair.h0);
    put_pose(out, pair.h1);
    put_pose(out, pair.anchor);
  }
  if (!out) throw FormatError("write failed for pair file: " + path);
}

std::vector<TrainingPair> load_reflow_pairs(const std::string& path,
                                            const Dataset& dataset) {
  Reader r(path);
  char magic[8];
  r.read(magic, sizeof magic, "magic");
  if (!std::equal(magic, magic + 8, kPairMagic)) {
    throw FormatError("bad pair-file magic at byte 0");
  }
  const auto version = r.get<std::uint32_t>("version");
  if (version != kPairVersion) {
    throw FormatError("unsupported pair-file version " +
                      std::to_string(version) + " at byte 8");
  }
  const auto task_id = r.get<std::uint32_t>("task id");
  if (task_id > 2) {
    throw FormatError("invalid task id " + std::to_string(task_id) +
                      " at byte 12");
  }
  if (Task(task_id) != dataset.task) {
    throw FormatError("pair file holds task " + task_name(Task(task_id)) +
                      " but the dataset is " + task_name(dataset.task));
  }
  r.get<std::uint64_t>("seed");
  const auto count = r.get<std::uint32_t>("pair count");

  // Pairs from one demonstration share its observation cache.
  std::map<int, std::pair<std::shared_ptr<const PointCloud>,
                          std::shared_ptr<const ObsContext>>>
      caches;
  std::vector<TrainingPair> pairs;
  pairs.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    TrainingPair pair;
    pair.source = PairSource::reflow;
    const auto demo = r.get<std::uint32_t>("demonstration index");
    if (demo >= dataset.demonstrations.size()) {
      std::ostringstream os;
      os << "pair " << i << " references demonstration " << demo
         << " beyond the dataset's " << dataset.demonstrations.size();
      throw FormatError(os.str());
    }
    pair.demo_index = int(demo);
    pair.action_index = int(r.get<std::uint32_t>("action index"));
    pair.h0 = get_pose(r, i, "start");
    pair.h1 = get_pose(r, i, "target");
    pair.anchor = get_pose(r, i, "anchor");
    auto it = caches.find(pair.demo_index);
    if (it == caches.end()) {
      auto cloud = std::make_shared<const PointCloud>(
          dataset.demonstrations[pair.demo_index].cloud);
      auto ctx = std::make_shared<const ObsContext>(make_obs_context(*cloud));
      it = caches.emplace(pair.demo_index, std::make_pair(cloud, ctx)).first;
    }
    pair.cloud = it->second.first;
    pair.ctx = it->second.second;
    pairs.push_back(std::move(pair));
  }
  char extra;
  r.in.read(&extra, 1);
  if (r.in.gcount() != 0) {
    throw FormatError("trailing data after pair " + std::to_string(count) +
                      " at byte " + std::to_string(r.offset));
  }
  return pairs;
}

int cmd_generate(Task task, int n, std::uint64_t seed,
                 const std::string& out_dir, bool also_json,
                 std::ostream& log) {
  if (n < 1) throw ConfigError("demonstration count must be at least 1");
  const fs::path dir = out_dir.empty() ? fs::path(".") : fs::path(out_dir);
  fs::create_directories(dir);

  const Dataset train = generate_dataset(task, seed, n);
  const Dataset test = make_test_split(train, seed);
  const std::string base = task_name(task);
  const fs::path train_path = dir / (base + "_train.bin");
  const fs::path test_path = dir / (base + "_test.bin");
  save_dataset(train, train_path.string());
  save_dataset(test, test_path.string());

  for (const Dataset* ds : {&train, &test}) {
    log << base << " " << split_name(ds->split) << ": "
        << ds->demonstrations.size() << " demonstrations, "
        << task_cloud_size(task) << "-point clouds, horizon "
        << kTrajectoryLength << "\n";
  }
  log << "wrote " << train_path.string() << "\n";
  log << "wrote " << test_path.string() << "\n";
  if (also_json) {
    const fs::path train_json = dir / (base + "_train.json");
    const fs::path test_json = dir / (base + "_test.json");
    export_dataset_json(train, train_json.string());
    export_dataset_json(test, test_json.string());
    log << "wrote " << train_json.string() << "\n";
    log << "wrote " << test_json.string() << "\n";
  }
  return kExitSuccess;
}

int cmd_train(const ExperimentConfig& cfg, int stage, std::ostream& log) {
  if (stage != 1 && stage != 2) {
    throw ConfigError("training stage must be 1 or 2");
  }
  const Dataset data =
      load_task_dataset(cfg.train_dataset, cfg.task, "train dataset");
  const fs::path dir = ensure_output_dir(cfg);
  write_effective_config(cfg);

  const TrainConfig& tc = stage == 1 ? cfg.flow1 : cfg.flow2;
  const auto pairs = build_training_pairs(
      data, tc.noise_scale, cfg.pairs_per_action, pair_stream_seed(tc.seed));

  DriftModel model;
  TrainResult result;
  fs::path ckpt_path;
  if (stage == 1) {
    model = DriftModel::init(kDefaultHidden, tc.seed);
    result = train_flow1(model, pairs, tc);
    ckpt_path = cfg.flow1_checkpoint.empty() ? dir / "flow1.ckpt"
                                             : fs::path(cfg.flow1_checkpoint);
  } else {
    if (cfg.flow1_checkpoint.empty()) {
      throw ConfigError(
          "stage 2 requires a stage-1 checkpoint (experiment."
          "flow1_checkpoint)");
    }
    const Checkpoint warm = load_stage_checkpoint(cfg.flow1_checkpoint,
                                                  cfg.task, "checkpoint");
    if (warm.stage != FlowStage::flow1) {
      throw ConfigError("stage 2 must warm-start from a flow1 checkpoint");
    }
    if (warm.config.convention != tc.convention) {
      throw ConfigError(
          "step convention mismatch: the stage-1 checkpoint used " +
          convention_name(warm.config.convention) + " but flow2 requests " +
          convention_name(tc.convention));
    }
    std::vector<TrainingPair> reflow;
    if (!cfg.reflow_pairs.empty()) {
      require_path(cfg.reflow_pairs, "reflow pair file");
      reflow = load_reflow_pairs(cfg.reflow_pairs, data);
      log << "loaded " << reflow.size() << " synthesized pairs from "
          << cfg.reflow_pairs << "\n";
    } else {
      const ReflowSynthesis synth = synthesize_reflow_pairs(
          warm.model, pairs, cfg.reflow_count, tc);
      reflow = synth.pairs;
      log << "synthesized " << reflow.size() << " pairs ("
          << synth.integration_failures << " integration failures, "
          << synth.bound_rejections << " rotation-bound rejections)\n";
    }
    model = warm.model;
    result = train_flow2(model, pairs, reflow, tc);
    ckpt_path = cfg.flow2_checkpoint.empty() ? dir / "flow2.ckpt"
                                             : fs::path(cfg.flow2_checkpoint);
  }

  Checkpoint ckpt;
  ckpt.stage = stage == 1 ? FlowStage::flow1 : FlowStage::flow2;
  ckpt.task = cfg.task;
  ckpt.config = tc;
  ckpt.model = model;
  save_checkpoint(ckpt_path.string(), ckpt);

  const fs::path loss_path =
      dir / (std::string(stage == 1 ? "flow1" : "flow2") + "_loss.csv");
  write_loss_csv(loss_path.string(), result.reports);

  log << "stage " << stage << ": " << pairs.size() << " training pairs, "
      << tc.epochs << " epochs";
  if (!result.reports.empty()) {
    log << ", final mean loss " << fmt17(result.reports.back().mean_loss)
        << ", " << fmt17(result.reports.back().wall_time) << " s";
  }
  log << "\n";
  if (stage == 2) {
    log << "mixture draws: " << result.original_draws << " original, "
        << result.reflow_draws << " synthesized\n";
  }
  if (result.rejected_samples > 0) {
    log << "rejected " << result.rejected_samples << " cut-locus samples\n";
  }
  log << "wrote " << ckpt_path.string() << "\n";
  log << "wrote " << loss_path.string() << "\n";
  return kExitSuccess;
}

int cmd_synthesize_reflow(const ExperimentConfig& cfg, std::ostream& log) {
  const Dataset data =
      load_task_dataset(cfg.train_dataset, cfg.task, "train dataset");
  if (cfg.flow1_checkpoint.empty()) {
    throw ConfigError(
        "reflow synthesis requires a stage-1 checkpoint (experiment."
        "flow1_checkpoint)");
  }
  const Checkpoint warm =
      load_stage_checkpoint(cfg.flow1_checkpoint, cfg.task, "checkpoint");
  if (warm.config.convention != cfg.flow2.convention) {
    throw ConfigError(
        "step convention mismatch: the stage-1 checkpoint used " +
        convention_name(warm.config.convention) + " but flow2 requests " +
        convention_name(cfg.flow2.convention));
  }
  const fs::path dir = ensure_output_dir(cfg);
  write_effective_config(cfg);

  const auto sources = build_training_pairs(
      data, cfg.flow2.noise_scale, cfg.pairs_per_action,
      pair_stream_seed(cfg.flow2.seed));
  const ReflowSynthesis synth =
      synthesize_reflow_pairs(warm.model, sources, cfg.reflow_count,
                              cfg.flow2);
  const fs::path out = cfg.reflow_pairs.empty()
                           ? dir / "reflow_pairs.bin"
                           : fs::path(cfg.reflow_pairs);
  save_reflow_pairs(out.string(), synth.pairs, cfg.task, cfg.flow2.seed);
  log << "synthesized " << synth.pairs.size() << " pairs ("
      << synth.integration_failures << " integration failures, "
      << synth.bound_rejections << " rotation-bound rejections)\n";
  log << "wrote " << out.string() << "\n";
  return kExitSuccess;
}

int cmd_eval(const ExperimentConfig& cfg, const std::string& checkpoint_path,
             const std::vector<int>& steps_list, std::ostream& log) {
  return eval_and_report(cfg, checkpoint_path, steps_list, "eval", log);
}

int cmd_ablate(const ExperimentConfig& cfg,
               const std::string& checkpoint_path, std::ostream& log) {
  if (cfg.steps_list.empty()) {
    throw ConfigError("ablation needs a nonempty eval.steps_list");
  }
  return eval_and_report(cfg, checkpoint_path, cfg.steps_list, "ablation",
                         log);
}

int cmd_import_external(const ExperimentConfig& cfg,
                        const std::string& results_csv,
                        const std::string& internal_aggregate_csv,
                        std::ostream& log) {
  require_path(results_csv, "results file");
  const std::vector<EvalRun> runs = import_external_results(results_csv);
  std::vector<AggregateReport> rows =
      runs.empty() ? std::vector<AggregateReport>{} : aggregate(runs);
  if (!internal_aggregate_csv.empty()) {
    require_path(internal_aggregate_csv, "aggregate report");
    const auto internal = read_aggregate_csv(internal_aggregate_csv);
    rows.insert(rows.end(), internal.begin(), internal.end());
  }
  const fs::path dir = ensure_output_dir(cfg);
  write_effective_config(cfg);
  const std::string table = render_side_by_side(rows);
  const fs::path out = dir / "side_by_side.txt";
  std::ofstream file(out);
  if (!file) {
    throw FormatError("cannot open report file for write: " + out.string());
  }
  file << table;
  if (!file.flush()) {
    throw FormatError("failed writing report file: " + out.string());
  }
  log << table;
  log << "imported " << runs.size() << " external results\n";
  log << "wrote " << out.string() << "\n";
  return kExitSuccess;
}

}  // namespace se3flow
