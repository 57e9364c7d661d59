// Copyright (C) 2026 The se3flow authors
// SPDX-License-Identifier: Apache-2.0
#include "se3flow/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <random>
#include <sstream>
#include <stdexcept>
#include <tuple>

#include "se3flow/errors.hpp"
#include "se3flow/flow_training.hpp"

namespace se3flow {
namespace {

std::string fmt17(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

// Start-pose noise for one seed, drawn upfront in demonstration-major,
// action-minor order so rollouts can proceed (or be parallelized) without
// touching the stream again.
std::vector<std::vector<Pose>> draw_start_noise(const Dataset& test,
                                                double scale,
                                                std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<std::vector<Pose>> noise(test.demonstrations.size());
  for (std::size_t i = 0; i < test.demonstrations.size(); ++i) {
    noise[i].reserve(test.demonstrations[i].trajectory.size());
    for (std::size_t k = 0; k < test.demonstrations[i].trajectory.size();
         ++k) {
      noise[i].push_back(sample_noise_pose(rng, scale));
    }
  }
  return noise;
}

std::vector<ObsContext> demo_contexts(const Dataset& test) {
  std::vector<ObsContext> contexts;
  contexts.reserve(test.demonstrations.size());
  for (const Demonstration& demo : test.demonstrations) {
    contexts.push_back(make_obs_context(demo.cloud));
  }
  return contexts;
}

void check_eval_inputs(const Checkpoint& ckpt, const Dataset& test,
                       const std::vector<std::uint64_t>& seeds) {
  if (ckpt.task != test.task) {
    throw std::invalid_argument("checkpoint task " + task_name(ckpt.task) +
                                " does not match dataset task " +
                                task_name(test.task));
  }
  if (test.demonstrations.empty()) {
    throw std::invalid_argument("evaluation needs a nonempty test set");
  }
  if (seeds.empty()) {
    throw std::invalid_argument("evaluation needs at least one seed");
  }
}

}  // namespace

TrajectoryError evaluate_trajectory(const std::vector<Pose>& pred,
                                    const std::vector<Pose>& truth) {
  if (pred.size() != truth.size()) {
    std::ostringstream os;
    os << "trajectory length mismatch: " << pred.size() << " vs "
       << truth.size();
    throw std::invalid_argument(os.str());
  }
  if (pred.empty()) {
    throw std::invalid_argument("cannot evaluate empty trajectories");
  }
  TrajectoryError err;
  err.per_action.reserve(pred.size());
  for (std::size_t k = 0; k < pred.size(); ++k) {
    err.per_action.push_back(d_geo(pred[k], truth[k]));
    err.trajectory_mean += err.per_action.back();
  }
  err.trajectory_mean /= double(pred.size());
  return err;
}

std::vector<std::uint64_t> default_eval_seeds() {
  std::vector<std::uint64_t> seeds;
  for (std::uint64_t s = 3407; s <= 3416; ++s) seeds.push_back(s);
  return seeds;
}

EvalReport run_eval(const Checkpoint& ckpt, const Dataset& test,
                    const SolverSpec& solver,
                    const std::vector<std::uint64_t>& seeds,
                    const std::string& model_id, ChainMode mode) {
  check_eval_inputs(ckpt, test, seeds);
  const std::vector<ObsContext> contexts = demo_contexts(test);
  const std::size_t horizon = test.demonstrations.front().trajectory.size();
  const std::string model_name =
      model_id.empty() ? flow_stage_name(ckpt.stage) : model_id;

  EvalReport report;
  for (std::uint64_t seed : seeds) {
    const auto noise = draw_start_noise(test, ckpt.config.noise_scale, seed);
    std::vector<double> per_action(horizon, 0.0);
    bool failed = false;
    for (std::size_t i = 0; i < test.demonstrations.size() && !failed; ++i) {
      const std::vector<Pose>& truth = test.demonstrations[i].trajectory;
      Pose anchor = truth.front();
      for (std::size_t k = 0; k < truth.size(); ++k) {
        if (mode == ChainMode::joint) anchor = truth[k == 0 ? 0 : k - 1];
        const Pose z0 = compose(anchor, noise[i][k]);
        Pose predicted = z0;
        try {
          const FlowPath path = integrate(ckpt.model, z0, contexts[i], solver,
                                          ckpt.config.convention);
          predicted = path.poses.back();
        } catch (const IntegrationFailure&) {
          failed = true;
          break;
        } catch (const CutLocusError&) {
          // The rollout drifted to a pose whose canonical logarithm is
          // undefined (rotation at pi): the drift field cannot be evaluated
          // there, so the run is excluded just like a solver failure.
          failed = true;
          break;
        }
        anchor = predicted;
        per_action[k] += d_geo(predicted, truth[k]);
      }
    }
    if (failed) {
      report.failed_runs += 1;
      report.failed_seeds.push_back(seed);
      continue;
    }
    EvalRun run;
    run.model = model_name;
    run.task = test.task;
    run.steps = solver.kind == SolverKind::rk45 ? 0 : solver.steps;
    run.seed = seed;
    run.noise_scale = ckpt.config.noise_scale;
    run.per_action = per_action;
    for (double& v : run.per_action) v /= double(test.demonstrations.size());
    for (double v : run.per_action) run.trajectory_mean += v;
    run.trajectory_mean /= double(horizon);
    report.runs.push_back(std::move(run));
  }
  return report;
}

std::vector<AggregateReport> aggregate(const std::vector<EvalRun>& runs) {
  if (runs.empty()) {
    throw std::invalid_argument("cannot aggregate an empty run list");
  }
  using Key = std::tuple<bool, std::string, std::string, int>;
  std::map<Key, std::vector<double>> groups;
  std::map<Key, Task> group_task;
  for (const EvalRun& run : runs) {
    const Key key{run.external, task_name(run.task), run.model, run.steps};
    groups[key].push_back(run.trajectory_mean);
    group_task.emplace(key, run.task);
  }
  std::vector<AggregateReport> reports;
  reports.reserve(groups.size());
  for (const auto& [key, values] : groups) {
    AggregateReport rep;
    rep.external = std::get<0>(key);
    rep.task = group_task.at(key);
    rep.model = std::get<2>(key);
    rep.steps = std::get<3>(key);
    rep.n_seeds = int(values.size());
    for (double v : values) rep.mean += v;
    rep.mean /= double(values.size());
    if (values.size() > 1) {
      double ss = 0.0;
      for (double v : values) ss += (v - rep.mean) * (v - rep.mean);
      rep.std_dev = std::sqrt(ss / double(values.size() - 1));
    }
    reports.push_back(std::move(rep));
  }
  return reports;
}

double error_reduction(double baseline, double ours) {
  if (!(baseline > 0.0)) {
    throw std::invalid_argument(
        "error_reduction needs a positive baseline error");
  }
  return 100.0 * (baseline - ours) / baseline;
}

SolverSpec normalized_step_solver(int steps) {
  if (steps < 1) {
    throw std::invalid_argument("step budget must be at least 1");
  }
  SolverSpec spec;
  spec.kind = steps == 1 ? SolverKind::euler : SolverKind::rk4;
  spec.steps = steps;
  return spec;
}

StepAblation step_ablation(const Checkpoint& ckpt, const Dataset& test,
                           const std::vector<int>& steps_list,
                           const std::vector<std::uint64_t>& seeds,
                           const std::string& model_id, ChainMode mode) {
  if (steps_list.empty()) {
    throw std::invalid_argument("ablation needs a nonempty step list");
  }
  StepAblation ablation;
  for (int steps : steps_list) {
    const EvalReport report = run_eval(
        ckpt, test, normalized_step_solver(steps), seeds, model_id, mode);
    ablation.failed_runs += report.failed_runs;
    if (!report.runs.empty()) {
      const auto rows = aggregate(report.runs);
      ablation.table.insert(ablation.table.end(), rows.begin(), rows.end());
    }
    ablation.runs.insert(ablation.runs.end(), report.runs.begin(),
                         report.runs.end());
  }
  return ablation;
}

std::vector<EvalRun> import_external_results(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open results file: " + path);

  std::vector<EvalRun> runs;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line_no == 1) {
      if (line != "task,model,steps,trajectory_mean") {
        std::ostringstream os;
        os << "line 1: expected header task,model,steps,trajectory_mean, got "
           << "\"" << line << "\"";
        throw FormatError(os.str());
      }
      continue;
    }
    if (line.empty()) continue;

    std::vector<std::string> fields;
    std::string field;
    std::istringstream ls(line);
    while (std::getline(ls, field, ',')) fields.push_back(field);
    if (!line.empty() && line.back() == ',') fields.push_back("");
    if (fields.size() != 4) {
      std::ostringstream os;
      os << "line " << line_no << ": expected 4 columns, got "
         << fields.size();
      throw FormatError(os.str());
    }

    EvalRun run;
    run.external = true;
    try {
      run.task = task_from_name(fields[0]);
    } catch (const FormatError& e) {
      std::ostringstream os;
      os << "line " << line_no << ": " << e.what();
      throw FormatError(os.str());
    }
    run.model = fields[1];
    try {
      std::size_t pos = 0;
      run.steps = std::stoi(fields[2], &pos);
      if (pos != fields[2].size()) throw std::invalid_argument("");
      pos = 0;
      run.trajectory_mean = std::stod(fields[3], &pos);
      if (pos != fields[3].size()) throw std::invalid_argument("");
    } catch (const std::logic_error&) {
      std::ostringstream os;
      os << "line " << line_no << ": malformed numeric field in \"" << line
         << "\"";
      throw FormatError(os.str());
    }
    if (run.steps < 0 || !std::isfinite(run.trajectory_mean) ||
        run.trajectory_mean < 0.0) {
      std::ostringstream os;
      os << "line " << line_no << ": steps must be nonnegative and the "
         << "trajectory mean finite and nonnegative";
      throw FormatError(os.str());
    }
    runs.push_back(std::move(run));
  }
  return runs;
}

double mean_flow_straightness(const Checkpoint& ckpt, const Dataset& test,
                              const SolverSpec& solver, std::uint64_t seed) {
  if (test.demonstrations.empty()) {
    throw std::invalid_argument("straightness needs a nonempty test set");
  }
  const std::vector<ObsContext> contexts = demo_contexts(test);
  const auto noise = draw_start_noise(test, ckpt.config.noise_scale, seed);
  double total = 0.0;
  long long paths = 0;
  for (std::size_t i = 0; i < test.demonstrations.size(); ++i) {
    const std::vector<Pose>& truth = test.demonstrations[i].trajectory;
    for (std::size_t k = 0; k < truth.size(); ++k) {
      const Pose anchor = truth[k == 0 ? 0 : k - 1];
      const Pose z0 = compose(anchor, noise[i][k]);
      try {
        const FlowPath path = integrate(ckpt.model, z0, contexts[i], solver,
                                        ckpt.config.convention);
        total += straightness(path);
        paths += 1;
      } catch (const IntegrationFailure&) {
      } catch (const CutLocusError&) {
      }
    }
  }
  if (paths == 0) {
    throw NumericError("every straightness path failed to integrate");
  }
  return total / double(paths);
}

void write_per_action_csv(const std::string& path,
                          const std::vector<EvalRun>& runs) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot open report file for write: " + path);
  out << "task,model,steps,seed,action_index,d_geo\n";
  for (const EvalRun& run : runs) {
    for (std::size_t k = 0; k < run.per_action.size(); ++k) {
      out << task_name(run.task) << ',' << run.model << ',' << run.steps
          << ',' << run.seed << ',' << k << ',' << fmt17(run.per_action[k])
          << '\n';
    }
  }
  if (!out.flush()) {
    throw FormatError("failed writing report file: " + path);
  }
}

void write_aggregate_csv(const std::string& path,
                         const std::vector<AggregateReport>& reports) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot open report file for write: " + path);
  out << "task,model,steps,mean,std,n\n";
  for (const AggregateReport& rep : reports) {
    out << task_name(rep.task) << ',' << rep.model << ',' << rep.steps << ','
        << fmt17(rep.mean) << ',' << fmt17(rep.std_dev) << ',' << rep.n_seeds
        << '\n';
  }
  if (!out.flush()) {
    throw FormatError("failed writing report file: " + path);
  }
}

std::vector<AggregateReport> read_aggregate_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open report file: " + path);
  std::vector<AggregateReport> reports;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line_no == 1) {
      if (line != "task,model,steps,mean,std,n") {
        std::ostringstream os;
        os << "line 1: expected header task,model,steps,mean,std,n, got \""
           << line << "\"";
        throw FormatError(os.str());
      }
      continue;
    }
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::string field;
    std::istringstream ls(line);
    while (std::getline(ls, field, ',')) fields.push_back(field);
    if (!line.empty() && line.back() == ',') fields.push_back("");
    if (fields.size() != 6) {
      std::ostringstream os;
      os << "line " << line_no << ": expected 6 columns, got "
         << fields.size();
      throw FormatError(os.str());
    }
    AggregateReport rep;
    try {
      rep.task = task_from_name(fields[0]);
      rep.model = fields[1];
      std::size_t pos = 0;
      rep.steps = std::stoi(fields[2], &pos);
      if (pos != fields[2].size()) throw std::invalid_argument("");
      pos = 0;
      rep.mean = std::stod(fields[3], &pos);
      if (pos != fields[3].size()) throw std::invalid_argument("");
      pos = 0;
      rep.std_dev = std::stod(fields[4], &pos);
      if (pos != fields[4].size()) throw std::invalid_argument("");
      pos = 0;
      rep.n_seeds = std::stoi(fields[5], &pos);
      if (pos != fields[5].size()) throw std::invalid_argument("");
    } catch (const FormatError& e) {
      std::ostringstream os;
      os << "line " << line_no << ": " << e.what();
      throw FormatError(os.str());
    } catch (const std::logic_error&) {
      std::ostringstream os;
      os << "line " << line_no << ": malformed field in \"" << line << "\"";
      throw FormatError(os.str());
    }
    if (!std::isfinite(rep.mean) || !std::isfinite(rep.std_dev) ||
        rep.n_seeds < 1) {
      std::ostringstream os;
      os << "line " << line_no
         << ": mean/std must be finite and n at least 1";
      throw FormatError(os.str());
    }
    reports.push_back(std::move(rep));
  }
  return reports;
}

std::string render_side_by_side(const std::vector<AggregateReport>& reports) {
  std::vector<AggregateReport> rows = reports;
  std::sort(rows.begin(), rows.end(),
            [](const AggregateReport& a, const AggregateReport& b) {
              return std::tuple(task_name(a.task), a.external, a.model,
                                a.steps) < std::tuple(task_name(b.task),
                                                      b.external, b.model,
                                                      b.steps);
            });
  std::string text =
      "task               model              steps    mean     std  seeds  "
      "source\n";
  for (const AggregateReport& rep : rows) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "%-18s %-18s %5d %7.3f %7.3f %6d  %s\n",
                  task_name(rep.task).c_str(), rep.model.c_str(), rep.steps,
                  rep.mean, rep.std_dev, rep.n_seeds,
                  rep.external ? "external" : "internal");
    text += buf;
  }
  return text;
}

}  // namespace se3flow
