#pragma once

// Runs a RunConfig: one policy-iteration job per (K, seed), spread over a
// worker pool, with results written in job order regardless of which worker
// finishes first.

#include "gmmq/io.hpp"
#include "gmmq/policy_iteration.hpp"

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <fstream>
#include <functional>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace gmmq {

struct Job {
  std::size_t index = 0;
  std::size_t k = 0;
  std::uint64_t seed = 0;
};

/// Jobs in canonical order: K-major, then seed = base_seed + i.
inline std::vector<Job> plan_jobs(const io::RunConfig& rc) {
  std::vector<Job> jobs;
  for (std::size_t k : rc.k_values()) {
    for (int i = 0; i < rc.n_seeds; ++i) {
      jobs.push_back({jobs.size(), k, rc.pi.seed + static_cast<std::uint64_t>(i)});
    }
  }
  return jobs;
}

/// Serializes rows from concurrent jobs into job order. Rows of the lowest
/// unfinished job are written (and flushed) as they arrive; later jobs are
/// buffered until every earlier job has finished.
class OrderedSink {
 public:
  using Writer = std::function<void(const io::ResultRow&)>;

  OrderedSink(std::size_t jobs, Writer writer)
      : pending_(jobs), done_(jobs, false), writer_(std::move(writer)) {}

  void push(std::size_t job, io::ResultRow row) {
    std::lock_guard lock(mu_);
    pending_[job].push_back(std::move(row));
    drain();
  }

  void finish(std::size_t job) {
    std::lock_guard lock(mu_);
    done_[job] = true;
    drain();
  }

 private:
  void drain() {
    while (next_ < pending_.size()) {
      auto& q = pending_[next_];
      while (!q.empty()) {
        writer_(q.front());
        q.pop_front();
      }
      if (!done_[next_]) break;
      ++next_;
    }
  }

  std::mutex mu_;
  std::vector<std::deque<io::ResultRow>> pending_;
  std::vector<bool> done_;
  std::size_t next_ = 0;
  Writer writer_;
};

struct ExperimentSummary {
  std::size_t rows = 0;
  std::size_t trial_errors = 0;
  /// Jobs that aborted before completing all trials.
  std::vector<std::string> failures;
  std::filesystem::path output_dir;
};

inline std::string model_file_name(const PiConfig& cfg) {
  return "model_" + cfg.env.name() + "_k" + std::to_string(cfg.k) + "_" +
         std::string(to_string(cfg.metric)) + "_seed" + std::to_string(cfg.seed) + ".json";
}

/// Executes every job and writes config_resolved.json, results.csv (emit.csv)
/// and results.json plus final models under models/ (emit.json).
inline ExperimentSummary run_experiment(const io::RunConfig& rc,
                                        const std::function<void(const std::string&)>& log = {}) {
  namespace fs = std::filesystem;
  ExperimentSummary summary;
  summary.output_dir = rc.output_dir;
  fs::create_directories(summary.output_dir);
  {
    std::ofstream out(summary.output_dir / "config_resolved.json");
    if (!out) throw std::runtime_error("cannot write " + (summary.output_dir / "config_resolved.json").string());
    out << io::to_json(rc).dump(2) << '\n';
  }
  if (rc.emit.json) fs::create_directories(summary.output_dir / "models");

  const auto jobs = plan_jobs(rc);
  std::optional<io::CsvWriter> csv;
  if (rc.emit.csv) csv.emplace(summary.output_dir / "results.csv");
  io::json all_rows = io::json::array();
  std::mutex log_mu;
  auto say = [&](const std::string& msg) {
    if (!log) return;
    std::lock_guard lock(log_mu);
    log(msg);
  };

  OrderedSink sink(jobs.size(), [&](const io::ResultRow& row) {
    if (csv) csv->append(row);
    if (rc.emit.json) all_rows.push_back(io::to_json(row));
    ++summary.rows;
  });

  std::vector<std::string> failures(jobs.size());
  std::atomic<std::size_t> errors{0};
  std::atomic<std::size_t> cursor{0};
  auto worker = [&] {
    for (std::size_t j = cursor++; j < jobs.size(); j = cursor++) {
      const Job& job = jobs[j];
      PiConfig cfg = rc.pi;
      cfg.k = job.k;
      cfg.seed = job.seed;
      std::vector<double> steps;
      try {
        const RunResult res = run(cfg, [&](const TrialLog& t, const GmmQf&) {
          steps.push_back(t.steps_to_goal);
          const auto ma = moving_average(steps, 10);
          if (!t.error.empty()) {
            ++errors;
            say("k=" + std::to_string(job.k) + " seed=" + std::to_string(job.seed) + " trial " +
                std::to_string(t.trial) + ": " + t.error);
          }
          sink.push(j, io::ResultRow{cfg.env.name(), cfg.k, std::string(to_string(cfg.metric)),
                                     cfg.seed, t.trial, t.steps_to_goal, ma.back(), t.final_loss,
                                     t.wall_time_ms});
        });
        if (rc.emit.json) io::save_model(summary.output_dir / "models" / model_file_name(cfg), res.model, cfg.env.name());
        say("done k=" + std::to_string(job.k) + " seed=" + std::to_string(job.seed));
      } catch (const std::exception& e) {
        failures[j] = "k=" + std::to_string(job.k) + " seed=" + std::to_string(job.seed) + ": " + e.what();
        say(failures[j]);
      }
      sink.finish(j);
    }
  };

  std::size_t n_workers = rc.workers > 0 ? static_cast<std::size_t>(rc.workers)
                                         : std::max(1u, std::thread::hardware_concurrency());
  n_workers = std::min(n_workers, std::max<std::size_t>(jobs.size(), 1));
  {
    std::vector<std::jthread> pool;
    for (std::size_t i = 1; i < n_workers; ++i) pool.emplace_back(worker);
    worker();
  }

  if (rc.emit.json) {
    std::ofstream out(summary.output_dir / "results.json");
    out << all_rows.dump(1) << '\n';
  }
  summary.trial_errors = errors;
  for (auto& f : failures) {
    if (!f.empty()) summary.failures.push_back(std::move(f));
  }
  return summary;
}

}  // namespace gmmq
