// Copyright 2026 The SoftLockstep Authors
//
// Licensed under the Apache License, Version 2.0.
// SPDX-License-Identifier: Apache-2.0

#include "cli.hpp"

#include <algorithm>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "softlockstep/calibration.hpp"
#include "softlockstep/fault.hpp"
#include "softlockstep/monitor.hpp"
#include "softlockstep/sim.hpp"
#include "workloads.hpp"

namespace softlockstep::cli {

int exit_code_for(const Verdict& verdict) {
  struct Mapper {
    int operator()(const Match&) const { return kExitMatch; }
    int operator()(const Mismatch&) const { return kExitMismatch; }
    int operator()(const ReplicaFailure&) const { return kExitReplicaFailure; }
    int operator()(const Timeout&) const { return kExitTimeout; }
    int operator()(const DiversityLoss&) const { return kExitDiversityLoss; }
  };
  return std::visit(Mapper{}, verdict);
}

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument:
    case ErrorCode::kInvalidCoordinates:
      return kExitUsage;
    case ErrorCode::kParseError:
    case ErrorCode::kSearchSpaceTooLarge:
    case ErrorCode::kShapeMismatch:
    case ErrorCode::kEmptyTrace:
      return kExitDataError;
    case ErrorCode::kCounterUnavailable:
      return kExitCounterUnavailable;
    case ErrorCode::kIoError:
      return kExitIoError;
    case ErrorCode::kOverflow:
    case ErrorCode::kStaleHandle:
    case ErrorCode::kSpawnFailure:
    case ErrorCode::kPinningFailure:
    case ErrorCode::kReplicaFailure:
    case ErrorCode::kIncomplete:
      return kExitSetupFailure;
  }
  return kExitSetupFailure;
}

namespace {

struct BackendChoice {
  enum class Kind { kOs, kScripted } kind = Kind::kOs;
  CounterEvent event = CounterEvent::kRetiredInstructions;
  std::string scenario_path;
};

BackendChoice parse_backend(const std::string& text) {
  BackendChoice choice;
  if (text == "os" || text == "os:instructions") return choice;
  if (text == "os:task-clock") {
    choice.event = CounterEvent::kTaskClock;
    return choice;
  }
  if (text.rfind("scripted:", 0) == 0 && text.size() > 9) {
    choice.kind = BackendChoice::Kind::kScripted;
    choice.scenario_path = text.substr(9);
    return choice;
  }
  throw Error(ErrorCode::kInvalidArgument,
              "backend must be os, os:task-clock or scripted:<file>");
}

void apply_cores(const std::string& text, MonitorConfig& config) {
  if (text.empty()) return;
  std::vector<int> ids;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    try {
      std::size_t used = 0;
      ids.push_back(std::stoi(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::logic_error&) {
      throw Error(ErrorCode::kInvalidArgument, "--cores expects h,t,m");
    }
  }
  if (ids.size() != 3) {
    throw Error(ErrorCode::kInvalidArgument, "--cores expects h,t,m");
  }
  config.head_core = CoreId{ids[0]};
  config.trail_core = CoreId{ids[1]};
  config.monitor_core = CoreId{ids[2]};
}

std::vector<InstructionCount> parse_alphabet(const std::string& text) {
  std::vector<InstructionCount> values;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    try {
      std::size_t used = 0;
      values.push_back(std::stoull(item, &used));
      if (used != item.size() || item.front() == '-') {
        throw std::invalid_argument(item);
      }
    } catch (const std::logic_error&) {
      throw Error(ErrorCode::kInvalidArgument,
                  "--alphabet expects comma-separated non-negative integers");
    }
  }
  if (values.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "--alphabet must not be empty");
  }
  std::sort(values.begin(), values.end());
  values.erase(std::unique(values.begin(), values.end()), values.end());
  return values;
}

struct TraceSummary {
  std::size_t suspends = 0;
  std::size_t resumes = 0;
  std::size_t diversity_losses = 0;
};

TraceSummary summarize(const Trace& trace) {
  TraceSummary s;
  for (const auto& sample : trace.samples) {
    s.suspends += sample.action == Action::kSuspend;
    s.resumes += sample.action == Action::kResume;
    s.diversity_losses += sample.action == Action::kDiversityLoss;
  }
  return s;
}

struct RunOptions {
  std::string workload;
  std::optional<InstructionCount> threshold;
  std::string calibration_file;
  std::int64_t period_us = 1000;
  std::string trace_out;
  std::vector<std::string> injections;
  std::string backend = "os";
  std::string cores;
  std::optional<std::int64_t> timeout_ms;
  std::uint64_t seed = 1;
  std::string diversity_loss = "record";
  bool print_trace = false;
};

// A malformed flag value is a usage error, whatever parser rejected it.
template <typename Parse>
auto parse_flag(std::string_view flag, Parse&& parse) {
  try {
    return parse();
  } catch (const Error& e) {
    if (e.code() != ErrorCode::kParseError) throw;
    throw Error(ErrorCode::kInvalidArgument,
                std::string(flag) + ": " + e.what());
  }
}

int cmd_run(const RunOptions& opts, std::ostream& out, std::ostream& err) {
  const auto id = parse_flag(
      "--workload", [&] { return workloads::parse_workload(opts.workload); });
  auto instance = workloads::make_instance(id, opts.seed);

  MonitorConfig config;
  if (opts.threshold) {
    config.threshold_instructions = *opts.threshold;
  } else if (!opts.calibration_file.empty()) {
    const auto report = load_report(opts.calibration_file);
    config.threshold_instructions = report.recommended_threshold;
    if (report.check_period != std::chrono::microseconds(opts.period_us)) {
      err << "warning: calibration was made for a "
          << report.check_period.count() / 1000
          << " us period, running with " << opts.period_us << " us\n";
    }
  } else {
    err << "error: supply --threshold or --calibration-file\n";
    return kExitUsage;
  }
  config.check_period = std::chrono::microseconds(opts.period_us);
  if (opts.timeout_ms) {
    config.run_timeout = std::chrono::milliseconds(*opts.timeout_ms);
  }
  config.diversity_loss_policy = opts.diversity_loss == "abort"
                                     ? DiversityLossPolicy::kAbortRun
                                     : DiversityLossPolicy::kRecordAndContinue;
  apply_cores(opts.cores, config);
  if (auto problems = validate_config(config); !problems.empty()) {
    for (const auto& p : problems) err << "error: " << p << '\n';
    return kExitUsage;
  }

  ProtectOptions options;
  const auto backend = parse_backend(opts.backend);
  if (backend.kind == BackendChoice::Kind::kScripted) {
    options.backend = ScriptedBackend{load_scenario(backend.scenario_path)};
  } else {
    options.backend = OsBackend{backend.event};
  }
  for (const auto& text : opts.injections) {
    auto fault = parse_flag("--inject", [&] { return parse_fault(text); });
    fault.seed = opts.seed;
    options.faults.push_back(fault);
  }

  std::vector<std::vector<std::byte>> outputs;
  for (auto size : instance.output_sizes) outputs.emplace_back(size);
  std::vector<MutableBuffer> views(outputs.begin(), outputs.end());

  const auto result =
      protect(instance.computation, instance.payload(), views, config, options);

  if (!opts.trace_out.empty()) write_trace_file(result.trace, opts.trace_out);
  if (opts.print_trace) write_trace(result.trace, out);

  const auto summary = summarize(result.trace);
  out << "verdict: " << describe(result.verdict) << '\n'
      << "backend: " << result.trace.metadata.backend << '\n'
      << "threshold: " << config.threshold_instructions << '\n'
      << "samples: " << result.trace.samples.size()
      << " suspends: " << summary.suspends << " resumes: " << summary.resumes
      << " diversity_losses: " << summary.diversity_losses << '\n';
  return exit_code_for(result.verdict);
}

struct CalibrateOptions {
  std::int64_t duration_ms = 1000;
  std::size_t samples = 100;
  double margin = kDefaultSafetyMargin;
  std::string out_path;
  std::int64_t period_us = 1000;
  std::string backend = "os";
  std::string cores;
};

int cmd_calibrate(const CalibrateOptions& opts, std::ostream& out,
                  std::ostream& err) {
  if (!(opts.margin >= 1.0)) {
    err << "error: margin must be ≥ 1\n";
    return kExitUsage;
  }
  if (opts.period_us <= 0) {
    err << "error: check period must be positive\n";
    return kExitUsage;
  }
  MonitorConfig cores;
  apply_cores(opts.cores, cores);

  const auto backend = parse_backend(opts.backend);
  std::unique_ptr<CalibrationProbe> probe;
  if (backend.kind == BackendChoice::Kind::kScripted) {
    const auto scenario = load_scenario(backend.scenario_path);
    probe = std::make_unique<ScriptedProbe>(scenario.trail_deltas,
                                            scenario.tick_us,
                                            scenario.suspend_latency_ticks);
  } else {
    probe = std::make_unique<ProcessProbe>(backend.event, cores.trail_core);
  }
  ScopedThreadAffinity pin(cores.monitor_core);
  const auto report = calibrate(*probe, std::chrono::milliseconds(opts.duration_ms),
                                opts.samples,
                                std::chrono::microseconds(opts.period_us),
                                opts.margin);
  if (!opts.out_path.empty()) {
    std::ofstream file(opts.out_path, std::ios::trunc);
    if (!file) throw Error(ErrorCode::kIoError, "cannot open " + opts.out_path);
    write_report(file, report);
  }
  write_report(out, report);
  if (backend.event == CounterEvent::kTaskClock &&
      backend.kind == BackendChoice::Kind::kOs) {
    err << "note: task-clock counts nanoseconds of CPU time, not "
           "instructions\n";
  }
  return kExitMatch;
}

struct SimulateOptions {
  std::string alphabet;
  std::uint64_t ticks = 0;
  std::uint64_t period = 1;
  std::uint64_t latency = 0;
  InstructionCount threshold = 0;
  std::uint64_t limit = sim::kDefaultSearchLimit;
  std::string out_path;
};

int cmd_simulate(const SimulateOptions& opts, std::ostream& out,
                 std::ostream& err) {
  if (opts.period == 0) {
    err << "error: --period must be >= 1\n";
    return kExitUsage;
  }
  const auto alphabet = parse_alphabet(opts.alphabet);
  const auto result = sim::exhaustive_check(alphabet, opts.ticks, opts.period,
                                            opts.latency, opts.threshold,
                                            opts.limit);
  if (result.safe) {
    out << "safe: " << result.schedules_checked
        << " schedules, no negative staggering\n";
    return kExitMatch;
  }
  out << "counterexample: min staggering " << *result.counterexample_min
      << " after " << result.schedules_checked << " schedules\n";
  sim::write_schedule(out, *result.counterexample);
  if (!opts.out_path.empty()) {
    std::ofstream file(opts.out_path, std::ios::trunc);
    if (!file) throw Error(ErrorCode::kIoError, "cannot open " + opts.out_path);
    sim::write_schedule(file, *result.counterexample);
  }
  return kExitCounterexample;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out,
        std::ostream& err) {
  CLI::App app{"Software lockstep: redundant execution with enforced "
               "instruction staggering"};
  app.require_subcommand(1);

  RunOptions run_opts;
  auto* run_cmd = app.add_subcommand("run", "Run a workload under protection");
  run_cmd->add_option("--workload", run_opts.workload,
                      "matmul:<n>, checksum:<bytes> or spin:<instructions>")
      ->required();
  run_cmd->add_option("--threshold", run_opts.threshold,
                      "Minimum staggering in instructions");
  run_cmd->add_option("--calibration-file", run_opts.calibration_file,
                      "Take the threshold from a calibration report");
  run_cmd->add_option("--period-us", run_opts.period_us, "Check period")
      ->capture_default_str();
  run_cmd->add_option("--trace-out", run_opts.trace_out, "Trace CSV path");
  run_cmd->add_option("--inject", run_opts.injections,
                      "Fault, e.g. bitflip:trail:0:0:3, freeze:head:3ms, "
                      "crash:head");
  run_cmd->add_option("--backend", run_opts.backend,
                      "os, os:task-clock or scripted:<scenario.csv>")
      ->capture_default_str();
  run_cmd->add_option("--cores", run_opts.cores, "Pin head,trail,monitor");
  run_cmd->add_option("--timeout-ms", run_opts.timeout_ms, "Run timeout");
  run_cmd->add_option("--seed", run_opts.seed, "Input/fault seed")
      ->capture_default_str();
  run_cmd->add_option("--diversity-loss", run_opts.diversity_loss,
                      "record (continue) or abort")
      ->check(CLI::IsMember({"record", "abort"}))
      ->capture_default_str();
  run_cmd->add_flag("--print-trace", run_opts.print_trace,
                    "Also write the trace CSV to stdout");

  CalibrateOptions cal_opts;
  auto* cal_cmd =
      app.add_subcommand("calibrate", "Measure a safe staggering threshold");
  cal_cmd->add_option("--duration-ms", cal_opts.duration_ms,
                      "Peak-rate measurement length (>= 100)")
      ->capture_default_str();
  cal_cmd->add_option("--samples", cal_opts.samples,
                      "Latency samples (>= 30)")
      ->capture_default_str();
  cal_cmd->add_option("--margin", cal_opts.margin, "Safety margin (>= 1)")
      ->capture_default_str();
  cal_cmd->add_option("--out", cal_opts.out_path, "Report path");
  cal_cmd->add_option("--period-us", cal_opts.period_us, "Check period")
      ->capture_default_str();
  cal_cmd->add_option("--backend", cal_opts.backend,
                      "os, os:task-clock or scripted:<scenario.csv>")
      ->capture_default_str();
  cal_cmd->add_option("--cores", cal_opts.cores, "Pin head,trail,monitor");

  SimulateOptions sim_opts;
  auto* sim_cmd = app.add_subcommand(
      "simulate", "Exhaustively check the staggering protocol");
  sim_cmd->add_option("--alphabet", sim_opts.alphabet,
                      "Per-tick instruction deltas, e.g. 0,1,2")
      ->required();
  sim_cmd->add_option("--ticks", sim_opts.ticks, "Horizon in ticks")
      ->required();
  sim_cmd->add_option("--period", sim_opts.period, "Check period in ticks")
      ->capture_default_str();
  sim_cmd->add_option("--latency", sim_opts.latency,
                      "Suspend latency in ticks")
      ->capture_default_str();
  sim_cmd->add_option("--threshold", sim_opts.threshold, "Threshold")
      ->required();
  sim_cmd->add_option("--limit", sim_opts.limit, "Maximum schedules")
      ->capture_default_str();
  sim_cmd->add_option("--out", sim_opts.out_path, "Counterexample CSV path");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (run_cmd->parsed()) return cmd_run(run_opts, out, err);
    if (cal_cmd->parsed()) return cmd_calibrate(cal_opts, out, err);
    return cmd_simulate(sim_opts, out, err);
  } catch (const Error& e) {
    err << "error: " << to_string(e.code()) << ": " << e.what() << '\n';
    return exit_code_for(e.code());
  }
}

}  // namespace softlockstep::cli
