#pragma once

#include <map>
#include <optional>
#include <string>

#include "metalqr/task_gen.hpp"
#include "metalqr/theory_diag.hpp"
#include "metalqr/zoo_meta.hpp"

namespace metalqr {

// Shortest decimal representation that round-trips bit-exactly.
std::string format_double(double v);
double parse_double(const std::string& s);

void save_task_set(const TaskSet& tasks, const std::string& path);
TaskSet load_task_set(const std::string& path);

// Flat key/value config with [section] headers; '#' starts a comment.
using ConfigMap = std::map<std::string, std::map<std::string, std::string>>;
ConfigMap parse_config_file(const std::string& path);
ConfigMap parse_config_text(const std::string& text);

struct ExperimentSpec {
  TaskGenSpec taskgen;
  std::optional<std::string> tasks_path;  // load instead of generating
  MetaConfig meta;
  OptimizationMode mode = OptimizationMode::ZerothOrder;
  std::string outputs = "out";

  static ExperimentSpec from_config(const ConfigMap& cfg);
  ConfigMap to_config() const;
};

// Named reproductions of the reported experiment settings.
ExperimentSpec preset(const std::string& name);

void write_trace_csv(const LearningTrace& trace, const std::string& path);
void write_manifest(const ExperimentSpec& spec, const std::string& path);
void write_diagnostics(const DiagnosticsReport& report, const std::string& path);

}  // namespace metalqr
