#include "metalqr/io.hpp"

#include <charconv>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <vector>

namespace metalqr {

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc()) throw Error("format_double: to_chars failed");
  return std::string(buf, ptr);
}

double parse_double(const std::string& s) {
  double v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size())
    throw ParseError("bad numeric value: '" + s + "'");
  return v;
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

long parse_long(const std::string& s) {
  long v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size())
    throw ParseError("bad integer value: '" + s + "'");
  return v;
}

std::uint64_t parse_u64(const std::string& s) {
  std::uint64_t v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size())
    throw ParseError("bad unsigned value: '" + s + "'");
  return v;
}

bool parse_bool(const std::string& s) {
  if (s == "true" || s == "1") return true;
  if (s == "false" || s == "0") return false;
  throw ParseError("bad boolean value: '" + s + "'");
}

void write_matrix(std::ostream& os, const char* name, const Matrix& m) {
  os << name << " =";
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) os << ' ' << format_double(m(i, j));
  os << '\n';
}

Matrix parse_matrix(const std::string& value, long rows, long cols,
                    const std::string& name) {
  std::istringstream iss(value);
  Matrix m(rows, cols);
  std::string tok;
  for (long i = 0; i < rows; ++i)
    for (long j = 0; j < cols; ++j) {
      if (!(iss >> tok)) throw ParseError("matrix " + name + ": too few entries");
      m(i, j) = parse_double(tok);
    }
  if (iss >> tok) throw ParseError("matrix " + name + ": too many entries");
  return m;
}

}  // namespace

ConfigMap parse_config_text(const std::string& text) {
  ConfigMap out;
  std::string section;
  std::istringstream iss(text);
  std::string line;
  long lineno = 0;
  while (std::getline(iss, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw ParseError("line " + std::to_string(lineno) + ": unterminated section");
      section = trim(line.substr(1, line.size() - 2));
      out[section];
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ParseError("line " + std::to_string(lineno) + ": expected key = value");
    out[section][trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return out;
}

ConfigMap parse_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open config file: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str());
}

void save_task_set(const TaskSet& tasks, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw Error("cannot open for writing: " + path);
  os << "# metalqr task set v1\n";
  os << "num_tasks = " << tasks.size() << '\n';
  os << "d = " << tasks.state_dim() << '\n';
  os << "k = " << tasks.control_dim() << '\n';
  const auto& w = tasks.weights();
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    const LqrTask& t = tasks[i];
    os << "\n[task " << i << "]\n";
    os << "weight = "
       << format_double(w.empty() ? 1.0 / double(tasks.size()) : w[i]) << '\n';
    write_matrix(os, "A", t.A());
    write_matrix(os, "B", t.B());
    write_matrix(os, "Q", t.Q());
    write_matrix(os, "R", t.R());
    write_matrix(os, "Psi", t.Psi());
    write_matrix(os, "Sigma0", t.Sigma0());
  }
  if (!os) throw Error("write failed: " + path);
}

TaskSet load_task_set(const std::string& path) {
  ConfigMap cfg = parse_config_file(path);
  const auto& top = cfg[""];
  auto need = [&](const std::map<std::string, std::string>& m,
                  const std::string& k) -> const std::string& {
    auto it = m.find(k);
    if (it == m.end()) throw ParseError("task set missing field: " + k);
    return it->second;
  };
  const long n = parse_long(need(top, "num_tasks"));
  const long d = parse_long(need(top, "d"));
  const long k = parse_long(need(top, "k"));
  std::vector<LqrTask> tasks;
  std::vector<double> weights;
  for (long i = 0; i < n; ++i) {
    auto it = cfg.find("task " + std::to_string(i));
    if (it == cfg.end())
      throw ParseError("task set missing section [task " + std::to_string(i) + "]");
    const auto& sec = it->second;
    weights.push_back(parse_double(need(sec, "weight")));
    tasks.emplace_back(parse_matrix(need(sec, "A"), d, d, "A"),
                       parse_matrix(need(sec, "B"), d, k, "B"),
                       parse_matrix(need(sec, "Q"), d, d, "Q"),
                       parse_matrix(need(sec, "R"), k, k, "R"),
                       parse_matrix(need(sec, "Psi"), d, d, "Psi"),
                       parse_matrix(need(sec, "Sigma0"), d, d, "Sigma0"));
  }
  return TaskSet(std::move(tasks), std::move(weights));
}

ExperimentSpec ExperimentSpec::from_config(const ConfigMap& cfg) {
  ExperimentSpec spec;
  auto get = [&](const std::string& sec, const std::string& key) -> const std::string* {
    auto s = cfg.find(sec);
    if (s == cfg.end()) return nullptr;
    auto it = s->second.find(key);
    return it == s->second.end() ? nullptr : &it->second;
  };
  if (const auto* v = get("", "mode")) {
    if (*v == "zeroth") spec.mode = OptimizationMode::ZerothOrder;
    else if (*v == "exact") spec.mode = OptimizationMode::ExactOracle;
    else throw ParseError("mode: expected 'zeroth' or 'exact', got '" + *v + "'");
  }
  if (const auto* v = get("", "outputs")) spec.outputs = *v;
  if (const auto* v = get("", "tasks_path")) spec.tasks_path = *v;

  if (const auto* v = get("taskgen", "d")) spec.taskgen.d = parse_long(*v);
  if (const auto* v = get("taskgen", "k")) spec.taskgen.k = parse_long(*v);
  if (const auto* v = get("taskgen", "num_tasks")) spec.taskgen.num_tasks = parse_long(*v);
  if (const auto* v = get("taskgen", "center_entry_low"))
    spec.taskgen.center_entry_low = parse_double(*v);
  if (const auto* v = get("taskgen", "center_entry_high"))
    spec.taskgen.center_entry_high = parse_double(*v);
  if (const auto* v = get("taskgen", "perturbation_std"))
    spec.taskgen.perturbation_std = parse_double(*v);
  if (const auto* v = get("taskgen", "spectral_target"))
    spec.taskgen.spectral_target = parse_double(*v);
  if (const auto* v = get("taskgen", "seed")) spec.taskgen.seed = parse_u64(*v);

  MetaConfig& m = spec.meta;
  if (const auto* v = get("meta", "adaptation_rate")) m.adaptation_rate = parse_double(*v);
  if (const auto* v = get("meta", "learning_rate")) m.learning_rate = parse_double(*v);
  if (const auto* v = get("meta", "radius")) m.smoothing.radius = parse_double(*v);
  if (const auto* v = get("meta", "num_perturbations"))
    m.smoothing.num_perturbations = parse_long(*v);
  if (const auto* v = get("meta", "horizon")) m.smoothing.horizon = parse_long(*v);
  if (const auto* v = get("meta", "inner_num_perturbations"))
    m.inner_num_perturbations = parse_long(*v);
  if (const auto* v = get("meta", "task_batch_size")) m.task_batch_size = parse_long(*v);
  if (const auto* v = get("meta", "max_iterations")) m.max_iterations = parse_long(*v);
  if (const auto* v = get("meta", "tolerance")) m.tolerance = parse_double(*v);
  if (const auto* v = get("meta", "seed")) m.seed = parse_u64(*v);
  if (const auto* v = get("meta", "antithetic")) m.antithetic = parse_bool(*v);
  if (const auto* v = get("checks", "stability")) m.check_stability = parse_bool(*v);
  if (const auto* v = get("checks", "exact_error")) m.report_exact_error = parse_bool(*v);
  return spec;
}

ConfigMap ExperimentSpec::to_config() const {
  ConfigMap cfg;
  cfg[""]["mode"] = mode == OptimizationMode::ZerothOrder ? "zeroth" : "exact";
  cfg[""]["outputs"] = outputs;
  if (tasks_path) cfg[""]["tasks_path"] = *tasks_path;
  auto& tg = cfg["taskgen"];
  tg["d"] = std::to_string(taskgen.d);
  tg["k"] = std::to_string(taskgen.k);
  tg["num_tasks"] = std::to_string(taskgen.num_tasks);
  tg["center_entry_low"] = format_double(taskgen.center_entry_low);
  tg["center_entry_high"] = format_double(taskgen.center_entry_high);
  tg["perturbation_std"] = format_double(taskgen.perturbation_std);
  tg["spectral_target"] = format_double(taskgen.spectral_target);
  tg["seed"] = std::to_string(taskgen.seed);
  auto& mc = cfg["meta"];
  mc["adaptation_rate"] = format_double(meta.adaptation_rate);
  mc["learning_rate"] = format_double(meta.learning_rate);
  mc["radius"] = format_double(meta.smoothing.radius);
  mc["num_perturbations"] = std::to_string(meta.smoothing.num_perturbations);
  mc["horizon"] = std::to_string(meta.smoothing.horizon);
  mc["inner_num_perturbations"] = std::to_string(meta.inner_num_perturbations);
  mc["task_batch_size"] = std::to_string(meta.task_batch_size);
  mc["max_iterations"] = std::to_string(meta.max_iterations);
  mc["tolerance"] = format_double(meta.tolerance);
  mc["seed"] = std::to_string(meta.seed);
  mc["antithetic"] = meta.antithetic ? "true" : "false";
  auto& ck = cfg["checks"];
  ck["stability"] = meta.check_stability ? "true" : "false";
  ck["exact_error"] = meta.report_exact_error ? "true" : "false";
  return cfg;
}

ExperimentSpec preset(const std::string& name) {
  ExperimentSpec spec;
  spec.meta.learning_rate = 1e-3;
  spec.meta.adaptation_rate = 1e-5;
  spec.meta.smoothing = {0.05, 100, 50};
  spec.meta.task_batch_size = 5;
  spec.taskgen.num_tasks = 5;
  if (name == "fig1-d1") {
    spec.taskgen.d = 1;
    spec.taskgen.k = 1;
    spec.meta.max_iterations = 4000;
  } else if (name == "fig1-d2") {
    spec.taskgen.d = 2;
    spec.taskgen.k = 2;
    spec.meta.max_iterations = 4000;
  } else if (name == "fig1-d20") {
    spec.taskgen.d = 20;
    spec.taskgen.k = 10;
    spec.meta.learning_rate = 1e-5;
    spec.meta.adaptation_rate = 1e-7;
    spec.meta.max_iterations = 2000;
  } else {
    throw ArgumentError("unknown preset: " + name);
  }
  return spec;
}

void write_trace_csv(const LearningTrace& trace, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw Error("cannot open for writing: " + path);
  os << "iteration,ratio,meta_grad_norm";
  for (std::size_t i = 0; i < trace.optimal_costs.size(); ++i) os << ",gap_" << i;
  os << ",wall_secs\n";
  for (const auto& row : trace.rows) {
    os << row.iteration << ',' << format_double(row.ratio) << ','
       << format_double(row.meta_grad_norm);
    for (double g : row.task_gaps) os << ',' << format_double(g);
    os << ',' << format_double(row.wall_secs) << '\n';
  }
  if (!os) throw Error("write failed: " + path);
}

void write_manifest(const ExperimentSpec& spec, const std::string& path) {
  ConfigMap cfg = spec.to_config();
  cfg[""]["library_version"] = "metalqr 0.1.0";
  std::ofstream os(path);
  if (!os) throw Error("cannot open for writing: " + path);
  os << "# metalqr run manifest (replayable as a config file)\n";
  for (const auto& [section, entries] : cfg) {
    if (!section.empty()) os << '[' << section << "]\n";
    for (const auto& [key, value] : entries) os << key << " = " << value << '\n';
  }
  if (!os) throw Error("write failed: " + path);
}

void write_diagnostics(const DiagnosticsReport& report, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw Error("cannot open for writing: " + path);
  os << "trust_radius = " << format_double(report.trust_radius) << '\n';
  for (std::size_t i = 0; i < report.per_task.size(); ++i) {
    const auto& t = report.per_task[i];
    os << "\n[task " << i << "]\n";
    os << "stable = " << (t.stable ? "true" : "false") << '\n';
    os << "maml_stabilizing = " << (t.maml_stabilizing ? "true" : "false") << '\n';
    os << "sublevel_margin = " << format_double(t.sublevel_margin) << '\n';
    os << "lambda = " << format_double(t.lambda) << '\n';
    os << "lambda_psi = " << format_double(t.lambda_psi) << '\n';
    os << "graddom_satisfied = " << (t.graddom_satisfied ? "true" : "false") << '\n';
  }
  if (!os) throw Error("write failed: " + path);
}

}  // namespace metalqr
