#include "biaslab/labelspace.h"

#include <array>

#include "biaslab/common.h"

namespace biaslab::labels {

std::vector<std::string> TaskModeSpec::head_tasks() const {
  switch (mode) {
    case TaskMode::stl_bias:
      return {"bias"};
    case TaskMode::stl_stereotype:
      return {"stereotype"};
    case TaskMode::stl_auxiliary:
      return {auxiliary_task_name(auxiliary.value())};
    case TaskMode::shared_mtl:
      return {"bias", auxiliary_task_name(auxiliary.value())};
    case TaskMode::full_mtl:
      return {"joint"};
  }
  throw ConfigError("unreachable task mode");
}

int TaskModeSpec::classes_for(const std::string& task) const {
  return task == "joint" ? 4 : 2;
}

void TaskModeSpec::validate() const {
  bool needs_aux =
      mode == TaskMode::stl_auxiliary || mode == TaskMode::shared_mtl;
  if (needs_aux && !auxiliary.has_value()) {
    throw ConfigError("task mode " + task_mode_name(mode) +
                      " requires an auxiliary task");
  }
  if (!needs_aux && auxiliary.has_value()) {
    throw ConfigError("task mode " + task_mode_name(mode) +
                      " does not take an auxiliary task");
  }
}

std::string TaskModeSpec::describe() const {
  std::string s = task_mode_name(mode);
  if (auxiliary.has_value()) s += "(" + auxiliary_task_name(*auxiliary) + ")";
  return s;
}

TaskMode parse_task_mode(const std::string& s) {
  std::string v = to_lower(trim(s));
  if (v == "stl_bias") return TaskMode::stl_bias;
  if (v == "stl_stereotype") return TaskMode::stl_stereotype;
  if (v == "stl_auxiliary") return TaskMode::stl_auxiliary;
  if (v == "shared_mtl") return TaskMode::shared_mtl;
  if (v == "full_mtl") return TaskMode::full_mtl;
  throw ConfigError("unknown task mode: \"" + s + "\"");
}

std::string task_mode_name(TaskMode m) {
  switch (m) {
    case TaskMode::stl_bias:
      return "stl_bias";
    case TaskMode::stl_stereotype:
      return "stl_stereotype";
    case TaskMode::stl_auxiliary:
      return "stl_auxiliary";
    case TaskMode::shared_mtl:
      return "shared_mtl";
    case TaskMode::full_mtl:
      return "full_mtl";
  }
  throw ConfigError("unreachable task mode");
}

AuxiliaryTask parse_auxiliary_task(const std::string& s) {
  std::string v = to_lower(trim(s));
  if (v == "stereotype") return AuxiliaryTask::stereotype;
  if (v == "sentiment") return AuxiliaryTask::sentiment;
  throw ConfigError("unknown auxiliary task: \"" + s + "\"");
}

std::string auxiliary_task_name(AuxiliaryTask t) {
  return t == AuxiliaryTask::stereotype ? "stereotype" : "sentiment";
}

JointLabel to_joint(Binary bias, Binary stereotype) {
  int index = (stereotype == Binary::positive ? 2 : 0) +
              (bias == Binary::positive ? 1 : 0);
  return JointLabel{index};
}

std::pair<Binary, Binary> from_joint(JointLabel j) {
  if (j.index < 0 || j.index > 3) {
    throw DataError("joint label index out of range: " +
                    std::to_string(j.index));
  }
  Binary bias = (j.index & 1) ? Binary::positive : Binary::negative;
  Binary stereotype = (j.index & 2) ? Binary::positive : Binary::negative;
  return {bias, stereotype};
}

namespace {

const std::array<TaskAliases, 3> kTasks = {{
    {"bias", "no_bias", "bias"},
    {"stereotype", "no_stereotype", "stereotype"},
    {"sentiment", "negative", "positive"},
}};

const TaskAliases* find_task(const std::string& task) {
  for (const auto& t : kTasks) {
    if (t.task == task) return &t;
  }
  return nullptr;
}

// "no bias" and "no-bias" match the canonical "no_bias".
std::string canon(const std::string& s) {
  std::string v = to_lower(trim(s));
  for (char& c : v) {
    if (c == ' ' || c == '-') c = '_';
  }
  return v;
}

}  // namespace

const TaskAliases& task_aliases(const std::string& task) {
  const TaskAliases* t = find_task(task);
  if (!t) throw ConfigError("unregistered task: \"" + task + "\"");
  return *t;
}

bool is_known_task(const std::string& task) {
  return find_task(task) != nullptr;
}

Binary parse_label(const std::string& raw, const std::string& task) {
  const TaskAliases& t = task_aliases(task);
  std::string v = canon(raw);
  if (v == canon(t.positive_name) || v == "1" || v == "yes" || v == "true") {
    return Binary::positive;
  }
  if (v == canon(t.negative_name) || v == "0" || v == "no" || v == "false") {
    return Binary::negative;
  }
  throw DataError("cannot parse label \"" + raw + "\" for task " + t.task);
}

const std::string& label_name(Binary value, const std::string& task) {
  const TaskAliases& t = task_aliases(task);
  return value == Binary::positive ? t.positive_name : t.negative_name;
}

int parse_joint_label(const std::string& raw) {
  std::string v = trim(raw);
  if (v.size() == 1 && v[0] >= '0' && v[0] <= '3') return v[0] - '0';
  throw DataError("cannot parse joint label \"" + raw + "\"");
}

}  // namespace biaslab::labels
