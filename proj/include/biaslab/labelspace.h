#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

// Task label spaces. The joint 4-class enumeration is a frozen constant:
// checkpoints and reports depend on it, so any change is a format-breaking
// version bump (see kLabelEnumerationVersion).
//
//   0 = (no_bias, no_stereotype)
//   1 = (bias,    no_stereotype)
//   2 = (no_bias, stereotype)
//   3 = (bias,    stereotype)

namespace biaslab::labels {

constexpr int kLabelEnumerationVersion = 1;

enum class Binary : int { negative = 0, positive = 1 };

enum class TaskMode {
  stl_bias,
  stl_stereotype,
  stl_auxiliary,
  shared_mtl,
  full_mtl,
};

enum class AuxiliaryTask { stereotype, sentiment };

struct TaskModeSpec {
  TaskMode mode = TaskMode::stl_bias;
  std::optional<AuxiliaryTask> auxiliary;

  // Head task names in deterministic order, e.g. {"bias", "stereotype"}.
  std::vector<std::string> head_tasks() const;
  int classes_for(const std::string& task) const;  // 2, or 4 for "joint"
  void validate() const;                           // auxiliary iff required
  std::string describe() const;
};

TaskMode parse_task_mode(const std::string& s);
std::string task_mode_name(TaskMode m);
AuxiliaryTask parse_auxiliary_task(const std::string& s);
std::string auxiliary_task_name(AuxiliaryTask t);

struct JointLabel {
  int index = 0;  // in {0,1,2,3}
};

JointLabel to_joint(Binary bias, Binary stereotype);
std::pair<Binary, Binary> from_joint(JointLabel j);  // throws on bad index

// Registered binary tasks: "bias", "stereotype", "sentiment". Each carries
// its canonical negative/positive names plus accepted aliases.
struct TaskAliases {
  std::string task;
  std::string negative_name;
  std::string positive_name;
};

const TaskAliases& task_aliases(const std::string& task);
bool is_known_task(const std::string& task);

// Case-insensitive strict parse against the task's alias table.
Binary parse_label(const std::string& raw, const std::string& task);
const std::string& label_name(Binary value, const std::string& task);

// Joint labels serialize as their index digits "0".."3".
int parse_joint_label(const std::string& raw);

}  // namespace biaslab::labels
