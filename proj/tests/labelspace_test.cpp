#include <doctest.h>

#include "biaslab/common.h"
#include "biaslab/labelspace.h"

using namespace biaslab;
using namespace biaslab::labels;

TEST_SUITE("labelspace") {

TEST_CASE("joint enumeration is the frozen 4-way table") {
  // 0: neither, 1: bias only, 2: stereotype only, 3: both.
  CHECK(to_joint(Binary::negative, Binary::negative).index == 0);
  CHECK(to_joint(Binary::positive, Binary::negative).index == 1);
  CHECK(to_joint(Binary::negative, Binary::positive).index == 2);
  CHECK(to_joint(Binary::positive, Binary::positive).index == 3);
  CHECK(kLabelEnumerationVersion == 1);
}

TEST_CASE("from_joint inverts to_joint on all pairs") {
  for (Binary b : {Binary::negative, Binary::positive}) {
    for (Binary s : {Binary::negative, Binary::positive}) {
      auto [b2, s2] = from_joint(to_joint(b, s));
      CHECK(b2 == b);
      CHECK(s2 == s);
    }
  }
  CHECK_THROWS_AS(from_joint(JointLabel{4}), DataError);
  CHECK_THROWS_AS(from_joint(JointLabel{-1}), DataError);
}

TEST_CASE("parse_label accepts canonical names and generic aliases") {
  CHECK(parse_label("bias", "bias") == Binary::positive);
  CHECK(parse_label("No Bias", "bias") == Binary::negative);
  CHECK(parse_label("NO-BIAS", "bias") == Binary::negative);
  CHECK(parse_label("1", "bias") == Binary::positive);
  CHECK(parse_label("yes", "stereotype") == Binary::positive);
  CHECK(parse_label("true", "stereotype") == Binary::positive);
  CHECK(parse_label("0", "sentiment") == Binary::negative);
  CHECK(parse_label("positive", "sentiment") == Binary::positive);
  CHECK(parse_label(" negative ", "sentiment") == Binary::negative);
  CHECK_THROWS_AS(parse_label("maybe", "bias"), DataError);
  CHECK_THROWS_AS(parse_label("bias", "nope"), ConfigError);
}

TEST_CASE("label_name returns canonical task-specific names") {
  CHECK(label_name(Binary::positive, "bias") == "bias");
  CHECK(label_name(Binary::negative, "bias") == "no_bias");
  CHECK(label_name(Binary::positive, "stereotype") == "stereotype");
  CHECK(label_name(Binary::negative, "sentiment") == "negative");
}

TEST_CASE("parse_joint_label reads single digits 0-3") {
  CHECK(parse_joint_label("2") == 2);
  CHECK(parse_joint_label(" 3 ") == 3);
  CHECK_THROWS_AS(parse_joint_label("4"), DataError);
  CHECK_THROWS_AS(parse_joint_label("two"), DataError);
}

TEST_CASE("task mode names roundtrip") {
  for (TaskMode m : {TaskMode::stl_bias, TaskMode::stl_stereotype,
                     TaskMode::stl_auxiliary, TaskMode::shared_mtl,
                     TaskMode::full_mtl}) {
    CHECK(parse_task_mode(task_mode_name(m)) == m);
  }
  CHECK_THROWS_AS(parse_task_mode("triple_mtl"), ConfigError);
  CHECK(parse_auxiliary_task("sentiment") == AuxiliaryTask::sentiment);
  CHECK(auxiliary_task_name(AuxiliaryTask::stereotype) == "stereotype");
  CHECK_THROWS_AS(parse_auxiliary_task("sarcasm"), ConfigError);
}

TEST_CASE("head_tasks per mode") {
  TaskModeSpec spec;
  spec.mode = TaskMode::stl_bias;
  CHECK(spec.head_tasks() == std::vector<std::string>{"bias"});

  spec.mode = TaskMode::stl_stereotype;
  CHECK(spec.head_tasks() == std::vector<std::string>{"stereotype"});

  spec.mode = TaskMode::stl_auxiliary;
  spec.auxiliary = AuxiliaryTask::sentiment;
  CHECK(spec.head_tasks() == std::vector<std::string>{"sentiment"});

  spec.mode = TaskMode::shared_mtl;
  spec.auxiliary = AuxiliaryTask::stereotype;
  CHECK(spec.head_tasks() == std::vector<std::string>{"bias", "stereotype"});
  spec.auxiliary = AuxiliaryTask::sentiment;
  CHECK(spec.head_tasks() == std::vector<std::string>{"bias", "sentiment"});

  spec.mode = TaskMode::full_mtl;
  CHECK(spec.head_tasks() == std::vector<std::string>{"joint"});
}

TEST_CASE("classes_for joint head is 4, binary heads are 2") {
  TaskModeSpec spec;
  spec.mode = TaskMode::full_mtl;
  CHECK(spec.classes_for("joint") == 4);
  spec.mode = TaskMode::shared_mtl;
  spec.auxiliary = AuxiliaryTask::stereotype;
  CHECK(spec.classes_for("bias") == 2);
  CHECK(spec.classes_for("stereotype") == 2);
}

TEST_CASE("mode validation requires an auxiliary task where one is used") {
  TaskModeSpec spec;
  spec.mode = TaskMode::stl_auxiliary;
  spec.auxiliary.reset();
  CHECK_THROWS_AS(spec.validate(), ConfigError);
  spec.auxiliary = AuxiliaryTask::sentiment;
  CHECK_NOTHROW(spec.validate());

  spec.mode = TaskMode::shared_mtl;
  spec.auxiliary.reset();
  CHECK_THROWS_AS(spec.validate(), ConfigError);

  spec.mode = TaskMode::stl_bias;
  CHECK_NOTHROW(spec.validate());
}

TEST_CASE("is_known_task recognizes the registered tasks") {
  CHECK(is_known_task("bias"));
  CHECK(is_known_task("stereotype"));
  CHECK(is_known_task("sentiment"));
  CHECK_FALSE(is_known_task("joint"));
  CHECK_FALSE(is_known_task("toxicity"));
}

}  // TEST_SUITE
