#pragma once

#include <string>
#include <vector>

#include "taskdb/error.hpp"

namespace taskdb {

enum class TaskInputType { Text, Image, Series, Tensor };
enum class TaskKind { Classification, Regression };

const char* task_input_type_name(TaskInputType t);
TaskInputType task_input_type_from(const std::string& name);
const char* task_kind_name(TaskKind k);
TaskKind task_kind_from(const std::string& name);

/// Declared inference task: what the user wants done, not which model does it.
struct TaskSpec {
  std::string name;
  TaskInputType input_type = TaskInputType::Tensor;
  std::vector<std::string> output_labels;  // non-empty iff Classification
  TaskKind task_type = TaskKind::Regression;

  void validate() const {
    if (name.empty()) raise(ErrorCode::InvalidArgument, "task name empty");
    if (task_type == TaskKind::Classification && output_labels.empty())
      raise(ErrorCode::InvalidArgument,
            "classification task '" + name + "' needs output labels");
  }
};

inline const char* task_input_type_name(TaskInputType t) {
  switch (t) {
    case TaskInputType::Text: return "Text";
    case TaskInputType::Image: return "Image";
    case TaskInputType::Series: return "Series";
    case TaskInputType::Tensor: return "Tensor";
  }
  return "?";
}

inline TaskInputType task_input_type_from(const std::string& raw) {
  std::string low;
  for (char c : raw) low.push_back(char(std::tolower(static_cast<unsigned char>(c))));
  if (low == "text" || low == "text_blob") return TaskInputType::Text;
  if (low == "image" || low == "img") return TaskInputType::Image;
  if (low == "series") return TaskInputType::Series;
  if (low == "tensor" || low == "mvec") return TaskInputType::Tensor;
  raise(ErrorCode::InvalidArgument, "unknown task input type '" + raw + "'");
}

inline const char* task_kind_name(TaskKind k) {
  return k == TaskKind::Classification ? "Classification" : "Regression";
}

inline TaskKind task_kind_from(const std::string& raw) {
  std::string low;
  for (char c : raw) low.push_back(char(std::tolower(static_cast<unsigned char>(c))));
  if (low == "classification") return TaskKind::Classification;
  if (low == "regression") return TaskKind::Regression;
  raise(ErrorCode::InvalidArgument, "unknown task type '" + raw + "'");
}

}  // namespace taskdb
