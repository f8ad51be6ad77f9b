#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "taskdb/mvec.hpp"

namespace taskdb {

enum class ColumnType { Num, Text, Tensor };

const char* column_type_name(ColumnType t);

/// One named column; exactly one of the value vectors is populated.
struct Column {
  std::string name;
  ColumnType type = ColumnType::Num;
  std::vector<double> nums;
  std::vector<std::string> texts;
  std::vector<Mvec> tensors;

  std::size_t size() const {
    switch (type) {
      case ColumnType::Num: return nums.size();
      case ColumnType::Text: return texts.size();
      case ColumnType::Tensor: return tensors.size();
    }
    return 0;
  }

  void append_from(const Column& src, std::size_t row) {
    switch (type) {
      case ColumnType::Num: nums.push_back(src.nums[row]); break;
      case ColumnType::Text: texts.push_back(src.texts[row]); break;
      case ColumnType::Tensor: tensors.push_back(src.tensors[row]); break;
    }
  }

  /// Canonical cell text, used for group keys and result comparison.
  std::string repr(std::size_t row) const;
};

/// Columnar batch of rows: the execution currency between operators.
struct RowBatch {
  std::vector<Column> columns;
  std::uint64_t row_count = 0;

  const Column* find(const std::string& name) const;
  const Column& at(const std::string& name) const;
  Column& add(const std::string& name, ColumnType type);

  /// Row-schema copy with zero rows.
  RowBatch empty_like() const;
  void append_row(const RowBatch& src, std::size_t row);
  /// Splits off up to `rows` leading rows into a new batch.
  RowBatch take_prefix(std::size_t rows);
};

/// In-memory table set. Tables load from CSV with a `name:type` header row
/// (types: num, text, mvec); mvec columns read their frames from a
/// `<table>.<column>.mvecs` sidecar with one frame per row.
class TableCatalog {
 public:
  void put(const std::string& name, RowBatch table);
  bool has(const std::string& name) const;
  const RowBatch& get(const std::string& name) const;
  std::vector<std::string> names() const;

  void load_dir(const std::filesystem::path& dir);
  static RowBatch load_csv(const std::filesystem::path& csv_path);

 private:
  std::map<std::string, RowBatch> tables_;
};

}  // namespace taskdb
