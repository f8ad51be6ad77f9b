#include "taskdb/table.hpp"

#include <algorithm>
#include <sstream>

#include "taskdb/error.hpp"
#include "taskdb/strutil.hpp"

namespace taskdb {

const char* column_type_name(ColumnType t) {
  switch (t) {
    case ColumnType::Num: return "num";
    case ColumnType::Text: return "text";
    case ColumnType::Tensor: return "mvec";
  }
  return "?";
}

std::string Column::repr(std::size_t row) const {
  switch (type) {
    case ColumnType::Num: return format_double(nums[row]);
    case ColumnType::Text: return texts[row];
    case ColumnType::Tensor: {
      // shape plus a content digest keeps keys short and exact
      return tensors[row].shape_string() + "#" +
             std::to_string(std::hash<std::string>{}(
                 std::string(reinterpret_cast<const char*>(tensors[row].data().data()),
                             tensors[row].data().size() * sizeof(double))));
    }
  }
  return {};
}

const Column* RowBatch::find(const std::string& name) const {
  for (const Column& c : columns)
    if (c.name == name) return &c;
  return nullptr;
}

const Column& RowBatch::at(const std::string& name) const {
  const Column* c = find(name);
  if (!c) raise(ErrorCode::UnknownColumn, "no column '" + name + "'");
  return *c;
}

Column& RowBatch::add(const std::string& name, ColumnType type) {
  Column c;
  c.name = name;
  c.type = type;
  columns.push_back(std::move(c));
  return columns.back();
}

RowBatch RowBatch::empty_like() const {
  RowBatch out;
  for (const Column& c : columns) out.add(c.name, c.type);
  return out;
}

void RowBatch::append_row(const RowBatch& src, std::size_t row) {
  for (std::size_t i = 0; i < columns.size(); ++i)
    columns[i].append_from(src.columns[i], row);
  ++row_count;
}

RowBatch RowBatch::take_prefix(std::size_t rows) {
  RowBatch out = empty_like();
  std::size_t take = std::min<std::size_t>(rows, row_count);
  for (std::size_t r = 0; r < take; ++r) out.append_row(*this, r);
  RowBatch rest = empty_like();
  for (std::size_t r = take; r < row_count; ++r) rest.append_row(*this, r);
  *this = std::move(rest);
  return out;
}

void TableCatalog::put(const std::string& name, RowBatch table) {
  tables_[name] = std::move(table);
}

bool TableCatalog::has(const std::string& name) const { return tables_.count(name); }

const RowBatch& TableCatalog::get(const std::string& name) const {
  auto it = tables_.find(name);
  if (it == tables_.end()) raise(ErrorCode::UnknownTable, "no table '" + name + "'");
  return it->second;
}

std::vector<std::string> TableCatalog::names() const {
  std::vector<std::string> out;
  for (const auto& [name, t] : tables_) out.push_back(name);
  return out;
}

RowBatch TableCatalog::load_csv(const std::filesystem::path& csv_path) {
  std::string text = read_text_file(csv_path);
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line))
    raise(ErrorCode::IoError, "empty table file " + csv_path.string());

  RowBatch table;
  std::vector<std::size_t> tensor_cols;
  auto headers = split(trim(line), ',');
  for (std::size_t i = 0; i < headers.size(); ++i) {
    auto parts = split(trim(headers[i]), ':');
    std::string name = parts[0];
    std::string type = parts.size() > 1 ? parts[1] : "num";
    if (type == "num")
      table.add(name, ColumnType::Num);
    else if (type == "text")
      table.add(name, ColumnType::Text);
    else if (type == "mvec") {
      table.add(name, ColumnType::Tensor);
      tensor_cols.push_back(i);
    } else
      raise(ErrorCode::IoError, "unknown column type '" + type + "' in " +
                                    csv_path.string());
  }

  std::uint64_t rows = 0;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    auto cells = split(line, ',');
    if (cells.size() != table.columns.size())
      raise(ErrorCode::IoError, "ragged row in " + csv_path.string() + ": " + line);
    for (std::size_t i = 0; i < cells.size(); ++i) {
      Column& col = table.columns[i];
      switch (col.type) {
        case ColumnType::Num: col.nums.push_back(std::stod(trim(cells[i]))); break;
        case ColumnType::Text: col.texts.push_back(trim(cells[i])); break;
        case ColumnType::Tensor: break;  // sidecar carries the values
      }
    }
    ++rows;
  }
  table.row_count = rows;

  for (std::size_t i : tensor_cols) {
    Column& col = table.columns[i];
    auto sidecar = csv_path;
    sidecar.replace_extension("");
    sidecar += "." + col.name + ".mvecs";
    auto bytes = read_binary_file(sidecar);
    std::size_t offset = 0;
    while (offset < bytes.size()) col.tensors.push_back(Mvec::read_frame(bytes, &offset));
    if (col.tensors.size() != rows)
      raise(ErrorCode::IoError, "sidecar " + sidecar.string() + " has " +
                                    std::to_string(col.tensors.size()) +
                                    " frames for " + std::to_string(rows) + " rows");
  }
  return table;
}

void TableCatalog::load_dir(const std::filesystem::path& dir) {
  if (!std::filesystem::exists(dir)) return;
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir))
    if (entry.path().extension() == ".csv") files.push_back(entry.path());
  std::sort(files.begin(), files.end());
  for (const auto& file : files) put(file.stem().string(), load_csv(file));
}

}  // namespace taskdb
