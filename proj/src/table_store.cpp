#include "heta/table_store.hpp"

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <filesystem>
#include <set>
#include <sstream>

#include <json.hpp>

namespace heta::table_store {

const char* to_string(ColumnType type) {
  switch (type) {
    case ColumnType::text: return "text";
    case ColumnType::integer: return "integer";
    case ColumnType::real: return "real";
    case ColumnType::boolean: return "boolean";
  }
  return "?";
}

ColumnType column_type_from_string(const std::string& name) {
  if (name == "text") return ColumnType::text;
  if (name == "integer") return ColumnType::integer;
  if (name == "real") return ColumnType::real;
  if (name == "boolean") return ColumnType::boolean;
  raise(ErrorKind::SchemaError, "unknown column type: " + name);
}

ColumnType value_type(const Value& value) {
  switch (value.index()) {
    case 0: return ColumnType::text;
    case 1: return ColumnType::integer;
    case 2: return ColumnType::real;
    default: return ColumnType::boolean;
  }
}

std::string value_to_string(const Value& value) {
  switch (value.index()) {
    case 0: return std::get<std::string>(value);
    case 1: return std::to_string(std::get<std::int64_t>(value));
    case 2: {
      std::ostringstream out;
      out << std::get<double>(value);
      return out.str();
    }
    default: return std::get<bool>(value) ? "true" : "false";
  }
}

int TableSchema::column_index(const std::string& col) const {
  for (std::size_t i = 0; i < columns.size(); ++i)
    if (columns[i].name == col) return static_cast<int>(i);
  raise(ErrorKind::UnknownColumn, "no column '" + col + "' in table '" + name + "'");
}

CmpOp cmp_from_string(const std::string& name) {
  if (name == "eq") return CmpOp::eq;
  if (name == "ne") return CmpOp::ne;
  if (name == "lt") return CmpOp::lt;
  if (name == "le") return CmpOp::le;
  if (name == "gt") return CmpOp::gt;
  if (name == "ge") return CmpOp::ge;
  raise(ErrorKind::MalformedInput, "unknown comparison: " + name);
}

const char* to_string(CmpOp op) {
  switch (op) {
    case CmpOp::eq: return "eq";
    case CmpOp::ne: return "ne";
    case CmpOp::lt: return "lt";
    case CmpOp::le: return "le";
    case CmpOp::gt: return "gt";
    case CmpOp::ge: return "ge";
  }
  return "?";
}

AggFn agg_from_string(const std::string& name) {
  if (name == "count") return AggFn::count;
  if (name == "sum") return AggFn::sum;
  if (name == "avg") return AggFn::avg;
  if (name == "min") return AggFn::min;
  if (name == "max") return AggFn::max;
  raise(ErrorKind::MalformedInput, "unknown aggregate: " + name);
}

const char* to_string(AggFn fn) {
  switch (fn) {
    case AggFn::count: return "count";
    case AggFn::sum: return "sum";
    case AggFn::avg: return "avg";
    case AggFn::min: return "min";
    case AggFn::max: return "max";
  }
  return "?";
}

namespace {

// Comparisons are only defined within a type family: numerics compare as
// doubles, text and booleans require an exact type match.
bool values_comparable(const Value& a, const Value& b) {
  auto ta = value_type(a);
  auto tb = value_type(b);
  auto numeric = [](ColumnType t) { return t == ColumnType::integer || t == ColumnType::real; };
  if (numeric(ta) && numeric(tb)) return true;
  return ta == tb;
}

int compare_values(const Value& a, const Value& b) {
  if (!values_comparable(a, b))
    raise(ErrorKind::TypeMismatch, "cannot compare " + std::string(to_string(value_type(a))) +
                                       " with " + std::string(to_string(value_type(b))));
  auto ta = value_type(a);
  auto tb = value_type(b);
  if (ta == ColumnType::text) {
    const auto& x = std::get<std::string>(a);
    const auto& y = std::get<std::string>(b);
    return x < y ? -1 : (x == y ? 0 : 1);
  }
  if (ta == ColumnType::boolean) {
    int x = std::get<bool>(a) ? 1 : 0;
    int y = std::get<bool>(b) ? 1 : 0;
    return x - y;
  }
  double x = ta == ColumnType::integer ? static_cast<double>(std::get<std::int64_t>(a))
                                       : std::get<double>(a);
  double y = tb == ColumnType::integer ? static_cast<double>(std::get<std::int64_t>(b))
                                       : std::get<double>(b);
  return x < y ? -1 : (x == y ? 0 : 1);
}

bool apply_cmp(CmpOp op, const Value& lhs, const Value& rhs) {
  int c = compare_values(lhs, rhs);
  switch (op) {
    case CmpOp::eq: return c == 0;
    case CmpOp::ne: return c != 0;
    case CmpOp::lt: return c < 0;
    case CmpOp::le: return c <= 0;
    case CmpOp::gt: return c > 0;
    case CmpOp::ge: return c >= 0;
  }
  return false;
}

bool value_matches_column(const Value& value, ColumnType type) {
  auto vt = value_type(value);
  if (vt == type) return true;
  // Integer literals are accepted into real columns.
  return type == ColumnType::real && vt == ColumnType::integer;
}

Value widen_for_column(const Value& value, ColumnType type) {
  if (type == ColumnType::real && value_type(value) == ColumnType::integer)
    return static_cast<double>(std::get<std::int64_t>(value));
  return value;
}

nlohmann::json value_to_json(const Value& value) {
  switch (value.index()) {
    case 0: return std::get<std::string>(value);
    case 1: return std::get<std::int64_t>(value);
    case 2: return std::get<double>(value);
    default: return std::get<bool>(value);
  }
}

Value value_from_json(const nlohmann::json& j, ColumnType type) {
  try {
    switch (type) {
      case ColumnType::text: return j.get<std::string>();
      case ColumnType::integer: return j.get<std::int64_t>();
      case ColumnType::real: return j.get<double>();
      case ColumnType::boolean: return j.get<bool>();
    }
  } catch (const nlohmann::json::exception&) {
  }
  raise(ErrorKind::CorruptSnapshot, "stored cell does not match schema type");
}

}  // namespace

void TableStore::create_table(const TableSchema& schema) {
  if (schema.name.empty()) raise(ErrorKind::SchemaError, "table name is empty");
  if (schema.columns.empty()) raise(ErrorKind::SchemaError, "table has no columns: " + schema.name);
  std::set<std::string> seen;
  for (const auto& col : schema.columns) {
    if (col.name.empty()) raise(ErrorKind::SchemaError, "column name is empty in " + schema.name);
    if (!seen.insert(col.name).second)
      raise(ErrorKind::SchemaError, "duplicate column '" + col.name + "' in " + schema.name);
  }
  if (schemas_.count(schema.name)) raise(ErrorKind::AlreadyExists, "table exists: " + schema.name);
  schemas_[schema.name] = schema;
  rows_[schema.name] = {};
}

bool TableStore::has_table(const std::string& name) const { return schemas_.count(name) > 0; }

const TableSchema& TableStore::schema(const std::string& name) const {
  auto it = schemas_.find(name);
  if (it == schemas_.end()) raise(ErrorKind::UnknownTable, "no table: " + name);
  return it->second;
}

const std::vector<Row>& TableStore::rows(const std::string& name) const {
  auto it = rows_.find(name);
  if (it == rows_.end()) raise(ErrorKind::UnknownTable, "no table: " + name);
  return it->second;
}

void TableStore::insert_rows(const std::string& table, const std::vector<Row>& new_rows) {
  const auto& sch = schema(table);
  std::vector<Row> staged;
  staged.reserve(new_rows.size());
  for (const auto& row : new_rows) {
    if (row.values.size() != sch.columns.size())
      raise(ErrorKind::TypeMismatch,
            "row arity " + std::to_string(row.values.size()) + " != " +
                std::to_string(sch.columns.size()) + " for table " + table);
    Row widened = row;
    for (std::size_t i = 0; i < sch.columns.size(); ++i) {
      if (!value_matches_column(row.values[i], sch.columns[i].type))
        raise(ErrorKind::TypeMismatch, "column '" + sch.columns[i].name + "' expects " +
                                           to_string(sch.columns[i].type));
      widened.values[i] = widen_for_column(row.values[i], sch.columns[i].type);
    }
    staged.push_back(std::move(widened));
  }
  auto& dest = rows_[table];
  dest.insert(dest.end(), staged.begin(), staged.end());
}

Value parse_cell(const std::string& text, ColumnType type, const std::string& column) {
  std::string t = trim(text);
  switch (type) {
    case ColumnType::text:
      return t;
    case ColumnType::integer: {
      if (t.empty()) raise(ErrorKind::SchemaError, "empty integer cell in column " + column);
      char* end = nullptr;
      errno = 0;
      long long v = std::strtoll(t.c_str(), &end, 10);
      if (errno != 0 || end != t.c_str() + t.size())
        raise(ErrorKind::SchemaError, "bad integer '" + t + "' in column " + column);
      return static_cast<std::int64_t>(v);
    }
    case ColumnType::real: {
      if (t.empty()) raise(ErrorKind::SchemaError, "empty real cell in column " + column);
      char* end = nullptr;
      errno = 0;
      double v = std::strtod(t.c_str(), &end);
      if (errno != 0 || end != t.c_str() + t.size())
        raise(ErrorKind::SchemaError, "bad real '" + t + "' in column " + column);
      return v;
    }
    case ColumnType::boolean: {
      std::string low = lowercase(t);
      if (low == "true" || low == "1") return true;
      if (low == "false" || low == "0") return false;
      raise(ErrorKind::SchemaError, "bad boolean '" + t + "' in column " + column);
    }
  }
  raise(ErrorKind::SchemaError, "unhandled column type");
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  for (char c : line) {
    if (c == ',') {
      cells.push_back(cell);
      cell.clear();
    } else {
      cell.push_back(c);
    }
  }
  cells.push_back(cell);
  return cells;
}

}  // namespace

std::int64_t TableStore::import_csv(const std::string& table, const std::string& csv_text,
                                    const std::string& provenance) {
  const auto& sch = schema(table);
  std::istringstream in(csv_text);
  std::string line;
  if (!std::getline(in, line)) raise(ErrorKind::SchemaError, "csv has no header");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  auto header = split_csv_line(line);
  if (header.size() != sch.columns.size())
    raise(ErrorKind::SchemaError, "csv header arity mismatch for table " + table);
  for (std::size_t i = 0; i < header.size(); ++i)
    if (trim(header[i]) != sch.columns[i].name)
      raise(ErrorKind::SchemaError, "csv header column '" + trim(header[i]) +
                                        "' expected '" + sch.columns[i].name + "'");
  std::vector<Row> staged;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    auto cells = split_csv_line(line);
    if (cells.size() != sch.columns.size())
      raise(ErrorKind::SchemaError, "csv row arity mismatch for table " + table);
    Row row;
    row.provenance = provenance;
    for (std::size_t i = 0; i < cells.size(); ++i)
      row.values.push_back(parse_cell(cells[i], sch.columns[i].type, sch.columns[i].name));
    staged.push_back(std::move(row));
  }
  insert_rows(table, staged);
  return static_cast<std::int64_t>(staged.size());
}

ResultSet TableStore::run_query(const Query& query) const {
  const auto& left_schema = schema(query.table);
  const auto& left_rows = rows(query.table);

  // Pre-resolve filter columns; the filter only sees left-table columns.
  std::vector<std::pair<int, const Predicate*>> filter_cols;
  filter_cols.reserve(query.filter.size());
  for (const auto& pred : query.filter)
    filter_cols.emplace_back(left_schema.column_index(pred.column), &pred);

  std::vector<const Row*> matched;
  for (const auto& row : left_rows) {
    bool ok = true;
    for (const auto& [idx, pred] : filter_cols) {
      if (!apply_cmp(pred->op, row.values[static_cast<std::size_t>(idx)], pred->operand)) {
        ok = false;
        break;
      }
    }
    if (ok) matched.push_back(&row);
  }

  // Working set after the optional join: column names plus value rows that
  // keep the left row's provenance.
  std::vector<std::string> work_columns;
  for (const auto& col : left_schema.columns) work_columns.push_back(col.name);
  std::vector<Row> work_rows;

  if (query.join) {
    const auto& right_schema = schema(query.join->other_table);
    const auto& right_rows = rows(query.join->other_table);
    int left_key = left_schema.column_index(query.join->left_column);
    int right_key = right_schema.column_index(query.join->right_column);

    std::set<std::string> left_names(work_columns.begin(), work_columns.end());
    std::vector<int> right_cols;
    for (std::size_t i = 0; i < right_schema.columns.size(); ++i) {
      if (static_cast<int>(i) == right_key) continue;
      right_cols.push_back(static_cast<int>(i));
      const auto& name = right_schema.columns[i].name;
      work_columns.push_back(left_names.count(name) ? query.join->other_table + "." + name : name);
    }
    for (const Row* lrow : matched) {
      for (const auto& rrow : right_rows) {
        const Value& lv = lrow->values[static_cast<std::size_t>(left_key)];
        const Value& rv = rrow.values[static_cast<std::size_t>(right_key)];
        if (!values_comparable(lv, rv) || compare_values(lv, rv) != 0) continue;
        Row out;
        out.values = lrow->values;
        for (int ci : right_cols) out.values.push_back(rrow.values[static_cast<std::size_t>(ci)]);
        out.provenance = lrow->provenance;
        work_rows.push_back(std::move(out));
      }
    }
  } else {
    for (const Row* lrow : matched) work_rows.push_back(*lrow);
  }

  ResultSet result;
  std::set<std::string> seen_prov;
  for (const auto& row : work_rows) {
    if (row.provenance.empty()) continue;
    if (seen_prov.insert(row.provenance).second) result.provenance.push_back(row.provenance);
  }

  auto work_index = [&](const std::string& name) {
    for (std::size_t i = 0; i < work_columns.size(); ++i)
      if (work_columns[i] == name) return static_cast<int>(i);
    raise(ErrorKind::UnknownColumn, "no column '" + name + "' in query result");
  };

  if (query.aggregate) {
    const auto& agg = *query.aggregate;
    if (agg.fn == AggFn::count) {
      result.aggregate_value = static_cast<std::int64_t>(work_rows.size());
      result.columns = {"count"};
      return result;
    }
    int idx = work_index(agg.column);
    bool all_integer = true;
    double total = 0.0;
    std::int64_t itotal = 0;
    std::optional<Value> best;
    for (const auto& row : work_rows) {
      const Value& v = row.values[static_cast<std::size_t>(idx)];
      auto vt = value_type(v);
      if (vt != ColumnType::integer && vt != ColumnType::real)
        raise(ErrorKind::TypeMismatch, "aggregate over non-numeric column " + agg.column);
      if (vt == ColumnType::integer) {
        itotal += std::get<std::int64_t>(v);
        total += static_cast<double>(std::get<std::int64_t>(v));
      } else {
        all_integer = false;
        total += std::get<double>(v);
      }
      if (agg.fn == AggFn::min) {
        if (!best || compare_values(v, *best) < 0) best = v;
      } else if (agg.fn == AggFn::max) {
        if (!best || compare_values(v, *best) > 0) best = v;
      }
    }
    switch (agg.fn) {
      case AggFn::sum:
        result.aggregate_value = work_rows.empty()
                                     ? Value(static_cast<std::int64_t>(0))
                                     : (all_integer ? Value(itotal) : Value(total));
        break;
      case AggFn::avg:
        if (work_rows.empty()) raise(ErrorKind::EmptyAggregate, "avg over zero rows");
        result.aggregate_value = total / static_cast<double>(work_rows.size());
        break;
      case AggFn::min:
      case AggFn::max:
        if (!best) raise(ErrorKind::EmptyAggregate, std::string(to_string(agg.fn)) + " over zero rows");
        result.aggregate_value = *best;
        break;
      case AggFn::count:
        break;
    }
    result.columns = {to_string(agg.fn)};
    return result;
  }

  std::vector<int> proj;
  if (query.projection.empty()) {
    for (std::size_t i = 0; i < work_columns.size(); ++i) proj.push_back(static_cast<int>(i));
  } else {
    for (const auto& name : query.projection) proj.push_back(work_index(name));
  }
  for (int idx : proj) result.columns.push_back(work_columns[static_cast<std::size_t>(idx)]);
  for (const auto& row : work_rows) {
    Row out;
    out.provenance = row.provenance;
    for (int idx : proj) out.values.push_back(row.values[static_cast<std::size_t>(idx)]);
    result.rows.push_back(std::move(out));
  }
  return result;
}

std::vector<std::string> TableStore::table_names() const {
  std::vector<std::string> names;
  for (const auto& [name, schema] : schemas_) names.push_back(name);
  return names;
}

std::int64_t TableStore::total_rows() const {
  std::int64_t total = 0;
  for (const auto& [name, rows] : rows_) total += static_cast<std::int64_t>(rows.size());
  return total;
}

void TableStore::snapshot(const std::string& dir) const {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  // Remove stale table files so the directory mirrors the store exactly.
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.path().extension() == ".json") fs::remove(entry.path());
  for (const auto& [name, sch] : schemas_) {
    nlohmann::json j;
    nlohmann::json cols = nlohmann::json::array();
    for (const auto& col : sch.columns)
      cols.push_back({{"name", col.name}, {"type", to_string(col.type)}});
    j["schema"] = {{"name", name}, {"columns", std::move(cols)}};
    nlohmann::json jrows = nlohmann::json::array();
    for (const auto& row : rows_.at(name)) {
      nlohmann::json vals = nlohmann::json::array();
      for (const auto& v : row.values) vals.push_back(value_to_json(v));
      jrows.push_back({{"values", std::move(vals)}, {"provenance", row.provenance}});
    }
    j["rows"] = std::move(jrows);
    write_file((fs::path(dir) / (name + ".json")).string(), j.dump(2) + "\n");
  }
}

TableStore TableStore::restore(const std::string& dir) {
  namespace fs = std::filesystem;
  TableStore store;
  if (!fs::exists(dir)) return store;
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.path().extension() == ".json") files.push_back(entry.path());
  std::sort(files.begin(), files.end());
  for (const auto& path : files) {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(read_file(path.string()));
    } catch (const nlohmann::json::exception& e) {
      raise(ErrorKind::CorruptSnapshot, "table snapshot unreadable: " + path.string());
    }
    try {
      TableSchema sch;
      sch.name = j.at("schema").at("name").get<std::string>();
      for (const auto& col : j.at("schema").at("columns"))
        sch.columns.push_back(ColumnSpec{col.at("name").get<std::string>(),
                                         column_type_from_string(col.at("type").get<std::string>())});
      store.create_table(sch);
      std::vector<Row> rows;
      for (const auto& jrow : j.at("rows")) {
        Row row;
        row.provenance = jrow.at("provenance").get<std::string>();
        const auto& vals = jrow.at("values");
        if (vals.size() != sch.columns.size())
          raise(ErrorKind::CorruptSnapshot, "row arity mismatch in " + path.string());
        for (std::size_t i = 0; i < sch.columns.size(); ++i)
          row.values.push_back(value_from_json(vals[i], sch.columns[i].type));
        rows.push_back(std::move(row));
      }
      store.insert_rows(sch.name, rows);
    } catch (const nlohmann::json::exception& e) {
      raise(ErrorKind::CorruptSnapshot, "table snapshot malformed: " + path.string());
    }
  }
  return store;
}

std::vector<std::vector<std::string>> table_grid(const std::string& text) {
  std::vector<std::vector<std::string>> grid;
  const char delim = text.find('|') != std::string::npos ? '|' : '\t';
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    std::vector<std::string> cells;
    std::string cell;
    for (char c : line) {
      if (c == delim) {
        cells.push_back(trim(cell));
        cell.clear();
      } else {
        cell.push_back(c);
      }
    }
    cells.push_back(trim(cell));
    // Markdown-style pipes leave empty leading/trailing cells; drop them.
    if (delim == '|') {
      if (!cells.empty() && cells.front().empty()) cells.erase(cells.begin());
      if (!cells.empty() && cells.back().empty()) cells.pop_back();
    }
    if (!cells.empty()) grid.push_back(std::move(cells));
  }
  return grid;
}

std::string import_table_chunk(TableStore& store, const ingest::Chunk& chunk) {
  auto grid = table_grid(chunk.text);
  if (grid.size() < 2) {
    warn("table chunk " + chunk.chunk_id + " skipped: fewer than two rows");
    return "";
  }
  const std::size_t width = grid[0].size();
  for (const auto& row : grid) {
    if (row.size() != width) {
      warn("table chunk " + chunk.chunk_id + " skipped: ragged rows");
      return "";
    }
  }
  std::string name = "t_";
  for (char c : chunk.chunk_id)
    name.push_back(std::isalnum(static_cast<unsigned char>(c)) ? c : '_');
  if (store.has_table(name)) {
    warn("table chunk " + chunk.chunk_id + " skipped: table already imported");
    return "";
  }
  TableSchema sch;
  sch.name = name;
  std::set<std::string> seen;
  for (std::size_t i = 0; i < width; ++i) {
    std::string col = trim(grid[0][i]);
    if (col.empty()) col = "col" + std::to_string(i + 1);
    while (seen.count(col)) col += "_";
    seen.insert(col);
    sch.columns.push_back(ColumnSpec{col, ColumnType::text});
  }
  store.create_table(sch);
  std::vector<Row> rows;
  for (std::size_t r = 1; r < grid.size(); ++r) {
    Row row;
    row.provenance = chunk.chunk_id;
    for (const auto& cell : grid[r]) row.values.push_back(cell);
    rows.push_back(std::move(row));
  }
  store.insert_rows(name, rows);
  return name;
}

}  // namespace heta::table_store
