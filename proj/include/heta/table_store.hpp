#pragma once

// Embedded relational table store with typed columns, conjunctive filters,
// aggregates, and inner equi-joins. Every row carries a provenance chunk id
// so query results can participate in retrieval fusion.

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "heta/common.hpp"
#include "heta/ingest.hpp"

namespace heta::table_store {

enum class ColumnType { text, integer, real, boolean };
const char* to_string(ColumnType type);
ColumnType column_type_from_string(const std::string& name);  // SchemaError

using Value = std::variant<std::string, std::int64_t, double, bool>;
ColumnType value_type(const Value& value);
std::string value_to_string(const Value& value);

struct ColumnSpec {
  std::string name;
  ColumnType type = ColumnType::text;
};

struct TableSchema {
  std::string name;
  std::vector<ColumnSpec> columns;
  int column_index(const std::string& name) const;  // UnknownColumn
};

struct Row {
  std::vector<Value> values;
  std::string provenance;  // chunk id the row came from; may be empty
};

enum class CmpOp { eq, ne, lt, le, gt, ge };
CmpOp cmp_from_string(const std::string& name);  // MalformedInput
const char* to_string(CmpOp op);

struct Predicate {
  std::string column;
  CmpOp op = CmpOp::eq;
  Value operand;
};

enum class AggFn { count, sum, avg, min, max };
AggFn agg_from_string(const std::string& name);  // MalformedInput
const char* to_string(AggFn fn);

struct Aggregate {
  AggFn fn = AggFn::count;
  std::string column;  // ignored for count
};

struct Join {
  std::string other_table;
  std::string left_column;
  std::string right_column;
};

struct Query {
  std::string table;
  std::vector<Predicate> filter;  // conjunction, applies to the left table
  std::vector<std::string> projection;  // empty means all columns
  std::optional<Aggregate> aggregate;
  std::optional<Join> join;
};

struct ResultSet {
  std::vector<std::string> columns;
  std::vector<Row> rows;
  std::optional<Value> aggregate_value;
  std::vector<std::string> provenance;  // dedup, first-occurrence order
};

class TableStore {
public:
  void create_table(const TableSchema& schema);  // AlreadyExists, SchemaError
  bool has_table(const std::string& name) const;
  const TableSchema& schema(const std::string& name) const;  // UnknownTable
  const std::vector<Row>& rows(const std::string& name) const;

  // All-or-nothing: any TypeMismatch leaves the table untouched.
  void insert_rows(const std::string& table, const std::vector<Row>& rows);

  // Header must match the schema column names in order.
  std::int64_t import_csv(const std::string& table, const std::string& csv_text,
                          const std::string& provenance = "");

  ResultSet run_query(const Query& query) const;

  std::vector<std::string> table_names() const;
  std::int64_t total_rows() const;

  void snapshot(const std::string& dir) const;
  static TableStore restore(const std::string& dir);  // CorruptSnapshot

private:
  std::map<std::string, TableSchema> schemas_;
  std::map<std::string, std::vector<Row>> rows_;
};

// Parses one text cell into a typed value. SchemaError on failure.
Value parse_cell(const std::string& text, ColumnType type, const std::string& column);

// Maps a table-modality chunk onto a new table when its grid is rectangular
// with at least a header row and one data row; otherwise warns and skips.
// Returns the created table name, or empty.
std::string import_table_chunk(TableStore& store, const ingest::Chunk& chunk);

// Splits chunk text into a cell grid: rows on newlines, cells on '|' when any
// pipe is present, else on tabs.
std::vector<std::vector<std::string>> table_grid(const std::string& text);

}  // namespace heta::table_store
