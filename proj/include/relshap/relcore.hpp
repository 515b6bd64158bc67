/*
 * Copyright 2026 The relshap Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <utility>
#include <variant>
#include <vector>

#include <json.hpp>

#include "errors.hpp"

namespace relshap {

enum class ColumnType { integer, decimal, text, date };

inline std::string_view to_string(ColumnType type) {
  switch (type) {
    case ColumnType::integer: return "integer";
    case ColumnType::decimal: return "decimal";
    case ColumnType::text: return "text";
    case ColumnType::date: return "date";
  }
  return "?";
}

inline ColumnType parse_column_type(std::string_view name) {
  if (name == "integer" || name == "int") return ColumnType::integer;
  if (name == "decimal" || name == "double") return ColumnType::decimal;
  if (name == "text" || name == "string") return ColumnType::text;
  if (name == "date") return ColumnType::date;
  throw ValidationError("unknown column type '" + std::string(name) + "'");
}

inline bool is_numeric(ColumnType type) { return type != ColumnType::text; }

/// Globally unique tuple identifier, assigned relation-major in row order.
struct TupleId {
  std::uint32_t value = 0;
  auto operator<=>(const TupleId&) const = default;
};

/// Dates are stored as days since 1970-01-01.
inline std::int64_t parse_date(std::string_view text) {
  int y = 0;
  unsigned m = 0, d = 0;
  auto fail = [&] { throw ValidationError("type mismatch: '" + std::string(text) + "' is not a YYYY-MM-DD date"); };
  if (text.size() != 10 || text[4] != '-' || text[7] != '-') fail();
  auto num = [&](std::string_view part, auto& out) {
    auto [ptr, ec] = std::from_chars(part.data(), part.data() + part.size(), out);
    if (ec != std::errc() || ptr != part.data() + part.size()) fail();
  };
  num(text.substr(0, 4), y);
  num(text.substr(5, 2), m);
  num(text.substr(8, 2), d);
  std::chrono::year_month_day ymd{std::chrono::year{y}, std::chrono::month{m}, std::chrono::day{d}};
  if (!ymd.ok()) fail();
  return std::chrono::sys_days{ymd}.time_since_epoch().count();
}

inline std::string format_date(std::int64_t epoch_day) {
  std::chrono::year_month_day ymd{std::chrono::sys_days{std::chrono::days{epoch_day}}};
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()));
  return buf;
}

/// Shortest text that parses back to the same double.
inline std::string format_number(double value) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, value);
  return std::string(buf, ptr);
}

struct Column {
  std::string name;
  ColumnType type = ColumnType::decimal;
};

using Cell = std::variant<double, std::string>;

/// Column-major table. Numeric and date cells live in `numbers`, text in `texts`.
class Relation {
 public:
  Relation(std::string name, std::vector<Column> columns, bool endogenous = true)
      : name_(std::move(name)), columns_(std::move(columns)), endogenous_(endogenous),
        data_(columns_.size()) {
    for (std::size_t i = 0; i < columns_.size(); ++i)
      for (std::size_t j = 0; j < i; ++j)
        if (columns_[i].name == columns_[j].name)
          throw ValidationError("duplicate column '" + columns_[i].name + "' in relation " + name_);
  }

  const std::string& name() const { return name_; }
  const std::vector<Column>& columns() const { return columns_; }
  bool endogenous() const { return endogenous_; }
  std::size_t size() const { return rows_; }

  std::optional<std::size_t> column_index(std::string_view column) const {
    for (std::size_t i = 0; i < columns_.size(); ++i)
      if (columns_[i].name == column) return i;
    return std::nullopt;
  }

  double number(std::size_t column, std::size_t row) const { return data_[column].numbers[row]; }
  const std::string& text(std::size_t column, std::size_t row) const { return data_[column].texts[row]; }
  const std::vector<double>& numbers(std::size_t column) const { return data_[column].numbers; }
  const std::vector<std::string>& texts(std::size_t column) const { return data_[column].texts; }

  Cell cell(std::size_t column, std::size_t row) const {
    if (columns_[column].type == ColumnType::text) return text(column, row);
    return number(column, row);
  }

  /// Appends a row of already-typed cells.
  void append(const std::vector<Cell>& row) {
    if (row.size() != columns_.size())
      throw ValidationError("row arity " + std::to_string(row.size()) + " does not match " +
                            std::to_string(columns_.size()) + " columns of " + name_);
    for (std::size_t c = 0; c < row.size(); ++c) {
      bool text_col = columns_[c].type == ColumnType::text;
      if (text_col != std::holds_alternative<std::string>(row[c]))
        throw ValidationError("type mismatch in column " + name_ + "." + columns_[c].name);
    }
    for (std::size_t c = 0; c < row.size(); ++c) {
      if (auto* s = std::get_if<std::string>(&row[c]))
        data_[c].texts.push_back(*s);
      else
        data_[c].numbers.push_back(std::get<double>(row[c]));
    }
    ++rows_;
  }

  /// Parses one textual cell according to the column type.
  Cell parse_cell(std::size_t column, std::string_view raw) const {
    const Column& col = columns_[column];
    auto mismatch = [&]() -> ValidationError {
      return ValidationError("type mismatch: '" + std::string(raw) + "' in " + to_string(col.type).data() +
                             " column " + name_ + "." + col.name);
    };
    switch (col.type) {
      case ColumnType::text:
        return std::string(raw);
      case ColumnType::date:
        try {
          return static_cast<double>(parse_date(raw));
        } catch (const ValidationError&) {
          throw mismatch();
        }
      case ColumnType::integer: {
        std::int64_t v = 0;
        auto [ptr, ec] = std::from_chars(raw.data(), raw.data() + raw.size(), v);
        if (ec != std::errc() || ptr != raw.data() + raw.size()) throw mismatch();
        return static_cast<double>(v);
      }
      case ColumnType::decimal: {
        double v = 0;
        auto [ptr, ec] = std::from_chars(raw.data(), raw.data() + raw.size(), v);
        if (ec != std::errc() || ptr != raw.data() + raw.size()) throw mismatch();
        return v;
      }
    }
    throw mismatch();
  }

  std::string format_cell(std::size_t column, std::size_t row) const {
    switch (columns_[column].type) {
      case ColumnType::text: return text(column, row);
      case ColumnType::date: return format_date(static_cast<std::int64_t>(number(column, row)));
      case ColumnType::integer: return std::to_string(static_cast<std::int64_t>(number(column, row)));
      case ColumnType::decimal: return format_number(number(column, row));
    }
    return {};
  }

 private:
  struct ColumnData {
    std::vector<double> numbers;
    std::vector<std::string> texts;
  };

  std::string name_;
  std::vector<Column> columns_;
  bool endogenous_ = true;
  std::vector<ColumnData> data_;
  std::size_t rows_ = 0;
};

/// Immutable set of relations with relation-major tuple identifiers.
class DatabaseInstance {
 public:
  DatabaseInstance() = default;

  explicit DatabaseInstance(std::vector<Relation> relations) : relations_(std::move(relations)) {
    std::uint64_t next = 0;
    for (std::size_t i = 0; i < relations_.size(); ++i) {
      for (std::size_t j = 0; j < i; ++j)
        if (relations_[i].name() == relations_[j].name())
          throw ValidationError("duplicate relation name '" + relations_[i].name() + "'");
      first_id_.push_back(static_cast<std::uint32_t>(next));
      next += relations_[i].size();
    }
    if (next > UINT32_MAX) throw ValidationError("instance too large for 32-bit tuple ids");
    total_ = static_cast<std::size_t>(next);
  }

  const std::vector<Relation>& relations() const { return relations_; }
  const Relation& relation(std::size_t index) const { return relations_.at(index); }
  std::size_t total_tuples() const { return total_; }

  std::optional<std::size_t> find(std::string_view name) const {
    for (std::size_t i = 0; i < relations_.size(); ++i)
      if (relations_[i].name() == name) return i;
    return std::nullopt;
  }

  TupleId id(std::size_t relation, std::size_t row) const {
    return TupleId{first_id_[relation] + static_cast<std::uint32_t>(row)};
  }

  /// (relation index, row) for an id; nullopt when out of range.
  std::optional<std::pair<std::size_t, std::size_t>> locate(TupleId t) const {
    if (t.value >= total_) return std::nullopt;
    auto it = std::upper_bound(first_id_.begin(), first_id_.end(), t.value);
    std::size_t rel = static_cast<std::size_t>(it - first_id_.begin()) - 1;
    // Empty relations share a first id with their successor.
    while (relations_[rel].size() == 0 || t.value - first_id_[rel] >= relations_[rel].size()) ++rel;
    return std::pair{rel, static_cast<std::size_t>(t.value - first_id_[rel])};
  }

  /// "relation:row", the CLI-facing spelling of a tuple id.
  std::string label(TupleId t) const {
    auto loc = locate(t);
    if (!loc) return "#" + std::to_string(t.value);
    return relations_[loc->first].name() + ":" + std::to_string(loc->second);
  }

  /// Accepts either a global numeric id or "relation:row".
  TupleId parse_label(std::string_view text) const {
    auto colon = text.find(':');
    auto parse_index = [&](std::string_view digits) {
      std::size_t v = 0;
      auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), v);
      if (ec != std::errc() || ptr != digits.data() + digits.size())
        throw ValidationError("bad tuple id '" + std::string(text) + "'");
      return v;
    };
    if (colon == std::string_view::npos) {
      std::size_t v = parse_index(text);
      if (v >= total_) throw ValidationError("tuple id " + std::string(text) + " out of range");
      return TupleId{static_cast<std::uint32_t>(v)};
    }
    auto rel = find(text.substr(0, colon));
    if (!rel) throw ValidationError("unknown relation in tuple id '" + std::string(text) + "'");
    std::size_t row = parse_index(text.substr(colon + 1));
    if (row >= relations_[*rel].size()) throw ValidationError("row out of range in '" + std::string(text) + "'");
    return id(*rel, row);
  }

 private:
  std::vector<Relation> relations_;
  std::vector<std::uint32_t> first_id_;
  std::size_t total_ = 0;
};

namespace detail {

inline std::vector<std::string_view> split_csv_line(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    auto comma = line.find(',', start);
    out.push_back(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  for (auto& f : out) {
    while (!f.empty() && (f.back() == ' ' || f.back() == '\r')) f.remove_suffix(1);
    while (!f.empty() && f.front() == ' ') f.remove_prefix(1);
  }
  return out;
}

}  // namespace detail

/// Reads a comma-delimited table whose first line names the columns of `rel`.
inline void read_table(std::istream& in, Relation& rel) {
  std::string line;
  if (!std::getline(in, line)) throw ValidationError("table file for " + rel.name() + " has no header row");
  auto header = detail::split_csv_line(line);
  const auto& cols = rel.columns();
  if (header.size() != cols.size())
    throw ValidationError("schema/file mismatch for " + rel.name() + ": header has " +
                          std::to_string(header.size()) + " columns, schema " + std::to_string(cols.size()));
  for (std::size_t i = 0; i < cols.size(); ++i)
    if (header[i] != cols[i].name)
      throw ValidationError("schema/file mismatch for " + rel.name() + ": column " + std::to_string(i) +
                            " is '" + std::string(header[i]) + "', expected '" + cols[i].name + "'");
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    auto fields = detail::split_csv_line(line);
    if (fields.size() != cols.size())
      throw ValidationError(rel.name() + " line " + std::to_string(lineno) + ": expected " +
                            std::to_string(cols.size()) + " cells, got " + std::to_string(fields.size()));
    std::vector<Cell> row;
    row.reserve(fields.size());
    for (std::size_t c = 0; c < fields.size(); ++c) {
      if (fields[c].empty())
        throw ValidationError(rel.name() + " line " + std::to_string(lineno) + ": empty cell in " + cols[c].name);
      row.push_back(rel.parse_cell(c, fields[c]));
    }
    rel.append(row);
  }
}

inline void write_table(std::ostream& out, const Relation& rel) {
  const auto& cols = rel.columns();
  for (std::size_t c = 0; c < cols.size(); ++c) out << (c ? "," : "") << cols[c].name;
  out << '\n';
  for (std::size_t r = 0; r < rel.size(); ++r) {
    for (std::size_t c = 0; c < cols.size(); ++c) out << (c ? "," : "") << rel.format_cell(c, r);
    out << '\n';
  }
}

/// Schema object: {"relations": [{"name", "file"?, "endogenous"?, "columns": [{"name","type"}]}]}
inline std::vector<Relation> parse_schema(const nlohmann::json& schema) {
  if (!schema.is_object() || !schema.contains("relations") || !schema["relations"].is_array())
    throw ValidationError("schema must be an object with a 'relations' array");
  std::vector<Relation> out;
  for (const auto& r : schema["relations"]) {
    if (!r.contains("name") || !r.contains("columns"))
      throw ValidationError("schema relation needs 'name' and 'columns'");
    std::vector<Column> cols;
    for (const auto& c : r["columns"])
      cols.push_back(Column{c.at("name").get<std::string>(), parse_column_type(c.at("type").get<std::string>())});
    out.emplace_back(r["name"].get<std::string>(), std::move(cols), r.value("endogenous", true));
  }
  return out;
}

inline nlohmann::json schema_json(const DatabaseInstance& db) {
  nlohmann::json rels = nlohmann::json::array();
  for (const auto& rel : db.relations()) {
    nlohmann::json cols = nlohmann::json::array();
    for (const auto& c : rel.columns()) cols.push_back({{"name", c.name}, {"type", to_string(c.type)}});
    rels.push_back({{"name", rel.name()}, {"file", rel.name() + ".csv"}, {"endogenous", rel.endogenous()}, {"columns", cols}});
  }
  return {{"relations", rels}};
}

/// Loads an instance from a schema and one table stream per relation, in schema order.
inline DatabaseInstance load_instance(const nlohmann::json& schema, const std::vector<std::istream*>& tables) {
  auto rels = parse_schema(schema);
  if (tables.size() != rels.size())
    throw ValidationError("schema lists " + std::to_string(rels.size()) + " relations but " +
                          std::to_string(tables.size()) + " table files were given");
  for (std::size_t i = 0; i < rels.size(); ++i) read_table(*tables[i], rels[i]);
  return DatabaseInstance(std::move(rels));
}

/// Loads an instance from explicit table files, in schema order.
inline DatabaseInstance load_instance(const nlohmann::json& schema, const std::vector<std::filesystem::path>& files) {
  std::vector<std::ifstream> streams;
  streams.reserve(files.size());
  std::vector<std::istream*> ptrs;
  for (const auto& f : files) {
    streams.emplace_back(f);
    if (!streams.back()) throw ValidationError("cannot open table file " + f.string());
  }
  for (auto& s : streams) ptrs.push_back(&s);
  return load_instance(schema, ptrs);
}

inline nlohmann::json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

/// Loads a schema file; table files default to "<name>.csv" next to it.
inline DatabaseInstance load_instance(const std::filesystem::path& schema_path) {
  auto schema = read_json_file(schema_path);
  std::vector<std::filesystem::path> files;
  auto dir = schema_path.parent_path();
  for (const auto& r : schema.value("relations", nlohmann::json::array()))
    files.push_back(dir / r.value("file", r.value("name", std::string()) + ".csv"));
  return load_instance(schema, files);
}

/// Writes schema.json plus one CSV per relation into `dir`.
inline void save_instance(const DatabaseInstance& db, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::ofstream(dir / "schema.json") << schema_json(db).dump(2) << '\n';
  for (const auto& rel : db.relations()) {
    std::ofstream out(dir / (rel.name() + ".csv"));
    write_table(out, rel);
  }
}

}  // namespace relshap
