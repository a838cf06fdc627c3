#include "classify/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <map>
#include <set>
#include <unordered_map>
#include <unordered_set>

#include "classify/error.hpp"
#include "classify/rng.hpp"

namespace classify {

namespace {

constexpr std::string_view kIndexColumn = "index";
constexpr std::string_view kClassColumn = "class";

std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && (s[b] == ' ' || s[b] == '\t')) ++b;
  while (e > b && (s[e - 1] == ' ' || s[e - 1] == '\t')) --e;
  return std::string(s.substr(b, e - b));
}

std::string upper(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return out;
}

std::optional<double> parse_number(std::string_view token) {
  if (token.empty()) return std::nullopt;
  if (token.front() == '+') token.remove_prefix(1);
  double value = 0.0;
  const auto* end = token.data() + token.size();
  auto [ptr, ec] = std::from_chars(token.data(), end, value);
  if (ec != std::errc() || ptr != end || !std::isfinite(value)) return std::nullopt;
  return value;
}

std::optional<bool> parse_bool(std::string_view token) {
  const std::string u = upper(token);
  if (u == "TRUE") return true;
  if (u == "FALSE") return false;
  return std::nullopt;
}

std::string format_number(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

std::string quote_if_needed(const std::string& token) {
  if (token.find_first_of(",\"\r\n") == std::string::npos) return token;
  std::string out = "\"";
  for (char c : token) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

using Record = std::vector<std::string>;

std::vector<Record> read_records(std::string_view raw) {
  if (raw.size() >= 3 && static_cast<unsigned char>(raw[0]) == 0xEF &&
      static_cast<unsigned char>(raw[1]) == 0xBB && static_cast<unsigned char>(raw[2]) == 0xBF) {
    raw.remove_prefix(3);
  }
  std::vector<Record> records;
  Record current;
  std::string field;
  bool in_quotes = false;
  bool field_quoted = false;
  auto end_field = [&] {
    current.push_back(field_quoted ? field : trim(field));
    field.clear();
    field_quoted = false;
  };
  auto end_record = [&] {
    end_field();
    const bool blank = current.size() == 1 && current.front().empty();
    if (!blank) records.push_back(std::move(current));
    current.clear();
  };
  for (std::size_t i = 0; i < raw.size(); ++i) {
    const char c = raw[i];
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < raw.size() && raw[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          in_quotes = false;
        }
      } else {
        field += c;
      }
      continue;
    }
    switch (c) {
      case '"':
        in_quotes = true;
        field_quoted = true;
        break;
      case ',':
        end_field();
        break;
      case '\r':
        if (i + 1 < raw.size() && raw[i + 1] == '\n') ++i;
        end_record();
        break;
      case '\n':
        end_record();
        break;
      default:
        field += c;
    }
  }
  if (!field.empty() || field_quoted || !current.empty()) end_record();
  return records;
}

/// Sorts tokens numerically when every token is a number, else bytewise.
void sort_tokens(std::vector<std::string>& tokens) {
  const bool numeric = std::all_of(tokens.begin(), tokens.end(),
                                   [](const std::string& t) { return parse_number(t).has_value(); });
  if (numeric) {
    std::stable_sort(tokens.begin(), tokens.end(), [](const std::string& a, const std::string& b) {
      const double x = *parse_number(a), y = *parse_number(b);
      return x < y || (x == y && a < b);
    });
  } else {
    std::sort(tokens.begin(), tokens.end());
  }
}

Column build_column(const std::string& name, std::optional<ColumnType> declared,
                    const std::vector<Record>& rows, std::size_t position) {
  Column col;
  col.name = name;
  col.values.resize(rows.size(), kMissing);

  if (declared == ColumnType::categorical) {
    col.type = ColumnType::categorical;
    std::set<std::string> distinct;
    for (const auto& r : rows) {
      if (!r[position].empty()) distinct.insert(r[position]);
    }
    col.categories.assign(distinct.begin(), distinct.end());
    sort_tokens(col.categories);
    std::unordered_map<std::string, double> code;
    for (std::size_t k = 0; k < col.categories.size(); ++k) code[col.categories[k]] = double(k);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (!rows[i][position].empty()) col.values[i] = code.at(rows[i][position]);
    }
    return col;
  }

  std::optional<ColumnType> type = declared;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const std::string& token = rows[i][position];
    if (token.empty()) continue;
    const auto number = parse_number(token);
    const auto boolean = parse_bool(token);
    if (!type) {
      if (number) type = ColumnType::numerical;
      else if (boolean) type = ColumnType::boolean;
    }
    if (type == ColumnType::numerical && number) {
      col.values[i] = *number;
    } else if (type == ColumnType::boolean && boolean) {
      col.values[i] = *boolean ? 1.0 : 0.0;
    } else {
      std::string expected = type == ColumnType::boolean ? "TRUE/FALSE" : "a number";
      throw Error(ErrorCode::ForbiddenString,
                  "column '" + name + "', row " + std::to_string(i + 1) + ": token '" + token +
                      "' is not allowed (expected " + expected +
                      "; only TRUE/FALSE strings are accepted outside columns declared "
                      "categorical)",
                  ErrorLocation{i + 1, name});
    }
  }
  col.type = type.value_or(ColumnType::numerical);
  return col;
}

void check_same_schema(const FeatureTable& a, const FeatureTable& b) {
  if (a.n_columns() != b.n_columns()) {
    throw Error(ErrorCode::SchemaMismatch, "feature column counts differ");
  }
  for (std::size_t j = 0; j < a.n_columns(); ++j) {
    const Column& x = a.column(j);
    const Column& y = b.column(j);
    if (x.name != y.name || x.type != y.type || x.categories != y.categories) {
      throw Error(ErrorCode::SchemaMismatch, "feature column '" + x.name + "' differs",
                  ErrorLocation{std::nullopt, x.name});
    }
  }
}

}  // namespace

std::string_view to_string(ColumnType type) {
  switch (type) {
    case ColumnType::numerical: return "numerical";
    case ColumnType::categorical: return "categorical";
    case ColumnType::boolean: return "boolean";
    case ColumnType::id: return "id";
  }
  return "numerical";
}

ColumnType column_type_from_string(std::string_view token) {
  if (token == "numerical") return ColumnType::numerical;
  if (token == "categorical") return ColumnType::categorical;
  if (token == "boolean") return ColumnType::boolean;
  if (token == "id") return ColumnType::id;
  throw Error(ErrorCode::MetadataMismatch, "unknown column type '" + std::string(token) + "'");
}

std::optional<ColumnType> DatasetMeta::type_of(std::string_view name) const {
  for (const auto& c : columns) {
    if (c.name == name) return c.type;
  }
  return std::nullopt;
}

nlohmann::ordered_json DatasetMeta::to_json() const {
  nlohmann::ordered_json cols = nlohmann::ordered_json::object();
  for (const auto& c : columns) cols[c.name] = std::string(to_string(c.type));
  return nlohmann::ordered_json{{"columns", cols}};
}

DatasetMeta DatasetMeta::from_json(const nlohmann::json& doc) {
  if (!doc.is_object() || !doc.contains("columns") || !doc["columns"].is_object()) {
    throw Error(ErrorCode::MetadataMismatch, "metadata must be an object with a 'columns' object");
  }
  DatasetMeta meta;
  meta.source = MetaSource::user_provided;
  for (const auto& [name, type] : doc["columns"].items()) {
    if (!type.is_string()) {
      throw Error(ErrorCode::MetadataMismatch, "type of column '" + name + "' must be a string",
                  ErrorLocation{std::nullopt, name});
    }
    meta.columns.push_back({name, column_type_from_string(type.get<std::string>())});
  }
  return meta;
}

DatasetMeta DatasetMeta::from_json_text(std::string_view text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::MetadataMismatch, std::string("metadata is not valid JSON: ") + e.what());
  }
  return from_json(doc);
}

std::size_t Column::missing_count() const {
  return static_cast<std::size_t>(
      std::count_if(values.begin(), values.end(), [](double v) { return is_missing(v); }));
}

FeatureTable::FeatureTable(std::vector<Column> columns) : columns_(std::move(columns)) {}

std::optional<std::size_t> FeatureTable::find(std::string_view name) const {
  for (std::size_t j = 0; j < columns_.size(); ++j) {
    if (columns_[j].name == name) return j;
  }
  return std::nullopt;
}

std::vector<std::string> FeatureTable::names() const {
  std::vector<std::string> out;
  out.reserve(columns_.size());
  for (const auto& c : columns_) out.push_back(c.name);
  return out;
}

bool FeatureTable::has_missing() const { return missing_count() > 0; }

std::size_t FeatureTable::missing_count() const {
  std::size_t n = 0;
  for (const auto& c : columns_) n += c.missing_count();
  return n;
}

FeatureTable FeatureTable::take_rows(std::span<const std::size_t> rows) const {
  std::vector<Column> out;
  out.reserve(columns_.size());
  for (const auto& c : columns_) {
    Column nc{c.name, c.type, {}, c.categories};
    nc.values.reserve(rows.size());
    for (std::size_t r : rows) nc.values.push_back(c.values.at(r));
    out.push_back(std::move(nc));
  }
  return FeatureTable(std::move(out));
}

FeatureTable FeatureTable::select(std::span<const std::string> names) const {
  std::vector<Column> out;
  for (const auto& name : names) {
    auto j = find(name);
    if (!j) {
      throw Error(ErrorCode::SchemaMismatch, "unknown feature '" + name + "'",
                  ErrorLocation{std::nullopt, name});
    }
    out.push_back(columns_[*j]);
  }
  return FeatureTable(std::move(out));
}

void FeatureTable::append(const FeatureTable& other) {
  if (columns_.empty()) {
    columns_ = other.columns_;
    return;
  }
  check_same_schema(*this, other);
  for (std::size_t j = 0; j < columns_.size(); ++j) {
    auto& dst = columns_[j].values;
    const auto& src = other.columns_[j].values;
    dst.insert(dst.end(), src.begin(), src.end());
  }
}

std::vector<std::size_t> Dataset::class_counts() const {
  std::vector<std::size_t> counts(n_classes(), 0);
  for (int y : labels) ++counts.at(static_cast<std::size_t>(y));
  return counts;
}

Dataset Dataset::take_rows(std::span<const std::size_t> rows) const {
  Dataset out;
  out.class_names = class_names;
  out.meta = meta;
  out.features = features.take_rows(rows);
  out.index.reserve(rows.size());
  out.labels.reserve(rows.size());
  for (std::size_t r : rows) {
    out.index.push_back(index.at(r));
    out.labels.push_back(labels.at(r));
  }
  return out;
}

Dataset Dataset::select_features(std::span<const std::string> names) const {
  Dataset out;
  out.index = index;
  out.labels = labels;
  out.class_names = class_names;
  out.features = features.select(names);
  out.meta.source = meta.source;
  const std::set<std::string> keep(names.begin(), names.end());
  for (const auto& c : meta.columns) {
    if (c.name == kIndexColumn || c.name == kClassColumn || keep.count(c.name)) {
      out.meta.columns.push_back(c);
    }
  }
  return out;
}

void Dataset::append(const Dataset& other) {
  if (other.class_names != class_names) {
    throw Error(ErrorCode::SchemaMismatch, "class encodings differ");
  }
  features.append(other.features);
  index.insert(index.end(), other.index.begin(), other.index.end());
  labels.insert(labels.end(), other.labels.begin(), other.labels.end());
}

bool Dataset::same_cells(const Dataset& other) const {
  if (index != other.index || labels != other.labels || class_names != other.class_names) {
    return false;
  }
  if (features.n_columns() != other.features.n_columns()) return false;
  for (std::size_t j = 0; j < features.n_columns(); ++j) {
    const Column& a = features.column(j);
    const Column& b = other.features.column(j);
    if (a.name != b.name || a.type != b.type || a.categories != b.categories ||
        a.values.size() != b.values.size()) {
      return false;
    }
    for (std::size_t i = 0; i < a.values.size(); ++i) {
      const double x = a.values[i], y = b.values[i];
      if (is_missing(x) != is_missing(y)) return false;
      if (!is_missing(x) && x != y) return false;
    }
  }
  return true;
}

Dataset parse_csv(std::string_view raw, const DatasetMeta* meta) {
  const std::vector<Record> records = read_records(raw);
  if (records.empty()) throw Error(ErrorCode::EmptyDataset, "CSV has no header row");
  const Record& header = records.front();

  {
    std::unordered_set<std::string> seen;
    for (const auto& name : header) {
      if (!seen.insert(name).second) {
        throw Error(ErrorCode::MetadataMismatch, "duplicate column name '" + name + "'",
                    ErrorLocation{0, name});
      }
    }
  }
  const auto pos_of = [&](std::string_view name) -> std::optional<std::size_t> {
    for (std::size_t j = 0; j < header.size(); ++j) {
      if (header[j] == name) return j;
    }
    return std::nullopt;
  };
  const auto class_pos = pos_of(kClassColumn);
  const auto index_pos = pos_of(kIndexColumn);
  if (!class_pos || !index_pos) {
    const std::string missing = !class_pos ? "class" : "index";
    throw Error(ErrorCode::MissingRequiredColumn,
                "required column '" + missing + "' is missing from the header",
                ErrorLocation{0, missing});
  }

  const std::vector<Record> rows(records.begin() + 1, records.end());
  if (rows.empty()) throw Error(ErrorCode::EmptyDataset, "CSV has no data rows");
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != header.size()) {
      throw Error(ErrorCode::RaggedRow,
                  "row " + std::to_string(i + 1) + " has " + std::to_string(rows[i].size()) +
                      " cells, header has " + std::to_string(header.size()),
                  ErrorLocation{i + 1, std::nullopt});
    }
  }

  if (meta) {
    std::vector<std::string> problems;
    for (const auto& name : header) {
      if (!meta->type_of(name)) problems.push_back("column '" + name + "' missing from metadata");
    }
    for (const auto& c : meta->columns) {
      if (!pos_of(c.name)) problems.push_back("metadata column '" + c.name + "' not in header");
      if (c.type == ColumnType::id && c.name != kIndexColumn) {
        problems.push_back("only 'index' may be typed id (column '" + c.name + "')");
      }
    }
    if (meta->type_of(kIndexColumn) && *meta->type_of(kIndexColumn) != ColumnType::id) {
      problems.push_back("column 'index' must be typed id");
    }
    if (!problems.empty()) {
      std::string msg = "metadata does not match the dataset: ";
      for (std::size_t k = 0; k < problems.size(); ++k) msg += (k ? "; " : "") + problems[k];
      throw Error(ErrorCode::MetadataMismatch, msg);
    }
  }

  Dataset ds;
  ds.meta.source = meta ? MetaSource::user_provided : MetaSource::inferred;

  std::vector<std::string> class_tokens;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const std::string& id = rows[i][*index_pos];
    if (id.empty()) {
      throw Error(ErrorCode::MissingLabel, "row " + std::to_string(i + 1) + " has an empty index",
                  ErrorLocation{i + 1, std::string(kIndexColumn)});
    }
    const std::string& label = rows[i][*class_pos];
    if (label.empty()) {
      throw Error(ErrorCode::MissingLabel, "row " + std::to_string(i + 1) + " has an empty class",
                  ErrorLocation{i + 1, std::string(kClassColumn)});
    }
    ds.index.push_back(id);
    class_tokens.push_back(label);
  }
  {
    std::set<std::string> distinct(class_tokens.begin(), class_tokens.end());
    ds.class_names.assign(distinct.begin(), distinct.end());
    sort_tokens(ds.class_names);
  }
  if (ds.class_names.size() < 2) {
    throw Error(ErrorCode::SingleClass, "the class column holds a single value '" +
                                            ds.class_names.front() + "'; at least two are required");
  }
  {
    std::unordered_map<std::string, int> code;
    for (std::size_t k = 0; k < ds.class_names.size(); ++k) code[ds.class_names[k]] = int(k);
    for (const auto& t : class_tokens) ds.labels.push_back(code.at(t));
  }

  std::vector<Column> columns;
  for (std::size_t j = 0; j < header.size(); ++j) {
    const std::string& name = header[j];
    if (j == *index_pos) {
      ds.meta.columns.push_back({name, ColumnType::id});
      continue;
    }
    if (j == *class_pos) {
      ds.meta.columns.push_back({name, meta ? *meta->type_of(name) : ColumnType::categorical});
      continue;
    }
    const std::optional<ColumnType> declared = meta ? meta->type_of(name) : std::nullopt;
    Column col = build_column(name, declared, rows, j);
    ds.meta.columns.push_back({name, col.type});
    columns.push_back(std::move(col));
  }
  ds.features = FeatureTable(std::move(columns));
  return ds;
}

std::string to_csv(const Dataset& ds) {
  std::string out;
  for (std::size_t j = 0; j < ds.meta.columns.size(); ++j) {
    if (j) out += ',';
    out += quote_if_needed(ds.meta.columns[j].name);
  }
  out += '\n';
  std::vector<const Column*> cols;
  for (const auto& c : ds.meta.columns) {
    if (c.name == kIndexColumn || c.name == kClassColumn) {
      cols.push_back(nullptr);
    } else {
      auto j = ds.features.find(c.name);
      if (!j) throw Error(ErrorCode::SchemaMismatch, "meta column '" + c.name + "' has no data");
      cols.push_back(&ds.features.column(*j));
    }
  }
  for (std::size_t i = 0; i < ds.n_rows(); ++i) {
    for (std::size_t j = 0; j < ds.meta.columns.size(); ++j) {
      if (j) out += ',';
      const auto& name = ds.meta.columns[j].name;
      if (name == kIndexColumn) {
        out += quote_if_needed(ds.index[i]);
      } else if (name == kClassColumn) {
        out += quote_if_needed(ds.class_names[static_cast<std::size_t>(ds.labels[i])]);
      } else {
        const Column& c = *cols[j];
        const double v = c.values[i];
        if (is_missing(v)) continue;
        switch (c.type) {
          case ColumnType::boolean: out += v != 0.0 ? "TRUE" : "FALSE"; break;
          case ColumnType::categorical:
            out += quote_if_needed(c.categories.at(static_cast<std::size_t>(v)));
            break;
          default: out += format_number(v);
        }
      }
    }
    out += '\n';
  }
  return out;
}

bool looks_integer_coded(const Column& column) {
  if (column.type != ColumnType::numerical) return false;
  std::set<double> distinct;
  std::size_t observed = 0;
  for (double v : column.values) {
    if (is_missing(v)) continue;
    ++observed;
    if (v != std::floor(v)) return false;
    distinct.insert(v);
  }
  if (observed == 0 || distinct.size() < 2) return false;
  const double limit = std::min(20.0, static_cast<double>(column.values.size()) / 10.0);
  return static_cast<double>(distinct.size()) <= limit;
}

namespace {
std::string integer_coded_warning(const Column& c) {
  std::set<double> distinct;
  for (double v : c.values) {
    if (!is_missing(v)) distinct.insert(v);
  }
  return "column '" + c.name + "': possible categorical column (" +
         std::to_string(distinct.size()) +
         " distinct integer values) typed numerical; supply metadata declaring it categorical "
         "if the integers are category codes";
}
}  // namespace

InferredMeta infer_metadata(const Dataset& ds) {
  InferredMeta out;
  out.meta.source = MetaSource::inferred;
  for (const auto& c : ds.meta.columns) {
    if (c.name == kIndexColumn) {
      out.meta.columns.push_back({c.name, ColumnType::id});
    } else if (c.name == kClassColumn) {
      out.meta.columns.push_back({c.name, ColumnType::categorical});
    } else {
      const Column& col = ds.features.column(*ds.features.find(c.name));
      out.meta.columns.push_back({c.name, col.type});
      if (looks_integer_coded(col)) out.warnings.push_back(integer_coded_warning(col));
    }
  }
  return out;
}

std::vector<std::string> validate_metadata(const Dataset& ds, const DatasetMeta& meta) {
  std::vector<std::string> problems;
  for (const auto& c : ds.meta.columns) {
    if (!meta.type_of(c.name)) problems.push_back("column '" + c.name + "' missing from metadata");
  }
  std::set<std::string> seen;
  for (const auto& c : meta.columns) {
    if (!seen.insert(c.name).second) problems.push_back("duplicate metadata column '" + c.name + "'");
    if (!ds.meta.type_of(c.name)) problems.push_back("metadata column '" + c.name + "' not in header");
    if (c.type == ColumnType::id && c.name != kIndexColumn) {
      problems.push_back("only 'index' may be typed id (column '" + c.name + "')");
    }
    if (c.name == kIndexColumn && c.type != ColumnType::id) {
      problems.push_back("column 'index' must be typed id");
    }
  }
  if (!problems.empty()) {
    std::string msg = "metadata does not match the dataset: ";
    for (std::size_t k = 0; k < problems.size(); ++k) msg += (k ? "; " : "") + problems[k];
    throw Error(ErrorCode::MetadataMismatch, msg);
  }
  std::vector<std::string> warnings;
  for (const auto& col : ds.features.columns()) {
    if (meta.type_of(col.name) == ColumnType::numerical && looks_integer_coded(col)) {
      warnings.push_back(integer_coded_warning(col));
    }
  }
  return warnings;
}

SplitIndices split_indices(std::span<const int> labels, std::size_t n_classes,
                           const SplitSpec& spec) {
  if (!(spec.test_fraction > 0.0 && spec.test_fraction < 1.0)) {
    throw Error(ErrorCode::TooFewRows, "test_fraction must lie strictly between 0 and 1");
  }
  SplitIndices out;
  if (spec.stratified) {
    std::vector<std::vector<std::size_t>> by_class(n_classes);
    for (std::size_t i = 0; i < labels.size(); ++i) {
      by_class.at(static_cast<std::size_t>(labels[i])).push_back(i);
    }
    for (std::size_t c = 0; c < n_classes; ++c) {
      auto& rows = by_class[c];
      const auto n_test = static_cast<std::size_t>(
          std::llround(spec.test_fraction * static_cast<double>(rows.size())));
      if (n_test == 0 || n_test >= rows.size()) {
        throw Error(ErrorCode::TooFewRows,
                    "class " + std::to_string(c) + " has " + std::to_string(rows.size()) +
                        " rows; a stratified split with test_fraction " +
                        std::to_string(spec.test_fraction) + " would leave one side without it");
      }
      Rng rng(derive_seed(spec.seed, c));
      rng.shuffle(rows);
      out.test.insert(out.test.end(), rows.begin(), rows.begin() + std::ptrdiff_t(n_test));
      out.train.insert(out.train.end(), rows.begin() + std::ptrdiff_t(n_test), rows.end());
    }
  } else {
    std::vector<std::size_t> rows(labels.size());
    for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;
    if (rows.size() < 2) throw Error(ErrorCode::TooFewRows, "need at least two rows to split");
    auto n_test = static_cast<std::size_t>(
        std::llround(spec.test_fraction * static_cast<double>(rows.size())));
    n_test = std::clamp<std::size_t>(n_test, 1, rows.size() - 1);
    Rng rng(spec.seed);
    rng.shuffle(rows);
    out.test.assign(rows.begin(), rows.begin() + std::ptrdiff_t(n_test));
    out.train.assign(rows.begin() + std::ptrdiff_t(n_test), rows.end());
  }
  std::sort(out.train.begin(), out.train.end());
  std::sort(out.test.begin(), out.test.end());
  return out;
}

TrainTest split(const Dataset& ds, const SplitSpec& spec) {
  const SplitIndices idx = split_indices(ds.labels, ds.n_classes(), spec);
  return {ds.take_rows(idx.train), ds.take_rows(idx.test)};
}

Dataset align_encoding(const Dataset& ds, const Dataset& reference) {
  Dataset out;
  out.index = ds.index;
  out.class_names = reference.class_names;
  out.meta = reference.meta;
  std::unordered_map<std::string, int> class_code;
  for (std::size_t k = 0; k < reference.class_names.size(); ++k) {
    class_code[reference.class_names[k]] = int(k);
  }
  for (std::size_t i = 0; i < ds.n_rows(); ++i) {
    const std::string& name = ds.class_names[static_cast<std::size_t>(ds.labels[i])];
    auto it = class_code.find(name);
    if (it == class_code.end()) {
      throw Error(ErrorCode::UnknownClass,
                  "class '" + name + "' does not occur in the training data",
                  ErrorLocation{i + 1, std::string(kClassColumn)});
    }
    out.labels.push_back(it->second);
  }

  if (ds.features.n_columns() != reference.features.n_columns()) {
    throw Error(ErrorCode::SchemaMismatch, "feature columns differ from the training data");
  }
  std::vector<Column> cols;
  for (const Column& ref : reference.features.columns()) {
    auto j = ds.features.find(ref.name);
    if (!j) {
      throw Error(ErrorCode::SchemaMismatch, "feature '" + ref.name + "' missing",
                  ErrorLocation{std::nullopt, ref.name});
    }
    const Column& src = ds.features.column(*j);
    Column col{ref.name, ref.type, src.values, ref.categories};
    if (ref.type == ColumnType::categorical) {
      if (src.type != ColumnType::categorical) {
        throw Error(ErrorCode::SchemaMismatch, "feature '" + ref.name + "' type differs",
                    ErrorLocation{std::nullopt, ref.name});
      }
      for (double& v : col.values) {
        if (is_missing(v)) continue;
        const std::string& token = src.categories.at(static_cast<std::size_t>(v));
        auto it = std::find(col.categories.begin(), col.categories.end(), token);
        if (it == col.categories.end()) {
          col.categories.push_back(token);
          it = col.categories.end() - 1;
        }
        v = static_cast<double>(it - col.categories.begin());
      }
    } else if (src.type != ref.type && src.missing_count() != src.values.size()) {
      throw Error(ErrorCode::SchemaMismatch, "feature '" + ref.name + "' type differs",
                  ErrorLocation{std::nullopt, ref.name});
    }
    cols.push_back(std::move(col));
  }
  out.features = FeatureTable(std::move(cols));
  return out;
}

}  // namespace classify
