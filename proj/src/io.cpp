#include "leap/io.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "leap/error.hpp"

namespace leap::io {

namespace {

std::vector<std::string_view> split(std::string_view line) {
  std::vector<std::string_view> cells;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(',', start);
    if (pos == std::string_view::npos) {
      cells.push_back(line.substr(start));
      break;
    }
    cells.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return cells;
}

// Line iterator that tolerates CRLF input and skips a trailing empty line.
class LineReader {
 public:
  explicit LineReader(const std::filesystem::path& path) : text_(read_file(path)), path_(path.string()) {}

  bool next(std::string_view& line) {
    while (pos_ < text_.size()) {
      auto end = text_.find('\n', pos_);
      if (end == std::string::npos) end = text_.size();
      line = std::string_view(text_).substr(pos_, end - pos_);
      pos_ = end + 1;
      ++line_no_;
      if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
      if (line.empty()) continue;
      return true;
    }
    return false;
  }
  std::size_t line_no() const { return line_no_; }
  const std::string& path() const { return path_; }

 private:
  std::string text_;
  std::string path_;
  std::size_t pos_ = 0;
  std::size_t line_no_ = 0;
};

void expect_header(LineReader& in, const std::vector<std::string_view>& expected) {
  std::string_view line;
  if (!in.next(line)) throw ParseError(in.path() + ": empty file");
  const auto cells = split(line);
  if (cells.size() != expected.size()) throw ParseError(in.path() + ": unexpected header '" + std::string(line) + "'");
  for (std::size_t i = 0; i < cells.size(); ++i)
    if (cells[i] != expected[i]) throw ParseError(in.path() + ": unexpected header column '" + std::string(cells[i]) + "'");
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  return out;
}

void finish(std::ofstream& out, const std::filesystem::path& path) {
  out.flush();
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace

std::string format_real(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double parse_real(std::string_view cell, std::size_t line, std::size_t column) {
  double v = 0.0;
  const char* first = cell.data();
  const char* last = cell.data() + cell.size();
  if (!cell.empty() && *first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (cell.empty() || ec != std::errc() || ptr != last || !std::isfinite(v)) {
    throw ParseError("line " + std::to_string(line) + ", column " + std::to_string(column) +
                     ": not a finite number: '" + std::string(cell) + "'");
  }
  return v;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, std::string_view contents) {
  auto out = open_out(path);
  out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
  finish(out, path);
}

ExpressionMatrix load_expression(const std::filesystem::path& path,
                                 const std::optional<std::filesystem::path>& metadata) {
  LineReader in(path);
  std::string_view line;
  if (!in.next(line)) throw ParseError(path.string() + ": empty file");
  auto header = split(line);
  if (header.empty() || header[0] != "sample_id") throw ParseError(path.string() + ": header must start with sample_id");
  std::vector<std::string> genes;
  for (std::size_t i = 1; i < header.size(); ++i) genes.emplace_back(header[i]);

  std::vector<std::string> samples;
  std::vector<double> values;
  while (in.next(line)) {
    const auto cells = split(line);
    if (cells.size() != header.size()) {
      throw ParseError(path.string() + ": line " + std::to_string(in.line_no()) + " has " +
                       std::to_string(cells.size()) + " fields, expected " + std::to_string(header.size()));
    }
    samples.emplace_back(cells[0]);
    for (std::size_t c = 1; c < cells.size(); ++c) values.push_back(parse_real(cells[c], in.line_no(), c + 1));
  }
  const std::size_t rows = samples.size();
  auto m = ExpressionMatrix::make(std::move(samples), std::move(genes), Matrix(rows, header.size() - 1, std::move(values)),
                                  Stage::raw_tpm);
  if (!metadata) return m;

  LineReader meta(*metadata);
  expect_header(meta, {"sample_id", "tissue", "dataset_tag"});
  std::map<std::string, std::pair<std::string, std::string>> annot;
  while (meta.next(line)) {
    const auto cells = split(line);
    if (cells.size() != 3)
      throw ParseError(metadata->string() + ": line " + std::to_string(meta.line_no()) + " must have 3 fields");
    if (!annot.emplace(std::string(cells[0]), std::pair{std::string(cells[1]), std::string(cells[2])}).second)
      throw ValidationError(metadata->string() + ": duplicate sample id: " + std::string(cells[0]));
  }
  std::vector<std::string> tissue, tags;
  for (const auto& id : m.sample_ids()) {
    auto it = annot.find(id);
    if (it == annot.end()) throw ValidationError(metadata->string() + ": no metadata for sample " + id);
    tissue.push_back(it->second.first);
    tags.push_back(it->second.second);
  }
  return m.with_annotations(std::move(tissue), std::move(tags));
}

void write_expression(const std::filesystem::path& path, const ExpressionMatrix& m) {
  std::string s = "sample_id";
  for (const auto& g : m.gene_ids()) s += "," + g;
  s += '\n';
  for (std::size_t r = 0; r < m.n_samples(); ++r) {
    s += m.sample_ids()[r];
    for (double v : m.values().row(r)) {
      s += ',';
      s += format_real(v);
    }
    s += '\n';
  }
  write_file(path, s);
}

void write_metadata(const std::filesystem::path& path, const ExpressionMatrix& m) {
  std::string s = "sample_id,tissue,dataset_tag\n";
  for (std::size_t r = 0; r < m.n_samples(); ++r) {
    s += m.sample_ids()[r] + ',' + (m.has_tissue() ? m.tissue()[r] : std::string()) + ',' +
         (m.dataset_tag().empty() ? std::string() : m.dataset_tag()[r]) + '\n';
  }
  write_file(path, s);
}

ResponseTable load_responses(const std::filesystem::path& path) {
  LineReader in(path);
  expect_header(in, {"sample_id", "perturbation_id", "value", "study_tag"});
  ResponseTable t;
  std::string_view line;
  while (in.next(line)) {
    const auto c = split(line);
    if (c.size() != 4)
      throw ParseError(path.string() + ": line " + std::to_string(in.line_no()) + " must have 4 fields");
    t.records.push_back({std::string(c[0]), std::string(c[1]), parse_real(c[2], in.line_no(), 3), std::string(c[3])});
  }
  return t;
}

void write_responses(const std::filesystem::path& path, const ResponseTable& table) {
  std::string s = "sample_id,perturbation_id,value,study_tag\n";
  for (const auto& r : table.records)
    s += r.sample_id + ',' + r.perturbation_id + ',' + format_real(r.value) + ',' + r.study_tag + '\n';
  write_file(path, s);
}

PredictionTable load_predictions(const std::filesystem::path& path) {
  LineReader in(path);
  expect_header(in, {"sample_id", "perturbation_id", "prediction"});
  PredictionTable t;
  std::string_view line;
  while (in.next(line)) {
    const auto c = split(line);
    if (c.size() != 3)
      throw ParseError(path.string() + ": line " + std::to_string(in.line_no()) + " must have 3 fields");
    t.records.push_back({std::string(c[0]), std::string(c[1]), parse_real(c[2], in.line_no(), 3)});
  }
  return t;
}

void write_predictions(const std::filesystem::path& path, const PredictionTable& table) {
  std::string s = "sample_id,perturbation_id,prediction\n";
  for (const auto& r : table.records) s += r.sample_id + ',' + r.perturbation_id + ',' + format_real(r.value) + '\n';
  write_file(path, s);
}

}  // namespace leap::io
