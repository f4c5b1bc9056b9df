#pragma once

#include <bit>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>
#include <unordered_set>
#include <vector>

#include "vatt/features.hpp"
#include "vatt/metrics.hpp"
#include "vatt/schema.hpp"
#include "vatt/tensor.hpp"
#include "vatt/text.hpp"

namespace vatt {

static_assert(std::endian::native == std::endian::little,
              "file formats assume a little-endian host");

namespace detail {

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::string& path, const std::string& data) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail("cannot write '" + path + "'");
  out.write(data.data(), static_cast<std::streamsize>(data.size()));
  if (!out) fail("write failed for '" + path + "'");
}

// Lines without trailing newline or carriage return; final empty line dropped.
inline std::vector<std::string> split_lines(const std::string& text) {
  std::vector<std::string> lines;
  std::string cur;
  for (char c : text) {
    if (c == '\n') {
      if (!cur.empty() && cur.back() == '\r') cur.pop_back();
      lines.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (!cur.empty()) {
    if (cur.back() == '\r') cur.pop_back();
    lines.push_back(std::move(cur));
  }
  return lines;
}

inline std::vector<std::string> split_on(const std::string& s, char sep) {
  std::vector<std::string> parts;
  std::string cur;
  for (char c : s) {
    if (c == sep) {
      parts.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  parts.push_back(std::move(cur));
  return parts;
}

inline std::string line_err(const std::string& path, std::size_t line,
                            const std::string& what) {
  return path + ":" + std::to_string(line) + ": " + what;
}

// Shortest decimal that round-trips a double exactly.
inline std::string fmt_double(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

inline double parse_double(const std::string& s, const std::string& path,
                           std::size_t line) {
  char* end = nullptr;
  double v = std::strtod(s.c_str(), &end);
  if (end == s.c_str() || *end != '\0')
    fail(line_err(path, line, "non-numeric value '" + s + "'"));
  return v;
}

inline long parse_int(const std::string& s, const std::string& path,
                      std::size_t line) {
  char* end = nullptr;
  long v = std::strtol(s.c_str(), &end, 10);
  if (end == s.c_str() || *end != '\0')
    fail(line_err(path, line, "non-numeric value '" + s + "'"));
  return v;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// feature files
//
// Layout (little-endian): magic "VAFT", u32 version=1, u32 n_items,
// u32 width, then per item a u32 label index and width x f32. The
// label-index -> verb mapping lives in a sibling "<path>.verbs" text file.

inline void write_feature_file(const FeatureSet& fs, const std::string& path) {
  fs.validate();
  std::string buf;
  auto put_u32 = [&](std::uint32_t v) {
    char b[4];
    std::memcpy(b, &v, 4);
    buf.append(b, 4);
  };
  buf.append("VAFT", 4);
  put_u32(1);
  put_u32(static_cast<std::uint32_t>(fs.size()));
  put_u32(static_cast<std::uint32_t>(fs.dim));
  for (std::size_t i = 0; i < fs.size(); ++i) {
    put_u32(fs.labels[i]);
    for (double x : fs.features[i]) {
      float f = static_cast<float>(x);
      char b[4];
      std::memcpy(b, &f, 4);
      buf.append(b, 4);
    }
  }
  detail::write_file(path, buf);

  std::string verbs;
  for (const auto& v : fs.verbs) verbs += v + "\n";
  detail::write_file(path + ".verbs", verbs);
}

inline FeatureSet read_feature_file(const std::string& path) {
  std::string buf = detail::read_file(path);
  if (buf.size() < 16 || buf.compare(0, 4, "VAFT") != 0)
    fail("bad magic in '" + path + "'");
  std::size_t off = 4;
  auto get_u32 = [&]() {
    std::uint32_t v;
    std::memcpy(&v, buf.data() + off, 4);
    off += 4;
    return v;
  };
  std::uint32_t version = get_u32();
  if (version != 1) fail("unsupported feature file version " + std::to_string(version));
  std::uint32_t n = get_u32(), width = get_u32();
  std::size_t need = 16 + std::size_t(n) * (4 + 4 * std::size_t(width));
  if (buf.size() != need)
    fail("truncated payload in '" + path + "' (" + std::to_string(buf.size()) +
         " bytes, expected " + std::to_string(need) + ")");

  FeatureSet fs;
  fs.dim = width;
  for (std::uint32_t i = 0; i < n; ++i) {
    fs.labels.push_back(get_u32());
    Vec row(width);
    for (std::uint32_t j = 0; j < width; ++j) {
      float f;
      std::memcpy(&f, buf.data() + off, 4);
      off += 4;
      row[j] = f;
    }
    fs.features.push_back(std::move(row));
  }
  fs.verbs = detail::split_lines(detail::read_file(path + ".verbs"));
  fs.validate();
  return fs;
}

// ---------------------------------------------------------------------------
// splits

struct Split {
  std::vector<std::string> train, val, test;
};

inline void validate_split(const Split& sp, std::span<const std::string> universe) {
  std::unordered_set<std::string> known(universe.begin(), universe.end());
  std::unordered_set<std::string> seen;
  auto check = [&](const std::vector<std::string>& part) {
    for (const auto& v : part) {
      if (!known.count(v)) fail("split names unknown verb '" + v + "'");
      if (!seen.insert(v).second) fail("verb '" + v + "' appears in two split sections");
    }
  };
  check(sp.train);
  check(sp.val);
  check(sp.test);
  if (seen.size() != known.size())
    fail("split does not cover the verb universe (" + std::to_string(seen.size()) +
         " of " + std::to_string(known.size()) + " verbs listed)");
}

inline Split load_split(const std::string& path,
                        std::span<const std::string> universe) {
  auto lines = detail::split_lines(detail::read_file(path));
  Split sp;
  std::vector<std::string>* section = nullptr;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const std::string& line = lines[i];
    if (line.empty()) continue;
    if (line == "[train]") { section = &sp.train; continue; }
    if (line == "[val]") { section = &sp.val; continue; }
    if (line == "[test]") { section = &sp.test; continue; }
    if (line[0] == '[')
      fail(detail::line_err(path, i + 1, "unknown section " + line));
    if (!section)
      fail(detail::line_err(path, i + 1, "verb before any section header"));
    section->push_back(line);
  }
  validate_split(sp, universe);
  return sp;
}

inline void write_split(const Split& sp, const std::string& path) {
  std::string out = "[train]\n";
  for (const auto& v : sp.train) out += v + "\n";
  out += "[val]\n";
  for (const auto& v : sp.val) out += v + "\n";
  out += "[test]\n";
  for (const auto& v : sp.test) out += v + "\n";
  detail::write_file(path, out);
}

// ---------------------------------------------------------------------------
// attribute labels
//
// CSV with header "verb,<attr names in schema order>"; categorical values as
// 0-based indices, binary as 0/1.

inline LabelledVerbs load_attributes(const std::string& path,
                                     const AttributeSchema& schema) {
  auto lines = detail::split_lines(detail::read_file(path));
  if (lines.empty()) fail("empty attribute file '" + path + "'");
  auto header = detail::split_on(lines[0], ',');
  if (header.size() != schema.attrs.size() + 1 || header[0] != "verb")
    fail(detail::line_err(path, 1, "bad header (want verb + " +
                          std::to_string(schema.attrs.size()) + " attribute columns)"));
  for (std::size_t k = 0; k < schema.attrs.size(); ++k)
    if (header[k + 1] != schema.attrs[k].name)
      fail(detail::line_err(path, 1, "column '" + header[k + 1] +
                            "' does not match schema attribute '" +
                            schema.attrs[k].name + "'"));

  LabelledVerbs out;
  std::unordered_set<std::string> seen;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    auto cells = detail::split_on(lines[i], ',');
    if (cells.size() != schema.attrs.size() + 1)
      fail(detail::line_err(path, i + 1, "wrong column count (" +
                            std::to_string(cells.size()) + ")"));
    if (!seen.insert(cells[0]).second)
      fail(detail::line_err(path, i + 1, "duplicate verb '" + cells[0] + "'"));
    LabelVector labels(schema.attrs.size());
    for (std::size_t k = 0; k < schema.attrs.size(); ++k) {
      long v = detail::parse_int(cells[k + 1], path, i + 1);
      long hi = schema.attrs[k].binary ? 2 : static_cast<long>(schema.attrs[k].card());
      if (v < 0 || v >= hi)
        fail(detail::line_err(path, i + 1, "value " + std::to_string(v) +
                              " out of range for attribute '" +
                              schema.attrs[k].name + "' (arity " +
                              std::to_string(hi) + ")"));
      labels[k] = static_cast<int>(v);
    }
    out.emplace_back(cells[0], std::move(labels));
  }
  return out;
}

inline void write_attributes(const LabelledVerbs& rows,
                             const AttributeSchema& schema,
                             const std::string& path) {
  std::string out = "verb";
  for (const auto& a : schema.attrs) out += "," + a.name;
  out += "\n";
  for (const auto& [verb, labels] : rows) {
    validate_labels(schema, labels);
    out += verb;
    for (int v : labels) out += "," + std::to_string(v);
    out += "\n";
  }
  detail::write_file(path, out);
}

// ---------------------------------------------------------------------------
// definitions
//
// UTF-8 TSV "verb_template<TAB>definition text"; file order defines rank.

inline DefinitionCorpus load_definitions(const std::string& path) {
  auto lines = detail::split_lines(detail::read_file(path));
  DefinitionCorpus corpus;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    auto cells = detail::split_on(lines[i], '\t');
    if (cells.size() != 2)
      fail(detail::line_err(path, i + 1, "expected verb<TAB>definition"));
    auto tokens = tokenize(cells[1]);
    if (tokens.empty())
      fail(detail::line_err(path, i + 1, "definition has no tokens"));
    corpus.add(cells[0], tokens);
  }
  return corpus;
}

inline void write_definitions(const DefinitionCorpus& corpus,
                              const std::string& path) {
  std::string out;
  for (const auto& v : corpus.verbs)
    for (const auto& def : corpus.definitions(v)) {
      out += v;
      out += '\t';
      for (std::size_t i = 0; i < def.size(); ++i) {
        if (i) out += ' ';
        out += def[i];
      }
      out += '\n';
    }
  detail::write_file(path, out);
}

// ---------------------------------------------------------------------------
// embeddings
//
// Text, one token per line: "token v1 v2 ... vD", space-separated decimal.

inline EmbeddingTable load_embeddings(const std::string& path) {
  auto lines = detail::split_lines(detail::read_file(path));
  EmbeddingTable table;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    auto cells = detail::split_on(lines[i], ' ');
    if (cells.size() < 2)
      fail(detail::line_err(path, i + 1, "expected token and vector"));
    Vec v(cells.size() - 1);
    for (std::size_t j = 1; j < cells.size(); ++j)
      v[j - 1] = detail::parse_double(cells[j], path, i + 1);
    if (table.dim != 0 && v.size() != table.dim)
      fail(detail::line_err(path, i + 1, "vector has " +
                            std::to_string(v.size()) + " entries, expected " +
                            std::to_string(table.dim)));
    if (table.dim == 0) table.reserve_dim(v.size());
    table.add(cells[0], v);
  }
  return table;
}

inline void write_embeddings(const EmbeddingTable& table, const std::string& path) {
  std::string out;
  for (std::size_t i = 0; i < table.tokens.size(); ++i) {
    out += table.tokens[i];
    auto row = table.vectors.row(i);
    for (double x : row) {
      out += ' ';
      out += detail::fmt_double(x);
    }
    out += '\n';
  }
  detail::write_file(path, out);
}

}  // namespace vatt
