#pragma once

#include <cctype>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "vatt/tensor.hpp"

namespace vatt {

// Lowercase, strip punctuation, split on whitespace.
inline std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : text) {
    unsigned char c = static_cast<unsigned char>(ch);
    if (std::isalnum(c) || ch == '_' || ch == '\'' || ch == '-' ||
        c >= 0x80) {  // keep non-ASCII bytes intact
      cur.push_back(static_cast<char>(std::tolower(c)));
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

// token -> fixed-dimension vector; absent tokens read as the zero vector and
// bump a miss counter.
struct EmbeddingTable {
  std::size_t dim = 0;
  std::vector<std::string> tokens;
  Mat vectors;  // tokens.size() x dim
  std::unordered_map<std::string, std::size_t> index;
  mutable std::size_t miss_count = 0;

  void reserve_dim(std::size_t d) {
    if (dim == 0) {
      dim = d;
      vectors = Mat(0, d);
    }
  }

  void add(const std::string& token, std::span<const double> v) {
    if (dim == 0) reserve_dim(v.size());
    if (v.size() != dim) fail("embedding add: dimension mismatch for '" + token + "'");
    if (index.count(token)) fail("embedding add: duplicate token '" + token + "'");
    index.emplace(token, tokens.size());
    tokens.push_back(token);
    vectors.rows += 1;
    vectors.a.insert(vectors.a.end(), v.begin(), v.end());
  }

  bool contains(const std::string& token) const { return index.count(token) > 0; }

  const double* row_or_null(const std::string& token) const {
    auto it = index.find(token);
    return it == index.end() ? nullptr : vectors.a.data() + it->second * dim;
  }

  Vec lookup(const std::string& token) const {
    if (const double* p = row_or_null(token)) return Vec(p, p + dim);
    ++miss_count;
    return Vec(dim, 0.0);
  }
};

// verb template -> ordered definitions; each definition is a nonempty token
// list. File order defines rank: index 0 is the most relevant definition.
struct DefinitionCorpus {
  std::vector<std::string> verbs;
  std::unordered_map<std::string, std::size_t> index;
  std::vector<std::vector<std::vector<std::string>>> defs;

  void add(const std::string& verb, std::vector<std::string> tokens) {
    if (tokens.empty()) fail("definition for '" + verb + "' is empty");
    auto it = index.find(verb);
    if (it == index.end()) {
      index.emplace(verb, verbs.size());
      verbs.push_back(verb);
      defs.emplace_back();
      it = index.find(verb);
    }
    defs[it->second].push_back(std::move(tokens));
  }

  bool has(const std::string& verb) const { return index.count(verb) > 0; }

  const std::vector<std::vector<std::string>>& definitions(const std::string& verb) const {
    auto it = index.find(verb);
    if (it == index.end()) fail("no definitions for verb '" + verb + "'");
    return defs[it->second];
  }

  const std::vector<std::string>& first_definition(const std::string& verb) const {
    return definitions(verb).front();
  }

  std::size_t total_definitions() const {
    std::size_t n = 0;
    for (const auto& d : defs) n += d.size();
    return n;
  }
};

}  // namespace vatt
