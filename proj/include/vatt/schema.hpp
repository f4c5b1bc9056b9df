#pragma once

#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "vatt/tensor.hpp"

namespace vatt {

struct AttributeSpec {
  std::string name;
  std::string group;
  bool binary = true;
  std::vector<std::string> values;  // categorical value names; {"0","1"} for binary

  // label range: binary labels are 0/1, categorical labels are [0, card)
  std::size_t card() const { return binary ? 2 : values.size(); }
  // entries contributed to the binarized +-1 signature
  std::size_t width() const { return binary ? 1 : values.size(); }
};

struct AttributeSchema {
  std::vector<AttributeSpec> attrs;

  std::size_t attribute_count() const { return attrs.size(); }

  // distinct groups in declaration order
  std::vector<std::string> groups() const {
    std::vector<std::string> out;
    for (const auto& a : attrs)
      if (out.empty() || out.back() != a.group) {
        for (const auto& g : out)
          if (g == a.group) fail("schema: group '" + g + "' is not contiguous");
        out.push_back(a.group);
      }
    return out;
  }

  std::vector<std::size_t> group_sizes() const {
    std::vector<std::size_t> sizes;
    std::string cur;
    for (const auto& a : attrs) {
      if (sizes.empty() || a.group != cur) {
        sizes.push_back(0);
        cur = a.group;
      }
      sizes.back() += 1;
    }
    return sizes;
  }

  std::size_t binarized_width() const {
    std::size_t w = 0;
    for (const auto& a : attrs) w += a.width();
    return w;
  }

  void validate() const {
    std::unordered_set<std::string> names;
    for (const auto& a : attrs) {
      if (!names.insert(a.name).second)
        fail("schema: duplicate attribute name '" + a.name + "'");
      if (!a.binary && a.values.size() < 2)
        fail("schema: categorical attribute '" + a.name + "' needs >= 2 values");
    }
    groups();  // checks contiguity
  }
};

// Per-attribute value index: [0, d_k) for categorical, {0,1} for binary.
using LabelVector = std::vector<int>;

inline void validate_labels(const AttributeSchema& schema, const LabelVector& labels) {
  if (labels.size() != schema.attrs.size())
    fail("labels: expected " + std::to_string(schema.attrs.size()) + " values, got " +
         std::to_string(labels.size()));
  for (std::size_t k = 0; k < labels.size(); ++k) {
    int v = labels[k];
    if (v < 0 || static_cast<std::size_t>(v) >= schema.attrs[k].card())
      fail("labels: value " + std::to_string(v) + " out of range for attribute '" +
           schema.attrs[k].name + "'");
  }
}

// The 24-attribute taxonomy: four 5-way categorical groups, then 3 + 12 + 5
// binary attributes (40 entries once binarized).
inline AttributeSchema build_schema() {
  AttributeSchema s;
  auto cat = [&](const std::string& group, const std::string& name,
                 std::vector<std::string> values) {
    s.attrs.push_back({name, group, false, std::move(values)});
  };
  auto bin = [&](const std::string& group, const std::string& name) {
    s.attrs.push_back({name, group, true, {"0", "1"}});
  };

  cat("aspect", "aspect",
      {"state", "achievement", "accomplishment", "activity", "unclear"});
  cat("duration", "duration", {"atemporal", "seconds", "minutes", "hours", "days"});
  cat("motion", "motion", {"unclear", "none", "low", "medium", "high"});
  cat("social", "social",
      {"solitary", "likely_solitary", "either", "likely_social", "social"});

  bin("transitivity", "intransitive");
  bin("transitivity", "transitive_person");
  bin("transitivity", "transitive_object");

  const char* roles[3] = {"intrans", "trans_obj", "trans_person"};
  const char* effects[4] = {"moves", "world_changes", "state_changes", "no_change"};
  for (const char* role : roles)
    for (const char* eff : effects)
      bin("effects", std::string(role) + "_" + eff);

  for (const char* part : {"arms", "head", "legs", "torso", "other"})
    bin("body", std::string("body_") + part);

  s.validate();
  return s;
}

// +-1 signature of length binarized_width(): categorical attributes expand to
// one-vs-rest blocks, binary attributes map 1 -> +1 and 0 -> -1.
inline Vec binarize(const AttributeSchema& schema, const LabelVector& labels) {
  validate_labels(schema, labels);
  Vec out;
  out.reserve(schema.binarized_width());
  for (std::size_t k = 0; k < schema.attrs.size(); ++k) {
    const auto& a = schema.attrs[k];
    if (a.binary) {
      out.push_back(labels[k] == 1 ? 1.0 : -1.0);
    } else {
      for (std::size_t i = 0; i < a.values.size(); ++i)
        out.push_back(static_cast<int>(i) == labels[k] ? 1.0 : -1.0);
    }
  }
  return out;
}

inline LabelVector debinarize(const AttributeSchema& schema,
                              std::span<const double> sig) {
  if (sig.size() != schema.binarized_width()) fail("debinarize: width mismatch");
  for (double x : sig)
    if (x != 1.0 && x != -1.0) fail("debinarize: entries must be +1 or -1");
  LabelVector labels(schema.attrs.size());
  std::size_t pos = 0;
  for (std::size_t k = 0; k < schema.attrs.size(); ++k) {
    const auto& a = schema.attrs[k];
    if (a.binary) {
      labels[k] = sig[pos] > 0 ? 1 : 0;
      pos += 1;
    } else {
      int hit = -1;
      for (std::size_t i = 0; i < a.values.size(); ++i)
        if (sig[pos + i] > 0) {
          if (hit >= 0)
            fail("debinarize: multiple +1 entries in attribute '" + a.name + "'");
          hit = static_cast<int>(i);
        }
      if (hit < 0) fail("debinarize: no +1 entry in attribute '" + a.name + "'");
      labels[k] = hit;
      pos += a.values.size();
    }
  }
  return labels;
}

// Per-attribute class-signature matrices: |V'| x d_k for categorical
// attributes, |V'| x 1 for binary ones, entries in {+1, -1}. Row order
// follows the verb list.
struct LookupTable {
  std::vector<std::string> verbs;
  std::vector<Mat> tables;  // one per attribute

  // flat +-1 signature of one verb (concatenation across attributes)
  Vec signature(std::size_t verb_index) const {
    Vec sig;
    for (const auto& t : tables) {
      auto r = t.row(verb_index);
      sig.insert(sig.end(), r.begin(), r.end());
    }
    return sig;
  }
};

inline LookupTable encode_lookup(
    const std::vector<std::string>& verbs,
    const std::unordered_map<std::string, LabelVector>& labels,
    const AttributeSchema& schema) {
  LookupTable lt;
  lt.verbs = verbs;
  lt.tables.reserve(schema.attrs.size());
  for (const auto& a : schema.attrs)
    lt.tables.emplace_back(verbs.size(), a.width(), -1.0);

  for (std::size_t v = 0; v < verbs.size(); ++v) {
    auto it = labels.find(verbs[v]);
    if (it == labels.end()) fail("encode_lookup: no labels for verb '" + verbs[v] + "'");
    validate_labels(schema, it->second);
    for (std::size_t k = 0; k < schema.attrs.size(); ++k) {
      const auto& a = schema.attrs[k];
      int val = it->second[k];
      if (a.binary)
        lt.tables[k](v, 0) = val == 1 ? 1.0 : -1.0;
      else
        lt.tables[k](v, static_cast<std::size_t>(val)) = 1.0;
    }
  }
  return lt;
}

// Pairs of verbs whose signatures coincide. Collisions are legal (reported as
// warnings by callers) since the embedding branch may still disambiguate.
inline std::vector<std::pair<std::string, std::string>> find_signature_collisions(
    const LookupTable& lt) {
  std::vector<std::pair<std::string, std::string>> out;
  for (std::size_t i = 0; i < lt.verbs.size(); ++i) {
    Vec si = lt.signature(i);
    for (std::size_t j = i + 1; j < lt.verbs.size(); ++j)
      if (si == lt.signature(j)) out.emplace_back(lt.verbs[i], lt.verbs[j]);
  }
  return out;
}

inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// Canonical text form: one line per attribute,
// group<TAB>name<TAB>arity<TAB>value1,value2,...  ("binary" for binary attributes)
inline std::string schema_to_text(const AttributeSchema& schema) {
  std::ostringstream os;
  for (const auto& a : schema.attrs) {
    os << a.group << '\t' << a.name << '\t';
    if (a.binary)
      os << "binary";
    else
      os << a.values.size();
    os << '\t';
    for (std::size_t i = 0; i < a.values.size(); ++i) {
      if (i) os << ',';
      os << a.values[i];
    }
    os << '\n';
  }
  return os.str();
}

inline std::uint64_t schema_fingerprint(const AttributeSchema& schema) {
  return fnv1a64(schema_to_text(schema));
}

inline AttributeSchema parse_schema(std::istream& in) {
  AttributeSchema s;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> cols;
    std::size_t start = 0;
    while (true) {
      std::size_t tab = line.find('\t', start);
      cols.push_back(line.substr(start, tab == std::string::npos ? tab : tab - start));
      if (tab == std::string::npos) break;
      start = tab + 1;
    }
    if (cols.size() != 4)
      fail("schema line " + std::to_string(lineno) + ": expected 4 tab-separated columns");
    AttributeSpec a;
    a.group = cols[0];
    a.name = cols[1];
    std::vector<std::string> vals;
    std::size_t vstart = 0;
    while (true) {
      std::size_t comma = cols[3].find(',', vstart);
      vals.push_back(cols[3].substr(vstart, comma == std::string::npos ? comma : comma - vstart));
      if (comma == std::string::npos) break;
      vstart = comma + 1;
    }
    if (cols[2] == "binary") {
      a.binary = true;
      a.values = {"0", "1"};
    } else {
      a.binary = false;
      a.values = vals;
      std::size_t arity = 0;
      try {
        arity = std::stoul(cols[2]);
      } catch (...) {
        fail("schema line " + std::to_string(lineno) + ": bad arity '" + cols[2] + "'");
      }
      if (arity < 2 || vals.size() != arity)
        fail("schema line " + std::to_string(lineno) + ": arity " + cols[2] +
             " does not match " + std::to_string(vals.size()) + " value names");
    }
    s.attrs.push_back(std::move(a));
  }
  s.validate();
  return s;
}

inline AttributeSchema load_schema(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail("cannot open schema file: " + path);
  return parse_schema(in);
}

inline void write_schema(const AttributeSchema& schema, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail("cannot write schema file: " + path);
  out << schema_to_text(schema);
}

}  // namespace vatt
