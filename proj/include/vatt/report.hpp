#pragma once

#include <cstdint>
#include <cstdio>
#include <string>
#include <vector>

#include "vatt/metrics.hpp"
#include "vatt/zeroshot.hpp"

namespace vatt {

// Two-layer report: a human table rounded to 2 decimals and a raw key-value
// layer at full precision. Built only from metrics and config — never from
// paths or timestamps — so reruns with the same seed are byte-identical.
struct Report {
  std::string human;
  std::vector<std::pair<std::string, std::string>> kv;

  void add(const std::string& key, const std::string& value) {
    kv.emplace_back(key, value);
  }

  void add_num(const std::string& key, double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    kv.emplace_back(key, buf);
  }

  void add_int(const std::string& key, std::uint64_t v) {
    kv.emplace_back(key, std::to_string(v));
  }

  std::string text() const {
    std::string out = human;
    if (!out.empty() && out.back() != '\n') out += '\n';
    out += "\n";
    for (const auto& [k, v] : kv) out += k + "\t" + v + "\n";
    return out;
  }
};

namespace detail {

inline std::string pct2(double frac) {
  char buf[24];
  std::snprintf(buf, sizeof buf, "%.2f", 100.0 * frac);
  return buf;
}

inline void pad_to(std::string& s, std::size_t width) {
  while (s.size() < width) s += ' ';
}

}  // namespace detail

inline Report make_attr_report(const AccuracyReport& acc, std::uint64_t seed,
                               std::uint64_t config_hash) {
  Report r;

  // human layer: one row of group accuracies plus macro/micro, in percent
  std::vector<std::string> heads = acc.group_names;
  heads.push_back("macro");
  heads.push_back("micro");
  std::vector<std::string> cells;
  for (double g : acc.per_group) cells.push_back(detail::pct2(g));
  cells.push_back(detail::pct2(acc.macro));
  cells.push_back(detail::pct2(acc.micro));
  std::string h1 = "group     ", h2 = "accuracy  ";
  for (std::size_t i = 0; i < heads.size(); ++i) {
    std::size_t w = std::max(heads[i].size(), cells[i].size()) + 2;
    detail::pad_to(heads[i], w);
    detail::pad_to(cells[i], w);
    h1 += heads[i];
    h2 += cells[i];
  }
  r.human = h1 + "\n" + h2 + "\n";

  char hex[20];
  std::snprintf(hex, sizeof hex, "%016llx",
                static_cast<unsigned long long>(config_hash));
  r.add("report", "attributes");
  r.add_int("seed", seed);
  r.add("config_hash", hex);
  for (std::size_t k = 0; k < acc.attr_names.size(); ++k)
    r.add_num("attr/" + acc.attr_names[k], acc.per_attr[k]);
  for (std::size_t g = 0; g < acc.group_names.size(); ++g)
    r.add_num("group/" + acc.group_names[g], acc.per_group[g]);
  r.add_num("macro", acc.macro);
  r.add_num("micro", acc.micro);
  return r;
}

inline Report make_zeroshot_report(const ZsEval& ev, const HubnessStats& hub,
                                   const std::string& head_name,
                                   std::uint64_t seed,
                                   std::uint64_t config_hash) {
  Report r;
  char line[160];
  std::snprintf(line, sizeof line,
                "head      top-1   top-%zu\n%-9s %6s  %6s\n", ev.k,
                head_name.c_str(), detail::pct2(ev.top1).c_str(),
                detail::pct2(ev.topk).c_str());
  r.human = line;
  std::snprintf(line, sizeof line, "hubness   share %s  skew %.2f\n",
                detail::pct2(hub.top_share).c_str(), hub.skewness);
  r.human += line;

  char hex[20];
  std::snprintf(hex, sizeof hex, "%016llx",
                static_cast<unsigned long long>(config_hash));
  r.add("report", "zeroshot");
  r.add("head", head_name);
  r.add_int("seed", seed);
  r.add("config_hash", hex);
  r.add_num("top1", ev.top1);
  r.add_int("k", ev.k);
  r.add_num("topk", ev.topk);
  r.add_num("hubness/top_share", hub.top_share);
  r.add_num("hubness/skewness", hub.skewness);
  return r;
}

}  // namespace vatt
