#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

#include "vatt/schema.hpp"

namespace vatt {

// Verbs paired with their attribute labels, in a fixed order.
using LabelledVerbs = std::vector<std::pair<std::string, LabelVector>>;

struct GroupAggregate {
  double macro = 0.0;  // unweighted mean over group accuracies
  double micro = 0.0;  // group accuracies weighted by group size
};

inline GroupAggregate aggregate_groups(std::span<const double> group_accs,
                                       std::span<const std::size_t> group_sizes) {
  if (group_accs.size() != group_sizes.size() || group_accs.empty())
    fail("aggregate_groups: size mismatch");
  GroupAggregate out;
  std::size_t total = 0;
  for (std::size_t g = 0; g < group_accs.size(); ++g) {
    out.macro += group_accs[g];
    out.micro += group_accs[g] * static_cast<double>(group_sizes[g]);
    total += group_sizes[g];
  }
  out.macro /= static_cast<double>(group_accs.size());
  out.micro /= static_cast<double>(total);
  return out;
}

struct AccuracyReport {
  std::vector<std::string> attr_names;   // K entries
  std::vector<double> per_attr;          // exact-match accuracy per attribute
  std::vector<std::string> group_names;  // 7 entries for the canonical schema
  std::vector<std::size_t> group_sizes;
  std::vector<double> per_group;  // unweighted mean of member attribute accuracies
  double macro = 0.0;
  double micro = 0.0;  // mean over all attributes == size-weighted group mean
};

namespace detail {

// effects attribute index within its 12-entry block -> transitivity attribute
// offset (0 intransitive, 2 transitive_object, 1 transitive_person)
inline std::size_t effects_gate(std::size_t block_index) {
  std::size_t role = block_index / 4;
  return role == 0 ? 0 : (role == 1 ? 2 : 1);
}

}  // namespace detail

// Exact-match accuracy per attribute, averaged per group, plus macro (over
// groups) and micro (over attributes). With `effects_conditional`, an effects
// attribute only counts verbs whose gold transitivity gate is 1; attributes
// with no eligible verbs are dropped from their group mean and from micro.
inline AccuracyReport attribute_accuracy(const LabelledVerbs& pred,
                                         const LabelledVerbs& gold,
                                         const AttributeSchema& schema,
                                         bool effects_conditional = false) {
  if (pred.size() != gold.size()) fail("attribute_accuracy: verb-set size mismatch");
  std::map<std::string, const LabelVector*> gold_by_verb;
  for (const auto& [verb, labels] : gold) gold_by_verb[verb] = &labels;

  const std::size_t K = schema.attrs.size();
  std::vector<std::size_t> hits(K, 0), counts(K, 0);

  std::size_t trans_base = 0, effects_base = 0;
  for (std::size_t k = 0; k < K; ++k) {
    if (schema.attrs[k].group == "transitivity" && trans_base == 0 &&
        (k == 0 || schema.attrs[k - 1].group != "transitivity"))
      trans_base = k;
    if (schema.attrs[k].group == "effects" &&
        (k == 0 || schema.attrs[k - 1].group != "effects"))
      effects_base = k;
  }

  for (const auto& [verb, plabels] : pred) {
    auto it = gold_by_verb.find(verb);
    if (it == gold_by_verb.end())
      fail("attribute_accuracy: verb '" + verb + "' missing from gold set");
    const LabelVector& glabels = *it->second;
    validate_labels(schema, plabels);
    validate_labels(schema, glabels);
    for (std::size_t k = 0; k < K; ++k) {
      if (effects_conditional && schema.attrs[k].group == "effects") {
        std::size_t gate = trans_base + detail::effects_gate(k - effects_base);
        if (glabels[gate] != 1) continue;
      }
      counts[k] += 1;
      if (plabels[k] == glabels[k]) hits[k] += 1;
    }
  }

  AccuracyReport rep;
  rep.group_names = schema.groups();
  rep.group_sizes = schema.group_sizes();
  rep.per_attr.resize(K, 0.0);
  for (std::size_t k = 0; k < K; ++k) {
    rep.attr_names.push_back(schema.attrs[k].name);
    rep.per_attr[k] = counts[k] ? static_cast<double>(hits[k]) / counts[k] : -1.0;
  }

  std::size_t k = 0;
  double micro_sum = 0.0;
  std::size_t micro_n = 0;
  for (std::size_t g = 0; g < rep.group_names.size(); ++g) {
    double acc = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < rep.group_sizes[g]; ++i, ++k) {
      if (rep.per_attr[k] < 0.0) continue;
      acc += rep.per_attr[k];
      ++n;
      micro_sum += rep.per_attr[k];
      ++micro_n;
    }
    rep.per_group.push_back(n ? acc / n : 0.0);
  }
  rep.macro = 0.0;
  for (double a : rep.per_group) rep.macro += a;
  rep.macro /= static_cast<double>(rep.per_group.size());
  rep.micro = micro_n ? micro_sum / static_cast<double>(micro_n) : 0.0;
  return rep;
}

// Constant predictor: per attribute, the modal value over training verbs;
// ties break toward the lowest value index.
inline LabelVector majority_baseline(const LabelledVerbs& gold,
                                     const AttributeSchema& schema) {
  if (gold.empty()) fail("majority_baseline: empty training set");
  LabelVector out(schema.attrs.size(), 0);
  for (std::size_t k = 0; k < schema.attrs.size(); ++k) {
    std::vector<std::size_t> counts(schema.attrs[k].card(), 0);
    for (const auto& [verb, labels] : gold) {
      validate_labels(schema, labels);
      counts[static_cast<std::size_t>(labels[k])] += 1;
    }
    std::size_t best = 0;
    for (std::size_t v = 1; v < counts.size(); ++v)
      if (counts[v] > counts[best]) best = v;
    out[k] = static_cast<int>(best);
  }
  return out;
}

}  // namespace vatt
