#pragma once

#include <array>
#include <string>

#include "medrex/corpus.hpp"
#include "medrex/hybrid.hpp"

namespace medrex {

struct ClassMetrics {
  long long tp = 0, fp = 0, fn = 0;
  double precision = 0.0, recall = 0.0, f = 0.0;
};

// precision = tp/(tp+fp), recall = tp/(tp+fn), f harmonic mean; every 0/0
// is defined as 0. The f computation uses the pooled form 2tp/(2tp+fp+fn),
// which is the same quantity in exact arithmetic and a single correctly
// rounded division in floating point.
ClassMetrics prf(long long tp, long long fp, long long fn);

// tp/fp/fn per positive label; Null means "no relation". Keys missing from
// pred count as Null predictions, keys outside the gold universe are an
// error.
std::array<ClassMetrics, kNumPositiveLabels> count_confusion(
    const PredictionSet& gold, const PredictionSet& pred);

struct EvalReport {
  std::array<ClassMetrics, kNumPositiveLabels> per_label;
  ClassMetrics total;       // micro (pooled) by default
  bool macro_total = false;

  std::string to_table() const;
  std::string to_kv() const;
};

EvalReport evaluate(const PredictionSet& gold, const PredictionSet& pred,
                    bool macro_total = false);

}  // namespace medrex
