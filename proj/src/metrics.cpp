#include "medrex/metrics.hpp"

#include <iomanip>
#include <sstream>

namespace medrex {

ClassMetrics prf(long long tp, long long fp, long long fn) {
  ClassMetrics m;
  m.tp = tp;
  m.fp = fp;
  m.fn = fn;
  if (tp + fp > 0) m.precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
  if (tp + fn > 0) m.recall = static_cast<double>(tp) / static_cast<double>(tp + fn);
  if (2 * tp + fp + fn > 0) {
    m.f = static_cast<double>(2 * tp) / static_cast<double>(2 * tp + fp + fn);
  }
  return m;
}

std::array<ClassMetrics, kNumPositiveLabels> count_confusion(
    const PredictionSet& gold, const PredictionSet& pred) {
  for (const auto& [key, label] : pred) {
    if (!gold.contains(key)) {
      throw DataError("prediction for unknown candidate: " + key.doc_id +
                      " line " + std::to_string(key.line));
    }
  }
  std::array<ClassMetrics, kNumPositiveLabels> counts{};
  for (const auto& [key, gold_label] : gold) {
    auto it = pred.find(key);
    const RelationLabel pred_label =
        it == pred.end() ? RelationLabel::Null : it->second;
    if (gold_label != RelationLabel::Null && gold_label == pred_label) {
      counts[static_cast<int>(gold_label)].tp++;
    } else {
      if (pred_label != RelationLabel::Null) {
        counts[static_cast<int>(pred_label)].fp++;
      }
      if (gold_label != RelationLabel::Null) {
        counts[static_cast<int>(gold_label)].fn++;
      }
    }
  }
  return counts;
}

EvalReport evaluate(const PredictionSet& gold, const PredictionSet& pred,
                    bool macro_total) {
  EvalReport report;
  report.macro_total = macro_total;
  const auto counts = count_confusion(gold, pred);
  long long tp = 0, fp = 0, fn = 0;
  for (int l = 0; l < kNumPositiveLabels; ++l) {
    report.per_label[l] = prf(counts[l].tp, counts[l].fp, counts[l].fn);
    tp += counts[l].tp;
    fp += counts[l].fp;
    fn += counts[l].fn;
  }
  if (macro_total) {
    report.total.tp = tp;
    report.total.fp = fp;
    report.total.fn = fn;
    for (const auto& m : report.per_label) {
      report.total.precision += m.precision / kNumPositiveLabels;
      report.total.recall += m.recall / kNumPositiveLabels;
      report.total.f += m.f / kNumPositiveLabels;
    }
  } else {
    report.total = prf(tp, fp, fn);
  }
  return report;
}

std::string EvalReport::to_table() const {
  std::ostringstream out;
  out << std::fixed << std::setprecision(2);
  out << std::setw(4) << std::left << "" << std::right;
  for (int l = 0; l < kNumPositiveLabels; ++l) {
    out << std::setw(7) << to_string(static_cast<RelationLabel>(l));
  }
  out << std::setw(7) << "Total" << '\n';
  const auto row = [&](const char* name, auto field) {
    out << std::setw(4) << std::left << name << std::right;
    for (const auto& m : per_label) out << std::setw(7) << field(m);
    out << std::setw(7) << field(total) << '\n';
  };
  row("P", [](const ClassMetrics& m) { return m.precision; });
  row("R", [](const ClassMetrics& m) { return m.recall; });
  row("F", [](const ClassMetrics& m) { return m.f; });
  return out.str();
}

std::string EvalReport::to_kv() const {
  std::ostringstream out;
  out << std::setprecision(17);
  const auto block = [&](const std::string& name, const ClassMetrics& m) {
    out << name << ".tp=" << m.tp << '\n';
    out << name << ".fp=" << m.fp << '\n';
    out << name << ".fn=" << m.fn << '\n';
    out << name << ".precision=" << m.precision << '\n';
    out << name << ".recall=" << m.recall << '\n';
    out << name << ".f=" << m.f << '\n';
  };
  for (int l = 0; l < kNumPositiveLabels; ++l) {
    block(to_string(static_cast<RelationLabel>(l)), per_label[l]);
  }
  block("Total", total);
  return out.str();
}

}  // namespace medrex
