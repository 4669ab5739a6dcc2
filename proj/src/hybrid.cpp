#include "medrex/hybrid.hpp"

namespace medrex {

InstanceKey key_of(const RelationInstance& inst) {
  InstanceKey key;
  key.doc_id = inst.sentence->doc_id;
  key.line = inst.sentence->line;
  key.t_start = inst.treatment.tok_start;
  key.t_end = inst.treatment.tok_end;
  key.p_start = inst.problem.tok_start;
  key.p_end = inst.problem.tok_end;
  return key;
}

PredictionSet merge_predictions(const PredictionSet& network,
                                const PredictionSet& rules,
                                const std::set<RelationLabel>& excluded) {
  PredictionSet merged = network;
  for (const auto& [key, label] : rules) {
    if (label == RelationLabel::Null || excluded.contains(label)) continue;
    merged[key] = label;
  }
  return merged;
}

}  // namespace medrex
