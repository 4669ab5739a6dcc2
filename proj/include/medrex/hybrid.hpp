#pragma once

#include <map>
#include <set>
#include <string>

#include "medrex/corpus.hpp"

namespace medrex {

// Identity of one candidate pair across prediction sets.
struct InstanceKey {
  std::string doc_id;
  int line = 0;
  int t_start = 0, t_end = 0;
  int p_start = 0, p_end = 0;

  auto operator<=>(const InstanceKey&) const = default;
};

InstanceKey key_of(const RelationInstance& inst);

using PredictionSet = std::map<InstanceKey, RelationLabel>;

// Starts from the network predictions and overwrites with every rule
// prediction whose label is positive and not excluded. The default
// exclusion drops rule TrAP output, whose precision does not justify an
// override.
PredictionSet merge_predictions(
    const PredictionSet& network, const PredictionSet& rules,
    const std::set<RelationLabel>& excluded = {RelationLabel::TrAP});

}  // namespace medrex
