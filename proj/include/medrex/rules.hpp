#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <unordered_set>
#include <vector>

#include "medrex/corpus.hpp"

namespace medrex {

// s = before + first entity + middle + second entity + after, where first
// and second follow surface order.
struct RuleContext {
  std::vector<Token> before, middle, after;
  ConceptSpan first_span, second_span;
  ConceptType first_role, second_role;
};

RuleContext make_rule_context(const RelationInstance& inst);

struct PatternItem {
  enum class Kind { Literal, TreatmentSlot, ProblemSlot };
  Kind kind = Kind::Literal;
  std::string text;  // lowercase literal; empty for slots
};

// A template of literals around exactly one <treatment> and one <problem>
// slot, matched case-insensitively and contiguously.
struct PhrasePattern {
  RelationLabel label = RelationLabel::Null;
  std::vector<PatternItem> items;

  std::size_t size() const { return items.size(); }
};

PhrasePattern parse_pattern(const std::string& text, RelationLabel label);

bool match_pattern(const PhrasePattern& pattern, const RelationInstance& inst);

// Pattern file: `LABEL<TAB>template` per line, '#' comments.
std::vector<PhrasePattern> load_patterns(const std::filesystem::path& path);

// Verbs per positive label, matched as exact lowercase strings.
struct VerbLexicon {
  std::array<std::unordered_set<std::string>, kNumPositiveLabels> verbs;

  bool contains(RelationLabel label, const std::string& word) const;
};

// Verb file: `LABEL<TAB>verb` per line, '#' comments.
VerbLexicon load_verbs(const std::filesystem::path& path);

// The middle segment s_m, regardless of which role comes first.
std::vector<Token> surface_path(const RelationInstance& inst);

// One head index per token (-1 for the single root) plus dependency labels.
struct ParseGraph {
  std::vector<int> heads;
  std::vector<std::string> labels;

  int size() const { return static_cast<int>(heads.size()); }
  void validate() const;  // throws PatternError on cycles / bad roots
};

// Tokens on the tree path between the spans' end tokens, endpoints excluded,
// ordered from the surface-first entity. Null parse falls back to the
// surface path.
std::vector<Token> dep_shortest_path(const ParseGraph* parse,
                                     const RelationInstance& inst);

// First path token found in any label's verb set wins; a token in several
// sets resolves as TrIP > TrWP > TrNAP > TrCP > TrAP.
std::optional<RelationLabel> verb_classify(const std::vector<Token>& path,
                                           const VerbLexicon& lex);

// Phrase patterns first (longest template wins), then verbs on the
// dependency or surface path.
std::optional<RelationLabel> rule_predict(const RelationInstance& inst,
                                          const std::vector<PhrasePattern>& patterns,
                                          const VerbLexicon& lex,
                                          const ParseGraph* parse = nullptr);

// Sidecar `<doc>.dep` files: `index<TAB>head<TAB>deplabel` per token,
// sentences blank-line separated, aligned with the document's sentences.
class ParseIndex {
 public:
  static ParseIndex load(const std::filesystem::path& dir,
                         const Corpus& corpus);

  const ParseGraph* find(const std::string& doc_id, int line) const;

 private:
  std::map<std::pair<std::string, int>, ParseGraph> graphs_;
};

}  // namespace medrex
