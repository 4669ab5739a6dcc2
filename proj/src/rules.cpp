#include "medrex/rules.hpp"

#include <algorithm>
#include <cctype>
#include <deque>
#include <fstream>
#include <sstream>

namespace medrex {

namespace {

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  return out;
}

// Rare-class priority for verbs listed under several labels; the hybrid
// keeps only rare-class rule output, so rarer labels win.
constexpr RelationLabel kVerbPriority[kNumPositiveLabels] = {
    RelationLabel::TrIP, RelationLabel::TrWP, RelationLabel::TrNAP,
    RelationLabel::TrCP, RelationLabel::TrAP};

std::pair<const ConceptSpan*, const ConceptSpan*> surface_order(
    const RelationInstance& inst) {
  if (inst.treatment.tok_start <= inst.problem.tok_start) {
    return {&inst.treatment, &inst.problem};
  }
  return {&inst.problem, &inst.treatment};
}

bool literal_matches(const std::string& literal, const Token& tok) {
  return literal == lower(tok.text);
}

}  // namespace

RuleContext make_rule_context(const RelationInstance& inst) {
  auto [first, second] = surface_order(inst);
  RuleContext ctx;
  ctx.first_span = *first;
  ctx.second_span = *second;
  ctx.first_role = first == &inst.treatment ? ConceptType::Treatment
                                            : ConceptType::Problem;
  ctx.second_role = second == &inst.treatment ? ConceptType::Treatment
                                              : ConceptType::Problem;
  const auto& tokens = inst.sentence->tokens;
  for (int i = 0; i < first->tok_start; ++i) {
    ctx.before.push_back(tokens[static_cast<std::size_t>(i)]);
  }
  for (int i = first->tok_end + 1; i < second->tok_start; ++i) {
    ctx.middle.push_back(tokens[static_cast<std::size_t>(i)]);
  }
  for (int i = second->tok_end + 1; i < static_cast<int>(tokens.size()); ++i) {
    ctx.after.push_back(tokens[static_cast<std::size_t>(i)]);
  }
  return ctx;
}

PhrasePattern parse_pattern(const std::string& text, RelationLabel label) {
  PhrasePattern pattern;
  pattern.label = label;
  int treatment_slots = 0, problem_slots = 0, literals = 0;
  std::istringstream words(text);
  std::string word;
  while (words >> word) {
    PatternItem item;
    if (word == "<treatment>") {
      item.kind = PatternItem::Kind::TreatmentSlot;
      ++treatment_slots;
    } else if (word == "<problem>") {
      item.kind = PatternItem::Kind::ProblemSlot;
      ++problem_slots;
    } else {
      item.kind = PatternItem::Kind::Literal;
      item.text = lower(word);
      ++literals;
    }
    pattern.items.push_back(std::move(item));
  }
  if (treatment_slots != 1 || problem_slots != 1) {
    throw PatternError("pattern '" + text +
                       "' must contain exactly one <treatment> and one "
                       "<problem> slot");
  }
  if (literals == 0) {
    throw PatternError("pattern '" + text + "' has no literal tokens");
  }
  return pattern;
}

bool match_pattern(const PhrasePattern& pattern,
                   const RelationInstance& inst) {
  auto [first, second] = surface_order(inst);
  const ConceptType first_role = first == &inst.treatment
                                     ? ConceptType::Treatment
                                     : ConceptType::Problem;

  std::size_t slot1 = pattern.items.size(), slot2 = pattern.items.size();
  for (std::size_t i = 0; i < pattern.items.size(); ++i) {
    if (pattern.items[i].kind == PatternItem::Kind::Literal) continue;
    if (slot1 == pattern.items.size()) {
      slot1 = i;
    } else {
      slot2 = i;
    }
  }

  // Slot order must agree with the surface order of the roles.
  const auto slot_role = [](const PatternItem& item) {
    return item.kind == PatternItem::Kind::TreatmentSlot
               ? ConceptType::Treatment
               : ConceptType::Problem;
  };
  if (slot_role(pattern.items[slot1]) != first_role) return false;

  const auto& tokens = inst.sentence->tokens;
  const int len = static_cast<int>(tokens.size());

  // Literals between the slots must exactly fill the between-span segment.
  const int middle_len = second->tok_start - first->tok_end - 1;
  if (static_cast<int>(slot2 - slot1 - 1) != middle_len) return false;
  for (std::size_t i = slot1 + 1; i < slot2; ++i) {
    const int pos = first->tok_end + 1 + static_cast<int>(i - slot1 - 1);
    if (!literal_matches(pattern.items[i].text,
                         tokens[static_cast<std::size_t>(pos)])) {
      return false;
    }
  }
  // Leading literals anchor immediately before the first span.
  const int lead = static_cast<int>(slot1);
  if (first->tok_start < lead) return false;
  for (std::size_t i = 0; i < slot1; ++i) {
    const int pos = first->tok_start - lead + static_cast<int>(i);
    if (!literal_matches(pattern.items[i].text,
                         tokens[static_cast<std::size_t>(pos)])) {
      return false;
    }
  }
  // Trailing literals anchor immediately after the second span.
  const int trail = static_cast<int>(pattern.items.size() - slot2 - 1);
  if (second->tok_end + trail >= len) return false;
  for (std::size_t i = slot2 + 1; i < pattern.items.size(); ++i) {
    const int pos = second->tok_end + static_cast<int>(i - slot2);
    if (!literal_matches(pattern.items[i].text,
                         tokens[static_cast<std::size_t>(pos)])) {
      return false;
    }
  }
  return true;
}

std::vector<PhrasePattern> load_patterns(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw PatternError("cannot open pattern file " + path.string());
  std::vector<PhrasePattern> patterns;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const std::size_t tab = line.find('\t');
    if (tab == std::string::npos) {
      throw PatternError(path.string() + ":" + std::to_string(line_no) +
                         ": expected LABEL<TAB>template");
    }
    const auto label = label_from_string(line.substr(0, tab));
    if (!label || *label == RelationLabel::Null) {
      throw PatternError(path.string() + ":" + std::to_string(line_no) +
                         ": unknown label '" + line.substr(0, tab) + "'");
    }
    try {
      patterns.push_back(parse_pattern(line.substr(tab + 1), *label));
    } catch (const PatternError& e) {
      throw PatternError(path.string() + ":" + std::to_string(line_no) +
                         ": " + e.what());
    }
  }
  return patterns;
}

bool VerbLexicon::contains(RelationLabel label,
                           const std::string& word) const {
  const int idx = static_cast<int>(label);
  return idx < kNumPositiveLabels &&
         verbs[static_cast<std::size_t>(idx)].contains(word);
}

VerbLexicon load_verbs(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw PatternError("cannot open verb file " + path.string());
  VerbLexicon lex;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const std::size_t tab = line.find('\t');
    if (tab == std::string::npos) {
      throw PatternError(path.string() + ":" + std::to_string(line_no) +
                         ": expected LABEL<TAB>verb");
    }
    const auto label = label_from_string(line.substr(0, tab));
    if (!label || *label == RelationLabel::Null) {
      throw PatternError(path.string() + ":" + std::to_string(line_no) +
                         ": unknown label '" + line.substr(0, tab) + "'");
    }
    std::string verb = lower(line.substr(tab + 1));
    if (verb.empty()) {
      throw PatternError(path.string() + ":" + std::to_string(line_no) +
                         ": empty verb");
    }
    lex.verbs[static_cast<std::size_t>(static_cast<int>(*label))].insert(
        std::move(verb));
  }
  return lex;
}

std::vector<Token> surface_path(const RelationInstance& inst) {
  return make_rule_context(inst).middle;
}

void ParseGraph::validate() const {
  const int n = size();
  if (static_cast<int>(labels.size()) != n) {
    throw PatternError("parse graph: label/head count mismatch");
  }
  int roots = 0;
  for (int i = 0; i < n; ++i) {
    if (heads[static_cast<std::size_t>(i)] == -1) {
      ++roots;
    } else if (heads[static_cast<std::size_t>(i)] < 0 ||
               heads[static_cast<std::size_t>(i)] >= n) {
      throw PatternError("parse graph: head index out of range at token " +
                         std::to_string(i));
    }
  }
  if (roots != 1) {
    throw PatternError("parse graph: expected exactly one root, found " +
                       std::to_string(roots));
  }
  for (int i = 0; i < n; ++i) {
    int cursor = i, hops = 0;
    while (cursor != -1) {
      cursor = heads[static_cast<std::size_t>(cursor)];
      if (++hops > n) {
        throw PatternError("parse graph: cycle involving token " +
                           std::to_string(i));
      }
    }
  }
}

std::vector<Token> dep_shortest_path(const ParseGraph* parse,
                                     const RelationInstance& inst) {
  if (!parse) return surface_path(inst);
  parse->validate();

  const auto& tokens = inst.sentence->tokens;
  const int n = parse->size();
  if (n != static_cast<int>(tokens.size())) {
    throw PatternError("parse graph does not cover the sentence");
  }
  auto [first, second] = surface_order(inst);
  const int from = first->tok_end;  // head-final endpoint heuristic
  const int to = second->tok_end;
  if (from == to) return {};

  std::vector<std::vector<int>> adj(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const int head = parse->heads[static_cast<std::size_t>(i)];
    if (head >= 0) {
      adj[static_cast<std::size_t>(i)].push_back(head);
      adj[static_cast<std::size_t>(head)].push_back(i);
    }
  }
  std::vector<int> prev(static_cast<std::size_t>(n), -2);
  std::deque<int> queue{from};
  prev[static_cast<std::size_t>(from)] = -1;
  while (!queue.empty() && prev[static_cast<std::size_t>(to)] == -2) {
    const int node = queue.front();
    queue.pop_front();
    for (int next : adj[static_cast<std::size_t>(node)]) {
      if (prev[static_cast<std::size_t>(next)] == -2) {
        prev[static_cast<std::size_t>(next)] = node;
        queue.push_back(next);
      }
    }
  }
  if (prev[static_cast<std::size_t>(to)] == -2) {
    throw PatternError("parse graph: no path between entities");
  }
  std::vector<Token> path;
  for (int node = prev[static_cast<std::size_t>(to)]; node != from && node != -1;
       node = prev[static_cast<std::size_t>(node)]) {
    path.push_back(tokens[static_cast<std::size_t>(node)]);
  }
  std::reverse(path.begin(), path.end());
  return path;
}

std::optional<RelationLabel> verb_classify(const std::vector<Token>& path,
                                           const VerbLexicon& lex) {
  for (const Token& tok : path) {
    const std::string word = lower(tok.text);
    for (RelationLabel label : kVerbPriority) {
      if (lex.contains(label, word)) return label;
    }
  }
  return std::nullopt;
}

std::optional<RelationLabel> rule_predict(
    const RelationInstance& inst, const std::vector<PhrasePattern>& patterns,
    const VerbLexicon& lex, const ParseGraph* parse) {
  // Longest template first; the stable sort keeps file order among ties.
  std::vector<const PhrasePattern*> ordered;
  ordered.reserve(patterns.size());
  for (const auto& p : patterns) ordered.push_back(&p);
  std::stable_sort(ordered.begin(), ordered.end(),
                   [](const PhrasePattern* a, const PhrasePattern* b) {
                     return a->size() > b->size();
                   });
  for (const PhrasePattern* pattern : ordered) {
    if (match_pattern(*pattern, inst)) return pattern->label;
  }
  return verb_classify(dep_shortest_path(parse, inst), lex);
}

ParseIndex ParseIndex::load(const std::filesystem::path& dir,
                            const Corpus& corpus) {
  ParseIndex index;
  if (!std::filesystem::is_directory(dir)) return index;
  for (const std::string& doc_id : corpus.doc_ids()) {
    const auto path = dir / (doc_id + ".dep");
    if (!std::filesystem::exists(path)) continue;
    std::ifstream in(path);
    if (!in) throw PatternError("cannot open parse file " + path.string());

    std::vector<const Sentence*> doc_sentences;
    for (const auto& sent : corpus.sentences) {
      if (sent->doc_id == doc_id) doc_sentences.push_back(sent.get());
    }

    std::vector<ParseGraph> blocks;
    ParseGraph current;
    std::string line;
    auto flush = [&blocks, &current]() {
      if (!current.heads.empty()) {
        blocks.push_back(std::move(current));
        current = ParseGraph{};
      }
    };
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty()) {
        flush();
        continue;
      }
      std::istringstream fields(line);
      int index_field = 0, head = 0;
      std::string dep_label;
      if (!(fields >> index_field >> head >> dep_label)) {
        throw PatternError(path.string() + ":" + std::to_string(line_no) +
                           ": expected index<TAB>head<TAB>deplabel");
      }
      if (index_field != static_cast<int>(current.heads.size())) {
        throw PatternError(path.string() + ":" + std::to_string(line_no) +
                           ": token indices must be consecutive from 0");
      }
      current.heads.push_back(head);
      current.labels.push_back(dep_label);
    }
    flush();

    if (blocks.size() != doc_sentences.size()) {
      throw PatternError(path.string() + ": " + std::to_string(blocks.size()) +
                         " parse blocks for " +
                         std::to_string(doc_sentences.size()) + " sentences");
    }
    for (std::size_t i = 0; i < blocks.size(); ++i) {
      blocks[i].validate();
      if (blocks[i].size() !=
          static_cast<int>(doc_sentences[i]->tokens.size())) {
        throw PatternError(path.string() + ": parse block " +
                           std::to_string(i + 1) +
                           " does not match sentence length");
      }
      index.graphs_.emplace(std::make_pair(doc_id, doc_sentences[i]->line),
                            std::move(blocks[i]));
    }
  }
  return index;
}

const ParseGraph* ParseIndex::find(const std::string& doc_id,
                                   int line) const {
  auto it = graphs_.find({doc_id, line});
  return it == graphs_.end() ? nullptr : &it->second;
}

}  // namespace medrex
