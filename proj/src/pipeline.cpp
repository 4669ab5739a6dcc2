#include "medrex/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <ostream>
#include <random>
#include <sstream>

namespace medrex {

namespace {

void append_kv(std::string& text, const std::string& key,
               const std::string& value) {
  text += key;
  text += '=';
  text += value;
  text += '\n';
}

std::uint64_t fnv1a(const std::string& text) {
  std::uint64_t hash = 1469598103934665603ull;
  for (unsigned char c : text) {
    hash ^= c;
    hash *= 1099511628211ull;
  }
  return hash;
}

std::string canonical_config(const RunConfig& c) {
  std::string text;
  append_kv(text, "epochs", std::to_string(c.train.epochs));
  append_kv(text, "lstm_hidden", std::to_string(c.train.lstm_hidden));
  append_kv(text, "d_w", std::to_string(c.train.d_w));
  append_kv(text, "d_p", std::to_string(c.train.d_p));
  append_kv(text, "d_c", std::to_string(c.train.d_c));
  append_kv(text, "d_pos", std::to_string(c.train.d_pos));
  append_kv(text, "p_max", std::to_string(c.train.p_max));
  append_kv(text, "neg_samples", std::to_string(c.train.neg_samples));
  append_kv(text, "learning_rate", std::to_string(c.train.learning_rate));
  append_kv(text, "batch_size", std::to_string(c.train.batch_size));
  append_kv(text, "seed", std::to_string(c.train.seed));
  append_kv(text, "class_weights", c.train.class_weights ? "1" : "0");
  append_kv(text, "corpus", c.corpus_dir.string());
  append_kv(text, "lexicons", c.lexicon_dir.string());
  append_kv(text, "patterns", c.pattern_file.string());
  append_kv(text, "verbs", c.verb_file.string());
  append_kv(text, "parses", c.parse_dir.string());
  append_kv(text, "embeddings", c.embeddings_path.string());
  append_kv(text, "test_fraction", std::to_string(c.test_fraction));
  return text;
}

void write_vocab_section(std::ostream& out, const char* name,
                         const std::unordered_map<std::string, int>& ids) {
  out << '[' << name << "]\n";
  std::vector<std::pair<int, std::string>> ordered;
  ordered.reserve(ids.size());
  for (const auto& [text, id] : ids) ordered.emplace_back(id, text);
  std::sort(ordered.begin(), ordered.end());
  for (const auto& [id, text] : ordered) {
    out << id << '\t' << text << '\n';
  }
}

FeatureVocab read_vocab_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open vocabulary file " + path.string());
  FeatureVocab vocab;
  std::unordered_map<std::string, int>* section = nullptr;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line == "[words]") {
      section = &vocab.word_ids;
    } else if (line == "[pos]") {
      section = &vocab.pos_ids;
    } else if (line == "[chunks]") {
      section = &vocab.chunk_ids;
    } else {
      const std::size_t tab = line.find('\t');
      if (!section || tab == std::string::npos) {
        throw DataError(path.string() + ":" + std::to_string(line_no) +
                        ": malformed vocabulary line");
      }
      (*section)[line.substr(tab + 1)] = std::stoi(line.substr(0, tab));
    }
  }
  return vocab;
}

// Concept-type index used when projecting .rel files onto candidate keys.
struct ConceptDirectory {
  std::map<std::tuple<std::string, int, int, int>, ConceptType> types;

  explicit ConceptDirectory(const Corpus& corpus) {
    for (const auto& dc : corpus.concepts) {
      types.emplace(std::make_tuple(dc.doc_id, dc.span.line,
                                    dc.span.tok_start, dc.span.tok_end),
                    dc.span.ctype);
    }
  }

  std::optional<ConceptType> find(const std::string& doc_id,
                                  const ConceptSpan& span) const {
    auto it = types.find(
        std::make_tuple(doc_id, span.line, span.tok_start, span.tok_end));
    if (it == types.end()) return std::nullopt;
    return it->second;
  }
};

void print_corpus_summary(const Corpus& corpus, std::ostream& out) {
  out << "corpus: " << corpus.sentences.size() << " sentences, "
      << corpus.concepts.size() << " concepts, "
      << corpus.gold_relations.size() << " relations\n";
  for (const auto& warning : corpus.warnings) {
    out << "warning: " << warning << '\n';
  }
}

}  // namespace

std::uint64_t config_hash(const RunConfig& config) {
  return fnv1a(canonical_config(config));
}

void apply_config_file(const std::filesystem::path& path, RunConfig& config) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open config file " + path.string());
  const auto trim = [](std::string s) {
    const auto from = s.find_first_not_of(" \t");
    const auto to = s.find_last_not_of(" \t");
    return from == std::string::npos ? std::string()
                                     : s.substr(from, to - from + 1);
  };
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    if (trim(line).empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw DataError(path.string() + ":" + std::to_string(line_no) +
                      ": expected key = value");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    const auto as_bool = [&]() {
      return value == "1" || value == "true" || value == "yes";
    };
    try {
      if (key == "epochs") {
        config.train.epochs = std::stoi(value);
      } else if (key == "hidden") {
        config.train.lstm_hidden = std::stoi(value);
      } else if (key == "embedding-size") {
        config.train.d_w = std::stoi(value);
      } else if (key == "neg-samples") {
        config.train.neg_samples = std::stoi(value);
      } else if (key == "batch") {
        config.train.batch_size = std::stoi(value);
      } else if (key == "lr") {
        config.train.learning_rate = std::stod(value);
      } else if (key == "seed") {
        config.train.seed = std::stoull(value);
      } else if (key == "no-class-weights") {
        config.train.class_weights = !as_bool();
      } else if (key == "corpus") {
        config.corpus_dir = value;
      } else if (key == "model") {
        config.model_path = value;
      } else if (key == "patterns") {
        config.pattern_file = value;
      } else if (key == "verbs") {
        config.verb_file = value;
      } else if (key == "lexicons") {
        config.lexicon_dir = value;
      } else if (key == "parses") {
        config.parse_dir = value;
      } else if (key == "output") {
        config.output_dir = value;
      } else if (key == "embeddings") {
        config.embeddings_path = value;
      } else if (key == "test-fraction") {
        config.test_fraction = std::stod(value);
      } else if (key == "macro") {
        config.macro_total = as_bool();
      } else if (key == "rule-trap") {
        config.rule_trap_override = as_bool();
      } else {
        throw DataError(path.string() + ":" + std::to_string(line_no) +
                        ": unknown key '" + key + "'");
      }
    } catch (const std::invalid_argument&) {
      throw DataError(path.string() + ":" + std::to_string(line_no) +
                      ": bad value for '" + key + "'");
    }
  }
}

Corpus load_corpus_root(const std::filesystem::path& root) {
  return load_corpus(root / "txt", root / "con", root / "rel", root / "tags");
}

std::pair<std::vector<std::string>, std::vector<std::string>> split_documents(
    const Corpus& corpus, double test_fraction, std::uint64_t seed) {
  std::vector<std::string> ids = corpus.doc_ids();
  std::mt19937_64 rng(seed);
  std::shuffle(ids.begin(), ids.end(), rng);
  const auto test_count = static_cast<std::size_t>(
      std::ceil(test_fraction * static_cast<double>(ids.size())));
  std::vector<std::string> test(ids.begin(),
                                ids.begin() + static_cast<long>(test_count));
  std::vector<std::string> train(ids.begin() + static_cast<long>(test_count),
                                 ids.end());
  return {train, test};
}

Corpus filter_documents(const Corpus& corpus,
                        const std::set<std::string>& keep) {
  Corpus out;
  out.txt_dir = corpus.txt_dir;
  out.con_dir = corpus.con_dir;
  out.rel_dir = corpus.rel_dir;
  out.tag_dir = corpus.tag_dir;
  for (const auto& sent : corpus.sentences) {
    if (keep.contains(sent->doc_id)) out.sentences.push_back(sent);
  }
  for (const auto& dc : corpus.concepts) {
    if (keep.contains(dc.doc_id)) out.concepts.push_back(dc);
  }
  for (const auto& rel : corpus.gold_relations) {
    if (keep.contains(rel.sentence->doc_id)) out.gold_relations.push_back(rel);
  }
  return out;
}

void save_bundle(const ModelBundle& bundle,
                 const std::filesystem::path& path) {
  if (path.has_parent_path()) {
    std::filesystem::create_directories(path.parent_path());
  }
  save_model(bundle.model, path);

  std::ofstream vocab_out(path.string() + ".vocab");
  if (!vocab_out) throw DataError("cannot write " + path.string() + ".vocab");
  write_vocab_section(vocab_out, "words", bundle.vocab.word_ids);
  write_vocab_section(vocab_out, "pos", bundle.vocab.pos_ids);
  write_vocab_section(vocab_out, "chunks", bundle.vocab.chunk_ids);

  save_pos_sequences(bundle.top_pos, path.string() + ".pos100");
  bundle.counts.save(path.string() + ".pmi");
}

ModelBundle load_bundle(const std::filesystem::path& path) {
  ModelBundle bundle;
  bundle.model = load_model(path);
  bundle.vocab = read_vocab_file(path.string() + ".vocab");
  bundle.top_pos = load_pos_sequences(path.string() + ".pos100");
  bundle.counts = CooccurrenceCounts::load(path.string() + ".pmi");
  return bundle;
}

AssertionLexicons load_lexicons_or_empty(const std::filesystem::path& dir) {
  if (dir.empty()) return AssertionLexicons{};
  return AssertionLexicons::load(dir);
}

std::vector<EncodedInstance> encode_all(
    const std::vector<RelationInstance>& instances, const ModelBundle& bundle,
    const AssertionLexicons& lexicons) {
  std::vector<EncodedInstance> encoded;
  encoded.reserve(instances.size());
  for (const auto& inst : instances) {
    encoded.push_back(encode_instance(inst, bundle.vocab, bundle.top_pos,
                                      bundle.counts, lexicons));
  }
  return encoded;
}

void write_predictions(const std::vector<RelationInstance>& candidates,
                       const PredictionSet& predictions,
                       const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  std::map<std::string, std::vector<std::string>> lines_per_doc;
  for (const auto& inst : candidates) {
    auto it = predictions.find(key_of(inst));
    if (it == predictions.end() || it->second == RelationLabel::Null) {
      continue;
    }
    RelationInstance labeled = inst;
    labeled.label = it->second;
    lines_per_doc[inst.sentence->doc_id].push_back(
        serialize_relation(labeled));
  }
  for (const auto& [doc_id, lines] : lines_per_doc) {
    std::ofstream out(out_dir / (doc_id + ".rel"));
    if (!out) {
      throw DataError("cannot write predictions for document " + doc_id);
    }
    for (const auto& line : lines) out << line << '\n';
  }
}

PredictionSet read_predictions(const std::filesystem::path& dir,
                               const Corpus& corpus) {
  if (!std::filesystem::is_directory(dir)) {
    throw DataError("prediction directory does not exist: " + dir.string());
  }
  const ConceptDirectory directory(corpus);
  PredictionSet predictions;
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".rel") {
      files.push_back(entry.path());
    }
  }
  std::sort(files.begin(), files.end());
  for (const auto& path : files) {
    const std::string doc_id = path.stem().string();
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path.string());
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty()) continue;
      RelationLine rel;
      try {
        rel = parse_relation_line(line);
      } catch (const ParseError& e) {
        throw DataError(path.string() + ":" + std::to_string(line_no) + ": " +
                        e.what());
      }
      const auto first_type = directory.find(doc_id, rel.first);
      const auto second_type = directory.find(doc_id, rel.second);
      if (!first_type || !second_type) {
        throw DataError(path.string() + ":" + std::to_string(line_no) +
                        ": prediction references an unknown concept");
      }
      InstanceKey key;
      key.doc_id = doc_id;
      key.line = rel.first.line;
      if (*first_type == ConceptType::Treatment &&
          *second_type == ConceptType::Problem) {
        key.t_start = rel.first.tok_start;
        key.t_end = rel.first.tok_end;
        key.p_start = rel.second.tok_start;
        key.p_end = rel.second.tok_end;
      } else if (*first_type == ConceptType::Problem &&
                 *second_type == ConceptType::Treatment) {
        key.t_start = rel.second.tok_start;
        key.t_end = rel.second.tok_end;
        key.p_start = rel.first.tok_start;
        key.p_end = rel.first.tok_end;
      } else {
        throw DataError(path.string() + ":" + std::to_string(line_no) +
                        ": arguments are not a (treatment, problem) pair");
      }
      predictions[key] = rel.label;
    }
  }
  return predictions;
}

PredictionSet gold_set(const std::vector<RelationInstance>& candidates) {
  PredictionSet gold;
  for (const auto& inst : candidates) gold[key_of(inst)] = inst.label;
  return gold;
}

PredictionSet network_predict(const ModelBundle& bundle,
                              const AssertionLexicons& lexicons,
                              const std::vector<RelationInstance>& candidates) {
  PredictionSet predictions;
  for (const auto& inst : candidates) {
    const EncodedInstance enc = encode_instance(
        inst, bundle.vocab, bundle.top_pos, bundle.counts, lexicons);
    predictions[key_of(inst)] = predict(bundle.model, enc).first;
  }
  return predictions;
}

PredictionSet rules_predict(const std::vector<PhrasePattern>& patterns,
                            const VerbLexicon& verbs, const ParseIndex& parses,
                            const std::vector<RelationInstance>& candidates) {
  PredictionSet predictions;
  for (const auto& inst : candidates) {
    const ParseGraph* parse =
        parses.find(inst.sentence->doc_id, inst.sentence->line);
    if (auto label = rule_predict(inst, patterns, verbs, parse)) {
      predictions[key_of(inst)] = *label;
    }
  }
  return predictions;
}

int cmd_train(const RunConfig& config, std::ostream& out) {
  const Corpus corpus = load_corpus_root(config.corpus_dir);
  print_corpus_summary(corpus, out);

  const auto candidates = generate_candidates(corpus);
  const auto sampled = sample_negatives(
      candidates, static_cast<std::size_t>(config.train.neg_samples),
      config.train.seed);
  out << "candidates: " << candidates.size() << ", after negative sampling: "
      << sampled.size() << '\n';

  ModelBundle bundle;
  bundle.vocab = build_vocab(corpus);
  bundle.top_pos = top_pos_sequences(corpus);
  bundle.counts = CooccurrenceCounts::build(corpus);
  const AssertionLexicons lexicons =
      load_lexicons_or_empty(config.lexicon_dir);

  const auto encoded = encode_all(sampled, bundle, lexicons);
  const VocabDims dims{bundle.vocab.word_count(), bundle.vocab.pos_count(),
                       bundle.vocab.chunk_count()};

  WordVectors pretrained;
  const WordVectors* pretrained_ptr = nullptr;
  if (!config.embeddings_path.empty()) {
    pretrained =
        read_word_vectors(config.embeddings_path, bundle.vocab, config.train.d_w);
    pretrained_ptr = &pretrained;
    out << "pretrained vectors: " << pretrained.size() << " rows\n";
  }

  TrainResult result = train(encoded, config.train, dims, pretrained_ptr);
  for (std::size_t e = 0; e < result.epoch_losses.size(); ++e) {
    out << "epoch " << e + 1 << '/' << result.epoch_losses.size() << " loss "
        << result.epoch_losses[e] << '\n';
  }
  bundle.model = std::move(result.model);
  save_bundle(bundle, config.model_path);

  std::ofstream log(config.model_path.string() + ".log");
  log << "seed=" << config.train.seed << '\n';
  log << "config_hash=" << std::hex << std::showbase << config_hash(config)
      << std::dec << std::noshowbase << '\n';
  log << std::setprecision(17);
  for (std::size_t e = 0; e < result.epoch_losses.size(); ++e) {
    log << "epoch_" << e + 1 << "_loss=" << result.epoch_losses[e] << '\n';
  }
  out << "model written to " << config.model_path.string() << '\n';
  return 0;
}

int cmd_predict(const RunConfig& config, std::ostream& out) {
  const ModelBundle bundle = load_bundle(config.model_path);
  const Corpus corpus = load_corpus_root(config.corpus_dir);
  print_corpus_summary(corpus, out);
  const auto candidates = generate_candidates(corpus);
  const AssertionLexicons lexicons =
      load_lexicons_or_empty(config.lexicon_dir);

  const PredictionSet predictions =
      network_predict(bundle, lexicons, candidates);
  std::size_t positive = 0;
  for (const auto& [key, label] : predictions) {
    if (label != RelationLabel::Null) ++positive;
  }
  write_predictions(candidates, predictions, config.output_dir);
  out << "predictions: " << positive << " positive over "
      << candidates.size() << " candidates -> "
      << config.output_dir.string() << '\n';
  return 0;
}

int cmd_rules(const RunConfig& config, std::ostream& out) {
  const Corpus corpus = load_corpus_root(config.corpus_dir);
  print_corpus_summary(corpus, out);
  const auto candidates = generate_candidates(corpus);
  const auto patterns = load_patterns(config.pattern_file);
  const auto verbs = load_verbs(config.verb_file);
  const ParseIndex parses = config.parse_dir.empty()
                                ? ParseIndex{}
                                : ParseIndex::load(config.parse_dir, corpus);

  const PredictionSet predictions =
      rules_predict(patterns, verbs, parses, candidates);
  write_predictions(candidates, predictions, config.output_dir);
  out << "rule predictions: " << predictions.size() << " over "
      << candidates.size() << " candidates -> " << config.output_dir.string()
      << '\n';
  return 0;
}

int cmd_hybrid(const RunConfig& config, std::ostream& out) {
  const ModelBundle bundle = load_bundle(config.model_path);
  const Corpus corpus = load_corpus_root(config.corpus_dir);
  print_corpus_summary(corpus, out);
  const auto candidates = generate_candidates(corpus);
  const AssertionLexicons lexicons =
      load_lexicons_or_empty(config.lexicon_dir);

  const PredictionSet network =
      network_predict(bundle, lexicons, candidates);

  PredictionSet rules;
  if (!config.pattern_file.empty() && !config.verb_file.empty()) {
    const auto patterns = load_patterns(config.pattern_file);
    const auto verbs = load_verbs(config.verb_file);
    const ParseIndex parses = config.parse_dir.empty()
                                  ? ParseIndex{}
                                  : ParseIndex::load(config.parse_dir, corpus);
    rules = rules_predict(patterns, verbs, parses, candidates);
  } else {
    out << "no rule artifacts supplied; hybrid equals the network output\n";
  }

  const std::set<RelationLabel> excluded =
      config.rule_trap_override ? std::set<RelationLabel>{}
                                : std::set<RelationLabel>{RelationLabel::TrAP};
  const PredictionSet merged = merge_predictions(network, rules, excluded);
  write_predictions(candidates, merged, config.output_dir);
  out << "merged predictions -> " << config.output_dir.string() << '\n';

  if (!corpus.gold_relations.empty()) {
    const EvalReport report =
        evaluate(gold_set(candidates), merged, config.macro_total);
    out << report.to_table();
    out << report.to_kv();
  }
  return 0;
}

int cmd_eval(const RunConfig& config,
             const std::filesystem::path& predictions_dir, std::ostream& out) {
  const Corpus corpus = load_corpus_root(config.corpus_dir);
  const auto candidates = generate_candidates(corpus);
  const PredictionSet predictions = read_predictions(predictions_dir, corpus);
  const EvalReport report =
      evaluate(gold_set(candidates), predictions, config.macro_total);
  out << report.to_table();
  out << report.to_kv();
  return 0;
}

int cmd_sweep(const RunConfig& config, SweepAxis axis,
              const std::vector<int>& values, std::ostream& out) {
  if (values.empty()) {
    throw std::invalid_argument("sweep: empty value list");
  }
  const Corpus corpus = load_corpus_root(config.corpus_dir);
  print_corpus_summary(corpus, out);
  const auto [train_ids, test_ids] =
      split_documents(corpus, config.test_fraction, config.train.seed);
  out << "split: " << train_ids.size() << " train docs, " << test_ids.size()
      << " test docs\n";
  const Corpus train_corpus = filter_documents(
      corpus, std::set<std::string>(train_ids.begin(), train_ids.end()));
  const Corpus test_corpus = filter_documents(
      corpus, std::set<std::string>(test_ids.begin(), test_ids.end()));
  const AssertionLexicons lexicons =
      load_lexicons_or_empty(config.lexicon_dir);

  const auto test_candidates = generate_candidates(test_corpus);
  const PredictionSet gold = gold_set(test_candidates);
  const char* axis_name =
      axis == SweepAxis::NegSamples ? "neg_samples" : "embedding_size";

  for (std::size_t i = 0; i < values.size(); ++i) {
    RunConfig row = config;
    row.train.seed = config.train.seed + i;
    if (axis == SweepAxis::NegSamples) {
      row.train.neg_samples = values[i];
    } else {
      row.train.d_w = values[i];
    }

    ModelBundle bundle;
    bundle.vocab = build_vocab(train_corpus);
    bundle.top_pos = top_pos_sequences(train_corpus);
    bundle.counts = CooccurrenceCounts::build(train_corpus);

    const auto train_candidates = generate_candidates(train_corpus);
    const auto sampled = sample_negatives(
        train_candidates, static_cast<std::size_t>(row.train.neg_samples),
        row.train.seed);
    const auto encoded = encode_all(sampled, bundle, lexicons);
    const VocabDims dims{bundle.vocab.word_count(), bundle.vocab.pos_count(),
                         bundle.vocab.chunk_count()};
    TrainResult result = train(encoded, row.train, dims);
    bundle.model = std::move(result.model);

    const PredictionSet predictions =
        network_predict(bundle, lexicons, test_candidates);
    const EvalReport report =
        evaluate(gold, predictions, config.macro_total);
    out << "== " << axis_name << '=' << values[i]
        << " (seed=" << row.train.seed << ")\n";
    out << report.to_table();
    out << "sweep." << values[i] << ".total_f=" << std::setprecision(17)
        << report.total.f << '\n';
  }
  return 0;
}

}  // namespace medrex
