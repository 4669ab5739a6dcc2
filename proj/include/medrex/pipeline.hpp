#pragma once

#include <filesystem>
#include <iosfwd>
#include <set>
#include <string>
#include <vector>

#include "medrex/features.hpp"
#include "medrex/hybrid.hpp"
#include "medrex/metrics.hpp"
#include "medrex/network.hpp"
#include "medrex/rules.hpp"

namespace medrex {

// Everything a run needs: hyperparameters plus paths. A corpus root is a
// directory with txt/, con/, rel/ and tags/ subdirectories (rel and tags
// optional).
struct RunConfig {
  TrainConfig train;
  std::filesystem::path corpus_dir;
  std::filesystem::path lexicon_dir;
  std::filesystem::path pattern_file;
  std::filesystem::path verb_file;
  std::filesystem::path parse_dir;
  std::filesystem::path model_path;
  std::filesystem::path output_dir;
  std::filesystem::path embeddings_path;
  double test_fraction = 0.10;
  bool macro_total = false;
  bool rule_trap_override = false;  // let rule TrAP predictions through
};

// FNV-1a over the canonical key=value rendering; logged with every
// training run so configs can be compared at a glance.
std::uint64_t config_hash(const RunConfig& config);

// Flat `key = value` config file using the long flag names (epochs, seed,
// corpus, embedding-size, ...). Applied before command-line flags so the
// precedence is flags > config file > defaults.
void apply_config_file(const std::filesystem::path& path, RunConfig& config);

Corpus load_corpus_root(const std::filesystem::path& root);

// Deterministic document-level split: shuffled by seed, the first
// ceil(fraction * docs) go to test.
std::pair<std::vector<std::string>, std::vector<std::string>> split_documents(
    const Corpus& corpus, double test_fraction, std::uint64_t seed);

Corpus filter_documents(const Corpus& corpus,
                        const std::set<std::string>& keep);

// Trained model plus the feature artifacts prediction needs.
struct ModelBundle {
  BiLstmModel model;
  FeatureVocab vocab;
  std::vector<PosSequence> top_pos;
  CooccurrenceCounts counts;
};

// Writes the MDRX file at `path` plus `<path>.vocab`, `<path>.pos100` and
// `<path>.pmi` sidecars.
void save_bundle(const ModelBundle& bundle, const std::filesystem::path& path);
ModelBundle load_bundle(const std::filesystem::path& path);

AssertionLexicons load_lexicons_or_empty(const std::filesystem::path& dir);

std::vector<EncodedInstance> encode_all(
    const std::vector<RelationInstance>& instances, const ModelBundle& bundle,
    const AssertionLexicons& lexicons);

// Writes one `<doc>.rel` per document that has a positive prediction.
void write_predictions(const std::vector<RelationInstance>& candidates,
                       const PredictionSet& predictions,
                       const std::filesystem::path& out_dir);

// Reads prediction directories back onto the candidate universe.
PredictionSet read_predictions(const std::filesystem::path& dir,
                               const Corpus& corpus);

PredictionSet gold_set(const std::vector<RelationInstance>& candidates);

PredictionSet network_predict(const ModelBundle& bundle,
                              const AssertionLexicons& lexicons,
                              const std::vector<RelationInstance>& candidates);

PredictionSet rules_predict(const std::vector<PhrasePattern>& patterns,
                            const VerbLexicon& verbs, const ParseIndex& parses,
                            const std::vector<RelationInstance>& candidates);

// CLI entry points. They print progress to `out` and return the process
// exit code.
int cmd_train(const RunConfig& config, std::ostream& out);
int cmd_predict(const RunConfig& config, std::ostream& out);
int cmd_rules(const RunConfig& config, std::ostream& out);
int cmd_hybrid(const RunConfig& config, std::ostream& out);
int cmd_eval(const RunConfig& config,
             const std::filesystem::path& predictions_dir, std::ostream& out);

enum class SweepAxis { NegSamples, EmbeddingSize };

int cmd_sweep(const RunConfig& config, SweepAxis axis,
              const std::vector<int>& values, std::ostream& out);

}  // namespace medrex
