#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

#include "medrex/pipeline.hpp"
#include "testutil.hpp"

using namespace medrex;
using namespace medrex::testutil;

namespace {

std::string file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

RunConfig tiny_config(const std::filesystem::path& corpus_root) {
  RunConfig config;
  config.corpus_dir = corpus_root;
  config.train.epochs = 2;
  config.train.lstm_hidden = 4;
  config.train.d_w = 6;
  config.train.d_p = 3;
  config.train.d_c = 3;
  config.train.d_pos = 2;
  config.train.p_max = 10;
  config.train.batch_size = 4;
  config.train.seed = 5;
  return config;
}

int run_cli(const std::string& args, const std::filesystem::path& log) {
  const std::string command =
      std::string(MEDREX_CLI_PATH) + " " + args + " > " + log.string() +
      " 2>&1";
  const int status = std::system(command.c_str());
  REQUIRE(status != -1);
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_CASE("split_documents is deterministic and disjoint") {
  Corpus corpus;
  for (int d = 0; d < 10; ++d) {
    corpus.sentences.push_back(
        make_sentence("doc" + std::to_string(d), 1, "w x y"));
  }
  const auto [train_a, test_a] = split_documents(corpus, 0.10, 9);
  const auto [train_b, test_b] = split_documents(corpus, 0.10, 9);
  CHECK(train_a == train_b);
  CHECK(test_a == test_b);
  CHECK(test_a.size() == 1);  // ceil(0.1 * 10)
  CHECK(train_a.size() == 9);

  std::set<std::string> all(train_a.begin(), train_a.end());
  all.insert(test_a.begin(), test_a.end());
  CHECK(all.size() == 10);

  const auto [train_c, test_c] = split_documents(corpus, 0.10, 10);
  CHECK((train_c != train_a || test_c != test_a));
}

TEST_CASE("config_hash changes with any field") {
  RunConfig a;
  RunConfig b = a;
  CHECK(config_hash(a) == config_hash(b));
  b.train.epochs = 21;
  CHECK(config_hash(a) != config_hash(b));
  b = a;
  b.corpus_dir = "/elsewhere";
  CHECK(config_hash(a) != config_hash(b));
}

TEST_CASE("train/predict/eval pipeline on the fixture corpus") {
  TempDir tmp("pipeline");
  write_fixture_doc(tmp.path() / "corpus");

  RunConfig config = tiny_config(tmp.path() / "corpus");
  config.model_path = tmp.path() / "model" / "m.bin";
  std::ostringstream log;
  CHECK(cmd_train(config, log) == 0);

  CHECK(std::filesystem::exists(config.model_path));
  CHECK(std::filesystem::exists(tmp.path() / "model" / "m.bin.vocab"));
  CHECK(std::filesystem::exists(tmp.path() / "model" / "m.bin.pos100"));
  CHECK(std::filesystem::exists(tmp.path() / "model" / "m.bin.pmi"));
  const std::string train_log = file_bytes(tmp.path() / "model" / "m.bin.log");
  CHECK(train_log.find("seed=5") != std::string::npos);
  CHECK(train_log.find("config_hash=0x") != std::string::npos);
  CHECK(train_log.find("epoch_2_loss=") != std::string::npos);

  // Same seed, fresh output path: bitwise-identical model.
  RunConfig again = config;
  again.model_path = tmp.path() / "model2" / "m.bin";
  std::ostringstream log2;
  CHECK(cmd_train(again, log2) == 0);
  CHECK(file_bytes(config.model_path) == file_bytes(again.model_path));

  config.output_dir = tmp.path() / "pred";
  std::ostringstream log3;
  CHECK(cmd_predict(config, log3) == 0);

  // Whatever was predicted re-parses and evaluates cleanly.
  const Corpus corpus = load_corpus_root(config.corpus_dir);
  const PredictionSet read =
      read_predictions(config.output_dir, corpus);
  const auto candidates = generate_candidates(corpus);
  const EvalReport report = evaluate(gold_set(candidates), read);
  CHECK(report.total.tp + report.total.fn == 3);

  std::ostringstream log4;
  CHECK(cmd_eval(config, config.output_dir, log4) == 0);
  CHECK(log4.str().find("Total") != std::string::npos);
}

TEST_CASE("write_predictions/read_predictions round-trip") {
  TempDir tmp("predio");
  write_fixture_doc(tmp.path() / "corpus");
  const Corpus corpus = load_corpus_root(tmp.path() / "corpus");
  const auto candidates = generate_candidates(corpus);

  PredictionSet predictions;
  predictions[key_of(candidates[0])] = RelationLabel::TrIP;
  predictions[key_of(candidates[1])] = RelationLabel::Null;  // not written
  predictions[key_of(candidates[2])] = RelationLabel::TrNAP;

  write_predictions(candidates, predictions, tmp.path() / "out");
  const PredictionSet read = read_predictions(tmp.path() / "out", corpus);
  CHECK(read.size() == 2);
  CHECK(read.at(key_of(candidates[0])) == RelationLabel::TrIP);
  CHECK(read.at(key_of(candidates[2])) == RelationLabel::TrNAP);

  // Written lines parse under the annotation grammar.
  std::ifstream in(tmp.path() / "out" / "doc1.rel");
  std::string line;
  int lines = 0;
  while (std::getline(in, line)) {
    CHECK_NOTHROW(parse_relation_line(line));
    ++lines;
  }
  CHECK(lines == 2);
}

TEST_CASE("cmd_rules reproduces the worked example predictions") {
  TempDir tmp("rules_cmd");
  write_fixture_doc(tmp.path() / "corpus");
  write_file(tmp.path() / "verbs.tsv", "TrAP\ttreated\n");
  write_file(tmp.path() / "patterns.tsv",
             "TrAP\t<problem> is diagnosed with <treatment>\n");

  RunConfig config;
  config.corpus_dir = tmp.path() / "corpus";
  config.pattern_file = tmp.path() / "patterns.tsv";
  config.verb_file = tmp.path() / "verbs.tsv";
  config.output_dir = tmp.path() / "out";
  std::ostringstream log;
  CHECK(cmd_rules(config, log) == 0);

  const Corpus corpus = load_corpus_root(config.corpus_dir);
  const PredictionSet read = read_predictions(config.output_dir, corpus);
  int line1_trap = 0;
  for (const auto& [key, label] : read) {
    CHECK(label == RelationLabel::TrAP);
    if (key.line == 1) ++line1_trap;
  }
  CHECK(line1_trap == 2);          // both drug-fever pairs via "treated"
  CHECK(read.size() == 3);         // plus the diagnosed-with pattern on line 2
}

TEST_CASE("cmd_hybrid applies the rule override policy") {
  TempDir tmp("hybrid_cmd");
  write_fixture_doc(tmp.path() / "corpus");
  // Rules: TrAP via "treated" on line 1 (must NOT override), TrIP via
  // "diagnosed" on line 2 (must override).
  write_file(tmp.path() / "verbs.tsv", "TrAP\ttreated\nTrIP\tdiagnosed\n");
  write_file(tmp.path() / "patterns.tsv", "# none\n");

  RunConfig config = tiny_config(tmp.path() / "corpus");
  config.model_path = tmp.path() / "model" / "m.bin";
  std::ostringstream tlog;
  REQUIRE(cmd_train(config, tlog) == 0);

  config.output_dir = tmp.path() / "nn";
  std::ostringstream plog;
  REQUIRE(cmd_predict(config, plog) == 0);

  config.pattern_file = tmp.path() / "patterns.tsv";
  config.verb_file = tmp.path() / "verbs.tsv";
  config.output_dir = tmp.path() / "merged";
  std::ostringstream hlog;
  CHECK(cmd_hybrid(config, hlog) == 0);
  CHECK(hlog.str().find("Total") != std::string::npos);

  const Corpus corpus = load_corpus_root(config.corpus_dir);
  const auto candidates = generate_candidates(corpus);
  const PredictionSet network =
      read_predictions(tmp.path() / "nn", corpus);
  const PredictionSet merged =
      read_predictions(tmp.path() / "merged", corpus);

  for (const auto& inst : candidates) {
    const InstanceKey k = key_of(inst);
    const auto nn_it = network.find(k);
    const auto merged_it = merged.find(k);
    if (inst.sentence->line == 2) {
      // Rule TrIP wins on the diagnosed-with sentence.
      REQUIRE(merged_it != merged.end());
      CHECK(merged_it->second == RelationLabel::TrIP);
    } else {
      // Rule TrAP is dropped: the network label (possibly Null) survives.
      const bool nn_positive = nn_it != network.end();
      CHECK(nn_positive == (merged_it != merged.end()));
      if (nn_positive) CHECK(nn_it->second == merged_it->second);
    }
  }
}

TEST_CASE("cmd_sweep is reproducible and covers every value") {
  TempDir tmp("sweep_cmd");
  // A few documents so the split has material on both sides.
  for (int d = 0; d < 5; ++d) {
    const std::string id = "doc" + std::to_string(d);
    write_file(tmp.path() / "corpus" / "txt" / (id + ".txt"),
               "pain treated with Percocet\naspirin helps headache\n");
    write_file(tmp.path() / "corpus" / "con" / (id + ".con"),
               "c=\"pain\" 1:0 1:0||t=\"problem\"\n"
               "c=\"Percocet\" 1:3 1:3||t=\"treatment\"\n"
               "c=\"aspirin\" 2:0 2:0||t=\"treatment\"\n"
               "c=\"headache\" 2:2 2:2||t=\"problem\"\n");
    write_file(tmp.path() / "corpus" / "rel" / (id + ".rel"),
               "c=\"Percocet\" 1:3 1:3||r=\"TrAP\"||c=\"pain\" 1:0 1:0\n");
  }
  RunConfig config = tiny_config(tmp.path() / "corpus");
  config.train.epochs = 1;

  std::ostringstream out_a, out_b;
  CHECK(cmd_sweep(config, SweepAxis::NegSamples, {2, 4}, out_a) == 0);
  CHECK(cmd_sweep(config, SweepAxis::NegSamples, {2, 4}, out_b) == 0);
  CHECK(out_a.str() == out_b.str());
  CHECK(out_a.str().find("neg_samples=2") != std::string::npos);
  CHECK(out_a.str().find("neg_samples=4") != std::string::npos);

  CHECK_THROWS_AS(cmd_sweep(config, SweepAxis::NegSamples, {}, out_a),
                  std::invalid_argument);
}

TEST_CASE("cli end-to-end: subcommands, config file, exit codes") {
  TempDir tmp("cli");
  write_fixture_doc(tmp.path() / "corpus");
  const std::string corpus = (tmp.path() / "corpus").string();
  const std::string model = (tmp.path() / "model.bin").string();

  SUBCASE("train then predict and eval") {
    CHECK(run_cli("train --corpus " + corpus + " --model " + model +
                      " --epochs 1 --hidden 4 --embedding-size 6 --seed 3",
                  tmp.path() / "t.log") == 0);
    CHECK(run_cli("predict --corpus " + corpus + " --model " + model +
                      " --output " + (tmp.path() / "pred").string(),
                  tmp.path() / "p.log") == 0);
    CHECK(run_cli("eval --corpus " + corpus + " --predictions " +
                      (tmp.path() / "pred").string(),
                  tmp.path() / "e.log") == 0);
    const std::string eval_out = file_bytes(tmp.path() / "e.log");
    CHECK(eval_out.find("Total") != std::string::npos);
  }

  SUBCASE("config file values are overridden by flags") {
    write_file(tmp.path() / "run.cfg",
               "epochs = 1\nhidden = 4\nembedding-size = 6\nseed = 3\n");
    CHECK(run_cli("train --corpus " + corpus + " --model " + model +
                      " --config " + (tmp.path() / "run.cfg").string(),
                  tmp.path() / "c1.log") == 0);
    std::string log = file_bytes(tmp.path() / "model.bin.log");
    CHECK(log.find("epoch_1_loss=") != std::string::npos);
    CHECK(log.find("epoch_2_loss=") == std::string::npos);

    CHECK(run_cli("train --corpus " + corpus + " --model " + model +
                      " --config " + (tmp.path() / "run.cfg").string() +
                      " --epochs 2",
                  tmp.path() / "c2.log") == 0);
    log = file_bytes(tmp.path() / "model.bin.log");
    CHECK(log.find("epoch_2_loss=") != std::string::npos);
  }

  SUBCASE("missing corpus is a data error (exit 2)") {
    CHECK(run_cli("train --corpus /nonexistent --model " + model,
                  tmp.path() / "x.log") == 2);
  }

  SUBCASE("empty pattern and verb files yield empty rule output") {
    write_file(tmp.path() / "empty.tsv", "# nothing\n");
    CHECK(run_cli("rules --corpus " + corpus + " --patterns " +
                      (tmp.path() / "empty.tsv").string() + " --verbs " +
                      (tmp.path() / "empty.tsv").string() + " --output " +
                      (tmp.path() / "pred").string(),
                  tmp.path() / "r.log") == 0);
    CHECK(file_bytes(tmp.path() / "r.log").find("rule predictions: 0") !=
          std::string::npos);
    CHECK(std::filesystem::is_empty(tmp.path() / "pred"));
  }

  SUBCASE("predicting on an empty corpus writes nothing") {
    REQUIRE(run_cli("train --corpus " + corpus + " --model " + model +
                        " --epochs 1 --hidden 4 --embedding-size 6",
                    tmp.path() / "t.log") == 0);
    std::filesystem::create_directories(tmp.path() / "none" / "txt");
    CHECK(run_cli("predict --corpus " + (tmp.path() / "none").string() +
                      " --model " + model + " --output " +
                      (tmp.path() / "pred").string(),
                  tmp.path() / "p.log") == 0);
    CHECK(std::filesystem::is_empty(tmp.path() / "pred"));
  }

  SUBCASE("corrupt model file is a model error (exit 3)") {
    write_file(tmp.path() / "bad.bin", "not a model");
    CHECK(run_cli("predict --corpus " + corpus + " --model " +
                      (tmp.path() / "bad.bin").string() + " --output " +
                      (tmp.path() / "pred").string(),
                  tmp.path() / "x.log") == 3);
  }

  SUBCASE("malformed pattern file is a pattern error (exit 4)") {
    write_file(tmp.path() / "bad.tsv", "TrAP\tno slots here\n");
    CHECK(run_cli("rules --corpus " + corpus + " --patterns " +
                      (tmp.path() / "bad.tsv").string() + " --verbs " +
                      (tmp.path() / "bad.tsv").string() + " --output " +
                      (tmp.path() / "pred").string(),
                  tmp.path() / "x.log") == 4);
  }

  SUBCASE("shipped starter data files load") {
    CHECK(run_cli("rules --corpus " + corpus + " --patterns " +
                      std::string(MEDREX_DATA_DIR) + "/patterns.tsv --verbs " +
                      std::string(MEDREX_DATA_DIR) + "/verbs.tsv --output " +
                      (tmp.path() / "pred").string(),
                  tmp.path() / "d.log") == 0);
    // "treated" fires on both line-1 pairs, the diagnosed-with pattern on
    // line 2.
    const std::string out = file_bytes(tmp.path() / "d.log");
    CHECK(out.find("rule predictions: 3") != std::string::npos);
  }
}
