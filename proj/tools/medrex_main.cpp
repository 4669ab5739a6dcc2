// medrex command line: train, predict, rules, hybrid, eval, sweep.
//
// Exit codes: 0 success, 2 data/parse error, 3 model format error,
// 4 pattern/lexicon error, 5 training error, 1 anything else.

#include <CLI11.hpp>
#include <iostream>

#include "medrex/pipeline.hpp"

namespace {

using medrex::RunConfig;

void add_common_options(CLI::App* cmd, RunConfig& config) {
  cmd->add_option("--corpus", config.corpus_dir,
                  "corpus root (txt/ con/ rel/ tags/)");
  cmd->add_option("--model", config.model_path, "model file path");
  cmd->add_option("--patterns", config.pattern_file, "phrase pattern file");
  cmd->add_option("--verbs", config.verb_file, "verb lexicon file");
  cmd->add_option("--lexicons", config.lexicon_dir,
                  "assertion lexicon directory");
  cmd->add_option("--parses", config.parse_dir,
                  "dependency parse sidecar directory");
  cmd->add_option("--output", config.output_dir, "prediction output directory");
  cmd->add_option("--embeddings", config.embeddings_path,
                  "pretrained word vector file");
  cmd->add_option("--seed", config.train.seed, "random seed");
  cmd->add_option("--epochs", config.train.epochs, "training epochs");
  cmd->add_option("--neg-samples", config.train.neg_samples,
                  "number of sampled null instances");
  cmd->add_option("--embedding-size", config.train.d_w,
                  "word embedding dimension");
  cmd->add_option("--hidden", config.train.lstm_hidden, "LSTM hidden size");
  cmd->add_option("--batch", config.train.batch_size, "mini-batch size");
  cmd->add_option("--lr", config.train.learning_rate, "learning rate");
  cmd->add_option("--test-fraction", config.test_fraction,
                  "held-out document fraction for sweep");
  cmd->add_flag("--no-class-weights",
                [&config](std::int64_t) { config.train.class_weights = false; },
                "disable inverse-frequency class weighting");
  cmd->add_flag("--macro", config.macro_total,
                "macro-average the Total column");
  cmd->add_flag("--rule-trap", config.rule_trap_override,
                "let rule TrAP predictions override the network");
  static std::string config_file_sink;
  cmd->add_option("--config", config_file_sink,
                  "flat key = value config file (flags override it)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"hybrid treatment-problem relation extraction"};
  app.require_subcommand(1);

  RunConfig config;

  // The config file seeds the defaults; flags parsed afterwards override it.
  try {
    for (int i = 1; i < argc; ++i) {
      const std::string_view arg = argv[i];
      if (arg == "--config" && i + 1 < argc) {
        medrex::apply_config_file(argv[i + 1], config);
      } else if (arg.starts_with("--config=")) {
        medrex::apply_config_file(std::string(arg.substr(9)), config);
      }
    }
  } catch (const medrex::DataError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  }
  std::filesystem::path eval_predictions;
  std::string sweep_axis = "neg_samples";
  std::vector<int> sweep_values;

  CLI::App* train = app.add_subcommand("train", "train the network");
  add_common_options(train, config);
  CLI::App* predict = app.add_subcommand("predict", "network predictions");
  add_common_options(predict, config);
  CLI::App* rules = app.add_subcommand("rules", "rule-engine predictions");
  add_common_options(rules, config);
  CLI::App* hybrid =
      app.add_subcommand("hybrid", "merged network + rule predictions");
  add_common_options(hybrid, config);
  CLI::App* eval = app.add_subcommand("eval", "score predictions against gold");
  add_common_options(eval, config);
  eval->add_option("--predictions", eval_predictions,
                   "directory of .rel prediction files")
      ->required();
  CLI::App* sweep = app.add_subcommand("sweep", "hyperparameter sweep");
  add_common_options(sweep, config);
  sweep->add_option("--axis", sweep_axis, "neg_samples or embedding_size")
      ->check(CLI::IsMember({"neg_samples", "embedding_size"}));
  sweep->add_option("--values", sweep_values, "axis values")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (train->parsed()) return medrex::cmd_train(config, std::cout);
    if (predict->parsed()) return medrex::cmd_predict(config, std::cout);
    if (rules->parsed()) return medrex::cmd_rules(config, std::cout);
    if (hybrid->parsed()) return medrex::cmd_hybrid(config, std::cout);
    if (eval->parsed()) {
      return medrex::cmd_eval(config, eval_predictions, std::cout);
    }
    if (sweep->parsed()) {
      const auto axis = sweep_axis == "neg_samples"
                            ? medrex::SweepAxis::NegSamples
                            : medrex::SweepAxis::EmbeddingSize;
      return medrex::cmd_sweep(config, axis, sweep_values, std::cout);
    }
  } catch (const medrex::ParseError& e) {
    std::cerr << "parse error: " << e.what() << '\n';
    return 2;
  } catch (const medrex::DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return 2;
  } catch (const medrex::ModelFormatError& e) {
    std::cerr << "model error: " << e.what() << '\n';
    return 3;
  } catch (const medrex::PatternError& e) {
    std::cerr << "pattern error: " << e.what() << '\n';
    return 4;
  } catch (const medrex::TrainingError& e) {
    std::cerr << "training error: " << e.what() << '\n';
    return 5;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
