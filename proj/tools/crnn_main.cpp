// Copyright 2026 The crnn Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


// Command-line front end: crnn gen|train|eval|decode|bench-delta [options]

#include <CLI11.hpp>

#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "crnn/harness.hpp"

namespace {

// Every RunConfig key is accepted as --key-with-dashes on every command.
const std::vector<std::pair<std::string, std::string>> kOptions = {
    {"dataset", "dataset directory"},
    {"checkpoint", "checkpoint file"},
    {"lexicon", "lexicon file, one entry per line"},
    {"image", "PGM image to decode"},
    {"report", "report TSV path"},
    {"preset", "standard | simplified"},
    {"layers", "layer list overriding the preset"},
    {"alphabet", "model symbols in label order"},
    {"fold_case", "match letters case-insensitively (0/1)"},
    {"input_height", "input image height"},
    {"optimizer", "adadelta | momentum"},
    {"rho", "ADADELTA decay"},
    {"epsilon", "ADADELTA epsilon"},
    {"learning_rate", "momentum learning rate"},
    {"momentum", "momentum coefficient"},
    {"batch_size", "training batch size"},
    {"epochs", "training epochs"},
    {"max_steps", "stop after this many steps (0: no limit)"},
    {"time_budget", "stop after this many CPU seconds of training (0: no limit)"},
    {"clip_norm", "gradient norm clip (0: off)"},
    {"train_limit", "use only the first N training samples"},
    {"eval_train_every", "epochs between training-set accuracy checks"},
    {"stop_at_full_train_accuracy", "stop at 100% training accuracy (0/1)"},
    {"target_loss", "stop once the epoch training loss is at or below"},
    {"save_optimizer_state", "store optimizer slots in checkpoints (0/1)"},
    {"delta", "edit-distance radius for lexicon search"},
    {"repeats", "timing repetitions for bench-delta"},
    {"n", "number of samples to generate"},
    {"max_length", "maximum label length"},
    {"distortion", "clean | training | max"},
    {"seed", "random seed"},
};

std::string flag_name(std::string key) {
  for (char& ch : key) {
    if (ch == '_') ch = '-';
  }
  return "--" + key;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Convolutional-recurrent text recognizer"};
  app.require_subcommand(1);

  std::string config_file;
  std::map<std::string, std::string> values;
  std::map<std::string, CLI::Option*> bound;

  auto add_shared = [&](CLI::App* sub) {
    sub->add_option("--config", config_file, "key = value config file");
    for (const auto& [key, help] : kOptions) {
      CLI::Option* opt = sub->add_option(flag_name(key), values[key], help);
      bound.emplace(sub->get_name() + "/" + key, opt);
    }
  };

  std::vector<CLI::App*> subs = {
      app.add_subcommand("gen", "render a synthetic dataset"),
      app.add_subcommand("train", "train a model on a dataset"),
      app.add_subcommand("eval", "evaluate a checkpoint on the test split"),
      app.add_subcommand("decode", "transcribe one image"),
      app.add_subcommand("bench-delta", "sweep the lexicon search radius"),
  };
  for (CLI::App* sub : subs) add_shared(sub);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  CLI::App* sub = app.get_subcommands().front();
  const std::string command = sub->get_name();
  crnn::RunConfig config;
  try {
    if (!config_file.empty()) crnn::apply_config_file(config_file, config);
    for (const auto& [key, help] : kOptions) {
      if (bound.at(command + "/" + key)->count() > 0) {
        crnn::apply_config_value(key, values[key], config);
      }
    }
    if (command == "gen") {
      crnn::cmd_gen(config, std::cout);
    } else if (command == "train") {
      crnn::cmd_train(config, std::cout);
    } else if (command == "eval") {
      crnn::cmd_eval(config, std::cout);
    } else if (command == "decode") {
      crnn::cmd_decode(config, std::cout);
    } else {
      crnn::cmd_bench_delta(config, std::cout);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return crnn::exit_code_for(e);
  }
  return 0;
}
