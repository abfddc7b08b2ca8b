/*
 * Copyright 2026 The abelnet Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// abelnet <command> [--config FILE] [--<key> VALUE ...]
//
// On failure prints one line "error: <category>: <message>" to stderr and
// exits with a category-specific nonzero code.

#include <iostream>
#include <map>
#include <string>

#include "CLI11.hpp"

#include "abelnet/commands.hpp"

namespace {

int exit_code(abelnet::ErrorKind k) {
  switch (k) {
    case abelnet::ErrorKind::Config: return 2;
    case abelnet::ErrorKind::Io: return 3;
    case abelnet::ErrorKind::Format: return 4;
    case abelnet::ErrorKind::Numerical: return 5;
    case abelnet::ErrorKind::InvalidArgument: return 6;
    case abelnet::ErrorKind::DimensionMismatch: return 7;
  }
  return 1;
}

struct Sub {
  CLI::App* app = nullptr;
  std::string config_path;
  std::map<std::string, std::string> overrides;
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Unrolled forward-backward inversion of the Abel operator"};
  app.require_subcommand(1);

  const std::pair<const char*, const char*> commands[] = {
      {"gen-data", "generate the synthetic dataset CSV"},
      {"train", "train the network and write a checkpoint plus metrics"},
      {"certify", "compute the robustness certificate of a checkpoint"},
      {"invert", "invert one signal with a checkpoint"},
      {"compare", "error table over noise levels, operator orders and methods"},
      {"eval", "mean relative error of a checkpoint and a baseline on a dataset"},
  };
  std::map<std::string, Sub> subs;
  for (const auto& [name, help] : commands) {
    Sub& s = subs[name];
    s.app = app.add_subcommand(name, help);
    s.app->add_option("--config", s.config_path, "flat key = value configuration file");
    for (const auto& key : abelnet::config_keys())
      s.app->add_option(std::string("--") + key.name, s.overrides[key.name],
                        std::string(key.help) + " (default: " + key.default_value + ")");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    for (auto& [name, s] : subs) {
      if (!s.app->parsed()) continue;
      abelnet::RunConfig cfg;
      if (!s.config_path.empty()) cfg.load_file(s.config_path);
      for (const auto& key : abelnet::config_keys())
        if (s.app->count(std::string("--") + key.name) > 0) cfg.set(key.name, s.overrides[key.name]);
      namespace cmd = abelnet::cli;
      if (name == "gen-data") cmd::cmd_gen_data(cfg, std::cout);
      else if (name == "train") cmd::cmd_train(cfg, std::cout);
      else if (name == "certify") cmd::cmd_certify(cfg, std::cout);
      else if (name == "invert") cmd::cmd_invert(cfg, std::cout);
      else if (name == "compare") cmd::cmd_compare(cfg, std::cout);
      else if (name == "eval") cmd::cmd_eval(cfg, std::cout);
    }
  } catch (const abelnet::Error& e) {
    std::cerr << "error: " << abelnet::error_kind_name(e.kind()) << ": " << e.what() << "\n";
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: internal: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
