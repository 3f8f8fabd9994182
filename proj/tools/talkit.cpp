// SPDX-License-Identifier: Apache-2.0
//
// talkit CLI: generate synthetic datasets, train the localizer, predict,
// evaluate, and run the fusion ablation, all from one JSON config.

#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "talkit/commands.hpp"

int main(int argc, char** argv) {
  if (argc < 2) {
    std::cerr << talkit::cli::usage();
    return talkit::cli::kExitUsage;
  }
  const std::string command = argv[1];
  if (command == "-h" || command == "--help") {
    std::cout << talkit::cli::usage();
    return talkit::cli::kExitOk;
  }

  CLI::App app{"temporal action localization toolkit"};
  std::string config_path;
  std::string checkpoint;
  std::string detections;
  app.add_option("config", config_path, "run configuration (JSON)")
      ->required();
  app.add_option("--checkpoint", checkpoint,
                 "checkpoint for predict (default: latest epoch)");
  app.add_option("--detections", detections,
                 "detections file for eval (default: <output_dir>/detections.json)");
  try {
    app.parse(argc - 1, argv + 1);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {  // --help on the tail arguments
      std::cout << talkit::cli::usage();
      return talkit::cli::kExitOk;
    }
    std::cerr << e.what() << "\n" << talkit::cli::usage();
    return talkit::cli::kExitUsage;
  }

  talkit::cli::CliOptions opts;
  if (!checkpoint.empty()) opts.checkpoint = checkpoint;
  if (!detections.empty()) opts.detections = detections;
  return talkit::cli::run(command, config_path, opts, std::cout, std::cerr);
}
