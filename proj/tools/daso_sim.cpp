#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "daso/harness.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Deterministic cluster simulator for hierarchical asynchronous data-parallel training"};
  app.require_subcommand(1);

  std::string config;
  std::string out;
  std::string method = "daso";
  std::vector<int> nodes;

  auto* run = app.add_subcommand("run", "train one method and write metrics.csv + summary.json");
  run->add_option("--config", config, "experiment config file")->required();
  run->add_option("--method", method, "daso or baseline")
      ->check(CLI::IsMember({"daso", "baseline"}));
  run->add_option("--out", out, "output directory")->required();

  auto* cmp = app.add_subcommand("compare", "run both methods and write compare.json");
  cmp->add_option("--config", config, "experiment config file")->required();
  cmp->add_option("--out", out, "output directory")->required();

  auto* verify = app.add_subcommand("verify", "check update-rule forms and the descent bound");
  verify->add_option("--out", out, "output directory")->required();

  auto* sweep = app.add_subcommand("sweep", "compare across node counts and write sweep.csv");
  sweep->add_option("--config", config, "experiment config file")->required();
  sweep->add_option("--nodes", nodes, "comma separated node counts")->required()->delimiter(',');
  sweep->add_option("--out", out, "output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? daso::kExitOk : daso::kExitConfig;
  }

  if (run->parsed()) return daso::cmd_run(config, method, out);
  if (cmp->parsed()) return daso::cmd_compare(config, out);
  if (verify->parsed()) return daso::cmd_verify(out);
  return daso::cmd_sweep(config, nodes, out);
}
