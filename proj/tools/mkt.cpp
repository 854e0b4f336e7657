#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "mkt/runner.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Two-stage multi-entity CTR transfer: data generation, MEM pretraining, TEM fine-tuning, evaluation"};
  app.require_subcommand(1);

  mkt::CommandOptions opt;
  std::string seed;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", opt.config, "JSON config overlay");
    sub->add_option("--out", opt.out, "output directory")->capture_default_str();
    sub->add_option("--set", opt.sets, "dotted key=value override, repeatable")->take_all();
    sub->add_option("--seed", seed, "master seed");
  };

  auto* gen = app.add_subcommand("generate", "write the synthetic source/target datasets");
  add_common(gen);

  auto* pre = app.add_subcommand("pretrain", "train the multi-entity knowledge model");
  add_common(pre);
  pre->add_option("--data", opt.data, "dataset directory");

  auto* fin = app.add_subcommand("finetune", "train the target model on a frozen MEM");
  add_common(fin);
  fin->add_option("--data", opt.data, "dataset directory");
  fin->add_option("--mem", opt.mem, "MEM checkpoint");

  auto* ev = app.add_subcommand("eval", "score the target test split");
  add_common(ev);
  ev->add_option("--data", opt.data, "dataset directory");
  ev->add_option("--mem", opt.mem, "MEM checkpoint");
  ev->add_option("--tem", opt.tem, "TEM checkpoint");

  auto* abl = app.add_subcommand("ablate", "run every variant on identical data and seed");
  add_common(abl);
  abl->add_option("--data", opt.data, "dataset directory (generated in memory if absent)");
  abl->add_option("--variants", opt.variants, "subset of variants")->delimiter(',');

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  if (!seed.empty()) {
    try {
      std::size_t used = 0;
      opt.seed = std::stoull(seed, &used);
      if (used != seed.size()) throw std::invalid_argument(seed);
    } catch (const std::exception&) {
      std::cerr << "validation error: --seed must be a non-negative integer, got '" << seed << "'\n";
      return 2;
    }
  }
  return mkt::run_command(app.get_subcommands().front()->get_name(), opt, std::cerr);
}
