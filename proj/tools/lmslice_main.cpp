// Copyright 2026 The lmslice Authors
// SPDX-License-Identifier: Apache-2.0

// lmslice command line: one subcommand per pipeline stage, plus `run` for
// several stages at once and `synth` for the synthetic fixtures.

#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "lmslice/pipeline.hpp"
#include "lmslice/synthetic.hpp"

namespace {

namespace pl = lmslice::pipeline;

// Flag name -> dotted config key. Flags use the config field names.
const std::vector<std::pair<std::string, std::string>>& override_flags() {
  static const std::vector<std::pair<std::string, std::string>> f = {
      {"d_in", "train.d_in"},
      {"d_hid", "train.d_hid"},
      {"k", "train.k"},
      {"batch_size", "train.batch_size"},
      {"learning_rate", "train.learning_rate"},
      {"beta1", "train.beta1"},
      {"beta2", "train.beta2"},
      {"weight_decay", "train.weight_decay"},
      {"adam_epsilon", "train.adam_epsilon"},
      {"reset_interval_steps", "train.reset_interval_steps"},
      {"dead_fraction_threshold", "train.dead_fraction_threshold"},
      {"total_steps", "train.total_steps"},
      {"eval_fraction", "train.eval_fraction"},
      {"max_eval_samples", "train.max_eval_samples"},
      {"log_interval", "train.log_interval"},
      {"top_n", "filter.top_n"},
      {"min_nonzero", "filter.min_nonzero"},
      {"value_frac", "filter.value_frac"},
      {"rank_frac", "filter.rank_frac"},
      {"prob_thresh", "filter.prob_thresh"},
      {"logprob_thresh", "filter.logprob_thresh"},
      {"prob_weight", "align.prob_weight"},
      {"retry_limit", "annotator.retry_limit"},
      {"concurrency", "annotator.concurrency"},
      {"embed_dump", "paths.embed_dump"},
      {"lm_a_dump", "paths.lm_a_dump"},
      {"lm_b_dump", "paths.lm_b_dump"},
      {"corpus", "paths.corpus"},
      {"checkpoint", "paths.checkpoint"},
      {"features", "paths.features"},
      {"labels", "paths.labels"},
      {"report", "paths.report"},
      {"generations_a", "paths.generations_a"},
      {"generations_b", "paths.generations_b"},
      {"hypotheses", "paths.hypotheses"},
      {"mock_file", "transport.mock_file"},
  };
  return f;
}

void write_planted_config(const std::filesystem::path& dir, const lmslice::synth::PlantedFixture& fx) {
  std::ofstream out(dir / "config.json", std::ios::binary | std::ios::trunc);
  out << "{\n"
      << "  \"paths\": {\n"
      << "    \"embed_dump\": \"" << fx.embed_dir.string() << "\",\n"
      << "    \"lm_a_dump\": \"" << fx.lm_a_dir.string() << "\",\n"
      << "    \"lm_b_dump\": \"" << fx.lm_b_dir.string() << "\"\n"
      << "  },\n"
      << "  \"train\": {\"d_hid\": 64, \"k\": 4, \"batch_size\": 128, \"learning_rate\": 0.001,\n"
      << "            \"total_steps\": 3000, \"reset_interval_steps\": 1000},\n"
      << "  \"featurize_batch\": 128,\n"
      << "  \"out_dir\": \"" << (dir / "run").string() << "\"\n"
      << "}\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"lmslice: find where two language models differ, word by word"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir;
  std::vector<std::string> sets;
  app.add_option("--config", config_path, "Pipeline config (JSON)")->check(CLI::ExistingFile);
  app.add_option("--seed", seed, "Seed for training and generation sampling");
  app.add_option("--out", out_dir, "Directory for outputs and intermediates");
  app.add_option("--set", sets, "Extra override as dotted.key=json_value")->group("Overrides");
  std::map<std::string, std::string> flag_values;
  for (const auto& [flag, key] : override_flags()) {
    app.add_option("--" + flag, flag_values[flag], "Sets " + key)->group("Overrides");
  }

  std::map<std::string, pl::Stage> stage_cmds;
  for (auto st : {pl::Stage::kAlign, pl::Stage::kTrain, pl::Stage::kExtract, pl::Stage::kAnnotate,
                  pl::Stage::kReport, pl::Stage::kValidateGen, pl::Stage::kSweep}) {
    const auto name = pl::to_string(st);
    app.add_subcommand(name, "Run the " + name + " stage");
    stage_cmds[name] = st;
  }

  auto* run = app.add_subcommand("run", "Run several stages in pipeline order");
  std::vector<std::string> stage_names;
  bool resume = false;
  run->add_option("--stages", stage_names, "Stages to run (default: align train extract annotate report)");
  run->add_flag("--resume", resume, "Skip stages whose outputs already exist");

  auto* synth = app.add_subcommand("synth", "Write a synthetic fixture");
  std::string kind = "planted";
  std::string synth_dir;
  synth->add_option("kind", kind, "planted | generations")
      ->check(CLI::IsMember({"planted", "generations"}));
  synth->add_option("--dir", synth_dir, "Output directory")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (synth->parsed()) {
      if (kind == "planted") {
        lmslice::synth::PlantedConfig pc;
        if (seed) pc.seed = *seed;
        const auto fx = lmslice::synth::write_planted_fixture(synth_dir, pc);
        write_planted_config(synth_dir, fx);
        std::cout << "wrote planted fixture (" << fx.total_words << " words, " << fx.planted_words
                  << " planted) and " << (std::filesystem::path(synth_dir) / "config.json").string()
                  << "\n";
      } else {
        lmslice::synth::write_generation_fixture(synth_dir);
        std::cout << "wrote gen_a.jsonl, gen_b.jsonl, hypotheses.json under " << synth_dir << "\n";
      }
      return 0;
    }

    pl::Overrides overrides;
    for (const auto& [flag, key] : override_flags()) {
      if (app.count("--" + flag)) overrides.emplace_back(key, flag_values[flag]);
    }
    for (const auto& s : sets) {
      const auto eq = s.find('=');
      if (eq == std::string::npos) throw lmslice::Error("--set expects key=value, got '" + s + "'");
      overrides.emplace_back(s.substr(0, eq), s.substr(eq + 1));
    }
    if (!out_dir.empty()) overrides.emplace_back("out_dir", out_dir);
    auto cfg = config_path.empty() ? pl::config_from_json("", overrides)
                                   : pl::load_config(config_path, overrides);
    if (seed) cfg.apply_seed(*seed);
    std::filesystem::create_directories(cfg.out_dir);

    std::vector<pl::Stage> stages;
    pl::RunOptions opts;
    if (run->parsed()) {
      if (stage_names.empty()) {
        stages = pl::main_stages();
      } else {
        for (const auto& n : stage_names) stages.push_back(pl::stage_from_string(n));
      }
      opts.resume = resume;
    } else {
      for (const auto* sub : app.get_subcommands()) stages.push_back(stage_cmds.at(sub->get_name()));
    }
    pl::run_pipeline(cfg, stages, std::cout, opts);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
