// doorrl: train-teacher | distill | finetune | eval | ablate.

#include <cstdio>
#include <exception>
#include <map>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "doorrl/harness.h"

namespace {

struct Common {
  std::string config;
  long long seed = -1;
  std::string out;
  std::vector<std::string> overrides;
};

void AddCommon(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "flat key=value config file");
  cmd->add_option("--seed", c.seed, "run seed (replaces seeds)");
  cmd->add_option("--out", c.out, "output directory");
  cmd->add_option("--override", c.overrides, "key=value, repeatable");
}

doorrl::ExperimentConfig Build(const Common& c, const std::string& phase) {
  std::map<std::string, std::string> values;
  if (!c.config.empty()) values = doorrl::LoadConfigFile(c.config);
  values["phase"] = phase;
  if (c.seed >= 0) values["seeds"] = std::to_string(c.seed);
  if (!c.out.empty()) values["out_dir"] = c.out;
  for (const std::string& o : c.overrides) doorrl::ApplyOverride(values, o);
  return doorrl::BuildExperimentConfig(values);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"door-opening teacher/student training"};
  app.require_subcommand(1);
  Common teacher, distill, finetune, eval, ablate;
  std::string ablate_kind;
  bool list_keys = false;
  app.add_flag("--list-keys", list_keys, "print every config key and exit");

  AddCommon(app.add_subcommand("train-teacher", "PPO teacher with staged reset"), teacher);
  AddCommon(app.add_subcommand("distill", "DAgger student from a teacher"), distill);
  AddCommon(app.add_subcommand("finetune", "GRPO fine-tuning of a student"), finetune);
  AddCommon(app.add_subcommand("eval", "held-out evaluation"), eval);
  CLI::App* ab = app.add_subcommand("ablate", "buffer-size or GRPO ablation");
  AddCommon(ab, ablate);
  ab->add_option("kind", ablate_kind, "buffer | grpo")
      ->required()
      ->check(CLI::IsMember({"buffer", "grpo"}));

  if (argc == 2 && std::string(argv[1]) == "--list-keys") {
    for (const doorrl::ConfigKey& k : doorrl::ConfigSchema()) {
      std::printf("%-36s %-12s %s\n", k.name.c_str(), k.default_value.c_str(),
                  k.help.c_str());
    }
    return 0;
  }
  CLI11_PARSE(app, argc, argv);

  try {
    doorrl::ExperimentConfig cfg;
    if (app.got_subcommand("train-teacher")) {
      cfg = Build(teacher, "teacher");
    } else if (app.got_subcommand("distill")) {
      cfg = Build(distill, "distill");
    } else if (app.got_subcommand("finetune")) {
      cfg = Build(finetune, "finetune");
    } else if (app.got_subcommand("eval")) {
      cfg = Build(eval, "eval");
    } else {
      cfg = Build(ablate, ablate_kind == "buffer" ? "ablate_buffer" : "ablate_grpo");
    }

    switch (cfg.phase) {
      case doorrl::Phase::kTeacher: {
        const doorrl::TeacherRun r =
            doorrl::RunTrainTeacher(cfg, cfg.seeds.front(), cfg.out_dir);
        std::printf("iterations %d  final eval success %.3f%s\n", r.iterations_done,
                    r.final_success, r.aborted ? "  (aborted: non-finite update)" : "");
        return r.aborted ? 2 : 0;
      }
      case doorrl::Phase::kDistill: {
        const doorrl::DistillRun r = doorrl::RunDistill(cfg, cfg.seeds.front(), cfg.out_dir);
        std::printf("held-out imitation mse %.6f\n", r.held_out_mse);
        return 0;
      }
      case doorrl::Phase::kFinetune: {
        const doorrl::FinetuneRun r =
            doorrl::RunFinetune(cfg, cfg.seeds.front(), cfg.out_dir);
        std::printf("iterations %zu\n", r.iterations.size());
        return 0;
      }
      case doorrl::Phase::kEval: {
        for (const doorrl::EvalReport& r : doorrl::RunEval(cfg, cfg.out_dir)) {
          std::printf("%s\n", doorrl::FormatEvalReport(r).c_str());
        }
        return 0;
      }
      case doorrl::Phase::kAblateBuffer:
        std::printf("%s", doorrl::RunAblationBuffer(cfg, cfg.out_dir).table.c_str());
        return 0;
      case doorrl::Phase::kAblateGrpo:
        std::printf("%s", doorrl::RunAblationGrpo(cfg, cfg.out_dir).table.c_str());
        return 0;
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
