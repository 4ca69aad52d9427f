#include "ssimadv/cli.hpp"

#include <CLI11.hpp>
#include <filesystem>
#include <iostream>

#include "ssimadv/checkpoint.hpp"
#include "ssimadv/harness.hpp"
#include "ssimadv/idx.hpp"
#include "ssimadv/selftest.hpp"
#include "ssimadv/train.hpp"

namespace ssimadv {

namespace {

struct TrainArgs {
  std::string images, labels, test_images, test_labels;
  std::string out = "out";
  std::string arch = "desk";
  uint64_t seed = 20240229;
  int classes = 10;
  int limit = -1;
  int test_limit = -1;
  int epochs = 6;
  int batch_size = 50;
  double lr = 0.01;
  double momentum = 0.9;
  bool adv_mix = true;
  double epsilon = 0.3;
  int pgd_steps = 10;
  bool verbose = false;
};

struct AttackArgs {
  std::string model, images, labels;
  std::string out = "out";
  std::string attacks = "pgd,pgd-ssim,enet,ssim,ssim-e";
  uint64_t seed = 20240229;
  int limit = -1;
  int threads = 0;
  // pgd
  double epsilon = 0.3;
  int pgd_steps = 20;
  std::string pgd_loss = "xent";
  // shared solver settings
  int iters = 1000;
  int search_steps = 9;
  double lr0 = 0.01;
  // enet
  double beta = 0.01;
  // constrained attack
  double zeta1 = 0.9;
  double zeta2 = 0.9;
  double dual_lr = 0.01;
  int exhibits = 9;
};

struct ReportArgs {
  std::string outcomes;
  std::string out = "out";
};

int do_train(const TrainArgs& a) {
  Dataset<float> train_set = load_idx(a.images, a.labels);
  train_set.split = "train";
  if (a.limit >= 0) train_set = train_set.head(a.limit);
  train_set.validate(a.classes);
  if (train_set.size() == 0) throw std::runtime_error("train: no images after --limit");
  const Shape shape = train_set.images.front().shape;

  Rng init_rng(derive_seed(a.seed, 0));
  ScoreModel<float> model(shape, a.classes,
                          a.arch == "large" ? large_arch(a.classes) : desk_arch(a.classes),
                          init_rng);

  TrainConfig<float> cfg;
  cfg.epochs = a.epochs;
  cfg.batch_size = a.batch_size;
  cfg.learning_rate = static_cast<float>(a.lr);
  cfg.momentum = static_cast<float>(a.momentum);
  cfg.adversarial_mix = a.adv_mix;
  cfg.pgd_steps = a.pgd_steps;
  cfg.pgd_epsilon = static_cast<float>(a.epsilon);
  cfg.verbose = a.verbose;

  const TrainStats<float> stats = train(model, train_set, cfg, derive_seed(a.seed, 1));
  std::filesystem::create_directories(a.out);
  const std::string ckpt = a.out + "/model.ckpt";
  save_checkpoint(model, ckpt);

  std::cout << "trained on " << train_set.size() << " images, " << a.epochs
            << " epochs; train accuracy " << format_g6(100.0 * stats.train_accuracy)
            << "%\n";
  if (!a.test_images.empty()) {
    Dataset<float> test_set = load_idx(a.test_images, a.test_labels);
    if (a.test_limit >= 0) test_set = test_set.head(a.test_limit);
    test_set.validate(a.classes);
    std::cout << "test accuracy " << format_g6(100.0 * accuracy(model, test_set)) << "% on "
              << test_set.size() << " images\n";
  }
  std::cout << "checkpoint written to " << ckpt << "\n";
  return 0;
}

int do_attack(const AttackArgs& a) {
  const ScoreModel<float> model = load_checkpoint<float>(a.model);
  Dataset<float> data = load_idx(a.images, a.labels);
  data.split = "test";
  data.validate(model.num_classes());

  CampaignConfig cfg;
  cfg.attacks = parse_attack_list(a.attacks);
  cfg.limit = a.limit;
  cfg.threads = a.threads;

  cfg.pgd.epsilon = static_cast<float>(a.epsilon);
  cfg.pgd.steps = a.pgd_steps;
  cfg.pgd.loss = a.pgd_loss == "cw-margin" ? LossKind::cw_margin : LossKind::xent;

  cfg.enet.beta = static_cast<float>(a.beta);
  cfg.enet.iterations = a.iters;
  cfg.enet.lr0 = static_cast<float>(a.lr0);
  cfg.enet.search_steps = a.search_steps;

  cfg.ssim_attack.thresholds = {static_cast<float>(a.zeta1), static_cast<float>(a.zeta2)};
  cfg.ssim_attack.iterations = a.iters;
  cfg.ssim_attack.primal_lr = static_cast<float>(a.lr0);
  cfg.ssim_attack.dual_lr = static_cast<float>(a.dual_lr);
  cfg.ssim_attack.search_steps = a.search_steps;

  const EvalReport report = run_campaign(model, data, cfg, a.seed);
  emit_report(report, data, a.out, a.exhibits);

  std::cout << "scanned " << report.considered << " images, attacked " << report.attacked
            << " (clean accuracy " << format_g6(100.0 * report.clean_accuracy) << "%)\n";
  for (const auto& s : report.summaries) std::cout << describe(s) << "\n";
  std::cout << "report written to " << a.out << "\n";
  return 0;
}

int do_report(const ReportArgs& a) {
  const std::vector<OutcomeRecord> records = parse_outcomes_csv(read_text_file(a.outcomes));
  std::filesystem::create_directories(a.out);
  write_text_file(a.out + "/tail_curve.csv", tail_to_csv(compute_tail(records)));
  for (const auto& s : summarize(records)) std::cout << describe(s) << "\n";
  std::cout << "tail curve written to " << a.out << "/tail_curve.csv\n";
  return 0;
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
  CLI::App app{"SSIM-constrained adversarial attack workbench"};
  app.require_subcommand(1);

  TrainArgs ta;
  AttackArgs aa;
  ReportArgs ra;
  uint64_t selftest_seed = 20240229;

  CLI::App* train_cmd = app.add_subcommand("train", "train a classifier and write a checkpoint");
  train_cmd->set_config("--config");
  train_cmd->add_option("--images", ta.images, "IDX image file")->required();
  train_cmd->add_option("--labels", ta.labels, "IDX label file")->required();
  train_cmd->add_option("--test-images", ta.test_images, "IDX images for a held-out accuracy check");
  train_cmd->add_option("--test-labels", ta.test_labels, "IDX labels for the held-out check");
  train_cmd->add_option("--out", ta.out, "output directory");
  train_cmd->add_option("--seed", ta.seed, "RNG seed");
  train_cmd->add_option("--arch", ta.arch, "model preset")
      ->check(CLI::IsMember({"desk", "large"}));
  train_cmd->add_option("--classes", ta.classes, "label count")->check(CLI::PositiveNumber);
  train_cmd->add_option("--limit", ta.limit, "train on the first n images only");
  train_cmd->add_option("--test-limit", ta.test_limit, "evaluate on the first n test images");
  train_cmd->add_option("--epochs", ta.epochs)->check(CLI::PositiveNumber);
  train_cmd->add_option("--batch", ta.batch_size)->check(CLI::PositiveNumber);
  train_cmd->add_option("--lr", ta.lr, "SGD learning rate");
  train_cmd->add_option("--momentum", ta.momentum);
  train_cmd->add_flag("--adv-mix,!--no-adv-mix", ta.adv_mix,
                      "mix PGD adversarial copies into every batch");
  train_cmd->add_option("--epsilon", ta.epsilon, "adversarial-mix PGD budget")
      ->check(CLI::Range(0.0, 1.0));
  train_cmd->add_option("--pgd-steps", ta.pgd_steps)->check(CLI::PositiveNumber);
  train_cmd->add_flag("--verbose", ta.verbose, "per-epoch loss on stderr");

  CLI::App* attack_cmd = app.add_subcommand("attack", "run attacks and emit CSV reports");
  attack_cmd->set_config("--config");
  attack_cmd->add_option("--model", aa.model, "checkpoint path")->required();
  attack_cmd->add_option("--images", aa.images, "IDX image file")->required();
  attack_cmd->add_option("--labels", aa.labels, "IDX label file")->required();
  attack_cmd->add_option("--out", aa.out, "output directory");
  attack_cmd->add_option("--seed", aa.seed, "RNG seed");
  attack_cmd->add_option("--attacks", aa.attacks,
                         "comma list of pgd, pgd-ssim, enet, ssim, ssim-e");
  attack_cmd->add_option("--limit", aa.limit, "attack the first n eligible images");
  attack_cmd->add_option("--threads", aa.threads, "worker threads (0 = all cores)");
  attack_cmd->add_option("--epsilon", aa.epsilon, "PGD budget")->check(CLI::Range(0.0, 1.0));
  attack_cmd->add_option("--pgd-steps", aa.pgd_steps)->check(CLI::PositiveNumber);
  attack_cmd->add_option("--pgd-loss", aa.pgd_loss)
      ->check(CLI::IsMember({"xent", "cw-margin"}));
  attack_cmd->add_option("--iters", aa.iters, "solver iterations per search round")
      ->check(CLI::PositiveNumber);
  attack_cmd->add_option("--search-steps", aa.search_steps, "binary search rounds over c")
      ->check(CLI::PositiveNumber);
  attack_cmd->add_option("--lr0", aa.lr0, "initial solver learning rate");
  attack_cmd->add_option("--beta", aa.beta, "elastic-net L1 weight");
  attack_cmd->add_option("--zeta1", aa.zeta1, "mean-term constraint threshold")
      ->check(CLI::Range(0.0, 1.0));
  attack_cmd->add_option("--zeta2", aa.zeta2, "structure-term constraint threshold")
      ->check(CLI::Range(0.0, 1.0));
  attack_cmd->add_option("--dual-lr", aa.dual_lr, "dual Adam learning rate");
  attack_cmd->add_option("--exhibits", aa.exhibits,
                         "dump the k lowest-SSIM successes per attack (0 = off)");

  CLI::App* report_cmd =
      app.add_subcommand("report", "recompute tail curves and summaries from outcomes.csv");
  report_cmd->set_config("--config");
  report_cmd->add_option("--outcomes", ra.outcomes, "outcomes.csv path")->required();
  report_cmd->add_option("--out", ra.out, "output directory");

  CLI::App* selftest_cmd = app.add_subcommand("selftest", "run the invariant suites");
  selftest_cmd->set_config("--config");
  selftest_cmd->add_option("--seed", selftest_seed, "RNG seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\nrun with --help for usage\n";
    return 2;
  }

  try {
    if (train_cmd->parsed()) return do_train(ta);
    if (attack_cmd->parsed()) return do_attack(aa);
    if (report_cmd->parsed()) return do_report(ra);
    if (selftest_cmd->parsed()) return selftest::run_selftest(selftest_seed, std::cout);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace ssimadv
