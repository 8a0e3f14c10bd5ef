// Command-line front end for the experiment runner.
//
//   spm_cli solve    --config prop4.cfg [--out DIR] [--seed N]
//   spm_cli train    --config exp.cfg [--out DIR] [--seed N] [--parallel-arms]
//   spm_cli evaluate --config exp.cfg [--out DIR] [--seed N]
//   spm_cli compare  DIR DIR... [--out DIR]
//
// Exit codes: 0 success, 2 invalid configuration or input, 3 size budget exceeded.

#include <CLI11.hpp>
#include <iostream>

#include "spm/exp/experiment.hpp"

namespace {

void print_summary(const spm::exp::RunReport& rep) {
  std::cout << "arm,type,kind,value,ci_low,ci_high,oracle_ref,ratio,status\n";
  for (const auto& r : rep.rows) {
    using spm::exp::fmt;
    std::cout << r.arm << ',' << r.type << ',' << r.kind << ',' << fmt(r.value) << ',' << fmt(r.ci_low) << ','
              << fmt(r.ci_high) << ',' << fmt(r.oracle_ref) << ',' << fmt(r.ratio) << ',' << r.status << '\n';
  }
  for (const auto& v : rep.violations) std::cout << "monotonicity violation: " << v << '\n';
  std::cout << "artifacts: " << rep.dir.string() << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sequential price mechanism experiments"};
  app.require_subcommand(1);

  std::string config;
  std::optional<std::string> out;
  std::optional<std::uint64_t> seed;
  bool parallel = false;
  std::vector<std::string> dirs;

  auto add_run_flags = [&](CLI::App* cmd, bool parallel_flag) {
    cmd->add_option("--config", config, "experiment configuration file")->required();
    cmd->add_option("--out", out, "artifact directory (overrides the config)");
    cmd->add_option("--seed", seed, "master seed (overrides the config)");
    if (parallel_flag) cmd->add_flag("--parallel-arms", parallel, "run arms concurrently");
  };
  auto* solve = app.add_subcommand("solve", "exact oracle and baseline arms only");
  add_run_flags(solve, true);
  auto* train = app.add_subcommand("train", "run every arm, training learned ones");
  add_run_flags(train, true);
  auto* evaluate = app.add_subcommand("evaluate", "re-evaluate trained parameters");
  add_run_flags(evaluate, false);
  auto* cmp = app.add_subcommand("compare", "merge summaries of artifact directories");
  cmp->add_option("dirs", dirs, "artifact directories")->required();
  cmp->add_option("--out", out, "write comparison.csv here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (cmp->parsed()) {
      std::vector<std::filesystem::path> paths(dirs.begin(), dirs.end());
      const auto c = spm::exp::compare(paths);
      const std::string csv = spm::exp::comparison_csv(c);
      std::cout << csv;
      for (const auto& v : c.violations) std::cout << "monotonicity violation: " << v << '\n';
      if (out) {
        std::filesystem::create_directories(*out);
        std::ofstream(std::filesystem::path(*out) / "comparison.csv") << csv;
      }
      return 0;
    }
    const auto cfg = spm::exp::load_config(config);
    spm::exp::RunOptions opt;
    opt.out = out;
    opt.seed = seed;
    opt.parallel_arms = parallel;
    opt.log = &std::cerr;
    if (evaluate->parsed()) {
      opt.verb = spm::exp::Verb::evaluate;
      std::cout << "artifacts: " << spm::exp::evaluate_experiment(cfg, opt).string() << '\n';
      return 0;
    }
    opt.verb = solve->parsed() ? spm::exp::Verb::solve : spm::exp::Verb::train;
    const auto rep = spm::exp::run_experiment(cfg, opt);
    print_summary(rep);
    return rep.size_errors ? 3 : 0;
  } catch (const spm::SizeError& e) {
    std::cerr << "size error: " << e.what() << '\n';
    return 3;
  } catch (const spm::ValidationError& e) {
    std::cerr << "invalid configuration: " << e.what() << '\n';
    return 2;
  } catch (const spm::InputError& e) {
    std::cerr << "invalid input: " << e.what() << '\n';
    return 2;
  } catch (const spm::UnsupportedError& e) {
    std::cerr << "unsupported: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
