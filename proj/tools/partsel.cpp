// Copyright 2026 The partsel Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "partsel/partsel.hpp"

namespace {

using namespace partsel;

constexpr int kExitUsage = 2;
constexpr int kExitData = 3;
constexpr std::uint64_t kDefaultSeed = 42;

struct UsageError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

data::Format resolve_format(const std::optional<std::string>& flag,
                            const std::string& path) {
  if (flag) {
    if (*flag == "user_lines") return data::Format::kUserLines;
    if (*flag == "csv" || *flag == "user_item_csv")
      return data::Format::kUserItemCsv;
    throw UsageError("unknown format: " + *flag);
  }
  return std::filesystem::path(path).extension() == ".csv"
             ? data::Format::kUserItemCsv
             : data::Format::kUserLines;
}

// Recovers rho such that the (rho, delta_cdp) guarantee converts to exactly
// (epsilon, delta_dp); delta_dp is strictly increasing in rho at fixed
// epsilon, so monotone bisection applies.
double zcdp_rho_for_dp(double delta_cdp, double epsilon, double delta_dp) {
  if (!(delta_dp > delta_cdp))
    throw accounting::InfeasibleError(
        "zcdp equivalence: delta_dp must exceed the pinned delta_cdp");
  const auto converted = [&](double rho) {
    return accounting::zcdp_to_dp({rho, delta_cdp}, epsilon).first.delta_dp;
  };
  double hi = 1.0;
  while (converted(hi) < delta_dp) {
    hi *= 2.0;
    if (hi > 1e8)
      throw accounting::InfeasibleError(
          "zcdp equivalence: no rho below 1e8 reaches the given delta_dp");
  }
  double lo = 1e-12;
  while (hi - lo > 1e-10 * hi) {
    const double mid = 0.5 * (lo + hi);
    (converted(mid) >= delta_dp ? hi : lo) = mid;
  }
  return 0.5 * (lo + hi);
}

struct RunOptions {
  std::string mechanism;
  std::string data_path;
  std::optional<std::string> format;
  bool csv_header = false;
  std::optional<double> rho, delta, eps, delta_dp;
  MechanismConfig cfg;
  bool entropy = false;
  bool experimental = false;
  bool gw_uniform_truncation = false;
  bool dpsu_proportional = false;
  std::optional<double> buffer;
  std::optional<double> zcdp_delta_pin;
  std::string out_path;
  std::string items_out;
};

bool is_zcdp_mechanism(const std::string& mech) {
  return mech == "wgauss" || mech == "sips" || mech == "dpsu" ||
         mech == "idpsu";
}

void validate_parameter_namespaces(const RunOptions& opt) {
  if (is_zcdp_mechanism(opt.mechanism)) {
    if (opt.eps || opt.delta_dp)
      throw UsageError(opt.mechanism +
                       " takes --rho/--delta; refusing the --eps/--delta-dp "
                       "flags rather than converting");
    if (!opt.rho || !opt.delta)
      throw UsageError(opt.mechanism + " requires --rho and --delta");
  } else if (opt.mechanism == "gw") {
    if (opt.rho || opt.delta)
      throw UsageError(
          "gw takes --eps/--delta-dp; refusing the --rho/--delta flags "
          "rather than converting");
    if (!opt.eps || !opt.delta_dp)
      throw UsageError("gw requires --eps and --delta-dp");
  } else {
    throw UsageError("unknown mechanism: " + opt.mechanism);
  }
  if (opt.mechanism == "idpsu" && !opt.experimental)
    throw UsageError("idpsu is experimental; pass --experimental to run it");
}

report::RunReport run_mechanism(const Dataset& d, const RunOptions& opt,
                                ReleaseResult* release_out = nullptr) {
  MechanismConfig cfg = opt.cfg;
  cfg.threshold_buffer = opt.buffer;
  cfg.gw_frequency_truncation = !opt.gw_uniform_truncation;
  cfg.dpsu_allocation = opt.dpsu_proportional ? PolicyAllocation::kProportional
                                              : PolicyAllocation::kWaterFill;
  if (opt.mechanism != "sips" && opt.mechanism != "idpsu") cfg.iterations = 1;

  report::RunReport rep;
  rep.mechanism = opt.mechanism;
  rep.dataset = opt.data_path;
  rep.delta0 = cfg.delta0;
  rep.iterations = cfg.iterations;
  rep.ratio = cfg.ratio;
  rep.seed = cfg.seed;
  rep.workers = engine::resolve_workers(cfg.workers);

  ReleaseResult result;
  if (is_zcdp_mechanism(opt.mechanism)) {
    const PrivacyBudget budget{*opt.rho, *opt.delta};
    rep.rho = budget.rho;
    rep.delta = budget.delta;
    for (const std::string& warning :
         mechanisms::config_warnings(d, budget, cfg))
      std::cerr << "warning: " << warning << "\n";
    if (opt.mechanism == "wgauss") {
      result = mechanisms::weighted_gaussian(d, budget, cfg);
    } else if (opt.mechanism == "sips") {
      result = mechanisms::dp_sips(d, budget, cfg).first;
    } else if (opt.mechanism == "dpsu") {
      result = mechanisms::dpsu_policy_gaussian(d, budget, cfg);
    } else {
      result = mechanisms::experimental::iterated_dpsu(d, budget, cfg).first;
    }
  } else {
    const ApproxDpParams dp{*opt.eps, *opt.delta_dp};
    rep.epsilon = dp.epsilon;
    rep.delta_dp = dp.delta_dp;
    if (opt.zcdp_delta_pin) {
      rep.zcdp_delta = *opt.zcdp_delta_pin;
      rep.zcdp_rho = zcdp_rho_for_dp(*opt.zcdp_delta_pin, dp.epsilon,
                                     dp.delta_dp);
    }
    result = mechanisms::gw_greedy(d, dp, cfg);
  }

  rep.partitions_released = static_cast<std::int64_t>(result.released.size());
  rep.elapsed_ms = result.elapsed_ms;
  rep.per_iteration_counts = result.per_iteration_counts;
  rep.engine_stages = result.engine_stages;
  if (release_out) *release_out = std::move(result);
  return rep;
}

void write_text(const std::string& path, const std::string& text) {
  if (path.empty()) {
    std::cout << text;
    return;
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open for writing: " + path);
  out << text;
  if (!out) throw DataError("write failed: " + path);
}

int cmd_run(const RunOptions& opt) {
  validate_parameter_namespaces(opt);
  const Dataset d = data::load_dataset(
      opt.data_path, resolve_format(opt.format, opt.data_path), opt.csv_header);
  ReleaseResult release;
  const report::RunReport rep = run_mechanism(d, opt, &release);
  write_text(opt.out_path, report::to_json(rep) + "\n");
  if (!opt.items_out.empty()) {
    std::string lines;
    for (ItemId id : release.released) {
      lines += d.token(id);
      lines.push_back('\n');
    }
    write_text(opt.items_out, lines);
  }
  return 0;
}

struct GenerateOptions {
  data::SyntheticSpec spec;
  std::string out_path;
  bool entropy = false;
};

int cmd_generate(const GenerateOptions& opt) {
  data::generate_synthetic_file(opt.spec, opt.out_path);
  return 0;
}

struct ConvertOptions {
  double rho = 0.0;
  double delta_cdp = 0.0;
  std::vector<double> eps;
  std::vector<double> target_delta_dp;
};

int cmd_convert(const ConvertOptions& opt) {
  if (opt.eps.empty() == opt.target_delta_dp.empty())
    throw UsageError(
        "convert needs exactly one direction: --eps (forward) or "
        "--target-delta-dp (inverse)");
  std::printf("rho delta_cdp epsilon delta_dp alpha\n");
  const PrivacyBudget budget{opt.rho, opt.delta_cdp};
  const auto print_row = [&](double eps) {
    const auto [dp, point] = accounting::zcdp_to_dp(budget, eps);
    std::printf("%g %g %g %.2e %.3f\n", budget.rho, budget.delta, eps,
                dp.delta_dp, point.alpha);
  };
  for (double eps : opt.eps) print_row(eps);
  for (double target : opt.target_delta_dp)
    print_row(accounting::dp_epsilon_for_delta(budget, target));
  return 0;
}

struct SweepOptions {
  RunOptions run;
  std::vector<std::string> axis;
  std::string values;
  int reps = 1;
  std::string out_path;
};

std::vector<double> parse_values(const std::string& csv) {
  std::vector<double> out;
  std::size_t pos = 0;
  while (pos < csv.size()) {
    std::size_t next = csv.find(',', pos);
    if (next == std::string::npos) next = csv.size();
    out.push_back(std::stod(csv.substr(pos, next - pos)));
    pos = next + 1;
  }
  if (out.empty()) throw UsageError("--values is empty");
  return out;
}

int cmd_sweep(const SweepOptions& opt) {
  if (opt.axis.size() != 1)
    throw UsageError("exactly one swept axis is required");
  const std::string axis = opt.axis[0];
  const bool zcdp = is_zcdp_mechanism(opt.run.mechanism);
  const bool axis_known =
      axis == "rho" || axis == "eps" || axis == "delta" || axis == "delta0" ||
      axis == "ratio" || axis == "iterations" || axis == "workers" ||
      axis == "users";
  if (!axis_known) throw UsageError("unknown sweep axis: " + axis);
  if (axis == "rho" && !zcdp)
    throw UsageError("axis rho applies to the zCDP mechanisms only");
  if (axis == "eps" && zcdp)
    throw UsageError("axis eps applies to gw only");
  if ((axis == "iterations" || axis == "ratio") && opt.run.mechanism != "sips" &&
      opt.run.mechanism != "idpsu")
    throw UsageError("axis " + axis + " applies to the iterated mechanisms");
  validate_parameter_namespaces(opt.run);
  if (opt.reps < 1) throw UsageError("--reps must be >= 1");

  const std::vector<double> values = parse_values(opt.values);
  const Dataset full = data::load_dataset(
      opt.run.data_path, resolve_format(opt.run.format, opt.run.data_path),
      opt.run.csv_header);

  std::string out = "sweep_axis,sweep_value,rep," + report::csv_header() + "\n";
  for (double value : values) {
    RunOptions point = opt.run;
    Dataset prefix;
    const Dataset* dataset = &full;
    if (axis == "rho") point.rho = value;
    else if (axis == "eps") point.eps = value;
    else if (axis == "delta") (zcdp ? point.delta : point.delta_dp) = value;
    else if (axis == "delta0") point.cfg.delta0 = static_cast<int>(value);
    else if (axis == "ratio") point.cfg.ratio = value;
    else if (axis == "iterations") point.cfg.iterations = static_cast<int>(value);
    else if (axis == "workers") point.cfg.workers = static_cast<int>(value);
    else {  // users: prefix of the dataset
      prefix = data::prefix_dataset(full, static_cast<std::size_t>(value));
      dataset = &prefix;
    }
    for (int rep = 0; rep < opt.reps; ++rep) {
      point.cfg.seed = opt.run.cfg.seed + static_cast<std::uint64_t>(rep);
      const report::RunReport r = run_mechanism(*dataset, point);
      out += csvio::encode_field(axis) + "," +
             report::detail::format_double(value) + "," +
             std::to_string(rep) + "," + report::to_csv_row(r) + "\n";
    }
  }
  write_text(opt.out_path, out);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Differentially private partition selection toolkit"};
  app.require_subcommand(1);

  RunOptions run;
  auto* run_cmd =
      app.add_subcommand("run", "Run one mechanism on a dataset");
  run_cmd->add_option("--mech", run.mechanism,
                      "Mechanism: wgauss | sips | dpsu | gw | idpsu")
      ->required();
  run_cmd->add_option("--data", run.data_path, "Dataset path")->required();
  run_cmd->add_option_function<std::string>(
      "--format", [&run](const std::string& v) { run.format = v; },
      "Dataset format: user_lines | csv (default: by extension)");
  run_cmd->add_flag("--csv-header", run.csv_header,
                    "First CSV row is a header");
  run_cmd->add_option_function<double>(
      "--rho", [&run](double v) { run.rho = v; }, "zCDP budget rho");
  run_cmd->add_option_function<double>(
      "--delta", [&run](double v) { run.delta = v; }, "zCDP budget delta");
  run_cmd->add_option_function<double>(
      "--eps", [&run](double v) { run.eps = v; }, "DP epsilon (gw)");
  run_cmd->add_option_function<double>(
      "--delta-dp", [&run](double v) { run.delta_dp = v; },
      "DP delta (gw)");
  run_cmd->add_option("--delta0", run.cfg.delta0,
                      "Max distinct items per user");
  run_cmd->add_option("--iters", run.cfg.iterations, "Iterations (sips)");
  run_cmd->add_option("--ratio", run.cfg.ratio,
                      "Budget allocation factor (sips)");
  run_cmd->add_option("--seed", run.cfg.seed, "Root RNG seed");
  run_cmd->add_flag("--entropy", run.entropy,
                    "Draw the seed from system entropy instead of the fixed default");
  run_cmd->add_option("--workers", run.cfg.workers,
                      "Worker threads (0 = hardware default)");
  run_cmd->add_option_function<double>(
      "--buffer", [&run](double v) { run.buffer = v; },
      "Override the buffered-threshold margin");
  run_cmd->add_flag("--gw-uniform-truncation", run.gw_uniform_truncation,
                    "Truncate gw candidates uniformly instead of by frequency");
  run_cmd->add_flag("--dpsu-proportional", run.dpsu_proportional,
                    "Use the gap-proportional dpsu allocation");
  run_cmd->add_option_function<double>(
      "--zcdp-delta", [&run](double v) { run.zcdp_delta_pin = v; },
      "Pin delta_cdp and echo the zCDP-equivalent budget (gw)");
  run_cmd->add_flag("--experimental", run.experimental,
                    "Allow experimental mechanisms");
  run_cmd->add_option("--out", run.out_path, "Report file (default: stdout)");
  run_cmd->add_option("--items-out", run.items_out,
                      "Write released items, one per line");

  GenerateOptions gen;
  auto* gen_cmd = app.add_subcommand("generate", "Generate a synthetic dataset");
  gen_cmd->add_option("--users", gen.spec.num_users, "Number of users")
      ->required();
  gen_cmd->add_option("--seed", gen.spec.seed, "Generator seed");
  gen_cmd->add_option("--scale", gen.spec.pareto_scale,
                      "Pareto scale of the list lengths");
  gen_cmd->add_option("--shape", gen.spec.pareto_shape,
                      "Pareto shape of the list lengths");
  gen_cmd->add_option("--zeta", gen.spec.zeta_param,
                      "Zeta parameter of the item draws");
  gen_cmd->add_flag("--entropy", gen.entropy,
                    "Draw the seed from system entropy");
  gen_cmd->add_option("--out", gen.out_path, "Output path")->required();

  ConvertOptions conv;
  auto* conv_cmd = app.add_subcommand(
      "convert", "Convert between approximate zCDP and approximate DP");
  conv_cmd->add_option("--rho", conv.rho, "zCDP rho")->required();
  conv_cmd->add_option("--delta-cdp", conv.delta_cdp, "zCDP delta")->required();
  conv_cmd->add_option("--eps", conv.eps,
                       "Epsilon value(s): forward conversion to delta_dp");
  conv_cmd->add_option("--target-delta-dp", conv.target_delta_dp,
                       "Target delta_dp value(s): inverse solve for epsilon");

  SweepOptions sweep;
  auto* sweep_cmd =
      app.add_subcommand("sweep", "Sweep one axis, emitting CSV run reports");
  sweep_cmd->add_option("--mech", sweep.run.mechanism, "Mechanism")->required();
  sweep_cmd->add_option("--data", sweep.run.data_path, "Dataset path")
      ->required();
  sweep_cmd->add_option_function<std::string>(
      "--format", [&sweep](const std::string& v) { sweep.run.format = v; },
      "Dataset format");
  sweep_cmd->add_flag("--csv-header", sweep.run.csv_header,
                      "First CSV row is a header");
  sweep_cmd
      ->add_option("--axis", sweep.axis,
                   "Swept axis: rho | eps | delta | delta0 | ratio | "
                   "iterations | workers | users")
      ->required();
  sweep_cmd->add_option("--values", sweep.values, "Comma-separated axis values")
      ->required();
  sweep_cmd->add_option("--reps", sweep.reps, "Seed repetitions per value");
  sweep_cmd->add_option_function<double>(
      "--rho", [&sweep](double v) { sweep.run.rho = v; }, "zCDP budget rho");
  sweep_cmd->add_option_function<double>(
      "--delta", [&sweep](double v) { sweep.run.delta = v; },
      "zCDP budget delta");
  sweep_cmd->add_option_function<double>(
      "--eps", [&sweep](double v) { sweep.run.eps = v; }, "DP epsilon (gw)");
  sweep_cmd->add_option_function<double>(
      "--delta-dp", [&sweep](double v) { sweep.run.delta_dp = v; },
      "DP delta (gw)");
  sweep_cmd->add_option("--delta0", sweep.run.cfg.delta0,
                        "Max distinct items per user");
  sweep_cmd->add_option("--iters", sweep.run.cfg.iterations, "Iterations");
  sweep_cmd->add_option("--ratio", sweep.run.cfg.ratio,
                        "Budget allocation factor");
  sweep_cmd->add_option("--seed", sweep.run.cfg.seed, "Base RNG seed");
  sweep_cmd->add_option("--workers", sweep.run.cfg.workers, "Worker threads");
  sweep_cmd->add_flag("--experimental", sweep.run.experimental,
                      "Allow experimental mechanisms");
  sweep_cmd->add_option("--out", sweep.out_path, "CSV file (default: stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (app.got_subcommand(run_cmd)) {
      run.cfg.seed = run.entropy ? std::random_device{}()
                     : run_cmd->count("--seed") ? run.cfg.seed
                                                : kDefaultSeed;
      return cmd_run(run);
    }
    if (app.got_subcommand(gen_cmd)) {
      gen.spec.seed = gen.entropy ? std::random_device{}()
                      : gen_cmd->count("--seed") ? gen.spec.seed
                                                 : kDefaultSeed;
      return cmd_generate(gen);
    }
    if (app.got_subcommand(conv_cmd)) return cmd_convert(conv);
    if (app.got_subcommand(sweep_cmd)) {
      if (sweep_cmd->count("--seed") == 0) sweep.run.cfg.seed = kDefaultSeed;
      return cmd_sweep(sweep);
    }
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const DataError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  }
  return kExitUsage;
}
