// ltc: experiment front-end for the long-tailed contrastive lab.
//
// Subcommands: train, sweep-views, compare-losses, sweep-alpha, diagnose,
// export-embeddings. Every command is non-interactive, writes CSV outputs
// whose first line records the config hash and seed, and reproduces data
// rows bitwise when re-run with the same config and seed. Exit codes:
// 0 success, 1 runtime failure, 2 configuration error.

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ltc/config.hpp"
#include "ltc/io.hpp"
#include "ltc/trainer.hpp"

namespace fs = std::filesystem;

namespace {

struct CommonArgs {
  std::string config_path;
  std::vector<std::string> overrides;
  std::string out_override;
  std::string seed_override;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("-c,--config", args.config_path, "Experiment config file");
  cmd->add_option("--set", args.overrides,
                  "Override a config key, e.g. --set train.alpha=0.8");
  cmd->add_option("-o,--out", args.out_override, "Output directory");
  cmd->add_option("--seed", args.seed_override, "Override train.seed");
}

ltc::ExperimentConfig load_config(const CommonArgs& args) {
  std::vector<std::string> overrides = args.overrides;
  if (!args.seed_override.empty())
    overrides.push_back("train.seed=" + args.seed_override);
  if (!args.out_override.empty())
    overrides.push_back("run.output_dir=" + args.out_override);
  if (args.config_path.empty())
    return ltc::parse_experiment_text("", overrides);
  return ltc::parse_experiment_file(args.config_path, overrides);
}

fs::path resolve_output_dir(const ltc::ExperimentConfig& cfg) {
  fs::path dir(cfg.output_dir);
  if (dir.is_relative()) {
    if (const char* root = std::getenv("LTC_OUTPUT_ROOT"))
      dir = fs::path(root) / dir;
  }
  fs::create_directories(dir);
  return dir;
}

std::string now_string() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  char buf[64];
  std::strftime(buf, sizeof(buf), "%Y-%m-%d %H:%M:%S", std::localtime(&t));
  return buf;
}

class RunLog {
 public:
  explicit RunLog(const fs::path& dir) : out_(dir / "run.log", std::ios::app) {}
  void line(const std::string& msg) {
    out_ << now_string() << "  " << msg << '\n';
    out_.flush();
  }

 private:
  std::ofstream out_;
};

struct RunArtifacts {
  ltc::TrainResult result;
  std::uint64_t hash = 0;
};

// Trains one configuration against an already generated dataset and writes
// the full artifact set into `dir`.
RunArtifacts run_training(const ltc::ExperimentConfig& cfg,
                          const ltc::LongTailedDataset& ds, const fs::path& dir) {
  fs::create_directories(dir);
  const std::uint64_t hash = ltc::config_hash(cfg);
  RunLog log(dir);
  log.line("train start: kind=" + ltc::to_string(cfg.train.loss_kind) +
           " seed=" + std::to_string(cfg.train.seed));

  RunArtifacts art{ltc::train(cfg.train, ds), hash};
  ltc::write_metrics_csv((dir / "metrics.csv").string(), art.result.trace, hash,
                         cfg.train.seed);
  ltc::write_conflicts_csv((dir / "conflicts.csv").string(), art.result.trace, ds,
                           hash, cfg.train.seed);
  ltc::save_checkpoint(art.result.model, (dir / "checkpoint.bin").string(), hash,
                       cfg.train.seed);
  ltc::write_embeddings_csv((dir / "embeddings.csv").string(), art.result.model,
                            ds.test_x, ds.test_y, hash, cfg.train.seed);
  log.line("train done");
  return art;
}

struct SummaryRow {
  std::string key;
  std::uint64_t seed = 0;
  ltc::GroupAccuracy groups;
  double mean_conflict = -1.0;  // negative = not reported
};

void write_summary(const fs::path& path, const std::string& key_column,
                   const std::vector<SummaryRow>& rows, std::uint64_t hash,
                   bool with_conflict) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << ltc::output_header(hash, 0) << '\n';
  out << key_column << ",seed,all,many,medium,few";
  if (with_conflict) out << ",mean_conflict_ratio";
  out << '\n';
  auto opt = [](const std::optional<double>& v) {
    return v ? ltc::csv_double(*v) : std::string{};
  };
  for (const auto& r : rows) {
    out << r.key << ',' << r.seed << ',' << ltc::csv_double(r.groups.all) << ','
        << opt(r.groups.many) << ',' << opt(r.groups.medium) << ','
        << opt(r.groups.few);
    if (with_conflict) out << ',' << ltc::csv_double(std::max(0.0, r.mean_conflict));
    out << '\n';
  }
}

double mean_final_conflict(const ltc::MetricTrace& trace) {
  if (trace.rows.empty()) return 0.0;
  const auto& report = trace.rows.back().conflicts;
  if (report.per_class.empty()) return 0.0;
  double sum = 0.0;
  for (const auto& [cls, st] : report.per_class) sum += st.conflict_ratio;
  return sum / static_cast<double>(report.per_class.size());
}

int cmd_train(const CommonArgs& args) {
  const auto cfg = load_config(args);
  const auto dir = resolve_output_dir(cfg);
  const auto ds = ltc::sample_dataset(cfg.dataset);
  run_training(cfg, ds, dir);
  std::cout << "wrote " << (dir / "metrics.csv").string() << '\n';
  return 0;
}

int cmd_sweep_views(const CommonArgs& args, const std::vector<int>& views_in) {
  if (views_in.empty()) throw ltc::ConfigError("sweep-views needs a non-empty views list");
  std::vector<int> views = views_in;
  std::sort(views.begin(), views.end());
  const auto last = std::unique(views.begin(), views.end());
  if (last != views.end()) {
    std::cerr << "warning: duplicate view counts dropped\n";
    views.erase(last, views.end());
  }
  for (int v : views)
    if (v < 1) throw ltc::ConfigError("view counts must be positive");

  const auto base = load_config(args);
  const auto dir = resolve_output_dir(base);
  const auto ds = ltc::sample_dataset(base.dataset);
  const std::uint64_t base_hash = ltc::config_hash(base);

  std::vector<SummaryRow> rows;
  for (int v : views) {
    for (std::uint64_t seed : base.seeds) {
      ltc::ExperimentConfig member = base;
      member.train.view_mode = ltc::ViewMode::uniform;
      member.train.uniform_views = v;
      member.train.seed = seed;
      if (static_cast<std::size_t>(v) > member.train.view_policy.noise_scales.size())
        throw ltc::ConfigError(
            "view count " + std::to_string(v) +
            " exceeds configured views.noise_scales entries");
      const fs::path sub =
          dir / ("views_v" + std::to_string(v) + "_seed" + std::to_string(seed));
      const auto art = run_training(member, ds, sub);
      rows.push_back({std::to_string(v), seed,
                      art.result.trace.rows.back().test_groups, -1.0});
    }
  }
  write_summary(dir / "sweep_views.csv", "views", rows, base_hash, false);
  std::cout << "wrote " << (dir / "sweep_views.csv").string() << '\n';
  return 0;
}

int cmd_compare_losses(const CommonArgs& args, const std::vector<std::string>& kinds_in) {
  if (kinds_in.empty())
    throw ltc::ConfigError("compare-losses needs a non-empty kinds list");
  std::vector<ltc::TrainLossKind> kinds;
  for (const auto& name : kinds_in) {
    try {
      kinds.push_back(ltc::parse_loss_kind(name));
    } catch (const std::exception& e) {
      throw ltc::ConfigError(e.what());
    }
  }

  const auto base = load_config(args);
  const auto dir = resolve_output_dir(base);
  const auto ds = ltc::sample_dataset(base.dataset);
  const std::uint64_t base_hash = ltc::config_hash(base);

  std::vector<SummaryRow> rows;
  for (auto kind : kinds) {
    for (std::uint64_t seed : base.seeds) {
      ltc::ExperimentConfig member = base;
      member.train.loss_kind = kind;
      member.train.seed = seed;
      std::string kind_tag = ltc::to_string(kind);
      std::replace(kind_tag.begin(), kind_tag.end(), '+', '_');
      const fs::path sub = dir / ("kind_" + kind_tag + "_seed" + std::to_string(seed));
      const auto art = run_training(member, ds, sub);
      rows.push_back({ltc::to_string(kind), seed,
                      art.result.trace.rows.back().test_groups,
                      mean_final_conflict(art.result.trace)});
    }
  }
  write_summary(dir / "compare_losses.csv", "kind", rows, base_hash, true);
  std::cout << "wrote " << (dir / "compare_losses.csv").string() << '\n';
  return 0;
}

int cmd_sweep_alpha(const CommonArgs& args, const std::vector<double>& alphas_in) {
  if (alphas_in.empty())
    throw ltc::ConfigError("sweep-alpha needs a non-empty alphas list");
  std::vector<double> alphas = alphas_in;
  for (double a : alphas)
    if (a < 0.0) throw ltc::ConfigError("alpha values must be non-negative");
  std::sort(alphas.begin(), alphas.end());
  alphas.erase(std::unique(alphas.begin(), alphas.end()), alphas.end());

  const auto base = load_config(args);
  const auto dir = resolve_output_dir(base);
  const auto ds = ltc::sample_dataset(base.dataset);
  const std::uint64_t base_hash = ltc::config_hash(base);

  std::vector<SummaryRow> rows;
  for (double a : alphas) {
    for (std::uint64_t seed : base.seeds) {
      ltc::ExperimentConfig member = base;
      member.train.alpha = a;
      member.train.seed = seed;
      std::ostringstream tag;
      tag << "alpha_" << a << "_seed" << seed;
      const auto art = run_training(member, ds, dir / tag.str());
      rows.push_back({ltc::csv_double(a), seed,
                      art.result.trace.rows.back().test_groups, -1.0});
    }
  }
  write_summary(dir / "sweep_alpha.csv", "alpha", rows, base_hash, false);
  std::cout << "wrote " << (dir / "sweep_alpha.csv").string() << '\n';
  return 0;
}

int cmd_diagnose(const CommonArgs& args, const std::string& checkpoint_path,
                 int batches) {
  if (batches < 1) throw ltc::ConfigError("diagnose needs at least one batch");
  const auto cfg = load_config(args);
  const auto dir = resolve_output_dir(cfg);
  const auto loaded = ltc::load_checkpoint(checkpoint_path);
  const std::uint64_t hash = ltc::config_hash(cfg);
  if (loaded.config_hash != hash)
    throw std::runtime_error(
        "checkpoint/config hash mismatch: checkpoint was trained under a "
        "different configuration");

  const auto ds = ltc::sample_dataset(cfg.dataset);
  const auto report =
      ltc::diagnose_conflicts(loaded.model, ds, cfg.train, batches);

  std::vector<double> counts, ratios;
  for (const auto& [cls, st] : report.per_class) {
    counts.push_back(static_cast<double>(ds.class_counts[static_cast<std::size_t>(cls)]));
    ratios.push_back(st.conflict_ratio);
  }
  const double rho = counts.size() >= 2 ? ltc::spearman(counts, ratios) : 0.0;

  ltc::write_conflict_report_csv((dir / "conflicts.csv").string(), report, ds, rho,
                                 hash, loaded.seed);
  std::cout << "spearman(count, conflict_ratio) = " << rho << '\n'
            << "wrote " << (dir / "conflicts.csv").string() << '\n';
  return 0;
}

int cmd_export_embeddings(const CommonArgs& args, const std::string& checkpoint_path,
                          const std::string& split, const std::string& name) {
  const auto cfg = load_config(args);
  const auto dir = resolve_output_dir(cfg);
  const auto loaded = ltc::load_checkpoint(checkpoint_path);
  const std::uint64_t hash = ltc::config_hash(cfg);
  if (loaded.config_hash != hash)
    throw std::runtime_error(
        "checkpoint/config hash mismatch: checkpoint was trained under a "
        "different configuration");
  const auto ds = ltc::sample_dataset(cfg.dataset);
  const auto& xs = (split == "train") ? ds.train_x : ds.test_x;
  const auto& ys = (split == "train") ? ds.train_y : ds.test_y;
  ltc::write_embeddings_csv((dir / name).string(), loaded.model, xs, ys, hash,
                            loaded.seed);
  std::cout << "wrote " << (dir / name).string() << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Long-tailed contrastive learning lab"};
  app.require_subcommand(1);

  CommonArgs train_args;
  auto* train_cmd = app.add_subcommand("train", "Train one configuration");
  add_common(train_cmd, train_args);

  CommonArgs views_args;
  std::vector<int> views_list;
  auto* views_cmd =
      app.add_subcommand("sweep-views", "Train with several uniform view counts");
  add_common(views_cmd, views_args);
  views_cmd->add_option("--views", views_list, "View counts, e.g. --views 1 2 3 4")
      ->required()
      ->delimiter(',');

  CommonArgs kinds_args;
  std::vector<std::string> kinds_list;
  auto* kinds_cmd =
      app.add_subcommand("compare-losses", "Train several loss variants");
  add_common(kinds_cmd, kinds_args);
  kinds_cmd->add_option("--kinds", kinds_list, "Loss kinds, e.g. bs_only,bs+acl")
      ->required()
      ->delimiter(',');

  CommonArgs alpha_args;
  std::vector<double> alpha_list;
  auto* alpha_cmd = app.add_subcommand("sweep-alpha", "Sweep the contrastive weight");
  add_common(alpha_cmd, alpha_args);
  alpha_cmd->add_option("--alphas", alpha_list, "Alpha values, e.g. 0.2,0.5,0.8")
      ->required()
      ->delimiter(',');

  CommonArgs diag_args;
  std::string diag_checkpoint;
  int diag_batches = 0;
  auto* diag_cmd =
      app.add_subcommand("diagnose", "Conflict report for a trained checkpoint");
  add_common(diag_cmd, diag_args);
  diag_cmd->add_option("--checkpoint", diag_checkpoint, "Checkpoint path")->required();
  diag_cmd->add_option("--batches", diag_batches, "Number of batches to compose")
      ->required();

  CommonArgs exp_args;
  std::string exp_checkpoint;
  std::string exp_split = "test";
  std::string exp_name = "embeddings.csv";
  auto* exp_cmd =
      app.add_subcommand("export-embeddings", "Write embeddings of a split to CSV");
  add_common(exp_cmd, exp_args);
  exp_cmd->add_option("--checkpoint", exp_checkpoint, "Checkpoint path")->required();
  exp_cmd->add_option("--split", exp_split, "train or test")
      ->check(CLI::IsMember({"train", "test"}));
  exp_cmd->add_option("--name", exp_name, "Output file name");

  CLI11_PARSE(app, argc, argv);

  try {
    if (train_cmd->parsed()) return cmd_train(train_args);
    if (views_cmd->parsed()) return cmd_sweep_views(views_args, views_list);
    if (kinds_cmd->parsed()) return cmd_compare_losses(kinds_args, kinds_list);
    if (alpha_cmd->parsed()) return cmd_sweep_alpha(alpha_args, alpha_list);
    if (diag_cmd->parsed()) return cmd_diagnose(diag_args, diag_checkpoint, diag_batches);
    if (exp_cmd->parsed())
      return cmd_export_embeddings(exp_args, exp_checkpoint, exp_split, exp_name);
  } catch (const ltc::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
