// Command-line front end for the TCK_IM time-series cluster kernel pipeline.
//
// Exit codes: 0 success, 1 input/validation error, 2 infeasible request,
// 3 internal numerical failure.

#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "tck/dataset.hpp"
#include "tck/eval.hpp"
#include "tck/kernel.hpp"
#include "tck/mixture.hpp"
#include "tck/rng.hpp"
#include "tck/synth.hpp"

namespace {

struct RunConfig {
  std::string config_path;
  std::string mode = "IM";
  int q = 15;
  int ic_min = -1;  // -1: max(2, ceil(N/200))
  int ic_max = -1;  // -1: ic_min + 20
  double subsample_fraction = 0.8;
  int min_segment_length = 6;
  int min_attributes = 1;
  int max_iterations = 25;
  double tolerance = 1e-6;
  std::uint64_t seed = 0;
  int workers = 1;
  int dim = 3;
  std::string k_grid = "1,3,5,7,9,11,15,21";
  int positive_label = -1;
};

std::vector<int> parse_int_list(const std::string& text) {
  std::vector<int> out;
  std::stringstream ss(text);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    if (tok.empty()) continue;
    out.push_back(std::stoi(tok));
  }
  if (out.empty()) throw std::runtime_error("empty integer list: '" + text + "'");
  return out;
}

std::vector<double> parse_double_list(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    if (tok.empty()) continue;
    out.push_back(std::stod(tok));
  }
  if (out.empty()) throw std::runtime_error("empty list: '" + text + "'");
  return out;
}

tck::EnsembleConfig to_ensemble_config(const RunConfig& rc) {
  tck::EnsembleConfig cfg;
  cfg.mode = tck::kernel_mode_from_string(rc.mode);
  cfg.q_inits = rc.q;
  cfg.components_min = rc.ic_min;
  cfg.components_max = rc.ic_max;
  cfg.subsample_fraction = rc.subsample_fraction;
  cfg.min_segment_length = rc.min_segment_length;
  cfg.min_attributes = rc.min_attributes;
  cfg.stopping.max_iterations = rc.max_iterations;
  cfg.stopping.rel_tolerance = rc.tolerance;
  cfg.seed = rc.seed;
  cfg.workers = rc.workers;
  return cfg;
}

tck::PipelineOptions to_pipeline_options(const RunConfig& rc) {
  tck::PipelineOptions opt;
  opt.embedding_dim = rc.dim;
  opt.k_grid = parse_int_list(rc.k_grid);
  opt.positive_label = rc.positive_label;
  return opt;
}

// Flat `key = value` config file with # comments. Keys map 1:1 onto the
// subcommand's long option names; unknown keys are rejected and explicit
// command-line flags win over file values.
void apply_config(CLI::App* sub, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file '" + path + "'");
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r");
      if (b == std::string::npos) return std::string();
      return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
    };
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error(path + ":" + std::to_string(line_no) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key == "config") throw std::runtime_error("config files cannot nest");
    CLI::Option* opt = sub->get_option_no_throw("--" + key);
    if (opt == nullptr)
      throw std::runtime_error(path + ":" + std::to_string(line_no) + ": unknown key '" + key +
                               "'");
    if (opt->count() > 0) continue;
    opt->add_result(value);
    opt->run_callback();
  }
}

// Shared ensemble/pipeline flags.
void add_run_options(CLI::App* sub, RunConfig& rc) {
  sub->add_option("--config", rc.config_path, "flat key = value config file");
  sub->add_option("--mode", rc.mode, "kernel mode: IM, TCK, B or ZERO");
  sub->add_option("--q", rc.q, "initializations per component count (Q)");
  sub->add_option("--ic-min", rc.ic_min, "smallest component count (-1: max(2, ceil(N/200)))");
  sub->add_option("--ic-max", rc.ic_max, "largest component count (-1: ic-min + 20)");
  sub->add_option("--subsample-fraction", rc.subsample_fraction, "training subsample fraction");
  sub->add_option("--min-segment-length", rc.min_segment_length, "time segment floor");
  sub->add_option("--min-attributes", rc.min_attributes, "attribute subset floor");
  sub->add_option("--max-iterations", rc.max_iterations, "EM iteration cap per base model");
  sub->add_option("--tolerance", rc.tolerance, "EM relative objective tolerance");
  sub->add_option("--seed", rc.seed, "master RNG seed");
  sub->add_option("--workers", rc.workers, "worker threads for base-model training");
  sub->add_option("--d", rc.dim, "KPCA embedding dimension");
  sub->add_option("--k-grid", rc.k_grid, "comma-separated kNN candidate k values");
  sub->add_option("--positive-label", rc.positive_label, "positive class label (-1: minority)");
}

void print_report(const tck::EvalReport& report) {
  std::printf("%-12s %10s %10s\n", "metric", "mean", "se");
  std::printf("%-12s %10.4f %10.4f\n", "sensitivity", report.mean.sensitivity,
              report.stderr_.sensitivity);
  std::printf("%-12s %10.4f %10.4f\n", "specificity", report.mean.specificity,
              report.stderr_.specificity);
  std::printf("%-12s %10.4f %10.4f\n", "f1", report.mean.f1, report.stderr_.f1);
  std::printf("%-12s %10.4f %10.4f\n", "accuracy", report.mean.accuracy,
              report.stderr_.accuracy);
}

void log_base_models(const tck::TrainedKernel& trained) {
  for (size_t i = 0; i < trained.models.size(); ++i) {
    const auto& m = trained.models[i];
    std::fprintf(stderr, "model %3zu  q1=%-3d G=%-3d %s  iters=%d  objective=%.6g\n", i,
                 m.spec.q1, m.spec.n_components, m.ok ? "ok    " : "failed", m.iterations,
                 m.objective);
  }
  std::fprintf(stderr, "successful base models: %d / %zu\n", trained.successful_models(),
               trained.models.size());
}

int cmd_ingest(const std::string& events_path, int bins, double horizon,
               const std::string& out_path, double drop_above) {
  const auto events = tck::load_long_events(events_path);
  auto result = tck::ingest_long_format(events, bins, horizon);
  if (result.dropped_late_events > 0)
    std::cerr << "dropped " << result.dropped_late_events << " events at/after the horizon\n";
  tck::MtsDataset dataset = std::move(result.dataset);
  if (drop_above > 0.0) {
    auto [kept, dropped] = tck::drop_high_missing_variables(dataset, drop_above);
    for (const auto& name : dropped)
      std::cerr << "dropped variable '" << name << "' (missing rate above " << drop_above << ")\n";
    dataset = std::move(kept);
  }
  const auto [rates, overall] = tck::missing_rates(dataset);
  for (Eigen::Index i = 0; i < rates.size(); ++i)
    std::printf("%-24s missing rate %.4f\n", dataset.variable_names[i].c_str(), rates(i));
  std::printf("overall missing rate %.4f  (N=%ld V=%ld T=%ld)\n", overall,
              static_cast<long>(dataset.size()), static_cast<long>(dataset.n_variables()),
              static_cast<long>(dataset.length()));
  tck::save_dataset(dataset, out_path);
  return 0;
}

int cmd_inject(const std::string& data_path, const std::string& scheme, double rho,
               std::uint64_t seed, const std::string& out_path, const std::string& report_path) {
  const tck::MtsDataset dataset = tck::load_dataset(data_path);
  auto [injected, report] =
      scheme == "mnar" ? tck::inject_mnar_threshold(dataset, rho, seed)
                       : tck::inject_label_rate(dataset, rho, seed);
  bool on_target = true;
  for (size_t i = 0; i < report.realized_correlation.size(); ++i) {
    std::printf("variable %zu: sign %+d  E=%.4f  realized correlation %.4f\n", i + 1,
                report.signs[i], report.tuned_shift[i], report.realized_correlation[i]);
    on_target = on_target && std::abs(report.realized_correlation[i] - rho) <= 0.01;
  }
  std::printf("realized missing rate %.4f  clipped fraction %.4f\n", report.missing_rate,
              report.clipped_fraction);
  tck::save_dataset(injected, out_path);
  if (!report_path.empty()) tck::save_injection_report(report, report_path);
  if (!on_target) {
    std::cerr << "error: realized correlation missed the target by more than 0.01\n";
    return 3;
  }
  return 0;
}

int cmd_train(const std::string& data_path, const RunConfig& rc, const std::string& model_out,
              const std::string& gram_out) {
  const tck::MtsDataset dataset = tck::load_dataset(data_path);
  const auto [trained, gram] = tck::train_tck_im(dataset, to_ensemble_config(rc));
  log_base_models(trained);
  if (!model_out.empty()) tck::save_model(trained, model_out);
  if (!gram_out.empty()) tck::save_gram(gram, gram_out);
  return 0;
}

int cmd_evaluate(const std::string& data_path, const RunConfig& rc, const std::string& protocol,
                 int folds, double ratio, double test_fraction, int repeats,
                 const std::string& report_out) {
  const tck::MtsDataset dataset = tck::load_dataset(data_path);
  if (!dataset.has_labels()) throw std::runtime_error("dataset has no labels");
  const auto cfg = to_ensemble_config(rc);
  const auto opt = to_pipeline_options(rc);

  tck::EvalReport report;
  if (protocol == "kfold") {
    report = tck::evaluate_pipeline_kfold(dataset, cfg, tck::KfoldProtocol{folds}, opt, rc.seed);
  } else if (protocol == "undersample") {
    report = tck::evaluate_pipeline_undersample(
        dataset, cfg, tck::UndersampleHoldoutProtocol{ratio, test_fraction, repeats}, opt,
        rc.seed);
  } else {
    throw std::runtime_error("unknown protocol '" + protocol + "'");
  }
  print_report(report);
  if (!report_out.empty()) tck::save_report(report, report_out);
  return 0;
}

int cmd_embed(const std::string& model_path, const std::string& data_path,
              const std::string& out_path, const std::string& format, int dim) {
  const tck::TrainedKernel trained = tck::load_model(model_path);
  const tck::MtsDataset dataset = tck::load_dataset(data_path);
  const tck::GramMatrix train_gram = tck::in_sample_gram(trained);
  const auto [kpca, train_embed] = tck::kpca_fit(train_gram, dim);
  const tck::GramMatrix cross = tck::kernel_test(trained, dataset);
  const Eigen::MatrixXd embedding = tck::kpca_project(kpca, cross);

  std::vector<std::string> ids;
  for (const auto& rec : dataset.records) ids.push_back(rec.id);
  if (format == "csv") {
    tck::export_embedding_csv(embedding, ids, dataset.labels, out_path);
  } else if (format == "svg") {
    tck::export_embedding_svg(embedding, dataset.labels, out_path);
  } else {
    throw std::runtime_error("unknown format '" + format + "'");
  }
  return 0;
}

int cmd_toy(const std::string& out_path, int n, int v, int t, int classes, double separation,
            std::uint64_t seed) {
  tck::save_dataset(tck::make_gaussian_toy(n, v, t, classes, separation, seed), out_path);
  return 0;
}

int cmd_benchmark(const std::string& out_dir, int n_seeds, const std::string& rho_list,
                  const std::string& modes_list, const RunConfig& rc, int n, int v, int t,
                  double separation, double test_fraction) {
  const auto rhos = parse_double_list(rho_list);
  std::vector<std::string> modes;
  {
    std::stringstream ss(modes_list);
    std::string tok;
    while (std::getline(ss, tok, ',')) modes.push_back(tok);
  }
  std::filesystem::create_directories(out_dir);
  const std::string table_path = out_dir + "/accuracy.csv";
  std::ofstream table(table_path);
  if (!table) throw std::runtime_error("cannot open '" + table_path + "'");

  table << "scheme,rho";
  for (const auto& m : modes) table << "," << m;
  table << "\n";
  std::printf("%-12s %-6s", "scheme", "rho");
  for (const auto& m : modes) std::printf(" %8s", m.c_str());
  std::printf("\n");

  for (const std::string scheme : {std::string("label-rate"), std::string("mnar")}) {
    for (double rho : rhos) {
      std::vector<double> mode_acc(modes.size(), 0.0);
      for (int s = 0; s < n_seeds; ++s) {
        const std::uint64_t run_seed = tck::derive_seed(rc.seed, 9000 + s);
        const tck::MtsDataset toy = tck::make_gaussian_toy(n, v, t, 2, separation, run_seed);
        auto [injected, report] = scheme == "mnar"
                                      ? tck::inject_mnar_threshold(toy, rho, run_seed)
                                      : tck::inject_label_rate(toy, rho, run_seed);
        (void)report;
        for (size_t mi = 0; mi < modes.size(); ++mi) {
          RunConfig mode_rc = rc;
          mode_rc.mode = modes[mi];
          mode_rc.seed = run_seed;
          const auto fold = tck::evaluate_holdout(injected, to_ensemble_config(mode_rc),
                                                  to_pipeline_options(mode_rc), test_fraction,
                                                  run_seed);
          mode_acc[mi] += fold.accuracy;
        }
      }
      table << scheme << "," << rho;
      std::printf("%-12s %-6g", scheme.c_str(), rho);
      for (double acc : mode_acc) {
        table << "," << acc / n_seeds;
        std::printf(" %8.4f", acc / n_seeds);
      }
      table << "\n";
      std::printf("\n");
      std::fflush(stdout);
    }
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"TCK_IM time-series cluster kernel pipeline"};
  app.require_subcommand(1);

  // ingest
  auto* ingest = app.add_subcommand("ingest", "bin long-format events into a dataset file");
  std::string events_path, ingest_out;
  int bins = 48;
  double horizon = 48.0, drop_above = 0.0;
  ingest->add_option("--events", events_path, "long-format events csv")->required();
  ingest->add_option("--bins", bins, "number of time bins (T)")->required();
  ingest->add_option("--horizon", horizon, "observation horizon; events past it are dropped")
      ->required();
  ingest->add_option("--out", ingest_out, "output dataset file")->required();
  ingest->add_option("--drop-missing-above", drop_above,
                     "drop variables whose missing rate exceeds this threshold");

  // toy
  auto* toy = app.add_subcommand("toy", "generate a labeled fully observed toy dataset");
  std::string toy_out;
  int toy_n = 200, toy_v = 3, toy_t = 20, toy_classes = 2;
  double toy_sep = 1.0;
  std::uint64_t toy_seed = 0;
  toy->add_option("--out", toy_out)->required();
  toy->add_option("--n", toy_n, "number of records");
  toy->add_option("--v", toy_v, "number of variables");
  toy->add_option("--t", toy_t, "series length");
  toy->add_option("--classes", toy_classes, "number of classes");
  toy->add_option("--separation", toy_sep, "class separation scale");
  toy->add_option("--seed", toy_seed);

  // inject
  auto* inject = app.add_subcommand("inject", "inject label-correlated missingness");
  std::string inject_data, inject_scheme = "label-rate", inject_out, inject_report;
  double rho = 0.0;
  std::uint64_t inject_seed = 0;
  inject->add_option("--data", inject_data)->required();
  inject->add_option("--scheme", inject_scheme, "label-rate or mnar")
      ->check(CLI::IsMember({"label-rate", "mnar"}));
  inject->add_option("--rho", rho, "target |Pearson| correlation")->required();
  inject->add_option("--seed", inject_seed);
  inject->add_option("--out", inject_out)->required();
  inject->add_option("--report", inject_report, "injection report output");

  // train
  auto* train = app.add_subcommand("train", "train the ensemble kernel");
  RunConfig train_rc;
  std::string train_data, model_out, gram_out;
  train->add_option("--data", train_data)->required();
  train->add_option("--model-out", model_out, "trained model output");
  train->add_option("--gram-out", gram_out, "in-sample Gram matrix output");
  add_run_options(train, train_rc);

  // evaluate
  auto* evaluate = app.add_subcommand("evaluate", "cross-validated classification pipeline");
  RunConfig eval_rc;
  std::string eval_data, eval_protocol = "kfold", report_out;
  int folds = 5, repeats = 10;
  double ratio = 2.0, test_fraction = 0.2;
  evaluate->add_option("--data", eval_data)->required();
  evaluate->add_option("--protocol", eval_protocol, "kfold or undersample")
      ->check(CLI::IsMember({"kfold", "undersample"}));
  evaluate->add_option("--folds", folds);
  evaluate->add_option("--ratio", ratio, "negatives per positive for undersampling");
  evaluate->add_option("--test-frac", test_fraction, "holdout fraction for undersampling");
  evaluate->add_option("--repeats", repeats, "undersampling repeats");
  evaluate->add_option("--report-out", report_out);
  add_run_options(evaluate, eval_rc);

  // embed
  auto* embed = app.add_subcommand("embed", "KPCA embedding export (csv or svg)");
  std::string embed_model, embed_data, embed_out, embed_format = "csv";
  int embed_dim = 3;
  embed->add_option("--model", embed_model)->required();
  embed->add_option("--data", embed_data)->required();
  embed->add_option("--out", embed_out)->required();
  embed->add_option("--format", embed_format)->check(CLI::IsMember({"csv", "svg"}));
  embed->add_option("--d", embed_dim, "embedding dimension");

  // benchmark
  auto* benchmark = app.add_subcommand(
      "benchmark", "toy accuracy grid over injection schemes, targets and kernel modes");
  RunConfig bench_rc;
  bench_rc.q = 10;
  bench_rc.ic_min = 2;
  bench_rc.ic_max = 3;
  std::string out_dir, rho_list = "0.2,0.8", modes_list = "IM,TCK,B,ZERO";
  int bench_seeds = 5, bench_n = 200, bench_v = 3, bench_t = 20;
  double bench_sep = 1.0, bench_test_fraction = 0.3;
  benchmark->add_option("--out-dir", out_dir)->required();
  benchmark->add_option("--seeds", bench_seeds, "number of random repetitions");
  benchmark->add_option("--rho-list", rho_list, "comma-separated correlation targets");
  benchmark->add_option("--modes", modes_list, "comma-separated kernel modes");
  benchmark->add_option("--n", bench_n);
  benchmark->add_option("--v", bench_v);
  benchmark->add_option("--t", bench_t);
  benchmark->add_option("--separation", bench_sep);
  benchmark->add_option("--test-frac", bench_test_fraction);
  add_run_options(benchmark, bench_rc);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train && !train_rc.config_path.empty()) apply_config(train, train_rc.config_path);
    if (*evaluate && !eval_rc.config_path.empty()) apply_config(evaluate, eval_rc.config_path);
    if (*benchmark && !bench_rc.config_path.empty()) apply_config(benchmark, bench_rc.config_path);
    if (*ingest) return cmd_ingest(events_path, bins, horizon, ingest_out, drop_above);
    if (*toy) return cmd_toy(toy_out, toy_n, toy_v, toy_t, toy_classes, toy_sep, toy_seed);
    if (*inject)
      return cmd_inject(inject_data, inject_scheme, rho, inject_seed, inject_out, inject_report);
    if (*train) return cmd_train(train_data, train_rc, model_out, gram_out);
    if (*evaluate)
      return cmd_evaluate(eval_data, eval_rc, eval_protocol, folds, ratio, test_fraction,
                          repeats, report_out);
    if (*embed) return cmd_embed(embed_model, embed_data, embed_out, embed_format, embed_dim);
    if (*benchmark)
      return cmd_benchmark(out_dir, bench_seeds, rho_list, modes_list, bench_rc, bench_n,
                           bench_v, bench_t, bench_sep, bench_test_fraction);
  } catch (const tck::InfeasibleError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::runtime_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
