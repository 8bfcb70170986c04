//
// SPDX-License-Identifier: Apache-2.0
//

#include "flexiflow/cli.h"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "flexiflow/checkpoint.h"
#include "flexiflow/config.h"
#include "flexiflow/data_io.h"
#include "flexiflow/energy_oracle.h"
#include "flexiflow/metrics.h"
#include "flexiflow/mnist.h"
#include "flexiflow/plots.h"
#include "flexiflow/sampler.h"
#include "flexiflow/training.h"
#include "flexiflow/verify.h"

#ifndef FLEXIFLOW_DATA_DIR
#define FLEXIFLOW_DATA_DIR "data"
#endif

namespace flexiflow {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

  /// Runtime failure reported with exit code 2.
  class CliError: public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
  };

  Vocabularies vocab_named(const std::string &name) {
    if (name == "qm9")
      return Vocabularies::qm9();
    if (name == "geom")
      return Vocabularies::geom();
    throw CliError("unknown vocabulary \"" + name + "\"");
  }

  std::set<std::string> keys_of(const std::vector<MolecularGraph> &mols) {
    std::set<std::string> keys;
    for (const auto &m: mols)
      keys.insert(canonical_key(m));
    return keys;
  }

  /// Dataset directory (coordinates restored to Angstrom) or a directory or
  /// file of SDF records.
  std::vector<MolecularGraph> read_molecules(const fs::path &path, const Vocabularies &vocab,
                                             std::ostream &err) {
    if (fs::is_directory(path) && fs::exists(path / "index.json")) {
      auto ds = read_dataset(path);
      for (auto &m: ds.molecules)
        for (auto &c: m.conformers)
          c *= ds.scale;
      return ds.molecules;
    }
    std::vector<fs::path> files;
    if (fs::is_directory(path)) {
      for (const auto &e: fs::directory_iterator(path))
        if (e.path().extension() == ".sdf")
          files.push_back(e.path());
      std::sort(files.begin(), files.end());
    } else if (fs::exists(path)) {
      files.push_back(path);
    }
    if (files.empty())
      throw CliError("no molecules found at " + path.string());
    std::vector<MolecularGraph> all;
    for (const auto &f: files) {
      std::vector<std::string> warnings;
      auto mols = read_sdf(f, vocab, &warnings);
      for (const auto &w: warnings)
        err << "flexiflow:warning: " << f.string() << ": " << w << "\n";
      all.insert(all.end(), mols.begin(), mols.end());
    }
    return all;
  }

  /// One canonical key per line, or a dataset directory.
  std::set<std::string> read_train_keys(const fs::path &path, const Vocabularies &vocab,
                                        std::ostream &err) {
    if (fs::is_directory(path))
      return keys_of(read_molecules(path, vocab, err));
    std::ifstream in(path);
    if (!in)
      throw CliError("cannot read " + path.string());
    std::set<std::string> keys;
    for (std::string line; std::getline(in, line);)
      if (!line.empty())
        keys.insert(line);
    return keys;
  }

  void write_keys(const fs::path &path, const std::set<std::string> &keys) {
    std::string text;
    for (const auto &k: keys)
      text += k + "\n";
    write_text_file(path, text);
  }

  /// Writes to two stream buffers; the second may be null.
  class TeeBuf: public std::streambuf {
  public:
    TeeBuf(std::streambuf *a, std::streambuf *b): a_(a), b_(b) { }

  protected:
    int overflow(int c) override {
      if (c == traits_type::eof())
        return traits_type::not_eof(c);
      const auto ch = traits_type::to_char_type(c);
      if (a_->sputc(ch) == traits_type::eof() || (b_ && b_->sputc(ch) == traits_type::eof()))
        return traits_type::eof();
      return c;
    }
    int sync() override {
      const int r = a_->pubsync();
      return (b_ && b_->pubsync() != 0) ? -1 : r;
    }

  private:
    std::streambuf *a_, *b_;
  };

  std::string dump(const json &j) { return j.dump(2) + "\n"; }

  // -------------------------------------------------------------------------
  // dataset
  // -------------------------------------------------------------------------

  json dataset_stats(const Dataset &ds) {
    const auto hist = ds.atom_count_histogram();
    std::map<std::string, int> elements;
    int conformers = 0;
    for (const auto &m: ds.molecules) {
      conformers += m.num_conformers();
      for (int a: m.atoms)
        ++elements[ds.vocab.atom_types.at(static_cast<std::size_t>(a))];
    }
    return { { "molecules", ds.molecules.size() },
             { "conformers", conformers },
             { "tuples", ds.num_tuples() },
             { "scale", ds.scale },
             { "atom_count_histogram", hist },
             { "elements", elements },
             { "atom_types", ds.vocab.atom_types },
             { "charge_types", ds.vocab.charge_types } };
  }

  // -------------------------------------------------------------------------
  // sample
  // -------------------------------------------------------------------------

  struct SampleArgs {
    fs::path checkpoint, out;
    int n_molecules = 10;
    int n_conformers = 1;
    int steps = 100;
    std::string mode = "fresh";
    std::uint64_t seed = 0;
    std::string format = "sdf";
    bool raw = false;
    std::string dtype = "float32";
  };

  void run_sample(const SampleArgs &a, std::ostream &out) {
    const auto ckpt = load_checkpoint(a.checkpoint);
    auto net = make_network(ckpt.model, 0);
    const auto *group = &ckpt.groups.at("params");
    if (!a.raw && ckpt.groups.count("ema"))
      group = &ckpt.groups.at("ema");
    load_parameters(*net, *group);

    SampleOptions opts;
    opts.n_steps = a.steps;
    opts.scale = ckpt.scale;
    opts.dtype = a.dtype == "float64" ? torch::kFloat64 : torch::kFloat32;
    net->to(opts.dtype);

    int calls = 0;
    const auto inner = network_predictor(net);
    const Predictor predict = [&](const MolBatch &s) {
      ++calls;
      return inner(s);
    };

    Rng rng(a.seed);
    std::vector<MolecularGraph> mols;
    std::vector<int> calls_per_molecule;
    for (int k = 0; k < a.n_molecules; ++k) {
      const int n = sample_atom_count(ckpt.atom_histogram, rng);
      const int before = calls;
      if (a.mode == "fixed-x") {
        const std::uint64_t fixed = rng.next_u64();
        mols.push_back(generate_ensemble(predict, ckpt.model, n, a.n_conformers, opts, fixed, rng));
      } else {
        mols.push_back(generate(predict, ckpt.model, n, opts, SampleMode::kFresh, 0, rng));
      }
      calls_per_molecule.push_back(calls - before);
    }

    fs::create_directories(a.out);
    const auto file = a.out / sample_file_name("samples", a.seed, a.steps, a.format);
    std::ofstream f(file);
    if (!f)
      throw CliError("cannot write " + file.string());
    for (std::size_t k = 0; k < mols.size(); ++k) {
      for (int c = 0; c < mols[k].num_conformers(); ++c) {
        const auto title = "mol" + std::to_string(k) + " conf" + std::to_string(c);
        if (a.format == "xyz")
          write_xyz_record(f, mols[k], mols[k].conformers[static_cast<std::size_t>(c)],
                           ckpt.vocab, title);
        else
          write_sdf_record(f, mols[k], mols[k].conformers[static_cast<std::size_t>(c)],
                           ckpt.vocab, title);
      }
    }
    const json manifest{ { "file", file.filename().string() },
                         { "mode", a.mode },
                         { "seed", a.seed },
                         { "steps", a.steps },
                         { "n_molecules", a.n_molecules },
                         { "conformers_per_molecule", mols.empty() ? 0 : mols[0].num_conformers() },
                         { "network_calls_per_molecule", calls_per_molecule },
                         { "weights", group == &ckpt.groups.at("params") ? "raw" : "ema" } };
    write_text_file(a.out / sample_file_name("manifest", a.seed, a.steps, "json"), dump(manifest));
    out << dump(manifest);
  }

  // -------------------------------------------------------------------------
  // eval
  // -------------------------------------------------------------------------

  struct EvalArgs {
    fs::path input, ref, train_keys, plots;
    std::string vocab = "qm9";
    int max_steps = 500;
  };

  MetricsReport eval_graphs(const EvalArgs &a, std::ostream &err) {
    const auto vocab = vocab_named(a.vocab);
    const auto mols = read_molecules(a.input, vocab, err);
    std::set<std::string> train;
    MetricsReport r;
    if (!a.train_keys.empty())
      train = read_train_keys(a.train_keys, vocab, err);
    else
      r.notes.emplace_back("no training keys given; novelty is measured against the empty set");
    const auto table = a.vocab == "geom" ? ValenceTable::geom() : ValenceTable::qm9();
    r.graphs = graph_metrics(mols, train, table, vocab);
    return r;
  }

  /// Pools Cov/AMR over molecules whose graph appears in the reference set.
  MetricsReport eval_ensembles(const EvalArgs &a, std::ostream &err) {
    if (a.ref.empty())
      throw CliError("eval ensembles needs --ref");
    const auto vocab = vocab_named(a.vocab);
    const auto gen = read_molecules(a.input, vocab, err);
    const auto ref = read_molecules(a.ref, vocab, err);
    std::map<std::string, MolecularGraph> ref_by_key;
    for (const auto &m: ref)
      ref_by_key.emplace(canonical_key(m), permute_atoms(m, canonical_order(m)));

    const auto deltas = default_coverage_grid();
    CoverageResult sum;
    sum.deltas = deltas;
    sum.cov_r.assign(deltas.size(), 0.0);
    sum.cov_p.assign(deltas.size(), 0.0);
    int matched = 0;
    for (const auto &m: gen) {
      const auto it = ref_by_key.find(canonical_key(m));
      if (it == ref_by_key.end())
        continue;
      const auto g = permute_atoms(m, canonical_order(m));
      const auto c = cov_amr(g.conformers, it->second.conformers, deltas);
      for (std::size_t k = 0; k < deltas.size(); ++k) {
        sum.cov_r[k] += c.cov_r[k];
        sum.cov_p[k] += c.cov_p[k];
      }
      sum.amr_r += c.amr_r;
      sum.amr_p += c.amr_p;
      ++matched;
    }
    MetricsReport r;
    r.notes.push_back(std::to_string(matched) + " of " + std::to_string(gen.size())
                      + " generated molecules matched a reference graph");
    if (matched == 0)
      return r;
    for (std::size_t k = 0; k < deltas.size(); ++k) {
      sum.cov_r[k] /= matched;
      sum.cov_p[k] /= matched;
    }
    sum.amr_r /= matched;
    sum.amr_p /= matched;
    r.coverage = sum;
    if (!a.plots.empty())
      write_text_file(a.plots / "coverage.svg",
                      line_plot_svg("Coverage vs RMSD threshold", "threshold (A)", "coverage",
                                    { { "Cov-R", sum.deltas, sum.cov_r },
                                      { "Cov-P", sum.deltas, sum.cov_p } }));
    return r;
  }

  /// Mean D(S) over molecules with at least two conformers, before and after
  /// oracle minimization of every conformer.
  MetricsReport eval_diversity(const EvalArgs &a, std::ostream &err) {
    const auto vocab = vocab_named(a.vocab);
    const auto mols = read_molecules(a.input, vocab, err);
    MetricsReport r;
    auto oracle = oracle_from_environment(vocab);
    if (!oracle) {
      oracle = std::make_unique<HarmonicBondOracle>(vocab);
      r.notes.emplace_back("FLEXIFLOW_ENERGY_ORACLE unset; minimized with the harmonic bond oracle");
    }
    double before = 0.0, after = 0.0, shift = 0.0;
    int counted = 0, shifted = 0;
    for (const auto &m: mols) {
      if (m.num_conformers() < 2)
        continue;
      std::vector<Coords> minimized;
      for (const auto &c: m.conformers) {
        minimized.push_back(oracle->minimize(m, c, a.max_steps));
        shift += kabsch_rmsd(c, minimized.back());
        ++shifted;
      }
      before += conformer_diversity(m.conformers);
      after += conformer_diversity(minimized);
      ++counted;
    }
    r.notes.push_back(std::to_string(counted) + " ensembles with at least two conformers");
    if (counted == 0)
      return r;
    r.d_s = before / counted;
    r.d_s_minimized = after / counted;
    if (!a.plots.empty())
      write_text_file(a.plots / "diversity.svg",
                      bar_plot_svg("Ensemble diversity and minimization shift", "RMSD (A)",
                                   { { "D(S) generated", *r.d_s },
                                     { "D(S) minimized", *r.d_s_minimized },
                                     { "mean shift", shift / shifted } }));
    return r;
  }

  // -------------------------------------------------------------------------
  // mnist
  // -------------------------------------------------------------------------

  struct MnistArgs {
    fs::path data = fs::path(FLEXIFLOW_DATA_DIR) / "mnist";
    fs::path out = "mnist_out";
    int n_images = 5000;
    mnist::MnistTrainConfig train;
    std::string head_scale = "init";
    std::string reconstruction = "difference";
    int n_steps = 100;
    std::vector<std::uint64_t> g_seeds{ 0, 1, 2, 3 };
    std::vector<std::uint64_t> y_seeds{ 10, 11, 12, 13, 14 };
  };

  void run_mnist(MnistArgs a, std::ostream &out) {
    using namespace flexiflow::mnist;
    const int size = 32;
    auto images = pad_to(read_idx_images(a.data / "train-images-idx3-ubyte.gz", a.n_images), size);
    a.train.unet.head_scale = a.head_scale == "output" ? HeadScale::kOutput : HeadScale::kInit;
    torch::manual_seed(a.train.seed);
    DualUNet net(a.train.unet);
    fs::create_directories(a.out);
    std::ofstream log(a.out / "train_log.jsonl");
    const auto res = mnist_train(net, images, a.train, &log);
    torch::save(net, (a.out / "dual_unet.pt").string());

    const auto rec = a.reconstruction == "printed" ? Reconstruction::kPrinted
                                                   : Reconstruction::kDifference;
    std::vector<torch::Tensor> colors, grays;
    json rows = json::array();
    for (auto g: a.g_seeds) {
      const auto samples = mnist_sample(net, size, a.n_steps, g, a.y_seeds, rec);
      std::vector<int> dominant;
      bool identical = true;
      for (const auto &s: samples) {
        colors.push_back(s.color);
        grays.push_back(s.gray.clamp(0.0, 1.0));
        dominant.push_back(dominant_channel(s));
        identical = identical && torch::equal(s.gray, samples.front().gray);
      }
      const std::set<int> distinct(dominant.begin(), dominant.end());
      rows.push_back({ { "g_seed", g },
                       { "dominant_channels", dominant },
                       { "distinct_channels", distinct.size() },
                       { "grayscale_identical", identical } });
    }
    const int cols = static_cast<int>(a.y_seeds.size());
    write_png_grid(a.out / "colored_samples.png", colors, cols);
    write_png_grid(a.out / "grayscale_samples.png", grays, cols);

    std::vector<Series> curve{ { "loss", {}, {} } };
    for (std::size_t k = 0; k < res.losses.size(); ++k) {
      curve[0].x.push_back(static_cast<double>(k));
      curve[0].y.push_back(res.losses[k]);
    }
    write_text_file(a.out / "loss.svg", line_plot_svg("Training loss", "step", "MSE", curve));
    const json summary{ { "steps", res.losses.size() },
                        { "seconds", res.seconds },
                        { "first_loss", res.losses.empty() ? 0.0 : res.losses.front() },
                        { "last_loss", res.losses.empty() ? 0.0 : res.losses.back() },
                        { "samples", rows } };
    write_text_file(a.out / "summary.json", dump(summary));
    out << dump(summary);
  }

}  // namespace

int run_cli(int argc, const char *const *argv, std::ostream &out, std::ostream &err) {
  CLI::App app{ "Joint molecular graph and conformer-ensemble flow matching" };
  app.require_subcommand(1);

  // dataset
  auto *dataset = app.add_subcommand("dataset", "Build, import and inspect datasets");
  dataset->require_subcommand(1);
  fs::path ds_out, ds_input;
  std::uint64_t toy_seed = 7;
  int toy_n = 10;
  ToyOptions toy;
  auto *make_toy = dataset->add_subcommand("make-toy", "Generate the synthetic toy dataset");
  make_toy->add_option("--out", ds_out, "Output dataset directory")->required();
  make_toy->add_option("--n-molecules", toy_n)->check(CLI::PositiveNumber);
  make_toy->add_option("--seed", toy_seed);
  make_toy->add_option("--n-conformers", toy.n_conformers)->check(CLI::PositiveNumber);
  make_toy->add_option("--min-heavy", toy.min_heavy)->check(CLI::PositiveNumber);
  make_toy->add_option("--max-heavy", toy.max_heavy)->check(CLI::PositiveNumber);

  std::string vocab_name = "qm9";
  std::optional<double> import_scale;
  auto *import_sdf = dataset->add_subcommand("import-sdf", "Preprocess an SDF file");
  import_sdf->add_option("--input", ds_input, "SDF file")->required()->check(CLI::ExistingFile);
  import_sdf->add_option("--out", ds_out, "Output dataset directory")->required();
  import_sdf->add_option("--vocab", vocab_name)->check(CLI::IsMember({ "qm9", "geom" }));
  import_sdf->add_option("--scale", import_scale, "Coordinate scale (default: pooled std)");

  auto *stats = dataset->add_subcommand("stats", "Summarize a dataset directory");
  stats->add_option("--input", ds_input)->required()->check(CLI::ExistingDirectory);

  // train
  auto *train = app.add_subcommand("train", "Train from a YAML config");
  fs::path config_path;
  int max_steps_override = -1;
  bool resume = false;
  train->add_option("--config", config_path)->required()->check(CLI::ExistingFile);
  train->add_option("--max-steps", max_steps_override, "Override training.max_steps");
  train->add_flag("--resume", resume, "Continue from <out_dir>/checkpoint.ffck");

  // sample
  auto *sample = app.add_subcommand("sample", "Generate molecules from a checkpoint");
  SampleArgs sa;
  sample->add_option("--checkpoint", sa.checkpoint)->required()->check(CLI::ExistingFile);
  sample->add_option("--n-molecules", sa.n_molecules)->check(CLI::PositiveNumber);
  sample->add_option("--n-conformers", sa.n_conformers)->check(CLI::PositiveNumber);
  sample->add_option("--steps", sa.steps)->check(CLI::PositiveNumber);
  sample->add_option("--mode", sa.mode)->check(CLI::IsMember({ "fresh", "fixed-x" }));
  sample->add_option("--seed", sa.seed);
  sample->add_option("--out", sa.out)->required();
  sample->add_option("--format", sa.format)->check(CLI::IsMember({ "sdf", "xyz" }));
  sample->add_option("--dtype", sa.dtype)->check(CLI::IsMember({ "float32", "float64" }));
  sample->add_flag("--raw-weights", sa.raw, "Use raw instead of EMA parameters");

  // eval
  auto *eval = app.add_subcommand("eval", "Metrics on generated molecules");
  eval->require_subcommand(1);
  EvalArgs ea;
  auto add_eval_options = [&](CLI::App *c) {
    c->add_option("--input", ea.input, "Directory or file of SDF records")->required();
    c->add_option("--vocab", ea.vocab)->check(CLI::IsMember({ "qm9", "geom" }));
    c->add_option("--plots", ea.plots, "Directory for SVG plots");
  };
  auto *eval_graphs_cmd = eval->add_subcommand("graphs", "Validity, uniqueness, novelty, stability");
  add_eval_options(eval_graphs_cmd);
  eval_graphs_cmd->add_option("--train-keys", ea.train_keys,
                              "Canonical keys, one per line, or a dataset directory");
  auto *eval_ens = eval->add_subcommand("ensembles", "Coverage and AMR against references");
  add_eval_options(eval_ens);
  eval_ens->add_option("--ref", ea.ref, "Reference dataset or SDF directory")->required();
  auto *eval_div = eval->add_subcommand("diversity", "Ensemble diversity before and after minimization");
  add_eval_options(eval_div);
  eval_div->add_option("--max-steps", ea.max_steps, "Minimizer iterations")->check(CLI::PositiveNumber);

  // verify
  auto *verify = app.add_subcommand("verify", "Equivariance, factorization and gradient checks");
  std::string fault = "none";
  std::uint64_t verify_seed = 0;
  verify->add_option("--fault", fault, "Inject a deliberate bug")
      ->check(CLI::IsMember({ "none", "coord_bias" }));
  verify->add_option("--seed", verify_seed);

  // mnist
  auto *mnist_cmd = app.add_subcommand("mnist", "Colored-MNIST decomposition demo");
  MnistArgs ma;
  mnist_cmd->add_option("--data", ma.data, "Directory with train-images-idx3-ubyte.gz");
  mnist_cmd->add_option("--out", ma.out);
  mnist_cmd->add_option("--n-images", ma.n_images)->check(CLI::PositiveNumber);
  mnist_cmd->add_option("--steps", ma.train.steps)->check(CLI::PositiveNumber);
  mnist_cmd->add_option("--batch-size", ma.train.batch_size)->check(CLI::PositiveNumber);
  mnist_cmd->add_option("--lr", ma.train.learning_rate)->check(CLI::PositiveNumber);
  mnist_cmd->add_option("--seed", ma.train.seed);
  mnist_cmd->add_option("--time-budget", ma.train.time_budget_s, "Seconds; 0 for no limit");
  mnist_cmd->add_option("--head-scale", ma.head_scale)->check(CLI::IsMember({ "init", "output" }));
  mnist_cmd->add_option("--reconstruction", ma.reconstruction)
      ->check(CLI::IsMember({ "difference", "printed" }));
  mnist_cmd->add_option("--sample-steps", ma.n_steps)->check(CLI::PositiveNumber);
  mnist_cmd->add_option("--g-seeds", ma.g_seeds);
  mnist_cmd->add_option("--y-seeds", ma.y_seeds);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp &) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp &) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError &e) {
    err << kErrorPrefix << "usage: " << e.what() << "\n";
    return kExitUsage;
  }

  try {
    if (make_toy->parsed()) {
      if (toy.min_heavy > toy.max_heavy)
        throw CLI::ValidationError("--min-heavy", "must not exceed --max-heavy");
      const auto ds = generate_toy_dataset(toy_seed, toy_n, toy);
      write_dataset(ds_out, ds);
      write_keys(ds_out / "keys.txt", keys_of(ds.molecules));
      out << dump(dataset_stats(ds));
    } else if (import_sdf->parsed()) {
      const auto vocab = vocab_named(vocab_name);
      std::vector<std::string> warnings;
      auto raw = read_sdf(ds_input, vocab, &warnings);
      for (const auto &w: warnings)
        err << "flexiflow:warning: " << w << "\n";
      PreprocessReport report;
      const auto table = vocab_name == "geom" ? ValenceTable::geom() : ValenceTable::qm9();
      const auto ds = preprocess(std::move(raw), vocab, table, import_scale, &report);
      write_dataset(ds_out, ds);
      write_keys(ds_out / "keys.txt", keys_of(ds.molecules));
      auto j = dataset_stats(ds);
      j["dropped"] = report.dropped;
      out << dump(j);
    } else if (stats->parsed()) {
      out << dump(dataset_stats(read_dataset(ds_input)));
    } else if (train->parsed()) {
      auto cfg = load_train_config(config_path);
      if (max_steps_override >= 0)
        cfg.max_steps = max_steps_override;
      if (cfg.dataset.empty())
        throw CliError("config has no dataset path");
      // Relative paths in a config are relative to the config file.
      const auto base = config_path.parent_path();
      const auto ds = read_dataset(base / cfg.dataset);
      if (!cfg.out_dir.empty())
        cfg.out_dir = (base / cfg.out_dir).string();
      Trainer trainer(cfg, ds);
      const fs::path ckpt_path = fs::path(cfg.out_dir) / "checkpoint.ffck";
      if (resume) {
        if (!fs::exists(ckpt_path))
          throw CliError("--resume: no checkpoint at " + ckpt_path.string());
        trainer.resume(load_checkpoint(ckpt_path));
      }
      std::ofstream file;
      if (!cfg.out_dir.empty()) {
        fs::create_directories(cfg.out_dir);
        file.open(fs::path(cfg.out_dir) / "train_log.jsonl",
                  resume ? std::ios::app : std::ios::trunc);
      }
      TeeBuf tee(out.rdbuf(), file.is_open() ? file.rdbuf() : nullptr);
      std::ostream log(&tee);
      trainer.run(&log);
    } else if (sample->parsed()) {
      if (sa.mode == "fresh" && sa.n_conformers != 1)
        throw CLI::ValidationError("--n-conformers", "fresh mode samples one x/y pair per molecule; use --mode fixed-x for ensembles");
      run_sample(sa, out);
    } else if (eval->parsed()) {
      MetricsReport report;
      if (eval_graphs_cmd->parsed())
        report = eval_graphs(ea, err);
      else if (eval_ens->parsed())
        report = eval_ensembles(ea, err);
      else
        report = eval_diversity(ea, err);
      out << dump(report.to_json());
    } else if (verify->parsed()) {
      auto cfg = verify_model_config();
      cfg.fault = fault;
      const auto results = run_verify_suite(cfg, verify_seed);
      json j = json::array();
      bool all = true;
      for (const auto &r: results) {
        j.push_back({ { "check", r.name },
                      { "pass", r.pass },
                      { "value", r.value },
                      { "threshold", r.threshold },
                      { "detail", r.detail } });
        all = all && r.pass;
      }
      out << dump(j);
      if (!all)
        throw CliError("verify: one or more checks failed");
    } else if (mnist_cmd->parsed()) {
      run_mnist(ma, out);
    }
  } catch (const CLI::ValidationError &e) {
    err << kErrorPrefix << "usage: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception &e) {
    err << kErrorPrefix << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitOk;
}

}  // namespace flexiflow
