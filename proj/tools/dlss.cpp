// dlss: command-line driver for data preparation, training, inference,
// evaluation, deconvolution, the precision study and the HTTP server.

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <csignal>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <numeric>
#include <random>

#include "dlss/config.hpp"
#include "dlss/deconv.hpp"
#include "dlss/error.hpp"
#include "dlss/evaluation.hpp"
#include "dlss/image_io.hpp"
#include "dlss/serving.hpp"
#include "dlss/server.hpp"
#include "dlss/training.hpp"

namespace fs = std::filesystem;
using namespace dlss;

namespace {

std::string now_iso() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::uint64_t fnv1a(std::uint64_t h, const std::string& bytes) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

// Hash over the names and contents of the files a command produced.
std::string artifact_hash(const std::vector<fs::path>& files) {
  std::uint64_t h = 1469598103934665603ULL;
  std::vector<fs::path> sorted = files;
  std::sort(sorted.begin(), sorted.end());
  for (const auto& f : sorted) {
    if (!fs::is_regular_file(f)) continue;
    std::ifstream in(f, std::ios::binary);
    std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    h = fnv1a(h, f.filename().string());
    h = fnv1a(h, data);
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

struct RunLog {
  std::string command;
  std::string config;
  std::uint64_t seed = 0;
  std::string started = now_iso();
  std::vector<fs::path> artifacts;
};

void append_run(const fs::path& log, const RunLog& r) {
  if (log.empty()) return;
  if (log.has_parent_path()) fs::create_directories(log.parent_path());
  nlohmann::json j{{"command", r.command},         {"config", r.config},
                   {"seed", r.seed},               {"artifact_hash", artifact_hash(r.artifacts)},
                   {"artifacts", std::vector<std::string>{}}, {"started", r.started},
                   {"finished", now_iso()}};
  for (const auto& a : r.artifacts) j["artifacts"].push_back(a.string());
  std::ofstream os(log, std::ios::app);
  os << j.dump() << "\n";
}

fs::path data_root(const std::string& flag) {
  if (!flag.empty()) return flag;
  if (const char* env = std::getenv("DLSS_DATA_ROOT")) return env;
  return {};
}

std::vector<Micrograph> load_split(const std::string& manifest, const std::string& root, const std::string& split,
                                   int synthetic, int side, std::uint64_t seed) {
  const io::Split sp = io::parse_split(split);
  Dataset d;
  if (!manifest.empty()) {
    int skipped = 0;
    d = Dataset::from_manifest(manifest, sp, data_root(root), &skipped);
    if (skipped > 0) std::cerr << "warning: skipped " << skipped << " unreadable images\n";
  } else {
    d = Dataset::synthetic_split(synthetic, side, seed, sp);
  }
  if (d.images.empty()) throw InvalidInput("no images in the " + split + " split");
  // Evaluation works on fixed-size centre crops.
  std::vector<Micrograph> out;
  for (auto& m : d.images) {
    if (m.height() == side && m.width() == side) {
      out.push_back(std::move(m));
    } else if (m.height() >= side && m.width() >= side) {
      out.push_back(crop(m, (m.height() - side) / 2, (m.width() - side) / 2, side, side));
    }
  }
  if (out.empty()) throw InvalidInput("no images of at least " + std::to_string(side) + " px");
  return out;
}

BlurKernel parse_kernel(const std::string& s) {
  // "<size>x<size>:<sigma>"
  const auto x = s.find('x');
  const auto colon = s.find(':');
  if (x == std::string::npos || colon == std::string::npos || colon < x) {
    throw InvalidInput("--kernel: expected <n>x<n>:<sigma>, got '" + s + "'");
  }
  const int a = std::stoi(s.substr(0, x));
  const int b = std::stoi(s.substr(x + 1, colon - x - 1));
  if (a != b) throw InvalidInput("--kernel: only square kernels are supported");
  return gaussian_kernel(a, std::stod(s.substr(colon + 1)));
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= s.size()) {
    const auto comma = s.find(',', start);
    const auto end = comma == std::string::npos ? s.size() : comma;
    if (end > start) out.push_back(s.substr(start, end - start));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

// --- prepare-data ----------------------------------------------------------

struct PrepareArgs {
  int synthetic = 0;
  std::string src;
  std::string out;
  int side = 96;
  std::uint64_t seed = 1;
};

std::vector<fs::path> cmd_prepare(const PrepareArgs& a) {
  if ((a.synthetic > 0) == !a.src.empty()) throw InvalidInput("prepare-data: give exactly one of --synthetic or --src");
  std::vector<Micrograph> images;
  int skipped = 0;
  if (a.synthetic > 0) {
    for (int i = 0; i < a.synthetic; ++i) {
      images.push_back(synth_corpus_image(example_rng(a.seed, static_cast<std::uint64_t>(i))(), a.side));
    }
  } else {
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(a.src)) {
      if (e.is_regular_file()) {
        const auto ext = e.path().extension().string();
        if (ext == ".tif" || ext == ".tiff" || ext == ".raw") files.push_back(e.path());
      }
    }
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
      try {
        images.push_back(normalize_crop(io::load_image(f)));
      } catch (const std::exception& ex) {
        std::cerr << "warning: skipping " << f << ": " << ex.what() << "\n";
        ++skipped;
      }
    }
  }
  if (images.empty()) throw InvalidInput("prepare-data: no usable images");
  const int n = static_cast<int>(images.size());
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(a.seed);
  std::shuffle(order.begin(), order.end(), rng);
  const int n_train = n * 70 / 100;
  const int n_val = n * 15 / 100;
  std::vector<std::vector<int>> parts{{order.begin(), order.begin() + n_train},
                                      {order.begin() + n_train, order.begin() + n_train + n_val},
                                      {order.begin() + n_train + n_val, order.end()}};
  std::vector<io::ManifestRecord> records;
  const io::Split splits[] = {io::Split::train, io::Split::validation, io::Split::test};
  for (int k = 0; k < 3; ++k) {
    std::mt19937_64 split_rng(a.seed + 1000003ULL * (k + 1));
    std::shuffle(parts[k].begin(), parts[k].end(), split_rng);
    const std::string name(io::split_name(splits[k]));
    fs::create_directories(fs::path(a.out) / name);
    for (std::size_t j = 0; j < parts[k].size(); ++j) {
      char buf[32];
      std::snprintf(buf, sizeof buf, "%06zu.tif", j);
      const std::string rel = name + "/" + buf;
      io::write_tiff(fs::path(a.out) / rel, images[parts[k][j]]);
      records.push_back({rel, splits[k]});
    }
  }
  const fs::path manifest = fs::path(a.out) / "manifest.csv";
  io::write_manifest(manifest, records);
  std::cout << "prepared " << n << " images (" << parts[0].size() << " train, " << parts[1].size() << " validation, "
            << parts[2].size() << " test), skipped " << skipped << "\nmanifest: " << manifest.string() << "\n";
  return {manifest};
}

// --- train -----------------------------------------------------------------

std::vector<fs::path> cmd_train(const TrainRunConfig& cfg, const std::string& root, bool quiet) {
  cfg.validate();
  Dataset data;
  if (!cfg.manifest.empty()) {
    int skipped = 0;
    data = Dataset::from_manifest(cfg.manifest, io::Split::train, data_root(root), &skipped);
    if (skipped > 0) std::cerr << "warning: skipped " << skipped << " unreadable images\n";
    if (data.images.empty()) throw InvalidInput("train: manifest has no training images");
  } else {
    data = Dataset::synthetic_split(cfg.synthetic_count, cfg.side, cfg.seed, io::Split::train);
  }
  const auto t0 = std::chrono::steady_clock::now();
  ProgressFn progress;
  if (!quiet) {
    progress = [&](long long i, double loss) {
      if ((i + 1) % 500 == 0) {
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        std::cerr << "iter " << (i + 1) << " loss " << loss << " (" << secs << " s)\n";
      }
    };
  }
  const TrainResult r = train(cfg, data, progress);
  const fs::path saved = r.run_dir / "config.txt";
  std::ofstream(saved) << cfg.serialize();
  std::cout << "run directory: " << r.run_dir.string() << "\nfinal checkpoint: " << r.checkpoints.back().string()
            << "\n";
  std::vector<fs::path> out = r.checkpoints;
  out.push_back(r.run_dir / "metrics.csv");
  out.push_back(r.run_dir / "losses.csv");
  return out;
}

// --- infer -----------------------------------------------------------------

struct InferArgs {
  std::string model;
  int step = 0;
  std::string in, out;
  bool full = false;
  bool overwrite_known = false;
  int width = 0, height = 0;
};

std::vector<fs::path> cmd_infer(const InferArgs& a) {
  const auto g = load_generator(a.model);
  const Coverage cov(a.step);
  Micrograph img = io::load_image(a.in);
  int h = a.height, w = a.width;
  if (a.full) {
    if (h == 0) h = img.height();
    if (w == 0) w = img.width();
    img = downsample_nearest(img, cov);
  }
  const int k = downsampled_side(g->spec().target_side, a.step);
  Micrograph out;
  if (img.height() == k && img.width() == k && (h == 0 || h == g->spec().target_side) &&
      (w == 0 || w == g->spec().target_side)) {
    out = infer(*g, img, cov, a.overwrite_known);
  } else {
    if (h == 0) h = img.height() * a.step;
    if (w == 0) w = img.width() * a.step;
    out = tiled_infer(*g, img, cov, h, w);
  }
  io::save_image(a.out, out);
  std::cout << "wrote " << a.out << " (" << out.width() << "x" << out.height() << ")\n";
  return {a.out};
}

// --- evaluate --------------------------------------------------------------

struct EvalArgs {
  std::string methods = "bilinear";
  std::string coverage = "4..10";
  std::string manifest, root, split = "test";
  int synthetic = 300;
  int side = 64;
  std::uint64_t seed = 1;
  bool blur_targets = false;
  std::string out = "eval";
  bool per_pixel = false;
  std::string sweep;
  std::string seen = "4..10";
};

std::vector<fs::path> cmd_evaluate(const EvalArgs& a) {
  const auto targets = load_split(a.manifest, a.root, a.split, a.synthetic, a.side, a.seed);
  const auto steps = parse_steps(a.coverage);
  std::vector<EvalReport> reports;
  std::vector<fs::path> artifacts;
  const fs::path out(a.out);
  fs::create_directories(out);
  for (const auto& m : split_list(a.methods)) {
    const auto r = make_reconstructor(m);
    for (int s : steps) {
      reports.push_back(evaluate_method(*r, targets, s, a.blur_targets));
      const auto& st = reports.back().unmasked.stats;
      std::cout << r->name() << " s=" << s << " root_mean=" << st.root_mean << " root_std=" << st.root_std
                << " masked_root_mean=" << reports.back().masked.stats.root_mean << "\n";
    }
    std::string tag = m;
    std::replace_if(tag.begin(), tag.end(), [](char c) { return !std::isalnum(static_cast<unsigned char>(c)); }, '_');
    if (a.per_pixel) {
      const auto map = per_pixel_rmse(*r, targets, steps, a.blur_targets);
      const fs::path pgm = out / ("rmse_map_" + tag + ".pgm");
      const Micrograph rm = map.rmse_map();
      const double hi = *std::max_element(rm.values().begin(), rm.values().end());
      io::write_pgm(pgm, rm, 0.0, hi > 0 ? hi : 1.0);
      const fs::path curve = out / ("edge_curve_" + tag + ".csv");
      write_curve_csv(curve, map);
      artifacts.push_back(pgm);
      artifacts.push_back(curve);
    }
    if (!a.sweep.empty()) {
      const auto sweep_steps = parse_steps(a.sweep);
      const auto seen = parse_steps(a.seen);
      const fs::path p = out / ("sweep_" + tag + ".csv");
      write_sweep_csv(p, r->name(), coverage_sweep(*r, targets, sweep_steps, seen, a.blur_targets));
      artifacts.push_back(p);
    }
  }
  write_stats_csv(out / "stats.csv", reports);
  write_histogram_csv(out / "histograms.csv", reports);
  artifacts.push_back(out / "stats.csv");
  artifacts.push_back(out / "histograms.csv");
  std::cout << "wrote " << (out / "stats.csv").string() << "\n";
  return artifacts;
}

// --- deconvolve ------------------------------------------------------------

std::vector<fs::path> cmd_deconvolve(const std::string& kernel, const std::string& in, const std::string& out,
                                     const DeconvConfig& cfg) {
  const BlurKernel k = parse_kernel(kernel);
  std::vector<double> objective;
  const Micrograph x = deconvolve(io::load_image(in), k, cfg, &objective);
  io::save_image(out, x);
  std::cout << "data-fit MSE " << objective.front() << " -> " << objective.back() << "\nwrote " << out << "\n";
  return {out};
}

// --- precision-study -------------------------------------------------------

std::vector<fs::path> cmd_precision(const std::string& model, int step, const EvalArgs& data, const std::string& out) {
  const auto g = load_generator(model);
  const auto targets = load_split(data.manifest, data.root, data.split, data.synthetic, g->spec().target_side, data.seed);
  const std::vector<WirePrecision> precs{WirePrecision::u8, WirePrecision::f16, WirePrecision::f32};
  const auto rows = precision_study(*g, targets, step, precs, data.blur_targets);
  if (fs::path(out).has_parent_path()) fs::create_directories(fs::path(out).parent_path());
  std::ofstream os(out);
  os << "precision,root_mean,root_std,count\n";
  for (const auto& r : rows) {
    os << precision_name(r.precision) << "," << r.stats.root_mean << "," << r.stats.root_std << "," << r.stats.count
       << "\n";
    std::cout << precision_name(r.precision) << " root_mean=" << r.stats.root_mean << " root_std=" << r.stats.root_std
              << "\n";
  }
  return {out};
}

// --- serve -----------------------------------------------------------------

Server* g_server = nullptr;

void on_signal(int) {
  if (g_server != nullptr) g_server->stop();
}

void cmd_serve(const std::vector<std::string>& models, const std::string& host, int port) {
  auto reg = std::make_shared<ModelRegistry>();
  for (const auto& m : models) {
    const auto eq = m.find('=');
    if (eq == std::string::npos) throw InvalidInput("--model: expected name=checkpoint, got '" + m + "'");
    reg->add_checkpoint(m.substr(0, eq), m.substr(eq + 1));
  }
  if (reg->names().empty()) throw InvalidInput("serve: register at least one model");
  Server server(reg);
  const int bound = server.bind(host, port);
  g_server = &server;
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  std::cout << "listening on " << host << ":" << bound << std::endl;
  server.run();
  g_server = nullptr;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Compressed-sensing supersampling toolkit for point-scan micrographs"};
  app.require_subcommand(1);
  std::string runs_log = "runs.jsonl";
  app.add_option("--runs-log", runs_log, "Append-only run manifest (empty to disable)");

  PrepareArgs prep;
  auto* c_prep = app.add_subcommand("prepare-data", "Normalize images and write a split manifest");
  c_prep->add_option("--synthetic", prep.synthetic, "Generate this many synthetic micrographs");
  c_prep->add_option("--src", prep.src, "Directory of .tif/.raw source images");
  c_prep->add_option("--out", prep.out, "Output directory")->required();
  c_prep->add_option("--side", prep.side, "Synthetic image side")->check(CLI::PositiveNumber);
  c_prep->add_option("--seed", prep.seed, "Shuffle seed");

  std::string cfg_path, data_root_flag;
  std::map<std::string, std::string> overrides;
  std::vector<std::string> sets;
  bool quiet = false;
  auto* c_train = app.add_subcommand("train", "Train a generator");
  c_train->add_option("--config", cfg_path, "key = value config file");
  const std::vector<std::pair<std::string, std::string>> train_flags{
      {"--variant", "variant"},       {"--coverage", "steps"},
      {"--mode", "mode"},             {"--side", "side"},
      {"--base-channels", "base_channels"}, {"--depth", "depth"},
      {"--batch-size", "batch_size"}, {"--iterations", "iterations"},
      {"--adversarial-iterations", "adversarial_iterations"},
      {"--blur-targets", "blur_targets"}, {"--replay", "replay"},
      {"--predictors", "predictor_count"}, {"--seed", "seed"},
      {"--manifest", "manifest"},     {"--synthetic", "synthetic_count"},
      {"--checkpoint-every", "checkpoint_every"}, {"--out", "checkpoint_root"},
      {"--run-id", "run_id"}};
  for (const auto& [flag, key] : train_flags) {
    c_train->add_option_function<std::string>(flag, [&overrides, key = key](const std::string& v) { overrides[key] = v; },
                                              "config field " + key);
  }
  c_train->add_option("--set", sets, "Extra config field as key=value");
  c_train->add_option("--data-root", data_root_flag, "Root for relative manifest paths (default $DLSS_DATA_ROOT)");
  c_train->add_flag("--quiet", quiet, "No progress output");

  InferArgs inf;
  auto* c_infer = app.add_subcommand("infer", "Supersample one image");
  c_infer->add_option("--model", inf.model, "Checkpoint")->required();
  c_infer->add_option("--coverage", inf.step, "Coverage step s")->required()->check(CLI::PositiveNumber);
  c_infer->add_flag("--from-full", inf.full, "Input is full resolution; subsample it first");
  c_infer->add_flag("--overwrite-known", inf.overwrite_known, "Keep probed pixel values");
  c_infer->add_option("--width", inf.width, "Output width");
  c_infer->add_option("--height", inf.height, "Output height");
  c_infer->add_option("input", inf.in)->required();
  c_infer->add_option("output", inf.out)->required();

  EvalArgs ev;
  auto* c_eval = app.add_subcommand("evaluate", "Score methods on a split");
  c_eval->add_option("--method", ev.methods, "Comma list: nearest, area, bilinear, bicubic, lanczos, model:<ckpt>");
  c_eval->add_option("--coverage", ev.coverage, "Steps, e.g. 4..10");
  c_eval->add_option("--manifest", ev.manifest, "Dataset manifest (default: synthetic corpus)");
  c_eval->add_option("--data-root", ev.root, "Root for relative manifest paths");
  c_eval->add_option("--split", ev.split, "train, validation or test");
  c_eval->add_option("--synthetic", ev.synthetic, "Synthetic corpus size");
  c_eval->add_option("--side", ev.side, "Image side");
  c_eval->add_option("--seed", ev.seed, "Corpus seed");
  c_eval->add_flag("--blur-targets", ev.blur_targets, "Score against 5x5 sigma 2.5 blurred targets");
  c_eval->add_flag("--per-pixel", ev.per_pixel, "Write per-pixel RMSE maps and edge curves");
  c_eval->add_option("--sweep", ev.sweep, "Coverage sweep steps, e.g. 2..12");
  c_eval->add_option("--seen", ev.seen, "Steps seen in training, for sweep tags");
  c_eval->add_option("--out", ev.out, "Report directory");

  std::string kernel = "5x5:2.5", dec_in, dec_out;
  DeconvConfig dcfg;
  auto* c_dec = app.add_subcommand("deconvolve", "Deconvolve a Gaussian-blurred image");
  c_dec->add_option("--kernel", kernel, "<n>x<n>:<sigma>");
  c_dec->add_option("--iterations", dcfg.iterations, "Gradient steps");
  c_dec->add_option("--eta0", dcfg.eta0, "Initial step size");
  c_dec->add_option("--decay", dcfg.decay, "Per-step decay");
  c_dec->add_option("input", dec_in)->required();
  c_dec->add_option("output", dec_out)->required();

  std::string ps_model, ps_out = "precision.csv";
  int ps_step = 0;
  EvalArgs ps_data;
  auto* c_ps = app.add_subcommand("precision-study", "MSE after u8/f16/f32 input typecasts");
  c_ps->add_option("--model", ps_model, "Checkpoint")->required();
  c_ps->add_option("--coverage", ps_step, "Coverage step s")->required()->check(CLI::PositiveNumber);
  c_ps->add_option("--manifest", ps_data.manifest, "Dataset manifest");
  c_ps->add_option("--data-root", ps_data.root, "Root for relative manifest paths");
  c_ps->add_option("--split", ps_data.split, "Split");
  c_ps->add_option("--synthetic", ps_data.synthetic, "Synthetic corpus size");
  c_ps->add_option("--seed", ps_data.seed, "Corpus seed");
  c_ps->add_flag("--blur-targets", ps_data.blur_targets, "Score against 5x5 sigma 2.5 blurred targets");
  c_ps->add_option("--out", ps_out, "CSV path");

  std::vector<std::string> serve_models;
  std::string host = "127.0.0.1";
  int port = 8080;
  auto* c_serve = app.add_subcommand("serve", "HTTP supersampling endpoint");
  c_serve->add_option("--model", serve_models, "name=checkpoint (repeatable)")->required();
  c_serve->add_option("--host", host, "Bind address");
  c_serve->add_option("--port", port, "Port (0 for any)");

  std::string desc_model, desc_variant;
  auto* c_desc = app.add_subcommand("describe", "Print a generator architecture");
  c_desc->add_option("--model", desc_model, "Checkpoint");
  c_desc->add_option("--variant", desc_variant, "one_stage or two_stage (desk spec)");

  CLI11_PARSE(app, argc, argv);

  RunLog run;
  for (int i = 1; i < argc; ++i) run.config += (i > 1 ? " " : "") + std::string(argv[i]);
  try {
    if (c_prep->parsed()) {
      run.command = "prepare-data";
      run.seed = prep.seed;
      run.artifacts = cmd_prepare(prep);
    } else if (c_train->parsed()) {
      run.command = "train";
      auto kv = cfg_path.empty() ? std::map<std::string, std::string>{} : parse_key_values([&] {
        std::ifstream in(cfg_path);
        if (!in) throw InvalidInput("config: cannot read " + cfg_path);
        return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
      }());
      for (const auto& s : sets) {
        const auto eq = s.find('=');
        if (eq == std::string::npos) throw InvalidInput("--set: expected key=value, got '" + s + "'");
        overrides[s.substr(0, eq)] = s.substr(eq + 1);
      }
      for (const auto& [k, v] : overrides) kv[k] = v;
      const TrainRunConfig cfg = TrainRunConfig::from_key_values(kv);
      run.config = cfg.serialize();
      run.seed = cfg.seed;
      run.artifacts = cmd_train(cfg, data_root_flag, quiet);
    } else if (c_infer->parsed()) {
      run.command = "infer";
      run.artifacts = cmd_infer(inf);
    } else if (c_eval->parsed()) {
      run.command = "evaluate";
      run.seed = ev.seed;
      run.artifacts = cmd_evaluate(ev);
    } else if (c_dec->parsed()) {
      run.command = "deconvolve";
      run.artifacts = cmd_deconvolve(kernel, dec_in, dec_out, dcfg);
    } else if (c_ps->parsed()) {
      run.command = "precision-study";
      run.seed = ps_data.seed;
      run.artifacts = cmd_precision(ps_model, ps_step, ps_data, ps_out);
    } else if (c_serve->parsed()) {
      run.command = "serve";
      cmd_serve(serve_models, host, port);
    } else if (c_desc->parsed()) {
      run.command = "describe";
      if (!desc_model.empty()) {
        const auto g = load_generator(desc_model);
        std::cout << g->describe() << "parameters: " << g->parameter_count() << "\n";
      } else {
        const auto g = build_generator(GeneratorSpec::desk(parse_generator_variant(desc_variant.empty() ? "two_stage" : desc_variant)));
        std::cout << g->describe() << "parameters: " << g->parameter_count() << "\n";
      }
      return 0;
    }
    append_run(runs_log, run);
  } catch (const InvalidInput& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
