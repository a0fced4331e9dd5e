#include "dlss/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>

#include "dlss/error.hpp"
#include "dlss/nn/ops.hpp"
#include "dlss/nn/optim.hpp"
#include "dlss/replay.hpp"
#include "dlss/schedule.hpp"

namespace dlss {

namespace {

std::uint64_t mix(std::uint64_t seed, std::uint64_t index) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

std::vector<float> as_float(const Micrograph& m) { return {m.values().begin(), m.values().end()}; }

bool all_finite(std::span<const float> v) {
  return std::all_of(v.begin(), v.end(), [](float x) { return std::isfinite(x); });
}

struct Example {
  Micrograph target;
  int step;
};

std::string fmt(double x) {
  std::ostringstream os;
  os << std::setprecision(9) << x;
  return os.str();
}

void add_config_meta(Checkpoint& c, const TrainRunConfig& cfg) {
  for (const auto& [k, v] : cfg.to_key_values()) c.meta["config." + k] = v;
}

[[noreturn]] void abort_nonfinite(Checkpoint ckpt, const std::filesystem::path& run_dir, long long it) {
  ckpt.meta["diagnostic"] = "non-finite generator output";
  const auto path = run_dir / ("diagnostic-" + std::to_string(it) + ".bin");
  save_checkpoint(path, ckpt);
  throw StateError("training: non-finite output at iteration " + std::to_string(it) + "; diagnostic checkpoint " +
                   path.string());
}

}  // namespace

std::mt19937_64 example_rng(std::uint64_t seed, std::uint64_t index) { return std::mt19937_64(mix(seed, index)); }

Dataset Dataset::synthetic(int count, int side, std::uint64_t seed, const SynthConfig& cfg) {
  if (count < 1) throw InvalidInput("synthetic dataset: count must be >= 1");
  Dataset d;
  d.images.reserve(count);
  for (int i = 0; i < count; ++i) d.images.push_back(synth_corpus_image(mix(seed, static_cast<std::uint64_t>(i)), side, cfg));
  return d;
}

Dataset Dataset::synthetic_split(int count, int side, std::uint64_t seed, io::Split split) {
  if (count < 1) throw InvalidInput("synthetic dataset: count must be >= 1");
  std::vector<int> order(count);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(mix(seed, 0xC0FFEE));
  std::shuffle(order.begin(), order.end(), rng);
  const int n_train = count * 70 / 100;
  const int n_val = count * 15 / 100;
  int lo = 0, hi = n_train;
  if (split == io::Split::validation) {
    lo = n_train;
    hi = n_train + n_val;
  } else if (split == io::Split::test) {
    lo = n_train + n_val;
    hi = count;
  }
  Dataset d;
  for (int k = lo; k < hi; ++k) d.images.push_back(synth_corpus_image(mix(seed, static_cast<std::uint64_t>(order[k])), side));
  return d;
}

Dataset Dataset::from_manifest(const std::filesystem::path& manifest, io::Split split, const std::filesystem::path& root,
                               int* skipped) {
  const auto records = io::read_manifest(manifest);
  const std::filesystem::path base = root.empty() ? manifest.parent_path() : root;
  Dataset d;
  int bad = 0;
  for (const auto& r : records) {
    if (r.split != split) continue;
    const std::filesystem::path p = std::filesystem::path(r.path).is_absolute() ? std::filesystem::path(r.path) : base / r.path;
    try {
      Micrograph m = io::load_image(p);
      if (!m.is_valid()) m = normalize_crop(m);
      d.images.push_back(std::move(m));
    } catch (const std::exception&) {
      ++bad;
    }
  }
  if (skipped != nullptr) *skipped = bad;
  return d;
}

ExampleStream::ExampleStream(const Dataset& data, int side, std::uint64_t seed)
    : data_(data), side_(side), seed_(seed), shuffle_rng_(mix(seed, 0x5EED)) {
  if (data.images.empty()) throw InvalidInput("example stream: empty dataset");
  for (const auto& m : data.images) {
    if (m.height() < side || m.width() < side) throw InvalidInput("example stream: image smaller than the training side");
  }
  order_.resize(data.images.size());
  std::iota(order_.begin(), order_.end(), std::size_t{0});
  cursor_ = order_.size();
}

Micrograph ExampleStream::next() {
  if (cursor_ == order_.size()) {
    std::shuffle(order_.begin(), order_.end(), shuffle_rng_);
    cursor_ = 0;
  }
  const Micrograph& src = data_.images[order_[cursor_++]];
  std::mt19937_64 rng = example_rng(seed_, static_cast<std::uint64_t>(drawn_++));
  const int r = std::uniform_int_distribution<int>(0, src.height() - side_)(rng);
  const int c = std::uniform_int_distribution<int>(0, src.width() - side_)(rng);
  Micrograph m = crop(src, r, c, side_, side_);
  const int flags = std::uniform_int_distribution<int>(0, 15)(rng);
  return augment(m, flags & 1, (flags >> 1) & 1, flags >> 2);
}

int draw_step(const TrainRunConfig& cfg, std::mt19937_64& rng) {
  if (cfg.steps.empty()) throw InvalidInput("config.steps: empty");
  if (cfg.mode != CoverageMode::unified) return cfg.steps.front();
  return cfg.steps[std::uniform_int_distribution<std::size_t>(0, cfg.steps.size() - 1)(rng)];
}

std::vector<double> boxcar(const std::vector<double>& v, std::size_t window) {
  if (window == 0) throw InvalidInput("boxcar: window must be >= 1");
  std::vector<double> out(v.size());
  double s = 0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    s += v[i];
    if (i >= window) s -= v[i - window];
    out[i] = s / static_cast<double>(std::min(i + 1, window));
  }
  return out;
}

Checkpoint generator_checkpoint(const Generator& g, long long iteration) {
  Checkpoint c;
  const GeneratorSpec& s = g.spec();
  c.architecture_hash = g.architecture_hash();
  c.architecture = g.describe();
  c.iteration = iteration;
  c.meta["generator.variant"] = std::string(generator_variant_name(s.variant));
  c.meta["generator.side"] = std::to_string(s.target_side);
  c.meta["generator.base_channels"] = std::to_string(s.base_channels);
  c.meta["generator.depth"] = std::to_string(s.depth);
  c.meta["generator.step"] = std::to_string(s.step);
  c.meta["generator.output_init_std"] = fmt(s.output_init_std);
  c.add_section("G/", g.export_state());
  return c;
}

std::unique_ptr<Generator> load_generator(const Checkpoint& ckpt) {
  auto get = [&](const std::string& k) {
    auto it = ckpt.meta.find(k);
    if (it == ckpt.meta.end()) throw InvalidInput("checkpoint: missing metadata '" + k + "'");
    return it->second;
  };
  GeneratorSpec s;
  s.variant = parse_generator_variant(get("generator.variant"));
  s.target_side = std::stoi(get("generator.side"));
  s.base_channels = std::stoi(get("generator.base_channels"));
  s.depth = std::stoi(get("generator.depth"));
  s.step = std::stoi(get("generator.step"));
  s.output_init_std = std::stod(get("generator.output_init_std"));
  auto g = build_generator(s);
  if (g->architecture_hash() != ckpt.architecture_hash) throw InvalidInput("checkpoint: architecture hash mismatch");
  g->import_state(ckpt.section("G/"));
  return g;
}

std::unique_ptr<Generator> load_generator(const std::filesystem::path& checkpoint) {
  if (!std::filesystem::exists(checkpoint)) throw InvalidInput("checkpoint not found: " + checkpoint.string());
  return load_generator(load_checkpoint(checkpoint));
}

TrainResult train_one_stage(const TrainRunConfig& cfg, const Dataset& data, ProgressFn progress) {
  cfg.validate();
  if (cfg.variant != GeneratorVariant::one_stage) throw InvalidInput("train_one_stage: config variant must be one_stage");
  const int side = cfg.side;
  const int s = cfg.steps.front();
  const Coverage cov(s);

  std::mt19937_64 rng(mix(cfg.seed, 1));
  OneStageGenerator g(cfg.generator_spec());
  g.initialize(rng);
  nn::Adam<float> opt(g.networks()[0]->trainable());
  const OneStageSchedule sched(cfg.iterations);
  const LossConfig lc;
  AlrcState alrc;
  ExampleStream stream(data, side, cfg.seed);

  TrainResult result;
  result.run_dir = std::filesystem::path(cfg.checkpoint_root) / cfg.run_id;
  std::filesystem::create_directories(result.run_dir);
  std::ofstream metrics(result.run_dir / "metrics.csv");
  metrics << "iteration,loss_raw,loss_effective,lr,beta,frozen\n";
  LossLog losses(result.run_dir / "losses.csv");

  auto snapshot = [&](long long it) {
    Checkpoint c = generator_checkpoint(g, it);
    add_config_meta(c, cfg);
    c.alrc["one_stage"] = alrc;
    c.add_section("optG/", opt.export_state("G"));
    return c;
  };

  for (long long i = 0; i < cfg.iterations; ++i) {
    const Hyper h = sched.at(i);
    g.set_frozen(sched.frozen(i));
    std::vector<Micrograph> lowres, blurred;
    for (int b = 0; b < cfg.batch_size; ++b) {
      const Micrograph t = stream.next();
      lowres.push_back(downsample_nearest(t, cov));
      blurred.push_back(blur(t, lc.eval_blur));
    }
    const nn::Tensor<float> out = g.forward(to_tensor(lowres), nn::Mode::train);
    if (!all_finite(out.value())) abort_nonfinite(snapshot(i), result.run_dir, i);
    const nn::Tensor<float> tgt = to_tensor(blurred);
    const LossTerm<float> term = loss_one_stage<float>(out, tgt.value(), lc, alrc);
    nn::backward(term.raw_tensor, static_cast<float>(term.grad_scale));
    opt.step(h.lr, h.beta);

    result.effective_loss.push_back(term.effective);
    result.steps_used.push_back(s);
    metrics << i << "," << fmt(term.raw) << "," << fmt(term.effective) << "," << h.lr << "," << h.beta << ","
            << (sched.frozen(i) ? 1 : 0) << "\n";
    losses.write(i, "one_stage", term.raw, term.effective);
    if (progress) progress(i, term.effective);
    if (cfg.checkpoint_every > 0 && (i + 1) % cfg.checkpoint_every == 0 && i + 1 < cfg.iterations) {
      const auto p = checkpoint_path(cfg.checkpoint_root, cfg.run_id, i + 1);
      save_checkpoint(p, snapshot(i + 1));
      result.checkpoints.push_back(p);
    }
  }
  const auto p = checkpoint_path(cfg.checkpoint_root, cfg.run_id, cfg.iterations);
  save_checkpoint(p, snapshot(cfg.iterations));
  result.checkpoints.push_back(p);
  return result;
}

TrainResult train_two_stage(const TrainRunConfig& cfg, const Dataset& data, ProgressFn progress) {
  cfg.validate();
  if (cfg.variant != GeneratorVariant::two_stage) throw InvalidInput("train_two_stage: config variant must be two_stage");
  const int side = cfg.side;

  std::mt19937_64 rng(mix(cfg.seed, 1));
  TwoStageGenerator g(cfg.generator_spec());
  g.initialize(rng);
  const bool with_adv = cfg.adversarial_iterations > 0;
  DiscriminatorSetSpec ds;
  ds.target_side = side;
  ds.base_channels = cfg.base_channels;
  std::unique_ptr<DiscriminatorSet> disc;
  if (with_adv) {
    disc = std::make_unique<DiscriminatorSet>(ds);
    disc->initialize(rng);
  }
  std::unique_ptr<PredictorEnsemble> ensemble;
  const LossConfig lc;
  if (!cfg.blur_targets) ensemble = std::make_unique<PredictorEnsemble>(cfg.predictor_count, lc.crop_size, mix(cfg.seed, 2));

  nn::Adam<float> opt_g(g.generator_params());
  nn::Adam<float> opt_t(g.trainer_net().trainable());
  std::unique_ptr<nn::Adam<float>> opt_d;
  if (disc) opt_d = std::make_unique<nn::Adam<float>>(disc->trainable());

  const TwoStageSchedule sched(cfg.iterations, cfg.adversarial_iterations);
  const CoverageScale scale;
  AlrcState alrc_mse, alrc_aux;
  ReplayBuffer<Example> replay;
  ExampleStream stream(data, side, cfg.seed);
  std::mt19937_64 loop_rng(mix(cfg.seed, 3));

  TrainResult result;
  result.run_dir = std::filesystem::path(cfg.checkpoint_root) / cfg.run_id;
  std::filesystem::create_directories(result.run_dir);
  std::ofstream metrics(result.run_dir / "metrics.csv");
  metrics << "iteration,step,replayed,adversarial,mse_raw,mse_effective,aux_raw,aux_effective,adv,disc,predictor,"
             "lr_g,beta_g,lr_t,beta_t,lr_m,lr_d\n";
  LossLog losses(result.run_dir / "losses.csv");

  auto snapshot = [&](long long it) {
    Checkpoint c = generator_checkpoint(g, it);
    add_config_meta(c, cfg);
    c.alrc["mse"] = alrc_mse;
    c.alrc["aux"] = alrc_aux;
    c.add_section("optG/", opt_g.export_state("G"));
    c.add_section("optT/", opt_t.export_state("T"));
    if (disc) {
      c.add_section("D/", disc->export_state());
      c.add_section("optD/", opt_d->export_state("D"));
    }
    if (ensemble) c.add_section("M/", ensemble->export_state());
    return c;
  };

  const long long total = sched.total();
  for (long long i = 0; i < total; ++i) {
    const Hyper hg = sched.at(i, NetRole::G);
    const Hyper ht = sched.at(i, NetRole::T);
    const Hyper hm = sched.at(i, NetRole::M);
    const Hyper hd = sched.at(i, NetRole::D);
    const bool adversarial = sched.adversarial(i);
    g.set_frozen(sched.frozen(i));

    Example fresh{stream.next(), draw_step(cfg, loop_rng)};
    bool was_replayed = false;
    const Example ex = cfg.replay ? replay.maybe_replay(std::move(fresh), loop_rng, &was_replayed) : std::move(fresh);
    result.replayed += was_replayed ? 1 : 0;
    const int s = ex.step;
    const Coverage cov(s);
    const double c = cov.fraction();
    const Micrograph& target = ex.target;

    const nn::Tensor<float> input = to_tensor(upsample_nearest(downsample_nearest(target, cov), side, s));
    const auto outs = g.forward_all(input, nn::Mode::train);
    if (!all_finite(outs.image.value())) abort_nonfinite(snapshot(i), result.run_dir, i);

    LossTerm<float> mse;
    double predictor_loss = 0;
    if (!adversarial) {
      if (cfg.blur_targets) {
        const std::vector<float> tgt = as_float(blur(target, lc.eval_blur));
        const auto masked = nn::overwrite_probes<float>(outs.image, tgt, s);
        mse = loss_mse_blurred<float>(masked, tgt, c, scale, lc, alrc_mse);
      } else {
        const std::vector<float> tgt = as_float(target);
        const auto masked = nn::overwrite_probes<float>(outs.image, tgt, s);
        const double mu_m = predictor_mean(*ensemble, target, loop_rng);
        double plain = 0;
        for (std::size_t k = 0; k < tgt.size(); ++k) {
          const double d = masked.value()[k] - tgt[k];
          plain += d * d;
        }
        plain /= static_cast<double>(tgt.size());
        const double label = lc.lambda_mse * plain / scale.p(c);
        mse = loss_mse_homogenized<float>(masked, tgt, c, scale, lc, alrc_mse, mu_m);
        if (hm.active) predictor_loss = predictor_train_step(*ensemble, target, label, loop_rng, hm.lr, hm.beta);
      }
    } else {
      const std::vector<float> tgt = as_float(blur(target, lc.adv_blur));
      const std::vector<float> raw_target = as_float(target);
      const auto masked = nn::overwrite_probes<float>(outs.image, raw_target, s);
      mse = loss_mse_blurred<float>(nn::fixed_blur<float>(masked, lc.adv_blur), tgt, c, scale, lc, alrc_mse);
    }

    const std::vector<float> half = as_float(half_blurred_target(target, lc.eval_blur));
    const auto trainer_out = g.trainer(outs.features, input, nn::Mode::train);
    const LossTerm<float> aux = loss_aux<float>(trainer_out, half, c, scale, lc, alrc_aux);

    std::vector<nn::Tensor<float>> terms{mse.raw_tensor, aux.raw_tensor};
    std::vector<float> weights{static_cast<float>(mse.grad_scale), static_cast<float>(aux.grad_scale)};
    double adv_value = 0;
    if (adversarial) {
      disc->power_iterate();
      const auto fake_scores = disc->scores(outs.image, nn::Mode::train, &loop_rng);
      const auto adv = loss_generator_adv<float>(fake_scores);
      adv_value = adv.item();
      terms.push_back(adv);
      weights.push_back(1.0f);
    }
    nn::backward(nn::weighted_sum<float>(terms, weights));
    opt_g.step(hg.lr, hg.beta);
    opt_t.step(ht.lr, ht.beta);

    double disc_value = 0;
    if (adversarial) {
      opt_d->zero_grad();
      const nn::Tensor<float> fake =
          nn::Tensor<float>::from(outs.image.shape(), {outs.image.value().begin(), outs.image.value().end()});
      const auto fs = disc->scores(fake, nn::Mode::train, &loop_rng);
      const auto rs = disc->scores(to_tensor(target), nn::Mode::train, &loop_rng);
      const auto ld = loss_discriminator<float>(fs, rs);
      disc_value = ld.item();
      nn::backward(ld);
      opt_d->step(hd.lr, hd.beta);
    }

    if (cfg.replay) replay.offer(ex, mse.raw);

    const double effective = loss_generator_total(mse.effective, aux.effective, adv_value);
    result.effective_loss.push_back(effective);
    result.steps_used.push_back(s);
    metrics << i << "," << s << "," << (was_replayed ? 1 : 0) << "," << (adversarial ? 1 : 0) << "," << fmt(mse.raw) << ","
            << fmt(mse.effective) << "," << fmt(aux.raw) << "," << fmt(aux.effective) << "," << fmt(adv_value) << ","
            << fmt(disc_value) << "," << fmt(predictor_loss) << "," << hg.lr << "," << hg.beta << "," << ht.lr << ","
            << ht.beta << "," << (hm.active ? hm.lr : 0.0) << "," << (hd.active ? hd.lr : 0.0) << "\n";
    losses.write(i, adversarial ? "mse_adv_blur" : (cfg.blur_targets ? "mse_blur" : "mse_homogenized"), mse.raw,
                 mse.effective);
    losses.write(i, "aux", aux.raw, aux.effective);
    if (adversarial) {
      losses.write(i, "generator_adv", adv_value, adv_value);
      losses.write(i, "discriminator", disc_value, disc_value);
    }
    if (ensemble && hm.active) losses.write(i, "predictor", predictor_loss, predictor_loss);
    if (progress) progress(i, effective);
    if (cfg.checkpoint_every > 0 && (i + 1) % cfg.checkpoint_every == 0 && i + 1 < total) {
      const auto p = checkpoint_path(cfg.checkpoint_root, cfg.run_id, i + 1);
      save_checkpoint(p, snapshot(i + 1));
      result.checkpoints.push_back(p);
    }
  }
  const auto p = checkpoint_path(cfg.checkpoint_root, cfg.run_id, total);
  save_checkpoint(p, snapshot(total));
  result.checkpoints.push_back(p);
  return result;
}

TrainResult train(const TrainRunConfig& cfg, const Dataset& data, ProgressFn progress) {
  return cfg.variant == GeneratorVariant::one_stage ? train_one_stage(cfg, data, std::move(progress))
                                                    : train_two_stage(cfg, data, std::move(progress));
}

}  // namespace dlss
