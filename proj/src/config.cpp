#include "dlss/config.hpp"

#include <fstream>
#include <sstream>

#include "dlss/error.hpp"

namespace dlss {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

long long to_integer(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const long long x = std::stoll(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw InvalidInput("config." + key + ": expected an integer, got '" + v + "'");
  }
}

double to_real(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double x = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw InvalidInput("config." + key + ": expected a number, got '" + v + "'");
  }
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw InvalidInput("config." + key + ": expected true/false, got '" + v + "'");
}

std::string real_str(double x) {
  std::ostringstream os;
  os.precision(17);
  os << x;
  return os.str();
}

}  // namespace

std::map<std::string, std::string> parse_key_values(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw InvalidInput("config line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    if (key.empty()) throw InvalidInput("config line " + std::to_string(lineno) + ": empty key");
    if (!kv.emplace(key, trim(line.substr(eq + 1))).second) {
      throw InvalidInput("config line " + std::to_string(lineno) + ": duplicate key '" + key + "'");
    }
  }
  return kv;
}

std::string format_key_values(const std::map<std::string, std::string>& kv) {
  std::string out;
  for (const auto& [k, v] : kv) out += k + " = " + v + "\n";
  return out;
}

std::vector<int> parse_steps(const std::string& s) {
  std::vector<int> out;
  const auto dots = s.find("..");
  if (dots != std::string::npos) {
    const long long a = to_integer("steps", trim(s.substr(0, dots)));
    const long long b = to_integer("steps", trim(s.substr(dots + 2)));
    if (a < 1 || b < a) throw InvalidInput("config.steps: bad range '" + s + "'");
    for (long long i = a; i <= b; ++i) out.push_back(static_cast<int>(i));
    return out;
  }
  std::istringstream in(s);
  std::string item;
  while (std::getline(in, item, ',')) {
    const long long v = to_integer("steps", trim(item));
    if (v < 1) throw InvalidInput("config.steps: steps must be >= 1");
    out.push_back(static_cast<int>(v));
  }
  if (out.empty()) throw InvalidInput("config.steps: empty");
  return out;
}

std::string format_steps(const std::vector<int>& steps) {
  std::string out;
  for (std::size_t i = 0; i < steps.size(); ++i) out += (i ? "," : "") + std::to_string(steps[i]);
  return out;
}

TrainRunConfig TrainRunConfig::defaults(GeneratorVariant v) {
  TrainRunConfig c;
  c.variant = v;
  if (v == GeneratorVariant::one_stage) c.batch_size = 16;
  return c;
}

void TrainRunConfig::validate() const {
  if (run_id.empty() || run_id.find('/') != std::string::npos) throw InvalidInput("config.run_id: must be a non-empty name without '/'");
  if (steps.empty()) throw InvalidInput("config.steps: empty");
  for (int s : steps) {
    if (s < 1 || s > side) throw InvalidInput("config.steps: step " + std::to_string(s) + " out of range");
  }
  if (mode == CoverageMode::individual_coverage && steps.size() != 1) {
    throw InvalidInput("config.steps: individual_coverage runs take exactly one step");
  }
  if (variant == GeneratorVariant::one_stage && mode != CoverageMode::individual_coverage) {
    throw InvalidInput("config.mode: one_stage generators are trained for a single coverage");
  }
  if (variant == GeneratorVariant::two_stage && batch_size != 1) throw InvalidInput("config.batch_size: two_stage training uses batch size 1");
  if (batch_size < 1) throw InvalidInput("config.batch_size: must be >= 1");
  if (iterations < 8) throw InvalidInput("config.iterations: must be >= 8");
  if (adversarial_iterations < 0 || adversarial_iterations == 1) throw InvalidInput("config.adversarial_iterations: must be 0 or >= 2");
  if (variant == GeneratorVariant::one_stage && adversarial_iterations != 0) {
    throw InvalidInput("config.adversarial_iterations: one_stage training is non-adversarial");
  }
  if (predictor_count < 1) throw InvalidInput("config.predictor_count: must be >= 1");
  if (synthetic_count < 1) throw InvalidInput("config.synthetic_count: must be >= 1");
  if (checkpoint_every < 0) throw InvalidInput("config.checkpoint_every: must be >= 0");
  if (side < 8 || side % 4 != 0) throw InvalidInput("config.side: must be a multiple of 4 and >= 8");
  if (base_channels < 2) throw InvalidInput("config.base_channels: must be >= 2");
  if (depth < 1) throw InvalidInput("config.depth: must be >= 1");
  if (!(output_init_std > 0)) throw InvalidInput("config.output_init_std: must be positive");
  try {
    generator_spec().validate();
  } catch (const InvalidInput& e) {
    throw InvalidInput(std::string("config: ") + e.what());
  }
}

GeneratorSpec TrainRunConfig::generator_spec() const {
  GeneratorSpec g;
  g.variant = variant;
  g.target_side = side;
  g.base_channels = base_channels;
  g.depth = depth;
  g.step = steps.empty() ? 1 : steps.front();
  g.output_init_std = output_init_std;
  return g;
}

std::map<std::string, std::string> TrainRunConfig::to_key_values() const {
  return {
      {"run_id", run_id},
      {"variant", std::string(generator_variant_name(variant))},
      {"mode", mode == CoverageMode::unified ? "unified" : "individual_coverage"},
      {"steps", format_steps(steps)},
      {"side", std::to_string(side)},
      {"base_channels", std::to_string(base_channels)},
      {"depth", std::to_string(depth)},
      {"batch_size", std::to_string(batch_size)},
      {"iterations", std::to_string(iterations)},
      {"adversarial_iterations", std::to_string(adversarial_iterations)},
      {"blur_targets", blur_targets ? "true" : "false"},
      {"replay", replay ? "true" : "false"},
      {"predictor_count", std::to_string(predictor_count)},
      {"seed", std::to_string(seed)},
      {"manifest", manifest},
      {"synthetic_count", std::to_string(synthetic_count)},
      {"checkpoint_every", std::to_string(checkpoint_every)},
      {"checkpoint_root", checkpoint_root},
      {"output_init_std", real_str(output_init_std)},
  };
}

TrainRunConfig TrainRunConfig::from_key_values(const std::map<std::string, std::string>& kv) {
  TrainRunConfig c;
  auto it = kv.find("variant");
  if (it != kv.end()) c = defaults(parse_generator_variant(it->second));
  for (const auto& [k, v] : kv) {
    if (k == "run_id") c.run_id = v;
    else if (k == "variant") c.variant = parse_generator_variant(v);
    else if (k == "mode") {
      if (v == "unified") c.mode = CoverageMode::unified;
      else if (v == "individual_coverage") c.mode = CoverageMode::individual_coverage;
      else throw InvalidInput("config.mode: expected individual_coverage or unified, got '" + v + "'");
    } else if (k == "steps") c.steps = parse_steps(v);
    else if (k == "side") c.side = static_cast<int>(to_integer(k, v));
    else if (k == "base_channels") c.base_channels = static_cast<int>(to_integer(k, v));
    else if (k == "depth") c.depth = static_cast<int>(to_integer(k, v));
    else if (k == "batch_size") c.batch_size = static_cast<int>(to_integer(k, v));
    else if (k == "iterations") c.iterations = to_integer(k, v);
    else if (k == "adversarial_iterations") c.adversarial_iterations = to_integer(k, v);
    else if (k == "blur_targets") c.blur_targets = to_bool(k, v);
    else if (k == "replay") c.replay = to_bool(k, v);
    else if (k == "predictor_count") c.predictor_count = static_cast<int>(to_integer(k, v));
    else if (k == "seed") c.seed = static_cast<std::uint64_t>(to_integer(k, v));
    else if (k == "manifest") c.manifest = v;
    else if (k == "synthetic_count") c.synthetic_count = static_cast<int>(to_integer(k, v));
    else if (k == "checkpoint_every") c.checkpoint_every = to_integer(k, v);
    else if (k == "checkpoint_root") c.checkpoint_root = v;
    else if (k == "output_init_std") c.output_init_std = to_real(k, v);
    else throw InvalidInput("config." + k + ": unknown field");
  }
  return c;
}

TrainRunConfig TrainRunConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InvalidInput("config: cannot read " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

}  // namespace dlss
