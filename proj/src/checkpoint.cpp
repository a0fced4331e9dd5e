#include "dlss/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "dlss/error.hpp"

namespace dlss {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

constexpr char kMagic[8] = {'D', 'L', 'S', 'S', 'C', 'K', 'P', 'T'};

class Writer {
 public:
  explicit Writer(std::ofstream& out) : out_(out) {}
  template <class T>
  void pod(const T& v) {
    out_.write(reinterpret_cast<const char*>(&v), sizeof(T));
  }
  void str(const std::string& s) {
    pod(static_cast<std::uint32_t>(s.size()));
    out_.write(s.data(), static_cast<std::streamsize>(s.size()));
  }

 private:
  std::ofstream& out_;
};

class Reader {
 public:
  Reader(std::ifstream& in, std::string where) : in_(in), where_(std::move(where)) {}
  template <class T>
  T pod() {
    T v{};
    in_.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in_) throw InvalidInput(where_ + ": truncated checkpoint");
    return v;
  }
  std::string str() {
    const auto n = pod<std::uint32_t>();
    if (n > (1u << 26)) throw InvalidInput(where_ + ": corrupt string length");
    std::string s(n, '\0');
    in_.read(s.data(), n);
    if (!in_) throw InvalidInput(where_ + ": truncated checkpoint");
    return s;
  }
  void bytes(void* dst, std::size_t n) {
    in_.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
    if (!in_) throw InvalidInput(where_ + ": truncated checkpoint");
  }

 private:
  std::ifstream& in_;
  std::string where_;
};

}  // namespace

std::vector<nn::NamedArray> Checkpoint::section(const std::string& prefix) const {
  std::vector<nn::NamedArray> out;
  for (const auto& t : tensors) {
    if (t.name.rfind(prefix, 0) == 0) out.push_back({t.name.substr(prefix.size()), t.values});
  }
  return out;
}

void Checkpoint::add_section(const std::string& prefix, const std::vector<nn::NamedArray>& arrays) {
  for (const auto& a : arrays) tensors.push_back({prefix + a.name, a.values});
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw InvalidInput("checkpoint: cannot write " + tmp);
    Writer w(out);
    out.write(kMagic, sizeof kMagic);
    w.pod(Checkpoint::kVersion);
    w.pod(ckpt.architecture_hash);
    w.pod(static_cast<std::int64_t>(ckpt.iteration));
    w.str(ckpt.architecture);
    w.pod(static_cast<std::uint32_t>(ckpt.meta.size()));
    for (const auto& [k, v] : ckpt.meta) {
      w.str(k);
      w.str(v);
    }
    w.pod(static_cast<std::uint32_t>(ckpt.alrc.size()));
    for (const auto& [k, s] : ckpt.alrc) {
      w.str(k);
      for (double x : {s.mu1, s.mu2, s.beta1, s.beta2, s.n}) w.pod(x);
    }
    w.pod(static_cast<std::uint32_t>(ckpt.tensors.size()));
    for (const auto& t : ckpt.tensors) {
      w.str(t.name);
      w.pod(static_cast<std::uint64_t>(t.values.size()));
      out.write(reinterpret_cast<const char*>(t.values.data()), static_cast<std::streamsize>(t.values.size() * sizeof(double)));
    }
    if (!out) throw InvalidInput("checkpoint: write failed for " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidInput("checkpoint: cannot open " + path.string());
  Reader r(in, "checkpoint " + path.string());
  char magic[8];
  r.bytes(magic, sizeof magic);
  if (std::memcmp(magic, kMagic, sizeof kMagic) != 0) throw InvalidInput("checkpoint " + path.string() + ": bad magic");
  const auto version = r.pod<std::uint32_t>();
  if (version != Checkpoint::kVersion) {
    throw InvalidInput("checkpoint " + path.string() + ": unsupported version " + std::to_string(version));
  }
  Checkpoint c;
  c.architecture_hash = r.pod<std::uint64_t>();
  c.iteration = r.pod<std::int64_t>();
  c.architecture = r.str();
  const auto n_meta = r.pod<std::uint32_t>();
  for (std::uint32_t i = 0; i < n_meta; ++i) {
    std::string k = r.str();
    c.meta[k] = r.str();
  }
  const auto n_alrc = r.pod<std::uint32_t>();
  for (std::uint32_t i = 0; i < n_alrc; ++i) {
    std::string k = r.str();
    AlrcState s;
    s.mu1 = r.pod<double>();
    s.mu2 = r.pod<double>();
    s.beta1 = r.pod<double>();
    s.beta2 = r.pod<double>();
    s.n = r.pod<double>();
    c.alrc[k] = s;
  }
  const auto n_t = r.pod<std::uint32_t>();
  for (std::uint32_t i = 0; i < n_t; ++i) {
    nn::NamedArray a;
    a.name = r.str();
    const auto n = r.pod<std::uint64_t>();
    if (n > (1ull << 32)) throw InvalidInput("checkpoint " + path.string() + ": corrupt tensor length");
    a.values.resize(n);
    r.bytes(a.values.data(), n * sizeof(double));
    c.tensors.push_back(std::move(a));
  }
  return c;
}

std::filesystem::path checkpoint_path(const std::filesystem::path& root, const std::string& run_id, long long iteration) {
  return root / run_id / (std::to_string(iteration) + ".bin");
}

std::filesystem::path latest_checkpoint(const std::filesystem::path& run_dir) {
  std::filesystem::path best;
  long long best_it = -1;
  if (!std::filesystem::is_directory(run_dir)) return best;
  for (const auto& e : std::filesystem::directory_iterator(run_dir)) {
    if (e.path().extension() != ".bin") continue;
    try {
      const long long it = std::stoll(e.path().stem().string());
      if (it > best_it) {
        best_it = it;
        best = e.path();
      }
    } catch (const std::exception&) {
    }
  }
  return best;
}

}  // namespace dlss
