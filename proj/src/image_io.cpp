#include "dlss/image_io.hpp"

#include <algorithm>
#include <cmath>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

#include "dlss/error.hpp"

namespace dlss::io {
namespace {

std::vector<unsigned char> read_all(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidInput("cannot open " + path.string());
  return std::vector<unsigned char>(std::istreambuf_iterator<char>(in), {});
}

class TiffReader {
 public:
  explicit TiffReader(std::vector<unsigned char> bytes) : b_(std::move(bytes)) {
    if (b_.size() < 8) throw InvalidInput("tiff: truncated header");
    if (b_[0] == 'I' && b_[1] == 'I') {
      little_ = true;
    } else if (b_[0] == 'M' && b_[1] == 'M') {
      little_ = false;
    } else {
      throw InvalidInput("tiff: bad byte-order mark");
    }
    if (u16(2) != 42) throw InvalidInput("tiff: bad magic");
  }

  std::uint16_t u16(std::size_t off) const {
    need(off, 2);
    return little_ ? static_cast<std::uint16_t>(b_[off] | (b_[off + 1] << 8))
                   : static_cast<std::uint16_t>((b_[off] << 8) | b_[off + 1]);
  }
  std::uint32_t u32(std::size_t off) const {
    need(off, 4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) {
      const std::uint32_t byte = b_[off + (little_ ? i : 3 - i)];
      v |= byte << (8 * i);
    }
    return v;
  }

  // Values of a SHORT or LONG tag, inline or at an offset.
  std::vector<std::uint32_t> tag_values(std::size_t entry) const {
    const std::uint16_t type = u16(entry + 2);
    const std::uint32_t count = u32(entry + 4);
    const std::size_t width = type == 3 ? 2 : (type == 4 ? 4 : 0);
    if (width == 0) return {};
    std::size_t off = entry + 8;
    if (width * count > 4) off = u32(entry + 8);
    std::vector<std::uint32_t> out(count);
    for (std::uint32_t i = 0; i < count; ++i) out[i] = width == 2 ? u16(off + 2 * i) : u32(off + 4 * i);
    return out;
  }

  const std::vector<unsigned char>& bytes() const { return b_; }
  bool little() const { return little_; }

 private:
  void need(std::size_t off, std::size_t n) const {
    if (off + n > b_.size()) throw InvalidInput("tiff: read past end of file");
  }
  std::vector<unsigned char> b_;
  bool little_ = true;
};

void put16(std::vector<unsigned char>& v, std::uint16_t x) {
  v.push_back(static_cast<unsigned char>(x & 0xff));
  v.push_back(static_cast<unsigned char>(x >> 8));
}
void put32(std::vector<unsigned char>& v, std::uint32_t x) {
  for (int i = 0; i < 4; ++i) v.push_back(static_cast<unsigned char>((x >> (8 * i)) & 0xff));
}

}  // namespace

Micrograph read_tiff(const std::filesystem::path& path) {
  TiffReader t(read_all(path));
  const std::uint32_t ifd = t.u32(4);
  const std::uint16_t n = t.u16(ifd);
  std::uint32_t width = 0, height = 0, bits = 0, compression = 1, spp = 1, format = 1;
  std::vector<std::uint32_t> offsets, counts;
  for (std::uint16_t i = 0; i < n; ++i) {
    const std::size_t e = ifd + 2 + 12u * i;
    const std::uint16_t tag = t.u16(e);
    const auto vals = t.tag_values(e);
    if (vals.empty()) continue;
    switch (tag) {
      case 256: width = vals[0]; break;
      case 257: height = vals[0]; break;
      case 258: bits = vals[0]; break;
      case 259: compression = vals[0]; break;
      case 273: offsets = vals; break;
      case 277: spp = vals[0]; break;
      case 279: counts = vals; break;
      case 339: format = vals[0]; break;
      default: break;
    }
  }
  if (compression != 1) throw InvalidInput("tiff: only uncompressed images are supported");
  if (spp != 1) throw InvalidInput("tiff: only single-channel images are supported");
  if (width == 0 || height == 0) throw InvalidInput("tiff: missing dimensions");
  if (offsets.size() != counts.size() || offsets.empty()) throw InvalidInput("tiff: bad strip table");
  const bool is_float = format == 3 && bits == 32;
  const bool is_uint = format == 1 && (bits == 8 || bits == 16);
  if (!is_float && !is_uint) throw InvalidInput("tiff: unsupported sample format");

  std::vector<unsigned char> data;
  for (std::size_t s = 0; s < offsets.size(); ++s) {
    if (static_cast<std::size_t>(offsets[s]) + counts[s] > t.bytes().size()) throw InvalidInput("tiff: strip past end");
    data.insert(data.end(), t.bytes().begin() + offsets[s], t.bytes().begin() + offsets[s] + counts[s]);
  }
  const std::size_t px = static_cast<std::size_t>(width) * height;
  const std::size_t bps = bits / 8;
  if (data.size() < px * bps) throw InvalidInput("tiff: pixel data truncated");

  std::vector<double> v(px);
  for (std::size_t i = 0; i < px; ++i) {
    const unsigned char* p = data.data() + i * bps;
    std::uint32_t raw = 0;
    for (std::size_t k = 0; k < bps; ++k) raw |= static_cast<std::uint32_t>(p[t.little() ? k : bps - 1 - k]) << (8 * k);
    v[i] = is_float ? static_cast<double>(std::bit_cast<float>(raw)) : static_cast<double>(raw);
  }
  // Raw file contents may be out of [0,1]; callers normalize.
  return Micrograph(static_cast<int>(height), static_cast<int>(width), std::move(v));
}

void write_tiff(const std::filesystem::path& path, const Micrograph& m) {
  const std::uint32_t w = static_cast<std::uint32_t>(m.width());
  const std::uint32_t h = static_cast<std::uint32_t>(m.height());
  const std::uint32_t nbytes = w * h * 4;
  constexpr std::uint16_t kTags = 11;
  const std::uint32_t ifd_size = 2 + 12 * kTags + 4;
  const std::uint32_t data_off = 8 + ifd_size;

  std::vector<unsigned char> out;
  out.reserve(data_off + nbytes);
  out.push_back('I');
  out.push_back('I');
  put16(out, 42);
  put32(out, 8);
  put16(out, kTags);
  auto entry = [&](std::uint16_t tag, std::uint16_t type, std::uint32_t value) {
    put16(out, tag);
    put16(out, type);
    put32(out, 1);
    if (type == 3) {
      put16(out, static_cast<std::uint16_t>(value));
      put16(out, 0);
    } else {
      put32(out, value);
    }
  };
  entry(256, 4, w);
  entry(257, 4, h);
  entry(258, 3, 32);
  entry(259, 3, 1);
  entry(262, 3, 1);
  entry(273, 4, data_off);
  entry(277, 3, 1);
  entry(278, 4, h);
  entry(279, 4, nbytes);
  entry(284, 3, 1);
  entry(339, 3, 3);
  put32(out, 0);
  for (double v : m.values()) put32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));

  std::ofstream f(path, std::ios::binary);
  if (!f) throw InvalidInput("cannot write " + path.string());
  f.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
}

Micrograph read_raw(const std::filesystem::path& path) {
  std::ifstream hdr(path.string() + ".hdr");
  if (!hdr) throw InvalidInput("missing sidecar header " + path.string() + ".hdr");
  int width = 0, height = 0;
  if (!(hdr >> width >> height) || width <= 0 || height <= 0) throw InvalidInput("bad sidecar header for " + path.string());
  const auto bytes = read_all(path);
  const std::size_t px = static_cast<std::size_t>(width) * height;
  if (bytes.size() != px * 4) throw InvalidInput("raw payload length does not match header for " + path.string());
  std::vector<double> v(px);
  for (std::size_t i = 0; i < px; ++i) {
    const std::uint32_t raw = static_cast<std::uint32_t>(bytes[4 * i]) | (static_cast<std::uint32_t>(bytes[4 * i + 1]) << 8) |
                              (static_cast<std::uint32_t>(bytes[4 * i + 2]) << 16) |
                              (static_cast<std::uint32_t>(bytes[4 * i + 3]) << 24);
    v[i] = std::bit_cast<float>(raw);
  }
  return Micrograph(height, width, std::move(v));
}

void write_raw(const std::filesystem::path& path, const Micrograph& m) {
  std::vector<unsigned char> out;
  out.reserve(m.size() * 4);
  for (double v : m.values()) put32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  std::ofstream f(path, std::ios::binary);
  if (!f) throw InvalidInput("cannot write " + path.string());
  f.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
  std::ofstream hdr(path.string() + ".hdr");
  hdr << m.width() << ' ' << m.height() << '\n';
}

namespace {
bool is_tiff(const std::filesystem::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".tif" || ext == ".tiff";
}
}  // namespace

Micrograph load_image(const std::filesystem::path& path) { return is_tiff(path) ? read_tiff(path) : read_raw(path); }

void save_image(const std::filesystem::path& path, const Micrograph& m) {
  if (is_tiff(path)) {
    write_tiff(path, m);
  } else {
    write_raw(path, m);
  }
}

void write_pgm(const std::filesystem::path& path, const Micrograph& m, double lo, double hi) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw InvalidInput("cannot write " + path.string());
  f << "P5\n" << m.width() << ' ' << m.height() << "\n255\n";
  const double span = hi > lo ? hi - lo : 1.0;
  for (double v : m.values()) {
    const double t = std::clamp((v - lo) / span, 0.0, 1.0);
    f.put(static_cast<char>(static_cast<unsigned char>(std::lround(255.0 * t))));
  }
}

Split parse_split(std::string_view s) {
  if (s == "train") return Split::train;
  if (s == "validation") return Split::validation;
  if (s == "test") return Split::test;
  throw InvalidInput("unknown split '" + std::string(s) + "'");
}

std::string_view split_name(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::validation: return "validation";
    case Split::test: return "test";
  }
  return "?";
}

std::vector<ManifestRecord> read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InvalidInput("cannot open manifest " + path.string());
  std::vector<ManifestRecord> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    const auto comma = line.rfind(',');
    if (comma == std::string::npos) {
      throw InvalidInput(path.string() + ":" + std::to_string(lineno) + ": expected `path,split`");
    }
    std::string split = line.substr(comma + 1);
    while (!split.empty() && (split.back() == '\r' || split.back() == ' ')) split.pop_back();
    out.push_back({line.substr(0, comma), parse_split(split)});
  }
  return out;
}

void write_manifest(const std::filesystem::path& path, const std::vector<ManifestRecord>& records) {
  std::ofstream f(path);
  if (!f) throw InvalidInput("cannot write manifest " + path.string());
  for (const auto& r : records) f << r.path << ',' << split_name(r.split) << '\n';
}

}  // namespace dlss::io
