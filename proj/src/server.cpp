#include "dlss/server.hpp"

#include <httplib.h>

#include <algorithm>
#include <cctype>
#include <json.hpp>

#include "dlss/config.hpp"
#include "dlss/error.hpp"
#include "dlss/serving.hpp"
#include "dlss/training.hpp"

namespace dlss {

namespace {

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

const std::string* find_header(const std::map<std::string, std::string>& h, const std::string& key) {
  const std::string k = lower(key);
  for (const auto& [name, value] : h) {
    if (lower(name) == k) return &value;
  }
  return nullptr;
}

HttpReply error_reply(int status, const std::string& msg) {
  HttpReply r;
  r.status = status;
  r.content_type = "application/json";
  r.body = nlohmann::json{{"error", msg}}.dump();
  return r;
}

int parse_positive(const std::string& s, const std::string& what) {
  std::size_t used = 0;
  int v = 0;
  try {
    v = std::stoi(s, &used);
  } catch (const std::exception&) {
    throw InvalidInput(what + " is not an integer");
  }
  if (used != s.size() || v < 1) throw InvalidInput(what + " must be a positive integer");
  return v;
}

}  // namespace

void ModelRegistry::add(const std::string& name, ModelEntry entry) {
  if (!entry.generator) throw InvalidInput("registry: null generator for '" + name + "'");
  std::lock_guard lock(mu_);
  auto next = std::make_shared<Table>(*table_);
  (*next)[name] = std::move(entry);
  table_ = std::move(next);
}

void ModelRegistry::add_checkpoint(const std::string& name, const std::string& path) {
  const Checkpoint ckpt = load_checkpoint(path);
  ModelEntry e;
  e.generator = load_generator(ckpt);
  const auto it = ckpt.meta.find("config.steps");
  if (it != ckpt.meta.end()) {
    e.steps = parse_steps(it->second);
  } else if (e.generator->spec().variant == GeneratorVariant::one_stage) {
    e.steps = {e.generator->spec().step};
  } else {
    for (int s = 1; s <= 16; ++s) e.steps.push_back(s);
  }
  add(name, std::move(e));
}

void ModelRegistry::replace(Table table) {
  auto next = std::make_shared<const Table>(std::move(table));
  std::lock_guard lock(mu_);
  table_ = std::move(next);
}

std::shared_ptr<const ModelRegistry::Table> ModelRegistry::snapshot() const {
  std::lock_guard lock(mu_);
  return table_;
}

std::vector<std::string> ModelRegistry::names() const {
  std::vector<std::string> out;
  for (const auto& [k, v] : *snapshot()) out.push_back(k);
  return out;
}

HttpReply handle_health(const ModelRegistry& reg) {
  HttpReply r;
  r.content_type = "application/json";
  r.body = nlohmann::json{{"version", kVersion}, {"models", reg.names()}}.dump();
  return r;
}

HttpReply handle_supersample(const ModelRegistry& reg, const std::map<std::string, std::string>& headers,
                             const std::string& body) {
  const auto table = reg.snapshot();
  int step = 0, width = 0, height = 0;
  WirePrecision prec = WirePrecision::f32;
  std::string model;
  try {
    for (const char* key : {"X-Model", "X-Coverage-Step", "X-Precision", "X-Width", "X-Height"}) {
      if (find_header(headers, key) == nullptr) throw InvalidInput(std::string("missing header ") + key);
    }
    model = *find_header(headers, "X-Model");
    step = parse_positive(*find_header(headers, "X-Coverage-Step"), "X-Coverage-Step");
    width = parse_positive(*find_header(headers, "X-Width"), "X-Width");
    height = parse_positive(*find_header(headers, "X-Height"), "X-Height");
    prec = parse_precision(*find_header(headers, "X-Precision"));
  } catch (const InvalidInput& e) {
    return error_reply(400, e.what());
  }

  const auto it = table->find(model);
  if (it == table->end()) return error_reply(404, "unknown model '" + model + "'");
  const ModelEntry& entry = it->second;
  if (std::find(entry.steps.begin(), entry.steps.end(), step) == entry.steps.end()) {
    return error_reply(404, "model '" + model + "' does not serve coverage step " + std::to_string(step));
  }

  Micrograph lowres;
  try {
    const auto* p = reinterpret_cast<const std::uint8_t*>(body.data());
    lowres = dequantize({p, body.size()}, height, width, prec);
  } catch (const InvalidInput& e) {
    return error_reply(400, e.what());
  }

  Micrograph out;
  try {
    const Generator& g = *entry.generator;
    const Coverage cov(step);
    const int k = downsampled_side(g.spec().target_side, step);
    if (height == k && width == k) {
      out = infer(g, lowres, cov);
    } else {
      out = tiled_infer(g, lowres, cov, height * step, width * step);
    }
  } catch (const InvalidInput& e) {
    return error_reply(400, e.what());
  }

  HttpReply r;
  r.body.resize(static_cast<std::size_t>(out.height()) * out.width() * 4);
  const Encoded enc = quantize(out, WirePrecision::f32);
  std::copy(enc.bytes.begin(), enc.bytes.end(), r.body.begin());
  r.headers["X-Width"] = std::to_string(out.width());
  r.headers["X-Height"] = std::to_string(out.height());
  r.headers["X-Precision"] = "f32";
  return r;
}

struct Server::Impl {
  std::shared_ptr<ModelRegistry> reg;
  httplib::Server http;
};

Server::Server(std::shared_ptr<ModelRegistry> reg) : impl_(std::make_unique<Impl>()) {
  if (!reg) throw InvalidInput("server: null registry");
  impl_->reg = std::move(reg);
  auto send = [](httplib::Response& res, const HttpReply& r) {
    res.status = r.status;
    for (const auto& [k, v] : r.headers) res.set_header(k, v);
    res.set_content(r.body, r.content_type);
  };
  impl_->http.Get("/v1/health", [this, send](const httplib::Request&, httplib::Response& res) {
    send(res, handle_health(*impl_->reg));
  });
  impl_->http.Post("/v1/supersample", [this, send](const httplib::Request& req, httplib::Response& res) {
    std::map<std::string, std::string> h(req.headers.begin(), req.headers.end());
    send(res, handle_supersample(*impl_->reg, h, req.body));
  });
}

Server::~Server() { stop(); }

int Server::bind(const std::string& host, int port) {
  if (port == 0) {
    const int p = impl_->http.bind_to_any_port(host);
    if (p < 0) throw StateError("server: cannot bind " + host);
    return p;
  }
  if (!impl_->http.bind_to_port(host, port)) throw StateError("server: cannot bind " + host + ":" + std::to_string(port));
  return port;
}

void Server::run() { impl_->http.listen_after_bind(); }

void Server::wait_until_ready() const { impl_->http.wait_until_ready(); }

void Server::stop() {
  if (impl_->http.is_running()) impl_->http.stop();
}

}  // namespace dlss
