#pragma once

#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "dlss/models.hpp"

namespace dlss {

inline constexpr const char* kVersion = "0.1.0";

struct ModelEntry {
  std::shared_ptr<const Generator> generator;
  std::vector<int> steps;  // coverage steps the model accepts
};

// Name -> model. Readers take a snapshot; replace() swaps the whole table.
class ModelRegistry {
 public:
  using Table = std::map<std::string, ModelEntry>;

  void add(const std::string& name, ModelEntry entry);
  // Loads a checkpoint; accepted steps come from its training config when
  // recorded, else the one-stage step or 1..16 for two-stage models.
  void add_checkpoint(const std::string& name, const std::string& path);
  void replace(Table table);
  std::shared_ptr<const Table> snapshot() const;
  std::vector<std::string> names() const;

 private:
  mutable std::mutex mu_;
  std::shared_ptr<const Table> table_ = std::make_shared<Table>();
};

struct HttpReply {
  int status = 200;
  std::string body;
  std::string content_type = "application/octet-stream";
  std::map<std::string, std::string> headers;
};

// Header lookups are case-insensitive.
HttpReply handle_supersample(const ModelRegistry& reg, const std::map<std::string, std::string>& headers,
                             const std::string& body);
HttpReply handle_health(const ModelRegistry& reg);

class Server {
 public:
  explicit Server(std::shared_ptr<ModelRegistry> reg);
  ~Server();
  Server(const Server&) = delete;
  Server& operator=(const Server&) = delete;

  // Binds and returns the port (an ephemeral one when port is 0).
  int bind(const std::string& host, int port);
  // Serves until stop(); blocking.
  void run();
  // Blocks until run() is accepting connections.
  void wait_until_ready() const;
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace dlss
