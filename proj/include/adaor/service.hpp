#pragma once

#include <array>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "adaor/metrics.hpp"
#include "adaor/model.hpp"
#include "adaor/sampler.hpp"

namespace httplib {
class Server;
}

namespace adaor::service {

struct Response {
  int status = 200;
  std::string body;
};

/// Stateless request handling over one loaded checkpoint. All methods are
/// const and safe to call concurrently.
class Service {
 public:
  Service(DenoiserNet net, std::string checkpoint_id);

  static constexpr std::size_t kMaxAlphas = 64;
  static constexpr int kMaxSteps = 1000;

  /// GET /api/health
  Response health() const;
  /// GET /api/meta
  Response meta() const;
  /// POST /api/sweep; 400 with per-field messages on bad input, 422 when
  /// sampling diverges.
  Response sweep(std::string_view body) const;
  /// Routes a request as the HTTP server would; unknown paths give 404.
  Response handle(std::string_view method, std::string_view path, std::string_view body) const;

  const Task& task() const { return task_; }
  const std::string& checkpoint_id() const { return checkpoint_id_; }

 private:
  DenoiserNet net_;
  Task task_;
  std::string checkpoint_id_;
  Embedding emb_;
  std::array<std::vector<double>, kNumEdits> text_dirs_;
};

/// HTTP front end. bind() with port 0 picks a free port.
class HttpServer {
 public:
  explicit HttpServer(const Service& service);
  ~HttpServer();
  HttpServer(const HttpServer&) = delete;
  HttpServer& operator=(const HttpServer&) = delete;

  /// Returns the bound port; throws std::runtime_error if binding fails.
  int bind(const std::string& host, int port);
  /// Blocks until stop().
  void listen();
  void stop();

 private:
  std::unique_ptr<httplib::Server> server_;
};

}  // namespace adaor::service
