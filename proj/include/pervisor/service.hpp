#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <filesystem>
#include <list>
#include <memory>
#include <mutex>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "pervisor/recognizer.hpp"
#include "pervisor/wire.hpp"

namespace pervisor {

struct ServerConfig {
  std::string bind_address = "127.0.0.1";
  std::uint16_t port = 0;  // 0 picks an ephemeral port
  RecognizerConfig recognizer;
  std::chrono::milliseconds request_timeout{30'000};
  std::chrono::milliseconds drain_timeout{5'000};
};

class ServiceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// One-request-per-connection recognition server over a shared read-only index.
class Server {
 public:
  Server(std::shared_ptr<const RecognitionIndex> index, ServerConfig config);
  ~Server();

  Server(const Server&) = delete;
  Server& operator=(const Server&) = delete;

  /// Binds and listens. Throws ServiceError.
  void start();

  /// Port actually bound; valid after start().
  std::uint16_t port() const { return port_; }

  /// Accept loop; returns after stop() once in-flight requests drain or the
  /// drain timeout expires.
  void run();

  /// Safe to call from any thread, repeatedly.
  void stop();

  /// Answer frame for a complete request frame. Never throws.
  std::vector<std::uint8_t> respond(std::span<const std::uint8_t> request) const;

  /// Answer for a decoded request message.
  wire::Message handle(const wire::Message& request) const;

  std::size_t connections_served() const { return served_.load(); }

 private:
  struct Worker {
    std::thread thread;
    int fd = -1;
    std::atomic<bool> done{false};
  };

  void serve_connection(int fd) const;
  void reap_finished();
  void drain();

  std::shared_ptr<const RecognitionIndex> index_;
  ServerConfig config_;
  int listen_fd_ = -1;
  std::uint16_t port_ = 0;
  std::atomic<bool> stopping_{false};
  mutable std::atomic<std::size_t> served_{0};

  std::mutex workers_mu_;
  std::condition_variable workers_cv_;
  std::list<Worker> workers_;
};

/// Loads the database, builds the index once, serves until SIGINT/SIGTERM.
void serve(const std::filesystem::path& db_path, const ServerConfig& config, int num_trees, std::uint64_t seed);

enum class ClientErrorKind { kConnect, kProtocol, kServer };

class ClientError : public std::runtime_error {
 public:
  ClientError(ClientErrorKind kind, const std::string& what, std::string server_code = {})
      : std::runtime_error(what), kind_(kind), server_code_(std::move(server_code)) {}
  ClientErrorKind kind() const { return kind_; }
  /// Error code sent by the server for kServer errors.
  const std::string& server_code() const { return server_code_; }

 private:
  ClientErrorKind kind_;
  std::string server_code_;
};

/// Sends raw frame bytes and returns everything the server wrote before closing.
std::vector<std::uint8_t> exchange_bytes(const std::string& host, std::uint16_t port,
                                         std::span<const std::uint8_t> request,
                                         std::chrono::milliseconds timeout = std::chrono::seconds(60));

/// Frames PGM bytes as a request and decodes the reply.
Recognition client_recognize_bytes(const std::string& host, std::uint16_t port, std::span<const std::uint8_t> pgm,
                                   std::chrono::milliseconds timeout = std::chrono::seconds(60));

Recognition client_recognize(const std::string& host, std::uint16_t port, const std::filesystem::path& img_path,
                             std::chrono::milliseconds timeout = std::chrono::seconds(60));

}  // namespace pervisor
