#include "pervisor/service.hpp"

#include <arpa/inet.h>
#include <fcntl.h>
#include <netdb.h>
#include <netinet/in.h>
#include <poll.h>
#include <pthread.h>
#include <signal.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <iostream>

#include "pervisor/featuredb.hpp"
#include "pervisor/image.hpp"

namespace pervisor {

namespace {

using Clock = std::chrono::steady_clock;

int remaining_ms(Clock::time_point deadline) {
  const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - Clock::now()).count();
  return left <= 0 ? 0 : static_cast<int>(std::min<long long>(left, 1'000'000));
}

// Waits for fd to become ready; false on timeout.
bool wait_for(int fd, short events, Clock::time_point deadline) {
  for (;;) {
    pollfd p{fd, events, 0};
    const int rc = ::poll(&p, 1, remaining_ms(deadline));
    if (rc > 0) return true;
    if (rc == 0) return false;
    if (errno != EINTR) return false;
  }
}

enum class ReadStatus { kOk, kEof, kTimeout, kError };

// Reads up to buf.size() bytes; `got` reports how many arrived before EOF, timeout or error.
ReadStatus read_exact(int fd, std::span<std::uint8_t> buf, Clock::time_point deadline, std::size_t& got) {
  got = 0;
  while (got < buf.size()) {
    if (!wait_for(fd, POLLIN, deadline)) return ReadStatus::kTimeout;
    const ssize_t n = ::recv(fd, buf.data() + got, buf.size() - got, 0);
    if (n == 0) return ReadStatus::kEof;
    if (n < 0) {
      if (errno == EINTR || errno == EAGAIN) continue;
      return ReadStatus::kError;
    }
    got += static_cast<std::size_t>(n);
  }
  return ReadStatus::kOk;
}

bool send_all(int fd, std::span<const std::uint8_t> data, Clock::time_point deadline) {
  std::size_t sent = 0;
  while (sent < data.size()) {
    if (!wait_for(fd, POLLOUT, deadline)) return false;
    const ssize_t n = ::send(fd, data.data() + sent, data.size() - sent, MSG_NOSIGNAL);
    if (n < 0) {
      if (errno == EINTR || errno == EAGAIN) continue;
      return false;
    }
    sent += static_cast<std::size_t>(n);
  }
  return true;
}

// Half-closes and discards unread input briefly so the peer sees our reply instead of a reset.
void drain_input(int fd) {
  ::shutdown(fd, SHUT_WR);
  const auto deadline = Clock::now() + std::chrono::milliseconds(500);
  std::uint8_t scratch[4096];
  std::size_t discarded = 0;
  while (discarded < wire::kMaxPayload + wire::kHeaderSize && wait_for(fd, POLLIN, deadline)) {
    const ssize_t n = ::recv(fd, scratch, sizeof(scratch), 0);
    if (n <= 0) break;
    discarded += static_cast<std::size_t>(n);
  }
}

std::vector<std::uint8_t> error_frame(const std::string& code) { return wire::encode_frame(wire::make_error(code)); }

}  // namespace

Server::Server(std::shared_ptr<const RecognitionIndex> index, ServerConfig config)
    : index_(std::move(index)), config_(std::move(config)) {
  if (!index_) throw ServiceError("server needs a recognition index");
}

Server::~Server() {
  stop();
  drain();
  if (listen_fd_ >= 0) ::close(listen_fd_);
}

void Server::start() {
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(config_.port);
  if (::inet_pton(AF_INET, config_.bind_address.c_str(), &addr.sin_addr) != 1) {
    throw ServiceError("invalid IPv4 bind address '" + config_.bind_address + "'");
  }
  listen_fd_ = ::socket(AF_INET, SOCK_STREAM | SOCK_CLOEXEC, 0);
  if (listen_fd_ < 0) throw ServiceError(std::string("socket: ") + std::strerror(errno));
  const int one = 1;
  ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
  if (::bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) {
    throw ServiceError(std::string("bind: ") + std::strerror(errno));
  }
  if (::listen(listen_fd_, 64) != 0) throw ServiceError(std::string("listen: ") + std::strerror(errno));
  socklen_t len = sizeof(addr);
  ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&addr), &len);
  port_ = ntohs(addr.sin_port);
}

void Server::run() {
  if (listen_fd_ < 0) start();
  while (!stopping_.load()) {
    pollfd p{listen_fd_, POLLIN, 0};
    const int rc = ::poll(&p, 1, 100);
    reap_finished();
    if (rc <= 0) continue;
    const int fd = ::accept4(listen_fd_, nullptr, nullptr, SOCK_CLOEXEC);
    if (fd < 0) continue;
    std::lock_guard lock(workers_mu_);
    auto& w = workers_.emplace_back();
    w.fd = fd;
    w.thread = std::thread([this, &w] {
      serve_connection(w.fd);
      {
        std::lock_guard inner(workers_mu_);
        ::close(w.fd);
        w.fd = -1;
      }
      w.done = true;
      workers_cv_.notify_all();
    });
  }
  ::close(listen_fd_);
  listen_fd_ = -1;
  drain();
}

void Server::stop() { stopping_ = true; }

void Server::reap_finished() {
  std::lock_guard lock(workers_mu_);
  for (auto it = workers_.begin(); it != workers_.end();) {
    if (it->done) {
      it->thread.join();
      it = workers_.erase(it);
    } else {
      ++it;
    }
  }
}

void Server::drain() {
  {
    std::unique_lock lock(workers_mu_);
    const bool drained = workers_cv_.wait_for(lock, config_.drain_timeout, [this] {
      for (const auto& w : workers_) {
        if (!w.done) return false;
      }
      return true;
    });
    if (!drained) {
      // Unblock stragglers; their reads fail and they exit.
      for (auto& w : workers_) {
        if (w.fd >= 0) ::shutdown(w.fd, SHUT_RDWR);
      }
    }
  }
  std::list<Worker> finished;
  {
    std::lock_guard lock(workers_mu_);
    finished.splice(finished.end(), workers_);
  }
  for (auto& w : finished) {
    if (w.thread.joinable()) w.thread.join();
  }
}

wire::Message Server::handle(const wire::Message& request) const {
  if (request.type != wire::MessageType::kRecognizeRequest) return wire::make_error(wire::code::kUnexpectedType);
  try {
    const GrayImage img = decode_pgm(request.payload);
    const Recognition r = recognize(*index_, img, config_.recognizer);
    return {wire::MessageType::kRecognizeResponse, wire::encode_response(r)};
  } catch (const PgmError&) {
    return wire::make_error(wire::code::kBadImage);
  } catch (const std::exception&) {
    return wire::make_error(wire::code::kInternal);
  }
}

std::vector<std::uint8_t> Server::respond(std::span<const std::uint8_t> request) const {
  try {
    return wire::encode_frame(handle(wire::decode_frame(request)));
  } catch (const wire::ProtocolError& e) {
    return error_frame(e.code());
  } catch (const std::exception&) {
    return error_frame(wire::code::kInternal);
  }
}

void Server::serve_connection(int fd) const {
  ++served_;
  const auto deadline = Clock::now() + config_.request_timeout;
  std::array<std::uint8_t, wire::kHeaderSize> header{};
  std::size_t got = 0;
  const auto status = read_exact(fd, header, deadline, got);
  if (status == ReadStatus::kTimeout || status == ReadStatus::kError) return;

  std::vector<std::uint8_t> reply;
  if (status == ReadStatus::kEof) {
    if (got == 0) return;
    reply = respond(std::span<const std::uint8_t>(header.data(), got));
  } else {
    try {
      const auto h = wire::decode_header(header);
      std::vector<std::uint8_t> frame(wire::kHeaderSize + h.payload_len);
      std::copy(header.begin(), header.end(), frame.begin());
      const auto body_status =
          read_exact(fd, std::span<std::uint8_t>(frame).subspan(wire::kHeaderSize), deadline, got);
      if (body_status == ReadStatus::kTimeout || body_status == ReadStatus::kError) return;
      if (body_status == ReadStatus::kEof) {
        reply = error_frame(wire::code::kTruncated);
      } else {
        wire::Message msg{h.type, std::vector<std::uint8_t>(frame.begin() + wire::kHeaderSize, frame.end())};
        reply = wire::encode_frame(handle(msg));
      }
    } catch (const wire::ProtocolError& e) {
      reply = error_frame(e.code());
    } catch (const std::exception&) {
      reply = error_frame(wire::code::kInternal);
    }
  }
  if (send_all(fd, reply, deadline)) drain_input(fd);
}

void serve(const std::filesystem::path& db_path, const ServerConfig& config, int num_trees, std::uint64_t seed) {
  auto index = std::make_shared<const RecognitionIndex>(RecognitionIndex::build(load(db_path), num_trees, seed));

  // Signals go to a dedicated watcher; every other thread inherits the blocked mask.
  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGINT);
  sigaddset(&signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);

  Server server(index, config);
  server.start();
  std::cerr << "serving " << index->db.objects().size() << " objects / " << index->db.records().size()
            << " features on " << config.bind_address << ":" << server.port() << "\n";

  std::thread watcher([&server, signals] {
    int sig = 0;
    sigwait(&signals, &sig);
    server.stop();
  });
  server.run();
  watcher.join();
  std::cerr << "server stopped after " << server.connections_served() << " connections\n";
}

std::vector<std::uint8_t> exchange_bytes(const std::string& host, std::uint16_t port,
                                         std::span<const std::uint8_t> request, std::chrono::milliseconds timeout) {
  addrinfo hints{};
  hints.ai_family = AF_UNSPEC;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  const std::string port_str = std::to_string(port);
  if (const int rc = ::getaddrinfo(host.c_str(), port_str.c_str(), &hints, &res); rc != 0) {
    throw ClientError(ClientErrorKind::kConnect, "resolve " + host + ": " + ::gai_strerror(rc));
  }
  int fd = -1;
  std::string last_error = "no addresses";
  for (addrinfo* ai = res; ai != nullptr; ai = ai->ai_next) {
    fd = ::socket(ai->ai_family, ai->ai_socktype | SOCK_CLOEXEC, ai->ai_protocol);
    if (fd < 0) continue;
    if (::connect(fd, ai->ai_addr, ai->ai_addrlen) == 0) break;
    last_error = std::strerror(errno);
    ::close(fd);
    fd = -1;
  }
  ::freeaddrinfo(res);
  if (fd < 0) throw ClientError(ClientErrorKind::kConnect, "connect " + host + ":" + port_str + ": " + last_error);

  const auto deadline = Clock::now() + timeout;
  // The server may answer and close before reading everything (e.g. bad magic), so a
  // failed send is not fatal; the reply decides.
  send_all(fd, request, deadline);
  ::shutdown(fd, SHUT_WR);

  std::vector<std::uint8_t> reply;
  std::uint8_t buf[4096];
  bool timed_out = false;
  for (;;) {
    if (!wait_for(fd, POLLIN, deadline)) {
      timed_out = true;
      break;
    }
    const ssize_t n = ::recv(fd, buf, sizeof(buf), 0);
    if (n == 0) break;
    if (n < 0) {
      if (errno == EINTR || errno == EAGAIN) continue;
      break;
    }
    reply.insert(reply.end(), buf, buf + n);
    if (reply.size() > wire::kMaxPayload + wire::kHeaderSize) break;
  }
  ::close(fd);
  if (timed_out && reply.empty()) throw ClientError(ClientErrorKind::kProtocol, "timed out waiting for reply");
  return reply;
}

Recognition client_recognize_bytes(const std::string& host, std::uint16_t port, std::span<const std::uint8_t> pgm,
                                   std::chrono::milliseconds timeout) {
  const wire::Message request{wire::MessageType::kRecognizeRequest, {pgm.begin(), pgm.end()}};
  const auto reply = exchange_bytes(host, port, wire::encode_frame(request), timeout);
  wire::Message msg;
  try {
    msg = wire::decode_frame(reply);
  } catch (const wire::ProtocolError& e) {
    throw ClientError(ClientErrorKind::kProtocol, std::string("malformed reply: ") + e.what());
  }
  if (msg.type == wire::MessageType::kError) {
    const std::string code = wire::decode_error(msg.payload);
    throw ClientError(ClientErrorKind::kServer, "server error: " + code, code);
  }
  if (msg.type != wire::MessageType::kRecognizeResponse) {
    throw ClientError(ClientErrorKind::kProtocol, "unexpected reply type");
  }
  try {
    return wire::decode_response(msg.payload);
  } catch (const wire::ProtocolError& e) {
    throw ClientError(ClientErrorKind::kProtocol, std::string("malformed response: ") + e.what());
  }
}

Recognition client_recognize(const std::string& host, std::uint16_t port, const std::filesystem::path& img_path,
                             std::chrono::milliseconds timeout) {
  // Validate locally so a bad file is reported before any network traffic.
  const auto bytes = read_file_bytes(img_path);
  (void)decode_pgm(bytes);
  return client_recognize_bytes(host, port, bytes, timeout);
}

}  // namespace pervisor
