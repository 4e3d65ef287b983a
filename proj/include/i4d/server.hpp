#pragma once

// Frame server: clients send view requests as JSON and receive JPEG frames.
// Each client has at most one request queued or rendering; a request that
// arrives meanwhile replaces any older waiting one. Wire format in
// docs/protocol.md.

#include "i4d/view.hpp"

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

namespace i4d {

inline constexpr char kFrameMagic[4] = {'I', '4', 'D', 'F'};
inline constexpr std::uint16_t kProtocolVersion = 1;
inline constexpr std::size_t kFrameHeaderBytes = 28;
inline constexpr std::size_t kMaxRequestBytes = 65536;

enum class FrameStatus : std::uint16_t { Ok = 0, BadRequest = 1, RenderFailed = 2 };

struct FrameHeader {
  std::uint16_t version{kProtocolVersion};
  FrameStatus status{FrameStatus::Ok};
  std::uint64_t id{0};
  float render_ms{0};
  std::uint32_t survivors{0};
  std::uint32_t payload_bytes{0};
};

/// Header followed by the payload (JPEG, or a JSON error object).
std::string encode_frame(FrameHeader header, const std::string& payload);
/// Parses the first 28 bytes; throws InvalidInput on bad magic, version or length.
FrameHeader decode_frame_header(const std::string& frame);

class FrameService {
 public:
  struct Options {
    int workers{1};
    int threads_per_worker{1};
    /// Called on the worker before each render; lets tests hold renders open.
    std::function<void(const ViewRequest&)> before_render;
  };

  struct Stats {
    std::uint64_t received{0};
    std::uint64_t rendered{0};
    std::uint64_t dropped{0};
    std::uint64_t errors{0};
    int max_in_flight{0};  // per client, over the service lifetime
  };

  class Client : public std::enable_shared_from_this<Client> {
   public:
    /// Queues one raw JSON message. Never blocks on rendering.
    void submit(std::string message);
    /// Stops delivery; queued work for this client is discarded.
    void close();
    [[nodiscard]] bool closed() const { return closed_.load(); }

   private:
    friend class FrameService;
    using Sink = std::function<void(std::string)>;
    Client(FrameService* service, Sink sink) : service_(service), sink_(std::move(sink)) {}

    FrameService* service_;
    Sink sink_;
    std::mutex mutex_;
    std::optional<std::string> waiting_;
    bool busy_{false};
    std::atomic<int> in_flight_{0};
    std::atomic<bool> closed_{false};
  };

  FrameService(std::shared_ptr<const GaussianModel<float>> model, Options options);
  ~FrameService();
  FrameService(const FrameService&) = delete;
  FrameService& operator=(const FrameService&) = delete;

  /// `sink` receives every encoded frame for this client, in order, from a worker thread.
  std::shared_ptr<Client> connect(std::function<void(std::string)> sink);

  /// Renders one request synchronously on the calling thread; the frame
  /// carries a BadRequest or RenderFailed status instead of throwing.
  std::string handle(const std::string& message);

  [[nodiscard]] Stats stats() const;
  [[nodiscard]] const GaussianModel<float>& model() const { return *model_; }
  [[nodiscard]] nlohmann::json info() const;

 private:
  struct Job {
    std::shared_ptr<Client> client;
    std::string message;
  };

  void enqueue(Job job);
  void worker_loop();
  std::string process(const std::string& message, Rasterizer<float>& rasterizer);

  std::shared_ptr<const GaussianModel<float>> model_;
  Options options_;
  std::mutex queue_mutex_;
  std::condition_variable queue_cv_;
  std::deque<Job> queue_;
  bool stopping_{false};
  std::vector<std::thread> workers_;
  mutable std::mutex stats_mutex_;
  Stats stats_;
};

struct ServerOptions {
  std::string address{"0.0.0.0"};
  int port{8080};         // HTTP + WebSocket (/stream); 0 picks a free port
  int stream_port{-1};    // length-prefixed TCP; -1 means port + 1, 0 picks a free port
  std::string assets_dir;  // static files served at /; empty serves a placeholder page
  int io_threads{1};
  FrameService::Options service;
};

class Server {
 public:
  Server(std::shared_ptr<const GaussianModel<float>> model, ServerOptions options);
  ~Server();

  /// Binds both listeners and starts serving on background threads.
  void start();
  /// Blocks until stop() is called or a termination signal arrives.
  void wait();
  void stop();

  [[nodiscard]] int http_port() const;
  [[nodiscard]] int stream_port() const;
  FrameService& service();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace i4d
