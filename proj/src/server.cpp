#include "i4d/server.hpp"

#include "i4d/io.hpp"
#include "i4d/resources.hpp"

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>
#include <spdlog/spdlog.h>

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace i4d {

static_assert(std::endian::native == std::endian::little, "wire format assumes a little-endian host");

namespace {

template <typename T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

template <typename T>
T get(const std::string& bytes, std::size_t& pos) {
  T v;
  std::memcpy(&v, bytes.data() + pos, sizeof(T));
  pos += sizeof(T);
  return v;
}

std::string error_payload(const std::string& message) { return nlohmann::json{{"error", message}}.dump(); }

/// Best-effort id of a request that failed validation.
std::uint64_t salvage_id(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("id") || !j.at("id").is_number()) return 0;
  const double id = j.at("id").get<double>();
  if (!(id >= 0) || id != std::floor(id) || id > 9007199254740992.0) return 0;
  return static_cast<std::uint64_t>(id);
}

}  // namespace

std::string encode_frame(FrameHeader header, const std::string& payload) {
  header.payload_bytes = static_cast<std::uint32_t>(payload.size());
  std::string out;
  out.reserve(kFrameHeaderBytes + payload.size());
  out.append(kFrameMagic, 4);
  put<std::uint16_t>(out, header.version);
  put<std::uint16_t>(out, static_cast<std::uint16_t>(header.status));
  put<std::uint64_t>(out, header.id);
  put<float>(out, header.render_ms);
  put<std::uint32_t>(out, header.survivors);
  put<std::uint32_t>(out, header.payload_bytes);
  out += payload;
  return out;
}

FrameHeader decode_frame_header(const std::string& frame) {
  if (frame.size() < kFrameHeaderBytes) throw InvalidInput("frame: shorter than the 28-byte header");
  if (std::memcmp(frame.data(), kFrameMagic, 4) != 0) throw InvalidInput("frame: bad magic");
  std::size_t pos = 4;
  FrameHeader h;
  h.version = get<std::uint16_t>(frame, pos);
  if (h.version != kProtocolVersion) throw InvalidInput("frame: unsupported version " + std::to_string(h.version));
  const auto status = get<std::uint16_t>(frame, pos);
  if (status > 2) throw InvalidInput("frame: unknown status " + std::to_string(status));
  h.status = static_cast<FrameStatus>(status);
  h.id = get<std::uint64_t>(frame, pos);
  h.render_ms = get<float>(frame, pos);
  h.survivors = get<std::uint32_t>(frame, pos);
  h.payload_bytes = get<std::uint32_t>(frame, pos);
  if (frame.size() != kFrameHeaderBytes + h.payload_bytes) throw InvalidInput("frame: payload length mismatch");
  return h;
}

// --- FrameService -----------------------------------------------------------

FrameService::FrameService(std::shared_ptr<const GaussianModel<float>> model, Options options)
    : model_(std::move(model)), options_(std::move(options)) {
  require(model_ != nullptr, "frame service: no model");
  require(options_.workers >= 1, "frame service: workers must be >= 1");
  for (int i = 0; i < options_.workers; ++i) workers_.emplace_back([this] { worker_loop(); });
}

FrameService::~FrameService() {
  {
    std::lock_guard lock(queue_mutex_);
    stopping_ = true;
  }
  queue_cv_.notify_all();
  for (auto& w : workers_) w.join();
}

std::shared_ptr<FrameService::Client> FrameService::connect(std::function<void(std::string)> sink) {
  return std::shared_ptr<Client>(new Client(this, std::move(sink)));
}

void FrameService::Client::submit(std::string message) {
  if (closed_) return;
  {
    std::lock_guard lock(service_->stats_mutex_);
    ++service_->stats_.received;
  }
  std::unique_lock lock(mutex_);
  if (busy_) {
    if (waiting_) {
      std::lock_guard stats_lock(service_->stats_mutex_);
      ++service_->stats_.dropped;
    }
    waiting_ = std::move(message);
    return;
  }
  busy_ = true;
  lock.unlock();
  service_->enqueue({shared_from_this(), std::move(message)});
}

void FrameService::Client::close() {
  closed_ = true;
  std::lock_guard lock(mutex_);
  waiting_.reset();
}

void FrameService::enqueue(Job job) {
  const int in_flight = ++job.client->in_flight_;
  {
    std::lock_guard lock(stats_mutex_);
    stats_.max_in_flight = std::max(stats_.max_in_flight, in_flight);
  }
  {
    std::lock_guard lock(queue_mutex_);
    queue_.push_back(std::move(job));
  }
  queue_cv_.notify_one();
}

void FrameService::worker_loop() {
  set_threads(options_.threads_per_worker);
  Rasterizer<float> rasterizer;
  for (;;) {
    Job job;
    {
      std::unique_lock lock(queue_mutex_);
      queue_cv_.wait(lock, [this] { return stopping_ || !queue_.empty(); });
      if (queue_.empty()) return;
      job = std::move(queue_.front());
      queue_.pop_front();
    }
    auto& client = *job.client;
    if (!client.closed()) {
      std::string frame = process(job.message, rasterizer);
      if (!client.closed()) client.sink_(std::move(frame));
    }
    --client.in_flight_;
    std::unique_lock lock(client.mutex_);
    if (client.waiting_ && !client.closed()) {
      Job next{job.client, std::move(*client.waiting_)};
      client.waiting_.reset();
      lock.unlock();
      enqueue(std::move(next));
    } else {
      client.waiting_.reset();
      client.busy_ = false;
    }
  }
}

std::string FrameService::process(const std::string& message, Rasterizer<float>& rasterizer) {
  FrameHeader header;
  nlohmann::json j;
  ViewRequest request;
  try {
    j = nlohmann::json::parse(message);
    request = view_request_from_json(j);
  } catch (const std::exception& e) {
    header.status = FrameStatus::BadRequest;
    header.id = salvage_id(j);
    std::lock_guard lock(stats_mutex_);
    ++stats_.errors;
    return encode_frame(header, error_payload(e.what()));
  }
  header.id = request.id;
  try {
    if (options_.before_render) options_.before_render(request);
    Stopwatch sw;
    const auto frame = render_view(rasterizer, *model_, request);
    header.render_ms = std::max(1e-3f, float(sw.seconds() * 1000.0));
    header.survivors = static_cast<std::uint32_t>(frame.survivors);
    std::string jpeg = encode_jpeg(frame.rgb, request.quality);
    std::lock_guard lock(stats_mutex_);
    ++stats_.rendered;
    return encode_frame(header, jpeg);
  } catch (const std::exception& e) {
    header.status = FrameStatus::RenderFailed;
    std::lock_guard lock(stats_mutex_);
    ++stats_.errors;
    return encode_frame(header, error_payload(e.what()));
  }
}

std::string FrameService::handle(const std::string& message) {
  Rasterizer<float> rasterizer;
  return process(message, rasterizer);
}

FrameService::Stats FrameService::stats() const {
  std::lock_guard lock(stats_mutex_);
  return stats_;
}

nlohmann::json FrameService::info() const {
  return {{"protocol_version", kProtocolVersion},
          {"gaussians", model_->size()},
          {"dynamic", model_->count_dynamic()},
          {"fps", model_->fps},
          {"video_length", model_->video_length},
          {"max_pixels", kMaxViewPixels},
          {"default_fov_y", kDefaultFovY},
          {"stream_path", "/stream"}};
}

// --- Network front end ------------------------------------------------------

namespace {

namespace net = boost::asio;
namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
using tcp = net::ip::tcp;

const char* kPlaceholderPage =
    "<!doctype html><html><head><meta charset=\"utf-8\"><title>i4d</title></head><body>"
    "<p>Frame server is running. Connect a client to <code>/stream</code>; see docs/protocol.md. "
    "Start the server with <code>--assets</code> to serve the viewer here.</p></body></html>";

std::string mime_type(const std::filesystem::path& path) {
  const std::string ext = path.extension().string();
  if (ext == ".html" || ext == ".htm") return "text/html; charset=utf-8";
  if (ext == ".js" || ext == ".mjs") return "text/javascript";
  if (ext == ".css") return "text/css";
  if (ext == ".json" || ext == ".map") return "application/json";
  if (ext == ".svg") return "image/svg+xml";
  if (ext == ".png") return "image/png";
  if (ext == ".jpg" || ext == ".jpeg") return "image/jpeg";
  if (ext == ".ico") return "image/x-icon";
  if (ext == ".wasm") return "application/wasm";
  return "application/octet-stream";
}

/// Maps a request target onto a file under root; empty when it escapes root.
std::optional<std::filesystem::path> resolve_asset(const std::string& root, std::string_view target) {
  if (root.empty()) return std::nullopt;
  std::string path(target.substr(0, target.find_first_of("?#")));
  if (path.empty() || path[0] != '/' || path.find("..") != std::string::npos || path.find('\0') != std::string::npos) {
    return std::nullopt;
  }
  if (path.back() == '/') path += "index.html";
  std::filesystem::path full = std::filesystem::path(root) / path.substr(1);
  std::error_code ec;
  if (!std::filesystem::is_regular_file(full, ec)) return std::nullopt;
  return full;
}

/// Serialized writes on the connection's strand.
class FrameWriter {
 protected:
  std::deque<std::string> outbox_;
  bool writing_{false};
};

class WebSocketSession : public std::enable_shared_from_this<WebSocketSession>, FrameWriter {
 public:
  WebSocketSession(tcp::socket&& socket, FrameService& service) : ws_(std::move(socket)), service_(service) {}

  void run(http::request<http::string_body> request) {
    ws_.set_option(websocket::stream_base::timeout::suggested(beast::role_type::server));
    ws_.read_message_max(kMaxRequestBytes);
    ws_.binary(true);
    ws_.async_accept(request, beast::bind_front_handler(&WebSocketSession::on_accept, shared_from_this()));
  }

  ~WebSocketSession() {
    if (client_) client_->close();
  }

 private:
  void on_accept(beast::error_code ec) {
    if (ec) return;
    std::weak_ptr<WebSocketSession> weak = shared_from_this();
    auto executor = ws_.get_executor();
    client_ = service_.connect([weak, executor](std::string frame) {
      net::post(executor, [weak, frame = std::move(frame)]() mutable {
        if (auto self = weak.lock()) self->send(std::move(frame));
      });
    });
    read();
  }

  void read() {
    ws_.async_read(buffer_, beast::bind_front_handler(&WebSocketSession::on_read, shared_from_this()));
  }

  void on_read(beast::error_code ec, std::size_t) {
    if (ec) {
      client_->close();
      return;
    }
    client_->submit(beast::buffers_to_string(buffer_.data()));
    buffer_.consume(buffer_.size());
    read();
  }

  void send(std::string frame) {
    outbox_.push_back(std::move(frame));
    if (!writing_) write_next();
  }

  void write_next() {
    writing_ = true;
    ws_.async_write(net::buffer(outbox_.front()),
                    beast::bind_front_handler(&WebSocketSession::on_write, shared_from_this()));
  }

  void on_write(beast::error_code ec, std::size_t) {
    writing_ = false;
    if (ec) {
      client_->close();
      return;
    }
    outbox_.pop_front();
    if (!outbox_.empty()) write_next();
  }

  websocket::stream<beast::tcp_stream> ws_;
  FrameService& service_;
  beast::flat_buffer buffer_;
  std::shared_ptr<FrameService::Client> client_;
};

/// Raw TCP: requests and responses are each prefixed by a u32 little-endian length.
class StreamSession : public std::enable_shared_from_this<StreamSession>, FrameWriter {
 public:
  StreamSession(tcp::socket&& socket, FrameService& service) : socket_(std::move(socket)), service_(service) {}

  ~StreamSession() {
    if (client_) client_->close();
  }

  void run() {
    std::weak_ptr<StreamSession> weak = shared_from_this();
    auto executor = socket_.get_executor();
    client_ = service_.connect([weak, executor](std::string frame) {
      net::post(executor, [weak, frame = std::move(frame)]() mutable {
        if (auto self = weak.lock()) self->send(std::move(frame));
      });
    });
    read_length();
  }

 private:
  void read_length() {
    net::async_read(socket_, net::buffer(length_bytes_),
                    beast::bind_front_handler(&StreamSession::on_length, shared_from_this()));
  }

  void on_length(beast::error_code ec, std::size_t) {
    if (ec) return client_->close();
    std::uint32_t n;
    std::memcpy(&n, length_bytes_, 4);
    if (n > kMaxRequestBytes) {
      // Unframeable from here on: answer once and hang up.
      FrameHeader header;
      header.status = FrameStatus::BadRequest;
      client_->close();
      send(encode_frame(header, error_payload("request exceeds " + std::to_string(kMaxRequestBytes) + " bytes")));
      closing_ = true;
      return;
    }
    body_.resize(n);
    net::async_read(socket_, net::buffer(body_), beast::bind_front_handler(&StreamSession::on_body, shared_from_this()));
  }

  void on_body(beast::error_code ec, std::size_t) {
    if (ec) return client_->close();
    client_->submit(std::move(body_));
    body_.clear();
    read_length();
  }

  void send(std::string frame) {
    std::string framed;
    put<std::uint32_t>(framed, static_cast<std::uint32_t>(frame.size()));
    framed += frame;
    outbox_.push_back(std::move(framed));
    if (!writing_) write_next();
  }

  void write_next() {
    writing_ = true;
    net::async_write(socket_, net::buffer(outbox_.front()),
                     beast::bind_front_handler(&StreamSession::on_write, shared_from_this()));
  }

  void on_write(beast::error_code ec, std::size_t) {
    writing_ = false;
    if (ec) return client_->close();
    outbox_.pop_front();
    if (!outbox_.empty()) return write_next();
    if (closing_) {
      beast::error_code ignored;
      socket_.shutdown(tcp::socket::shutdown_both, ignored);
    }
  }

  tcp::socket socket_;
  FrameService& service_;
  char length_bytes_[4]{};
  std::string body_;
  bool closing_{false};
  std::shared_ptr<FrameService::Client> client_;
};

class HttpSession : public std::enable_shared_from_this<HttpSession> {
 public:
  HttpSession(tcp::socket&& socket, FrameService& service, const std::string& assets)
      : stream_(std::move(socket)), service_(service), assets_(assets) {}

  void run() { read(); }

 private:
  void read() {
    request_ = {};
    stream_.expires_after(std::chrono::seconds(30));
    http::async_read(stream_, buffer_, request_, beast::bind_front_handler(&HttpSession::on_read, shared_from_this()));
  }

  void on_read(beast::error_code ec, std::size_t) {
    if (ec) return;
    if (websocket::is_upgrade(request_)) {
      if (request_.target() == "/stream") {
        stream_.expires_never();
        std::make_shared<WebSocketSession>(stream_.release_socket(), service_)->run(std::move(request_));
        return;
      }
      return reply(http::status::not_found, "text/plain", "no such stream\n");
    }
    if (request_.method() != http::verb::get && request_.method() != http::verb::head) {
      return reply(http::status::method_not_allowed, "text/plain", "GET only\n");
    }
    const std::string_view target(request_.target().data(), request_.target().size());
    if (target == "/api/info") return reply(http::status::ok, "application/json", service_.info().dump());
    if (auto file = resolve_asset(assets_, target)) {
      std::ifstream in(*file, std::ios::binary);
      std::ostringstream body;
      body << in.rdbuf();
      return reply(http::status::ok, mime_type(*file), body.str());
    }
    if (target == "/" || target == "/index.html") return reply(http::status::ok, "text/html; charset=utf-8", kPlaceholderPage);
    reply(http::status::not_found, "text/plain", "not found\n");
  }

  void reply(http::status status, const std::string& type, std::string body) {
    auto res = std::make_shared<http::response<http::string_body>>(status, request_.version());
    res->set(http::field::server, "i4d");
    res->set(http::field::content_type, type);
    res->keep_alive(request_.keep_alive());
    if (request_.method() == http::verb::head) {
      res->content_length(body.size());
    } else {
      res->body() = std::move(body);
      res->prepare_payload();
    }
    http::async_write(stream_, *res, [self = shared_from_this(), res](beast::error_code ec, std::size_t) {
      if (ec) return;
      if (res->keep_alive()) return self->read();
      beast::error_code ignored;
      self->stream_.socket().shutdown(tcp::socket::shutdown_send, ignored);
    });
  }

  beast::tcp_stream stream_;
  FrameService& service_;
  const std::string& assets_;
  beast::flat_buffer buffer_;
  http::request<http::string_body> request_;
};

template <typename OnSocket>
class Listener : public std::enable_shared_from_this<Listener<OnSocket>> {
 public:
  Listener(net::io_context& ioc, const tcp::endpoint& endpoint, OnSocket on_socket)
      : ioc_(ioc), acceptor_(net::make_strand(ioc)), on_socket_(std::move(on_socket)) {
    acceptor_.open(endpoint.protocol());
    acceptor_.set_option(net::socket_base::reuse_address(true));
    acceptor_.bind(endpoint);
    acceptor_.listen(net::socket_base::max_listen_connections);
  }

  void run() { accept(); }
  [[nodiscard]] int port() const { return acceptor_.local_endpoint().port(); }

 private:
  void accept() {
    acceptor_.async_accept(net::make_strand(ioc_), [self = this->shared_from_this()](beast::error_code ec, tcp::socket socket) {
      if (ec == net::error::operation_aborted) return;
      if (!ec) {
        socket.set_option(tcp::no_delay(true));
        self->on_socket_(std::move(socket));
      }
      self->accept();
    });
  }

  net::io_context& ioc_;
  tcp::acceptor acceptor_;
  OnSocket on_socket_;
};

template <typename OnSocket>
auto make_listener(net::io_context& ioc, const tcp::endpoint& endpoint, OnSocket on_socket) {
  return std::make_shared<Listener<OnSocket>>(ioc, endpoint, std::move(on_socket));
}

}  // namespace

struct Server::Impl {
  ServerOptions options;
  net::io_context ioc;
  FrameService service;
  int http_port{0};
  int stream_port{0};
  std::vector<std::thread> threads;
  net::signal_set signals{ioc, SIGINT, SIGTERM};

  Impl(std::shared_ptr<const GaussianModel<float>> model, ServerOptions opts)
      : options(std::move(opts)), ioc(std::max(1, options.io_threads)), service(std::move(model), options.service) {}
};

Server::Server(std::shared_ptr<const GaussianModel<float>> model, ServerOptions options)
    : impl_(std::make_unique<Impl>(std::move(model), std::move(options))) {
  const auto& o = impl_->options;
  require(o.port >= 0 && o.port <= 65535, "serve: port out of range");
  require(o.stream_port >= -1 && o.stream_port <= 65535, "serve: stream port out of range");
  require(o.port == 0 || o.stream_port != -1 || o.port < 65535, "serve: no room for the stream port");
  require(o.io_threads >= 1, "serve: io threads must be >= 1");
  if (!o.assets_dir.empty()) require(std::filesystem::is_directory(o.assets_dir), "serve: assets directory '" + o.assets_dir + "' not found");
}

Server::~Server() { stop(); }

void Server::start() {
  auto& impl = *impl_;
  const auto address = net::ip::make_address(impl.options.address);
  const int stream_port =
      impl.options.stream_port >= 0 ? impl.options.stream_port : (impl.options.port == 0 ? 0 : impl.options.port + 1);
  FrameService& service = impl.service;
  const std::string& assets = impl.options.assets_dir;
  try {
    auto http = make_listener(impl.ioc, {address, static_cast<unsigned short>(impl.options.port)},
                              [&service, &assets](tcp::socket socket) {
                                std::make_shared<HttpSession>(std::move(socket), service, assets)->run();
                              });
    auto raw = make_listener(impl.ioc, {address, static_cast<unsigned short>(stream_port)},
                             [&service](tcp::socket socket) {
                               std::make_shared<StreamSession>(std::move(socket), service)->run();
                             });
    impl.http_port = http->port();
    impl.stream_port = raw->port();
    http->run();
    raw->run();
  } catch (const boost::system::system_error& e) {
    throw IoError(std::string("serve: cannot listen: ") + e.what());
  }
  impl.signals.async_wait([&impl](beast::error_code ec, int) {
    if (!ec) impl.ioc.stop();
  });
  for (int i = 0; i < impl.options.io_threads; ++i) impl.threads.emplace_back([&impl] { impl.ioc.run(); });
  spdlog::info("serving http://{}:{}/ (websocket /stream), raw stream on port {}", impl.options.address,
               impl.http_port, impl.stream_port);
}

void Server::wait() {
  for (auto& t : impl_->threads) t.join();
  impl_->threads.clear();
}

void Server::stop() {
  if (!impl_) return;
  impl_->ioc.stop();
  wait();
}

int Server::http_port() const { return impl_->http_port; }
int Server::stream_port() const { return impl_->stream_port; }
FrameService& Server::service() { return impl_->service; }

}  // namespace i4d
