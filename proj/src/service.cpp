#include "ivos/service.hpp"

#include <algorithm>
#include <charconv>
#include <list>
#include <random>
#include <sstream>

#include <sys/socket.h>

#include <boost/asio/ip/tcp.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/core/detail/base64.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>

#include "ivos/image_io.hpp"
#include "ivos/raster.hpp"
#include "ivos/scribble_json.hpp"

namespace ivos {

namespace fs = std::filesystem;
using nlohmann::json;

std::string to_string(SessionState s) {
  switch (s) {
    case SessionState::kCreated: return "created";
    case SessionState::kEncoding: return "encoding";
    case SessionState::kReady: return "ready";
    case SessionState::kPropagating: return "propagating";
    case SessionState::kError: return "error";
  }
  return "error";
}

json to_json(const ProgressEvent& e) { return json{{"round", e.round}, {"frame", e.frame}, {"done", e.done}}; }

json to_json(const SessionInfo& s) {
  json j{{"id", s.id},         {"state", to_string(s.state)}, {"round", s.round},  {"frames", s.frames},
         {"objects", s.objects}, {"height", s.height},          {"width", s.width}};
  if (!s.error.empty()) j["error"] = s.error;
  return j;
}

// ---------------------------------------------------------------------------
// SessionManager

namespace {

std::string new_id() {
  static std::mutex mu;
  static std::mt19937_64 rng{std::random_device{}()};
  std::lock_guard lock(mu);
  std::ostringstream os;
  os << std::hex;
  os.width(16);
  os.fill('0');
  os << rng();
  return os.str();
}

bool is_jpeg(const std::vector<std::uint8_t>& b) { return b.size() >= 3 && b[0] == 0xFF && b[1] == 0xD8 && b[2] == 0xFF; }

}  // namespace

SessionManager::SessionManager(ServiceConfig cfg) : cfg_(std::move(cfg)), provider_(cfg_.embedding) {
  fs::create_directories(cfg_.root);
  restore();
}

SessionManager::~SessionManager() {
  std::lock_guard lock(mu_);
  for (auto& [id, e] : sessions_)
    if (e->worker.joinable()) e->worker.join();
}

void SessionManager::restore() {
  std::vector<fs::path> dirs;
  for (const auto& d : fs::directory_iterator(cfg_.root))
    if (d.is_directory()) dirs.push_back(d.path());
  std::sort(dirs.begin(), dirs.end());
  for (const auto& dir : dirs) {
    auto e = std::make_shared<Entry>();
    e->dir = dir;
    e->info.id = dir.filename().string();
    try {
      e->session = Session::load(dir, cfg_.heads);
      e->info.state = SessionState::kReady;
      e->info.round = e->session->current_round();
      e->info.frames = e->session->frame_count();
      e->info.objects = e->session->object_count();
      e->info.height = e->session->height();
      e->info.width = e->session->width();
      e->encoder_invocations = e->session->encoder_invocations();
    } catch (const std::exception& ex) {
      e->session.reset();
      e->info.state = SessionState::kError;
      e->info.error = ex.what();
    }
    sessions_.emplace(e->info.id, std::move(e));
  }
}

std::shared_ptr<SessionManager::Entry> SessionManager::find(const std::string& id) const {
  std::lock_guard lock(mu_);
  const auto it = sessions_.find(id);
  if (it == sessions_.end()) throw NotFoundError("unknown session " + id);
  return it->second;
}

std::string SessionManager::create(FrameUpload frames, int objects, const json& config) {
  if (objects < 2 || objects > 255) throw ValidationError("objects must be in [2, 255]");
  if (!config.is_object()) throw ValidationError("config must be an object");
  json merged = config_to_json(cfg_.session);
  for (const auto& [k, v] : config.items()) merged[k] = v;
  const SessionConfig sc = config_from_json(merged);
  if (sc.mode == DecisionMode::kHeads && !cfg_.heads) throw ValidationError("service has no trained heads");
  if (frames.path) {
    if (!fs::is_directory(*frames.path)) throw ValidationError("not a directory: " + frames.path->string());
  } else if (frames.images.empty()) {
    throw ValidationError("no frames given");
  }

  auto e = std::make_shared<Entry>();
  {
    std::lock_guard lock(mu_);
    do e->info.id = new_id();
    while (sessions_.count(e->info.id) || fs::exists(cfg_.root / e->info.id));
    e->dir = cfg_.root / e->info.id;
    fs::create_directories(e->dir);
    e->info.objects = objects;
    sessions_.emplace(e->info.id, e);
  }
  std::lock_guard lock(e->mu);
  e->worker = std::thread([this, e, frames = std::move(frames), sc]() mutable { encode(e, std::move(frames), sc); });
  return e->info.id;
}

void SessionManager::encode(const std::shared_ptr<Entry>& e, FrameUpload frames, SessionConfig cfg) {
  {
    std::lock_guard lock(e->mu);
    e->info.state = SessionState::kEncoding;
  }
  e->cv.notify_all();
  try {
    FrameSequence seq;
    if (frames.path) {
      seq = load_frame_directory(*frames.path);
    } else {
      for (std::size_t i = 0; i < frames.images.size(); ++i) {
        const auto& b = frames.images[i];
        try {
          seq.frames.push_back(is_jpeg(b) ? decode_jpeg_rgb(b) : decode_png_rgb(b));
        } catch (const std::exception& ex) {
          throw FormatError("frame " + std::to_string(i) + ": " + ex.what());
        }
      }
      seq.validate();
    }
    auto on_encode = [&](int, int frame, bool) {
      std::lock_guard lock(e->mu);
      e->events.push_back({0, frame, false});
      e->cv.notify_all();
    };
    auto s = std::make_unique<Session>(std::move(seq), provider_, e->info.objects, cfg, cfg_.heads, on_encode);
    s->save_initial(e->dir);
    std::lock_guard lock(e->mu);
    e->info.frames = s->frame_count();
    e->info.height = s->height();
    e->info.width = s->width();
    e->encoder_invocations = s->encoder_invocations();
    e->session = std::move(s);
    e->info.state = SessionState::kReady;
    e->events.push_back({0, -1, true});
  } catch (const std::exception& ex) {
    std::lock_guard lock(e->mu);
    e->info.state = SessionState::kError;
    e->info.error = ex.what();
  }
  e->cv.notify_all();
}

int SessionManager::submit(const std::string& id, const ScribbleSet& scribbles) {
  const auto e = find(id);
  std::lock_guard lock(e->mu);
  if (e->info.state != SessionState::kReady)
    throw ConflictError("session " + id + " is " + to_string(e->info.state));
  if (scribbles.frame_index < 0 || scribbles.frame_index >= e->info.frames)
    throw ValidationError("scribbles: frame " + std::to_string(scribbles.frame_index) + " out of range");
  validate_scribbles(scribbles, e->info.height, e->info.width, e->info.objects);
  if (e->info.round == 0 &&
      std::none_of(scribbles.strokes.begin(), scribbles.strokes.end(),
                   [](const ScribbleStroke& s) { return s.polarity == Polarity::kPositive; }))
    throw ValidationError("the first round needs at least one positive stroke");
  e->info.state = SessionState::kPropagating;
  if (e->worker.joinable()) e->worker.join();
  e->worker = std::thread([this, e, scribbles] { propagate(e, scribbles); });
  e->cv.notify_all();
  return e->info.round + 1;
}

void SessionManager::propagate(const std::shared_ptr<Entry>& e, ScribbleSet scribbles) {
  try {
    const auto t0 = std::chrono::steady_clock::now();
    // The done event is published only once the round is on disk.
    auto on_progress = [&](int round, int frame, bool done) {
      if (done) return;
      std::lock_guard lock(e->mu);
      e->events.push_back({round, frame, false});
      e->cv.notify_all();
    };
    const RoundResult& res = e->session->round(scribbles, on_progress);
    e->session->save_round(e->dir);
    const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    std::lock_guard lock(e->mu);
    e->round_millis.push_back(ms);
    e->info.round = res.round;
    e->encoder_invocations = e->session->encoder_invocations();
    e->info.state = SessionState::kReady;
    e->events.push_back({res.round, -1, true});
  } catch (const std::exception& ex) {
    std::lock_guard lock(e->mu);
    e->info.state = SessionState::kError;
    e->info.error = ex.what();
  }
  e->cv.notify_all();
}

SessionInfo SessionManager::info(const std::string& id) const {
  const auto e = find(id);
  std::lock_guard lock(e->mu);
  return e->info;
}

std::vector<SessionInfo> SessionManager::list() const {
  std::vector<std::shared_ptr<Entry>> all;
  {
    std::lock_guard lock(mu_);
    for (const auto& [id, e] : sessions_) all.push_back(e);
  }
  std::vector<SessionInfo> out;
  for (const auto& e : all) {
    std::lock_guard lock(e->mu);
    out.push_back(e->info);
  }
  return out;
}

fs::path SessionManager::round_path(const std::string& id, int round) const {
  const auto e = find(id);
  std::lock_guard lock(e->mu);
  if (round < 1 || round > e->info.round)
    throw NotFoundError("session " + id + " has no completed round " + std::to_string(round));
  return e->dir / "rounds" / std::to_string(round);
}

std::vector<std::uint8_t> SessionManager::mask_png(const std::string& id, int round, int frame) const {
  const fs::path rd = round_path(id, round);
  if (frame < 0 || frame >= info(id).frames) throw NotFoundError("frame " + std::to_string(frame) + " out of range");
  return read_file(rd / "masks" / frame_file_name(frame));
}

json SessionManager::provenance(const std::string& id, int round) const {
  const auto bytes = read_file(round_path(id, round) / "provenance.json");
  return json::parse(bytes.begin(), bytes.end());
}

std::vector<std::uint8_t> SessionManager::round_scribbles(const std::string& id, int round) const {
  return read_file(round_path(id, round) / "scribbles.json");
}

std::vector<std::uint8_t> SessionManager::frame_png(const std::string& id, int frame) const {
  const SessionInfo s = info(id);
  if (s.state == SessionState::kCreated || s.state == SessionState::kEncoding || s.state == SessionState::kError)
    throw NotFoundError("session " + id + " has no frames yet");
  if (frame < 0 || frame >= s.frames) throw NotFoundError("frame " + std::to_string(frame) + " out of range");
  return read_file(find(id)->dir / "frames" / frame_file_name(frame));
}

json SessionManager::metrics(const std::string& id) const {
  const auto e = find(id);
  std::lock_guard lock(e->mu);
  return json{{"id", id},
              {"frames", e->info.frames},
              {"rounds_completed", e->info.round},
              {"encoder_invocations", e->encoder_invocations},
              {"round_millis", e->round_millis}};
}

std::vector<ProgressEvent> SessionManager::events(const std::string& id, std::size_t since,
                                                  std::chrono::milliseconds wait) const {
  const auto e = find(id);
  std::unique_lock lock(e->mu);
  e->cv.wait_for(lock, wait, [&] { return e->events.size() > since || e->info.state == SessionState::kError; });
  if (since >= e->events.size()) return {};
  return {e->events.begin() + static_cast<std::ptrdiff_t>(since), e->events.end()};
}

SessionState SessionManager::wait_idle(const std::string& id, std::chrono::milliseconds timeout) const {
  const auto e = find(id);
  std::unique_lock lock(e->mu);
  e->cv.wait_for(lock, timeout, [&] {
    return e->info.state == SessionState::kReady || e->info.state == SessionState::kError;
  });
  return e->info.state;
}

// ---------------------------------------------------------------------------
// HTTP

namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
namespace net = boost::asio;
using tcp = net::ip::tcp;

namespace {

using Request = http::request<http::string_body>;
using Response = http::response<http::string_body>;

std::string base64_encode(const std::vector<std::uint8_t>& bytes) {
  std::string out(beast::detail::base64::encoded_size(bytes.size()), '\0');
  out.resize(beast::detail::base64::encode(out.data(), bytes.data(), bytes.size()));
  return out;
}

std::vector<std::uint8_t> base64_decode(const std::string& s) {
  std::vector<std::uint8_t> out(beast::detail::base64::decoded_size(s.size()));
  const auto [written, read] = beast::detail::base64::decode(out.data(), s.data(), s.size());
  std::size_t end = read;
  while (end < s.size() && s[end] == '=') ++end;
  if (end != s.size()) throw ValidationError("bad base64 payload");
  out.resize(written);
  return out;
}

struct Target {
  std::vector<std::string> parts;
  std::map<std::string, std::string> query;
};

Target parse_target(std::string_view t) {
  Target out;
  const auto q = t.find('?');
  std::string_view path = t.substr(0, q);
  if (q != std::string_view::npos) {
    std::string_view qs = t.substr(q + 1);
    while (!qs.empty()) {
      const auto amp = qs.find('&');
      const std::string_view kv = qs.substr(0, amp);
      const auto eq = kv.find('=');
      out.query[std::string(kv.substr(0, eq))] = eq == std::string_view::npos ? "" : std::string(kv.substr(eq + 1));
      if (amp == std::string_view::npos) break;
      qs.remove_prefix(amp + 1);
    }
  }
  while (!path.empty()) {
    const auto slash = path.find('/');
    if (slash != 0) out.parts.emplace_back(path.substr(0, slash));
    if (slash == std::string_view::npos) break;
    path.remove_prefix(slash + 1);
  }
  return out;
}

int to_int(const std::string& s) {
  int v = 0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) throw NotFoundError("not a number: " + s);
  return v;
}

Response make_response(const Request& req, http::status st, std::string body, const std::string& type) {
  Response res{st, req.version()};
  res.set(http::field::content_type, type);
  res.set(http::field::access_control_allow_origin, "*");
  res.keep_alive(req.keep_alive());
  res.body() = std::move(body);
  res.prepare_payload();
  return res;
}

Response json_response(const Request& req, http::status st, const json& j) {
  return make_response(req, st, j.dump(), "application/json");
}

Response bytes_response(const Request& req, const std::vector<std::uint8_t>& b, const std::string& type) {
  return make_response(req, http::status::ok, std::string(b.begin(), b.end()), type);
}

Response route(SessionManager& m, const Request& req) {
  const Target t = parse_target(std::string_view(req.target().data(), req.target().size()));
  const auto& p = t.parts;
  const auto method = req.method();
  if (method == http::verb::options) {
    Response res = make_response(req, http::status::no_content, "", "text/plain");
    res.set(http::field::access_control_allow_methods, "GET, POST, OPTIONS");
    res.set(http::field::access_control_allow_headers, "Content-Type");
    return res;
  }
  if (p.size() == 1 && p[0] == "health" && method == http::verb::get)
    return json_response(req, http::status::ok, json{{"ok", true}});
  if (p.empty() || p[0] != "sessions") throw NotFoundError("no route for " + std::string(req.target()));

  if (p.size() == 1) {
    if (method == http::verb::post) {
      json body;
      try {
        body = json::parse(req.body());
      } catch (const json::exception& e) {
        throw ValidationError(std::string("bad JSON: ") + e.what());
      }
      if (!body.is_object() || !body.contains("objects") || !body["objects"].is_number_integer())
        throw ValidationError("body needs an integer \"objects\"");
      FrameUpload up;
      if (body.contains("path")) {
        if (!body["path"].is_string()) throw ValidationError("\"path\" must be a string");
        up.path = body["path"].get<std::string>();
      } else if (body.contains("frames") && body["frames"].is_array()) {
        for (const auto& f : body["frames"]) {
          if (!f.is_string()) throw ValidationError("\"frames\" must hold base64 strings");
          up.images.push_back(base64_decode(f.get<std::string>()));
        }
      } else {
        throw ValidationError("body needs \"path\" or \"frames\"");
      }
      const std::string id =
          m.create(std::move(up), body["objects"].get<int>(), body.value("config", json::object()));
      return json_response(req, http::status::created, to_json(m.info(id)));
    }
    if (method == http::verb::get) {
      json arr = json::array();
      for (const auto& s : m.list()) arr.push_back(to_json(s));
      return json_response(req, http::status::ok, json{{"sessions", arr}});
    }
  }
  if (p.size() < 2) throw NotFoundError("no route for " + std::string(req.target()));
  const std::string& id = p[1];
  if (p.size() == 2 && method == http::verb::get) return json_response(req, http::status::ok, to_json(m.info(id)));
  if (p.size() == 3 && p[2] == "scribbles" && method == http::verb::post) {
    m.info(id);  // 404 before parsing
    ScribbleSet s;
    try {
      s = parse_scribbles(req.body());
    } catch (const FormatError& e) {
      throw ValidationError(e.what());
    }
    const int round = m.submit(id, s);
    return json_response(req, http::status::accepted, json{{"id", id}, {"round", round}});
  }
  if (p.size() == 3 && p[2] == "metrics" && method == http::verb::get)
    return json_response(req, http::status::ok, m.metrics(id));
  if (p.size() == 3 && p[2] == "events" && method == http::verb::get) {
    const auto it = t.query.find("since");
    const std::size_t since = it == t.query.end() ? 0 : static_cast<std::size_t>(std::max(0, to_int(it->second)));
    json arr = json::array();
    const auto ev = m.events(id, since);
    for (const auto& e : ev) arr.push_back(to_json(e));
    return json_response(req, http::status::ok,
                         json{{"events", arr}, {"next", since + ev.size()}, {"state", to_string(m.info(id).state)}});
  }
  if (p.size() == 4 && p[2] == "frames" && method == http::verb::get)
    return bytes_response(req, m.frame_png(id, to_int(p[3])), "image/png");
  if (p.size() == 5 && p[2] == "rounds" && method == http::verb::get) {
    const int r = to_int(p[3]);
    if (p[4] == "scribbles") return bytes_response(req, m.round_scribbles(id, r), "application/json");
    if (p[4] == "masks") {
      const json prov = m.provenance(id, r);
      const auto it = t.query.find("frame");
      if (it != t.query.end()) {
        const int f = to_int(it->second);
        Response res = bytes_response(req, m.mask_png(id, r, f), "image/png");
        const json fp{{"round", r},
                      {"frame", f},
                      {"annotated_frame", prov.at("annotated_frame")},
                      {"local_round", prov.at("local_round").at(static_cast<std::size_t>(f))}};
        res.set("X-Ivos-Provenance", fp.dump());
        res.set(http::field::access_control_expose_headers, "X-Ivos-Provenance");
        return res;
      }
      json masks = json::array();
      const int n = m.info(id).frames;
      for (int f = 0; f < n; ++f) masks.push_back(json{{"frame", f}, {"png", base64_encode(m.mask_png(id, r, f))}});
      return json_response(req, http::status::ok, json{{"round", r}, {"masks", masks}, {"provenance", prov}});
    }
  }
  throw NotFoundError("no route for " + std::string(req.target()));
}

Response handle(SessionManager& m, const Request& req) {
  try {
    return route(m, req);
  } catch (const NotFoundError& e) {
    return json_response(req, http::status::not_found, json{{"error", e.what()}});
  } catch (const ConflictError& e) {
    return json_response(req, http::status::conflict, json{{"error", e.what()}});
  } catch (const ValidationError& e) {
    return json_response(req, http::status::bad_request, json{{"error", e.what()}});
  } catch (const ContractViolation& e) {
    return json_response(req, http::status::bad_request, json{{"error", e.what()}});
  } catch (const std::exception& e) {
    return json_response(req, http::status::internal_server_error, json{{"error", e.what()}});
  }
}

}  // namespace

struct HttpServer::Impl {
  SessionManager& manager;
  net::io_context ioc{1};
  tcp::acceptor acceptor{ioc};
  std::atomic<bool> stopping{false};
  std::thread runner;
  std::mutex mu;
  struct Conn {
    std::thread thread;
    std::shared_ptr<std::atomic<bool>> finished;
    int fd = -1;
  };
  std::list<Conn> conns;

  explicit Impl(SessionManager& m) : manager(m) {}

  void serve_events(tcp::socket socket, const Request& req, const std::string& id) {
    websocket::stream<tcp::socket> ws(std::move(socket));
    ws.accept(req);
    ws.text(true);
    std::size_t next = 0;
    while (!stopping) {
      const auto ev = manager.events(id, next, std::chrono::milliseconds(200));
      for (const auto& e : ev) ws.write(net::buffer(to_json(e).dump()));
      next += ev.size();
      if (manager.info(id).state == SessionState::kError && ev.empty()) break;
    }
    beast::error_code ec;
    ws.close(websocket::close_code::normal, ec);
  }

  void serve(tcp::socket socket) {
    beast::error_code ec;
    beast::flat_buffer buf;
    while (!stopping) {
      http::request_parser<http::string_body> parser;
      parser.body_limit(512u * 1024 * 1024);
      http::read(socket, buf, parser, ec);
      if (ec) break;
      Request req = parser.release();
      if (websocket::is_upgrade(req)) {
        const Target t = parse_target(std::string_view(req.target().data(), req.target().size()));
        if (t.parts.size() == 3 && t.parts[0] == "sessions" && t.parts[2] == "events") {
          try {
            manager.info(t.parts[1]);
          } catch (const NotFoundError& e) {
            http::write(socket, json_response(req, http::status::not_found, json{{"error", e.what()}}), ec);
            break;
          }
          try {
            serve_events(std::move(socket), req, t.parts[1]);
          } catch (const std::exception&) {
          }
          return;
        }
      }
      const Response res = handle(manager, req);
      http::write(socket, res, ec);
      if (ec || !res.keep_alive()) break;
    }
    socket.shutdown(tcp::socket::shutdown_send, ec);
  }

  void reap() {
    std::lock_guard lock(mu);
    for (auto it = conns.begin(); it != conns.end();) {
      if (*it->finished) {
        it->thread.join();
        it = conns.erase(it);
      } else {
        ++it;
      }
    }
  }

  void run() {
    while (!stopping) {
      tcp::socket socket(ioc);
      beast::error_code ec;
      acceptor.accept(socket, ec);
      if (stopping) break;
      if (ec) continue;
      reap();
      auto finished = std::make_shared<std::atomic<bool>>(false);
      const int fd = socket.native_handle();
      std::lock_guard lock(mu);
      conns.push_back({std::thread([this, s = std::move(socket), finished]() mutable {
                         serve(std::move(s));
                         *finished = true;
                       }),
                       finished, fd});
    }
  }

  void stop() {
    if (stopping.exchange(true)) return;
    // Wake the blocking accept with a throwaway connection.
    {
      beast::error_code ec;
      tcp::socket poke(ioc);
      poke.connect(acceptor.local_endpoint(ec), ec);
    }
    if (runner.joinable()) runner.join();
    std::list<Conn> rest;
    {
      std::lock_guard lock(mu);
      for (auto& c : conns)
        if (!*c.finished) ::shutdown(c.fd, SHUT_RDWR);
      rest.swap(conns);
    }
    for (auto& c : rest) c.thread.join();
    beast::error_code ec;
    acceptor.close(ec);
  }
};

HttpServer::HttpServer(SessionManager& manager, const std::string& address, unsigned short port)
    : impl_(std::make_unique<Impl>(manager)) {
  const tcp::endpoint ep{net::ip::make_address(address), port};
  impl_->acceptor.open(ep.protocol());
  impl_->acceptor.set_option(net::socket_base::reuse_address(true));
  impl_->acceptor.bind(ep);
  impl_->acceptor.listen();
}

HttpServer::~HttpServer() { stop(); }

unsigned short HttpServer::port() const { return impl_->acceptor.local_endpoint().port(); }

void HttpServer::run() { impl_->run(); }

void HttpServer::start() {
  impl_->runner = std::thread([this] { impl_->run(); });
}

void HttpServer::stop() { impl_->stop(); }

}  // namespace ivos
