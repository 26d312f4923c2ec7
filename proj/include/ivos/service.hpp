#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "ivos/embedding.hpp"
#include "ivos/session.hpp"

namespace ivos {

/// A mutation was requested while the session cannot accept it.
class ConflictError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Unknown session, round or frame.
class NotFoundError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// created -> encoding -> ready <-> propagating; any -> error.
enum class SessionState { kCreated, kEncoding, kReady, kPropagating, kError };

std::string to_string(SessionState s);

struct ProgressEvent {
  int round = 0;
  int frame = -1;  ///< -1 on the done event
  bool done = false;
};

nlohmann::json to_json(const ProgressEvent& e);

struct SessionInfo {
  std::string id;
  SessionState state = SessionState::kCreated;
  int round = 0;  ///< completed rounds
  std::string error;
  int frames = 0;
  int objects = 0;
  int height = 0;
  int width = 0;
};

nlohmann::json to_json(const SessionInfo& s);

/// Frames for a new session: a directory on the server, or uploaded image
/// files (PNG or JPEG bytes) in frame order.
struct FrameUpload {
  std::optional<std::filesystem::path> path;
  std::vector<std::vector<std::uint8_t>> images;
};

struct ServiceConfig {
  std::filesystem::path root;
  FeatureEmbeddingConfig embedding{16, 6.0, 0x5eed, 2.0, 0.5, 0.5, 1.0};
  SessionConfig session;  ///< defaults for new sessions
  std::shared_ptr<const HeadPair> heads;
};

/// Filesystem-persisted sessions, one directory per session under the root.
/// Mutations run on a worker thread per session; reads are served from
/// metadata and on-disk round artifacts and never wait for a computation.
class SessionManager {
 public:
  /// Restores every session directory found under cfg.root.
  explicit SessionManager(ServiceConfig cfg);
  ~SessionManager();
  SessionManager(const SessionManager&) = delete;
  SessionManager& operator=(const SessionManager&) = delete;

  /// Returns the new id immediately; encoding continues in the background.
  /// `config` holds SessionConfig fields overriding the service defaults.
  std::string create(FrameUpload frames, int objects, const nlohmann::json& config = nlohmann::json::object());

  /// Starts the next round and returns its index. Throws ConflictError unless
  /// the session is ready, ValidationError for bad scribbles.
  int submit(const std::string& id, const ScribbleSet& scribbles);

  SessionInfo info(const std::string& id) const;
  std::vector<SessionInfo> list() const;

  /// On-disk mask PNG of a completed round.
  std::vector<std::uint8_t> mask_png(const std::string& id, int round, int frame) const;
  /// Parsed provenance.json of a completed round.
  nlohmann::json provenance(const std::string& id, int round) const;
  /// Stored (effective) scribbles.json of a completed round.
  std::vector<std::uint8_t> round_scribbles(const std::string& id, int round) const;
  std::vector<std::uint8_t> frame_png(const std::string& id, int frame) const;
  nlohmann::json metrics(const std::string& id) const;

  /// Events from index `since` on; waits up to `wait` for one to arrive.
  std::vector<ProgressEvent> events(const std::string& id, std::size_t since,
                                    std::chrono::milliseconds wait = std::chrono::milliseconds(0)) const;

  /// Blocks until the session leaves created/encoding/propagating or the
  /// timeout passes; returns the state seen last.
  SessionState wait_idle(const std::string& id, std::chrono::milliseconds timeout) const;

  const std::filesystem::path& root() const { return cfg_.root; }

 private:
  struct Entry {
    SessionInfo info;
    std::filesystem::path dir;
    std::unique_ptr<Session> session;
    std::vector<ProgressEvent> events;
    std::vector<double> round_millis;
    int encoder_invocations = 0;
    std::thread worker;
    mutable std::mutex mu;
    mutable std::condition_variable cv;
  };

  std::shared_ptr<Entry> find(const std::string& id) const;
  void restore();
  void encode(const std::shared_ptr<Entry>& e, FrameUpload frames, SessionConfig cfg);
  void propagate(const std::shared_ptr<Entry>& e, ScribbleSet scribbles);
  /// Directory of a completed round; NotFoundError otherwise.
  std::filesystem::path round_path(const std::string& id, int round) const;

  ServiceConfig cfg_;
  FeatureEmbeddingProvider provider_;
  mutable std::mutex mu_;
  std::map<std::string, std::shared_ptr<Entry>> sessions_;
};

/// HTTP + WebSocket front end over a SessionManager. One thread per
/// connection.
///
///   GET  /health
///   POST /sessions                          {"objects", "path" | "frames": [base64], "config"?}
///   GET  /sessions
///   GET  /sessions/{id}
///   POST /sessions/{id}/scribbles           scribble JSON -> 202 {"round"}, 409 when busy
///   GET  /sessions/{id}/rounds/{r}/masks    JSON with base64 PNGs + provenance
///   GET  /sessions/{id}/rounds/{r}/masks?frame=t   image/png, provenance in X-Ivos-Provenance
///   GET  /sessions/{id}/rounds/{r}/scribbles
///   GET  /sessions/{id}/frames/{t}
///   GET  /sessions/{id}/metrics
///   GET  /sessions/{id}/events?since=k      polling fallback
///   WS   /sessions/{id}/events              {"round","frame","done"} per event
class HttpServer {
 public:
  /// Binds immediately; port 0 picks a free port.
  HttpServer(SessionManager& manager, const std::string& address, unsigned short port);
  ~HttpServer();
  HttpServer(const HttpServer&) = delete;
  HttpServer& operator=(const HttpServer&) = delete;

  unsigned short port() const;
  /// Accept loop; returns after stop().
  void run();
  /// run() on a background thread.
  void start();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace ivos
