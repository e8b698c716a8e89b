#include <httplib.h>

#include <fstream>

#include "rewardkit/error.hpp"
#include "rewardkit/records.hpp"
#include "rewardkit/verify.hpp"

namespace rewardkit {

using nlohmann::json;

namespace {

int http_status_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kNotFound: return 404;
    case ErrorKind::kConflict: return 409;
    case ErrorKind::kValidation:
    case ErrorKind::kRange:
    case ErrorKind::kConfig:
    case ErrorKind::kPrecondition: return 400;
    default: return 500;
  }
}

void send_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, std::string_view kind, const std::string& message) {
  send_json(res, status, {{"error", {{"kind", kind}, {"message", message}}}});
}

std::string media_type_for(const std::filesystem::path& p) {
  const auto ext = p.extension().string();
  if (ext == ".mp4" || ext == ".m4v") return "video/mp4";
  if (ext == ".webm") return "video/webm";
  if (ext == ".mkv" || ext == ".vid") return "video/x-matroska";
  if (ext == ".mov") return "video/quicktime";
  return "application/octet-stream";
}

std::optional<std::uint64_t> parse_u64(const std::string& s) {
  if (s.empty() || s.find_first_not_of("0123456789") != std::string::npos) return std::nullopt;
  try {
    return std::stoull(s);
  } catch (const std::out_of_range&) {
    return std::nullopt;
  }
}

template <typename Fn>
httplib::Server::Handler guarded(Logger& logger, Fn fn) {
  return [&logger, fn](const httplib::Request& req, httplib::Response& res) {
    try {
      fn(req, res);
    } catch (const Error& ex) {
      send_error(res, http_status_for(ex.kind()), to_string(ex.kind()), ex.what());
    } catch (const json::exception& ex) {
      send_error(res, 400, "validation", std::string("malformed JSON: ") + ex.what());
    } catch (const std::exception& ex) {
      logger.error("http_handler_failed", {{"path", req.path}, {"error", ex.what()}});
      send_error(res, 500, "internal", ex.what());
    }
  };
}

}  // namespace

struct VerifyServer::Impl {
  VerifyStore& store;
  VerifyServerOptions options;
  Logger& logger;
  httplib::Server server;
  std::thread thread;
  int port = 0;

  Impl(VerifyStore& s, VerifyServerOptions o, Logger& l) : store(s), options(std::move(o)), logger(l) { routes(); }

  void routes() {
    server.Get("/v1/items/next", guarded(logger, [this](const httplib::Request& req, httplib::Response& res) {
      const auto annotator = req.get_param_value("annotator");
      if (annotator.empty()) throw Error(ErrorKind::kValidation, "query parameter 'annotator' is required");
      auto item = store.next_item(annotator);
      if (!item) {
        res.status = 204;
        return;
      }
      send_json(res, 200, to_json(*item));
    }));

    server.Get(R"(/v1/items/(.+))", guarded(logger, [this](const httplib::Request& req, httplib::Response& res) {
      auto item = store.get(req.matches[1].str());
      if (!item) throw Error(ErrorKind::kNotFound, "no review item '" + req.matches[1].str() + "'");
      send_json(res, 200, to_json(*item));
    }));

    server.Post("/v1/items", guarded(logger, [this](const httplib::Request& req, httplib::Response& res) {
      const auto body = json::parse(req.body);
      if (!body.contains("items") || !body.at("items").is_array()) {
        throw Error(ErrorKind::kValidation, "body needs an 'items' array");
      }
      std::vector<ReviewItem> items;
      for (const auto& j : body.at("items")) items.push_back(review_item_from_json(j));
      const auto result = store.enqueue(items);
      send_json(res, 200, {{"added", result.added}, {"skipped", result.skipped}});
    }));

    server.Post("/v1/verdicts", guarded(logger, [this](const httplib::Request& req, httplib::Response& res) {
      const auto body = json::parse(req.body);
      if (!body.is_object()) throw Error(ErrorKind::kValidation, "verdict must be an object");
      Verdict v;
      v.example_id = body.value("example_id", std::string());
      v.annotator_id = body.value("annotator_id", std::string());
      v.decision = parse_decision(body.value("decision", std::string()));
      if (body.contains("note") && body.at("note").is_string()) v.note = body.at("note").get<std::string>();
      if (v.example_id.empty()) throw Error(ErrorKind::kValidation, "example_id is required");
      send_json(res, 200, to_json(store.submit_verdict(std::move(v))));
    }));

    server.Get("/v1/export", guarded(logger, [this](const httplib::Request& req, httplib::Response& res) {
      const auto split_name = req.has_param("split") ? req.get_param_value("split") : std::string("test");
      const auto split = parse_split(split_name);
      std::optional<std::size_t> target;
      std::uint64_t seed = 0;
      if (req.has_param("target")) {
        auto v = parse_u64(req.get_param_value("target"));
        if (!v) throw Error(ErrorKind::kValidation, "target must be a non-negative integer");
        target = static_cast<std::size_t>(*v);
      }
      if (req.has_param("seed")) {
        auto v = parse_u64(req.get_param_value("seed"));
        if (!v) throw Error(ErrorKind::kValidation, "seed must be a non-negative integer");
        seed = *v;
      }
      json episodes = json::array();
      for (const auto& e : store.export_verified(split, target, seed)) episodes.push_back(to_json(e));
      send_json(res, 200, {{"split", split_name}, {"count", episodes.size()}, {"episodes", episodes}});
    }));

    server.Get(R"(/v1/media/(.+))", guarded(logger, [this](const httplib::Request& req, httplib::Response& res) {
      auto item = store.get(req.matches[1].str());
      if (!item) throw Error(ErrorKind::kNotFound, "no review item '" + req.matches[1].str() + "'");
      const std::filesystem::path path = item->episode.video_ref;
      std::error_code ec;
      const auto size = std::filesystem::file_size(path, ec);
      if (ec) throw Error(ErrorKind::kNotFound, "video for '" + item->episode.id + "' is not readable");
      auto file = std::make_shared<std::ifstream>(path, std::ios::binary);
      res.set_content_provider(
          static_cast<std::size_t>(size), media_type_for(path),
          [file](std::size_t offset, std::size_t length, httplib::DataSink& sink) {
            std::vector<char> buf(std::min<std::size_t>(length, 64 * 1024));
            file->clear();
            file->seekg(static_cast<std::streamoff>(offset));
            file->read(buf.data(), static_cast<std::streamsize>(buf.size()));
            const auto got = file->gcount();
            if (got <= 0) return false;
            return sink.write(buf.data(), static_cast<std::size_t>(got));
          });
    }));

    server.Get("/v1/stats", guarded(logger, [this](const httplib::Request&, httplib::Response& res) {
      const auto q = store.stats();
      send_json(res, 200, {{"pending", q.pending},
                           {"leased", q.leased},
                           {"accepted", q.accepted},
                           {"rejected", q.rejected},
                           {"verdicts", q.verdicts}});
    }));

    if (!options.static_dir.empty()) {
      if (!server.set_mount_point("/", options.static_dir.string())) {
        throw Error(ErrorKind::kConfig, "static directory not found: " + options.static_dir.string());
      }
    }
    server.set_logger([this](const httplib::Request& req, const httplib::Response& res) {
      logger.debug("http", {{"method", req.method}, {"path", req.path}, {"status", res.status}});
    });
  }

  void bind() {
    if (options.port == 0) {
      port = server.bind_to_any_port(options.host);
    } else {
      port = server.bind_to_port(options.host, options.port) ? options.port : -1;
    }
    if (port <= 0) {
      throw Error(ErrorKind::kIo, "cannot bind " + options.host + ":" + std::to_string(options.port));
    }
    logger.info("verify_listening", {{"host", options.host}, {"port", port}});
  }
};

VerifyServer::VerifyServer(VerifyStore& store, VerifyServerOptions options, Logger& logger)
    : impl_(std::make_unique<Impl>(store, std::move(options), logger)) {}

VerifyServer::~VerifyServer() { stop(); }

int VerifyServer::start() {
  impl_->bind();
  impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
  return impl_->port;
}

void VerifyServer::run() {
  impl_->bind();
  impl_->server.listen_after_bind();
}

void VerifyServer::stop() {
  if (!impl_) return;
  impl_->server.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

}  // namespace rewardkit
