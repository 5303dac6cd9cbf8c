#pragma once

// HTTP+JSON front end of the review queue (cpp-httplib).

#include <memory>
#include <sstream>
#include <string>

#include "httplib.h"
#include "json.hpp"

#include "notetag/review_service.hpp"

namespace notetag {

namespace detail {

inline void send_json(httplib::Response& res, int status, const nlohmann::json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

inline void send_error(httplib::Response& res, int status, const std::string& message,
                       nlohmann::json extra = nlohmann::json::object()) {
  extra["error"] = message;
  send_json(res, status, extra);
}

/// Maps library errors onto status codes; anything else is a 500.
template <typename Fn>
void guarded(httplib::Response& res, Fn&& fn) {
  try {
    fn();
  } catch (const InvalidCodesError& e) {
    send_error(res, 400, e.what(), {{"invalid_codes", e.codes()}});
  } catch (const NotFoundError& e) {
    send_error(res, 404, e.what());
  } catch (const ConflictError& e) {
    send_error(res, 409, e.what());
  } catch (const Error& e) {
    send_error(res, 400, e.what());
  } catch (const nlohmann::json::exception& e) {
    send_error(res, 400, std::string("bad request body: ") + e.what());
  } catch (const std::exception& e) {
    send_error(res, 500, e.what());
  }
}

inline std::size_t query_size(const httplib::Request& req, const char* key, std::size_t fallback) {
  if (!req.has_param(key)) return fallback;
  const std::string v = req.get_param_value(key);
  std::size_t pos = 0;
  long long n = -1;
  try {
    n = std::stoll(v, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos != v.size() || n < 0) throw ValidationError(std::string("query parameter '") + key + "' must be a non-negative integer");
  return static_cast<std::size_t>(n);
}

}  // namespace detail

inline constexpr std::size_t kDefaultPageSize = 50;

/// Registers every route on `server`. The queue must outlive the server.
inline void install_review_routes(httplib::Server& server, ReviewQueue& queue) {
  server.Get("/api/queue", [&queue](const httplib::Request& req, httplib::Response& res) {
    detail::guarded(res, [&] {
      const std::size_t limit = detail::query_size(req, "limit", kDefaultPageSize);
      const std::size_t offset = detail::query_size(req, "offset", 0);
      nlohmann::json items = nlohmann::json::array();
      for (const auto& item : queue.list_pending(limit, offset)) {
        items.push_back(review_item_to_json(item, queue.taxonomy().labels));
      }
      detail::send_json(res, 200,
                        {{"items", items}, {"total", queue.pending_count()}, {"limit", limit}, {"offset", offset}});
    });
  });

  server.Get(R"(/api/documents/([^/]+))", [&queue](const httplib::Request& req, httplib::Response& res) {
    detail::guarded(res, [&] {
      detail::send_json(res, 200, review_item_to_json(queue.get(req.matches[1]), queue.taxonomy().labels));
    });
  });

  server.Post(R"(/api/documents/([^/]+)/adjudication)",
              [&queue](const httplib::Request& req, httplib::Response& res) {
                detail::guarded(res, [&] {
                  const auto body = nlohmann::json::parse(req.body);
                  const auto codes = body.at("codes").get<std::vector<std::string>>();
                  const auto coder = body.at("coder").get<std::string>();
                  const ReviewItem item = queue.submit_adjudication(req.matches[1], codes, coder);
                  detail::send_json(res, 201, review_item_to_json(item, queue.taxonomy().labels));
                });
              });

  server.Post("/api/enqueue", [&queue](const httplib::Request& req, httplib::Response& res) {
    detail::guarded(res, [&] {
      const auto body = nlohmann::json::parse(req.body);
      const auto path = body.at("predictions_path").get<std::string>();
      const auto fraction = body.at("fraction").get<double>();
      const std::size_t n = queue.enqueue_abstained(path, fraction);
      detail::send_json(res, 200, {{"enqueued", n}, {"pending", queue.pending_count()}});
    });
  });

  server.Get("/api/export", [&queue](const httplib::Request&, httplib::Response& res) {
    detail::guarded(res, [&] {
      std::ostringstream out;
      queue.export_adjudicated(out);
      res.status = 200;
      res.set_content(out.str(), "application/x-ndjson");
    });
  });

  server.Get("/api/taxonomy", [&queue](const httplib::Request&, httplib::Response& res) {
    detail::guarded(res, [&] { detail::send_json(res, 200, taxonomy_to_json(queue.taxonomy())); });
  });
}

}  // namespace notetag
