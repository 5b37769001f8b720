#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>

#include "prism/http.hpp"
#include <json.hpp>

#include "prism/humaneval/session.hpp"
#include "prism/humaneval/summary.hpp"

namespace prism::humaneval {

// HTTP front for annotation sessions. Every route takes one mutex, so
// mutations are serialised and reads see a consistent snapshot.
//
//   POST /api/sessions                                   config JSON -> {session_id}
//   GET  /api/sessions/{id}/annotators/{aid}/next        next item, slots only
//   POST /api/sessions/{id}/annotators/{aid}/ratings     {item_index, slot, persuasiveness,
//                                                         personalization, faithfulness}
//   GET  /api/sessions/{id}/results                      summary (reveals systems)
class AnnotationService {
 public:
  explicit AnnotationService(std::filesystem::path base_dir = {}) : base_dir_(std::move(base_dir)) {}

  // Builds the session, replays its ratings log and registers it. An id
  // that is already registered is returned unchanged.
  std::string add_session(SessionConfig cfg) {
    std::lock_guard lock(mu_);
    if (sessions_.count(cfg.session_id)) return cfg.session_id;
    auto s = std::make_unique<Session>(std::move(cfg));
    s->replay_log();
    auto id = s->id();
    sessions_[id] = std::move(s);
    return id;
  }

  nlohmann::json results(const std::string& id) {
    std::lock_guard lock(mu_);
    auto& s = find(id);
    auto j = summarize(s);
    j["assignments"] = s.assignment_record();
    return j;
  }

  void mount(httplib::Server& srv, const std::optional<std::filesystem::path>& static_dir = std::nullopt) {
    srv.Post("/api/sessions", [this](const httplib::Request& req, httplib::Response& res) {
      handle(res, [&] {
        auto j = parse_body(req.body);
        auto id = add_session(session_config_from_json(j, base_dir_));
        return nlohmann::json{{"session_id", id}};
      });
    });
    srv.Get("/api/sessions/:id/annotators/:aid/next", [this](const httplib::Request& req, httplib::Response& res) {
      handle(res, [&] {
        std::lock_guard lock(mu_);
        auto& s = find(req.path_params.at("id"));
        return s.next(annotator(s, req.path_params.at("aid")));
      });
    });
    srv.Post("/api/sessions/:id/annotators/:aid/ratings", [this](const httplib::Request& req, httplib::Response& res) {
      handle(res, [&] {
        auto j = parse_body(req.body);
        std::lock_guard lock(mu_);
        auto& s = find(req.path_params.at("id"));
        const auto& aid = annotator(s, req.path_params.at("aid"));
        std::size_t item;
        std::string slot;
        int p, z, f;
        try {
          item = j.at("item_index").get<std::size_t>();
          slot = j.at("slot").get<std::string>();
          p = j.at("persuasiveness").get<int>();
          z = j.at("personalization").get<int>();
          f = j.at("faithfulness").get<int>();
        } catch (const nlohmann::json::exception& e) {
          throw InputError(std::string("bad rating body: ") + e.what());
        }
        s.rate(aid, item, slot, p, z, f);
        return nlohmann::json{{"ok", true}, {"item_index", item}, {"slot", slot},
                              {"progress", {{"done", s.completed(aid)}, {"total", s.items().size()}}}};
      });
    });
    srv.Get("/api/sessions/:id/results", [this](const httplib::Request& req, httplib::Response& res) {
      handle(res, [&] { return results(req.path_params.at("id")); });
    });
    if (static_dir) srv.set_mount_point("/", static_dir->string());
  }

 private:
  struct NotFound : Error {
    using Error::Error;
  };

  Session& find(const std::string& id) {
    auto it = sessions_.find(id);
    if (it == sessions_.end()) throw NotFound("unknown session '" + id + "'");
    return *it->second;
  }

  static const std::string& annotator(const Session& s, const std::string& aid) {
    if (!s.has_annotator(aid)) throw NotFound("unknown annotator '" + aid + "'");
    return aid;
  }

  static nlohmann::json parse_body(const std::string& body) {
    try {
      return nlohmann::json::parse(body);
    } catch (const nlohmann::json::exception& e) {
      throw InputError(std::string("request body is not JSON: ") + e.what());
    }
  }

  template <typename F>
  static void handle(httplib::Response& res, F&& f) {
    try {
      res.set_content(f().dump(), "application/json");
    } catch (const NotFound& e) {
      res.status = 404;
      res.set_content(nlohmann::json{{"error", e.what()}}.dump(), "application/json");
    } catch (const InputError& e) {
      res.status = 400;
      res.set_content(nlohmann::json{{"error", e.what()}}.dump(), "application/json");
    } catch (const std::exception& e) {
      res.status = 500;
      res.set_content(nlohmann::json{{"error", e.what()}}.dump(), "application/json");
    }
  }

  std::filesystem::path base_dir_;
  std::mutex mu_;
  std::map<std::string, std::unique_ptr<Session>> sessions_;
};

}  // namespace prism::humaneval
