#pragma once

#include <chrono>
#include <cstdlib>
#include <string>

#include "prism/http.hpp"
#include <json.hpp>

#include "prism/distill/teacher.hpp"

namespace prism::distill {

struct HttpTeacherConfig {
  // Full endpoint, e.g. "http://localhost:8080/generate".
  std::string url;
  // Environment variable holding a bearer token; empty means no auth header.
  std::string auth_token_env;
  int timeout_ms = 30000;
  int max_tokens = 128;
  double temperature = 0.0;
};

// POSTs {prompt, max_tokens, temperature} and reads {text}.
class HttpTeacher : public Teacher {
 public:
  explicit HttpTeacher(HttpTeacherConfig config) : config_(std::move(config)) {
    auto scheme = config_.url.find("://");
    if (scheme == std::string::npos) throw InputError("teacher url needs a scheme: " + config_.url);
    auto slash = config_.url.find('/', scheme + 3);
    origin_ = config_.url.substr(0, slash);
    path_ = slash == std::string::npos ? "/" : config_.url.substr(slash);
    if (!config_.auth_token_env.empty()) {
      const char* token = std::getenv(config_.auth_token_env.c_str());
      if (!token) throw InputError("environment variable " + config_.auth_token_env + " is not set");
      token_ = token;
    }
  }

  std::string name() const override { return "http:" + config_.url; }

  TeacherResponse complete(const std::string& prompt) const override {
    TeacherResponse resp;
    auto fail = [&](TeacherError::Kind kind, std::string msg, bool retryable) {
      resp.outcome = TeacherError{kind, std::move(msg), retryable};
      return resp;
    };
    httplib::Client client(origin_);
    auto timeout = std::chrono::milliseconds(config_.timeout_ms);
    client.set_connection_timeout(timeout);
    client.set_read_timeout(timeout);
    client.set_write_timeout(timeout);
    httplib::Headers headers;
    if (!token_.empty()) headers.emplace("Authorization", "Bearer " + token_);
    nlohmann::json body = {{"prompt", prompt}, {"max_tokens", config_.max_tokens}, {"temperature", config_.temperature}};
    auto res = client.Post(path_, headers, body.dump(), "application/json");
    if (!res) return fail(TeacherError::Kind::transport, "request failed: " + httplib::to_string(res.error()), true);
    if (res->status == 429 || res->status >= 500)
      return fail(TeacherError::Kind::transport, "HTTP " + std::to_string(res->status), true);
    if (res->status != 200) return fail(TeacherError::Kind::rejected, "HTTP " + std::to_string(res->status), false);
    try {
      auto j = nlohmann::json::parse(res->body);
      if (!j.contains("text") || !j["text"].is_string())
        return fail(TeacherError::Kind::rejected, "response has no string field 'text'", false);
      resp.outcome = j["text"].get<std::string>();
    } catch (const nlohmann::json::exception& e) {
      return fail(TeacherError::Kind::rejected, std::string("unparseable response: ") + e.what(), false);
    }
    return resp;
  }

 private:
  HttpTeacherConfig config_;
  std::string origin_;
  std::string path_;
  std::string token_;
};

}  // namespace prism::distill
