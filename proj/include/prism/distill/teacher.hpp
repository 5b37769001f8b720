#pragma once

#include <algorithm>
#include <chrono>
#include <string>
#include <thread>
#include <variant>

#include "prism/common.hpp"

namespace prism::distill {

struct TeacherError {
  enum class Kind { transport, rejected, empty, too_long };
  Kind kind = Kind::transport;
  std::string message;
  // Transport hiccups (timeouts, 5xx, 429) are worth retrying; a teacher
  // that answered with garbage is not.
  bool retryable = false;
};

inline const char* to_string(TeacherError::Kind k) {
  switch (k) {
    case TeacherError::Kind::transport: return "transport";
    case TeacherError::Kind::rejected: return "rejected";
    case TeacherError::Kind::empty: return "empty";
    case TeacherError::Kind::too_long: return "too_long";
  }
  return "unknown";
}

struct TeacherResponse {
  std::variant<std::string, TeacherError> outcome;
  double latency_ms = 0.0;

  bool ok() const { return std::holds_alternative<std::string>(outcome); }
  const std::string& text() const { return std::get<std::string>(outcome); }
  const TeacherError& error() const { return std::get<TeacherError>(outcome); }
};

// Text-in/text-out teacher. Implementations must tolerate concurrent calls.
class Teacher {
 public:
  virtual ~Teacher() = default;
  virtual TeacherResponse complete(const std::string& prompt) const = 0;
  virtual std::string name() const = 0;
};

struct RetryPolicy {
  int max_retries = 3;
  std::chrono::milliseconds initial_backoff{100};
  double multiplier = 2.0;
  std::chrono::milliseconds max_backoff{5000};
};

// Calls the teacher, retrying retryable errors with exponential backoff.
// Latency covers every attempt.
inline TeacherResponse complete_with_retries(const Teacher& teacher, const std::string& prompt, const RetryPolicy& policy) {
  auto start = std::chrono::steady_clock::now();
  auto delay = policy.initial_backoff;
  TeacherResponse resp;
  for (int attempt = 0;; ++attempt) {
    resp = teacher.complete(prompt);
    if (resp.ok() || !resp.error().retryable || attempt >= policy.max_retries) break;
    std::this_thread::sleep_for(delay);
    auto next = std::chrono::duration<double, std::milli>(delay.count() * policy.multiplier);
    delay = std::min(policy.max_backoff, std::chrono::duration_cast<std::chrono::milliseconds>(next));
  }
  resp.latency_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  return resp;
}

}  // namespace prism::distill
