#pragma once

#include <chrono>
#include <cmath>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "prism/http.hpp"
#include <json.hpp>

#include "prism/common.hpp"
#include "prism/text.hpp"

namespace prism::metrics {

// Raised by providers and evaluators; the corpus runner turns it into an
// exclusion for that pair instead of aborting.
class ProviderError : public Error {
 public:
  using Error::Error;
};

using Vector = std::vector<double>;

class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;
  // One vector per input token.
  virtual std::vector<Vector> embed(const std::vector<std::string>& tokens) const = 0;
  virtual std::string name() const = 0;
};

// Deterministic static embeddings: each token's vector is drawn from a
// generator seeded by hash(seed, token). Identical tokens match exactly,
// distinct tokens are nearly orthogonal in high dimension.
class HashedEmbeddingProvider : public EmbeddingProvider {
 public:
  explicit HashedEmbeddingProvider(std::uint64_t seed = 0, std::size_t dim = 128) : seed_(seed), dim_(dim) {
    if (dim_ == 0) throw InputError("embedding dimension must be >= 1");
  }

  std::vector<Vector> embed(const std::vector<std::string>& tokens) const override {
    std::vector<Vector> out;
    out.reserve(tokens.size());
    for (const auto& t : tokens) {
      std::uint64_t state = mix_seed(seed_, t);
      Vector v(dim_);
      for (auto& x : v) {
        // Box-Muller over two splitmix draws
        state = splitmix64(state);
        double u1 = unit_interval(state);
        state = splitmix64(state);
        double u2 = unit_interval(state);
        x = std::sqrt(-2.0 * std::log(u1 + 1e-300)) * std::cos(2.0 * 3.141592653589793 * u2);
      }
      out.push_back(std::move(v));
    }
    return out;
  }

  std::string name() const override { return "hashed-static(seed=" + std::to_string(seed_) + ",dim=" + std::to_string(dim_) + ")"; }

 private:
  std::uint64_t seed_;
  std::size_t dim_;
};

// Fixed token -> vector table; unknown tokens are an error.
class TableEmbeddingProvider : public EmbeddingProvider {
 public:
  explicit TableEmbeddingProvider(std::map<std::string, Vector> table) : table_(std::move(table)) {}

  std::vector<Vector> embed(const std::vector<std::string>& tokens) const override {
    std::vector<Vector> out;
    for (const auto& t : tokens) {
      auto it = table_.find(t);
      if (it == table_.end()) throw ProviderError("no embedding for token '" + t + "'");
      out.push_back(it->second);
    }
    return out;
  }

  std::string name() const override { return "table"; }

 private:
  std::map<std::string, Vector> table_;
};

// External embedding service: POST {"tokens": [...]} -> {"vectors": [[...], ...]}.
class HttpEmbeddingProvider : public EmbeddingProvider {
 public:
  explicit HttpEmbeddingProvider(std::string url, int timeout_ms = 30000) : url_(std::move(url)), timeout_ms_(timeout_ms) {
    auto scheme = url_.find("://");
    auto path_at = url_.find('/', scheme == std::string::npos ? 0 : scheme + 3);
    base_ = path_at == std::string::npos ? url_ : url_.substr(0, path_at);
    path_ = path_at == std::string::npos ? "/" : url_.substr(path_at);
  }

  std::vector<Vector> embed(const std::vector<std::string>& tokens) const override {
    httplib::Client cli(base_);
    cli.set_connection_timeout(std::chrono::milliseconds(timeout_ms_));
    cli.set_read_timeout(std::chrono::milliseconds(timeout_ms_));
    auto res = cli.Post(path_, nlohmann::json{{"tokens", tokens}}.dump(), "application/json");
    if (!res) throw ProviderError("embedding service unreachable: " + httplib::to_string(res.error()));
    if (res->status != 200) throw ProviderError("embedding service returned HTTP " + std::to_string(res->status));
    try {
      auto vectors = nlohmann::json::parse(res->body).at("vectors").get<std::vector<Vector>>();
      if (vectors.size() != tokens.size()) throw ProviderError("embedding service returned " + std::to_string(vectors.size()) + " vectors for " + std::to_string(tokens.size()) + " tokens");
      return vectors;
    } catch (const nlohmann::json::exception& e) {
      throw ProviderError(std::string("malformed embedding response: ") + e.what());
    }
  }

  std::string name() const override { return "http(" + url_ + ")"; }

 private:
  std::string url_, base_, path_;
  int timeout_ms_;
};

inline double cosine(const Vector& a, const Vector& b) {
  if (a.size() != b.size()) throw ProviderError("embedding dimensions differ");
  double dot = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0 || nb == 0) return 0.0;
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

struct BertScore {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

// Greedy matching over cosine similarities, no IDF weighting. Either side
// empty gives zeros; F1 is 0 when P + R <= 0.
inline BertScore bertscore_tokens(const std::vector<std::string>& pred, const std::vector<std::string>& ref,
                                  const EmbeddingProvider& provider) {
  BertScore s;
  if (pred.empty() || ref.empty()) return s;
  auto ep = provider.embed(pred);
  auto er = provider.embed(ref);
  if (ep.size() != pred.size() || er.size() != ref.size()) throw ProviderError("provider returned the wrong number of vectors");
  for (const auto* side : {&ep, &er})
    for (const auto& v : *side)
      for (double x : v)
        if (!std::isfinite(x)) throw ProviderError("provider returned a non-finite vector");
  std::vector<double> best_p(ep.size(), -2.0), best_r(er.size(), -2.0);
  for (std::size_t i = 0; i < ep.size(); ++i)
    for (std::size_t j = 0; j < er.size(); ++j) {
      double c = cosine(ep[i], er[j]);
      best_p[i] = std::max(best_p[i], c);
      best_r[j] = std::max(best_r[j], c);
    }
  for (double x : best_p) s.precision += x;
  for (double x : best_r) s.recall += x;
  s.precision /= static_cast<double>(best_p.size());
  s.recall /= static_cast<double>(best_r.size());
  s.f1 = s.precision + s.recall > 0 ? 2 * s.precision * s.recall / (s.precision + s.recall) : 0.0;
  return s;
}

inline BertScore bertscore(std::string_view prediction, std::string_view reference, const EmbeddingProvider& provider) {
  return bertscore_tokens(text::overlap_tokens(prediction), text::overlap_tokens(reference), provider);
}

inline double bertscore_f1(std::string_view prediction, std::string_view reference, const EmbeddingProvider& provider) {
  return bertscore(prediction, reference, provider).f1;
}

}  // namespace prism::metrics
