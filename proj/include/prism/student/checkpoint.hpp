#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "prism/student/config.hpp"
#include "prism/student/model.hpp"
#include "prism/student/vocabulary.hpp"

// File layout (all integers little-endian):
//   8 bytes   magic "PRISMCKP"
//   u32       format version
//   u64       header length H
//   H bytes   JSON header: format_version, model_config, training_config
//             (or null), vocabulary (full token list, id order), users
//             (W_u rows 1..|U|), tensors [{name, rows, cols}] in visiting
//             order
//   per tensor, in the same order: u64 element count, then that many
//             IEEE-754 binary32 values, row-major
//   u64       FNV-1a 64 over every preceding byte
namespace prism::student {

inline constexpr std::uint32_t kCheckpointVersion = 1;
inline constexpr char kCheckpointMagic[8] = {'P', 'R', 'I', 'S', 'M', 'C', 'K', 'P'};

class CheckpointError : public Error {
 public:
  using Error::Error;
};

namespace detail {

inline void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

inline std::uint64_t get_le(const std::string& in, std::size_t pos, int bytes) {
  std::uint64_t v = 0;
  for (int i = 0; i < bytes; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[pos + static_cast<std::size_t>(i)])) << (8 * i);
  return v;
}

}  // namespace detail

template <typename T>
std::string serialize_checkpoint(const Model<T>& model, const Vocabulary& vocab, const TrainingConfig* training = nullptr) {
  const auto& cfg = model.config();
  if (vocab.size() != cfg.vocab_size)
    throw InputError("vocabulary has " + std::to_string(vocab.size()) + " tokens but the model expects " + std::to_string(cfg.vocab_size));
  nlohmann::json header;
  header["format_version"] = kCheckpointVersion;
  header["model_config"] = cfg;
  header["training_config"] = training ? nlohmann::json(*training) : nlohmann::json(nullptr);
  header["vocabulary"] = vocab.tokens();
  header["users"] = model.users();
  auto& list = header["tensors"] = nlohmann::json::array();
  model.params().for_each([&](const std::string& name, const Param<T>& p) {
    list.push_back({{"name", name}, {"rows", p.value.rows()}, {"cols", p.value.cols()}});
  });
  std::string h = header.dump();

  std::string out(kCheckpointMagic, sizeof kCheckpointMagic);
  detail::put_u32(out, kCheckpointVersion);
  detail::put_u64(out, h.size());
  out += h;
  model.params().for_each([&](const std::string&, const Param<T>& p) {
    detail::put_u64(out, p.value.size());
    for (T x : p.value.storage()) detail::put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(x)));
  });
  detail::put_u64(out, fnv1a64(out));
  return out;
}

// Written to a sibling temp file first, then renamed into place.
template <typename T>
void save_checkpoint(const Model<T>& model, const Vocabulary& vocab, const std::filesystem::path& path,
                     const TrainingConfig* training = nullptr) {
  auto bytes = serialize_checkpoint(model, vocab, training);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write checkpoint '" + tmp.string() + "'");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error("failed writing checkpoint '" + tmp.string() + "'");
  }
  std::filesystem::rename(tmp, path);
}

template <typename T>
struct LoadedCheckpoint {
  Model<T> model;
  Vocabulary vocabulary;
  std::optional<TrainingConfig> training;
};

// Lists every field where `found` differs from `expected`.
inline std::string config_mismatch(const ModelConfig& expected, const ModelConfig& found) {
  nlohmann::json e = expected, f = found;
  std::string diff;
  for (auto& [key, value] : e.items()) {
    if (f[key] != value) {
      if (!diff.empty()) diff += ", ";
      diff += key + " expected " + value.dump() + " found " + f[key].dump();
    }
  }
  return diff;
}

template <typename T = float>
LoadedCheckpoint<T> parse_checkpoint(const std::string& bytes, const std::string& source,
                                     const ModelConfig* expected = nullptr) {
  auto fail = [&](const std::string& what) { return CheckpointError("checkpoint '" + source + "': " + what); };
  constexpr std::size_t kPrefix = sizeof kCheckpointMagic + 4 + 8;
  if (bytes.size() < kPrefix + 8) throw fail("truncated (" + std::to_string(bytes.size()) + " bytes)");
  if (std::memcmp(bytes.data(), kCheckpointMagic, sizeof kCheckpointMagic) != 0) throw fail("bad magic, not a checkpoint file");
  auto version = static_cast<std::uint32_t>(detail::get_le(bytes, 8, 4));
  if (version != kCheckpointVersion)
    throw fail("unsupported format version " + std::to_string(version) + " (expected " + std::to_string(kCheckpointVersion) + ")");
  const std::size_t body = bytes.size() - 8;
  if (detail::get_le(bytes, body, 8) != fnv1a64(std::string_view(bytes.data(), body)))
    throw fail("checksum mismatch, file is corrupt or truncated");

  const auto hlen = detail::get_le(bytes, 12, 8);
  if (hlen > body - kPrefix) throw fail("truncated header");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.substr(kPrefix, hlen));
  } catch (const nlohmann::json::exception& e) {
    throw fail(std::string("malformed header: ") + e.what());
  }

  LoadedCheckpoint<T> out;
  ModelConfig cfg;
  std::vector<std::string> users;
  try {
    cfg = header.at("model_config").get<ModelConfig>();
    out.vocabulary = Vocabulary::from_full_list(header.at("vocabulary").get<std::vector<std::string>>());
    users = header.at("users").get<std::vector<std::string>>();
    if (header.contains("training_config") && !header["training_config"].is_null())
      out.training = header["training_config"].get<TrainingConfig>();
  } catch (const nlohmann::json::exception& e) {
    throw fail(std::string("malformed header: ") + e.what());
  }
  if (expected) {
    auto diff = config_mismatch(*expected, cfg);
    if (!diff.empty()) throw fail("dimension mismatch: " + diff);
  }
  if (users.size() != cfg.num_users) throw fail("header lists " + std::to_string(users.size()) + " users but num_users is " + std::to_string(cfg.num_users));
  if (out.vocabulary.size() != cfg.vocab_size)
    throw fail("vocabulary has " + std::to_string(out.vocabulary.size()) + " tokens but vocab_size is " + std::to_string(cfg.vocab_size));
  try {
    cfg.validate();
  } catch (const InputError& e) {
    throw fail(e.what());
  }

  auto params = allocate_params<T>(cfg);
  const auto& list = header.at("tensors");
  std::size_t index = 0, pos = kPrefix + hlen;
  params.for_each([&](const std::string& name, Param<T>& p) {
    if (index >= list.size()) throw fail("header lists fewer tensors than the config implies");
    const auto& d = list[index++];
    if (d.value("name", "") != name || d.value("rows", std::size_t{0}) != p.value.rows() || d.value("cols", std::size_t{0}) != p.value.cols())
      throw fail("tensor " + std::to_string(index - 1) + " is " + d.dump() + ", expected " + name + " " + std::to_string(p.value.rows()) + "x" +
                 std::to_string(p.value.cols()));
    if (pos + 8 > body) throw fail("truncated before tensor '" + name + "'");
    auto count = detail::get_le(bytes, pos, 8);
    pos += 8;
    if (count != p.value.size()) throw fail("tensor '" + name + "' has " + std::to_string(count) + " elements, expected " + std::to_string(p.value.size()));
    if (pos + 4 * count > body) throw fail("truncated inside tensor '" + name + "'");
    for (std::size_t i = 0; i < count; ++i, pos += 4)
      p.value.data()[i] = static_cast<T>(std::bit_cast<float>(static_cast<std::uint32_t>(detail::get_le(bytes, pos, 4))));
  });
  if (index != list.size()) throw fail("header lists more tensors than the config implies");
  if (pos != body) throw fail("unexpected trailing bytes before checksum");
  out.model = Model<T>(cfg, std::move(users), std::move(params));
  if (!out.model.all_finite()) throw fail("non-finite parameter values");
  return out;
}

template <typename T = float>
LoadedCheckpoint<T> load_checkpoint(const std::filesystem::path& path, const ModelConfig* expected = nullptr) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_checkpoint<T>(ss.str(), path.string(), expected);
}

}  // namespace prism::student
