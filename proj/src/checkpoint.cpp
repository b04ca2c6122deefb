// Copyright 2026 The OC-VTP Authors.
// SPDX-License-Identifier: Apache-2.0

// OCVC container: "OCVC" | u16 version | u32 header length | JSON header |
// payloads. The header lists every array as {name, shape, dtype, offset,
// nbytes}; offsets are relative to the end of the header. Parameters are
// stored as f64 little-endian, row-major.

#include "ocvtp/error.hpp"
#include "ocvtp/trainer.hpp"

#include <json.hpp>

#include <array>
#include <bit>
#include <fstream>
#include <map>
#include <sstream>

namespace ocvtp {

namespace {

using nlohmann::json;

constexpr std::array<char, 4> kMagic = {'O', 'C', 'V', 'C'};
constexpr std::uint16_t kVersion = 1;

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint64_t get_u64(const std::string& in, std::size_t at) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[at + i])) << (8 * i);
  return v;
}

void append_matrix(std::string& payload, const Mat& m) {
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) put_u64(payload, std::bit_cast<std::uint64_t>(m(i, j)));
  }
}

json config_json(const TrainConfig& c) {
  return json{{"budget_set", c.budget_set},
              {"steps", c.steps},
              {"batch_size", c.batch_size},
              {"learning_rate", c.learning_rate},
              {"seed", c.seed},
              {"loss_kind", std::string(to_string(c.loss_kind))},
              {"optimizer", c.optimizer == OptimizerKind::kAdam ? "adam" : "sgd"},
              {"grad_clip", c.grad_clip},
              {"slot_iterations", c.slot_iterations},
              {"slot_width", c.slot_width},
              {"slot_hidden", c.slot_hidden},
              {"decoder",
               {{"c", c.decoder.c},
                {"width", c.decoder.width},
                {"heads", c.decoder.heads},
                {"ffn", c.decoder.ffn},
                {"layers", c.decoder.layers},
                {"n_max", c.decoder.n_max}}},
              {"eval_every", c.eval_every},
              {"bucketing", c.bucketing}};
}

TrainConfig config_from(const json& j) {
  TrainConfig c;
  c.budget_set = j.at("budget_set").get<std::vector<int>>();
  c.steps = j.at("steps").get<int>();
  c.batch_size = j.at("batch_size").get<int>();
  c.learning_rate = j.at("learning_rate").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.loss_kind = parse_loss_kind(j.at("loss_kind").get<std::string>());
  const auto opt = j.at("optimizer").get<std::string>();
  if (opt != "adam" && opt != "sgd") throw FormatError("checkpoint: unknown optimizer '" + opt + "'");
  c.optimizer = opt == "adam" ? OptimizerKind::kAdam : OptimizerKind::kSgd;
  c.grad_clip = j.at("grad_clip").get<double>();
  c.slot_iterations = j.at("slot_iterations").get<int>();
  c.slot_width = j.at("slot_width").get<Eigen::Index>();
  c.slot_hidden = j.at("slot_hidden").get<Eigen::Index>();
  const json& d = j.at("decoder");
  c.decoder.c = d.at("c").get<Eigen::Index>();
  c.decoder.width = d.at("width").get<Eigen::Index>();
  c.decoder.heads = d.at("heads").get<Eigen::Index>();
  c.decoder.ffn = d.at("ffn").get<Eigen::Index>();
  c.decoder.layers = d.at("layers").get<int>();
  c.decoder.n_max = d.at("n_max").get<Eigen::Index>();
  c.eval_every = j.at("eval_every").get<int>();
  c.bucketing = j.at("bucketing").get<std::string>();
  return c;
}

}  // namespace

std::string config_to_json(const TrainConfig& config) { return config_json(config).dump(); }

TrainConfig config_from_json(const std::string& text) {
  try {
    return config_from(json::parse(text));
  } catch (const json::exception& e) {
    throw FormatError(std::string("train config: ") + e.what());
  }
}

void save_checkpoint(const CheckpointBundle& bundle, const std::filesystem::path& path) {
  std::string payload;
  json arrays = json::array();
  auto add = [&](const std::string& name, const Mat& m) {
    const std::size_t offset = payload.size();
    append_matrix(payload, m);
    arrays.push_back({{"name", name},
                      {"shape", {m.rows(), m.cols()}},
                      {"dtype", "f64"},
                      {"offset", offset},
                      {"nbytes", payload.size() - offset}});
  };
  bundle.visit(add);
  add("history.loss", Eigen::Map<const Mat>(bundle.loss_history.data(), 1,
                                            static_cast<Eigen::Index>(bundle.loss_history.size())));
  Mat budgets(1, static_cast<Eigen::Index>(bundle.budget_history.size()));
  for (std::size_t i = 0; i < bundle.budget_history.size(); ++i) budgets(0, static_cast<Eigen::Index>(i)) = bundle.budget_history[i];
  add("history.budget", budgets);

  const json header{{"format", "OCVC"},
                    {"config", config_json(bundle.config)},
                    {"step", bundle.step},
                    {"arrays", arrays}};
  const std::string head = header.dump();

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw StorageError("cannot open '" + path.string() + "' for writing");
  out.write(kMagic.data(), kMagic.size());
  const unsigned char ver[2] = {static_cast<unsigned char>(kVersion & 0xff), static_cast<unsigned char>(kVersion >> 8)};
  out.write(reinterpret_cast<const char*>(ver), 2);
  const auto len = static_cast<std::uint32_t>(head.size());
  const unsigned char lenb[4] = {static_cast<unsigned char>(len), static_cast<unsigned char>(len >> 8),
                                 static_cast<unsigned char>(len >> 16), static_cast<unsigned char>(len >> 24)};
  out.write(reinterpret_cast<const char*>(lenb), 4);
  out.write(head.data(), static_cast<std::streamsize>(head.size()));
  out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
  out.flush();
  if (!out) throw StorageError("write failed for '" + path.string() + "'");
}

CheckpointBundle load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw StorageError("cannot open '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  const std::string bytes = ss.str();
  const std::string where = path.string() + ": ";

  if (bytes.size() < 10 || bytes.compare(0, 4, kMagic.data(), 4) != 0) throw FormatError(where + "not an OCVC checkpoint");
  const std::uint16_t version =
      static_cast<std::uint16_t>(static_cast<unsigned char>(bytes[4]) | (static_cast<unsigned char>(bytes[5]) << 8));
  if (version != kVersion) throw FormatError(where + "unsupported checkpoint version " + std::to_string(version));
  std::uint32_t len = 0;
  for (int i = 0; i < 4; ++i) len |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[6 + i])) << (8 * i);
  if (bytes.size() < 10 + static_cast<std::size_t>(len)) throw FormatError(where + "truncated header");
  const std::size_t base = 10 + len;

  json header;
  try {
    header = json::parse(bytes.substr(10, len));
  } catch (const json::exception& e) {
    throw FormatError(where + "bad header: " + e.what());
  }

  CheckpointBundle b;
  std::map<std::string, Mat> arrays;
  try {
    b.config = config_from(header.at("config"));
    b.step = header.at("step").get<int>();
    for (const auto& a : header.at("arrays")) {
      const auto name = a.at("name").get<std::string>();
      if (a.at("dtype").get<std::string>() != "f64") throw FormatError(where + name + ": unsupported dtype");
      const auto rows = a.at("shape").at(0).get<Eigen::Index>();
      const auto cols = a.at("shape").at(1).get<Eigen::Index>();
      const auto offset = a.at("offset").get<std::size_t>();
      const auto nbytes = a.at("nbytes").get<std::size_t>();
      if (nbytes != static_cast<std::size_t>(rows * cols) * 8) throw FormatError(where + name + ": size mismatch");
      if (base + offset + nbytes > bytes.size()) throw FormatError(where + "truncated payload at '" + name + "'");
      Mat m(rows, cols);
      std::size_t at = base + offset;
      for (Eigen::Index i = 0; i < rows; ++i) {
        for (Eigen::Index j = 0; j < cols; ++j, at += 8) m(i, j) = std::bit_cast<double>(get_u64(bytes, at));
      }
      arrays.emplace(name, std::move(m));
    }
  } catch (const json::exception& e) {
    throw FormatError(where + "bad header: " + e.what());
  }

  // Shapes come from the stored config; each array must match its slot.
  const TrainConfig config = b.config;
  const int step = b.step;
  try {
    b = CheckpointBundle::init(config, config.decoder.c);
  } catch (const Error& e) {
    throw FormatError(where + "inconsistent config: " + e.what());
  }
  b.step = step;
  b.visit([&](const std::string& name, Mat& m) {
    auto it = arrays.find(name);
    if (it == arrays.end()) throw FormatError(where + "missing array '" + name + "'");
    if (it->second.rows() != m.rows() || it->second.cols() != m.cols()) {
      throw FormatError(where + "array '" + name + "' has the wrong shape");
    }
    m = it->second;
  });
  if (auto it = arrays.find("history.loss"); it != arrays.end()) {
    b.loss_history.assign(it->second.data(), it->second.data() + it->second.size());
  }
  if (auto it = arrays.find("history.budget"); it != arrays.end()) {
    for (Eigen::Index i = 0; i < it->second.size(); ++i) b.budget_history.push_back(static_cast<int>(it->second(0, i)));
  }
  return b;
}

}  // namespace ocvtp
