// Copyright 2026 The OC-VTP Authors.
// SPDX-License-Identifier: Apache-2.0

#include "ocvtp/token_store.hpp"

#include "ocvtp/error.hpp"
#include "ocvtp/random.hpp"

#include <json.hpp>

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <numeric>
#include <fstream>
#include <set>

namespace ocvtp {

namespace {

constexpr std::array<char, 4> kMagic = {'O', 'C', 'V', 'T'};
constexpr std::uint16_t kVersion = 1;

// Little-endian primitive writer/reader over std::ostream / std::istream.
class LeWriter {
 public:
  explicit LeWriter(std::ostream& out) : out_(out) {}
  template <typename T>
  void put(T value) {
    using U = std::make_unsigned_t<T>;
    U bits;
    std::memcpy(&bits, &value, sizeof(T));
    unsigned char buf[sizeof(T)];
    for (std::size_t i = 0; i < sizeof(T); ++i) buf[i] = static_cast<unsigned char>(bits >> (8 * i));
    out_.write(reinterpret_cast<const char*>(buf), sizeof(T));
  }
  void put_f32(float f) { put(std::bit_cast<std::uint32_t>(f)); }
  void bytes(const void* data, std::size_t size) { out_.write(static_cast<const char*>(data), static_cast<std::streamsize>(size)); }

 private:
  std::ostream& out_;
};

class LeReader {
 public:
  LeReader(std::istream& in, std::string path) : in_(in), path_(std::move(path)) {}
  template <typename T>
  T get() {
    unsigned char buf[sizeof(T)];
    read(buf, sizeof(T));
    std::make_unsigned_t<T> bits = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) bits |= static_cast<std::make_unsigned_t<T>>(buf[i]) << (8 * i);
    T value;
    std::memcpy(&value, &bits, sizeof(T));
    return value;
  }
  float get_f32() { return std::bit_cast<float>(get<std::uint32_t>()); }
  void read(void* dst, std::size_t size) {
    in_.read(static_cast<char*>(dst), static_cast<std::streamsize>(size));
    if (static_cast<std::size_t>(in_.gcount()) != size) throw FormatError(path_ + ": unexpected end of file");
  }

 private:
  std::istream& in_;
  std::string path_;
};

std::filesystem::path sidecar_path(const std::filesystem::path& path) {
  auto p = path;
  p.replace_extension(".json");
  return p;
}

}  // namespace

void TokenSequence::validate() const {
  if (tokens.rows() < 1 || tokens.cols() < 1) {
    throw ValidationError("item '" + item_id + "': empty token matrix (" + std::to_string(tokens.rows()) + "x" +
                          std::to_string(tokens.cols()) + ")");
  }
  if (!tokens.allFinite()) throw ValidationError("item '" + item_id + "': non-finite token value");
  if (labels) {
    if (static_cast<Eigen::Index>(labels->size()) != tokens.rows()) {
      throw ValidationError("item '" + item_id + "': label count differs from token count");
    }
    for (auto l : *labels) {
      if (static_cast<Eigen::Index>(l) >= tokens.rows()) {
        throw ValidationError("item '" + item_id + "': label " + std::to_string(l) + " out of range");
      }
    }
  }
}

bool TokenSequence::operator==(const TokenSequence& other) const {
  return item_id == other.item_id && layer_tag == other.layer_tag && labels == other.labels &&
         tokens.rows() == other.tokens.rows() && tokens.cols() == other.tokens.cols() &&
         std::memcmp(tokens.data(), other.tokens.data(), sizeof(float) * static_cast<std::size_t>(tokens.size())) == 0;
}

Eigen::Index TokenCorpus::min_n() const {
  Eigen::Index m = 0;
  for (const auto& it : items) m = (m == 0) ? it.n() : std::min(m, it.n());
  return m;
}

Eigen::Index TokenCorpus::max_n() const {
  Eigen::Index m = 0;
  for (const auto& it : items) m = std::max(m, it.n());
  return m;
}

const TokenSequence* TokenCorpus::find(const std::string& item_id) const {
  for (const auto& it : items) {
    if (it.item_id == item_id) return &it;
  }
  return nullptr;
}

void TokenCorpus::validate() const {
  std::set<std::string> ids;
  for (const auto& it : items) {
    it.validate();
    if (it.c() != c()) throw ValidationError("item '" + it.item_id + "': channel width differs from corpus");
    if (!ids.insert(it.item_id).second) throw ValidationError("duplicate item_id '" + it.item_id + "'");
  }
}

void SynthSpec::validate() const {
  if (n_objects < 1) throw ConfigError("synth: n_objects must be >= 1");
  if (min_tokens_per_object < 1) throw ConfigError("synth: tokens_per_object min must be >= 1");
  if (min_tokens_per_object > max_tokens_per_object) throw ConfigError("synth: tokens_per_object min > max");
  if (c < 1) throw ConfigError("synth: c must be >= 1");
  if (!(center_scale > 0.0)) throw ConfigError("synth: center_scale must be > 0");
  if (!(noise_scale >= 0.0)) throw ConfigError("synth: noise_scale must be >= 0");
  if (n_items < 0) throw ConfigError("synth: n_items must be >= 0");
  if (tiny_object_tokens < 0) throw ConfigError("synth: tiny_object_tokens must be >= 0");
  if (tiny_object_tokens > 0 && n_objects < 2) throw ConfigError("synth: tiny_object_tokens needs n_objects >= 2");
  if (total_tokens < 0) throw ConfigError("synth: total_tokens must be >= 0");
  if (!(position_scale >= 0.0)) throw ConfigError("synth: position_scale must be >= 0");
  if (total_tokens > 0) {
    const int fixed = n_objects - 1 - (tiny_object_tokens > 0 ? 1 : 0);
    const int others_max = tiny_object_tokens + fixed * max_tokens_per_object;
    if (total_tokens - others_max < 1) {
      throw ConfigError("synth: total_tokens too small for the tokens_per_object range");
    }
  }
}

std::map<std::string, std::string> SynthSpec::to_meta() const {
  return {{"generator", "synthetic-clusters"},
          {"n_objects", std::to_string(n_objects)},
          {"tokens_per_object", std::to_string(min_tokens_per_object) + "," + std::to_string(max_tokens_per_object)},
          {"c", std::to_string(c)},
          {"center_scale", std::to_string(center_scale)},
          {"noise_scale", std::to_string(noise_scale)},
          {"n_items", std::to_string(n_items)},
          {"seed", std::to_string(seed)},
          {"total_tokens", std::to_string(total_tokens)},
          {"tiny_object_tokens", std::to_string(tiny_object_tokens)},
          {"position_scale", std::to_string(position_scale)}};
}

std::pair<int, int> synth_grid(int n) {
  int h = 1;
  for (int d = 1; d * d <= n; ++d) {
    if (n % d == 0) h = d;
  }
  return {h, n / h};
}

Eigen::VectorXd positional_code(int row, int col, int c) {
  // Channels cycle through (sin row, cos row, sin col, cos col) with
  // wavelengths spread geometrically from 4 to 64 cells.
  Eigen::VectorXd code(c);
  const int bands = std::max(1, c / 4);
  for (int ch = 0; ch < c; ++ch) {
    const int band = (ch / 4) % bands;
    const double wavelength = 4.0 * std::pow(16.0, bands > 1 ? static_cast<double>(band) / (bands - 1) : 0.0);
    const double w = 2.0 * 3.141592653589793 / wavelength;
    const double coord = (ch % 4) < 2 ? row : col;
    code(ch) = (ch % 2 == 0) ? std::sin(w * coord) : std::cos(w * coord);
  }
  return code;
}

TokenCorpus synth_corpus(const SynthSpec& spec) {
  spec.validate();
  TokenCorpus corpus;
  corpus.meta = spec.to_meta();
  std::normal_distribution<double> normal(0.0, 1.0);
  for (int item = 0; item < spec.n_items; ++item) {
    Rng rng(mix_seed(spec.seed, static_cast<std::uint64_t>(item)));
    std::uniform_int_distribution<int> size_dist(spec.min_tokens_per_object, spec.max_tokens_per_object);

    std::vector<int> sizes(static_cast<std::size_t>(spec.n_objects));
    for (int k = 0; k < spec.n_objects; ++k) sizes[k] = size_dist(rng);
    if (spec.tiny_object_tokens > 0) sizes[0] = spec.tiny_object_tokens;
    if (spec.total_tokens > 0) {
      int others = 0;
      for (int k = 0; k + 1 < spec.n_objects; ++k) others += sizes[k];
      sizes.back() = spec.total_tokens - others;
    }

    const Eigen::MatrixXd centers = spec.center_scale * standard_normal(spec.n_objects, spec.c, rng);
    int n = 0;
    for (int s : sizes) n += s;

    // Objects in random order along the path, each a contiguous run.
    std::vector<int> order(static_cast<std::size_t>(spec.n_objects));
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<std::uint32_t> along_path;
    along_path.reserve(static_cast<std::size_t>(n));
    for (int k : order) along_path.insert(along_path.end(), static_cast<std::size_t>(sizes[k]), static_cast<std::uint32_t>(k));

    // Boustrophedon over the grid, with a random flip of both axes.
    const auto [h, w] = synth_grid(n);
    std::bernoulli_distribution coin(0.5);
    const bool flip_rows = coin(rng), flip_cols = coin(rng);
    std::vector<std::uint32_t> labels(static_cast<std::size_t>(n));
    for (int p = 0; p < n; ++p) {
      int row = p / w, col = p % w;
      if (row % 2 == 1) col = w - 1 - col;
      if (flip_rows) row = h - 1 - row;
      if (flip_cols) col = w - 1 - col;
      labels[static_cast<std::size_t>(row * w + col)] = along_path[static_cast<std::size_t>(p)];
    }

    TokenSequence seq;
    seq.tokens.resize(n, spec.c);
    for (int j = 0; j < n; ++j) {
      const Eigen::VectorXd code = positional_code(j / w, j % w, spec.c);
      for (int ch = 0; ch < spec.c; ++ch) {
        seq.tokens(j, ch) = static_cast<float>(centers(labels[j], ch) + spec.position_scale * code(ch) +
                                               spec.noise_scale * normal(rng));
      }
    }
    seq.labels = std::move(labels);
    seq.item_id = "synth-" + std::to_string(item);
    corpus.items.push_back(std::move(seq));
  }
  return corpus;
}

void save_corpus(const TokenCorpus& corpus, const std::filesystem::path& path) {
  corpus.validate();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw StorageError("cannot open '" + path.string() + "' for writing");
  LeWriter w(out);
  w.bytes(kMagic.data(), kMagic.size());
  w.put<std::uint16_t>(kVersion);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(corpus.items.size()));
  for (const auto& it : corpus.items) {
    if (it.item_id.size() > 0xFFFF) throw ValidationError("item_id longer than 65535 bytes");
    w.put<std::uint16_t>(static_cast<std::uint16_t>(it.item_id.size()));
    w.bytes(it.item_id.data(), it.item_id.size());
    w.put<std::int16_t>(static_cast<std::int16_t>(it.layer_tag));
    w.put<std::uint32_t>(static_cast<std::uint32_t>(it.n()));
    w.put<std::uint32_t>(static_cast<std::uint32_t>(it.c()));
    w.put<std::uint8_t>(it.labels ? 1 : 0);
    for (Eigen::Index j = 0; j < it.n(); ++j) {
      for (Eigen::Index ch = 0; ch < it.c(); ++ch) w.put_f32(it.tokens(j, ch));
    }
    if (it.labels) {
      for (auto l : *it.labels) w.put<std::uint32_t>(l);
    }
  }
  out.flush();
  if (!out) throw StorageError("write failed for '" + path.string() + "'");

  std::ofstream side(sidecar_path(path), std::ios::trunc);
  if (!side) throw StorageError("cannot open '" + sidecar_path(path).string() + "' for writing");
  side << nlohmann::json(corpus.meta).dump(2) << "\n";
  if (!side) throw StorageError("write failed for '" + sidecar_path(path).string() + "'");
}

TokenCorpus load_corpus(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw StorageError("cannot open '" + path.string() + "'");
  LeReader r(in, path.string());
  std::array<char, 4> magic{};
  r.read(magic.data(), magic.size());
  if (magic != kMagic) throw FormatError(path.string() + ": not an OCVT file (bad magic)");
  const auto version = r.get<std::uint16_t>();
  if (version != kVersion) throw FormatError(path.string() + ": unsupported OCVT version " + std::to_string(version));

  TokenCorpus corpus;
  const auto count = r.get<std::uint32_t>();
  for (std::uint32_t k = 0; k < count; ++k) {
    TokenSequence seq;
    seq.item_id.resize(r.get<std::uint16_t>());
    r.read(seq.item_id.data(), seq.item_id.size());
    seq.layer_tag = r.get<std::int16_t>();
    const auto n = r.get<std::uint32_t>();
    const auto c = r.get<std::uint32_t>();
    const auto has_labels = r.get<std::uint8_t>();
    if (n == 0 || c == 0) {
      throw ValidationError("item '" + seq.item_id + "': declares n=" + std::to_string(n) + ", c=" + std::to_string(c));
    }
    seq.tokens.resize(n, c);
    for (std::uint32_t j = 0; j < n; ++j) {
      for (std::uint32_t ch = 0; ch < c; ++ch) seq.tokens(j, ch) = r.get_f32();
    }
    if (has_labels > 1) throw FormatError(path.string() + ": bad has_labels flag for '" + seq.item_id + "'");
    if (has_labels) {
      std::vector<std::uint32_t> labels(n);
      for (auto& l : labels) l = r.get<std::uint32_t>();
      seq.labels = std::move(labels);
    }
    corpus.items.push_back(std::move(seq));
  }
  corpus.validate();

  if (std::ifstream side(sidecar_path(path)); side) {
    try {
      const auto j = nlohmann::json::parse(side);
      for (const auto& [key, value] : j.items()) {
        corpus.meta[key] = value.is_string() ? value.get<std::string>() : value.dump();
      }
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(sidecar_path(path).string() + ": " + e.what());
    }
  }
  return corpus;
}

}  // namespace ocvtp
