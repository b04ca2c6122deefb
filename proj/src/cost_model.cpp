// Copyright 2026 The OC-VTP Authors.
// SPDX-License-Identifier: Apache-2.0

#include "ocvtp/cost_model.hpp"

#include "ocvtp/error.hpp"

#include <json.hpp>

#include <cstdio>
#include <fstream>

namespace ocvtp {

void SlotArch::validate() const {
  if (c < 1 || d < 1 || hidden < 1 || iterations < 1) throw ConfigError("pruner arch: sizes must be positive");
}

void ArchSpec::validate() const {
  if (layers < 1 || hidden < 1 || ffn < 1) throw ConfigError("arch '" + name + "': layers/hidden/ffn must be positive");
  if (mac_factor != 1 && mac_factor != 2) throw ConfigError("arch '" + name + "': mac_factor must be 1 or 2");
  pruner.validate();
}

CostReport prefill_flops(const ArchSpec& arch, std::int64_t n_vision, std::int64_t n_text) {
  arch.validate();
  if (n_vision < 0 || n_text < 0) throw ConfigError("prefill_flops: token counts must be >= 0");
  const double n = static_cast<double>(n_vision + n_text);
  const double d = static_cast<double>(arch.hidden);
  const double m = static_cast<double>(arch.ffn);
  const double scale = static_cast<double>(arch.mac_factor) * static_cast<double>(arch.layers);
  CostReport r;
  r.n_vision = n_vision;
  r.n_text = n_text;
  r.attention_proj = scale * 4.0 * n * d * d;
  r.attention_quadratic = scale * 2.0 * n * n * d;
  r.ffn = scale * 2.0 * n * d * m;
  r.total = r.attention_proj + r.attention_quadratic + r.ffn;
  return r;
}

CostReport pruner_flops(const SlotArch& slot, std::int64_t n, std::int64_t s, int mac_factor) {
  slot.validate();
  if (n < 0 || s < 0) throw ConfigError("pruner_flops: token counts must be >= 0");
  if (mac_factor != 1 && mac_factor != 2) throw ConfigError("pruner_flops: mac_factor must be 1 or 2");
  CostReport r;
  r.n_vision = n;
  if (s == 0) return r;

  const double N = static_cast<double>(n), S = static_cast<double>(s);
  const double c = static_cast<double>(slot.c), d = static_cast<double>(slot.d), h = static_cast<double>(slot.hidden);
  const double T = static_cast<double>(slot.iterations);
  const double mac = static_cast<double>(mac_factor);

  const double key_value = 2.0 * N * c * d;
  const double query = S * c * d;
  const double gru = S * 3.0 * c * (d + c);
  const double logits_and_readout = 2.0 * S * N * d;
  const double mlp = 2.0 * S * c * h;
  const double selection = S * N;  // one comparison per attention entry

  r.attention_proj = mac * (key_value + T * (query + gru));
  r.attention_quadratic = mac * T * logits_and_readout + selection;
  r.ffn = mac * T * mlp;
  r.total = r.attention_proj + r.attention_quadratic + r.ffn;
  return r;
}

std::map<std::string, ArchSpec> builtin_archs() {
  std::map<std::string, ArchSpec> out;
  // LLaVA-1.5 and LLaVA-NeXT share the Vicuna-7B language model and a
  // CLIP ViT-L/14 encoder (width 1024).
  out["llava-1.5"] = ArchSpec{"llava-1.5", 32, 4096, 11008, 2, SlotArch{}};
  out["llava-next"] = ArchSpec{"llava-next", 32, 4096, 11008, 2, SlotArch{}};
  // Qwen2.5-7B language model with a width-1280 ViT.
  out["qwen2.5-vl"] = ArchSpec{"qwen2.5-vl", 28, 3584, 18944, 2, SlotArch{1280, 1280, 1280, 3}};
  return out;
}

std::map<std::string, ArchSpec> load_archs(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw StorageError("cannot open arch file '" + path.string() + "'");
  std::map<std::string, ArchSpec> out;
  try {
    const auto j = nlohmann::json::parse(in);
    for (const auto& [name, spec] : j.items()) {
      ArchSpec a;
      a.name = name;
      a.layers = spec.at("layers").get<std::int64_t>();
      a.hidden = spec.at("hidden").get<std::int64_t>();
      a.ffn = spec.at("ffn").get<std::int64_t>();
      a.mac_factor = spec.value("mac_factor", 2);
      if (spec.contains("pruner")) {
        const auto& p = spec.at("pruner");
        a.pruner.c = p.value("c", a.pruner.c);
        a.pruner.d = p.value("d", a.pruner.d);
        a.pruner.hidden = p.value("hidden", a.pruner.hidden);
        a.pruner.iterations = p.value("iterations", a.pruner.iterations);
      }
      a.validate();
      out[name] = a;
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  return out;
}

ArchSpec find_arch(const std::string& name, const std::optional<std::filesystem::path>& file) {
  const auto archs = file ? load_archs(*file) : builtin_archs();
  auto it = archs.find(name);
  if (it == archs.end()) {
    std::string known;
    for (const auto& [k, v] : archs) known += (known.empty() ? "" : ", ") + k;
    throw ConfigError("unknown arch '" + name + "' (known: " + known + ")");
  }
  return it->second;
}

std::string format_flops(double flops) {
  char buf[64];
  if (flops >= 1e11) {
    std::snprintf(buf, sizeof buf, "%.2f T", flops / 1e12);
  } else if (flops >= 1e8) {
    std::snprintf(buf, sizeof buf, "%.2f G", flops / 1e9);
  } else {
    std::snprintf(buf, sizeof buf, "%.0f", flops);
  }
  return buf;
}

}  // namespace ocvtp
