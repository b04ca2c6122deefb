// Copyright 2026 The OC-VTP Authors.
// SPDX-License-Identifier: Apache-2.0

#include "ocvtp/evalbench.hpp"

#include "ocvtp/decoder.hpp"
#include "ocvtp/error.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

namespace ocvtp {

namespace {

/// log C(n, k)
double log_choose(double n, double k) { return std::lgamma(n + 1) - std::lgamma(k + 1) - std::lgamma(n - k + 1); }

}  // namespace

double coverage(std::span<const int> kept, const std::optional<std::vector<std::uint32_t>>& labels) {
  if (!labels) throw ConfigError("coverage: item has no ground-truth labels");
  const std::set<std::uint32_t> objects(labels->begin(), labels->end());
  std::set<std::uint32_t> hit;
  for (int idx : kept) {
    if (idx < 0 || static_cast<std::size_t>(idx) >= labels->size()) throw BoundsError("coverage: index out of range");
    hit.insert((*labels)[static_cast<std::size_t>(idx)]);
  }
  return objects.empty() ? 0.0 : static_cast<double>(hit.size()) / static_cast<double>(objects.size());
}

double coverage(const PruneResult& result, const std::optional<std::vector<std::uint32_t>>& labels) {
  return coverage(result.indices, labels);
}

double random_expected_coverage(std::span<const std::uint32_t> labels, Eigen::Index s) {
  const auto n = static_cast<double>(labels.size());
  if (s < 0 || static_cast<double>(s) > n) throw ConfigError("random_expected_coverage: s outside [0, n]");
  std::map<std::uint32_t, double> sizes;
  for (auto l : labels) sizes[l] += 1.0;
  if (sizes.empty()) return 0.0;
  double total = 0.0;
  const double S = static_cast<double>(s);
  for (const auto& [label, size] : sizes) {
    const double miss = (n - size < S) ? 0.0 : std::exp(log_choose(n - size, S) - log_choose(n, S));
    total += 1.0 - miss;
  }
  return total / static_cast<double>(sizes.size());
}

std::string_view to_string(Method m) {
  switch (m) {
    case Method::kOcVtp: return "ocvtp";
    case Method::kRandom: return "random";
    case Method::kNormTopk: return "norm_topk";
    case Method::kMedoid: return "medoid";
  }
  return "?";
}

Method parse_method(std::string_view text) {
  for (Method m : {Method::kOcVtp, Method::kRandom, Method::kNormTopk, Method::kMedoid}) {
    if (text == to_string(m)) return m;
  }
  throw ConfigError("unknown method '" + std::string(text) + "' (expected ocvtp, random, norm_topk or medoid)");
}

std::vector<int> baseline_select(Method method, const Mat& tokens, Eigen::Index s, std::uint64_t seed) {
  const Eigen::Index n = tokens.rows();
  if (s < 1 || s > n) throw ConfigError("baseline_select: s outside [1, n]");
  std::vector<int> out;
  switch (method) {
    case Method::kRandom: {
      std::vector<int> all(static_cast<std::size_t>(n));
      std::iota(all.begin(), all.end(), 0);
      Rng rng(mix_seed(seed, 0x7a));
      std::shuffle(all.begin(), all.end(), rng);
      out.assign(all.begin(), all.begin() + s);
      break;
    }
    case Method::kNormTopk: {
      const Vec norms = tokens.rowwise().norm();
      std::vector<int> all(static_cast<std::size_t>(n));
      std::iota(all.begin(), all.end(), 0);
      std::stable_sort(all.begin(), all.end(), [&](int a, int b) { return norms(a) > norms(b); });
      out.assign(all.begin(), all.begin() + s);
      break;
    }
    case Method::kMedoid: {
      // Pairwise Euclidean distances.
      const Vec sq = tokens.rowwise().squaredNorm();
      Mat dist = (-2.0 * tokens * tokens.transpose()).colwise() + sq;
      dist.rowwise() += sq.transpose();
      dist = dist.cwiseMax(0.0).cwiseSqrt();
      Vec nearest = Vec::Constant(n, std::numeric_limits<double>::infinity());
      std::vector<bool> chosen(static_cast<std::size_t>(n), false);
      for (Eigen::Index k = 0; k < s; ++k) {
        Eigen::Index best = -1;
        double best_cost = std::numeric_limits<double>::infinity();
        for (Eigen::Index cand = 0; cand < n; ++cand) {
          if (chosen[static_cast<std::size_t>(cand)]) continue;
          const double cost = nearest.cwiseMin(dist.col(cand)).sum();
          if (cost < best_cost) {
            best_cost = cost;
            best = cand;
          }
        }
        chosen[static_cast<std::size_t>(best)] = true;
        nearest = nearest.cwiseMin(dist.col(best));
        out.push_back(static_cast<int>(best));
      }
      break;
    }
    case Method::kOcVtp:
      throw ConfigError("baseline_select: ocvtp is not a baseline; use prune()");
  }
  std::sort(out.begin(), out.end());
  return out;
}

const BenchRow* BenchReport::find(std::string_view method, int budget) const {
  for (const auto& r : rows) {
    if (r.method == method && r.budget == budget) return &r;
  }
  return nullptr;
}

namespace {

nlohmann::json number_or_null(double v) { return std::isnan(v) ? nlohmann::json(nullptr) : nlohmann::json(v); }

double number_from(const nlohmann::json& j) {
  return j.is_null() ? std::numeric_limits<double>::quiet_NaN() : j.get<double>();
}

}  // namespace

std::string BenchReport::to_json() const {
  nlohmann::json j;
  j["corpus_fingerprint"] = corpus_fingerprint;
  j["seeds"] = seeds;
  j["rows"] = nlohmann::json::array();
  for (const auto& r : rows) {
    j["rows"].push_back({{"method", r.method},
                         {"budget", r.budget},
                         {"coverage", number_or_null(r.coverage)},
                         {"recon_error", number_or_null(r.recon_error)},
                         {"duplicate_rate", r.duplicate_rate},
                         {"empty_slot_rate", r.empty_slot_rate},
                         {"evaluations", r.evaluations}});
  }
  j["random_expected_coverage"] = nlohmann::json::array();
  for (const auto& [budget, value] : random_expected) {
    j["random_expected_coverage"].push_back({{"budget", budget}, {"coverage", value}});
  }
  return j.dump(2);
}

BenchReport BenchReport::from_json(const std::string& text) {
  BenchReport rep;
  try {
    const auto j = nlohmann::json::parse(text);
    rep.corpus_fingerprint = j.at("corpus_fingerprint").get<std::string>();
    rep.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    for (const auto& r : j.at("rows")) {
      BenchRow row;
      row.method = r.at("method").get<std::string>();
      row.budget = r.at("budget").get<int>();
      row.coverage = number_from(r.at("coverage"));
      row.recon_error = number_from(r.at("recon_error"));
      row.duplicate_rate = r.at("duplicate_rate").get<double>();
      row.empty_slot_rate = r.at("empty_slot_rate").get<double>();
      row.evaluations = r.at("evaluations").get<int>();
      rep.rows.push_back(row);
    }
    for (const auto& e : j.at("random_expected_coverage")) {
      rep.random_expected.emplace_back(e.at("budget").get<int>(), e.at("coverage").get<double>());
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("bench report: ") + e.what());
  }
  return rep;
}

std::string BenchReport::to_csv() const {
  std::ostringstream out;
  out << "method,budget,coverage,recon_error,duplicate_rate,empty_slot_rate,evaluations\n";
  char buf[256];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%s,%d,%.6f,%.6f,%.6f,%.6f,%d\n", r.method.c_str(), r.budget, r.coverage,
                  r.recon_error, r.duplicate_rate, r.empty_slot_rate, r.evaluations);
    out << buf;
  }
  return out.str();
}

std::string corpus_fingerprint(const TokenCorpus& corpus) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto feed = [&](const void* data, std::size_t size) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < size; ++i) {
      h ^= p[i];
      h *= 0x100000001b3ULL;
    }
  };
  for (const auto& it : corpus.items) {
    feed(it.item_id.data(), it.item_id.size());
    feed(it.tokens.data(), sizeof(float) * static_cast<std::size_t>(it.tokens.size()));
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::vector<int> select_for(Method method, const CheckpointBundle& model, const TokenSequence& item, int budget,
                            PadMode pad_mode, std::uint64_t seed, PruneResult* detail) {
  const Mat tokens = item.as_double();
  if (method != Method::kOcVtp) return baseline_select(method, tokens, budget, seed);
  PruneInput in;
  in.reference = tokens;
  in.last = tokens;
  in.budget = budget;
  in.pad_mode = pad_mode;
  PruneResult r = prune(in, model.query, model.slot, seed);
  std::vector<int> out = r.indices;
  if (detail) *detail = std::move(r);
  return out;
}

BenchReport run_bench(const TokenCorpus& corpus, const CheckpointBundle& model, const BenchOptions& options) {
  if (options.budgets.empty()) throw ConfigError("run_bench: no budgets requested");
  if (options.methods.empty()) throw ConfigError("run_bench: no methods requested");
  if (options.seeds.empty()) throw ConfigError("run_bench: no seeds requested");
  if (corpus.items.empty()) throw ConfigError("run_bench: empty corpus");
  for (int b : options.budgets) {
    if (b < 1 || b > corpus.min_n()) {
      throw ConfigError("run_bench: budget " + std::to_string(b) + " outside [1, " + std::to_string(corpus.min_n()) +
                        "]");
    }
  }
  const bool labelled = std::all_of(corpus.items.begin(), corpus.items.end(),
                                    [](const TokenSequence& t) { return t.labels.has_value(); });

  BenchReport rep;
  rep.corpus_fingerprint = corpus_fingerprint(corpus);
  rep.seeds = options.seeds;
  for (Method method : options.methods) {
    for (int budget : options.budgets) {
      BenchRow row;
      row.method = std::string(to_string(method));
      row.budget = budget;
      double cov = 0.0, err = 0.0, dup = 0.0, empty = 0.0;
      for (std::uint64_t seed : options.seeds) {
        for (std::size_t i = 0; i < corpus.items.size(); ++i) {
          const TokenSequence& item = corpus.items[i];
          const std::uint64_t item_seed = mix_seed(seed, i);
          PruneResult detail;
          const std::vector<int> kept = select_for(method, model, item, budget, options.pad_mode, item_seed, &detail);
          if (labelled) cov += coverage(kept, item.labels);
          const Mat tokens = item.as_double();
          err += recon_distance(model.decoder, gather(tokens, kept), tokens, mix_seed(seed, i, 0xe7), LossKind::kMse)
                     .value;
          if (method == Method::kOcVtp) {
            const double slots = static_cast<double>(detail.areas.size());
            dup += detail.n_duplicates / slots;
            empty += static_cast<double>(std::count(detail.areas.begin(), detail.areas.end(), 0)) / slots;
          }
          ++row.evaluations;
        }
      }
      const double k = static_cast<double>(row.evaluations);
      row.coverage = labelled ? cov / k : std::numeric_limits<double>::quiet_NaN();
      row.recon_error = err / k;
      row.duplicate_rate = dup / k;
      row.empty_slot_rate = empty / k;
      rep.rows.push_back(row);
    }
  }
  if (labelled) {
    for (int budget : options.budgets) {
      double total = 0.0;
      for (const auto& item : corpus.items) total += random_expected_coverage(*item.labels, budget);
      rep.random_expected.emplace_back(budget, total / static_cast<double>(corpus.items.size()));
    }
  }
  return rep;
}

}  // namespace ocvtp
