#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "icr/decoders.hpp"
#include "icr/errors.hpp"
#include "icr/linalg.hpp"
#include "icr/nn.hpp"

namespace icr {

using nlohmann::json;

// =====================================================================
//  Synthetic paired-modality benchmark with an explicit, removable
//  shortcut channel.
//
//  Token layout: semantic attribute tokens occupy [0, M); shortcut
//  tokens occupy [M, M + N_train), one per training image id.
//  Image features: the first d_img - d_shortcut dims carry a frozen
//  projection of the attribute one-hot vector, the last d_shortcut dims
//  carry the per-id shortcut block. Gaussian noise on all dims.
// =====================================================================

struct ShortcutOptions {
  bool enabled_train = true;
  // true: the shortcut channel is absent from the test split.
  // false: test captions/images get id-independent shortcut draws.
  bool removed_at_test = true;
};

struct DatasetSpec {
  int n_train = 2000;
  int n_test = 500;
  int k = 5;                   // captions per image
  int m_attr_vocab = 32;       // semantic attribute vocabulary size
  int s_attrs = 6;             // active attributes per sample
  int tokens_per_caption = 3;  // semantic tokens listed per caption
  int d_img = 48;
  int d_shortcut = 8;          // trailing image dims reserved for the shortcut block
  int d_target = 32;
  double noise_sigma = 0.1;
  double shortcut_scale = 3.0; // block amplitude; large values make the shortcut the
                               // dominant in-batch discriminator
  // Attribute sets are drawn around shared scene prototypes, so the
  // corpus contains groups of semantically near-identical images (the
  // same crowding real captioning data shows). Within a group only the
  // shortcut separates pairs, which is what makes it worth learning.
  int n_prototypes = 160;
  int prototype_mutations = 1;  // attrs resampled per image off its prototype
  ShortcutOptions shortcut;
  int overlap_threshold = 4;   // shared attrs for an extra positive
  std::uint64_t seed = 1;

  void validate() const {
    if (n_train < 1 || n_test < 1) throw SpecInvalid("DatasetSpec: split sizes must be >= 1");
    if (k < 1) throw SpecInvalid("DatasetSpec: k must be >= 1");
    if (!(1 <= tokens_per_caption && tokens_per_caption <= s_attrs && s_attrs <= m_attr_vocab))
      throw SpecInvalid("DatasetSpec: need 1 <= tokens_per_caption <= s_attrs <= m_attr_vocab");
    if (d_shortcut < 1 || d_shortcut >= d_img)
      throw SpecInvalid("DatasetSpec: need 1 <= d_shortcut < d_img");
    if (d_target < 1) throw SpecInvalid("DatasetSpec: d_target must be >= 1");
    if (noise_sigma < 0.0) throw SpecInvalid("DatasetSpec: noise_sigma must be >= 0");
    if (shortcut_scale <= 0.0) throw SpecInvalid("DatasetSpec: shortcut_scale must be > 0");
    if (n_prototypes < 1) throw SpecInvalid("DatasetSpec: n_prototypes must be >= 1");
    if (prototype_mutations < 0 || prototype_mutations > s_attrs)
      throw SpecInvalid("DatasetSpec: need 0 <= prototype_mutations <= s_attrs");
    if (overlap_threshold < 1) throw SpecInvalid("DatasetSpec: overlap_threshold must be >= 1");
  }

  int vocab_size() const { return m_attr_vocab + n_train; }
};

inline void to_json(json& j, const ShortcutOptions& s) {
  j = json{{"enabled_train", s.enabled_train}, {"removed_at_test", s.removed_at_test}};
}

inline void from_json(const json& j, ShortcutOptions& s) {
  s.enabled_train = j.value("enabled_train", true);
  s.removed_at_test = j.value("removed_at_test", true);
}

inline void to_json(json& j, const DatasetSpec& s) {
  j = json{{"n_train", s.n_train},
           {"n_test", s.n_test},
           {"k", s.k},
           {"m_attr_vocab", s.m_attr_vocab},
           {"s_attrs", s.s_attrs},
           {"tokens_per_caption", s.tokens_per_caption},
           {"d_img", s.d_img},
           {"d_shortcut", s.d_shortcut},
           {"d_target", s.d_target},
           {"noise_sigma", s.noise_sigma},
           {"shortcut_scale", s.shortcut_scale},
           {"n_prototypes", s.n_prototypes},
           {"prototype_mutations", s.prototype_mutations},
           {"shortcut", s.shortcut},
           {"overlap_threshold", s.overlap_threshold},
           {"seed", s.seed}};
}

inline void from_json(const json& j, DatasetSpec& s) {
  DatasetSpec d;
  s.n_train = j.value("n_train", d.n_train);
  s.n_test = j.value("n_test", d.n_test);
  s.k = j.value("k", d.k);
  s.m_attr_vocab = j.value("m_attr_vocab", d.m_attr_vocab);
  s.s_attrs = j.value("s_attrs", d.s_attrs);
  s.tokens_per_caption = j.value("tokens_per_caption", d.tokens_per_caption);
  s.d_img = j.value("d_img", d.d_img);
  s.d_shortcut = j.value("d_shortcut", d.d_shortcut);
  s.d_target = j.value("d_target", d.d_target);
  s.noise_sigma = j.value("noise_sigma", d.noise_sigma);
  s.shortcut_scale = j.value("shortcut_scale", d.shortcut_scale);
  s.n_prototypes = j.value("n_prototypes", d.n_prototypes);
  s.prototype_mutations = j.value("prototype_mutations", d.prototype_mutations);
  s.shortcut = j.value("shortcut", d.shortcut);
  s.overlap_threshold = j.value("overlap_threshold", d.overlap_threshold);
  s.seed = j.value("seed", d.seed);
}

struct PairedSample {
  std::int64_t id = 0;
  RealVector image;                 // [d_img]
  std::vector<TokenSeq> captions;   // k sequences
  std::vector<RealVector> targets;  // k target vectors, [d_target] each
  std::vector<int> attributes;      // sorted active attribute ids
};

struct Dataset {
  DatasetSpec spec;
  std::string split;  // "train" | "test"
  int vocab_size = 0;
  std::uint64_t target_seed = 0;
  std::vector<PairedSample> samples;
};

// Per query (each direction) the set of matching candidate indices:
// the paired item plus extra positives by attribute overlap. Caption
// indices are flattened as sample_index * k + caption_index.
struct RelevanceAnnotations {
  int overlap_threshold = 0;
  std::vector<std::vector<int>> i2t;  // per image, matching caption indices
  std::vector<std::vector<int>> t2i;  // per caption, matching image indices
};

struct GeneratedData {
  Dataset train;
  Dataset test;
  RelevanceAnnotations annotations;
  std::optional<double> shortcut_probe_accuracy;  // train-split sanity probe
};

inline std::vector<int> semantic_tokens(const TokenSeq& caption, int m_attr_vocab) {
  std::vector<int> out;
  for (int t : caption)
    if (t < m_attr_vocab) out.push_back(t);
  return out;
}

namespace detail {

inline int attribute_overlap(const std::vector<int>& a, const std::vector<int>& b) {
  // both sorted
  int n = 0;
  std::size_t i = 0, j = 0;
  while (i < a.size() && j < b.size()) {
    if (a[i] == b[j]) ++n, ++i, ++j;
    else if (a[i] < b[j]) ++i;
    else ++j;
  }
  return n;
}

}  // namespace detail

inline GeneratedData generate_dataset(const DatasetSpec& spec) {
  spec.validate();
  SeededRng root(spec.seed);
  SeededRng rng_proj = root.fork(1);
  SeededRng rng_target = root.fork(2);
  SeededRng rng_blocks = root.fork(3);
  SeededRng rng_train = root.fork(4);
  SeededRng rng_test = root.fork(5);
  SeededRng rng_subst = root.fork(6);
  SeededRng rng_protos = root.fork(7);

  const int d_sem = spec.d_img - spec.d_shortcut;
  // Feature projection scaled so per-dim variance of the attribute sum is ~1.
  const Matrix proj = random_gaussian_matrix(static_cast<std::size_t>(d_sem),
                                             static_cast<std::size_t>(spec.m_attr_vocab),
                                             rng_proj,
                                             1.0 / std::sqrt(static_cast<double>(spec.s_attrs)));
  const std::uint64_t target_seed = rng_target.seed();
  const TargetGenerator target_gen(static_cast<std::size_t>(spec.d_target),
                                   static_cast<std::size_t>(spec.m_attr_vocab), target_seed);

  std::vector<std::vector<int>> prototypes(static_cast<std::size_t>(spec.n_prototypes));
  for (auto& proto : prototypes) proto = rng_protos.sample_distinct(spec.m_attr_vocab, spec.s_attrs);

  std::vector<RealVector> blocks(static_cast<std::size_t>(spec.n_train));
  for (auto& b : blocks) {
    b.resize(static_cast<std::size_t>(spec.d_shortcut));
    for (double& v : b) v = spec.shortcut_scale * rng_blocks.next_gaussian();
  }

  auto make_sample = [&](std::int64_t id, bool is_train, SeededRng& rng) {
    PairedSample sample;
    sample.id = id;
    sample.attributes =
        prototypes[rng.next_below(static_cast<std::uint64_t>(spec.n_prototypes))];
    for (int mutation = 0; mutation < spec.prototype_mutations; ++mutation) {
      int fresh;
      do {
        fresh = static_cast<int>(rng.next_below(static_cast<std::uint64_t>(spec.m_attr_vocab)));
      } while (std::find(sample.attributes.begin(), sample.attributes.end(), fresh) !=
               sample.attributes.end());
      sample.attributes[rng.next_below(sample.attributes.size())] = fresh;
    }
    std::sort(sample.attributes.begin(), sample.attributes.end());

    const bool shortcut_here =
        spec.shortcut.enabled_train && (is_train || !spec.shortcut.removed_at_test);

    for (int c = 0; c < spec.k; ++c) {
      const std::vector<int> picks = rng.sample_distinct(spec.s_attrs, spec.tokens_per_caption);
      TokenSeq caption;
      for (int p : picks) caption.push_back(sample.attributes[static_cast<std::size_t>(p)]);
      sample.targets.push_back(target_gen.generate(caption));
      if (shortcut_here) {
        int shortcut_token;
        if (is_train) {
          shortcut_token = spec.m_attr_vocab + static_cast<int>(id);
        } else {
          shortcut_token =
              spec.m_attr_vocab + static_cast<int>(rng_subst.next_below(
                                      static_cast<std::uint64_t>(spec.n_train)));
        }
        const std::size_t pos = static_cast<std::size_t>(rng.next_below(caption.size() + 1));
        caption.insert(caption.begin() + static_cast<std::ptrdiff_t>(pos), shortcut_token);
      }
      sample.captions.push_back(std::move(caption));
    }

    sample.image.assign(static_cast<std::size_t>(spec.d_img), 0.0);
    for (int a : sample.attributes)
      for (int d = 0; d < d_sem; ++d)
        sample.image[static_cast<std::size_t>(d)] +=
            proj(static_cast<std::size_t>(d), static_cast<std::size_t>(a));
    if (shortcut_here) {
      const RealVector* block = nullptr;
      RealVector subst_block;
      if (is_train) {
        block = &blocks[static_cast<std::size_t>(id)];
      } else {
        subst_block.resize(static_cast<std::size_t>(spec.d_shortcut));
        for (double& v : subst_block) v = spec.shortcut_scale * rng_subst.next_gaussian();
        block = &subst_block;
      }
      for (int d = 0; d < spec.d_shortcut; ++d)
        sample.image[static_cast<std::size_t>(d_sem + d)] = (*block)[static_cast<std::size_t>(d)];
    }
    for (double& v : sample.image) v += spec.noise_sigma * rng.next_gaussian();
    return sample;
  };

  GeneratedData out;
  out.train.spec = spec;
  out.train.split = "train";
  out.train.vocab_size = spec.vocab_size();
  out.train.target_seed = target_seed;
  for (int i = 0; i < spec.n_train; ++i)
    out.train.samples.push_back(make_sample(i, /*is_train=*/true, rng_train));

  out.test.spec = spec;
  out.test.split = "test";
  out.test.vocab_size = spec.vocab_size();
  out.test.target_seed = target_seed;
  for (int i = 0; i < spec.n_test; ++i)
    out.test.samples.push_back(make_sample(spec.n_train + i, /*is_train=*/false, rng_test));

  // Relevance annotations over the test split.
  out.annotations.overlap_threshold = spec.overlap_threshold;
  const std::size_t n = out.test.samples.size();
  out.annotations.i2t.assign(n, {});
  out.annotations.t2i.assign(n * static_cast<std::size_t>(spec.k), {});
  for (std::size_t q = 0; q < n; ++q) {
    for (std::size_t j = 0; j < n; ++j) {
      const bool match = q == j || detail::attribute_overlap(out.test.samples[q].attributes,
                                                             out.test.samples[j].attributes) >=
                                       spec.overlap_threshold;
      if (!match) continue;
      for (int c = 0; c < spec.k; ++c)
        out.annotations.i2t[q].push_back(static_cast<int>(j) * spec.k + c);
      for (int c = 0; c < spec.k; ++c)
        out.annotations.t2i[j * static_cast<std::size_t>(spec.k) + static_cast<std::size_t>(c)]
            .push_back(static_cast<int>(q));
    }
  }

  // Sanity probe: nearest clean block must identify the pair id.
  if (spec.shortcut.enabled_train) {
    int hits = 0;
    for (const PairedSample& s : out.train.samples) {
      const double* obs = s.image.data() + d_sem;
      std::size_t best = 0;
      double best_d = std::numeric_limits<double>::infinity();
      for (std::size_t b = 0; b < blocks.size(); ++b) {
        double dist = 0.0;
        for (int d = 0; d < spec.d_shortcut; ++d) {
          const double diff = obs[d] - blocks[b][static_cast<std::size_t>(d)];
          dist += diff * diff;
        }
        if (dist < best_d) {
          best_d = dist;
          best = b;
        }
      }
      if (best == static_cast<std::size_t>(s.id)) ++hits;
    }
    out.shortcut_probe_accuracy =
        static_cast<double>(hits) / static_cast<double>(out.train.samples.size());
  }
  return out;
}

// =====================================================================
//  Persistence: JSON Lines, a leading metadata record then one record
//  per sample. Annotations are a single JSON document.
// =====================================================================

constexpr int kDatasetSchemaVersion = 1;

inline void save_dataset(const Dataset& ds, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("save_dataset: cannot open " + path);
  json meta{{"schema_version", kDatasetSchemaVersion},
            {"kind", "icr-shortcut-dataset"},
            {"split", ds.split},
            {"spec", ds.spec},
            {"vocab_size", ds.vocab_size},
            {"target_seed", ds.target_seed},
            {"n_samples", ds.samples.size()}};
  out << meta.dump() << "\n";
  for (const PairedSample& s : ds.samples) {
    json rec{{"id", s.id},
             {"attributes", s.attributes},
             {"image", s.image},
             {"captions", s.captions},
             {"targets", s.targets}};
    out << rec.dump() << "\n";
  }
  if (!out) throw IoError("save_dataset: write failed for " + path);
}

inline Dataset load_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("load_dataset: cannot open " + path);
  std::string line;
  long line_no = 0;

  auto parse_line = [&](const std::string& text) {
    try {
      return json::parse(text);
    } catch (const json::parse_error& e) {
      throw ParseError("line " + std::to_string(line_no) + ": " + e.what());
    }
  };

  if (!std::getline(in, line) || line.empty()) throw ParseError("no records");
  ++line_no;
  const json meta = parse_line(line);
  if (!meta.contains("schema_version") || !meta.contains("spec"))
    throw ParseError("line 1: missing dataset metadata record");
  if (meta["schema_version"].get<int>() != kDatasetSchemaVersion)
    throw SchemaVersionMismatch("dataset schema version " +
                                meta["schema_version"].dump() + ", expected " +
                                std::to_string(kDatasetSchemaVersion));
  Dataset ds;
  ds.spec = meta["spec"].get<DatasetSpec>();
  ds.split = meta.value("split", "");
  ds.vocab_size = meta["vocab_size"].get<int>();
  ds.target_seed = meta["target_seed"].get<std::uint64_t>();
  const std::size_t expected = meta["n_samples"].get<std::size_t>();

  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const json rec = parse_line(line);
    try {
      PairedSample s;
      s.id = rec.at("id").get<std::int64_t>();
      s.attributes = rec.at("attributes").get<std::vector<int>>();
      s.image = rec.at("image").get<RealVector>();
      s.captions = rec.at("captions").get<std::vector<TokenSeq>>();
      s.targets = rec.at("targets").get<std::vector<RealVector>>();
      ds.samples.push_back(std::move(s));
    } catch (const json::exception& e) {
      throw ParseError("line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  if (ds.samples.size() != expected)
    throw ParseError("expected " + std::to_string(expected) + " records, found " +
                     std::to_string(ds.samples.size()));
  return ds;
}

inline void save_annotations(const RelevanceAnnotations& ann, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("save_annotations: cannot open " + path);
  json j{{"schema_version", kDatasetSchemaVersion},
         {"overlap_threshold", ann.overlap_threshold},
         {"i2t", ann.i2t},
         {"t2i", ann.t2i}};
  out << j.dump(2) << "\n";
}

inline RelevanceAnnotations load_annotations(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("load_annotations: cannot open " + path);
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("annotations: ") + e.what());
  }
  if (j.value("schema_version", -1) != kDatasetSchemaVersion)
    throw SchemaVersionMismatch("annotations schema version mismatch");
  RelevanceAnnotations ann;
  ann.overlap_threshold = j["overlap_threshold"].get<int>();
  ann.i2t = j["i2t"].get<std::vector<std::vector<int>>>();
  ann.t2i = j["t2i"].get<std::vector<std::vector<int>>>();
  return ann;
}

// =====================================================================
//  Epoch batching: every (image, caption) pair exactly once per epoch,
//  in a seeded permutation, chunked with the final short batch kept.
// =====================================================================

struct PairedBatch {
  Matrix images;                             // [b x d_img]
  std::vector<TokenSeq> captions;            // b sequences
  Matrix targets;                            // [b x d_target]
  std::vector<std::int64_t> image_ids;       // pair identity per row
  std::vector<std::pair<int, int>> refs;     // (sample index, caption index)
};

inline std::vector<PairedBatch> epoch_batches(const Dataset& ds, int batch_size,
                                              std::uint64_t epoch_seed) {
  if (batch_size < 2) throw BatchTooSmall("epoch_batches: batch_size must be >= 2");
  std::vector<std::pair<int, int>> pairs;
  pairs.reserve(ds.samples.size() * static_cast<std::size_t>(ds.spec.k));
  for (std::size_t i = 0; i < ds.samples.size(); ++i)
    for (std::size_t c = 0; c < ds.samples[i].captions.size(); ++c)
      pairs.emplace_back(static_cast<int>(i), static_cast<int>(c));
  SeededRng rng(epoch_seed);
  rng.shuffle(pairs);

  std::vector<PairedBatch> batches;
  const std::size_t d_img = static_cast<std::size_t>(ds.spec.d_img);
  const std::size_t d_target = static_cast<std::size_t>(ds.spec.d_target);
  for (std::size_t start = 0; start < pairs.size(); start += static_cast<std::size_t>(batch_size)) {
    const std::size_t b = std::min(static_cast<std::size_t>(batch_size), pairs.size() - start);
    PairedBatch batch;
    batch.images = Matrix(b, d_img);
    batch.targets = Matrix(b, d_target);
    for (std::size_t r = 0; r < b; ++r) {
      const auto [si, ci] = pairs[start + r];
      const PairedSample& s = ds.samples[static_cast<std::size_t>(si)];
      std::copy(s.image.begin(), s.image.end(), batch.images.row(r));
      std::copy(s.targets[static_cast<std::size_t>(ci)].begin(),
                s.targets[static_cast<std::size_t>(ci)].end(), batch.targets.row(r));
      batch.captions.push_back(s.captions[static_cast<std::size_t>(ci)]);
      batch.image_ids.push_back(s.id);
      batch.refs.emplace_back(si, ci);
    }
    batches.push_back(std::move(batch));
  }
  return batches;
}

// Fraction of batches containing the same image at least twice.
inline double duplicate_image_fraction(const std::vector<PairedBatch>& batches) {
  if (batches.empty()) return 0.0;
  int dup = 0;
  for (const PairedBatch& b : batches) {
    std::vector<std::int64_t> ids = b.image_ids;
    std::sort(ids.begin(), ids.end());
    if (std::adjacent_find(ids.begin(), ids.end()) != ids.end()) ++dup;
  }
  return static_cast<double>(dup) / static_cast<double>(batches.size());
}

}  // namespace icr
