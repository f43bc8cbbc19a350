#include "zscr/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <set>
#include <string>

#include "binary_io.hpp"
#include "zscr/error.hpp"

namespace zscr {

std::vector<std::vector<std::size_t>> EmbeddingDataset::items_by_class() const {
  std::vector<std::vector<std::size_t>> out(class_count);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < class_count) out[labels[i]].push_back(i);
  }
  return out;
}

std::vector<std::size_t> EmbeddingDataset::items_of(std::span<const ClassId> classes) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (std::find(classes.begin(), classes.end(), labels[i]) != classes.end()) out.push_back(i);
  }
  return out;
}

bool EmbeddingDataset::is_seen(ClassId c) const { return std::find(seen.begin(), seen.end(), c) != seen.end(); }
bool EmbeddingDataset::is_unseen(ClassId c) const {
  return std::find(unseen.begin(), unseen.end(), c) != unseen.end();
}

void SyntheticSpec::validate() const {
  if (n_seen < 1 || n_seen >= n_classes) {
    throw Error(ErrorKind::SpecInvalid, "need 1 <= seen < classes, got seen=" + std::to_string(n_seen) +
                                            " classes=" + std::to_string(n_classes));
  }
  if (items_per_class < 1) throw Error(ErrorKind::SpecInvalid, "items per class must be >= 1");
  if (image_dim < 1 || text_dim < 1) throw Error(ErrorKind::SpecInvalid, "embedding dimensions must be >= 1");
  if (!(image_noise_std >= 0.0f) || !(text_noise_std >= 0.0f)) {
    throw Error(ErrorKind::SpecInvalid, "noise standard deviations must be >= 0");
  }
}

void validate_split(const EmbeddingDataset& ds) {
  const std::size_t n = ds.labels.size();
  if (ds.images.rank() != 2 || ds.texts.rank() != 2 || ds.images.rows() != n || ds.texts.rows() != n) {
    throw Error(ErrorKind::ShapeMismatch, "image/text rows do not match label count " + std::to_string(n));
  }

  std::set<ClassId> seen(ds.seen.begin(), ds.seen.end());
  for (ClassId c : ds.unseen) {
    if (seen.count(c)) throw Error(ErrorKind::SplitOverlap, "class " + std::to_string(c) + " is both seen and unseen");
  }
  std::set<ClassId> known = seen;
  known.insert(ds.unseen.begin(), ds.unseen.end());
  for (ClassId c : known) {
    if (c >= ds.class_count) {
      throw Error(ErrorKind::DanglingLabel,
                  "split lists class " + std::to_string(c) + " beyond class_count " + std::to_string(ds.class_count));
    }
  }

  std::vector<std::size_t> counts(ds.class_count, 0);
  for (std::size_t i = 0; i < n; ++i) {
    const ClassId y = ds.labels[i];
    if (!known.count(y)) {
      throw Error(ErrorKind::DanglingLabel,
                  "item " + std::to_string(i) + " has label " + std::to_string(y) + " outside both splits");
    }
    ++counts[y];
  }
  for (ClassId c : known) {
    if (counts[c] == 0) throw Error(ErrorKind::EmptyClass, "class " + std::to_string(c) + " has no items");
  }
}

ClassQuery per_class_text_embedding(const EmbeddingDataset& ds, ClassId class_id) {
  const std::size_t d = ds.text_dim();
  std::vector<double> acc(d, 0.0);
  std::size_t count = 0;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    if (ds.labels[i] != class_id) continue;
    const auto t = ds.text(i);
    for (std::size_t j = 0; j < d; ++j) acc[j] += t[j];
    ++count;
  }
  if (count == 0) throw Error(ErrorKind::UnknownClass, "class " + std::to_string(class_id) + " has no items");
  std::vector<float> mean(d);
  for (std::size_t j = 0; j < d; ++j) mean[j] = static_cast<float>(acc[j] / static_cast<double>(count));
  return {class_id, Tensor::vector(std::move(mean))};
}

EmbeddingDataset synth_generate(const SyntheticSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const std::size_t di = spec.image_dim;
  const std::size_t dt = spec.text_dim;

  std::vector<std::vector<double>> centers;
  std::size_t rejections = 0;
  while (centers.size() < spec.n_classes) {
    std::vector<double> c(di);
    double norm2 = 0.0;
    for (double& v : c) {
      v = normal(rng);
      norm2 += v * v;
    }
    const double norm = std::sqrt(norm2);
    if (norm < 1e-12) continue;
    for (double& v : c) v /= norm;

    bool ok = true;
    for (const auto& other : centers) {
      double dot = 0.0;
      for (std::size_t j = 0; j < di; ++j) dot += c[j] * other[j];
      if (dot >= kMaxCenterCosine) {
        ok = false;
        break;
      }
    }
    if (ok) {
      centers.push_back(std::move(c));
    } else if (++rejections >= kMaxCenterRejections) {
      throw Error(ErrorKind::CenterSamplingFailed,
                  "could not place " + std::to_string(spec.n_classes) + " centers in dimension " + std::to_string(di));
    }
  }

  // Shared text map A: d_I -> d_T, scaled so that |A c| ~ 1 for unit c.
  std::vector<double> a(dt * di);
  const double a_std = 1.0 / std::sqrt(static_cast<double>(dt));
  for (double& v : a) v = a_std * normal(rng);

  const std::size_t n = static_cast<std::size_t>(spec.n_classes) * spec.items_per_class;
  EmbeddingDataset ds;
  ds.images = Tensor({n, di});
  ds.texts = Tensor({n, dt});
  ds.labels.reserve(n);
  ds.class_count = spec.n_classes;

  std::normal_distribution<double> image_noise(0.0, spec.image_noise_std);
  std::normal_distribution<double> text_noise(0.0, spec.text_noise_std);
  std::size_t item = 0;
  for (ClassId y = 0; y < spec.n_classes; ++y) {
    const auto& c = centers[y];
    std::vector<double> text_center(dt, 0.0);
    for (std::size_t r = 0; r < dt; ++r) {
      for (std::size_t j = 0; j < di; ++j) text_center[r] += a[r * di + j] * c[j];
    }
    for (std::uint32_t k = 0; k < spec.items_per_class; ++k, ++item) {
      auto img = ds.images.row(item);
      for (std::size_t j = 0; j < di; ++j) {
        const double noise = spec.image_noise_std > 0.0f ? image_noise(rng) : 0.0;
        img[j] = static_cast<float>(std::max(0.0, c[j] + noise));
      }
      auto txt = ds.texts.row(item);
      for (std::size_t r = 0; r < dt; ++r) {
        const double noise = spec.text_noise_std > 0.0f ? text_noise(rng) : 0.0;
        txt[r] = static_cast<float>(text_center[r] + noise);
      }
      ds.labels.push_back(y);
    }
  }
  for (ClassId y = 0; y < spec.n_classes; ++y) (y < spec.n_seen ? ds.seen : ds.unseen).push_back(y);
  validate_split(ds);
  return ds;
}

void save_dataset(const EmbeddingDataset& ds, const std::filesystem::path& path) {
  validate_split(ds);
  binary::Writer w;
  w.bytes(kDatasetMagic, 4);
  w.u32(kDatasetVersion);
  w.u32(static_cast<std::uint32_t>(ds.image_dim()));
  w.u32(static_cast<std::uint32_t>(ds.text_dim()));
  w.u32(static_cast<std::uint32_t>(ds.size()));
  w.u32(ds.class_count);
  w.u32(static_cast<std::uint32_t>(ds.seen.size()));
  for (ClassId c : ds.seen) w.u32(c);
  w.u32(static_cast<std::uint32_t>(ds.unseen.size()));
  for (ClassId c : ds.unseen) w.u32(c);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    w.u32(ds.labels[i]);
    w.f32s(ds.image(i).data(), ds.image_dim());
    w.f32s(ds.text(i).data(), ds.text_dim());
  }
  w.write_file(path);
}

EmbeddingDataset load_dataset(const std::filesystem::path& path) {
  auto r = binary::Reader::from_file(path);
  char magic[4];
  r.bytes(magic, 4);
  if (!std::equal(magic, magic + 4, kDatasetMagic)) {
    throw Error(ErrorKind::FormatError, path.string() + " is not a ZSED dataset (bad magic)");
  }
  const std::uint32_t version = r.u32();
  if (version != kDatasetVersion) {
    throw Error(ErrorKind::VersionMismatch, "dataset version " + std::to_string(version) + ", expected " +
                                                std::to_string(kDatasetVersion));
  }
  const std::uint32_t di = r.u32();
  const std::uint32_t dt = r.u32();
  const std::uint32_t n = r.u32();
  if (di == 0 || dt == 0) throw Error(ErrorKind::FormatError, "zero embedding dimension");

  EmbeddingDataset ds;
  ds.class_count = r.u32();
  ds.seen.resize(r.u32());
  for (ClassId& c : ds.seen) c = r.u32();
  ds.unseen.resize(r.u32());
  for (ClassId& c : ds.unseen) c = r.u32();

  const std::size_t record = 4 + 4 * (std::size_t{di} + dt);
  if (r.remaining() != record * n) {
    throw Error(ErrorKind::FormatError, "item section holds " + std::to_string(r.remaining()) + " bytes, expected " +
                                            std::to_string(record * n));
  }
  ds.images = Tensor({n, di});
  ds.texts = Tensor({n, dt});
  ds.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    ds.labels[i] = r.u32();
    r.f32s(ds.images.row(i).data(), di);
    r.f32s(ds.texts.row(i).data(), dt);
  }
  if (!ds.images.all_finite() || !ds.texts.all_finite()) {
    throw Error(ErrorKind::FormatError, "non-finite embedding values");
  }
  validate_split(ds);
  return ds;
}

}  // namespace zscr
