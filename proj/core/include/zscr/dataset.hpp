#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "zscr/tensor.hpp"

namespace zscr {

using ClassId = std::uint32_t;

/// Precomputed image/text embeddings with class labels and a disjoint
/// seen/unseen class split. Item k is row k of `images` and `texts`.
struct EmbeddingDataset {
  Tensor images;  // [n x d_I]
  Tensor texts;   // [n x d_T]
  std::vector<ClassId> labels;
  std::uint32_t class_count = 0;
  std::vector<ClassId> seen;
  std::vector<ClassId> unseen;

  std::size_t size() const noexcept { return labels.size(); }
  std::size_t image_dim() const { return images.cols(); }
  std::size_t text_dim() const { return texts.cols(); }

  std::span<const float> image(std::size_t item) const { return images.row(item); }
  std::span<const float> text(std::size_t item) const { return texts.row(item); }

  /// Item indices per class id, in item order.
  std::vector<std::vector<std::size_t>> items_by_class() const;
  std::vector<std::size_t> items_of(std::span<const ClassId> classes) const;

  bool is_seen(ClassId c) const;
  bool is_unseen(ClassId c) const;
};

struct ClassQuery {
  ClassId class_id = 0;
  Tensor phi;  // [d_T]
};

/// Parameters of the synthetic world used for desk-scale verification.
struct SyntheticSpec {
  std::uint32_t n_classes = 12;
  std::uint32_t n_seen = 8;
  std::uint32_t items_per_class = 60;
  std::uint32_t image_dim = 32;
  std::uint32_t text_dim = 16;
  float image_noise_std = 0.05f;
  float text_noise_std = 0.05f;
  std::uint64_t seed = 7;

  void validate() const;
};

/// Throws SplitOverlap, DanglingLabel or EmptyClass when a dataset invariant
/// is violated, and ShapeMismatch for inconsistent row counts.
void validate_split(const EmbeddingDataset& ds);

/// Arithmetic mean of the text embeddings of the class's items.
ClassQuery per_class_text_embedding(const EmbeddingDataset& ds, ClassId class_id);

/// Unit-norm class centers with pairwise cosine below this bound.
inline constexpr double kMaxCenterCosine = 0.7;
inline constexpr std::size_t kMaxCenterRejections = 100000;

EmbeddingDataset synth_generate(const SyntheticSpec& spec);

inline constexpr char kDatasetMagic[4] = {'Z', 'S', 'E', 'D'};
inline constexpr std::uint32_t kDatasetVersion = 1;

void save_dataset(const EmbeddingDataset& ds, const std::filesystem::path& path);
EmbeddingDataset load_dataset(const std::filesystem::path& path);

}  // namespace zscr
