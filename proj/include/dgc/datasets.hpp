#pragma once

#include "dgc/common.hpp"
#include "dgc/mixture.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace dgc::data {

inline constexpr int kTrainSplit = 0;
inline constexpr int kTestSplit = 1;

// ---------------------------------------------------------------------------
// Pacman: two concentric annuli with functional responses.
// ---------------------------------------------------------------------------

inline constexpr int kInnerAnnulus = 0;
inline constexpr int kOuterAnnulus = 1;

struct PacmanPoint {
  Eigen::Vector2d x;
  double y = 0.0;
  int cluster = kInnerAnnulus;
  double angle = 0.0;  // generation metadata, not persisted
  int split = kTrainSplit;
};

struct PacmanSet {
  std::vector<PacmanPoint> points;

  int count(int split) const;
};

struct PacmanOptions {
  int n_per_annulus = 10000;
  int train_per_annulus = 7500;
  double band = 0.0;  // radial half-width; 0 keeps points exactly on the circles
};

// Inner annulus (radius 0.8): responses fall linearly from 1 to 0 in the
// clockwise direction. Outer annulus (radius 1.0): the exponential of the
// same split points, rescaled to [0, 1], assigned in the opposite trend.
PacmanSet generate_pacman(const PacmanOptions& opts, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Composite digits: two digit classes, half of each overlaid with noise.
// ---------------------------------------------------------------------------

struct Image {
  int height = 0;
  int width = 0;
  Vec pixels;  // row-major, values in [0, 1]
};

struct CompositeDigitSample {
  Vec image;  // 28 x 28, [0, 1]
  int label = 0;        // 0 = first class, 1 = second class
  int cluster = 0;      // 0 = A, 1 = B, 2 = A+background, 3 = B+background
  int split = kTrainSplit;
};

struct CompositeDigitSet {
  std::vector<CompositeDigitSample> samples;
  int image_height = 28;
  int image_width = 28;
  int digit_a = 2;
  int digit_b = 7;

  std::vector<std::string> cluster_names() const;  // e.g. {"2", "7", "2B", "7B"}
  int count(int split) const;
};

struct SourcePool {
  std::vector<Image> train;
  std::vector<Image> test;
};

enum class SuperposeMode { pixel_max, clamped_sum };

struct CompositeOptions {
  SuperposeMode mode = SuperposeMode::pixel_max;
  int digit_a = 2;
  int digit_b = 7;
};

// Exactly floor(|class|/2) images per class receive a background crop
// (pixel-wise max by default, clamped to [0, 1]). Backgrounds are sampled
// with replacement; larger backgrounds contribute a random crop.
CompositeDigitSet generate_composite_digits(const SourcePool& class_a, const SourcePool& class_b,
                                            const std::vector<Image>& backgrounds,
                                            std::uint64_t seed, const CompositeOptions& opts = {});

// ---------------------------------------------------------------------------
// Desk-scale digit sources: the bundled 8x8 handwritten-digit corpus,
// rendered up to 28x28 with a small seeded affine jitter per instance.
// ---------------------------------------------------------------------------

struct DigitCorpus {
  std::vector<Image> images;  // 8 x 8, [0, 1]
  std::vector<int> labels;
};

DigitCorpus load_digit_corpus_csv(const std::string& path);

Image render_digit28(const Image& source, std::mt19937_64& rng);

// n_train + n_test jittered 28x28 renders of one digit class.
SourcePool build_source_pool(const DigitCorpus& corpus, int digit, int n_train, int n_test,
                             std::uint64_t seed);

// Smooth value-noise textures standing in for natural-image crops.
std::vector<Image> make_noise_backgrounds(int count, int size, std::uint64_t seed,
                                          double max_intensity = 0.75);

// ---------------------------------------------------------------------------
// Training-facing container and converters.
// ---------------------------------------------------------------------------

struct Dataset {
  Mat x;  // features x N
  Mat y;  // 1 x N class indices (categorical) or dim x N values (gaussian)
  std::vector<int> clusters;
  mixture::ResponseKind response = mixture::ResponseKind::gaussian;
  int n() const { return static_cast<int>(x.cols()); }
};

Dataset to_dataset(const PacmanSet& set, int split);
Dataset to_dataset(const CompositeDigitSet& set, int split);

// ---------------------------------------------------------------------------
// File formats.
// ---------------------------------------------------------------------------

// pacman-csv, header: x1,x2,y,cluster,split. Round-trips bit-exactly.
void save_pacman_csv(const PacmanSet& set, const std::string& path);
PacmanSet load_pacman_csv(const std::string& path);  // parse errors carry line numbers

// image-archive: per-cluster subdirectories of PGM files plus manifest.json
// listing (filename, label, cluster, split).
void save_image_archive(const CompositeDigitSet& set, const std::string& dir);
CompositeDigitSet load_image_archive(const std::string& dir);

enum class DatasetFormat { pacman_csv, image_archive };

struct LoadedDataset {
  Dataset train;
  Dataset test;
};

LoadedDataset load_dataset(const std::string& path, DatasetFormat format);

}  // namespace dgc::data
