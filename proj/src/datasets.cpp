#include "dgc/datasets.hpp"

#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <numeric>
#include <sstream>

namespace dgc::data {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string format_double(double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  require(ec == std::errc(), "double formatting failed");
  return std::string(buf, ptr);
}

double parse_double(const std::string& s, int line, const std::string& what) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw std::invalid_argument("pacman-csv line " + std::to_string(line) + ": bad " + what +
                                " value '" + s + "'");
  }
  return v;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::stringstream ss(line);
  std::string field;
  while (std::getline(ss, field, ',')) fields.push_back(field);
  if (!line.empty() && line.back() == ',') fields.push_back("");
  return fields;
}

}  // namespace

int PacmanSet::count(int split) const {
  int n = 0;
  for (const auto& p : points) n += p.split == split ? 1 : 0;
  return n;
}

PacmanSet generate_pacman(const PacmanOptions& opts, std::uint64_t seed) {
  require(opts.n_per_annulus >= 2, "generate_pacman: need at least 2 points per annulus");
  require(opts.train_per_annulus >= 0 && opts.train_per_annulus <= opts.n_per_annulus,
          "generate_pacman: train count out of range");
  require(opts.band >= 0.0, "generate_pacman: band must be nonnegative");

  const int n = opts.n_per_annulus;
  std::mt19937_64 jitter_rng = make_rng(seed, 0x7061636aULL);
  std::uniform_real_distribution<double> jitter(-opts.band, opts.band);

  PacmanSet set;
  set.points.reserve(2 * n);
  const double e_minus_1 = std::numbers::e - 1.0;
  for (int cluster : {kInnerAnnulus, kOuterAnnulus}) {
    const double base_radius = cluster == kInnerAnnulus ? 0.8 : 1.0;
    for (int i = 0; i < n; ++i) {
      const double s = static_cast<double>(i) / static_cast<double>(n - 1);
      // Angle runs clockwise from 12 o'clock as s grows.
      const double angle = 0.5 * std::numbers::pi - 2.0 * std::numbers::pi * s;
      const double radius = base_radius + (opts.band > 0.0 ? jitter(jitter_rng) : 0.0);
      PacmanPoint p;
      p.x = Eigen::Vector2d(radius * std::cos(angle), radius * std::sin(angle));
      p.cluster = cluster;
      p.angle = angle;
      p.y = cluster == kInnerAnnulus ? 1.0 - s : (std::exp(s) - 1.0) / e_minus_1;
      set.points.push_back(std::move(p));
    }
  }

  // Sample the train subset independently per annulus.
  std::mt19937_64 split_rng = make_rng(seed, 0x73706c6974ULL);
  for (int cluster : {kInnerAnnulus, kOuterAnnulus}) {
    std::vector<int> idx(n);
    std::iota(idx.begin(), idx.end(), cluster * n);
    std::shuffle(idx.begin(), idx.end(), split_rng);
    for (int i = 0; i < n; ++i) {
      set.points[idx[i]].split = i < opts.train_per_annulus ? kTrainSplit : kTestSplit;
    }
  }
  return set;
}

std::vector<std::string> CompositeDigitSet::cluster_names() const {
  const std::string a = std::to_string(digit_a);
  const std::string b = std::to_string(digit_b);
  return {a, b, a + "B", b + "B"};
}

int CompositeDigitSet::count(int split) const {
  int n = 0;
  for (const auto& s : samples) n += s.split == split ? 1 : 0;
  return n;
}

namespace {

Vec superpose(const Vec& digit, const Vec& background, SuperposeMode mode) {
  if (mode == SuperposeMode::pixel_max) return digit.cwiseMax(background);
  return (digit + background).cwiseMin(1.0);
}

Vec crop_background(const Image& bg, int h, int w, std::mt19937_64& rng) {
  require(bg.height >= h && bg.width >= w, "background smaller than the digit image");
  std::uniform_int_distribution<int> dy(0, bg.height - h), dx(0, bg.width - w);
  const int oy = bg.height == h ? 0 : dy(rng);
  const int ox = bg.width == w ? 0 : dx(rng);
  Vec out(h * w);
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) out[r * w + c] = bg.pixels[(r + oy) * bg.width + (c + ox)];
  return out;
}

}  // namespace

CompositeDigitSet generate_composite_digits(const SourcePool& class_a, const SourcePool& class_b,
                                            const std::vector<Image>& backgrounds,
                                            std::uint64_t seed, const CompositeOptions& opts) {
  require(!class_a.train.empty() || !class_a.test.empty(),
          "generate_composite_digits: class A pool is empty");
  require(!class_b.train.empty() || !class_b.test.empty(),
          "generate_composite_digits: class B pool is empty");
  require(!backgrounds.empty(), "generate_composite_digits: background pool is empty");

  CompositeDigitSet set;
  set.digit_a = opts.digit_a;
  set.digit_b = opts.digit_b;
  std::mt19937_64 rng = make_rng(seed, 0x636f6d70ULL);

  const SourcePool* pools[2] = {&class_a, &class_b};
  for (int label = 0; label < 2; ++label) {
    const std::size_t first = set.samples.size();
    for (int split : {kTrainSplit, kTestSplit}) {
      const auto& images = split == kTrainSplit ? pools[label]->train : pools[label]->test;
      for (const Image& img : images) {
        require(img.height == set.image_height && img.width == set.image_width,
                "generate_composite_digits: source images must be 28x28");
        CompositeDigitSample s;
        s.image = img.pixels.cwiseMax(0.0).cwiseMin(1.0);
        s.label = label;
        s.cluster = label;
        s.split = split;
        set.samples.push_back(std::move(s));
      }
    }
    // Exactly floor(half) of this class gets a background.
    const std::size_t n_class = set.samples.size() - first;
    std::vector<std::size_t> idx(n_class);
    std::iota(idx.begin(), idx.end(), first);
    std::shuffle(idx.begin(), idx.end(), rng);
    std::uniform_int_distribution<std::size_t> pick(0, backgrounds.size() - 1);
    for (std::size_t i = 0; i < n_class / 2; ++i) {
      CompositeDigitSample& s = set.samples[idx[i]];
      const Vec crop =
          crop_background(backgrounds[pick(rng)], set.image_height, set.image_width, rng);
      s.image = superpose(s.image, crop, opts.mode);
      s.cluster = label + 2;
    }
  }
  return set;
}

DigitCorpus load_digit_corpus_csv(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), "digit corpus: cannot open " + path);
  DigitCorpus corpus;
  std::string line;
  std::getline(in, line);  // header
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto fields = split_csv_line(line);
    require(fields.size() == 65, "digit corpus line " + std::to_string(line_no) +
                                     ": expected 65 columns, got " +
                                     std::to_string(fields.size()));
    Image img;
    img.height = 8;
    img.width = 8;
    img.pixels = Vec(64);
    for (int i = 0; i < 64; ++i) {
      img.pixels[i] = parse_double(fields[i], line_no, "pixel") / 16.0;
    }
    corpus.images.push_back(std::move(img));
    corpus.labels.push_back(static_cast<int>(parse_double(fields[64], line_no, "label")));
  }
  require(!corpus.images.empty(), "digit corpus: no rows in " + path);
  return corpus;
}

Image render_digit28(const Image& source, std::mt19937_64& rng) {
  require(source.height == 8 && source.width == 8, "render_digit28: source must be 8x8");
  std::uniform_real_distribution<double> rot(-0.12, 0.12);
  std::uniform_real_distribution<double> scl(0.85, 1.1);
  std::uniform_real_distribution<double> shift(-1.5, 1.5);

  const double theta = rot(rng);
  const double s = scl(rng) * 28.0 / 8.0;
  const double tx = shift(rng), ty = shift(rng);
  const double ct = std::cos(theta), st = std::sin(theta);

  Image out;
  out.height = 28;
  out.width = 28;
  out.pixels = Vec::Zero(28 * 28);
  for (int r = 0; r < 28; ++r) {
    for (int c = 0; c < 28; ++c) {
      // Map the output pixel back into source coordinates.
      const double yo = r - 13.5 - ty, xo = c - 13.5 - tx;
      const double ys = (ct * yo + st * xo) / s + 3.5;
      const double xs = (-st * yo + ct * xo) / s + 3.5;
      if (ys < 0.0 || ys > 7.0 || xs < 0.0 || xs > 7.0) continue;
      const int y0 = static_cast<int>(std::floor(ys)), x0 = static_cast<int>(std::floor(xs));
      const int y1 = std::min(y0 + 1, 7), x1 = std::min(x0 + 1, 7);
      const double fy = ys - y0, fx = xs - x0;
      const double v = (1 - fy) * ((1 - fx) * source.pixels[y0 * 8 + x0] +
                                   fx * source.pixels[y0 * 8 + x1]) +
                       fy * ((1 - fx) * source.pixels[y1 * 8 + x0] +
                             fx * source.pixels[y1 * 8 + x1]);
      out.pixels[r * 28 + c] = std::clamp(v * 1.25, 0.0, 1.0);
    }
  }
  return out;
}

SourcePool build_source_pool(const DigitCorpus& corpus, int digit, int n_train, int n_test,
                             std::uint64_t seed) {
  std::vector<int> pool;
  for (std::size_t i = 0; i < corpus.labels.size(); ++i) {
    if (corpus.labels[i] == digit) pool.push_back(static_cast<int>(i));
  }
  require(!pool.empty(), "build_source_pool: no images of digit " + std::to_string(digit));

  SourcePool out;
  std::mt19937_64 rng = make_rng(seed, 0x64696769ULL + static_cast<std::uint64_t>(digit));
  std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
  for (int i = 0; i < n_train + n_test; ++i) {
    const Image& src = corpus.images[pool[pick(rng)]];
    Image img = render_digit28(src, rng);
    (i < n_train ? out.train : out.test).push_back(std::move(img));
  }
  return out;
}

std::vector<Image> make_noise_backgrounds(int count, int size, std::uint64_t seed,
                                          double max_intensity) {
  require(count >= 1 && size >= 8, "make_noise_backgrounds: bad arguments");
  std::vector<Image> out;
  out.reserve(count);
  std::mt19937_64 rng = make_rng(seed, 0x626bULL);
  std::uniform_real_distribution<double> u(0.0, 1.0);

  const auto value_noise = [&](int grid) {
    Mat coarse(grid + 1, grid + 1);
    for (Eigen::Index i = 0; i < coarse.size(); ++i) coarse.data()[i] = u(rng);
    Mat fine(size, size);
    const double step = static_cast<double>(grid) / (size - 1);
    for (int r = 0; r < size; ++r) {
      for (int c = 0; c < size; ++c) {
        const double y = r * step, x = c * step;
        const int y0 = std::min(static_cast<int>(y), grid - 1);
        const int x0 = std::min(static_cast<int>(x), grid - 1);
        const double fy = y - y0, fx = x - x0;
        fine(r, c) = (1 - fy) * ((1 - fx) * coarse(y0, x0) + fx * coarse(y0, x0 + 1)) +
                     fy * ((1 - fx) * coarse(y0 + 1, x0) + fx * coarse(y0 + 1, x0 + 1));
      }
    }
    return fine;
  };

  for (int i = 0; i < count; ++i) {
    Mat field = 0.7 * value_noise(4) + 0.3 * value_noise(8);
    const double lo = field.minCoeff(), hi = field.maxCoeff();
    Image img;
    img.height = size;
    img.width = size;
    img.pixels = Vec(size * size);
    for (int r = 0; r < size; ++r) {
      for (int c = 0; c < size; ++c) {
        img.pixels[r * size + c] =
            max_intensity * (hi > lo ? (field(r, c) - lo) / (hi - lo) : 0.0);
      }
    }
    out.push_back(std::move(img));
  }
  return out;
}

Dataset to_dataset(const PacmanSet& set, int split) {
  const int n = set.count(split);
  Dataset d;
  d.response = mixture::ResponseKind::gaussian;
  d.x = Mat(2, n);
  d.y = Mat(1, n);
  d.clusters.reserve(n);
  int at = 0;
  for (const auto& p : set.points) {
    if (p.split != split) continue;
    d.x.col(at) = p.x;
    d.y(0, at) = p.y;
    d.clusters.push_back(p.cluster);
    ++at;
  }
  return d;
}

Dataset to_dataset(const CompositeDigitSet& set, int split) {
  const int n = set.count(split);
  Dataset d;
  d.response = mixture::ResponseKind::categorical;
  d.x = Mat(set.image_height * set.image_width, n);
  d.y = Mat(1, n);
  d.clusters.reserve(n);
  int at = 0;
  for (const auto& s : set.samples) {
    if (s.split != split) continue;
    d.x.col(at) = s.image;
    d.y(0, at) = static_cast<double>(s.label);
    d.clusters.push_back(s.cluster);
    ++at;
  }
  return d;
}

void save_pacman_csv(const PacmanSet& set, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  require(out.good(), "save_pacman_csv: cannot write " + path);
  out << "x1,x2,y,cluster,split\n";
  for (const auto& p : set.points) {
    out << format_double(p.x[0]) << ',' << format_double(p.x[1]) << ',' << format_double(p.y)
        << ',' << (p.cluster == kInnerAnnulus ? "inner" : "outer") << ','
        << (p.split == kTrainSplit ? "train" : "test") << '\n';
  }
}

PacmanSet load_pacman_csv(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), "load_pacman_csv: cannot open " + path);
  std::string line;
  require(static_cast<bool>(std::getline(in, line)), "load_pacman_csv: empty file " + path);
  if (line != "x1,x2,y,cluster,split") {
    throw std::invalid_argument("pacman-csv line 1: expected header x1,x2,y,cluster,split, got '" +
                                line + "'");
  }
  PacmanSet set;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto fields = split_csv_line(line);
    if (fields.size() != 5) {
      throw std::invalid_argument("pacman-csv line " + std::to_string(line_no) + ": expected 5 columns, got " +
                                  std::to_string(fields.size()));
    }
    PacmanPoint p;
    p.x[0] = parse_double(fields[0], line_no, "x1");
    p.x[1] = parse_double(fields[1], line_no, "x2");
    p.y = parse_double(fields[2], line_no, "y");
    if (fields[3] == "inner") {
      p.cluster = kInnerAnnulus;
    } else if (fields[3] == "outer") {
      p.cluster = kOuterAnnulus;
    } else {
      throw std::invalid_argument("pacman-csv line " + std::to_string(line_no) +
                                  ": bad cluster '" + fields[3] + "'");
    }
    if (fields[4] == "train") {
      p.split = kTrainSplit;
    } else if (fields[4] == "test") {
      p.split = kTestSplit;
    } else {
      throw std::invalid_argument("pacman-csv line " + std::to_string(line_no) + ": bad split '" +
                                  fields[4] + "'");
    }
    p.angle = std::atan2(p.x[1], p.x[0]);
    set.points.push_back(std::move(p));
  }
  return set;
}

namespace {

void write_pgm(const std::string& path, const Vec& pixels, int height, int width) {
  std::ofstream out(path, std::ios::binary);
  require(out.good(), "write_pgm: cannot write " + path);
  out << "P5\n" << width << ' ' << height << "\n255\n";
  for (Eigen::Index i = 0; i < pixels.size(); ++i) {
    const double v = std::clamp(pixels[i], 0.0, 1.0);
    out.put(static_cast<char>(std::lround(v * 255.0)));
  }
}

Vec read_pgm(const std::string& path, int expect_h, int expect_w) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), "read_pgm: cannot open " + path);
  std::string magic;
  int w = 0, h = 0, maxval = 0;
  in >> magic >> w >> h >> maxval;
  require(magic == "P5" && maxval == 255, "read_pgm: unsupported format in " + path);
  require(w == expect_w && h == expect_h, "read_pgm: unexpected dimensions in " + path);
  in.get();  // single whitespace after header
  Vec pixels(w * h);
  for (Eigen::Index i = 0; i < pixels.size(); ++i) {
    pixels[i] = static_cast<unsigned char>(in.get()) / 255.0;
  }
  return pixels;
}

}  // namespace

void save_image_archive(const CompositeDigitSet& set, const std::string& dir) {
  const fs::path root(dir);
  fs::create_directories(root);
  const auto names = set.cluster_names();
  for (const auto& name : names) fs::create_directories(root / name);

  json manifest;
  manifest["format"] = "dgc-image-archive-v1";
  manifest["image_height"] = set.image_height;
  manifest["image_width"] = set.image_width;
  manifest["digit_a"] = set.digit_a;
  manifest["digit_b"] = set.digit_b;
  manifest["cluster_names"] = names;
  json items = json::array();
  for (std::size_t i = 0; i < set.samples.size(); ++i) {
    const auto& s = set.samples[i];
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%06zu.pgm", i);
    const std::string rel = names[s.cluster] + "/" + buf;
    write_pgm((root / rel).string(), s.image, set.image_height, set.image_width);
    items.push_back({{"file", rel},
                     {"label", s.label},
                     {"cluster", s.cluster},
                     {"split", s.split == kTrainSplit ? "train" : "test"}});
  }
  manifest["items"] = std::move(items);
  std::ofstream out(root / "manifest.json", std::ios::binary);
  require(out.good(), "save_image_archive: cannot write manifest");
  out << manifest.dump(2) << '\n';
}

CompositeDigitSet load_image_archive(const std::string& dir) {
  const fs::path root(dir);
  std::ifstream in(root / "manifest.json");
  require(in.good(), "load_image_archive: cannot open " + (root / "manifest.json").string());
  json manifest = json::parse(in);
  require(manifest.value("format", "") == "dgc-image-archive-v1",
          "load_image_archive: unknown manifest format");

  CompositeDigitSet set;
  set.image_height = manifest.at("image_height").get<int>();
  set.image_width = manifest.at("image_width").get<int>();
  set.digit_a = manifest.at("digit_a").get<int>();
  set.digit_b = manifest.at("digit_b").get<int>();
  for (const auto& item : manifest.at("items")) {
    CompositeDigitSample s;
    s.label = item.at("label").get<int>();
    s.cluster = item.at("cluster").get<int>();
    s.split = item.at("split").get<std::string>() == "train" ? kTrainSplit : kTestSplit;
    s.image = read_pgm((root / item.at("file").get<std::string>()).string(), set.image_height,
                       set.image_width);
    set.samples.push_back(std::move(s));
  }
  return set;
}

LoadedDataset load_dataset(const std::string& path, DatasetFormat format) {
  require(fs::exists(path), "load_dataset: no such path " + path);
  LoadedDataset out;
  if (format == DatasetFormat::pacman_csv) {
    PacmanSet set = load_pacman_csv(path);
    out.train = to_dataset(set, kTrainSplit);
    out.test = to_dataset(set, kTestSplit);
  } else {
    CompositeDigitSet set = load_image_archive(path);
    out.train = to_dataset(set, kTrainSplit);
    out.test = to_dataset(set, kTestSplit);
  }
  return out;
}

}  // namespace dgc::data
