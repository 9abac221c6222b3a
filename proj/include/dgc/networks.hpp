#pragma once

#include "dgc/autodiff.hpp"
#include "dgc/common.hpp"
#include "dgc/mixture.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace dgc::nets {

enum class Activation { relu, sigmoid, identity };

struct LayerSpec {
  enum class Kind { fully_connected, convolution };
  Kind kind = Kind::fully_connected;
  int in = 0;   // units (fc) or channels (conv)
  int out = 0;  // units (fc) or channels (conv)
  int kernel = 0;
  int padding = 0;
  bool transposed = false;  // convolution kind only
  int stride = 1;           // transposed convolution kind only
  Activation activation = Activation::identity;
  bool batch_norm = false;
  int pool_kernel = 0;  // 0 = no pooling
  int pool_stride = 0;
  // When a convolution follows a flat layer, the incoming vector is viewed
  // as an (in, view_height, view_width) image.
  int view_height = 0;
  int view_width = 0;
};

struct NetworkSpec {
  std::vector<LayerSpec> layers;
  void validate() const;  // adjacent sizes compatible, supported fields set
};

// Named parameter tensors plus optimizer slots. Single writer during
// training; forward passes may run concurrently against a frozen snapshot.
struct ParamStore {
  struct Entry {
    std::string name;
    Mat value;
    Mat grad;
    Mat adam_m;
    Mat adam_v;
    bool trainable = true;
  };

  std::vector<Entry> entries;

  int add(const std::string& name, Mat init, bool trainable = true);
  int find(const std::string& name) const;  // -1 when absent
  void zero_grads();
  std::size_t parameter_count() const;
};

// Parameters bound onto a tape for one forward/backward pass.
struct TapeBinding {
  ad::Tape* tape = nullptr;
  std::vector<ad::Var> vars;  // aligned with store entries

  static TapeBinding bind(ParamStore& store, ad::Tape& tape);
  void collect_grads(ParamStore& store) const;
  ad::Var operator[](int store_index) const { return vars[store_index]; }
};

// A feed-forward stack over a ParamStore: fully-connected and convolution
// layers with optional batch norm and max pooling.
struct Net {
  struct Layer {
    LayerSpec spec;
    int w = -1;
    int b = -1;
    int bn_gamma = -1;
    int bn_beta = -1;
    ad::BatchNormState bn_state;
    ad::ImageShape in_shape;   // conv bookkeeping; {0,0,0} for fc
    ad::ImageShape out_shape;  // shape after conv+pool
  };

  std::vector<Layer> layers;
  int output_dim = 0;

  static Net create(ParamStore& store, const NetworkSpec& spec, const std::string& prefix,
                    ad::ImageShape input_image, std::mt19937_64& rng);

  // skip_final_activation exposes the last layer pre-activation so heads
  // can apply their own parametrization.
  ad::Var forward(const TapeBinding& bound, ad::Var x, bool training,
                  bool skip_final_activation = false);
};

enum class ReconKind { bernoulli, gaussian_unit_variance };

struct ResponseSpec {
  mixture::ResponseKind kind = mixture::ResponseKind::categorical;
  int classes = 2;  // categorical
  int dim = 1;      // gaussian output dimension
  // Parameters emitted per component: 1 for binary classes, `classes`
  // logits otherwise, 2*dim (mean, log-variance) for gaussian.
  int params_per_component() const;
};

enum class TaskHeadMode { separate, split_trunk };

// Encoder: trunk from all but the final spec layer, then two linear heads
// (mean, log-variance) sized by the final layer entry.
struct Encoder {
  Net trunk;
  int w_mean = -1, b_mean = -1;
  int w_log_var = -1, b_log_var = -1;
  int latent_dim = 0;

  static Encoder create(ParamStore& store, const NetworkSpec& spec, ad::ImageShape input_image,
                        std::mt19937_64& rng);

  struct Output {
    ad::Var mean;     // d x B
    ad::Var log_var;  // d x B, clamped to [-20, 20]
  };
  Output forward(const TapeBinding& bound, ad::Var x, bool training);
};

struct Decoder {
  Net net;
  ReconKind kind = ReconKind::bernoulli;

  // For bernoulli the final layer is forced linear and emits logits; for
  // gaussian the final activation from the spec shapes the mean.
  static Decoder create(ParamStore& store, const NetworkSpec& spec, ReconKind kind,
                        std::mt19937_64& rng);

  ad::Var forward(const TapeBinding& bound, ad::Var z, bool training);
};

// K per-component response heads. `separate` builds K disjoint networks;
// `split_trunk` builds one network whose final layer output is split into
// K parameter blocks (the layout the fully-connected preset tables use).
struct TaskHeadBank {
  TaskHeadMode mode = TaskHeadMode::separate;
  ResponseSpec response;
  int k = 0;
  Activation mean_activation = Activation::sigmoid;  // gaussian mean head
  std::vector<Net> nets;  // K nets (separate) or 1 net (split_trunk)

  static TaskHeadBank create(ParamStore& store, const NetworkSpec& spec, int k,
                             ResponseSpec response, TaskHeadMode mode, std::mt19937_64& rng);

  // Raw per-component parameter blocks, each params_per_component() x B.
  std::vector<ad::Var> forward_raw(const TapeBinding& bound, ad::Var z, bool training);
};

// Trainable mixture prior: weights as softmax of free logits, means and
// log-variances free.
struct PriorParams {
  int pi_logits = -1;  // K x 1
  int means = -1;      // d x K
  int log_vars = -1;   // d x K
  int k = 0;
  int dim = 0;

  static PriorParams create(ParamStore& store, int k, int dim, std::mt19937_64& rng);
  mixture::MixturePrior snapshot(const ParamStore& store) const;
  void load(ParamStore& store, const mixture::MixturePrior& prior) const;
};

struct ModelConfig {
  int k = 2;
  int latent_dim = 2;
  NetworkSpec encoder_spec;
  NetworkSpec decoder_spec;
  NetworkSpec task_spec;
  ReconKind recon = ReconKind::bernoulli;
  ResponseSpec response;
  TaskHeadMode task_mode = TaskHeadMode::separate;
  ad::ImageShape input_image;  // {0,0,0} for flat inputs
  // Inputs are mapped through x' = (x + shift) * scale before the encoder
  // and inverted on generated reconstructions.
  double input_shift = 0.0;
  double input_scale = 1.0;
  std::uint64_t init_seed = 1;
};

struct Model {
  ModelConfig cfg;
  ParamStore store;
  Encoder encoder;
  Decoder decoder;
  TaskHeadBank task;
  PriorParams prior;

  mixture::MixturePrior mixture_prior() const { return prior.snapshot(store); }
  Mat normalize_input(const Mat& x) const;
  Mat denormalize_output(const Mat& x) const;

  // Deterministic single-input encoding (no sampling); z is the mean.
  mixture::DiagonalGaussian encode_one(const Vec& x);
  // Batch encoding: returns (means, log-variances), each d x B.
  std::pair<Mat, Mat> encode_batch(const Mat& x);
};

Model build_model(const ModelConfig& cfg);

// mean + sqrt(variance) .* noise, with caller-supplied standard normal
// draws so sampling stays deterministic under test.
Vec reparameterize(const mixture::DiagonalGaussian& g, const Vec& noise);

// Per-component response distribution parameters for one latent code.
std::vector<mixture::ResponseDistribution> task_forward(Model& model, const Vec& z);

struct GeneratedSample {
  int component = 0;
  Vec z;
  Vec x;
  Vec y;
};

struct GenerateOptions {
  // When false (default) x and y carry the conditional means, which is
  // what the figure-style outputs plot; when true they are sampled from
  // p(x|z) and p(y|z,c).
  bool sample_observations = false;
};

// Ancestral pass through p(c) -> p(z|c) -> p(x|z), p(y|z,c).
std::vector<GeneratedSample> generate(Model& model, int n, std::uint64_t seed,
                                      const GenerateOptions& opts = {});

// Named architecture presets; throws on unknown names.
ModelConfig preset_model(const std::string& name, int k_override = 0);
bool is_known_preset(const std::string& name);

}  // namespace dgc::nets
