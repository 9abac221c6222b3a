#include "dgc/networks.hpp"

#include <cmath>

namespace dgc::nets {

namespace {

Mat uniform_fan_in(std::mt19937_64& rng, Eigen::Index rows, Eigen::Index cols, int fan_in) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(std::max(fan_in, 1)));
  std::uniform_real_distribution<double> u(-bound, bound);
  Mat m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
  return m;
}

ad::Var apply_activation(ad::Var v, Activation act) {
  switch (act) {
    case Activation::relu: return ad::relu(v);
    case Activation::sigmoid: return ad::sigmoid(v);
    case Activation::identity: return v;
  }
  throw std::invalid_argument("unknown activation");
}

}  // namespace

void NetworkSpec::validate() const {
  require(!layers.empty(), "network spec: no layers");
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const LayerSpec& l = layers[i];
    require(l.in >= 1 && l.out >= 1, "network spec: layer sizes must be positive");
    if (l.kind == LayerSpec::Kind::convolution) {
      require(l.kernel >= 1, "network spec: convolution needs a kernel size");
      require(l.stride >= 1, "network spec: stride must be positive");
    } else {
      require(!l.batch_norm && l.pool_kernel == 0,
              "network spec: batch norm / pooling apply to convolution layers");
    }
    if (i + 1 < layers.size()) {
      const LayerSpec& next = layers[i + 1];
      if (l.kind == LayerSpec::Kind::fully_connected &&
          next.kind == LayerSpec::Kind::fully_connected) {
        require(l.out == next.in, "network spec: layer " + std::to_string(i) + " emits " +
                                      std::to_string(l.out) + " units but layer " +
                                      std::to_string(i + 1) + " expects " +
                                      std::to_string(next.in));
      }
      if (l.kind == LayerSpec::Kind::convolution &&
          next.kind == LayerSpec::Kind::convolution) {
        require(l.out == next.in, "network spec: channel mismatch between convolution layers " +
                                      std::to_string(i) + " and " + std::to_string(i + 1));
      }
    }
  }
}

int ParamStore::add(const std::string& name, Mat init, bool trainable) {
  // grad and Adam slots stay empty until first use.
  entries.push_back(Entry{name, std::move(init), Mat(), Mat(), Mat(), trainable});
  return static_cast<int>(entries.size()) - 1;
}

int ParamStore::find(const std::string& name) const {
  for (std::size_t i = 0; i < entries.size(); ++i) {
    if (entries[i].name == name) return static_cast<int>(i);
  }
  return -1;
}

void ParamStore::zero_grads() {
  for (Entry& e : entries) {
    if (e.grad.size() != 0) e.grad.setZero();
  }
}

std::size_t ParamStore::parameter_count() const {
  std::size_t n = 0;
  for (const Entry& e : entries) {
    if (e.trainable) n += static_cast<std::size_t>(e.value.size());
  }
  return n;
}

TapeBinding TapeBinding::bind(ParamStore& store, ad::Tape& tape) {
  TapeBinding bound;
  bound.tape = &tape;
  bound.vars.reserve(store.entries.size());
  for (const ParamStore::Entry& e : store.entries) bound.vars.push_back(ad::leaf(tape, e.value));
  return bound;
}

void TapeBinding::collect_grads(ParamStore& store) const {
  for (std::size_t i = 0; i < store.entries.size(); ++i) {
    ParamStore::Entry& e = store.entries[i];
    if (!e.trainable) continue;
    if (e.grad.size() == 0) e.grad = Mat::Zero(e.value.rows(), e.value.cols());
    e.grad += tape->grad(vars[i].id);
  }
}

Net Net::create(ParamStore& store, const NetworkSpec& spec, const std::string& prefix,
                ad::ImageShape input_image, std::mt19937_64& rng) {
  spec.validate();
  Net net;
  ad::ImageShape shape = input_image;
  int flat_dim = input_image.size();
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const LayerSpec& ls = spec.layers[i];
    Layer layer;
    layer.spec = ls;
    const std::string base = prefix + ".l" + std::to_string(i);
    if (ls.kind == LayerSpec::Kind::fully_connected) {
      if (flat_dim > 0) {
        require(ls.in == flat_dim, prefix + ": fully-connected layer " + std::to_string(i) +
                                       " expects " + std::to_string(ls.in) +
                                       " inputs, preceding output has " +
                                       std::to_string(flat_dim));
      }
      layer.w = store.add(base + ".w", uniform_fan_in(rng, ls.out, ls.in, ls.in));
      layer.b = store.add(base + ".b", uniform_fan_in(rng, ls.out, 1, ls.in));
      net.output_dim = ls.out;
      flat_dim = ls.out;
      shape = ad::ImageShape{};  // flat from here on
    } else {
      if (shape.size() == 0) {
        require(ls.view_height > 0 && ls.view_width > 0,
                prefix + ": convolution layer " + std::to_string(i) +
                    " follows a flat layer and needs a view shape");
        require(flat_dim == 0 || ls.in * ls.view_height * ls.view_width == flat_dim,
                prefix + ": view shape disagrees with preceding output size");
        shape = ad::ImageShape{ls.in, ls.view_height, ls.view_width};
      }
      require(shape.channels == ls.in,
              prefix + ": convolution layer " + std::to_string(i) + " expects " +
                  std::to_string(ls.in) + " channels, image has " +
                  std::to_string(shape.channels));
      layer.in_shape = shape;
      const int fan_in = ls.in * ls.kernel * ls.kernel;
      if (ls.transposed) {
        layer.w = store.add(base + ".w",
                            uniform_fan_in(rng, ls.in, ls.out * ls.kernel * ls.kernel, fan_in));
        shape = ad::conv2d_transpose_shape(shape, ls.out, ls.kernel, ls.stride, ls.padding);
      } else {
        layer.w = store.add(base + ".w",
                            uniform_fan_in(rng, ls.out, ls.in * ls.kernel * ls.kernel, fan_in));
        shape = ad::conv2d_shape(shape, ls.out, ls.kernel, ls.padding);
      }
      layer.b = store.add(base + ".b", uniform_fan_in(rng, ls.out, 1, fan_in));
      if (ls.batch_norm) {
        layer.bn_gamma = store.add(base + ".bn.gamma", Mat::Ones(ls.out, 1));
        layer.bn_beta = store.add(base + ".bn.beta", Mat::Zero(ls.out, 1));
      }
      if (ls.pool_kernel > 0) {
        shape = ad::max_pool2d_shape(shape, ls.pool_kernel, ls.pool_stride);
      }
      layer.out_shape = shape;
      net.output_dim = shape.size();
      flat_dim = shape.size();
    }
    net.layers.push_back(std::move(layer));
  }
  return net;
}

ad::Var Net::forward(const TapeBinding& bound, ad::Var x, bool training,
                     bool skip_final_activation) {
  for (std::size_t i = 0; i < layers.size(); ++i) {
    Layer& layer = layers[i];
    const LayerSpec& ls = layer.spec;
    const bool last = i + 1 == layers.size();
    if (ls.kind == LayerSpec::Kind::fully_connected) {
      x = ad::add_colvec(ad::matmul(bound[layer.w], x), bound[layer.b]);
    } else if (ls.transposed) {
      x = ad::conv2d_transpose(x, bound[layer.w], bound[layer.b], layer.in_shape, ls.out,
                               ls.kernel, ls.stride, ls.padding);
    } else {
      x = ad::conv2d(x, bound[layer.w], bound[layer.b], layer.in_shape, ls.kernel, ls.padding);
    }
    if (ls.kind == LayerSpec::Kind::convolution) {
      ad::ImageShape conv_shape =
          ls.transposed
              ? ad::conv2d_transpose_shape(layer.in_shape, ls.out, ls.kernel, ls.stride,
                                           ls.padding)
              : ad::conv2d_shape(layer.in_shape, ls.out, ls.kernel, ls.padding);
      if (ls.batch_norm) {
        x = ad::batch_norm2d(x, bound[layer.bn_gamma], bound[layer.bn_beta], conv_shape,
                             layer.bn_state, training);
      }
      if (!(last && skip_final_activation)) x = apply_activation(x, ls.activation);
      if (ls.pool_kernel > 0) {
        x = ad::max_pool2d(x, conv_shape, ls.pool_kernel, ls.pool_stride);
      }
    } else {
      if (!(last && skip_final_activation)) x = apply_activation(x, ls.activation);
    }
  }
  return x;
}

int ResponseSpec::params_per_component() const {
  if (kind == mixture::ResponseKind::categorical) return classes == 2 ? 1 : classes;
  return 2 * dim;
}

Encoder Encoder::create(ParamStore& store, const NetworkSpec& spec, ad::ImageShape input_image,
                        std::mt19937_64& rng) {
  spec.validate();
  Encoder enc;
  const LayerSpec head = spec.layers.back();
  require(head.kind == LayerSpec::Kind::fully_connected,
          "encoder: final spec layer must be fully connected (it sizes the Gaussian heads)");
  if (spec.layers.size() > 1) {
    NetworkSpec trunk_spec{std::vector<LayerSpec>(spec.layers.begin(), spec.layers.end() - 1)};
    enc.trunk = Net::create(store, trunk_spec, "encoder", input_image, rng);
  }
  enc.latent_dim = head.out;
  enc.w_mean = store.add("encoder.mean.w", uniform_fan_in(rng, head.out, head.in, head.in));
  enc.b_mean = store.add("encoder.mean.b", uniform_fan_in(rng, head.out, 1, head.in));
  enc.w_log_var = store.add("encoder.logvar.w", uniform_fan_in(rng, head.out, head.in, head.in));
  enc.b_log_var = store.add("encoder.logvar.b", uniform_fan_in(rng, head.out, 1, head.in));
  return enc;
}

Encoder::Output Encoder::forward(const TapeBinding& bound, ad::Var x, bool training) {
  ad::Var h = trunk.layers.empty() ? x : trunk.forward(bound, x, training);
  ad::Var mean = ad::add_colvec(ad::matmul(bound[w_mean], h), bound[b_mean]);
  ad::Var log_var =
      ad::clamp(ad::add_colvec(ad::matmul(bound[w_log_var], h), bound[b_log_var]), -20.0, 20.0);
  return Output{mean, log_var};
}

Decoder Decoder::create(ParamStore& store, const NetworkSpec& spec, ReconKind kind,
                        std::mt19937_64& rng) {
  NetworkSpec adjusted = spec;
  if (kind == ReconKind::bernoulli) {
    adjusted.layers.back().activation = Activation::identity;  // emit logits
  }
  Decoder dec;
  dec.kind = kind;
  dec.net = Net::create(store, adjusted, "decoder", ad::ImageShape{}, rng);
  return dec;
}

ad::Var Decoder::forward(const TapeBinding& bound, ad::Var z, bool training) {
  return net.forward(bound, z, training);
}

TaskHeadBank TaskHeadBank::create(ParamStore& store, const NetworkSpec& spec, int k,
                                  ResponseSpec response, TaskHeadMode mode,
                                  std::mt19937_64& rng) {
  spec.validate();
  require(k >= 1, "task heads: K must be >= 1");
  TaskHeadBank bank;
  bank.mode = mode;
  bank.response = response;
  bank.k = k;
  bank.mean_activation = spec.layers.back().activation;
  const int per = response.params_per_component();
  if (mode == TaskHeadMode::split_trunk) {
    NetworkSpec adjusted = spec;
    adjusted.layers.back().out = k * per;
    bank.nets.push_back(Net::create(store, adjusted, "task", ad::ImageShape{}, rng));
  } else {
    for (int c = 0; c < k; ++c) {
      NetworkSpec adjusted = spec;
      adjusted.layers.back().out = per;
      bank.nets.push_back(
          Net::create(store, adjusted, "task.h" + std::to_string(c), ad::ImageShape{}, rng));
    }
  }
  return bank;
}

std::vector<ad::Var> TaskHeadBank::forward_raw(const TapeBinding& bound, ad::Var z,
                                               bool training) {
  const int per = response.params_per_component();
  std::vector<ad::Var> blocks;
  blocks.reserve(k);
  if (mode == TaskHeadMode::split_trunk) {
    ad::Var all = nets[0].forward(bound, z, training, /*skip_final_activation=*/true);
    for (int c = 0; c < k; ++c) blocks.push_back(ad::rows(all, c * per, per));
  } else {
    for (int c = 0; c < k; ++c) {
      blocks.push_back(nets[c].forward(bound, z, training, /*skip_final_activation=*/true));
    }
  }
  return blocks;
}

PriorParams PriorParams::create(ParamStore& store, int k, int dim, std::mt19937_64& rng) {
  PriorParams p;
  p.k = k;
  p.dim = dim;
  std::normal_distribution<double> init(0.0, 0.5);
  Mat means(dim, k);
  for (Eigen::Index i = 0; i < means.size(); ++i) means.data()[i] = init(rng);
  p.pi_logits = store.add("prior.pi_logits", Mat::Zero(k, 1));
  p.means = store.add("prior.means", std::move(means));
  p.log_vars = store.add("prior.log_vars", Mat::Zero(dim, k));
  return p;
}

mixture::MixturePrior PriorParams::snapshot(const ParamStore& store) const {
  mixture::MixturePrior prior;
  prior.weights = softmax(store.entries[pi_logits].value.col(0));
  prior.means = store.entries[means].value.transpose();
  prior.log_vars = store.entries[log_vars].value.transpose();
  prior.validate();
  return prior;
}

void PriorParams::load(ParamStore& store, const mixture::MixturePrior& prior) const {
  require(prior.components() == k && prior.dim() == dim, "prior load: shape mismatch");
  store.entries[pi_logits].value = prior.weights.array().log().matrix();
  store.entries[means].value = prior.means.transpose();
  store.entries[log_vars].value = prior.log_vars.transpose();
}

Mat Model::normalize_input(const Mat& x) const {
  if (cfg.input_shift == 0.0 && cfg.input_scale == 1.0) return x;
  return ((x.array() + cfg.input_shift) * cfg.input_scale).matrix();
}

Mat Model::denormalize_output(const Mat& x) const {
  if (cfg.input_shift == 0.0 && cfg.input_scale == 1.0) return x;
  return (x.array() / cfg.input_scale - cfg.input_shift).matrix();
}

mixture::DiagonalGaussian Model::encode_one(const Vec& x) {
  auto [means, log_vars] = encode_batch(x);
  return mixture::DiagonalGaussian{means.col(0), log_vars.col(0)};
}

std::pair<Mat, Mat> Model::encode_batch(const Mat& x) {
  ad::Tape tape;
  TapeBinding bound = TapeBinding::bind(store, tape);
  ad::Var input = ad::leaf(tape, normalize_input(x));
  Encoder::Output out = encoder.forward(bound, input, /*training=*/false);
  return {out.mean.val(), out.log_var.val()};
}

Model build_model(const ModelConfig& cfg) {
  Model model;
  model.cfg = cfg;
  std::mt19937_64 rng = make_rng(cfg.init_seed, 0x6d6f64656cULL);
  model.encoder = Encoder::create(model.store, cfg.encoder_spec, cfg.input_image, rng);
  require(model.encoder.latent_dim == cfg.latent_dim,
          "model: encoder spec latent dimension disagrees with config");
  model.decoder = Decoder::create(model.store, cfg.decoder_spec, cfg.recon, rng);
  model.task = TaskHeadBank::create(model.store, cfg.task_spec, cfg.k, cfg.response,
                                    cfg.task_mode, rng);
  model.prior = PriorParams::create(model.store, cfg.k, cfg.latent_dim, rng);
  return model;
}

Vec reparameterize(const mixture::DiagonalGaussian& g, const Vec& noise) {
  require_dim(g.dim(), noise.size(), "reparameterize");
  return g.mean.array() + (0.5 * g.log_var.array()).exp() * noise.array();
}

std::vector<mixture::ResponseDistribution> task_forward(Model& model, const Vec& z) {
  ad::Tape tape;
  TapeBinding bound = TapeBinding::bind(model.store, tape);
  ad::Var zv = ad::leaf(tape, z);
  std::vector<ad::Var> raw = model.task.forward_raw(bound, zv, /*training=*/false);

  std::vector<mixture::ResponseDistribution> out;
  out.reserve(raw.size());
  for (ad::Var block : raw) {
    mixture::ResponseDistribution dist;
    dist.kind = model.cfg.response.kind;
    const Mat& v = block.val();
    if (dist.kind == mixture::ResponseKind::categorical) {
      if (model.cfg.response.classes == 2) {
        const double p = 1.0 / (1.0 + std::exp(-v(0, 0)));
        dist.probs = Vec(2);
        dist.probs << 1.0 - p, p;
      } else {
        dist.probs = softmax(v.col(0));
      }
    } else {
      const int dim = model.cfg.response.dim;
      dist.mean = v.col(0).head(dim);
      if (model.task.mean_activation == Activation::sigmoid) {
        dist.mean = dist.mean.unaryExpr([](double x) { return 1.0 / (1.0 + std::exp(-x)); });
      } else if (model.task.mean_activation == Activation::relu) {
        dist.mean = dist.mean.cwiseMax(0.0);
      }
      dist.log_var = v.col(0).tail(dim).cwiseMax(-20.0).cwiseMin(20.0);
    }
    out.push_back(std::move(dist));
  }
  return out;
}

std::vector<GeneratedSample> generate(Model& model, int n, std::uint64_t seed,
                                      const GenerateOptions& opts) {
  require(n > 0, "generate: n must be positive");
  std::mt19937_64 rng = make_rng(seed, 0x67656eULL);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);

  const mixture::MixturePrior prior = model.mixture_prior();
  const int d = prior.dim();

  std::vector<GeneratedSample> samples;
  samples.reserve(n);
  for (int i = 0; i < n; ++i) {
    GeneratedSample s;
    // c ~ Cat(pi) by inverse CDF.
    const double u = uniform(rng);
    double acc = 0.0;
    s.component = prior.components() - 1;
    for (int k = 0; k < prior.components(); ++k) {
      acc += prior.weights[k];
      if (u <= acc) {
        s.component = k;
        break;
      }
    }
    // z ~ N(mu_c, sigma_c^2).
    Vec noise(d);
    for (int j = 0; j < d; ++j) noise[j] = normal(rng);
    mixture::DiagonalGaussian comp{prior.means.row(s.component).transpose(),
                                   prior.log_vars.row(s.component).transpose()};
    s.z = reparameterize(comp, noise);
    samples.push_back(std::move(s));
  }

  // Batch the decoder and task passes.
  Mat zmat(d, n);
  for (int i = 0; i < n; ++i) zmat.col(i) = samples[i].z;
  ad::Tape tape;
  TapeBinding bound = TapeBinding::bind(model.store, tape);
  ad::Var zv = ad::leaf(tape, zmat);
  ad::Var recon = model.decoder.forward(bound, zv, /*training=*/false);
  std::vector<ad::Var> raw = model.task.forward_raw(bound, zv, /*training=*/false);

  for (int i = 0; i < n; ++i) {
    GeneratedSample& s = samples[i];
    Vec xv = recon.val().col(i);
    if (model.cfg.recon == ReconKind::bernoulli) {
      Vec probs = xv.unaryExpr([](double l) { return 1.0 / (1.0 + std::exp(-l)); });
      if (opts.sample_observations) {
        s.x = probs.unaryExpr([&](double p) { return uniform(rng) < p ? 1.0 : 0.0; });
      } else {
        s.x = probs;
      }
    } else {
      Vec mean = model.denormalize_output(xv);
      if (opts.sample_observations) {
        for (Eigen::Index j = 0; j < mean.size(); ++j) mean[j] += normal(rng);
      }
      s.x = mean;
    }

    const Mat& params = raw[s.component].val();
    if (model.cfg.response.kind == mixture::ResponseKind::categorical) {
      Vec probs;
      if (model.cfg.response.classes == 2) {
        const double p = 1.0 / (1.0 + std::exp(-params(0, i)));
        probs = Vec(2);
        probs << 1.0 - p, p;
      } else {
        probs = softmax(params.col(i));
      }
      if (opts.sample_observations) {
        const double uy = uniform(rng);
        double cacc = 0.0;
        int cls = static_cast<int>(probs.size()) - 1;
        for (int c = 0; c < probs.size(); ++c) {
          cacc += probs[c];
          if (uy <= cacc) {
            cls = c;
            break;
          }
        }
        s.y = Vec::Constant(1, static_cast<double>(cls));
      } else {
        s.y = probs;
      }
    } else {
      const int dim = model.cfg.response.dim;
      Vec mean = params.col(i).head(dim);
      if (model.task.mean_activation == Activation::sigmoid) {
        mean = mean.unaryExpr([](double x) { return 1.0 / (1.0 + std::exp(-x)); });
      }
      if (opts.sample_observations) {
        Vec lv = params.col(i).tail(dim).cwiseMax(-20.0).cwiseMin(20.0);
        for (int j = 0; j < dim; ++j) mean[j] += std::exp(0.5 * lv[j]) * normal(rng);
      }
      s.y = mean;
    }
  }
  return samples;
}

namespace {

LayerSpec fc(int in, int out, Activation act) {
  LayerSpec l;
  l.kind = LayerSpec::Kind::fully_connected;
  l.in = in;
  l.out = out;
  l.activation = act;
  return l;
}

LayerSpec conv(int in, int out, int kernel, Activation act, bool bn, int pool_kernel,
               int pool_stride, int padding) {
  LayerSpec l;
  l.kind = LayerSpec::Kind::convolution;
  l.in = in;
  l.out = out;
  l.kernel = kernel;
  l.padding = padding;
  l.activation = act;
  l.batch_norm = bn;
  l.pool_kernel = pool_kernel;
  l.pool_stride = pool_stride;
  return l;
}

LayerSpec tconv(int in, int out, int kernel, Activation act, bool bn, int stride, int padding,
                int view_h = 0, int view_w = 0) {
  LayerSpec l;
  l.kind = LayerSpec::Kind::convolution;
  l.transposed = true;
  l.in = in;
  l.out = out;
  l.kernel = kernel;
  l.stride = stride;
  l.padding = padding;
  l.activation = act;
  l.batch_norm = bn;
  l.view_height = view_h;
  l.view_width = view_w;
  return l;
}

constexpr auto S = Activation::sigmoid;
constexpr auto R = Activation::relu;

ModelConfig pacman_mlp(int k) {
  ModelConfig cfg;
  cfg.k = k;
  cfg.latent_dim = 60;
  cfg.encoder_spec.layers = {fc(2, 64, S), fc(64, 128, S), fc(128, 256, S), fc(256, 60, S)};
  cfg.decoder_spec.layers = {fc(60, 256, S), fc(256, 128, S), fc(128, 64, S), fc(64, 2, S)};
  cfg.task_spec.layers = {fc(60, 128, S), fc(128, k * 2, S)};
  cfg.recon = ReconKind::gaussian_unit_variance;
  cfg.response = ResponseSpec{mixture::ResponseKind::gaussian, 2, 1};
  cfg.task_mode = TaskHeadMode::split_trunk;
  // Coordinates live in [-1.2, 1.2]^2; the sigmoid decoder emits [0, 1].
  cfg.input_shift = 1.2;
  cfg.input_scale = 1.0 / 2.4;
  return cfg;
}

ModelConfig mnist_mlp(int k) {
  ModelConfig cfg;
  cfg.k = k;
  cfg.latent_dim = 10;
  cfg.encoder_spec.layers = {fc(784, 500, R), fc(500, 500, R), fc(500, 2000, R),
                             fc(2000, 10, R)};
  cfg.decoder_spec.layers = {fc(10, 2000, R), fc(2000, 500, R), fc(500, 500, R),
                             fc(500, 784, R)};
  cfg.task_spec.layers = {fc(10, k * 1, S)};
  cfg.recon = ReconKind::bernoulli;
  cfg.response = ResponseSpec{mixture::ResponseKind::categorical, 2, 1};
  cfg.task_mode = TaskHeadMode::split_trunk;
  return cfg;
}

ModelConfig svhn_conv(int k) {
  ModelConfig cfg;
  cfg.k = k;
  cfg.latent_dim = 256;
  cfg.input_image = ad::ImageShape{3, 32, 32};
  cfg.encoder_spec.layers = {
      conv(3, 48, 5, R, true, 2, 2, 2),    // 32 -> 16
      conv(48, 64, 5, R, true, 0, 0, 2),   // 16
      conv(64, 128, 5, R, true, 2, 2, 2),  // 16 -> 8
      conv(128, 160, 5, R, true, 0, 0, 2),
      conv(160, 192, 5, R, true, 2, 2, 2),  // 8 -> 4
      conv(192, 192, 5, R, true, 0, 0, 2),
      conv(192, 192, 5, R, true, 2, 2, 2),  // 4 -> 2
      conv(192, 192, 5, R, true, 0, 0, 2),
      fc(768, 3072, R),
      fc(3072, 256, R),
  };
  cfg.decoder_spec.layers = {
      fc(256, 3072, R),
      tconv(3072, 256, 4, R, true, 1, 0, 1, 1),  // 1x1 -> 4x4
      tconv(256, 128, 4, R, true, 2, 1),         // -> 8x8
      tconv(128, 64, 4, R, true, 2, 1),          // -> 16x16
      tconv(64, 3, 4, R, false, 2, 1),           // -> 32x32
  };
  cfg.task_spec.layers = {fc(256, 512, S), fc(512, 1024, S), fc(1024, 512, S), fc(512, 256, S),
                          fc(256, k * 10, S)};
  cfg.recon = ReconKind::bernoulli;
  cfg.response = ResponseSpec{mixture::ResponseKind::categorical, 10, 1};
  cfg.task_mode = TaskHeadMode::split_trunk;
  return cfg;
}

}  // namespace

bool is_known_preset(const std::string& name) {
  return name == "pacman-mlp" || name == "mnist-mlp" || name == "svhn-conv";
}

ModelConfig preset_model(const std::string& name, int k_override) {
  if (name == "pacman-mlp") return pacman_mlp(k_override > 0 ? k_override : 2);
  if (name == "mnist-mlp") return mnist_mlp(k_override > 0 ? k_override : 4);
  if (name == "svhn-conv") return svhn_conv(k_override > 0 ? k_override : 10);
  throw std::invalid_argument("unknown model preset: " + name);
}

}  // namespace dgc::nets
