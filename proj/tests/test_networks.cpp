#include <doctest.h>

#include "dgc/networks.hpp"
#include "support/generators.hpp"
#include "support/gradcheck.hpp"

#include <cmath>
#include <random>

using namespace dgc;
using namespace dgc::nets;
using dgc::testing::random_matrix;
using dgc::testing::random_vector;

namespace {

ModelConfig tiny_config(int k = 2, int latent = 3, std::uint64_t seed = 7) {
  ModelConfig cfg;
  cfg.k = k;
  cfg.latent_dim = latent;
  cfg.encoder_spec.layers = {LayerSpec{.in = 4, .out = 6, .activation = Activation::sigmoid},
                             LayerSpec{.in = 6, .out = latent}};
  cfg.decoder_spec.layers = {LayerSpec{.in = latent, .out = 6, .activation = Activation::sigmoid},
                             LayerSpec{.in = 6, .out = 4, .activation = Activation::sigmoid}};
  cfg.task_spec.layers = {LayerSpec{.in = latent, .out = 5, .activation = Activation::sigmoid},
                          LayerSpec{.in = 5, .out = k, .activation = Activation::sigmoid}};
  cfg.recon = ReconKind::gaussian_unit_variance;
  cfg.response = ResponseSpec{mixture::ResponseKind::categorical, 2, 1};
  cfg.task_mode = TaskHeadMode::separate;
  cfg.init_seed = seed;
  return cfg;
}

// Layer-by-layer dense forward, independent of the tape machinery.
Mat manual_dense_forward(const ParamStore& store, const Net& net, Mat x, bool skip_final) {
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    const auto& layer = net.layers[i];
    x = (store.entries[layer.w].value * x).colwise() +
        Eigen::VectorXd(store.entries[layer.b].value.col(0));
    const bool last = i + 1 == net.layers.size();
    if (last && skip_final) break;
    switch (layer.spec.activation) {
      case Activation::relu: x = x.cwiseMax(0.0); break;
      case Activation::sigmoid:
        x = x.unaryExpr([](double v) { return 1.0 / (1.0 + std::exp(-v)); });
        break;
      case Activation::identity: break;
    }
  }
  return x;
}

}  // namespace

TEST_CASE("zero-weight encoder returns a standard normal posterior") {
  Model model = build_model(tiny_config());
  for (auto& e : model.store.entries) {
    if (e.name.rfind("encoder", 0) == 0) e.value.setZero();
  }
  mixture::DiagonalGaussian post = model.encode_one(Vec::Ones(4));
  CHECK(post.mean.cwiseAbs().maxCoeff() == 0.0);
  CHECK(post.log_var.cwiseAbs().maxCoeff() == 0.0);
  CHECK((post.variance().array() == 1.0).all());
}

TEST_CASE("pacman preset wires input dimension 2 to a 60-d latent") {
  ModelConfig cfg = preset_model("pacman-mlp");
  CHECK(cfg.encoder_spec.layers.front().in == 2);
  CHECK(cfg.latent_dim == 60);
  Model model = build_model(cfg);
  mixture::DiagonalGaussian post = model.encode_one(Vec::Zero(2));
  CHECK(post.dim() == 60);
  CHECK(cfg.decoder_spec.layers.back().out == 2);
}

TEST_CASE("encoder matches a manual layer-by-layer forward pass") {
  Model model = build_model(tiny_config());
  std::mt19937_64 rng(31);
  Mat x = random_matrix(rng, 4, 5);

  auto [mean, log_var] = model.encode_batch(x);
  Mat h = manual_dense_forward(model.store, model.encoder.trunk, x, false);
  Mat mean_expect = (model.store.entries[model.encoder.w_mean].value * h).colwise() +
                    Eigen::VectorXd(model.store.entries[model.encoder.b_mean].value.col(0));
  CHECK((mean - mean_expect).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("reparameterize anchors") {
  std::mt19937_64 rng(37);
  mixture::DiagonalGaussian g{random_vector(rng, 4), random_vector(rng, 4)};

  CHECK((reparameterize(g, Vec::Zero(4)) - g.mean).cwiseAbs().maxCoeff() == 0.0);

  mixture::DiagonalGaussian degenerate{g.mean, Vec::Constant(4, -20.0)};
  CHECK((reparameterize(degenerate, Vec::Ones(4)) - g.mean).cwiseAbs().maxCoeff() < 1e-4);

  CHECK_THROWS_AS(reparameterize(g, Vec::Zero(3)), std::invalid_argument);
}

TEST_CASE("reparameterize sample mean obeys the law of large numbers") {
  std::mt19937_64 rng(41);
  mixture::DiagonalGaussian g{Vec{{0.7, -1.3}}, Vec{{std::log(0.5), std::log(2.0)}}};
  const int n = 100000;
  Vec acc = Vec::Zero(2);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (int i = 0; i < n; ++i) {
    Vec noise(2);
    noise << normal(rng), normal(rng);
    acc += reparameterize(g, noise);
  }
  Vec sample_mean = acc / n;
  for (int j = 0; j < 2; ++j) {
    const double sigma = std::sqrt(g.variance()[j]);
    CHECK(std::abs(sample_mean[j] - g.mean[j]) < 3.0 * sigma / std::sqrt(double(n)));
  }
}

TEST_CASE("identity-initialized linear decoder reproduces z") {
  ParamStore store;
  std::mt19937_64 rng(43);
  NetworkSpec spec{{LayerSpec{.in = 3, .out = 3, .activation = Activation::identity}}};
  Decoder dec = Decoder::create(store, spec, ReconKind::gaussian_unit_variance, rng);
  store.entries[dec.net.layers[0].w].value = Mat::Identity(3, 3);
  store.entries[dec.net.layers[0].b].value.setZero();

  ad::Tape tape;
  TapeBinding bound = TapeBinding::bind(store, tape);
  Mat z = random_matrix(rng, 3, 4);
  ad::Var out = dec.forward(bound, ad::leaf(tape, z), false);
  CHECK((out.val() - z).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("decoder matches the manual forward oracle") {
  Model model = build_model(tiny_config());
  std::mt19937_64 rng(47);
  Mat z = random_matrix(rng, 3, 6);

  ad::Tape tape;
  TapeBinding bound = TapeBinding::bind(model.store, tape);
  ad::Var out = model.decoder.forward(bound, ad::leaf(tape, z), false);
  Mat expect = manual_dense_forward(model.store, model.decoder.net, z, false);
  CHECK((out.val() - expect).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("task heads with identical parameters emit identical outputs") {
  Model model = build_model(tiny_config(3));
  // Copy head 0 parameters into heads 1 and 2.
  for (int c = 1; c < 3; ++c) {
    for (std::size_t l = 0; l < model.task.nets[0].layers.size(); ++l) {
      model.store.entries[model.task.nets[c].layers[l].w].value =
          model.store.entries[model.task.nets[0].layers[l].w].value;
      model.store.entries[model.task.nets[c].layers[l].b].value =
          model.store.entries[model.task.nets[0].layers[l].b].value;
    }
  }
  std::mt19937_64 rng(53);
  auto dists = task_forward(model, random_vector(rng, 3));
  REQUIRE(dists.size() == 3);
  CHECK((dists[0].probs - dists[1].probs).cwiseAbs().maxCoeff() == 0.0);
  CHECK((dists[0].probs - dists[2].probs).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("categorical task outputs normalize to a simplex") {
  ModelConfig cfg = tiny_config(4);
  cfg.response.classes = 5;
  cfg.task_mode = TaskHeadMode::split_trunk;
  Model model = build_model(cfg);
  std::mt19937_64 rng(59);
  for (int trial = 0; trial < 20; ++trial) {
    auto dists = task_forward(model, random_vector(rng, 3, 2.0));
    for (const auto& d : dists) {
      CHECK(d.probs.size() == 5);
      CHECK(std::abs(d.probs.sum() - 1.0) < 1e-6);
      CHECK(d.probs.minCoeff() >= 0.0);
    }
  }
}

TEST_CASE("split-trunk task bank matches the manual forward oracle") {
  ModelConfig cfg = tiny_config(2);
  cfg.task_mode = TaskHeadMode::split_trunk;
  Model model = build_model(cfg);
  std::mt19937_64 rng(61);
  Mat z = random_matrix(rng, 3, 4);

  ad::Tape tape;
  TapeBinding bound = TapeBinding::bind(model.store, tape);
  auto blocks = model.task.forward_raw(bound, ad::leaf(tape, z), false);
  Mat expect = manual_dense_forward(model.store, model.task.nets[0], z, true);
  REQUIRE(blocks.size() == 2);
  CHECK((blocks[0].val() - expect.topRows(1)).cwiseAbs().maxCoeff() < 1e-6);
  CHECK((blocks[1].val() - expect.bottomRows(1)).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("generate with a one-hot prior emits a single component") {
  Model model = build_model(tiny_config(3));
  Mat logits(3, 1);
  logits << -40.0, 40.0, -40.0;
  model.store.entries[model.prior.pi_logits].value = logits;
  auto samples = generate(model, 64, 5);
  for (const auto& s : samples) CHECK(s.component == 1);
  CHECK_THROWS_AS(generate(model, 0, 5), std::invalid_argument);
}

TEST_CASE("generate component frequencies concentrate around the prior weights") {
  Model model = build_model(tiny_config(3));
  Mat logits(3, 1);
  logits << std::log(0.2), std::log(0.3), std::log(0.5);
  model.store.entries[model.prior.pi_logits].value = logits;

  const int n = 100000;
  auto samples = generate(model, n, 11);
  Vec counts = Vec::Zero(3);
  for (const auto& s : samples) counts[s.component] += 1.0;
  const Vec pi = model.mixture_prior().weights;
  for (int k = 0; k < 3; ++k) {
    const double freq = counts[k] / n;
    const double sigma = std::sqrt(pi[k] * (1.0 - pi[k]) / n);
    CHECK(std::abs(freq - pi[k]) < 3.0 * sigma);
  }
}

TEST_CASE("generation is deterministic given a seed") {
  Model model = build_model(tiny_config(2));
  auto a = generate(model, 32, 99);
  auto b = generate(model, 32, 99);
  for (int i = 0; i < 32; ++i) {
    CHECK(a[i].component == b[i].component);
    CHECK((a[i].z - b[i].z).cwiseAbs().maxCoeff() == 0.0);
    CHECK((a[i].x - b[i].x).cwiseAbs().maxCoeff() == 0.0);
    CHECK((a[i].y - b[i].y).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("dense network family passes the end-to-end parameter gradient check") {
  ParamStore store;
  std::mt19937_64 rng(67);
  NetworkSpec spec{{LayerSpec{.in = 3, .out = 4, .activation = Activation::sigmoid},
                    LayerSpec{.in = 4, .out = 2, .activation = Activation::sigmoid}}};
  Net net = Net::create(store, spec, "probe", ad::ImageShape{}, rng);
  Mat x = random_matrix(rng, 3, 5);

  std::vector<Mat> leaves;
  for (const auto& e : store.entries) leaves.push_back(e.value);
  const double err = dgc::testing::gradcheck(
      [&](ad::Tape& t, const std::vector<ad::Var>& vars) {
        TapeBinding bound;
        bound.tape = &t;
        bound.vars = vars;
        Net probe = net;
        return ad::mean_all(ad::square(probe.forward(bound, ad::leaf(t, x), true)));
      },
      leaves, 1e-5);
  CHECK(err < 1e-3);
}

TEST_CASE("convolution network family passes the end-to-end parameter gradient check") {
  ParamStore store;
  std::mt19937_64 rng(71);
  LayerSpec c1;
  c1.kind = LayerSpec::Kind::convolution;
  c1.in = 1;
  c1.out = 2;
  c1.kernel = 3;
  c1.padding = 1;
  c1.activation = Activation::sigmoid;
  c1.batch_norm = true;
  c1.pool_kernel = 2;
  c1.pool_stride = 2;
  NetworkSpec spec{{c1, LayerSpec{.in = 8, .out = 3, .activation = Activation::sigmoid}}};
  Net net = Net::create(store, spec, "probe", ad::ImageShape{1, 4, 4}, rng);
  Mat x = random_matrix(rng, 16, 3);

  std::vector<Mat> leaves;
  for (const auto& e : store.entries) leaves.push_back(e.value);
  const double err = dgc::testing::gradcheck(
      [&](ad::Tape& t, const std::vector<ad::Var>& vars) {
        TapeBinding bound;
        bound.tape = &t;
        bound.vars = vars;
        Net probe = net;  // fresh batch-norm state per probe
        return ad::mean_all(ad::square(probe.forward(bound, ad::leaf(t, x), true)));
      },
      leaves, 1e-5);
  CHECK(err < 1e-3);
}

TEST_CASE("decode(encode(x) mean) keeps the input shape for the presets") {
  for (const char* name : {"pacman-mlp", "mnist-mlp"}) {
    ModelConfig cfg = preset_model(name);
    Model model = build_model(cfg);
    const int in_dim = cfg.input_image.size() > 0 ? cfg.input_image.size()
                                                  : cfg.encoder_spec.layers.front().in;
    Mat x = Mat::Constant(in_dim, 2, 0.5);
    auto [mean, log_var] = model.encode_batch(x);
    CHECK(mean.rows() == cfg.latent_dim);

    ad::Tape tape;
    TapeBinding bound = TapeBinding::bind(model.store, tape);
    ad::Var recon = model.decoder.forward(bound, ad::leaf(tape, mean), false);
    CHECK(recon.val().rows() == x.rows());
    CHECK(recon.val().cols() == x.cols());
  }
}

TEST_CASE("svhn preset constructs and round-trips shapes") {
  ModelConfig cfg = preset_model("svhn-conv");
  Model model = build_model(cfg);
  Mat x = Mat::Constant(3 * 32 * 32, 1, 0.3);
  auto [mean, log_var] = model.encode_batch(x);
  CHECK(mean.rows() == 256);

  ad::Tape tape;
  TapeBinding bound = TapeBinding::bind(model.store, tape);
  ad::Var recon = model.decoder.forward(bound, ad::leaf(tape, mean), false);
  CHECK(recon.val().rows() == x.rows());
}

TEST_CASE("unknown presets and invalid specs are rejected") {
  CHECK_THROWS_AS(preset_model("resnet-152"), std::invalid_argument);
  CHECK(is_known_preset("svhn-conv"));
  CHECK_FALSE(is_known_preset("svhn"));

  NetworkSpec bad{{LayerSpec{.in = 3, .out = 4}, LayerSpec{.in = 5, .out = 2}}};
  CHECK_THROWS_WITH_AS(bad.validate(), doctest::Contains("emits 4"), std::invalid_argument);
}
