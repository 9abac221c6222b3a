#pragma once

#include "dgc/common.hpp"

#include <functional>
#include <memory>
#include <vector>

namespace dgc::ad {

// Reverse-mode automatic differentiation over dense matrices. A Tape is
// built per forward pass; ops append nodes and capture parent indices in
// their backprop closures. Column layout: one sample per column, so a
// batch of d-vectors is a d x B matrix.
class Tape {
 public:
  struct Node {
    Mat value;
    Mat grad;  // lazily allocated on first accumulation
    std::function<void(Tape&)> backprop;
  };

  int push(Mat value, std::function<void(Tape&)> backprop = {});

  const Mat& value(int id) const { return nodes_[id].value; }
  // Gradient of the last backward() root w.r.t. node `id`; zero matrix if
  // the node does not influence the root.
  Mat grad(int id) const;
  Mat& grad_ref(int id);

  // Seeds the root (must be 1x1) with 1 and sweeps the tape in reverse.
  void backward(int root);

  std::size_t size() const { return nodes_.size(); }
  int next_id() const { return static_cast<int>(nodes_.size()); }
  void clear() { nodes_.clear(); }

 private:
  std::vector<Node> nodes_;
};

struct Var {
  Tape* tape = nullptr;
  int id = -1;

  const Mat& val() const { return tape->value(id); }
  Eigen::Index rows() const { return val().rows(); }
  Eigen::Index cols() const { return val().cols(); }
};

// Leaf nodes. Parameters and constants are mechanically identical; the
// caller decides whose gradients to read after backward().
Var leaf(Tape& tape, Mat value);

// Elementwise arithmetic (matching shapes).
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var neg(Var a);

// Scalar arithmetic.
Var scale(Var a, double s);
Var add_const(Var a, double c);

// Matrix product.
Var matmul(Var a, Var b);

// Broadcasts: v is r x 1 (per-row) or 1 x c (per-column) or 1 x 1.
Var add_colvec(Var x, Var v);   // x(r,c) + v(r,1) to every column
Var mul_colvec(Var x, Var v);   // x(r,c) .* v(r,1) to every column
Var add_rowvec(Var x, Var v);   // x(r,c) + v(1,c) to every row
Var add_scalar(Var x, Var s);   // x + s(1,1)

// Elementwise nonlinearities.
Var relu(Var a);
Var sigmoid(Var a);
Var exp_elem(Var a);
Var log_elem(Var a);
Var softplus_elem(Var a);
Var square(Var a);
Var clamp(Var a, double lo, double hi);  // gradient passes only inside [lo, hi]

// Reductions.
Var sum_all(Var a);       // 1 x 1
Var mean_all(Var a);      // 1 x 1
Var colwise_sum(Var a);   // 1 x c, sums over rows
Var rowwise_sum(Var a);   // r x 1, sums over columns
Var logsumexp_cols(Var a);  // 1 x c, stable logsumexp over the rows of each column

// Structure.
Var vstack(Tape& tape, const std::vector<Var>& rows);
Var rows(Var a, int first, int count);
Var cols(Var a, int first, int count);
Var detach(Var a);  // value passes through, gradient does not

// --- Image ops. Samples are columns holding channel-major [c][h][w] data. ---

struct ImageShape {
  int channels = 0;
  int height = 0;
  int width = 0;
  int size() const { return channels * height * width; }
};

// 2-D convolution, stride 1, square kernel, symmetric zero padding.
// x: (c_in*h*w) x B, w: c_out x (c_in*k*k), b: c_out x 1.
Var conv2d(Var x, Var w, Var b, ImageShape in, int kernel, int padding);
ImageShape conv2d_shape(ImageShape in, int c_out, int kernel, int padding);

// Transposed 2-D convolution. w: c_in x (c_out*k*k).
Var conv2d_transpose(Var x, Var w, Var b, ImageShape in, int c_out, int kernel, int stride,
                     int padding);
ImageShape conv2d_transpose_shape(ImageShape in, int c_out, int kernel, int stride, int padding);

// Max pooling with floor semantics: out = floor((n - k) / s) + 1.
Var max_pool2d(Var x, ImageShape in, int kernel, int stride);
ImageShape max_pool2d_shape(ImageShape in, int kernel, int stride);

// Per-channel batch normalization. gamma/beta are c x 1. In training mode
// batch statistics are used and running statistics are updated in place;
// in inference mode the running statistics are used.
struct BatchNormState {
  Vec running_mean;
  Vec running_var;
  double momentum = 0.1;
  double eps = 1e-5;
};
Var batch_norm2d(Var x, Var gamma, Var beta, ImageShape in, BatchNormState& state, bool training);

}  // namespace dgc::ad
