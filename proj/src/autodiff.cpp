#include "dgc/autodiff.hpp"

#include <cmath>
#include <limits>
#include <memory>

namespace dgc::ad {

namespace {

void check_same_shape(Var a, Var b, const char* op) {
  require(a.tape == b.tape, "autodiff: operands live on different tapes");
  require(a.rows() == b.rows() && a.cols() == b.cols(),
          std::string("autodiff: shape mismatch in ") + op);
}

}  // namespace

int Tape::push(Mat value, std::function<void(Tape&)> backprop) {
  nodes_.push_back(Node{std::move(value), Mat(), std::move(backprop)});
  return static_cast<int>(nodes_.size()) - 1;
}

Mat Tape::grad(int id) const {
  const Node& n = nodes_[id];
  if (n.grad.size() == 0) return Mat::Zero(n.value.rows(), n.value.cols());
  return n.grad;
}

Mat& Tape::grad_ref(int id) {
  Node& n = nodes_[id];
  if (n.grad.size() == 0) n.grad = Mat::Zero(n.value.rows(), n.value.cols());
  return n.grad;
}

void Tape::backward(int root) {
  require(root >= 0 && root < next_id(), "backward: bad root id");
  require(nodes_[root].value.size() == 1, "backward: root must be scalar");
  grad_ref(root)(0, 0) = 1.0;
  for (int id = root; id >= 0; --id) {
    Node& n = nodes_[id];
    if (n.grad.size() != 0 && n.backprop) n.backprop(*this);
  }
}

Var leaf(Tape& tape, Mat value) { return Var{&tape, tape.push(std::move(value))}; }

Var add(Var a, Var b) {
  check_same_shape(a, b, "add");
  Tape& t = *a.tape;
  const int ia = a.id, ib = b.id, out = t.next_id();
  t.push(a.val() + b.val(), [ia, ib, out](Tape& t) {
    const Mat& g = t.grad_ref(out);
    t.grad_ref(ia) += g;
    t.grad_ref(ib) += g;
  });
  return {&t, out};
}

Var sub(Var a, Var b) {
  check_same_shape(a, b, "sub");
  Tape& t = *a.tape;
  const int ia = a.id, ib = b.id, out = t.next_id();
  t.push(a.val() - b.val(), [ia, ib, out](Tape& t) {
    const Mat& g = t.grad_ref(out);
    t.grad_ref(ia) += g;
    t.grad_ref(ib) -= g;
  });
  return {&t, out};
}

Var mul(Var a, Var b) {
  check_same_shape(a, b, "mul");
  Tape& t = *a.tape;
  const int ia = a.id, ib = b.id, out = t.next_id();
  t.push(a.val().cwiseProduct(b.val()), [ia, ib, out](Tape& t) {
    const Mat& g = t.grad_ref(out);
    t.grad_ref(ia) += g.cwiseProduct(t.value(ib));
    t.grad_ref(ib) += g.cwiseProduct(t.value(ia));
  });
  return {&t, out};
}

Var neg(Var a) { return scale(a, -1.0); }

Var scale(Var a, double s) {
  Tape& t = *a.tape;
  const int ia = a.id, out = t.next_id();
  t.push(a.val() * s, [ia, out, s](Tape& t) { t.grad_ref(ia) += s * t.grad_ref(out); });
  return {&t, out};
}

Var add_const(Var a, double c) {
  Tape& t = *a.tape;
  const int ia = a.id, out = t.next_id();
  t.push(a.val().array() + c, [ia, out](Tape& t) { t.grad_ref(ia) += t.grad_ref(out); });
  return {&t, out};
}

Var matmul(Var a, Var b) {
  require(a.tape == b.tape, "autodiff: operands live on different tapes");
  require(a.cols() == b.rows(), "autodiff: inner dimension mismatch in matmul");
  Tape& t = *a.tape;
  const int ia = a.id, ib = b.id, out = t.next_id();
  t.push(a.val() * b.val(), [ia, ib, out](Tape& t) {
    const Mat& g = t.grad_ref(out);
    t.grad_ref(ia) += g * t.value(ib).transpose();
    t.grad_ref(ib) += t.value(ia).transpose() * g;
  });
  return {&t, out};
}

Var add_colvec(Var x, Var v) {
  require(x.tape == v.tape && v.cols() == 1 && v.rows() == x.rows(),
          "autodiff: add_colvec expects v of shape rows(x) x 1");
  Tape& t = *x.tape;
  const int ix = x.id, iv = v.id, out = t.next_id();
  t.push(x.val().colwise() + Eigen::VectorXd(v.val().col(0)), [ix, iv, out](Tape& t) {
    const Mat& g = t.grad_ref(out);
    t.grad_ref(ix) += g;
    t.grad_ref(iv) += g.rowwise().sum();
  });
  return {&t, out};
}

Var mul_colvec(Var x, Var v) {
  require(x.tape == v.tape && v.cols() == 1 && v.rows() == x.rows(),
          "autodiff: mul_colvec expects v of shape rows(x) x 1");
  Tape& t = *x.tape;
  const int ix = x.id, iv = v.id, out = t.next_id();
  t.push(x.val().array().colwise() * v.val().col(0).array(), [ix, iv, out](Tape& t) {
    const Mat& g = t.grad_ref(out);
    t.grad_ref(ix) += (g.array().colwise() * t.value(iv).col(0).array()).matrix();
    t.grad_ref(iv) += g.cwiseProduct(t.value(ix)).rowwise().sum();
  });
  return {&t, out};
}

Var add_rowvec(Var x, Var v) {
  require(x.tape == v.tape && v.rows() == 1 && v.cols() == x.cols(),
          "autodiff: add_rowvec expects v of shape 1 x cols(x)");
  Tape& t = *x.tape;
  const int ix = x.id, iv = v.id, out = t.next_id();
  t.push(x.val().rowwise() + Eigen::RowVectorXd(v.val().row(0)), [ix, iv, out](Tape& t) {
    const Mat& g = t.grad_ref(out);
    t.grad_ref(ix) += g;
    t.grad_ref(iv) += g.colwise().sum();
  });
  return {&t, out};
}

Var add_scalar(Var x, Var s) {
  require(x.tape == s.tape && s.rows() == 1 && s.cols() == 1,
          "autodiff: add_scalar expects a 1x1 second operand");
  Tape& t = *x.tape;
  const int ix = x.id, is = s.id, out = t.next_id();
  t.push(x.val().array() + s.val()(0, 0), [ix, is, out](Tape& t) {
    const Mat& g = t.grad_ref(out);
    t.grad_ref(ix) += g;
    t.grad_ref(is)(0, 0) += g.sum();
  });
  return {&t, out};
}

Var relu(Var a) {
  Tape& t = *a.tape;
  const int ia = a.id, out = t.next_id();
  t.push(a.val().cwiseMax(0.0), [ia, out](Tape& t) {
    const Mat mask = (t.value(ia).array() > 0.0).cast<double>();
    t.grad_ref(ia) += t.grad_ref(out).cwiseProduct(mask);
  });
  return {&t, out};
}

Var sigmoid(Var a) {
  Tape& t = *a.tape;
  Mat s = a.val().unaryExpr([](double x) { return 1.0 / (1.0 + std::exp(-x)); });
  const int ia = a.id, out = t.next_id();
  t.push(std::move(s), [ia, out](Tape& t) {
    const Mat& y = t.value(out);
    t.grad_ref(ia) +=
        t.grad_ref(out).cwiseProduct(y.cwiseProduct((1.0 - y.array()).matrix()));
  });
  return {&t, out};
}

Var exp_elem(Var a) {
  Tape& t = *a.tape;
  const int ia = a.id, out = t.next_id();
  t.push(a.val().array().exp(), [ia, out](Tape& t) {
    t.grad_ref(ia) += t.grad_ref(out).cwiseProduct(t.value(out));
  });
  return {&t, out};
}

Var log_elem(Var a) {
  Tape& t = *a.tape;
  const int ia = a.id, out = t.next_id();
  t.push(a.val().array().log(), [ia, out](Tape& t) {
    t.grad_ref(ia) += t.grad_ref(out).cwiseQuotient(t.value(ia));
  });
  return {&t, out};
}

Var softplus_elem(Var a) {
  Tape& t = *a.tape;
  Mat s = a.val().unaryExpr([](double x) { return softplus(x); });
  const int ia = a.id, out = t.next_id();
  t.push(std::move(s), [ia, out](Tape& t) {
    const Mat sig = t.value(ia).unaryExpr([](double x) { return 1.0 / (1.0 + std::exp(-x)); });
    t.grad_ref(ia) += t.grad_ref(out).cwiseProduct(sig);
  });
  return {&t, out};
}

Var square(Var a) {
  Tape& t = *a.tape;
  const int ia = a.id, out = t.next_id();
  t.push(a.val().array().square(), [ia, out](Tape& t) {
    t.grad_ref(ia) += 2.0 * t.grad_ref(out).cwiseProduct(t.value(ia));
  });
  return {&t, out};
}

Var clamp(Var a, double lo, double hi) {
  Tape& t = *a.tape;
  const int ia = a.id, out = t.next_id();
  t.push(a.val().cwiseMax(lo).cwiseMin(hi), [ia, out, lo, hi](Tape& t) {
    const Mat mask =
        ((t.value(ia).array() >= lo) && (t.value(ia).array() <= hi)).cast<double>();
    t.grad_ref(ia) += t.grad_ref(out).cwiseProduct(mask);
  });
  return {&t, out};
}

Var sum_all(Var a) {
  Tape& t = *a.tape;
  const int ia = a.id, out = t.next_id();
  Mat v(1, 1);
  v(0, 0) = a.val().sum();
  t.push(std::move(v),
         [ia, out](Tape& t) { t.grad_ref(ia).array() += t.grad_ref(out)(0, 0); });
  return {&t, out};
}

Var mean_all(Var a) { return scale(sum_all(a), 1.0 / static_cast<double>(a.val().size())); }

Var colwise_sum(Var a) {
  Tape& t = *a.tape;
  const int ia = a.id, out = t.next_id();
  t.push(a.val().colwise().sum(), [ia, out](Tape& t) {
    const Mat& g = t.grad_ref(out);  // 1 x c
    t.grad_ref(ia).rowwise() += Eigen::RowVectorXd(g.row(0));
  });
  return {&t, out};
}

Var rowwise_sum(Var a) {
  Tape& t = *a.tape;
  const int ia = a.id, out = t.next_id();
  t.push(a.val().rowwise().sum(), [ia, out](Tape& t) {
    const Mat& g = t.grad_ref(out);  // r x 1
    t.grad_ref(ia).colwise() += Eigen::VectorXd(g.col(0));
  });
  return {&t, out};
}

Var logsumexp_cols(Var a) {
  Tape& t = *a.tape;
  const Mat& x = a.val();
  Mat out_val(1, x.cols());
  for (Eigen::Index c = 0; c < x.cols(); ++c) {
    const double m = x.col(c).maxCoeff();
    out_val(0, c) = m + std::log((x.col(c).array() - m).exp().sum());
  }
  const int ia = a.id, out = t.next_id();
  t.push(std::move(out_val), [ia, out](Tape& t) {
    const Mat& g = t.grad_ref(out);
    const Mat& x = t.value(ia);
    const Mat& lse = t.value(out);
    Mat& ga = t.grad_ref(ia);
    for (Eigen::Index c = 0; c < x.cols(); ++c) {
      ga.col(c) += g(0, c) * (x.col(c).array() - lse(0, c)).exp().matrix();
    }
  });
  return {&t, out};
}

Var vstack(Tape& tape, const std::vector<Var>& parts) {
  require(!parts.empty(), "autodiff: vstack of nothing");
  Eigen::Index total = 0;
  const Eigen::Index width = parts[0].cols();
  for (Var p : parts) {
    require(p.tape == &tape && p.cols() == width, "autodiff: vstack parts disagree");
    total += p.rows();
  }
  Mat v(total, width);
  std::vector<std::pair<int, Eigen::Index>> layout;  // (id, first row)
  Eigen::Index at = 0;
  for (Var p : parts) {
    v.middleRows(at, p.rows()) = p.val();
    layout.emplace_back(p.id, at);
    at += p.rows();
  }
  const int out = tape.next_id();
  tape.push(std::move(v), [layout, out](Tape& t) {
    const Mat& g = t.grad_ref(out);
    for (const auto& [id, first] : layout) {
      Mat& gi = t.grad_ref(id);
      gi += g.middleRows(first, gi.rows());
    }
  });
  return {&tape, out};
}

Var rows(Var a, int first, int count) {
  require(first >= 0 && count >= 1 && first + count <= a.rows(), "autodiff: rows out of range");
  Tape& t = *a.tape;
  const int ia = a.id, out = t.next_id();
  t.push(a.val().middleRows(first, count), [ia, out, first, count](Tape& t) {
    t.grad_ref(ia).middleRows(first, count) += t.grad_ref(out);
  });
  return {&t, out};
}

Var cols(Var a, int first, int count) {
  require(first >= 0 && count >= 1 && first + count <= a.cols(), "autodiff: cols out of range");
  Tape& t = *a.tape;
  const int ia = a.id, out = t.next_id();
  t.push(a.val().middleCols(first, count), [ia, out, first, count](Tape& t) {
    t.grad_ref(ia).middleCols(first, count) += t.grad_ref(out);
  });
  return {&t, out};
}

Var detach(Var a) {
  Tape& t = *a.tape;
  return {&t, t.push(a.val())};
}

// --------------------------------------------------------------------------
// Image ops
// --------------------------------------------------------------------------

ImageShape conv2d_shape(ImageShape in, int c_out, int kernel, int padding) {
  const int h = in.height + 2 * padding - kernel + 1;
  const int w = in.width + 2 * padding - kernel + 1;
  require(h >= 1 && w >= 1, "conv2d: kernel larger than padded input");
  return ImageShape{c_out, h, w};
}

namespace {

// (c_in*k*k) x (h_out*w_out) patch matrix for one sample, stride 1.
Mat im2col(const Eigen::Ref<const Eigen::VectorXd>& sample, ImageShape in, int kernel,
           int padding, ImageShape out) {
  Mat col = Mat::Zero(static_cast<Eigen::Index>(in.channels) * kernel * kernel,
                      static_cast<Eigen::Index>(out.height) * out.width);
  for (int c = 0; c < in.channels; ++c) {
    for (int dy = 0; dy < kernel; ++dy) {
      for (int dx = 0; dx < kernel; ++dx) {
        const int row = (c * kernel + dy) * kernel + dx;
        for (int ho = 0; ho < out.height; ++ho) {
          const int hi = ho - padding + dy;
          if (hi < 0 || hi >= in.height) continue;
          for (int wo = 0; wo < out.width; ++wo) {
            const int wi = wo - padding + dx;
            if (wi < 0 || wi >= in.width) continue;
            col(row, ho * out.width + wo) = sample[(c * in.height + hi) * in.width + wi];
          }
        }
      }
    }
  }
  return col;
}

void col2im_accumulate(const Mat& col, ImageShape in, int kernel, int padding, ImageShape out,
                       Eigen::Ref<Eigen::MatrixXd> grad, Eigen::Index sample) {
  for (int c = 0; c < in.channels; ++c) {
    for (int dy = 0; dy < kernel; ++dy) {
      for (int dx = 0; dx < kernel; ++dx) {
        const int row = (c * kernel + dy) * kernel + dx;
        for (int ho = 0; ho < out.height; ++ho) {
          const int hi = ho - padding + dy;
          if (hi < 0 || hi >= in.height) continue;
          for (int wo = 0; wo < out.width; ++wo) {
            const int wi = wo - padding + dx;
            if (wi < 0 || wi >= in.width) continue;
            grad((c * in.height + hi) * in.width + wi, sample) += col(row, ho * out.width + wo);
          }
        }
      }
    }
  }
}

}  // namespace

Var conv2d(Var x, Var w, Var b, ImageShape in, int kernel, int padding) {
  Tape& t = *x.tape;
  const ImageShape out_shape = conv2d_shape(in, static_cast<int>(w.rows()), kernel, padding);
  require(x.rows() == in.size(), "conv2d: input rows disagree with shape");
  require(w.cols() == static_cast<Eigen::Index>(in.channels) * kernel * kernel,
          "conv2d: weight columns disagree with c_in*k*k");
  require(b.rows() == w.rows() && b.cols() == 1, "conv2d: bias shape");

  const Eigen::Index batch = x.cols();
  const Eigen::Index spatial = static_cast<Eigen::Index>(out_shape.height) * out_shape.width;
  auto cols_cache = std::make_shared<std::vector<Mat>>();
  cols_cache->reserve(batch);

  Mat out_val(out_shape.size(), batch);
  for (Eigen::Index s = 0; s < batch; ++s) {
    Mat col = im2col(x.val().col(s), in, kernel, padding, out_shape);
    Mat res = w.val() * col;  // c_out x spatial
    res.colwise() += Eigen::VectorXd(b.val().col(0));
    for (int c = 0; c < out_shape.channels; ++c) {
      out_val.col(s).segment(static_cast<Eigen::Index>(c) * spatial, spatial) =
          res.row(c).transpose();
    }
    cols_cache->push_back(std::move(col));
  }

  const int ix = x.id, iw = w.id, ib = b.id, out = t.next_id();
  t.push(std::move(out_val),
         [ix, iw, ib, out, in, kernel, padding, out_shape, spatial, cols_cache](Tape& t) {
           const Mat& g = t.grad_ref(out);
           Mat& gx = t.grad_ref(ix);
           Mat& gw = t.grad_ref(iw);
           Mat& gb = t.grad_ref(ib);
           const Mat& wv = t.value(iw);
           for (Eigen::Index s = 0; s < g.cols(); ++s) {
             Mat gres(out_shape.channels, spatial);
             for (int c = 0; c < out_shape.channels; ++c) {
               gres.row(c) =
                   g.col(s).segment(static_cast<Eigen::Index>(c) * spatial, spatial).transpose();
             }
             gw += gres * (*cols_cache)[s].transpose();
             gb += gres.rowwise().sum();
             const Mat gcol = wv.transpose() * gres;
             col2im_accumulate(gcol, in, kernel, padding, out_shape, gx, s);
           }
         });
  return {&t, out};
}

ImageShape conv2d_transpose_shape(ImageShape in, int c_out, int kernel, int stride, int padding) {
  const int h = (in.height - 1) * stride + kernel - 2 * padding;
  const int w = (in.width - 1) * stride + kernel - 2 * padding;
  require(h >= 1 && w >= 1, "conv2d_transpose: degenerate output");
  return ImageShape{c_out, h, w};
}

Var conv2d_transpose(Var x, Var w, Var b, ImageShape in, int c_out, int kernel, int stride,
                     int padding) {
  Tape& t = *x.tape;
  const ImageShape out_shape = conv2d_transpose_shape(in, c_out, kernel, stride, padding);
  require(x.rows() == in.size(), "conv2d_transpose: input rows disagree with shape");
  require(w.rows() == in.channels &&
              w.cols() == static_cast<Eigen::Index>(c_out) * kernel * kernel,
          "conv2d_transpose: weight shape must be c_in x (c_out*k*k)");
  require(b.rows() == c_out && b.cols() == 1, "conv2d_transpose: bias shape");

  const Eigen::Index batch = x.cols();
  const Eigen::Index out_hw = static_cast<Eigen::Index>(out_shape.height) * out_shape.width;
  Mat out_val = Mat::Zero(out_shape.size(), batch);
  for (Eigen::Index s = 0; s < batch; ++s) {
    for (int ci = 0; ci < in.channels; ++ci) {
      for (int hi = 0; hi < in.height; ++hi) {
        for (int wi = 0; wi < in.width; ++wi) {
          const double xv = x.val()((ci * in.height + hi) * in.width + wi, s);
          for (int co = 0; co < c_out; ++co) {
            for (int dy = 0; dy < kernel; ++dy) {
              const int ho = hi * stride + dy - padding;
              if (ho < 0 || ho >= out_shape.height) continue;
              for (int dx = 0; dx < kernel; ++dx) {
                const int wo = wi * stride + dx - padding;
                if (wo < 0 || wo >= out_shape.width) continue;
                out_val((co * out_shape.height + ho) * out_shape.width + wo, s) +=
                    xv * w.val()(ci, (co * kernel + dy) * kernel + dx);
              }
            }
          }
        }
      }
    }
    for (int co = 0; co < c_out; ++co) {
      out_val.col(s).segment(co * out_hw, out_hw).array() += b.val()(co, 0);
    }
  }

  const int ix = x.id, iw = w.id, ib = b.id, out = t.next_id();
  t.push(std::move(out_val),
         [ix, iw, ib, out, in, c_out, kernel, stride, padding, out_shape, out_hw](Tape& t) {
           const Mat& g = t.grad_ref(out);
           Mat& gx = t.grad_ref(ix);
           Mat& gw = t.grad_ref(iw);
           Mat& gb = t.grad_ref(ib);
           const Mat& wv = t.value(iw);
           const Mat& xv = t.value(ix);
           for (Eigen::Index s = 0; s < g.cols(); ++s) {
             for (int co = 0; co < c_out; ++co) {
               gb(co, 0) += g.col(s).segment(co * out_hw, out_hw).sum();
             }
             for (int ci = 0; ci < in.channels; ++ci) {
               for (int hi = 0; hi < in.height; ++hi) {
                 for (int wi = 0; wi < in.width; ++wi) {
                   const Eigen::Index xidx = (ci * in.height + hi) * in.width + wi;
                   double acc = 0.0;
                   for (int co = 0; co < c_out; ++co) {
                     for (int dy = 0; dy < kernel; ++dy) {
                       const int ho = hi * stride + dy - padding;
                       if (ho < 0 || ho >= out_shape.height) continue;
                       for (int dx = 0; dx < kernel; ++dx) {
                         const int wo = wi * stride + dx - padding;
                         if (wo < 0 || wo >= out_shape.width) continue;
                         const double gv =
                             g((co * out_shape.height + ho) * out_shape.width + wo, s);
                         acc += gv * wv(ci, (co * kernel + dy) * kernel + dx);
                         gw(ci, (co * kernel + dy) * kernel + dx) += gv * xv(xidx, s);
                       }
                     }
                   }
                   gx(xidx, s) += acc;
                 }
               }
             }
           }
         });
  return {&t, out};
}

ImageShape max_pool2d_shape(ImageShape in, int kernel, int stride) {
  const int h = (in.height - kernel) / stride + 1;
  const int w = (in.width - kernel) / stride + 1;
  require(h >= 1 && w >= 1, "max_pool2d: window larger than input");
  return ImageShape{in.channels, h, w};
}

Var max_pool2d(Var x, ImageShape in, int kernel, int stride) {
  Tape& t = *x.tape;
  const ImageShape out_shape = max_pool2d_shape(in, kernel, stride);
  require(x.rows() == in.size(), "max_pool2d: input rows disagree with shape");

  const Eigen::Index batch = x.cols();
  Mat out_val(out_shape.size(), batch);
  auto argmax = std::make_shared<std::vector<Eigen::Index>>(
      static_cast<std::size_t>(out_shape.size()) * batch);
  for (Eigen::Index s = 0; s < batch; ++s) {
    for (int c = 0; c < in.channels; ++c) {
      for (int ho = 0; ho < out_shape.height; ++ho) {
        for (int wo = 0; wo < out_shape.width; ++wo) {
          double best = -std::numeric_limits<double>::infinity();
          Eigen::Index best_idx = 0;
          for (int dy = 0; dy < kernel; ++dy) {
            for (int dx = 0; dx < kernel; ++dx) {
              const int hi = ho * stride + dy;
              const int wi = wo * stride + dx;
              const Eigen::Index idx =
                  (static_cast<Eigen::Index>(c) * in.height + hi) * in.width + wi;
              if (x.val()(idx, s) > best) {
                best = x.val()(idx, s);
                best_idx = idx;
              }
            }
          }
          const Eigen::Index oidx =
              (static_cast<Eigen::Index>(c) * out_shape.height + ho) * out_shape.width + wo;
          out_val(oidx, s) = best;
          (*argmax)[static_cast<std::size_t>(oidx) * batch + s] = best_idx;
        }
      }
    }
  }

  const int ix = x.id, out = t.next_id();
  t.push(std::move(out_val), [ix, out, argmax, batch](Tape& t) {
    const Mat& g = t.grad_ref(out);
    Mat& gx = t.grad_ref(ix);
    for (Eigen::Index o = 0; o < g.rows(); ++o) {
      for (Eigen::Index s = 0; s < batch; ++s) {
        gx((*argmax)[static_cast<std::size_t>(o) * batch + s], s) += g(o, s);
      }
    }
  });
  return {&t, out};
}

Var batch_norm2d(Var x, Var gamma, Var beta, ImageShape in, BatchNormState& state,
                 bool training) {
  Tape& t = *x.tape;
  require(x.rows() == in.size(), "batch_norm2d: input rows disagree with shape");
  require(gamma.rows() == in.channels && beta.rows() == in.channels,
          "batch_norm2d: gamma/beta must be channels x 1");
  if (state.running_mean.size() == 0) {
    state.running_mean = Vec::Zero(in.channels);
    state.running_var = Vec::Ones(in.channels);
  }

  const Eigen::Index hw = static_cast<Eigen::Index>(in.height) * in.width;
  const Eigen::Index batch = x.cols();
  const double m = static_cast<double>(hw * batch);

  Vec mean(in.channels), var(in.channels);
  for (int c = 0; c < in.channels; ++c) {
    const auto block = x.val().middleRows(c * hw, hw);
    mean[c] = block.mean();
    var[c] = (block.array() - mean[c]).square().sum() / m;
  }
  if (training) {
    const double unbias = m > 1.0 ? m / (m - 1.0) : 1.0;
    state.running_mean = (1.0 - state.momentum) * state.running_mean + state.momentum * mean;
    state.running_var =
        (1.0 - state.momentum) * state.running_var + state.momentum * (var * unbias);
  } else {
    mean = state.running_mean;
    var = state.running_var;
  }

  Mat xhat(x.rows(), batch);
  Vec invstd(in.channels);
  for (int c = 0; c < in.channels; ++c) {
    invstd[c] = 1.0 / std::sqrt(var[c] + state.eps);
    xhat.middleRows(c * hw, hw) =
        ((x.val().middleRows(c * hw, hw).array() - mean[c]) * invstd[c]).matrix();
  }
  Mat out_val(x.rows(), batch);
  for (int c = 0; c < in.channels; ++c) {
    out_val.middleRows(c * hw, hw) =
        (xhat.middleRows(c * hw, hw).array() * gamma.val()(c, 0) + beta.val()(c, 0)).matrix();
  }

  auto xhat_cache = std::make_shared<Mat>(std::move(xhat));
  auto invstd_cache = std::make_shared<Vec>(std::move(invstd));
  const int ix = x.id, ig = gamma.id, ib = beta.id, out = t.next_id();
  t.push(std::move(out_val),
         [ix, ig, ib, out, hw, m, training, xhat_cache, invstd_cache, in](Tape& t) {
           const Mat& g = t.grad_ref(out);
           Mat& gx = t.grad_ref(ix);
           Mat& ggamma = t.grad_ref(ig);
           Mat& gbeta = t.grad_ref(ib);
           for (int c = 0; c < in.channels; ++c) {
             const auto gb = g.middleRows(c * hw, hw);
             const auto xh = xhat_cache->middleRows(c * hw, hw);
             const double sum_g = gb.sum();
             const double sum_gx = gb.cwiseProduct(xh).sum();
             ggamma(c, 0) += sum_gx;
             gbeta(c, 0) += sum_g;
             const double gam = t.value(ig)(c, 0);
             if (training) {
               gx.middleRows(c * hw, hw) +=
                   ((gam * (*invstd_cache)[c]) *
                    (gb.array() - sum_g / m - xh.array() * (sum_gx / m)))
                       .matrix();
             } else {
               gx.middleRows(c * hw, hw) += (gam * (*invstd_cache)[c]) * gb;
             }
           }
         });
  return {&t, out};
}

}  // namespace dgc::ad
