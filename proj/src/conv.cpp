// Copyright 2026 The crnn Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <cmath>
#include <string>

#include "crnn/error.hpp"
#include "crnn/tensor.hpp"
#include "eigen_util.hpp"

namespace crnn {

namespace {

struct Layout4 {
  std::size_t n, c, h, w;
};

Layout4 image_layout(const Tensor& t, const char* op) {
  if (t.rank() == 3) return {1, t.dim(0), t.dim(1), t.dim(2)};
  if (t.rank() == 4) return {t.dim(0), t.dim(1), t.dim(2), t.dim(3)};
  throw DimensionError(std::string(op) + ": expected [C,H,W] or [N,C,H,W], got " +
                       shape_string(t.shape()));
}

Shape image_shape(bool batched, std::size_t n, std::size_t c, std::size_t h,
                  std::size_t w) {
  if (batched) return {n, c, h, w};
  return {c, h, w};
}

// Unfolds every receptive field into a column:
// col[(ci*kh + ki)*kw + kj][img*Ho*Wo + oy*Wo + ox].
void im2col(const double* input, const Layout4& in, std::size_t kh,
            std::size_t kw, const Conv2dParams& p, std::size_t out_h,
            std::size_t out_w, double* col) {
  const std::size_t spatial = out_h * out_w;
  const std::size_t cols = in.n * spatial;
  for (std::size_t ci = 0; ci < in.c; ++ci) {
    for (std::size_t ki = 0; ki < kh; ++ki) {
      for (std::size_t kj = 0; kj < kw; ++kj) {
        double* row = col + ((ci * kh + ki) * kw + kj) * cols;
        for (std::size_t img = 0; img < in.n; ++img) {
          const double* plane = input + (img * in.c + ci) * in.h * in.w;
          double* dst = row + img * spatial;
          for (std::size_t oy = 0; oy < out_h; ++oy) {
            const std::ptrdiff_t iy =
                static_cast<std::ptrdiff_t>(oy * p.stride_h + ki) -
                static_cast<std::ptrdiff_t>(p.pad_h);
            if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(in.h)) {
              std::fill_n(dst + oy * out_w, out_w, 0.0);
              continue;
            }
            const double* src = plane + static_cast<std::size_t>(iy) * in.w;
            for (std::size_t ox = 0; ox < out_w; ++ox) {
              const std::ptrdiff_t ix =
                  static_cast<std::ptrdiff_t>(ox * p.stride_w + kj) -
                  static_cast<std::ptrdiff_t>(p.pad_w);
              dst[oy * out_w + ox] =
                  (ix < 0 || ix >= static_cast<std::ptrdiff_t>(in.w))
                      ? 0.0
                      : src[ix];
            }
          }
        }
      }
    }
  }
}

void col2im(const double* col, const Layout4& in, std::size_t kh,
            std::size_t kw, const Conv2dParams& p, std::size_t out_h,
            std::size_t out_w, double* input_grad) {
  const std::size_t spatial = out_h * out_w;
  const std::size_t cols = in.n * spatial;
  for (std::size_t ci = 0; ci < in.c; ++ci) {
    for (std::size_t ki = 0; ki < kh; ++ki) {
      for (std::size_t kj = 0; kj < kw; ++kj) {
        const double* row = col + ((ci * kh + ki) * kw + kj) * cols;
        for (std::size_t img = 0; img < in.n; ++img) {
          double* plane = input_grad + (img * in.c + ci) * in.h * in.w;
          const double* src = row + img * spatial;
          for (std::size_t oy = 0; oy < out_h; ++oy) {
            const std::ptrdiff_t iy =
                static_cast<std::ptrdiff_t>(oy * p.stride_h + ki) -
                static_cast<std::ptrdiff_t>(p.pad_h);
            if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(in.h)) continue;
            double* dst = plane + static_cast<std::size_t>(iy) * in.w;
            for (std::size_t ox = 0; ox < out_w; ++ox) {
              const std::ptrdiff_t ix =
                  static_cast<std::ptrdiff_t>(ox * p.stride_w + kj) -
                  static_cast<std::ptrdiff_t>(p.pad_w);
              if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(in.w)) continue;
              dst[ix] += src[oy * out_w + ox];
            }
          }
        }
      }
    }
  }
}

}  // namespace

std::size_t conv_output_extent(std::size_t in, std::size_t kernel,
                               std::size_t stride, std::size_t pad) {
  if (stride == 0) throw DimensionError("stride must be positive");
  if (kernel == 0 || in + 2 * pad < kernel) {
    throw DimensionError("window of " + std::to_string(kernel) +
                         " does not fit extent " + std::to_string(in) +
                         " with padding " + std::to_string(pad));
  }
  return (in + 2 * pad - kernel) / stride + 1;
}

Tensor conv2d(const Tensor& input, const Tensor& kernels, const Tensor& bias,
              const Conv2dParams& params) {
  const Layout4 in = image_layout(input, "conv2d");
  if (kernels.rank() != 4 || kernels.dim(1) != in.c) {
    throw DimensionError("conv2d: kernels " + shape_string(kernels.shape()) +
                         " incompatible with input " +
                         shape_string(input.shape()));
  }
  const std::size_t c_out = kernels.dim(0);
  const std::size_t kh = kernels.dim(2);
  const std::size_t kw = kernels.dim(3);
  if (bias.defined() && bias.numel() != c_out) {
    throw DimensionError("conv2d: bias " + shape_string(bias.shape()) +
                         " does not match " + std::to_string(c_out) +
                         " output maps");
  }
  const std::size_t out_h =
      conv_output_extent(in.h, kh, params.stride_h, params.pad_h);
  const std::size_t out_w =
      conv_output_extent(in.w, kw, params.stride_w, params.pad_w);

  const std::size_t spatial = out_h * out_w;
  const std::size_t cols = in.n * spatial;
  const std::size_t depth = in.c * kh * kw;
  auto col = std::make_shared<std::vector<double>>(depth * cols);
  im2col(input.values().data(), in, kh, kw, params, out_h, out_w, col->data());

  const auto rows_e = static_cast<Eigen::Index>(c_out);
  const auto depth_e = static_cast<Eigen::Index>(depth);
  const auto cols_e = static_cast<Eigen::Index>(cols);
  internal::RowMatrix product =
      internal::as_matrix(kernels.values().data(), rows_e, depth_e) *
      internal::as_matrix(static_cast<const double*>(col->data()), depth_e,
                          cols_e);

  std::vector<double> out(in.n * c_out * spatial);
  for (std::size_t img = 0; img < in.n; ++img) {
    for (std::size_t co = 0; co < c_out; ++co) {
      const double b = bias.defined() ? bias.values()[co] : 0.0;
      const double* src = product.data() + co * cols + img * spatial;
      double* dst = out.data() + (img * c_out + co) * spatial;
      for (std::size_t i = 0; i < spatial; ++i) dst[i] = src[i] + b;
    }
  }

  std::vector<Tensor> inputs{input, kernels};
  if (bias.defined()) inputs.push_back(bias);
  const bool has_bias = bias.defined();
  return record(
      image_shape(input.rank() == 4, in.n, c_out, out_h, out_w), std::move(out),
      inputs,
      [in, kernels, col, params, kh, kw, out_h, out_w, c_out, spatial, cols,
       depth, has_bias](std::span<const double> g,
                        std::span<std::vector<double>*> grads) {
        const auto rows_e = static_cast<Eigen::Index>(c_out);
        const auto depth_e = static_cast<Eigen::Index>(depth);
        const auto cols_e = static_cast<Eigen::Index>(cols);
        internal::RowMatrix grad_out(rows_e, cols_e);
        for (std::size_t img = 0; img < in.n; ++img) {
          for (std::size_t co = 0; co < c_out; ++co) {
            const double* src = g.data() + (img * c_out + co) * spatial;
            double* dst = grad_out.data() + co * cols + img * spatial;
            std::copy_n(src, spatial, dst);
          }
        }
        if (grads[1]) {
          internal::as_matrix(grads[1]->data(), rows_e, depth_e).noalias() +=
              grad_out *
              internal::as_matrix(static_cast<const double*>(col->data()),
                                  depth_e, cols_e)
                  .transpose();
        }
        if (has_bias && grads[2]) {
          for (std::size_t co = 0; co < c_out; ++co) {
            (*grads[2])[co] += grad_out.row(static_cast<Eigen::Index>(co)).sum();
          }
        }
        if (grads[0]) {
          internal::RowMatrix grad_col =
              internal::as_matrix(kernels.values().data(), rows_e, depth_e)
                  .transpose() *
              grad_out;
          col2im(grad_col.data(), in, kh, kw, params, out_h, out_w,
                 grads[0]->data());
        }
      });
}

Tensor maxpool2d(const Tensor& input, const Pool2dParams& params) {
  const Layout4 in = image_layout(input, "maxpool2d");
  const std::size_t out_h =
      conv_output_extent(in.h, params.window_h, params.stride_h, 0);
  const std::size_t out_w =
      conv_output_extent(in.w, params.window_w, params.stride_w, 0);
  const std::size_t planes = in.n * in.c;
  std::vector<double> out(planes * out_h * out_w);
  std::vector<std::size_t> argmax(out.size());
  auto v = input.values();
  for (std::size_t plane = 0; plane < planes; ++plane) {
    const std::size_t base = plane * in.h * in.w;
    for (std::size_t oy = 0; oy < out_h; ++oy) {
      for (std::size_t ox = 0; ox < out_w; ++ox) {
        std::size_t best = base + oy * params.stride_h * in.w + ox * params.stride_w;
        for (std::size_t wy = 0; wy < params.window_h; ++wy) {
          for (std::size_t wx = 0; wx < params.window_w; ++wx) {
            const std::size_t idx = base + (oy * params.stride_h + wy) * in.w +
                                    ox * params.stride_w + wx;
            if (v[idx] > v[best]) best = idx;
          }
        }
        const std::size_t o = (plane * out_h + oy) * out_w + ox;
        out[o] = v[best];
        argmax[o] = best;
      }
    }
  }
  return record(image_shape(input.rank() == 4, in.n, in.c, out_h, out_w),
                std::move(out), {input},
                [argmax = std::move(argmax)](std::span<const double> g,
                                             std::span<std::vector<double>*> grads) {
                  if (!grads[0]) return;
                  for (std::size_t o = 0; o < g.size(); ++o) {
                    (*grads[0])[argmax[o]] += g[o];
                  }
                });
}

Tensor batchnorm(const Tensor& input, const Tensor& gamma, const Tensor& beta,
                 BatchNormStats& stats, BatchNormMode mode) {
  const Layout4 in = image_layout(input, "batchnorm");
  if (gamma.numel() != in.c || beta.numel() != in.c) {
    throw DimensionError("batchnorm: affine parameters do not match " +
                         std::to_string(in.c) + " channels");
  }
  const std::size_t spatial = in.h * in.w;
  const std::size_t count = in.n * spatial;
  auto x = input.values();
  auto gm = gamma.values();
  auto bt = beta.values();

  std::vector<double> mean(in.c, 0.0);
  std::vector<double> inv_std(in.c, 0.0);
  if (mode == BatchNormMode::kTrain) {
    if (count < 2) {
      throw UsageError("batchnorm: training needs at least 2 values per channel");
    }
    if (!stats.initialized) {
      stats.running_mean.assign(in.c, 0.0);
      stats.running_var.assign(in.c, 1.0);
      stats.initialized = true;
    } else if (stats.running_mean.size() != in.c) {
      throw DimensionError("batchnorm: running statistics have wrong width");
    }
    for (std::size_t c = 0; c < in.c; ++c) {
      double s = 0.0;
      for (std::size_t img = 0; img < in.n; ++img) {
        const double* p = x.data() + (img * in.c + c) * spatial;
        for (std::size_t i = 0; i < spatial; ++i) s += p[i];
      }
      const double mu = s / static_cast<double>(count);
      double ss = 0.0;
      for (std::size_t img = 0; img < in.n; ++img) {
        const double* p = x.data() + (img * in.c + c) * spatial;
        for (std::size_t i = 0; i < spatial; ++i) ss += (p[i] - mu) * (p[i] - mu);
      }
      const double var = ss / static_cast<double>(count);
      mean[c] = mu;
      inv_std[c] = 1.0 / std::sqrt(var + stats.epsilon);
      const double unbiased = ss / static_cast<double>(count - 1);
      stats.running_mean[c] =
          (1.0 - stats.momentum) * stats.running_mean[c] + stats.momentum * mu;
      stats.running_var[c] =
          (1.0 - stats.momentum) * stats.running_var[c] + stats.momentum * unbiased;
    }
  } else {
    if (!stats.initialized) {
      throw StateError("batchnorm: inference before any running statistics");
    }
    if (stats.running_mean.size() != in.c) {
      throw DimensionError("batchnorm: running statistics have wrong width");
    }
    for (std::size_t c = 0; c < in.c; ++c) {
      mean[c] = stats.running_mean[c];
      inv_std[c] = 1.0 / std::sqrt(stats.running_var[c] + stats.epsilon);
    }
  }

  std::vector<double> normalized(x.size());
  std::vector<double> out(x.size());
  for (std::size_t img = 0; img < in.n; ++img) {
    for (std::size_t c = 0; c < in.c; ++c) {
      const std::size_t base = (img * in.c + c) * spatial;
      for (std::size_t i = 0; i < spatial; ++i) {
        normalized[base + i] = (x[base + i] - mean[c]) * inv_std[c];
        out[base + i] = gm[c] * normalized[base + i] + bt[c];
      }
    }
  }

  const bool train = mode == BatchNormMode::kTrain;
  return record(
      input.shape(), std::move(out), {input, gamma, beta},
      [in, spatial, count, train, gamma, inv_std = std::move(inv_std),
       normalized = std::move(normalized)](std::span<const double> g,
                                           std::span<std::vector<double>*> grads) {
        auto gm = gamma.values();
        for (std::size_t c = 0; c < in.c; ++c) {
          double sum_g = 0.0;
          double sum_gx = 0.0;
          for (std::size_t img = 0; img < in.n; ++img) {
            const std::size_t base = (img * in.c + c) * spatial;
            for (std::size_t i = 0; i < spatial; ++i) {
              sum_g += g[base + i];
              sum_gx += g[base + i] * normalized[base + i];
            }
          }
          if (grads[1]) (*grads[1])[c] += sum_gx;
          if (grads[2]) (*grads[2])[c] += sum_g;
          if (!grads[0]) continue;
          const double k = gm[c] * inv_std[c];
          const double inv_count = 1.0 / static_cast<double>(count);
          for (std::size_t img = 0; img < in.n; ++img) {
            const std::size_t base = (img * in.c + c) * spatial;
            for (std::size_t i = 0; i < spatial; ++i) {
              double d = g[base + i];
              if (train) {
                d -= inv_count * (sum_g + normalized[base + i] * sum_gx);
              }
              (*grads[0])[base + i] += k * d;
            }
          }
        }
      });
}

}  // namespace crnn
