#pragma once

#include <array>
#include <cassert>
#include <filesystem>
#include <functional>
#include <vector>

#include "faceaudit/gender.hpp"
#include "faceaudit/image.hpp"

namespace faceaudit {

struct InputShapeError : std::runtime_error {
  explicit InputShapeError(const std::string& msg) : std::runtime_error(msg) {}
};
struct DegenerateDataError : std::runtime_error {
  DegenerateDataError() : std::runtime_error("training data contains a single class") {}
};
struct CheckpointError : std::runtime_error {
  explicit CheckpointError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Channel-major (c, y, x) grid of doubles.
struct Tensor3 {
  int channels = 0, height = 0, width = 0;
  std::vector<double> v;

  Tensor3() = default;
  Tensor3(int c, int h, int w)
      : channels(c), height(h), width(w),
        v(static_cast<std::size_t>(c) * h * w, 0.0) {}

  double& at(int c, int y, int x) { return v[idx(c, y, x)]; }
  double at(int c, int y, int x) const { return v[idx(c, y, x)]; }
  std::size_t size() const { return v.size(); }
  bool same_shape(const Tensor3& o) const {
    return channels == o.channels && height == o.height && width == o.width;
  }

 private:
  std::size_t idx(int c, int y, int x) const {
    assert(c >= 0 && c < channels && y >= 0 && y < height && x >= 0 && x < width);
    return (static_cast<std::size_t>(c) * height + y) * width + x;
  }
};

/// Raw class logits, order (female, male).
struct LogitVector {
  double female = 0.0;
  double male = 0.0;
  double at(Gender g) const { return g == Gender::Male ? male : female; }
};

/// Logistic link of the male-vs-female logit gap.
GenderScore score_from_logits(const LogitVector& logits);

struct ArchSpec {
  int input_channels = 1;
  int input_side = 32;
  std::vector<int> conv_channels = {8, 16};  // conv3x3 pad1 + relu + maxpool2 each
  std::vector<int> dense_hidden;             // dense + relu each; final dense emits 2 logits

  void validate() const;
  bool operator==(const ArchSpec&) const = default;
};

struct ConvLayer {
  int in_ch = 0, out_ch = 0;
  std::vector<double> w;  // (out, in, 3, 3)
  std::vector<double> b;  // (out)
};

struct DenseLayer {
  int in = 0, out = 0;
  std::vector<double> w;  // (out, in)
  std::vector<double> b;  // (out)
};

/// Small seeded CNN with two-class output, built for exact analytic
/// input gradients. Immutable after training; forward passes share no
/// state and are safe to run concurrently.
class CompactNet {
 public:
  CompactNet(const ArchSpec& arch, unsigned seed);

  const ArchSpec& arch() const { return arch_; }

  /// Forward pass. Throws InputShapeError when x does not match the arch.
  LogitVector logits(const Tensor3& x) const;
  GenderScore score(const Tensor3& x) const { return score_from_logits(logits(x)); }

  /// Exact gradient of (d_female*female + d_male*male) with respect to x.
  Tensor3 input_gradient(const Tensor3& x, double d_female, double d_male) const;

  std::vector<ConvLayer>& conv_layers() { return convs_; }
  const std::vector<ConvLayer>& conv_layers() const { return convs_; }
  std::vector<DenseLayer>& dense_layers() { return denses_; }
  const std::vector<DenseLayer>& dense_layers() const { return denses_; }

  std::vector<double> flatten_parameters() const;
  void set_parameters(const std::vector<double>& flat);

  /// Versioned binary checkpoint (arch + parameters).
  void save(const std::filesystem::path& path) const;
  static CompactNet load(const std::filesystem::path& path);

 private:
  friend struct NetBackprop;
  ArchSpec arch_;
  std::vector<ConvLayer> convs_;
  std::vector<DenseLayer> denses_;
  int flat_after_convs_ = 0;
};

/// Differentiable scalar functional of the logits.
struct LogitObjective {
  std::function<double(const LogitVector&)> value;
  std::function<std::array<double, 2>(const LogitVector&)> gradient;  // (d/dfemale, d/dmale)
};

/// Gradient of objective(logits(x)) with respect to x.
Tensor3 input_gradient(const CompactNet& net, const Tensor3& x, const LogitObjective& objective);

struct TrainConfig {
  int input_side = 32;
  int input_channels = 1;
  std::vector<int> conv_channels = {8, 16};
  std::vector<int> dense_hidden;
  double learning_rate = 0.05;
  int epochs = 20;
  int batch_size = 8;
  unsigned seed = 1;

  ArchSpec arch() const {
    return ArchSpec{input_channels, input_side, conv_channels, dense_hidden};
  }
  void validate() const;
};

struct TrainExample {
  Tensor3 x;
  Gender label = Gender::Female;
};

/// Seeded minibatch SGD with softmax cross-entropy. Deterministic for a
/// fixed config and data order. Throws DegenerateDataError when only one
/// class is present. When epoch_loss is given it receives the full-dataset
/// loss before training followed by one entry per epoch.
CompactNet train(const TrainConfig& config, const std::vector<TrainExample>& data,
                 std::vector<double>* epoch_loss = nullptr);

/// Mean softmax cross-entropy over a dataset.
double dataset_loss(const CompactNet& net, const std::vector<TrainExample>& data);

/// Fraction of examples whose score decision matches the label.
double dataset_accuracy(const CompactNet& net, const std::vector<TrainExample>& data);

/// Resize (bilinear) to side x side and scale to [0,1]. channels == 1
/// converts to BT.601 luma first; channels == 3 keeps RGB planes.
struct Preprocessor {
  int side = 32;
  int channels = 1;

  Tensor3 run(const RasterImage& img) const;
};

}  // namespace faceaudit
