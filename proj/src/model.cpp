#include "faceaudit/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <random>

namespace faceaudit {

GenderScore score_from_logits(const LogitVector& logits) {
  return GenderScore{1.0 / (1.0 + std::exp(-(logits.male - logits.female)))};
}

void ArchSpec::validate() const {
  if (input_channels != 1 && input_channels != 3)
    throw std::invalid_argument("input_channels must be 1 or 3");
  if (input_side < 1) throw std::invalid_argument("input_side must be positive");
  int side = input_side;
  for (int ch : conv_channels) {
    if (ch < 1) throw std::invalid_argument("conv channel counts must be positive");
    side /= 2;
    if (side < 1) throw std::invalid_argument("input too small for the conv stack");
  }
  for (int n : dense_hidden)
    if (n < 1) throw std::invalid_argument("dense sizes must be positive");
}

void TrainConfig::validate() const {
  arch().validate();
  if (learning_rate <= 0) throw std::invalid_argument("learning_rate must be positive");
  if (epochs < 1) throw std::invalid_argument("epochs must be positive");
  if (batch_size < 1) throw std::invalid_argument("batch_size must be positive");
}

CompactNet::CompactNet(const ArchSpec& arch, unsigned seed) : arch_(arch) {
  arch_.validate();
  std::mt19937 rng(seed);

  int ch = arch_.input_channels;
  int side = arch_.input_side;
  for (int out_ch : arch_.conv_channels) {
    ConvLayer layer;
    layer.in_ch = ch;
    layer.out_ch = out_ch;
    layer.w.resize(static_cast<std::size_t>(out_ch) * ch * 9);
    layer.b.assign(out_ch, 0.0);
    std::normal_distribution<double> init(0.0, std::sqrt(2.0 / (ch * 9.0)));
    for (double& w : layer.w) w = init(rng);
    convs_.push_back(std::move(layer));
    ch = out_ch;
    side /= 2;
  }
  flat_after_convs_ = ch * side * side;

  int in = flat_after_convs_;
  std::vector<int> outs = arch_.dense_hidden;
  outs.push_back(2);
  for (int out : outs) {
    DenseLayer layer;
    layer.in = in;
    layer.out = out;
    layer.w.resize(static_cast<std::size_t>(out) * in);
    layer.b.assign(out, 0.0);
    std::normal_distribution<double> init(0.0, std::sqrt(2.0 / in));
    for (double& w : layer.w) w = init(rng);
    denses_.push_back(std::move(layer));
    in = out;
  }
}

namespace {

void conv3x3_forward(const ConvLayer& layer, const Tensor3& in, Tensor3& out) {
  const int h = in.height, w = in.width;
  for (int oc = 0; oc < layer.out_ch; ++oc) {
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        double acc = layer.b[oc];
        for (int ic = 0; ic < layer.in_ch; ++ic) {
          for (int ky = 0; ky < 3; ++ky) {
            const int iy = y + ky - 1;
            if (iy < 0 || iy >= h) continue;
            for (int kx = 0; kx < 3; ++kx) {
              const int ix = x + kx - 1;
              if (ix < 0 || ix >= w) continue;
              acc += layer.w[((static_cast<std::size_t>(oc) * layer.in_ch + ic) * 3 + ky) * 3 + kx] *
                     in.at(ic, iy, ix);
            }
          }
        }
        out.at(oc, y, x) = acc;
      }
    }
  }
}

void relu_inplace(Tensor3& t) {
  for (double& v : t.v) v = std::max(v, 0.0);
}

// 2x2 stride-2 max pool; trailing odd rows/columns are dropped. argmax
// records the flat source index for the backward pass.
void maxpool2_forward(const Tensor3& in, Tensor3& out, std::vector<std::size_t>& argmax) {
  const int oh = in.height / 2, ow = in.width / 2;
  argmax.assign(out.size(), 0);
  for (int c = 0; c < in.channels; ++c) {
    for (int y = 0; y < oh; ++y) {
      for (int x = 0; x < ow; ++x) {
        double best = -std::numeric_limits<double>::infinity();
        std::size_t best_idx = 0;
        for (int dy = 0; dy < 2; ++dy) {
          for (int dx = 0; dx < 2; ++dx) {
            const std::size_t idx =
                (static_cast<std::size_t>(c) * in.height + (2 * y + dy)) * in.width + (2 * x + dx);
            if (in.v[idx] > best) {
              best = in.v[idx];
              best_idx = idx;
            }
          }
        }
        const std::size_t out_idx = (static_cast<std::size_t>(c) * oh + y) * ow + x;
        out.v[out_idx] = best;
        argmax[out_idx] = best_idx;
      }
    }
  }
}

struct ForwardTrace {
  std::vector<Tensor3> conv_in;    // activation entering each conv
  std::vector<Tensor3> conv_pre;   // conv output before relu
  std::vector<Tensor3> pool_in;    // relu output entering pool
  std::vector<Tensor3> pool_out;
  std::vector<std::vector<std::size_t>> pool_arg;
  std::vector<std::vector<double>> dense_in;   // activation entering each dense
  std::vector<std::vector<double>> dense_pre;  // pre-relu output (logits for the last)
};

struct LayerGrads {
  std::vector<double> w, b;
};

struct NetGrads {
  std::vector<LayerGrads> convs, denses;
};

NetGrads zero_grads(const CompactNet& net) {
  NetGrads g;
  for (const ConvLayer& l : net.conv_layers())
    g.convs.push_back({std::vector<double>(l.w.size(), 0.0), std::vector<double>(l.b.size(), 0.0)});
  for (const DenseLayer& l : net.dense_layers())
    g.denses.push_back({std::vector<double>(l.w.size(), 0.0), std::vector<double>(l.b.size(), 0.0)});
  return g;
}

}  // namespace

struct NetBackprop {
  static void check_shape(const CompactNet& net, const Tensor3& x) {
    if (x.channels != net.arch_.input_channels || x.height != net.arch_.input_side ||
        x.width != net.arch_.input_side)
      throw InputShapeError("input tensor does not match the network input contract");
  }

  static ForwardTrace forward(const CompactNet& net, const Tensor3& x) {
    check_shape(net, x);
    ForwardTrace t;
    Tensor3 act = x;
    for (const ConvLayer& layer : net.convs_) {
      t.conv_in.push_back(act);
      Tensor3 pre(layer.out_ch, act.height, act.width);
      conv3x3_forward(layer, act, pre);
      t.conv_pre.push_back(pre);
      relu_inplace(pre);
      t.pool_in.push_back(pre);
      Tensor3 pooled(layer.out_ch, pre.height / 2, pre.width / 2);
      std::vector<std::size_t> arg;
      maxpool2_forward(pre, pooled, arg);
      t.pool_out.push_back(pooled);
      t.pool_arg.push_back(std::move(arg));
      act = t.pool_out.back();
    }

    std::vector<double> a = act.v;
    for (std::size_t d = 0; d < net.denses_.size(); ++d) {
      const DenseLayer& layer = net.denses_[d];
      t.dense_in.push_back(a);
      std::vector<double> pre(layer.out);
      for (int o = 0; o < layer.out; ++o) {
        double acc = layer.b[o];
        const double* wrow = layer.w.data() + static_cast<std::size_t>(o) * layer.in;
        for (int i = 0; i < layer.in; ++i) acc += wrow[i] * a[i];
        pre[o] = acc;
      }
      t.dense_pre.push_back(pre);
      if (d + 1 < net.denses_.size())
        for (double& v : pre) v = std::max(v, 0.0);
      a = std::move(pre);
    }
    return t;
  }

  static LogitVector logits_of(const ForwardTrace& t) {
    const auto& out = t.dense_pre.back();
    return LogitVector{out[0], out[1]};
  }

  // Backpropagates d_logits. Fills param_grads when given; returns the
  // input gradient when want_input is set.
  static Tensor3 backward(const CompactNet& net, const ForwardTrace& t,
                          std::array<double, 2> d_logits, NetGrads* param_grads,
                          bool want_input) {
    std::vector<double> da(d_logits.begin(), d_logits.end());
    for (int d = static_cast<int>(net.denses_.size()) - 1; d >= 0; --d) {
      const DenseLayer& layer = net.denses_[d];
      // relu between hidden denses; the final layer is linear
      if (d + 1 < static_cast<int>(net.denses_.size())) {
        for (int o = 0; o < layer.out; ++o)
          if (t.dense_pre[d][o] <= 0.0) da[o] = 0.0;
      }
      std::vector<double> din(layer.in, 0.0);
      for (int o = 0; o < layer.out; ++o) {
        const double g = da[o];
        const double* wrow = layer.w.data() + static_cast<std::size_t>(o) * layer.in;
        if (param_grads) {
          param_grads->denses[d].b[o] += g;
          double* dwrow = param_grads->denses[d].w.data() + static_cast<std::size_t>(o) * layer.in;
          for (int i = 0; i < layer.in; ++i) dwrow[i] += g * t.dense_in[d][i];
        }
        for (int i = 0; i < layer.in; ++i) din[i] += g * wrow[i];
      }
      da = std::move(din);
    }

    // Reshape the flat gradient onto the last pooled activation.
    Tensor3 dact;
    if (net.convs_.empty()) {
      dact = Tensor3(net.arch_.input_channels, net.arch_.input_side, net.arch_.input_side);
      dact.v = da;
    } else {
      dact = Tensor3(t.pool_out.back().channels, t.pool_out.back().height,
                     t.pool_out.back().width);
      dact.v = da;
    }

    for (int c = static_cast<int>(net.convs_.size()) - 1; c >= 0; --c) {
      const ConvLayer& layer = net.convs_[c];
      // pool backward: route to the argmax source
      Tensor3 dpool_in(t.pool_in[c].channels, t.pool_in[c].height, t.pool_in[c].width);
      for (std::size_t i = 0; i < dact.v.size(); ++i)
        dpool_in.v[t.pool_arg[c][i]] += dact.v[i];
      // relu backward
      for (std::size_t i = 0; i < dpool_in.v.size(); ++i)
        if (t.conv_pre[c].v[i] <= 0.0) dpool_in.v[i] = 0.0;
      // conv backward
      const Tensor3& in = t.conv_in[c];
      Tensor3 din(in.channels, in.height, in.width);
      const bool need_din = want_input || c > 0;
      for (int oc = 0; oc < layer.out_ch; ++oc) {
        for (int y = 0; y < in.height; ++y) {
          for (int x = 0; x < in.width; ++x) {
            const double g = dpool_in.at(oc, y, x);
            if (g == 0.0) continue;
            if (param_grads) param_grads->convs[c].b[oc] += g;
            for (int ic = 0; ic < layer.in_ch; ++ic) {
              for (int ky = 0; ky < 3; ++ky) {
                const int iy = y + ky - 1;
                if (iy < 0 || iy >= in.height) continue;
                for (int kx = 0; kx < 3; ++kx) {
                  const int ix = x + kx - 1;
                  if (ix < 0 || ix >= in.width) continue;
                  const std::size_t wi =
                      ((static_cast<std::size_t>(oc) * layer.in_ch + ic) * 3 + ky) * 3 + kx;
                  if (param_grads) param_grads->convs[c].w[wi] += g * in.at(ic, iy, ix);
                  if (need_din) din.at(ic, iy, ix) += g * layer.w[wi];
                }
              }
            }
          }
        }
      }
      dact = std::move(din);
    }
    return want_input ? dact : Tensor3{};
  }
};

LogitVector CompactNet::logits(const Tensor3& x) const {
  return NetBackprop::logits_of(NetBackprop::forward(*this, x));
}

Tensor3 CompactNet::input_gradient(const Tensor3& x, double d_female, double d_male) const {
  ForwardTrace t = NetBackprop::forward(*this, x);
  return NetBackprop::backward(*this, t, {d_female, d_male}, nullptr, true);
}

Tensor3 input_gradient(const CompactNet& net, const Tensor3& x, const LogitObjective& objective) {
  const LogitVector logits = net.logits(x);
  const std::array<double, 2> d = objective.gradient(logits);
  return net.input_gradient(x, d[0], d[1]);
}

std::vector<double> CompactNet::flatten_parameters() const {
  std::vector<double> flat;
  for (const ConvLayer& l : convs_) {
    flat.insert(flat.end(), l.w.begin(), l.w.end());
    flat.insert(flat.end(), l.b.begin(), l.b.end());
  }
  for (const DenseLayer& l : denses_) {
    flat.insert(flat.end(), l.w.begin(), l.w.end());
    flat.insert(flat.end(), l.b.begin(), l.b.end());
  }
  return flat;
}

void CompactNet::set_parameters(const std::vector<double>& flat) {
  std::size_t pos = 0;
  auto take = [&](std::vector<double>& dst) {
    if (pos + dst.size() > flat.size())
      throw std::invalid_argument("parameter vector too short");
    std::copy(flat.begin() + pos, flat.begin() + pos + dst.size(), dst.begin());
    pos += dst.size();
  };
  for (ConvLayer& l : convs_) {
    take(l.w);
    take(l.b);
  }
  for (DenseLayer& l : denses_) {
    take(l.w);
    take(l.b);
  }
  if (pos != flat.size()) throw std::invalid_argument("parameter vector too long");
}

namespace {

constexpr char kCheckpointMagic[8] = {'F', 'A', 'U', 'D', 'N', 'E', 'T', '1'};

template <typename T>
void write_pod(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& in, const std::filesystem::path& path) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw CheckpointError("truncated checkpoint: " + path.string());
  return v;
}

}  // namespace

void CompactNet::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CheckpointError("cannot write checkpoint: " + path.string());
  out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
  write_pod<std::int32_t>(out, arch_.input_channels);
  write_pod<std::int32_t>(out, arch_.input_side);
  write_pod<std::int32_t>(out, static_cast<std::int32_t>(arch_.conv_channels.size()));
  for (int c : arch_.conv_channels) write_pod<std::int32_t>(out, c);
  write_pod<std::int32_t>(out, static_cast<std::int32_t>(arch_.dense_hidden.size()));
  for (int d : arch_.dense_hidden) write_pod<std::int32_t>(out, d);
  const std::vector<double> flat = flatten_parameters();
  write_pod<std::uint64_t>(out, static_cast<std::uint64_t>(flat.size()));
  out.write(reinterpret_cast<const char*>(flat.data()),
            static_cast<std::streamsize>(flat.size() * sizeof(double)));
  if (!out) throw CheckpointError("short write: " + path.string());
}

CompactNet CompactNet::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint: " + path.string());
  char magic[sizeof(kCheckpointMagic)] = {};
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0)
    throw CheckpointError("not a model checkpoint: " + path.string());

  ArchSpec arch;
  arch.input_channels = read_pod<std::int32_t>(in, path);
  arch.input_side = read_pod<std::int32_t>(in, path);
  arch.conv_channels.resize(read_pod<std::int32_t>(in, path));
  for (int& c : arch.conv_channels) c = read_pod<std::int32_t>(in, path);
  arch.dense_hidden.resize(read_pod<std::int32_t>(in, path));
  for (int& d : arch.dense_hidden) d = read_pod<std::int32_t>(in, path);

  CompactNet net(arch, 0);
  const auto count = read_pod<std::uint64_t>(in, path);
  std::vector<double> flat(count);
  in.read(reinterpret_cast<char*>(flat.data()),
          static_cast<std::streamsize>(count * sizeof(double)));
  if (!in) throw CheckpointError("truncated checkpoint: " + path.string());
  try {
    net.set_parameters(flat);
  } catch (const std::invalid_argument&) {
    throw CheckpointError("parameter count mismatch: " + path.string());
  }
  return net;
}

namespace {

double softmax_loss(const LogitVector& logits, Gender label, std::array<double, 2>* d_logits) {
  const double zf = logits.female, zm = logits.male;
  const double m = std::max(zf, zm);
  const double ef = std::exp(zf - m), em = std::exp(zm - m);
  const double lse = m + std::log(ef + em);
  const double pf = ef / (ef + em), pm = em / (ef + em);
  if (d_logits) {
    (*d_logits)[0] = pf - (label == Gender::Female ? 1.0 : 0.0);
    (*d_logits)[1] = pm - (label == Gender::Male ? 1.0 : 0.0);
  }
  return lse - (label == Gender::Male ? zm : zf);
}

}  // namespace

double dataset_loss(const CompactNet& net, const std::vector<TrainExample>& data) {
  double acc = 0.0;
  for (const TrainExample& ex : data) acc += softmax_loss(net.logits(ex.x), ex.label, nullptr);
  return acc / static_cast<double>(data.size());
}

double dataset_accuracy(const CompactNet& net, const std::vector<TrainExample>& data) {
  std::size_t correct = 0;
  for (const TrainExample& ex : data)
    if (net.score(ex.x).decision() == ex.label) ++correct;
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

CompactNet train(const TrainConfig& config, const std::vector<TrainExample>& data,
                 std::vector<double>* epoch_loss) {
  config.validate();
  if (data.empty()) throw DegenerateDataError();
  const bool has_female = std::any_of(data.begin(), data.end(),
                                      [](const TrainExample& e) { return e.label == Gender::Female; });
  const bool has_male = std::any_of(data.begin(), data.end(),
                                    [](const TrainExample& e) { return e.label == Gender::Male; });
  if (!has_female || !has_male) throw DegenerateDataError();

  CompactNet net(config.arch(), config.seed);
  for (const TrainExample& ex : data) NetBackprop::check_shape(net, ex.x);

  if (epoch_loss) epoch_loss->push_back(dataset_loss(net, data));

  std::mt19937 shuffle_rng(config.seed ^ 0x9e3779b9u);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      NetGrads grads = zero_grads(net);
      for (std::size_t i = start; i < end; ++i) {
        const TrainExample& ex = data[order[i]];
        ForwardTrace t = NetBackprop::forward(net, ex.x);
        std::array<double, 2> d_logits{};
        softmax_loss(NetBackprop::logits_of(t), ex.label, &d_logits);
        NetBackprop::backward(net, t, d_logits, &grads, false);
      }
      const double scale = config.learning_rate / static_cast<double>(end - start);
      for (std::size_t l = 0; l < net.conv_layers().size(); ++l) {
        ConvLayer& layer = net.conv_layers()[l];
        for (std::size_t i = 0; i < layer.w.size(); ++i) layer.w[i] -= scale * grads.convs[l].w[i];
        for (std::size_t i = 0; i < layer.b.size(); ++i) layer.b[i] -= scale * grads.convs[l].b[i];
      }
      for (std::size_t l = 0; l < net.dense_layers().size(); ++l) {
        DenseLayer& layer = net.dense_layers()[l];
        for (std::size_t i = 0; i < layer.w.size(); ++i) layer.w[i] -= scale * grads.denses[l].w[i];
        for (std::size_t i = 0; i < layer.b.size(); ++i) layer.b[i] -= scale * grads.denses[l].b[i];
      }
    }
    if (epoch_loss) epoch_loss->push_back(dataset_loss(net, data));
  }
  return net;
}

Tensor3 Preprocessor::run(const RasterImage& img) const {
  if (channels != 1 && channels != 3)
    throw std::invalid_argument("preprocessor channels must be 1 or 3");
  if (side < 1) throw std::invalid_argument("preprocessor side must be positive");
  if (img.width() < 1 || img.height() < 1)
    throw InputShapeError("cannot preprocess an empty image");

  // Source planes in [0,255] doubles.
  const int sw = img.width(), sh = img.height();
  std::vector<std::vector<double>> planes(channels,
                                          std::vector<double>(static_cast<std::size_t>(sw) * sh));
  for (int y = 0; y < sh; ++y) {
    for (int x = 0; x < sw; ++x) {
      const Rgb& p = img.at(x, y);
      const std::size_t i = static_cast<std::size_t>(y) * sw + x;
      if (channels == 1) {
        planes[0][i] = 0.299 * p.r + 0.587 * p.g + 0.114 * p.b;
      } else {
        planes[0][i] = p.r;
        planes[1][i] = p.g;
        planes[2][i] = p.b;
      }
    }
  }

  Tensor3 out(channels, side, side);
  const double sx = static_cast<double>(sw) / side;
  const double sy = static_cast<double>(sh) / side;
  for (int c = 0; c < channels; ++c) {
    for (int y = 0; y < side; ++y) {
      const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, sh - 1.0);
      const int y0 = static_cast<int>(fy);
      const int y1 = std::min(y0 + 1, sh - 1);
      const double wy = fy - y0;
      for (int x = 0; x < side; ++x) {
        const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, sw - 1.0);
        const int x0 = static_cast<int>(fx);
        const int x1 = std::min(x0 + 1, sw - 1);
        const double wx = fx - x0;
        const auto px = [&](int xx, int yy) {
          return planes[c][static_cast<std::size_t>(yy) * sw + xx];
        };
        const double top = px(x0, y0) * (1.0 - wx) + px(x1, y0) * wx;
        const double bot = px(x0, y1) * (1.0 - wx) + px(x1, y1) * wx;
        out.at(c, y, x) = (top * (1.0 - wy) + bot * wy) / 255.0;
      }
    }
  }
  return out;
}

}  // namespace faceaudit
