#include "faceaudit/skin_transform.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

namespace faceaudit {

void ModeShiftSpec::validate() const {
  if (target_mode < 0 || target_mode > 255)
    throw std::invalid_argument("target_mode must lie in [0,255]");
}

int luminance_mode(const LuminanceHistogram& hist) {
  if (hist.total() == 0) throw EmptyHistogramError();
  int best = 0;
  std::uint64_t best_count = 0;
  for (int y = 0; y < 256; ++y) {
    if (hist.at(y) > best_count) {
      best_count = hist.at(y);
      best = y;
    }
  }
  return best;
}

YCrCbImage mode_shift(const YCrCbImage& img, const SkinMask& mask, const ModeShiftSpec& spec) {
  spec.validate();
  const LuminanceHistogram hist = skin_luminance_histogram(img, mask);  // EmptyMaskError
  const int delta = spec.target_mode - luminance_mode(hist);

  YCrCbImage out = img;
  auto& px = out.pixels();
  const auto& bits = mask.bits();
  for (std::size_t i = 0; i < px.size(); ++i) {
    if (spec.scope == ShiftScope::SkinOnly && !bits[i]) continue;
    px[i].y = static_cast<std::uint8_t>(std::clamp(px[i].y + delta, 0, 255));
  }
  return out;
}

int MonotoneMap::map(int source_bin) const {
  const auto& p = pieces(source_bin);
  return p.empty() ? source_bin : p.front().target;
}

const std::vector<TransportPiece>& MonotoneMap::pieces(int source_bin) const {
  if (source_bin < 0 || source_bin > 255)
    throw std::out_of_range("luminance bin outside [0,255]");
  return pieces_[source_bin];
}

namespace {

// Largest-remainder scaling of `target` to integer masses totaling
// `total`. Exact integer arithmetic: bin t gets floor(count_t*total/T)
// plus one of the `total - sum(floor)` units handed out by descending
// remainder, ties to the lower bin.
std::array<std::uint64_t, 256> scale_to_total(const LuminanceHistogram& target,
                                              std::uint64_t total) {
  const std::uint64_t t_total = target.total();
  std::array<std::uint64_t, 256> out{};
  std::array<std::uint64_t, 256> rem{};
  std::uint64_t assigned = 0;
  for (int t = 0; t < 256; ++t) {
    const unsigned __int128 num =
        static_cast<unsigned __int128>(target.at(t)) * total;
    out[t] = static_cast<std::uint64_t>(num / t_total);
    rem[t] = static_cast<std::uint64_t>(num % t_total);
    assigned += out[t];
  }
  std::array<int, 256> order{};
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return rem[a] > rem[b]; });
  for (std::uint64_t i = 0; assigned < total; ++i, ++assigned) ++out[order[i]];
  return out;
}

}  // namespace

MonotoneMap transport_map(const LuminanceHistogram& source, const LuminanceHistogram& target) {
  if (source.total() == 0 || target.total() == 0) throw EmptyHistogramError();

  MonotoneMap m;
  m.source_ = source;
  const auto scaled = scale_to_total(target, source.total());
  for (int t = 0; t < 256; ++t)
    if (scaled[t] > 0) m.rounded_target_.add(t, scaled[t]);

  // Merge the two equal-mass streams in ascending bin order.
  int t = 0;
  std::uint64_t avail = scaled[0];
  for (int s = 0; s < 256; ++s) {
    std::uint64_t need = source.at(s);
    while (need > 0) {
      while (avail == 0) avail = scaled[++t];
      const std::uint64_t take = std::min(need, avail);
      m.pieces_[s].push_back({take, static_cast<std::uint8_t>(t)});
      need -= take;
      avail -= take;
    }
  }
  return m;
}

YCrCbImage apply_transport(const YCrCbImage& img, const SkinMask& mask, const MonotoneMap& map) {
  const LuminanceHistogram hist = skin_luminance_histogram(img, mask);
  if (hist != map.source()) throw MapMismatchError();

  // Row-major skin-pixel indices per source bin.
  std::array<std::vector<std::size_t>, 256> bin_pixels;
  const auto& bits = mask.bits();
  for (std::size_t i = 0; i < img.pixels().size(); ++i)
    if (bits[i]) bin_pixels[img.pixels()[i].y].push_back(i);

  YCrCbImage out = img;
  auto& px = out.pixels();
  for (int s = 0; s < 256; ++s) {
    std::size_t next = 0;
    for (const TransportPiece& piece : map.pieces(s))
      for (std::uint64_t k = 0; k < piece.count; ++k)
        px[bin_pixels[s][next++]].y = piece.target;
  }
  return out;
}

TransformEnsemble build_ensemble(const YCrCbImage& img, const SkinMask& mask,
                                 Direction direction, TransformMethod method,
                                 const EnsembleConfig& config) {
  if (config.mode_step <= 0) throw std::invalid_argument("mode_step must be positive");
  if (config.mode_min > config.mode_max)
    throw std::invalid_argument("mode grid bounds must satisfy min <= max");

  const LuminanceHistogram hist = skin_luminance_histogram(img, mask);  // EmptyMaskError
  TransformEnsemble ensemble{direction, method, {}};

  if (method == TransformMethod::ModeShift) {
    const int old_mode = luminance_mode(hist);
    const int sign = direction == Direction::Lighten ? 1 : -1;
    int last_target = old_mode;
    for (int k = 1;; ++k) {
      int target = old_mode + sign * k * config.mode_step;
      const bool clamped = target < config.mode_min || target > config.mode_max;
      target = std::clamp(target, config.mode_min, config.mode_max);
      const int delta = target - old_mode;
      // Stop once the grid leaves the direction or re-lands on the bound.
      if (sign * delta <= 0 || target == last_target) break;
      EnsembleMember member;
      member.method = method;
      member.delta = delta;
      member.target_mode = target;
      member.image = mode_shift(img, mask, ModeShiftSpec{target, ShiftScope::WholeImage});
      ensemble.members.push_back(std::move(member));
      last_target = target;
      if (clamped) break;  // bound emitted once
    }
  } else {
    const double img_mean = hist.mean();
    for (const Palette& palette : config.palettes) {
      if (palette.histogram.total() == 0) throw EmptyHistogramError();
      const double palette_mean = palette.histogram.mean();
      const bool lighter = palette_mean > img_mean;
      const bool darker = palette_mean < img_mean;
      if ((direction == Direction::Lighten && !lighter) ||
          (direction == Direction::Darken && !darker))
        continue;
      EnsembleMember member;
      member.method = method;
      member.palette = palette.name;
      member.image = apply_transport(img, mask, transport_map(hist, palette.histogram));
      ensemble.members.push_back(std::move(member));
    }
  }

  if (ensemble.members.empty()) throw EmptyEnsembleError();
  return ensemble;
}

Palette load_palette(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open palette: " + path.string());

  std::array<double, 256> mass{};
  for (int i = 0; i < 256; ++i) {
    if (!(in >> mass[i]))
      throw std::runtime_error("palette needs 256 values: " + path.string());
    if (!(mass[i] >= 0.0) || !std::isfinite(mass[i]))
      throw std::runtime_error("palette masses must be finite and nonnegative: " + path.string());
  }

  Palette palette;
  palette.name = path.stem().string();
  bool integral = true;
  double total = 0.0;
  for (double v : mass) {
    integral = integral && v == std::floor(v);
    total += v;
  }
  if (total <= 0.0) throw std::runtime_error("palette has zero total mass: " + path.string());

  if (integral) {
    for (int i = 0; i < 256; ++i)
      if (mass[i] > 0) palette.histogram.add(i, static_cast<std::uint64_t>(mass[i]));
  } else {
    // Fractional masses: keep proportions by rescaling to 1e6 counts.
    LuminanceHistogram coarse;
    double acc = 0.0;
    std::uint64_t emitted = 0;
    constexpr std::uint64_t kScale = 1'000'000;
    for (int i = 0; i < 256; ++i) {
      acc += mass[i];
      const auto upto = static_cast<std::uint64_t>(std::llround(acc / total * kScale));
      if (upto > emitted) coarse.add(i, upto - emitted);
      emitted = std::max(emitted, upto);
    }
    palette.histogram = coarse;
  }
  return palette;
}

std::vector<Palette> load_palette_dir(const std::filesystem::path& dir) {
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir))
    if (entry.is_regular_file() && entry.path().extension() == ".txt")
      files.push_back(entry.path());
  std::sort(files.begin(), files.end());
  std::vector<Palette> palettes;
  palettes.reserve(files.size());
  for (const auto& f : files) palettes.push_back(load_palette(f));
  return palettes;
}

const char* to_string(Direction d) {
  return d == Direction::Lighten ? "lighten" : "darken";
}

const char* to_string(TransformMethod m) {
  return m == TransformMethod::ModeShift ? "mode-shift" : "ot";
}

Direction parse_direction(const std::string& s) {
  if (s == "lighten") return Direction::Lighten;
  if (s == "darken") return Direction::Darken;
  throw std::invalid_argument("unknown direction: " + s);
}

TransformMethod parse_method(const std::string& s) {
  if (s == "mode-shift") return TransformMethod::ModeShift;
  if (s == "ot" || s == "optimal-transport") return TransformMethod::OptimalTransport;
  throw std::invalid_argument("unknown transform method: " + s);
}

}  // namespace faceaudit
