#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "faceaudit/image.hpp"

namespace faceaudit {

enum class ShiftScope { WholeImage, SkinOnly };

/// Uniform additive shift of the Y channel that moves the modal skin
/// luminance to target_mode. Default scope shifts every pixel's Y.
struct ModeShiftSpec {
  int target_mode = 128;
  ShiftScope scope = ShiftScope::WholeImage;

  void validate() const;
};

struct TransportPiece {
  std::uint64_t count = 0;
  std::uint8_t target = 0;
};

struct MapMismatchError : std::runtime_error {
  MapMismatchError()
      : std::runtime_error("transport map was built from a different skin histogram") {}
};
struct EmptyEnsembleError : std::runtime_error {
  EmptyEnsembleError()
      : std::runtime_error("no ensemble member matches the requested direction") {}
};

/// Monotone rearrangement of one 256-bin luminance distribution onto
/// another. Each source bin carries an ordered list of (count, target)
/// pieces; bins whose mass straddles a target boundary carry several.
class MonotoneMap {
 public:
  MonotoneMap() = default;

  /// Target Y of the first piece of a source bin; identity on massless bins.
  int map(int source_bin) const;
  /// Assignment pieces for a source bin, targets ascending.
  const std::vector<TransportPiece>& pieces(int source_bin) const;
  /// True when the bin's mass is divided over more than one target.
  bool splits(int source_bin) const { return pieces(source_bin).size() > 1; }

  const LuminanceHistogram& source() const { return source_; }
  /// Integer target masses after normalization and rounding.
  const LuminanceHistogram& rounded_target() const { return rounded_target_; }

 private:
  friend MonotoneMap transport_map(const LuminanceHistogram&, const LuminanceHistogram&);
  LuminanceHistogram source_;
  LuminanceHistogram rounded_target_;
  std::array<std::vector<TransportPiece>, 256> pieces_{};
};

enum class Direction { Lighten, Darken };
enum class TransformMethod { ModeShift, OptimalTransport };

/// A named reference skin-luminance distribution.
struct Palette {
  std::string name;
  LuminanceHistogram histogram;
};

struct EnsembleMember {
  YCrCbImage image;
  TransformMethod method = TransformMethod::ModeShift;
  int delta = 0;        // mode-shift only
  int target_mode = 0;  // mode-shift only
  std::string palette;  // optimal transport only
};

struct TransformEnsemble {
  Direction direction = Direction::Lighten;
  TransformMethod method = TransformMethod::ModeShift;
  std::vector<EnsembleMember> members;
};

struct EnsembleConfig {
  int mode_step = 10;
  int mode_min = 10;
  int mode_max = 245;
  std::vector<Palette> palettes;
};

/// Argmax bin of the histogram; ties resolved to the lowest Y value.
int luminance_mode(const LuminanceHistogram& hist);

/// Shifts Y by delta = target_mode - current skin mode, clipping to
/// [0,255]. Chrominance is never touched.
YCrCbImage mode_shift(const YCrCbImage& img, const SkinMask& mask, const ModeShiftSpec& spec);

/// Monotone quantile-matching map from the source onto the target
/// distribution (1-D quadratic-cost transport in closed form). The target
/// is normalized and rescaled to the source pixel count with
/// largest-remainder rounding.
MonotoneMap transport_map(const LuminanceHistogram& source, const LuminanceHistogram& target);

/// Rewrites skin-pixel Y values through the map. Within a split bin,
/// pixels take targets in ascending order by ascending row-major index.
/// Non-skin pixels and all chrominance are untouched.
YCrCbImage apply_transport(const YCrCbImage& img, const SkinMask& mask, const MonotoneMap& map);

/// Lighten/darken ensemble: mode-shift walks the target grid
/// {old_mode +/- step, 2*step, ...} clamped to [mode_min, mode_max];
/// optimal transport takes one member per palette whose mean Y lies on the
/// requested side of the image's mean skin Y.
TransformEnsemble build_ensemble(const YCrCbImage& img, const SkinMask& mask,
                                 Direction direction, TransformMethod method,
                                 const EnsembleConfig& config);

/// Palette file format: 256 whitespace-separated nonnegative masses.
/// Fractional masses are rescaled to integer counts totaling 1e6.
Palette load_palette(const std::filesystem::path& path);

/// Loads every "*.txt" in the directory, sorted by filename.
std::vector<Palette> load_palette_dir(const std::filesystem::path& dir);

const char* to_string(Direction d);
const char* to_string(TransformMethod m);
Direction parse_direction(const std::string& s);
TransformMethod parse_method(const std::string& s);

}  // namespace faceaudit
