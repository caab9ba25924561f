#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "faceaudit/gender.hpp"
#include "faceaudit/image.hpp"

namespace faceaudit {

struct ManifestParseError : std::runtime_error {
  ManifestParseError(std::size_t line, const std::string& reason)
      : std::runtime_error("manifest line " + std::to_string(line) + ": " + reason), line(line) {}
  std::size_t line;
};
struct MissingFileError : std::runtime_error {
  explicit MissingFileError(const std::string& path)
      : std::runtime_error("missing file: " + path) {}
};
struct MissingScoreError : std::runtime_error {
  explicit MissingScoreError(const std::string& path)
      : std::runtime_error("no score for manifest row: " + path) {}
};

enum class SkinType { Dark, Light };
enum class HairLength { Short, Long, Unknown };

const char* to_string(SkinType s);
const char* to_string(HairLength h);
SkinType parse_skin_type(const std::string& s);
HairLength parse_hair_length(const std::string& s);

/// One dataset image with its demographic labels and optional face crop.
/// The path is kept verbatim; relative paths resolve against the manifest
/// file's directory.
struct ManifestRow {
  std::string path;
  Gender gender = Gender::Female;
  SkinType skin_type = SkinType::Dark;
  HairLength hair_length = HairLength::Unknown;
  std::optional<CropBox> crop;

  bool operator==(const ManifestRow&) const = default;
};

/// Comma-separated with header
/// path,gender,skin_type,hair_length,crop_x,crop_y,crop_w,crop_h; the four
/// crop cells are either all present or all empty. Duplicate paths and rows
/// pointing at nonexistent files are rejected.
std::vector<ManifestRow> load_manifest(const std::filesystem::path& path);

void save_manifest(const std::vector<ManifestRow>& rows, const std::filesystem::path& path);

enum class GroupAttr { Gender, SkinType, HairLength };

GroupAttr parse_group_attr(const std::string& s);
const char* to_string(GroupAttr a);

struct GroupCell {
  std::string key;  // attribute values joined with ","
  std::size_t n = 0;
  std::size_t correct = 0;
  double accuracy = 0.0;
};

struct GroupAccuracyTable {
  std::vector<GroupAttr> group_by;
  std::vector<GroupCell> cells;  // sorted by key
};

/// Accuracy per intersection cell of the chosen attributes. correct means
/// (score > 0.5) == (gender == male). Every row must have a score keyed by
/// its path.
GroupAccuracyTable group_accuracy(const std::vector<ManifestRow>& rows,
                                  const std::map<std::string, double>& scores,
                                  const std::vector<GroupAttr>& group_by);

}  // namespace faceaudit
