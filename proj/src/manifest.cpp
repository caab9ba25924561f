#include "faceaudit/manifest.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

namespace faceaudit {

const char* to_string(SkinType s) { return s == SkinType::Dark ? "dark" : "light"; }

const char* to_string(HairLength h) {
  switch (h) {
    case HairLength::Short: return "short";
    case HairLength::Long: return "long";
    default: return "unknown";
  }
}

SkinType parse_skin_type(const std::string& s) {
  if (s == "dark") return SkinType::Dark;
  if (s == "light") return SkinType::Light;
  throw std::invalid_argument("unknown skin type: " + s);
}

HairLength parse_hair_length(const std::string& s) {
  if (s == "short") return HairLength::Short;
  if (s == "long") return HairLength::Long;
  if (s == "unknown") return HairLength::Unknown;
  throw std::invalid_argument("unknown hair length: " + s);
}

GroupAttr parse_group_attr(const std::string& s) {
  if (s == "gender") return GroupAttr::Gender;
  if (s == "skin_type") return GroupAttr::SkinType;
  if (s == "hair_length") return GroupAttr::HairLength;
  throw std::invalid_argument("unknown group attribute: " + s);
}

const char* to_string(GroupAttr a) {
  switch (a) {
    case GroupAttr::Gender: return "gender";
    case GroupAttr::SkinType: return "skin_type";
    default: return "hair_length";
  }
}

namespace {

constexpr const char* kHeader = "path,gender,skin_type,hair_length,crop_x,crop_y,crop_w,crop_h";

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      fields.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(ch);
    }
  }
  fields.push_back(cur);
  return fields;
}

std::string trim(const std::string& s) {
  auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

int parse_crop_value(const std::string& s, std::size_t line, const char* what) {
  try {
    std::size_t pos = 0;
    const int v = std::stoi(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ManifestParseError(line, std::string("bad ") + what + " value: " + s);
  }
}

}  // namespace

std::vector<ManifestRow> load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw MissingFileError(path.string());
  const std::filesystem::path root = path.parent_path();

  std::string line;
  std::size_t lineno = 0;
  if (!std::getline(in, line)) throw ManifestParseError(1, "empty manifest");
  ++lineno;
  if (trim(line) != kHeader)
    throw ManifestParseError(1, std::string("expected header: ") + kHeader);

  std::vector<ManifestRow> rows;
  std::set<std::string> seen;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    auto fields = split_fields(line);
    if (fields.size() != 8)
      throw ManifestParseError(lineno, "expected 8 fields, got " + std::to_string(fields.size()));
    for (auto& f : fields) f = trim(f);

    ManifestRow row;
    row.path = fields[0];
    if (row.path.empty()) throw ManifestParseError(lineno, "empty path");
    if (!seen.insert(row.path).second)
      throw ManifestParseError(lineno, "duplicate path: " + row.path);
    if (!std::filesystem::exists(root / row.path))
      throw ManifestParseError(lineno, "file does not exist: " + (root / row.path).string());

    try {
      row.gender = parse_gender(fields[1]);
      row.skin_type = parse_skin_type(fields[2]);
      row.hair_length = parse_hair_length(fields[3]);
    } catch (const std::invalid_argument& err) {
      throw ManifestParseError(lineno, err.what());
    }

    const bool any_crop = !fields[4].empty() || !fields[5].empty() || !fields[6].empty() ||
                          !fields[7].empty();
    const bool all_crop = !fields[4].empty() && !fields[5].empty() && !fields[6].empty() &&
                          !fields[7].empty();
    if (any_crop && !all_crop)
      throw ManifestParseError(lineno, "crop box needs all four of crop_x,crop_y,crop_w,crop_h");
    if (all_crop) {
      CropBox box;
      box.x = parse_crop_value(fields[4], lineno, "crop_x");
      box.y = parse_crop_value(fields[5], lineno, "crop_y");
      box.width = parse_crop_value(fields[6], lineno, "crop_w");
      box.height = parse_crop_value(fields[7], lineno, "crop_h");
      if (box.x < 0 || box.y < 0 || box.width < 1 || box.height < 1)
        throw ManifestParseError(lineno, "crop box must have nonnegative origin and positive size");
      row.crop = box;
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

void save_manifest(const std::vector<ManifestRow>& rows, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << kHeader << "\n";
  for (const ManifestRow& row : rows) {
    out << row.path << "," << to_string(row.gender) << "," << to_string(row.skin_type) << ","
        << to_string(row.hair_length) << ",";
    if (row.crop)
      out << row.crop->x << "," << row.crop->y << "," << row.crop->width << ","
          << row.crop->height;
    else
      out << ",,,";
    out << "\n";
  }
}

namespace {

std::string cell_key(const ManifestRow& row, const std::vector<GroupAttr>& group_by) {
  std::string key;
  for (std::size_t i = 0; i < group_by.size(); ++i) {
    if (i) key += ",";
    switch (group_by[i]) {
      case GroupAttr::Gender: key += to_string(row.gender); break;
      case GroupAttr::SkinType: key += to_string(row.skin_type); break;
      case GroupAttr::HairLength: key += to_string(row.hair_length); break;
    }
  }
  return key;
}

}  // namespace

GroupAccuracyTable group_accuracy(const std::vector<ManifestRow>& rows,
                                  const std::map<std::string, double>& scores,
                                  const std::vector<GroupAttr>& group_by) {
  if (group_by.empty()) throw std::invalid_argument("group_by must name at least one attribute");
  std::map<std::string, GroupCell> cells;
  for (const ManifestRow& row : rows) {
    const auto it = scores.find(row.path);
    if (it == scores.end()) throw MissingScoreError(row.path);
    const bool correct = (it->second > 0.5) == (row.gender == Gender::Male);
    GroupCell& cell = cells[cell_key(row, group_by)];
    ++cell.n;
    if (correct) ++cell.correct;
  }

  GroupAccuracyTable table;
  table.group_by = group_by;
  for (auto& [key, cell] : cells) {
    cell.key = key;
    cell.accuracy = static_cast<double>(cell.correct) / static_cast<double>(cell.n);
    table.cells.push_back(cell);
  }
  return table;
}

}  // namespace faceaudit
