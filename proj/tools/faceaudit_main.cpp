#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "faceaudit/explain.hpp"
#include "faceaudit/image_io.hpp"
#include "faceaudit/manifest.hpp"
#include "faceaudit/model.hpp"
#include "faceaudit/remote.hpp"
#include "faceaudit/stability.hpp"

namespace {

using namespace faceaudit;

struct RuleFlags {
  int cr_min = 90, cr_max = 115, cb_min = 140, cb_max = 195;

  void attach(CLI::App* cmd) {
    cmd->add_option("--cr-min", cr_min, "Skin rule Cr lower bound")->check(CLI::Range(0, 255));
    cmd->add_option("--cr-max", cr_max, "Skin rule Cr upper bound")->check(CLI::Range(0, 255));
    cmd->add_option("--cb-min", cb_min, "Skin rule Cb lower bound")->check(CLI::Range(0, 255));
    cmd->add_option("--cb-max", cb_max, "Skin rule Cb upper bound")->check(CLI::Range(0, 255));
  }
  SkinRule rule() const {
    SkinRule r{cr_min, cr_max, cb_min, cb_max};
    r.validate();
    return r;
  }
};

struct ClassifierFlags {
  std::string model_path;
  std::string endpoint;

  void attach(CLI::App* cmd) {
    cmd->add_option("--model", model_path, "Checkpoint of the built-in classifier")
        ->check(CLI::ExistingFile);
    cmd->add_option("--endpoint", endpoint,
                    "Remote scoring endpoint (defaults to $" + std::string(kEndpointEnvVar) + ")");
  }
  std::unique_ptr<Classifier> make() const {
    if (!model_path.empty()) return std::make_unique<NetClassifier>(CompactNet::load(model_path));
    std::string url = endpoint;
    if (url.empty())
      if (const char* env = std::getenv(kEndpointEnvVar)) url = env;
    if (url.empty())
      throw std::runtime_error("no classifier: pass --model, --endpoint, or set " +
                               std::string(kEndpointEnvVar));
    RemoteConfig config;
    config.endpoint = url;
    return std::make_unique<RemoteClassifier>(config);
  }
};

struct DatasetEntry {
  ManifestRow row;
  RasterImage image;
};

std::vector<DatasetEntry> load_dataset(const std::filesystem::path& manifest_path,
                                       double crop_pad) {
  const auto rows = load_manifest(manifest_path);
  const auto root = manifest_path.parent_path();
  std::vector<DatasetEntry> entries;
  entries.reserve(rows.size());
  for (const ManifestRow& row : rows) {
    RasterImage img = load_image(root / row.path);
    if (row.crop) img = crop_face(img, *row.crop, crop_pad);
    entries.push_back({row, std::move(img)});
  }
  return entries;
}

struct FilterFlags {
  std::string gender, skin_type, hair_length;

  void attach(CLI::App* cmd) {
    cmd->add_option("--gender", gender, "Keep only rows with this gender")
        ->check(CLI::IsMember({"female", "male"}));
    cmd->add_option("--skin-type", skin_type, "Keep only rows with this skin type")
        ->check(CLI::IsMember({"dark", "light"}));
    cmd->add_option("--hair-length", hair_length, "Keep only rows with this hair length")
        ->check(CLI::IsMember({"short", "long", "unknown"}));
  }
  bool keeps(const ManifestRow& row) const {
    if (!gender.empty() && parse_gender(gender) != row.gender) return false;
    if (!skin_type.empty() && parse_skin_type(skin_type) != row.skin_type) return false;
    if (!hair_length.empty() && parse_hair_length(hair_length) != row.hair_length) return false;
    return true;
  }
  std::string label() const {
    std::string s;
    for (const std::string& part : {skin_type, gender, hair_length}) {
      if (part.empty()) continue;
      if (!s.empty()) s += " ";
      s += part;
    }
    return s.empty() ? "all" : s;
  }
};

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

// ---- detect-skin -----------------------------------------------------------

struct DetectOpts {
  std::string image, out;
  RuleFlags rule;
};

void run_detect(const DetectOpts& opt) {
  const RasterImage img = load_image(opt.image);
  const YCrCbImage ycc = rgb_to_ycrcb(img);
  const SkinMask mask = detect_skin(ycc, opt.rule.rule());

  const std::filesystem::path dir(opt.out);
  std::filesystem::create_directories(dir);
  save_mask(mask, dir / "mask.png");

  std::string summary;
  summary += "width: " + std::to_string(img.width()) + "\n";
  summary += "height: " + std::to_string(img.height()) + "\n";
  summary += "skin_pixels: " + std::to_string(mask.popcount()) + "\n";
  if (mask.popcount() > 0) {
    const LuminanceHistogram hist = skin_luminance_histogram(ycc, mask);
    write_histogram(hist, dir / "skin_hist.txt");
    summary += "skin_mode: " + std::to_string(luminance_mode(hist)) + "\n";
  }
  write_text(dir / "summary.txt", summary);
  std::cout << "skin pixels: " << mask.popcount() << " of " << img.width() * img.height() << "\n";
}

// ---- transform -------------------------------------------------------------

struct TransformOpts {
  std::string image, out, method = "mode-shift", palette, scope = "whole";
  int target_mode = 128;
  RuleFlags rule;
};

void run_transform(const TransformOpts& opt) {
  const RasterImage img = load_image(opt.image);
  const YCrCbImage ycc = rgb_to_ycrcb(img);
  const SkinMask mask = detect_skin(ycc, opt.rule.rule());

  nlohmann::json meta;
  YCrCbImage transformed;
  if (parse_method(opt.method) == TransformMethod::ModeShift) {
    ModeShiftSpec spec;
    spec.target_mode = opt.target_mode;
    spec.scope = opt.scope == "skin" ? ShiftScope::SkinOnly : ShiftScope::WholeImage;
    const int old_mode = luminance_mode(skin_luminance_histogram(ycc, mask));
    transformed = mode_shift(ycc, mask, spec);
    meta["method"] = "mode-shift";
    meta["old_mode"] = old_mode;
    meta["target_mode"] = spec.target_mode;
    meta["delta"] = spec.target_mode - old_mode;
    meta["scope"] = opt.scope;
  } else {
    if (opt.palette.empty()) throw std::runtime_error("--palette is required with --method ot");
    const Palette palette = load_palette(opt.palette);
    const LuminanceHistogram source = skin_luminance_histogram(ycc, mask);
    transformed = apply_transport(ycc, mask, transport_map(source, palette.histogram));
    meta["method"] = "ot";
    meta["palette"] = palette.name;
  }

  const std::filesystem::path out(opt.out);
  if (out.has_parent_path()) std::filesystem::create_directories(out.parent_path());
  save_image(ycrcb_to_rgb(transformed), out);
  write_text(out.string() + ".json", meta.dump(2) + "\n");
  std::cout << "wrote " << out.string() << "\n";
}

// ---- audit-stability -------------------------------------------------------

struct AuditOpts {
  std::string manifest, out, direction, method, palettes, group;
  double crop_pad = 0.0, threshold = 0.1, level = 0.95;
  int bins = 20, mode_step = 10, mode_min = 10, mode_max = 245;
  RuleFlags rule;
  ClassifierFlags classifier;
  FilterFlags filter;
};

void run_audit(const AuditOpts& opt) {
  const TransformMethod method = parse_method(opt.method);
  const Direction direction = parse_direction(opt.direction);

  EnsembleConfig config;
  config.mode_step = opt.mode_step;
  config.mode_min = opt.mode_min;
  config.mode_max = opt.mode_max;
  if (method == TransformMethod::OptimalTransport) {
    if (opt.palettes.empty()) throw std::runtime_error("--palettes is required with --method ot");
    config.palettes = load_palette_dir(opt.palettes);
    if (config.palettes.empty())
      throw std::runtime_error("no *.txt palettes under " + opt.palettes);
  }

  const SkinRule rule = opt.rule.rule();
  std::vector<StabilityItem> items;
  for (DatasetEntry& entry : load_dataset(opt.manifest, opt.crop_pad)) {
    if (!opt.filter.keeps(entry.row)) continue;
    StabilityItem item;
    item.id = entry.row.path;
    item.mask = detect_skin(rgb_to_ycrcb(entry.image), rule);
    item.image = std::move(entry.image);
    item.label = entry.row.gender;
    items.push_back(std::move(item));
  }
  if (items.empty()) throw std::runtime_error("no manifest rows match the filters");

  const auto classifier = opt.classifier.make();
  StabilityRunStats stats;
  auto records = run_stability(*classifier, items, direction, method, config, &stats);
  if (records.empty()) throw std::runtime_error("every image was excluded or skipped");

  StabilityReport report =
      build_report(opt.group.empty() ? opt.filter.label() : opt.group, direction, method,
                   std::move(records), opt.threshold, opt.level, opt.bins);
  report.excluded_no_face = stats.excluded_no_face;
  report.skipped_empty_ensemble = stats.skipped_empty_ensemble;
  export_report(report, opt.out);

  std::cout << "n: " << report.records.size() << "\n"
            << "fraction_stable: " << format_sig6(report.fraction_stable) << "\n"
            << "mean diff CI: [" << format_sig6(report.ci.lo) << ", " << format_sig6(report.ci.hi)
            << "]\n"
            << "flips: " << report.flips.to_correct << " to correct, "
            << report.flips.to_incorrect << " to incorrect\n";
}

// ---- accuracy-table --------------------------------------------------------

struct AccuracyOpts {
  std::string manifest, out, group_by = "gender";
  double crop_pad = 0.0;
  ClassifierFlags classifier;
};

void run_accuracy(const AccuracyOpts& opt) {
  std::vector<GroupAttr> attrs;
  {
    std::stringstream ss(opt.group_by);
    std::string part;
    while (std::getline(ss, part, ',')) attrs.push_back(parse_group_attr(part));
  }

  const auto classifier = opt.classifier.make();
  auto entries = load_dataset(opt.manifest, opt.crop_pad);
  std::vector<ManifestRow> scored_rows;
  std::map<std::string, double> scores;
  std::size_t excluded = 0;
  for (const DatasetEntry& entry : entries) {
    try {
      scores[entry.row.path] = classifier->score(entry.image).s;
      scored_rows.push_back(entry.row);
    } catch (const NoFaceError&) {
      ++excluded;
    }
  }
  if (scored_rows.empty()) throw std::runtime_error("no image was scored");

  const GroupAccuracyTable table = group_accuracy(scored_rows, scores, attrs);

  std::string csv = opt.group_by + ",n,correct,accuracy\n";
  for (const GroupCell& cell : table.cells) {
    csv += cell.key + "," + std::to_string(cell.n) + "," + std::to_string(cell.correct) + "," +
           format_sig6(cell.accuracy) + "\n";
  }
  if (!opt.out.empty()) {
    const std::filesystem::path out(opt.out);
    if (out.has_parent_path()) std::filesystem::create_directories(out.parent_path());
    write_text(out, csv);
  }
  std::cout << csv;
  if (excluded > 0) std::cout << "excluded_no_face: " << excluded << "\n";
}

// ---- explain ---------------------------------------------------------------

struct ExplainOpts {
  std::string manifest, model, out;
  double crop_pad = 0.0;
  CemParams params;
  FilterFlags filter;
};

void export_delta(const Tensor3& delta, const std::filesystem::path& base) {
  // Viewing copy rescaled so the largest entry maps to 255.
  double peak = 0.0;
  for (double v : delta.v) peak = std::max(peak, v);
  std::vector<std::uint8_t> gray(static_cast<std::size_t>(delta.height) * delta.width);
  for (int y = 0; y < delta.height; ++y)
    for (int x = 0; x < delta.width; ++x) {
      double v = 0.0;
      for (int c = 0; c < delta.channels; ++c) v += delta.at(c, y, x);
      v /= delta.channels;
      gray[static_cast<std::size_t>(y) * delta.width + x] =
          peak > 0.0 ? static_cast<std::uint8_t>(std::lround(v / peak * 255.0)) : 0;
    }
  save_gray(delta.width, delta.height, gray, base.string() + ".png");

  std::ofstream raw(base.string() + ".csv");
  if (!raw) throw std::runtime_error("cannot write " + base.string() + ".csv");
  raw << "channel,y,x,value\n";
  char buf[64];
  for (int c = 0; c < delta.channels; ++c)
    for (int y = 0; y < delta.height; ++y)
      for (int x = 0; x < delta.width; ++x) {
        std::snprintf(buf, sizeof(buf), "%.17g", delta.at(c, y, x));
        raw << c << "," << y << "," << x << "," << buf << "\n";
      }
}

std::string safe_stem(const std::string& path) {
  std::string stem = std::filesystem::path(path).stem().string();
  for (char& ch : stem)
    if (ch == '/' || ch == '\\' || ch == ',') ch = '_';
  return stem;
}

void run_explain(const ExplainOpts& opt) {
  const CompactNet net = CompactNet::load(opt.model);
  const Preprocessor prep{net.arch().input_side, net.arch().input_channels};

  const std::filesystem::path dir(opt.out);
  std::filesystem::create_directories(dir / "masks");

  std::map<Gender, std::vector<PertinentPositive>> groups;
  std::string diag = "image,gender,chosen_c,f_kappa,l1,iterations,converged\n";
  std::size_t misclassified = 0;
  std::size_t explained = 0;

  auto entries = load_dataset(opt.manifest, opt.crop_pad);
  std::set<std::string> stems;
  for (const DatasetEntry& entry : entries) {
    if (!opt.filter.keeps(entry.row)) continue;
    const Tensor3 x = prep.run(entry.image);
    if (net.score(x).decision() != entry.row.gender) {  // explain correct decisions only
      ++misclassified;
      continue;
    }
    PertinentPositive pp = search_c(net, x, entry.row.gender, opt.params);

    std::string stem = safe_stem(entry.row.path);
    while (!stems.insert(stem).second) stem += "_";
    export_delta(pp.delta, dir / "masks" / stem);

    diag += entry.row.path;
    diag += ",";
    diag += to_string(entry.row.gender);
    diag += "," + format_sig6(pp.chosen_c) + "," + format_sig6(pp.achieved_f_kappa) + "," +
            format_sig6(l1_norm(pp.delta)) + "," + std::to_string(pp.objective_trace.size() - 1) +
            "," + (pp.converged ? "yes" : "no") + "\n";
    groups[entry.row.gender].push_back(std::move(pp));
    ++explained;
  }
  if (groups.empty()) throw std::runtime_error("no correctly classified image to explain");

  for (const auto& [gender, members] : groups) {
    try {
      const AverageMask avg = average_mask(to_string(gender), members);
      export_delta(avg.mean, dir / (std::string("average_") + to_string(gender)));
      diag += std::string("average_") + to_string(gender) + ": " + std::to_string(avg.count) +
              " converged\n";
    } catch (const EmptyGroupError&) {
      diag += std::string("average_") + to_string(gender) + ": no converged member\n";
    }
  }
  if (misclassified > 0) diag += "skipped_misclassified: " + std::to_string(misclassified) + "\n";
  write_text(dir / "explain.txt", diag);
  std::cout << "explained " << explained << " images (" << misclassified
            << " skipped as misclassified)\n";
}

// ---- train-model -----------------------------------------------------------

struct TrainOpts {
  std::string manifest, out;
  double crop_pad = 0.0;
  TrainConfig config;
};

void run_train(const TrainOpts& opt) {
  opt.config.validate();
  std::vector<TrainExample> data;
  for (DatasetEntry& entry : load_dataset(opt.manifest, opt.crop_pad)) {
    const Preprocessor prep{opt.config.input_side, opt.config.input_channels};
    data.push_back({prep.run(entry.image), entry.row.gender});
  }
  if (data.empty()) throw std::runtime_error("manifest has no rows");

  std::vector<double> epoch_loss;
  const CompactNet net = train(opt.config, data, &epoch_loss);

  const std::filesystem::path out(opt.out);
  if (out.has_parent_path()) std::filesystem::create_directories(out.parent_path());
  net.save(out);

  std::cout << "initial loss: " << format_sig6(epoch_loss.front()) << "\n";
  std::cout << "final loss: " << format_sig6(epoch_loss.back()) << "\n";
  std::cout << "train accuracy: " << format_sig6(dataset_accuracy(net, data)) << "\n";
  std::cout << "wrote " << out.string() << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Skin-tone stability audits for face gender classifiers"};
  app.require_subcommand(1);

  DetectOpts detect_opts;
  auto* detect = app.add_subcommand("detect-skin", "Detect skin pixels and histogram their luminance");
  detect->add_option("--image", detect_opts.image, "Input image")->required()->check(CLI::ExistingFile);
  detect->add_option("--out", detect_opts.out, "Output directory")->required();
  detect_opts.rule.attach(detect);

  TransformOpts transform_opts;
  auto* transform = app.add_subcommand("transform", "Rewrite skin luminance in one image");
  transform->add_option("--image", transform_opts.image, "Input image")->required()->check(CLI::ExistingFile);
  transform->add_option("--out", transform_opts.out, "Output image path")->required();
  transform->add_option("--method", transform_opts.method, "mode-shift or ot")
      ->check(CLI::IsMember({"mode-shift", "ot"}));
  transform->add_option("--target-mode", transform_opts.target_mode, "Target skin mode (mode-shift)")
      ->check(CLI::Range(0, 255));
  transform->add_option("--scope", transform_opts.scope, "mode-shift scope: whole or skin")
      ->check(CLI::IsMember({"whole", "skin"}));
  transform->add_option("--palette", transform_opts.palette, "Target palette file (ot)")
      ->check(CLI::ExistingFile);
  transform_opts.rule.attach(transform);

  AuditOpts audit_opts;
  auto* audit = app.add_subcommand("audit-stability", "Score a manifest under a transform ensemble");
  audit->add_option("--manifest", audit_opts.manifest, "Dataset manifest")->required()->check(CLI::ExistingFile);
  audit->add_option("--out", audit_opts.out, "Report directory")->required();
  audit->add_option("--direction", audit_opts.direction, "lighten or darken")->required()
      ->check(CLI::IsMember({"lighten", "darken"}));
  audit->add_option("--method", audit_opts.method, "mode-shift or ot")->required()
      ->check(CLI::IsMember({"mode-shift", "ot"}));
  audit->add_option("--palettes", audit_opts.palettes, "Palette directory (ot)")->check(CLI::ExistingDirectory);
  audit->add_option("--group", audit_opts.group, "Report group label");
  audit->add_option("--crop-pad", audit_opts.crop_pad, "Extra crop margin as a fraction of box size");
  audit->add_option("--threshold", audit_opts.threshold, "Stability threshold on |diff|");
  audit->add_option("--level", audit_opts.level, "Confidence level for the t interval");
  audit->add_option("--bins", audit_opts.bins, "Diff histogram bins")->check(CLI::PositiveNumber);
  audit->add_option("--mode-step", audit_opts.mode_step, "Mode-shift grid step")->check(CLI::PositiveNumber);
  audit->add_option("--mode-min", audit_opts.mode_min, "Lowest target mode")->check(CLI::Range(0, 255));
  audit->add_option("--mode-max", audit_opts.mode_max, "Highest target mode")->check(CLI::Range(0, 255));
  audit_opts.rule.attach(audit);
  audit_opts.classifier.attach(audit);
  audit_opts.filter.attach(audit);

  AccuracyOpts accuracy_opts;
  auto* accuracy = app.add_subcommand("accuracy-table", "Intersectional accuracy over a manifest");
  accuracy->add_option("--manifest", accuracy_opts.manifest, "Dataset manifest")->required()->check(CLI::ExistingFile);
  accuracy->add_option("--group-by", accuracy_opts.group_by,
                       "Comma-separated attributes: gender, skin_type, hair_length");
  accuracy->add_option("--out", accuracy_opts.out, "Also write the table to this CSV file");
  accuracy->add_option("--crop-pad", accuracy_opts.crop_pad, "Extra crop margin as a fraction of box size");
  accuracy_opts.classifier.attach(accuracy);

  ExplainOpts explain_opts;
  auto* explain = app.add_subcommand("explain", "Pertinent-positive explanations for the built-in model");
  explain->add_option("--manifest", explain_opts.manifest, "Dataset manifest")->required()->check(CLI::ExistingFile);
  explain->add_option("--model", explain_opts.model, "Checkpoint of the built-in classifier")
      ->required()->check(CLI::ExistingFile);
  explain->add_option("--out", explain_opts.out, "Output directory")->required();
  explain->add_option("--crop-pad", explain_opts.crop_pad, "Extra crop margin as a fraction of box size");
  explain->add_option("--kappa", explain_opts.params.kappa, "Hinge margin");
  explain->add_option("--beta", explain_opts.params.beta, "L1 weight");
  explain->add_option("--c-grid", explain_opts.params.c_grid, "Hinge weights to search");
  explain->add_option("--max-iters", explain_opts.params.max_iters, "Iteration cap")->check(CLI::PositiveNumber);
  explain->add_option("--step-size", explain_opts.params.step_size, "Initial proximal step");
  explain->add_option("--tolerance", explain_opts.params.tolerance, "Convergence tolerance");
  explain_opts.filter.attach(explain);

  TrainOpts train_opts;
  auto* train_cmd = app.add_subcommand("train-model", "Train the built-in classifier on a manifest");
  train_cmd->add_option("--manifest", train_opts.manifest, "Dataset manifest")->required()->check(CLI::ExistingFile);
  train_cmd->add_option("--out", train_opts.out, "Checkpoint path")->required();
  train_cmd->add_option("--crop-pad", train_opts.crop_pad, "Extra crop margin as a fraction of box size");
  train_cmd->add_option("--side", train_opts.config.input_side, "Model input side")->check(CLI::PositiveNumber);
  train_cmd->add_option("--channels", train_opts.config.input_channels, "1 (luma) or 3 (RGB)")
      ->check(CLI::IsMember({1, 3}));
  train_cmd->add_option("--conv", train_opts.config.conv_channels, "Conv block output channels");
  train_cmd->add_option("--dense", train_opts.config.dense_hidden, "Hidden dense layer sizes");
  train_cmd->add_option("--lr", train_opts.config.learning_rate, "Learning rate");
  train_cmd->add_option("--epochs", train_opts.config.epochs, "Training epochs")->check(CLI::PositiveNumber);
  train_cmd->add_option("--batch-size", train_opts.config.batch_size, "Minibatch size")->check(CLI::PositiveNumber);
  train_cmd->add_option("--seed", train_opts.config.seed, "Init and shuffle seed");

  CLI11_PARSE(app, argc, argv);

  try {
    if (detect->parsed()) run_detect(detect_opts);
    if (transform->parsed()) run_transform(transform_opts);
    if (audit->parsed()) run_audit(audit_opts);
    if (accuracy->parsed()) run_accuracy(accuracy_opts);
    if (explain->parsed()) run_explain(explain_opts);
    if (train_cmd->parsed()) run_train(train_opts);
  } catch (const std::exception& err) {
    std::cerr << "faceaudit: " << err.what() << "\n";
    return 1;
  }
  return 0;
}
