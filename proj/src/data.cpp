#include "swapdetect/data.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <sstream>

namespace fs = std::filesystem;
using nlohmann::json;

namespace swapdetect {

std::string to_string(Split split) {
  switch (split) {
    case Split::kTrain: return "train";
    case Split::kVal: return "val";
    case Split::kTest: return "test";
    default: return "unassigned";
  }
}

Split split_from_string(const std::string& name) {
  if (name == "train") return Split::kTrain;
  if (name == "val") return Split::kVal;
  if (name == "test") return Split::kTest;
  if (name == "unassigned") return Split::kUnassigned;
  throw ValidationError("unknown split '" + name + "'");
}

std::vector<std::size_t> DatasetManifest::indices(Split split) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < records.size(); ++i)
    if (records[i].split == split) out.push_back(i);
  return out;
}

std::size_t DatasetManifest::count(Split split, int label) const {
  std::size_t n = 0;
  for (const PairRecord& r : records)
    if (r.split == split && r.label == label) ++n;
  return n;
}

std::string DatasetManifest::resolve_path(const std::string& path) const {
  fs::path p(path);
  if (p.is_absolute() || base_dir.empty()) return path;
  return (fs::path(base_dir) / p).string();
}

std::vector<std::string> DatasetManifest::techniques(Split split) const {
  std::vector<std::string> out;
  for (const PairRecord& r : records) {
    if (r.split != split) continue;
    if (std::find(out.begin(), out.end(), r.technique) == out.end())
      out.push_back(r.technique);
  }
  return out;
}

namespace {

const char* kKnownKeys[] = {"pair_id", "real_path", "suspicious_path",
                            "label",   "technique", "scenario",
                            "split"};

json record_to_json(const PairRecord& r) {
  json j = r.extra;
  j["pair_id"] = r.pair_id;
  j["real_path"] = r.real_path;
  j["suspicious_path"] = r.suspicious_path;
  j["label"] = r.label;
  j["technique"] = r.technique;
  if (!r.scenario.empty()) j["scenario"] = r.scenario;
  if (r.split != Split::kUnassigned) j["split"] = to_string(r.split);
  return j;
}

PairRecord record_from_json(const json& j, std::size_t line_no) {
  auto fail = [line_no](const std::string& what) {
    std::ostringstream msg;
    msg << "manifest line " << line_no << ": " << what;
    return ValidationError(msg.str());
  };
  PairRecord r;
  try {
    r.pair_id = j.at("pair_id").get<std::string>();
    r.real_path = j.at("real_path").get<std::string>();
    r.suspicious_path = j.at("suspicious_path").get<std::string>();
    r.label = j.at("label").get<int>();
  } catch (const json::exception& e) {
    throw fail(e.what());
  }
  if (r.label != 0 && r.label != 1) throw fail("label must be 0 or 1");
  r.technique = j.value("technique", "");
  r.scenario = j.value("scenario", "");
  if (j.contains("split")) r.split = split_from_string(j.at("split"));
  r.extra = j;
  for (const char* key : kKnownKeys) r.extra.erase(key);
  return r;
}

}  // namespace

DatasetManifest load_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest: " + path);

  DatasetManifest manifest;
  manifest.base_dir = fs::path(path).parent_path().string();
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      std::ostringstream msg;
      msg << "manifest line " << line_no << ": " << e.what();
      throw ValidationError(msg.str());
    }
    if (j.is_object() && j.value("kind", "") == "header") {
      manifest.split_seed = j.value("split_seed", std::uint64_t{0});
      continue;
    }
    manifest.records.push_back(record_from_json(j, line_no));
  }
  return manifest;
}

void save_manifest(const DatasetManifest& manifest, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write manifest: " + path);
  json header = {{"kind", "header"},
                 {"format", 1},
                 {"split_seed", manifest.split_seed}};
  out << header.dump() << '\n';
  for (const PairRecord& r : manifest.records) out << record_to_json(r).dump() << '\n';
  if (!out) throw IoError("short write: " + path);
}

void validate_manifest(const DatasetManifest& manifest) {
  for (const PairRecord& r : manifest.records) {
    if (!fs::exists(manifest.resolve_path(r.real_path)))
      throw ValidationError("pair '" + r.pair_id +
                            "': missing real image " + r.real_path);
    if (!fs::exists(manifest.resolve_path(r.suspicious_path)))
      throw ValidationError("pair '" + r.pair_id +
                            "': missing suspicious image " + r.suspicious_path);
  }
}

DatasetManifest split_dataset(const DatasetManifest& manifest,
                              double train_fraction, std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0))
    throw ConfigError("train_fraction must lie in (0, 1)");
  if (manifest.records.empty()) throw ValidationError("empty manifest");
  for (const PairRecord& r : manifest.records)
    if (r.split == Split::kTrain || r.split == Split::kVal)
      throw ValidationError("manifest already carries train/val assignments");

  DatasetManifest out = manifest;
  out.split_seed = seed;
  for (int label : {0, 1}) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < out.records.size(); ++i)
      if (out.records[i].split == Split::kUnassigned &&
          out.records[i].label == label)
        idx.push_back(i);
    if (idx.empty()) continue;
    Rng rng = derive_rng(seed, "split", static_cast<std::uint64_t>(label));
    for (std::size_t i = idx.size(); i > 1; --i)
      std::swap(idx[i - 1],
                idx[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i) - 1))]);
    const auto n_train = static_cast<std::size_t>(
        std::llround(train_fraction * static_cast<double>(idx.size())));
    for (std::size_t k = 0; k < idx.size(); ++k)
      out.records[idx[k]].split = k < n_train ? Split::kTrain : Split::kVal;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Synthetic oracle rendering.

namespace {

constexpr Index kImageSize = kDefaultImageSize;

struct Rgb {
  double v[3];
};

inline Rgb lerp(const Rgb& a, const Rgb& b, double t) {
  return {{a.v[0] + t * (b.v[0] - a.v[0]), a.v[1] + t * (b.v[1] - a.v[1]),
           a.v[2] + t * (b.v[2] - a.v[2])}};
}

}  // namespace

SyntheticIdentity SyntheticIdentity::draw(std::uint64_t seed, int identity_id) {
  Rng rng = derive_rng(seed, "identity", static_cast<std::uint64_t>(identity_id));
  SyntheticIdentity id;
  id.identity_id = identity_id;
  for (double& c : id.skin) c = rng.uniform(0.30, 0.85);
  for (double& c : id.accent) c = rng.uniform(0.10, 0.90);
  for (double& c : id.eye) c = rng.uniform(0.05, 0.60);
  id.freq1 = rng.uniform(6.0, 18.0);
  id.orient1 = rng.uniform(0.0, std::numbers::pi);
  id.amp1 = rng.uniform(0.10, 0.22);
  id.phase1 = rng.uniform(0.0, 2.0 * std::numbers::pi);
  id.freq2 = rng.uniform(18.0, 40.0);
  id.orient2 = rng.uniform(0.0, std::numbers::pi);
  id.amp2 = rng.uniform(0.05, 0.12);
  id.phase2 = rng.uniform(0.0, 2.0 * std::numbers::pi);
  id.face_radius = rng.uniform(0.28, 0.36);
  id.aspect = rng.uniform(1.15, 1.45);
  id.eye_dx = rng.uniform(0.32, 0.42);
  id.eye_dy = rng.uniform(-0.34, -0.22);
  id.eye_radius = rng.uniform(0.10, 0.14);
  id.mouth_y = rng.uniform(0.36, 0.50);
  id.mouth_w = rng.uniform(0.45, 0.65);
  return id;
}

ContentParams ContentParams::draw(Rng& rng) {
  ContentParams c;
  for (double& v : c.bg0) v = rng.uniform(0.0, 1.0);
  for (double& v : c.bg1) v = rng.uniform(0.0, 1.0);
  c.bg_angle = rng.uniform(0.0, 2.0 * std::numbers::pi);
  c.offset_x = rng.uniform(-0.05, 0.05);
  c.offset_y = rng.uniform(-0.05, 0.05);
  c.rotation = rng.uniform(-0.18, 0.18);
  c.scale = rng.uniform(0.85, 1.10);
  c.brightness = rng.uniform(0.92, 1.08);
  c.mouth_curve = rng.uniform(-0.4, 0.4);
  c.eye_openness = rng.uniform(0.55, 1.0);
  return c;
}

namespace {

// Identity-colored face pixel in face-local unit coordinates (qx, qy), where
// the face interior is the unit disc of (qx, qy/aspect)... qx, qy already
// normalized per-axis: interior is qx^2 + qy^2 <= 1.
Rgb face_color(const SyntheticIdentity& id, const ContentParams& content,
               double qx, double qy) {
  const double tex =
      id.amp1 * std::sin(2.0 * std::numbers::pi * id.freq1 *
                             (qx * std::cos(id.orient1) + qy * std::sin(id.orient1)) +
                         id.phase1) +
      id.amp2 * std::sin(2.0 * std::numbers::pi * id.freq2 *
                             (qx * std::cos(id.orient2) + qy * std::sin(id.orient2)) +
                         id.phase2);
  Rgb col{{id.skin[0], id.skin[1], id.skin[2]}};
  const Rgb accent{{id.accent[0], id.accent[1], id.accent[2]}};
  col = lerp(col, accent, std::clamp(0.5 + tex, 0.0, 1.0) *
                              std::clamp(std::abs(tex) * 3.0, 0.0, 1.0));

  const double r2 = qx * qx + qy * qy;
  // Soft radial shading.
  const double shade = 1.0 - 0.22 * r2 * r2;
  for (double& v : col.v) v *= shade;

  // Eyes.
  const double openness = content.eye_openness;
  for (double sx : {-1.0, 1.0}) {
    const double ex = (qx - sx * id.eye_dx) / id.eye_radius;
    const double ey = (qy - id.eye_dy) / (id.eye_radius * openness);
    const double er2 = ex * ex + ey * ey;
    if (er2 <= 1.0) {
      const Rgb eye{{id.eye[0], id.eye[1], id.eye[2]}};
      const Rgb white{{0.92, 0.92, 0.90}};
      col = er2 <= 0.45 ? eye : white;
    } else if (er2 <= 1.35) {
      for (double& v : col.v) v *= 0.75;  // lid outline
    }
  }

  // Mouth with content-driven curvature.
  const double mx = qx / id.mouth_w;
  if (std::abs(mx) <= 1.0) {
    const double center = id.mouth_y + content.mouth_curve * 0.12 * mx * mx;
    const double my = (qy - center) / 0.055;
    if (my * my + mx * mx * 0.3 <= 1.0) {
      col = {{id.skin[0] * 0.45, id.skin[1] * 0.35, id.skin[2] * 0.40}};
    }
  }
  return col;
}

struct FaceFrame {
  double cx, cy;    // center in pixels
  double rx, ry;    // radii in pixels
  double cos_r, sin_r;
};

FaceFrame face_frame(const SyntheticIdentity& id, const ContentParams& content) {
  FaceFrame f;
  f.cx = (0.5 + content.offset_x) * kImageSize;
  f.cy = (0.47 + content.offset_y) * kImageSize;
  f.rx = id.face_radius * kImageSize * content.scale;
  f.ry = f.rx * id.aspect;
  f.cos_r = std::cos(content.rotation);
  f.sin_r = std::sin(content.rotation);
  return f;
}

// Face-local unit coordinates of pixel (x, y); returns squared radius.
inline double face_coords(const FaceFrame& f, double x, double y, double& qx,
                          double& qy) {
  const double dx = x - f.cx;
  const double dy = y - f.cy;
  const double lx = f.cos_r * dx + f.sin_r * dy;
  const double ly = -f.sin_r * dx + f.cos_r * dy;
  qx = lx / f.rx;
  qy = ly / f.ry;
  return qx * qx + qy * qy;
}

Rgb background_color(const ContentParams& content, double x, double y) {
  const double s = ((x / kImageSize - 0.5) * std::cos(content.bg_angle) +
                    (y / kImageSize - 0.5) * std::sin(content.bg_angle));
  const double t = std::clamp(0.5 + s, 0.0, 1.0);
  return lerp(Rgb{{content.bg0[0], content.bg0[1], content.bg0[2]}},
              Rgb{{content.bg1[0], content.bg1[1], content.bg1[2]}}, t);
}

ImageArray to_image(const std::vector<Rgb>& pixels, double brightness) {
  ImageArray img(kImageSize, kImageSize);
  for (Index y = 0; y < kImageSize; ++y)
    for (Index x = 0; x < kImageSize; ++x) {
      const Rgb& p = pixels[static_cast<std::size_t>(y) * kImageSize + x];
      for (int c = 0; c < 3; ++c)
        img.channel(c)(y, x) =
            std::clamp(p.v[c] * brightness, 0.0, 1.0) * 2.0 - 1.0;
    }
  return img;
}

std::vector<Rgb> render_pixels(const SyntheticIdentity& id,
                               const ContentParams& content) {
  const FaceFrame frame = face_frame(id, content);
  std::vector<Rgb> pixels(static_cast<std::size_t>(kImageSize) * kImageSize);
  for (Index y = 0; y < kImageSize; ++y) {
    for (Index x = 0; x < kImageSize; ++x) {
      double qx, qy;
      const double r2 = face_coords(frame, x + 0.5, y + 0.5, qx, qy);
      Rgb col = background_color(content, x + 0.5, y + 0.5);
      if (r2 <= 1.0) {
        col = face_color(id, content, qx, qy);
      } else if (r2 <= 1.10) {
        // Hairline transition between face and background.
        const double t = (r2 - 1.0) / 0.10;
        col = lerp(face_color(id, content, qx, qy), col, t);
      }
      pixels[static_cast<std::size_t>(y) * kImageSize + x] = col;
    }
  }
  return pixels;
}

}  // namespace

ImageArray render_identity(const SyntheticIdentity& identity,
                           const ContentParams& content) {
  return to_image(render_pixels(identity, content), content.brightness);
}

ImageArray render_swap(const SyntheticIdentity& source,
                       const SyntheticIdentity& target,
                       const ContentParams& content, double artifact_level,
                       std::uint64_t noise_seed) {
  if (artifact_level < 0.0 || artifact_level > 1.0)
    throw ConfigError("artifact_level must lie in [0, 1]");

  std::vector<Rgb> base = render_pixels(source, content);
  if (artifact_level == 0.0) return to_image(base, content.brightness);

  const std::vector<Rgb> donor_frame = render_pixels(target, content);
  const FaceFrame frame = face_frame(source, content);
  const double color_pull = 0.5 * artifact_level;
  const double seam_opacity = 0.6 * artifact_level;
  const double blur_mix = std::min(1.0, 1.2 * artifact_level);
  const double noise_amp = 0.05 * artifact_level;
  Rng noise_rng = derive_rng(noise_seed, "swap-noise");

  // Box blur of the source face (texture smearing left by the blend).
  std::vector<Rgb> blurred = base;
  for (Index y = 1; y + 1 < kImageSize; ++y)
    for (Index x = 1; x + 1 < kImageSize; ++x) {
      Rgb acc{{0, 0, 0}};
      for (Index dy = -1; dy <= 1; ++dy)
        for (Index dx = -1; dx <= 1; ++dx) {
          const Rgb& p =
              base[static_cast<std::size_t>(y + dy) * kImageSize + (x + dx)];
          for (int c = 0; c < 3; ++c) acc.v[c] += p.v[c];
        }
      for (int c = 0; c < 3; ++c) acc.v[c] /= 9.0;
      blurred[static_cast<std::size_t>(y) * kImageSize + x] = acc;
    }

  const Rgb seam_color{{target.skin[0] * 0.8, target.skin[1] * 0.8,
                        target.skin[2] * 0.8}};
  for (Index y = 0; y < kImageSize; ++y) {
    for (Index x = 0; x < kImageSize; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * kImageSize + x;
      double qx, qy;
      const double r2 = face_coords(frame, x + 0.5, y + 0.5, qx, qy);
      const double noise = noise_amp * (2.0 * noise_rng.uniform() - 1.0);
      if (r2 > 1.21) continue;  // noise_rng still advanced per pixel

      Rgb px = base[i];
      if (r2 <= 1.0) {
        px = lerp(px, blurred[i], blur_mix);
        px = lerp(px, donor_frame[i], color_pull);
        for (double& v : px.v) v = std::clamp(v + noise, 0.0, 1.0);
      }
      // Seam ring straddling the face boundary.
      const double r = std::sqrt(r2);
      if (r >= 0.88 && r <= 1.10) {
        const double bump = 1.0 - std::abs(r - 0.99) / 0.11;
        px = lerp(px, seam_color, seam_opacity * std::clamp(bump, 0.0, 1.0));
      }
      base[i] = px;
    }
  }
  return to_image(base, content.brightness);
}

namespace {

std::string scenario_tags(const ContentParams& c) {
  std::ostringstream tags;
  tags << "lighting=" << (c.brightness < 0.97 ? "dim" : c.brightness > 1.03 ? "bright" : "neutral")
       << ",pose=" << (c.rotation < -0.06 ? "left" : c.rotation > 0.06 ? "right" : "frontal")
       << ",expression=" << (c.mouth_curve > 0.15 ? "smile" : c.mouth_curve < -0.15 ? "frown" : "neutral");
  return tags.str();
}

PairRecord make_pair(std::uint64_t seed, const std::string& pair_id, int label,
                     const std::string& technique, int n_identities,
                     double artifact_level, const fs::path& out_dir) {
  Rng rng = derive_rng(seed, "pair/" + pair_id);
  const int id_a = static_cast<int>(rng.uniform_int(0, n_identities - 1));
  int id_b = id_a;
  while (id_b == id_a && n_identities > 1)
    id_b = static_cast<int>(rng.uniform_int(0, n_identities - 1));

  const SyntheticIdentity ident_a = SyntheticIdentity::draw(seed, id_a);
  ContentParams c1 = ContentParams::draw(rng);
  ContentParams c2 = ContentParams::draw(rng);

  const ImageArray real = render_identity(ident_a, c1);
  ImageArray suspicious;
  if (label == 1) {
    suspicious = render_identity(ident_a, c2);
  } else {
    const SyntheticIdentity ident_b = SyntheticIdentity::draw(seed, id_b);
    suspicious = render_swap(ident_a, ident_b, c2, artifact_level,
                             fnv1a(pair_id, splitmix64(seed)));
  }

  const fs::path pair_dir = out_dir / pair_id;
  fs::create_directories(pair_dir);
  write_file((pair_dir / "real.ppm").string(), encode_ppm(quantize(real)));
  write_file((pair_dir / "suspicious.ppm").string(),
             encode_ppm(quantize(suspicious)));

  PairRecord record;
  record.pair_id = pair_id;
  record.real_path = (fs::path(pair_id) / "real.ppm").string();
  record.suspicious_path = (fs::path(pair_id) / "suspicious.ppm").string();
  record.label = label;
  record.technique = technique;
  record.scenario = scenario_tags(c2);
  return record;
}

std::string pad_index(int i) {
  std::ostringstream s;
  s << std::setw(5) << std::setfill('0') << i;
  return s.str();
}

}  // namespace

DatasetManifest generate_synthetic_dataset(std::uint64_t seed, int n_identities,
                                           int n_pairs_per_class,
                                           const std::string& out_dir,
                                           const GeneratorOptions& options) {
  if (n_identities < 2)
    throw ConfigError("generate_synthetic_dataset: need at least 2 identities");
  if (n_pairs_per_class < 1)
    throw ConfigError("generate_synthetic_dataset: need at least 1 pair per class");

  const fs::path root(out_dir);
  fs::create_directories(root);

  DatasetManifest manifest;
  manifest.base_dir = out_dir;

  for (int i = 0; i < n_pairs_per_class; ++i) {
    manifest.records.push_back(make_pair(seed, "pool-rr-" + pad_index(i), 1,
                                         options.real_technique, n_identities,
                                         0.0, root));
    manifest.records.push_back(make_pair(seed, "pool-fr-" + pad_index(i), 0,
                                         options.technique, n_identities,
                                         options.artifact_level, root));
  }
  for (int i = 0; i < options.n_test_pairs_per_class; ++i) {
    auto push_test = [&](const std::string& stem, int label,
                         const std::string& technique, double level) {
      PairRecord r = make_pair(seed, stem + pad_index(i), label, technique,
                               n_identities, level, root);
      r.split = Split::kTest;
      manifest.records.push_back(std::move(r));
    };
    push_test("test-in-rr-", 1, options.real_technique, 0.0);
    push_test("test-in-fr-", 0, options.technique, options.artifact_level);
    push_test("test-x-rr-", 1, options.real_technique + "-x", 0.0);
    push_test("test-x-fr-", 0, options.heldout_technique,
              options.heldout_artifact_level);
  }

  if (options.assign_splits)
    manifest = split_dataset(manifest, options.train_fraction, seed);
  return manifest;
}

}  // namespace swapdetect
