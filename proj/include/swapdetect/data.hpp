#pragma once

#include <nlohmann/json.hpp>

#include <optional>
#include <string>
#include <vector>

#include "swapdetect/image.hpp"
#include "swapdetect/types.hpp"

namespace swapdetect {

enum class Split { kUnassigned, kTrain, kVal, kTest };

std::string to_string(Split split);
Split split_from_string(const std::string& name);

struct PairRecord {
  std::string pair_id;
  std::string real_path;
  std::string suspicious_path;
  int label = 1;  // 1 = real-real, 0 = fake-real
  std::string technique;
  std::string scenario;
  Split split = Split::kUnassigned;
  // Unknown manifest fields, preserved across load/save round trips.
  nlohmann::json extra = nlohmann::json::object();
};

struct DatasetManifest {
  std::vector<PairRecord> records;
  std::uint64_t split_seed = 0;
  // Directory manifest-relative record paths resolve against.
  std::string base_dir;

  std::vector<std::size_t> indices(Split split) const;
  std::size_t count(Split split, int label) const;
  std::string resolve_path(const std::string& path) const;
  std::vector<std::string> techniques(Split split) const;
};

DatasetManifest load_manifest(const std::string& path);
void save_manifest(const DatasetManifest& manifest, const std::string& path);

// Checks that every record's image files exist; errors name the pair_id.
void validate_manifest(const DatasetManifest& manifest);

// Assigns train/val to the unassigned records, stratified by label so both
// splits keep the class balance within one record. Deterministic in seed.
DatasetManifest split_dataset(const DatasetManifest& manifest,
                              double train_fraction, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Synthetic oracle: procedurally rendered identity-style face images where
// identity is carried by palette/texture and content by pose/background.

struct SyntheticIdentity {
  int identity_id = 0;
  // Palette.
  double skin[3] = {0, 0, 0};
  double accent[3] = {0, 0, 0};
  double eye[3] = {0, 0, 0};
  // Texture gratings (frequency in cycles per face, orientation, amplitude,
  // phase), attached to face-local coordinates.
  double freq1 = 0, orient1 = 0, amp1 = 0, phase1 = 0;
  double freq2 = 0, orient2 = 0, amp2 = 0, phase2 = 0;
  // Facial-blob geometry, as fractions of the face radius.
  double face_radius = 0.32;  // fraction of image width
  double aspect = 1.3;
  double eye_dx = 0.37, eye_dy = -0.28, eye_radius = 0.12;
  double mouth_y = 0.42, mouth_w = 0.55;

  static SyntheticIdentity draw(std::uint64_t seed, int identity_id);
};

struct ContentParams {
  double bg0[3] = {0, 0, 0};
  double bg1[3] = {0, 0, 0};
  double bg_angle = 0;
  double offset_x = 0, offset_y = 0;  // fraction of image size
  double rotation = 0;                // radians
  double scale = 1.0;
  double brightness = 1.0;
  double mouth_curve = 0;
  double eye_openness = 1.0;

  static ContentParams draw(Rng& rng);
};

ImageArray render_identity(const SyntheticIdentity& identity,
                           const ContentParams& content);

// Grafts `source`'s style onto a frame shared with `target`, contaminated by
// the blending-artifact level: color pull toward the target's face, a seam
// ring, texture smoothing, and noise. At artifact_level == 0 this is exactly
// render_identity(source, content).
ImageArray render_swap(const SyntheticIdentity& source,
                       const SyntheticIdentity& target,
                       const ContentParams& content, double artifact_level,
                       std::uint64_t noise_seed);

struct GeneratorOptions {
  double artifact_level = 0.4;
  double heldout_artifact_level = 0.22;
  std::string technique = "synthetic-swap-a";
  std::string heldout_technique = "synthetic-swap-b";
  std::string real_technique = "synthetic-real";
  // Per class, per segment; 0 disables the test segments.
  int n_test_pairs_per_class = 0;
  double train_fraction = 0.8;
  bool assign_splits = true;
};

DatasetManifest generate_synthetic_dataset(std::uint64_t seed, int n_identities,
                                           int n_pairs_per_class,
                                           const std::string& out_dir,
                                           const GeneratorOptions& options = {});

}  // namespace swapdetect
