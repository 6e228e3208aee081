#pragma once

// On-disk dataset layout:
//   <root>/<sequence_id>/rgb/<frame:06d>.ppm          binary P6, maxval 255
//   <root>/<sequence_id>/thermal/<frame:06d>.pgm      binary P5, maxval 255
//   <root>/<sequence_id>/annotations/<frame:06d>.xml  VOC tag layout
//   <root>/manifest                                   "<seq_id> <frames> <split>"
// Annotations carry RGB-frame ground truth only; frame order comes from the
// zero-padded numbering plus the manifest.

#include <string>
#include <vector>

#include "msenet/synth.hpp"

namespace msenet {

// --- portable pixmaps -------------------------------------------------------

void write_pnm(const std::string& path, const std::vector<float>& data,
               int channels, int h, int w);

struct PnmImage {
  int channels = 0, h = 0, w = 0;
  std::vector<float> data;  // [channels][h][w] in [0, 1]
};
PnmImage read_pnm(const std::string& path);

// --- VOC-style annotations --------------------------------------------------

struct VocObject {
  std::string name;
  int xmin = 0, ymin = 0, xmax = 0, ymax = 0;
};

struct VocAnnotation {
  std::string folder, filename;
  int width = 0, height = 0, depth = 3;
  std::vector<VocObject> objects;
};

// Center-format boxes round to integer corners (xmin = x - w/2, ...).
VocAnnotation to_voc(const FramePair& fp);

void write_voc_xml(const std::string& path, const VocAnnotation& ann);

// Parse errors carry file, line and field diagnostics.
VocAnnotation read_voc_xml(const std::string& path);

GtBox voc_object_to_gt(const VocObject& obj,
                       const std::vector<std::string>& class_names);

// --- manifest and sequences -------------------------------------------------

struct ManifestEntry {
  std::string sequence_id;
  int frame_count = 0;
  std::string split;  // train | test
};

void write_manifest(const std::string& root,
                    const std::vector<ManifestEntry>& entries);
std::vector<ManifestEntry> read_manifest(const std::string& root);

// Writes images + annotations for one sequence under <root>/<sequence_id>.
void write_sequence(const std::string& root, const std::vector<FramePair>& frames);

// Loads one sequence back; ground truth comes from the annotation files
// (integer boxes), class ids from the sorted unique class-name list.
std::vector<FramePair> load_sequence(const std::string& root,
                                     const std::string& sequence_id,
                                     int frame_count,
                                     const std::vector<std::string>& class_names);

struct Dataset {
  struct Sequence {
    std::string id;
    std::string split;
    std::vector<FramePair> frames;
  };
  std::vector<Sequence> sequences;
  std::vector<std::string> class_names;  // sorted unique annotation names

  std::vector<const FramePair*> split_frames(const std::string& split) const {
    std::vector<const FramePair*> out;
    for (const auto& seq : sequences) {
      if (seq.split != split) continue;
      for (const auto& f : seq.frames) out.push_back(&f);
    }
    return out;
  }
};

Dataset load_dataset(const std::string& root);

}  // namespace msenet
