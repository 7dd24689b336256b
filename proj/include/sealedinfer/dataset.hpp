#pragma once

// File formats for inputs, per-image outputs and labels. All are JSON:
//   input:  {"shape": [...], "data": [...]} or {"views": [<tensor>, ...]}
//   output: {"image": name, "logits": [...], "probabilities": [...], "ring": [...]}
//   labels: {"classes": [...], "labels": {"<image>": [0, 1, ...]}}

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "sealedinfer/ring.hpp"

namespace sealedinfer {

struct ImageRecord {
  std::string name;  // file stem
  std::vector<FloatTensor> views;
};

std::string tensor_to_json(const FloatTensor& t);
FloatTensor tensor_from_json(const std::string& text);

void write_image(const std::string& path, const ImageRecord& image);
ImageRecord read_image(const std::string& path);
// Every *.json file in `dir`, sorted by name.
std::vector<ImageRecord> read_image_dir(const std::string& dir);

struct OutputRecord {
  std::string image;
  std::vector<double> logits;
  std::vector<double> probabilities;
  std::optional<std::vector<RingElement>> ring;  // fixed-point runs only
};

std::string output_to_json(const OutputRecord& out);
void write_output(const std::string& dir, const OutputRecord& out);
// Keyed by image name.
std::map<std::string, OutputRecord> read_output_dir(const std::string& dir);

struct LabelSet {
  std::vector<std::string> classes;
  std::map<std::string, std::vector<int>> labels;
};

void write_labels(const std::string& path, const LabelSet& labels);
LabelSet read_labels(const std::string& path);

void ensure_directory(const std::string& dir);
void write_text(const std::string& path, const std::string& text);
std::string read_text(const std::string& path);

}  // namespace sealedinfer
