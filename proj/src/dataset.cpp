#include "sealedinfer/dataset.hpp"

#include <algorithm>
#include <filesystem>

#include <json.hpp>

#include "sealedinfer/bytes.hpp"
#include "sealedinfer/errors.hpp"

namespace sealedinfer {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json parse_json(const std::string& text, const std::string& what) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(what + ": " + e.what());
  }
}

json tensor_json(const FloatTensor& t) { return json{{"shape", t.shape}, {"data", t.data}}; }

FloatTensor tensor_of(const json& j, const std::string& what) {
  try {
    return FloatTensor(j.at("shape").get<Shape>(), j.at("data").get<std::vector<double>>());
  } catch (const json::exception& e) {
    throw ParseError(what + ": bad tensor: " + e.what());
  }
}

std::vector<fs::path> json_files(const std::string& dir) {
  std::error_code ec;
  if (!fs::is_directory(dir, ec)) throw IoError("not a directory: " + dir);
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".json") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  return files;
}

}  // namespace

std::string read_text(const std::string& path) {
  const Bytes b = read_file(path);
  return std::string(b.begin(), b.end());
}

void write_text(const std::string& path, const std::string& text) {
  write_file(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

void ensure_directory(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw IoError("cannot create directory " + dir);
}

std::string tensor_to_json(const FloatTensor& t) { return tensor_json(t).dump(); }

FloatTensor tensor_from_json(const std::string& text) { return tensor_of(parse_json(text, "tensor"), "tensor"); }

void write_image(const std::string& path, const ImageRecord& image) {
  json j;
  if (image.views.size() == 1) {
    j = tensor_json(image.views[0]);
  } else {
    j["views"] = json::array();
    for (const auto& v : image.views) j["views"].push_back(tensor_json(v));
  }
  write_text(path, j.dump() + "\n");
}

ImageRecord read_image(const std::string& path) {
  const json j = parse_json(read_text(path), path);
  ImageRecord rec;
  rec.name = fs::path(path).stem().string();
  if (j.contains("views")) {
    for (const auto& v : j.at("views")) rec.views.push_back(tensor_of(v, path));
    if (rec.views.empty()) throw ParseError(path + ": no views");
  } else {
    rec.views.push_back(tensor_of(j, path));
  }
  return rec;
}

std::vector<ImageRecord> read_image_dir(const std::string& dir) {
  std::vector<ImageRecord> out;
  for (const auto& p : json_files(dir)) out.push_back(read_image(p.string()));
  if (out.empty()) throw IoError("no *.json inputs in " + dir);
  return out;
}

std::string output_to_json(const OutputRecord& out) {
  json j{{"image", out.image}, {"logits", out.logits}, {"probabilities", out.probabilities}};
  if (out.ring) j["ring"] = *out.ring;
  return j.dump() + "\n";
}

void write_output(const std::string& dir, const OutputRecord& out) {
  write_text((fs::path(dir) / (out.image + ".json")).string(), output_to_json(out));
}

std::map<std::string, OutputRecord> read_output_dir(const std::string& dir) {
  std::map<std::string, OutputRecord> out;
  for (const auto& p : json_files(dir)) {
    const json j = parse_json(read_text(p.string()), p.string());
    if (!j.is_object() || !j.contains("probabilities")) continue;  // stats and reports
    OutputRecord r;
    try {
      r.image = j.at("image").get<std::string>();
      r.logits = j.at("logits").get<std::vector<double>>();
      r.probabilities = j.at("probabilities").get<std::vector<double>>();
      if (j.contains("ring")) r.ring = j.at("ring").get<std::vector<RingElement>>();
    } catch (const json::exception& e) {
      throw ParseError(p.string() + ": " + e.what());
    }
    const std::string name = r.image;
    if (!out.emplace(name, std::move(r)).second) throw ParseError("duplicate output for image " + name);
  }
  return out;
}

void write_labels(const std::string& path, const LabelSet& labels) {
  json j{{"classes", labels.classes}, {"labels", labels.labels}};
  write_text(path, j.dump(1) + "\n");
}

LabelSet read_labels(const std::string& path) {
  const json j = parse_json(read_text(path), path);
  LabelSet ls;
  try {
    ls.classes = j.at("classes").get<std::vector<std::string>>();
    ls.labels = j.at("labels").get<std::map<std::string, std::vector<int>>>();
  } catch (const json::exception& e) {
    throw ParseError(path + ": " + e.what());
  }
  for (const auto& [name, row] : ls.labels) {
    if (row.size() != ls.classes.size()) {
      throw ParseError(path + ": image " + name + " has " + std::to_string(row.size()) + " labels, expected " +
                       std::to_string(ls.classes.size()));
    }
  }
  return ls;
}

}  // namespace sealedinfer
