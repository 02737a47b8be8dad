#include "pses/dataset.hpp"

#include <algorithm>
#include <filesystem>
#include <map>

#include "pses/image_io.hpp"

namespace fs = std::filesystem;

namespace pses {

Dataset load_dataset(const std::string& dir) {
  const fs::path images_dir = fs::path(dir) / "images";
  const fs::path masks_dir = fs::path(dir) / "masks";
  if (!fs::is_directory(images_dir)) throw IngestionError("missing images directory: " + images_dir.string());
  if (!fs::is_directory(masks_dir)) throw IngestionError("missing masks directory: " + masks_dir.string());

  std::map<std::string, fs::path> images;
  for (const auto& entry : fs::directory_iterator(images_dir)) {
    if (!entry.is_regular_file()) continue;
    const std::string ext = entry.path().extension().string();
    if (ext != ".png" && ext != ".jpg" && ext != ".jpeg") continue;
    images[entry.path().stem().string()] = entry.path();
  }
  std::map<std::string, fs::path> masks;
  for (const auto& entry : fs::directory_iterator(masks_dir)) {
    if (!entry.is_regular_file()) continue;
    if (entry.path().extension() != ".png") continue;
    masks[entry.path().stem().string()] = entry.path();
  }

  for (const auto& [stem, path] : images) {
    if (!masks.count(stem)) throw IngestionError("image without mask: " + path.string());
  }
  for (const auto& [stem, path] : masks) {
    if (!images.count(stem)) throw IngestionError("mask without image: " + path.string());
  }
  if (images.empty()) throw ConfigError("dataset is empty: " + dir);

  Dataset ds;
  ds.samples.reserve(images.size());
  for (const auto& [stem, path] : images) {
    SegSample s;
    s.id = stem;
    s.image = load_image_rgb(path.string());
    s.mask = load_mask_binary(masks.at(stem).string());
    if (s.image.extent(2) != s.mask.extent(2) || s.image.extent(3) != s.mask.extent(3)) {
      throw IngestionError("image and mask extents differ for sample: " + stem);
    }
    ds.samples.push_back(std::move(s));
  }
  return ds;  // std::map iteration already ordered by id
}

}  // namespace pses
