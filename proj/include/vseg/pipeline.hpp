// Copyright 2026 The vseg Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

// Glue between stored cases and the network: candidate box selection,
// cropping to the input size, and mapping predictions back.

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "vseg/dataset.hpp"
#include "vseg/localize.hpp"
#include "vseg/trainer.hpp"
#include "vseg/volume.hpp"

namespace vseg {

/// A stored case together with the box it is cropped to.
struct LoadedCase {
  std::string id;
  ImageVolume image;
  LabelVolume label;
  BoundingBox box;
};

/// Box priority: the manifest column, then the forest, then the label extent.
/// Forest and label boxes are expanded by `margin`, or when it is unset by the
/// forest's out-of-bag margin and kLabelMargin respectively; manifest boxes
/// are used as written.
inline BoundingBox select_box(const CaseRecord& record, const ImageVolume& image, const LabelVolume* label,
                              const RegressionForest* forest, std::optional<long> margin, bool oracle) {
  if (record.box && !oracle) return clamp_box(*record.box, image.dims);
  if (forest && !oracle) return expand_margin(predict_box(*forest, image), margin.value_or(forest->oob_margin), image.dims);
  if (!label) throw UsageError("case '" + record.id + "': no box, forest or label to localize it");
  return expand_margin(label_extent(*label), margin.value_or(kLabelMargin), image.dims);
}

inline LoadedCase load_case(const CaseRecord& record, const RegressionForest* forest, std::optional<long> margin,
                            bool oracle) {
  LoadedCase c;
  c.id = record.id;
  c.image = read_image(record.image);
  c.label = read_label(record.label);
  if (!c.image.same_shape(c.label))
    throw ContractError("case '" + record.id + "': image " + dims_str(c.image.dims) + " and label " +
                        dims_str(c.label.dims) + " differ");
  c.box = select_box(record, c.image, &c.label, forest, margin, oracle);
  return c;
}

/// Crops image (trilinear) and label (nearest) to size^3.
inline Case crop_case(const std::string& id, const ImageVolume& image, const LabelVolume& label, const BoundingBox& box,
                      std::size_t size) {
  return {id, crop_resample(image, box, size, Interp::Trilinear), crop_resample(label, box, size, Interp::Nearest)};
}

inline Case crop_case(const LoadedCase& c, std::size_t size) { return crop_case(c.id, c.image, c.label, c.box, size); }

/// Probability map of a cropped prediction in the original volume; voxels
/// outside the box are 0.
inline ImageVolume paste_prediction(const ImageVolume& prob, const BoundingBox& box, const ImageVolume& original) {
  return paste_back(prob, box, original.dims, Interp::Trilinear, 0.0f, original.spacing);
}

}  // namespace vseg
