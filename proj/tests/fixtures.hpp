// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "rgnet/config.hpp"
#include "rgnet/dataset.hpp"

namespace rgnet::testing {

/// Small enough that a full epoch over a few images takes milliseconds.
inline ModelConfig small_config(std::uint64_t seed = 0) {
  ModelConfig c;
  c.dims.image_size = 16;
  c.dims.stem_width = 4;
  c.dims.feature_channels = 8;
  c.dims.hidden = 8;
  c.dims.model_width = 8;
  c.dims.heads = 2;
  c.dims.ffn_width = 16;
  c.dims.roi_grid = 2;
  c.dims.max_persons = 4;
  c.dims.classes = 3;
  c.dims.se_reduction = 2;
  c.train.batch_size = 2;
  c.train.seed = seed;
  return c;
}

inline Dataset small_dataset(std::size_t images, std::uint64_t seed, std::size_t classes = 3,
                             std::size_t size = 16) {
  SyntheticConfig s;
  s.images = images;
  s.classes = classes;
  s.image_size = size;
  s.seed = seed;
  return generate_synthetic(s);
}

inline ModelConfig with_toggles(ModelConfig c, unsigned bits) {
  c.toggles.wbce = bits & 1u;
  c.toggles.bilateral = bits & 2u;
  c.toggles.logit_transform = bits & 4u;
  c.toggles.edge_query = bits & 8u;
  c.toggles.se_block = bits & 16u;
  return c;
}

}  // namespace rgnet::testing
