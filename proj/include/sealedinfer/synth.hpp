#pragma once

// Seeded generators for small models, inputs and labelled datasets.

#include <cstddef>
#include <string>
#include <vector>

#include "sealedinfer/graph.hpp"
#include "sealedinfer/prg.hpp"

namespace sealedinfer {

struct RandomGraphOptions {
  std::size_t max_layers = 6;    // computational layers, Input/Output excluded
  std::size_t max_channels = 16;
  std::size_t max_extent = 8;    // input height/width
  std::size_t output_width = 3;
  bool allow_concat = true;
};

// A random layered CNN with weights drawn so activations stay near unit scale.
GraphBundle random_bundle(Prg& prg, const RandomGraphOptions& opts = {});

// Fixed small architecture: conv 3x3 -> ReLU -> maxpool 2x2 -> conv 3x3 ->
// BN -> ReLU -> global avg pool -> dense(classes), on a 1x8x8 input.
GraphBundle mini_cnn(Prg& prg, std::size_t classes);

// He-style random weights for every parameterized layer of `graph`.
WeightStore random_weights(const ComputationGraph& graph, Prg& prg, double gain = 1.0);

FloatTensor random_input(const Shape& shape, Prg& prg, double amplitude = 1.0);

struct SyntheticDataset {
  std::vector<std::string> classes;
  std::vector<std::string> names;
  std::vector<FloatTensor> inputs;
  std::vector<std::vector<int>> labels;  // [image][class]
};

// Random inputs labelled by thresholding noisy float logits at the per-class
// median, so every class has both outcomes.
SyntheticDataset synthetic_dataset(const GraphBundle& bundle, std::size_t images, Prg& prg,
                                   double noise = 0.5, double amplitude = 1.0);

}  // namespace sealedinfer
