#pragma once

// Plaintext reference evaluators. eval_float is the real-arithmetic forward
// pass; eval_fixed follows the secure schedule step for step in the ring and
// is the bit-exact oracle for dealer-mode secure runs.

#include <cstddef>
#include <vector>

#include "sealedinfer/graph.hpp"
#include "sealedinfer/ring.hpp"

namespace sealedinfer {

std::vector<double> eval_float(const ComputationGraph& graph, const WeightStore& weights,
                               const FloatTensor& input);

std::vector<RingElement> eval_fixed(const ComputationGraph& graph, const WeightStore& weights,
                                    const FloatTensor& input, const FixedPointConfig& cfg);

// Same, from an already-encoded input.
std::vector<RingElement> eval_fixed_encoded(const ComputationGraph& graph,
                                            const WeightStore& weights, const PlainTensor& input,
                                            const FixedPointConfig& cfg);

// Weights of a Dense/Conv2D/BatchNormFolded layer in ring form. For linear
// layers `kernel` is the [out x in] matrix; for BatchNormFolded it holds the
// per-channel scale. `bias` is pre-shifted to scale 2f so it can be added to
// the raw product before truncation.
struct EncodedLayer {
  std::vector<RingElement> kernel;
  std::vector<RingElement> bias;
  std::size_t rows = 0;
  std::size_t cols = 0;
};

EncodedLayer encode_layer(const ComputationGraph& graph, const WeightStore& weights,
                          std::size_t layer_index, const FixedPointConfig& cfg);

// Elementwise max; all views must have equal width.
std::vector<double> aggregate_views(const std::vector<std::vector<double>>& logits_per_view);

double sigmoid(double z);
std::vector<double> sigmoid(const std::vector<double>& logits);

// Truncating layers (parameterized layers and average pools) on the longest
// Input-to-Output path; bounds the local-truncation error in ULPs.
std::size_t truncation_depth(const ComputationGraph& graph);

}  // namespace sealedinfer
