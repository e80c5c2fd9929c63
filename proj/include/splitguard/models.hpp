#ifndef SPLITGUARD_MODELS_HPP
#define SPLITGUARD_MODELS_HPP

#include <map>
#include <string>
#include <vector>

#include "splitguard/network.hpp"

namespace splitguard {

struct NetworkSpec {
    std::vector<Layer> layers;
    std::vector<int> input_shape;  // [C,H,W], no batch axis
    int classes = 0;
    // cut name -> head_end index (exclusive); RB1/RB2/RB3 in both builders
    std::map<std::string, int> named_cuts;
    int tail_start = 0;  // default body_end: the classifier (flatten + dense)
};

// Throws unless every consecutive pair of layers composes and the final
// output is [batch x classes].
void validate_network(const NetworkSpec& net);

// Four conv blocks (conv->relu, pooling after blocks 2 and 4), flatten,
// dense classifier. Named cuts RB1/RB2/RB3 after blocks 1/2/3.
NetworkSpec build_convnet(const std::vector<int>& input_shape, int classes);

// Reduced pre-activation residual network with `blocks` in {2,3} identity
// blocks, named cuts RB1/RB2/RB3 at block boundaries.
NetworkSpec build_small_resnet(const std::vector<int>& input_shape, int classes, int blocks);

struct SplitSpec {
    int head_end = 0;  // exclusive
    int body_end = 0;  // exclusive
};

// head_end from the named cut, body_end at the classifier.
SplitSpec split_spec_at(const NetworkSpec& net, const std::string& cut_name);

struct SplitModel {
    Segment head, body, tail;
};

// Cuts are only legal at residual-block boundaries; a cut inside a
// skip_begin..skip_add span is a structured error.
SplitModel split(const NetworkSpec& net, const SplitSpec& spec);

std::vector<Layer> concat_layers(const SplitModel& model);
Segment full_segment(const NetworkSpec& net);

// Mirror decoder: each conv becomes a transposed conv, each pooling a
// stride-matched transposed conv upsampler, with a final sigmoid squashing
// to the normalized pixel range. Errors on unmirrorable layer kinds and on
// any failure to close back to the head input shape.
Segment build_inversion(const Segment& head, const std::vector<int>& head_input_shape);

}  // namespace splitguard

#endif
