#pragma once

// Readers for the frozen reference outputs under tests/fixtures.

#include <array>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "dsnet/tensor.hpp"

#ifndef DSNET_FIXTURE_DIR
#error "DSNET_FIXTURE_DIR must point at tests/fixtures"
#endif

namespace fixtures {

inline std::ifstream open(const std::string& name) {
  std::ifstream in(std::string(DSNET_FIXTURE_DIR) + "/" + name);
  if (!in) throw std::runtime_error("missing fixture " + name);
  return in;
}

struct SMeasureCase {
  dsnet::Tensor pred;
  dsnet::Tensor mask;
  double expected = 0.0;
};

inline std::vector<SMeasureCase> s_measure_cases() {
  std::ifstream in = open("s_measure.txt");
  std::vector<SMeasureCase> out;
  std::string tag;
  std::size_t h = 0, w = 0;
  while (in >> tag >> h >> w) {
    SMeasureCase c{dsnet::Tensor(dsnet::Shape{1, 1, h, w}), dsnet::Tensor(dsnet::Shape{1, 1, h, w}), 0.0};
    for (std::size_t i = 0; i < h * w; ++i) {
      int k = 0;
      in >> k;
      c.pred[i] = k / 255.0;
    }
    for (std::size_t i = 0; i < h * w; ++i) in >> c.mask[i];
    in >> c.expected;
    out.push_back(std::move(c));
  }
  return out;
}

struct FlowColorCase {
  float u = 0, v = 0;
  std::array<int, 3> rgb{};
};

inline std::vector<FlowColorCase> flow_color_cases() {
  std::ifstream in = open("flow_color.txt");
  std::vector<FlowColorCase> out;
  FlowColorCase c;
  while (in >> c.u >> c.v >> c.rgb[0] >> c.rgb[1] >> c.rgb[2]) out.push_back(c);
  return out;
}

}  // namespace fixtures
