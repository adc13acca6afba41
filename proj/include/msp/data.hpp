#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "msp/mset.hpp"
#include "msp/tensor.hpp"

namespace msp {

/// One stamped glyph: class, top-left cell, side length, and the number of
/// grid cells it covers. Positions and areas feed the input-dependent rank
/// functions.
struct Glyph {
  int class_id = 0;
  int row = 0;
  int col = 0;
  int size = 0;
  int area = 0;
};

struct Example {
  int id = 0;
  RowMat grid;  // grid_size x grid_size, values in [0, 1]
  Multiset target;
  std::vector<Glyph> glyphs;
};

struct CardinalitySpec {
  int min_card = 1;
  int max_card = 1;
  static CardinalitySpec fixed(int k) { return CardinalitySpec{k, k}; }
  static CardinalitySpec range(int lo, int hi) { return CardinalitySpec{lo, hi}; }
};

struct DatasetConfig {
  int num_train = 4000;
  int num_valid = 500;
  int num_test = 1000;
  int grid_size = 16;
  int num_classes = 10;
  CardinalitySpec cardinality = CardinalitySpec::range(1, 4);
  int glyph_min_size = 3;
  int glyph_max_size = 5;
  double clutter_density = 0.02;
  bool allow_overlap = false;
  std::uint64_t seed = 0;
  std::string profile;  // optional name echo
};

struct Dataset {
  DatasetConfig config;
  std::vector<Example> train;
  std::vector<Example> valid;
  std::vector<Example> test;

  int max_cardinality() const { return config.cardinality.max_card; }
};

/// Named configurations: multi4 (|Y|=4), multi1to4 (|Y| in 1..4), and
/// multi10 (|Y|=10 on a 24-cell grid).
DatasetConfig profile_config(const std::string& name, std::uint64_t seed);

/// Deterministic per (config, seed); example i is generated from substream
/// (seed, i), so parallel and serial generation agree.
Dataset generate_dataset(const DatasetConfig& config);

/// JSONL: a header record {version, config}, then one example per line.
void save_dataset(const Dataset& ds, const std::string& path);
Dataset load_dataset(const std::string& path);

bool datasets_equal(const Dataset& a, const Dataset& b);

}  // namespace msp
