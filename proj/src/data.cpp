#include "msp/data.hpp"

#include <array>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "msp/errors.hpp"
#include "msp/rng.hpp"

namespace msp {

namespace {

constexpr int kDatasetVersion = 1;

// Ten distinct 5x5 binary motifs, one per class. Glyph positions are free,
// so the set is chosen for distinctness up to translation: rendered at any
// sizes in 3..5, cropped to their ink and optimally aligned, every pair
// still differs in at least 3 cells. A single clutter pixel can never turn
// one class into another.
const std::array<std::array<const char*, 5>, 10> kMotifs = {{
    {"#####", "#...#", "#...#", "#...#", "#####"},  // box
    {"#....", ".#...", "..#..", "...#.", "....#"},  // diagonal
    {"....#", "...#.", "..#..", ".#...", "#...."},  // anti-diagonal
    {"#####", ".....", ".....", ".....", "....."},  // bar
    {"#....", "#....", "#....", "#....", "#...."},  // post
    {"#####", "#####", ".....", ".....", "....."},  // slab
    {"#####", ".###.", ".###.", ".###.", "....."},  // wedge
    {"###..", ".....", ".....", "###..", "....."},  // rails
    {"#####", "##...", "#.#..", "#..#.", "#...#"},  // fan
    {"##...", "##...", ".##..", ".#.#.", ".#..#"},  // steps
}};

bool motif_cell(int class_id, int size, int r, int c) {
  const auto& motif = kMotifs[static_cast<std::size_t>(class_id)];
  if (size >= 5) {
    // center-sampled nearest neighbor (identity at 5)
    const int sr = (2 * r + 1) * 5 / (2 * size);
    const int sc = (2 * c + 1) * 5 / (2 * size);
    return motif[static_cast<std::size_t>(sr)][sc] == '#';
  }
  // Downscaling ORs each coverage window so thin strokes survive.
  const int r_lo = r * 5 / size, r_hi = (r + 1) * 5 / size;
  const int c_lo = c * 5 / size, c_hi = (c + 1) * 5 / size;
  for (int sr = r_lo; sr < r_hi; ++sr)
    for (int sc = c_lo; sc < c_hi; ++sc)
      if (motif[static_cast<std::size_t>(sr)][sc] == '#') return true;
  return false;
}

int motif_area(int class_id, int size) {
  int area = 0;
  for (int r = 0; r < size; ++r)
    for (int c = 0; c < size; ++c)
      if (motif_cell(class_id, size, r, c)) ++area;
  return area;
}

bool boxes_overlap(const Glyph& a, const Glyph& b) {
  return a.row < b.row + b.size && b.row < a.row + a.size && a.col < b.col + b.size &&
         b.col < a.col + a.size;
}

void validate(const DatasetConfig& cfg) {
  if (cfg.num_train < 0 || cfg.num_valid < 0 || cfg.num_test < 0)
    throw std::invalid_argument("DatasetConfig: negative split size");
  if (cfg.num_classes <= 0 || cfg.num_classes > 10)
    throw std::invalid_argument("DatasetConfig: num_classes must be in 1..10");
  if (cfg.cardinality.min_card < 1 || cfg.cardinality.max_card < cfg.cardinality.min_card)
    throw std::invalid_argument("DatasetConfig: bad cardinality range");
  if (cfg.glyph_min_size < 2 || cfg.glyph_max_size < cfg.glyph_min_size ||
      cfg.glyph_max_size > cfg.grid_size)
    throw std::invalid_argument("DatasetConfig: bad glyph size range");
  if (cfg.clutter_density < 0.0 || cfg.clutter_density >= 1.0)
    throw std::invalid_argument("DatasetConfig: clutter_density must be in [0,1)");
  if (!cfg.allow_overlap) {
    const long need = static_cast<long>(cfg.cardinality.max_card) * cfg.glyph_max_size *
                      cfg.glyph_max_size;
    if (need > static_cast<long>(cfg.grid_size) * cfg.grid_size)
      throw std::invalid_argument("DatasetConfig: placement infeasible without overlap");
  }
}

Example make_example(const DatasetConfig& cfg, int global_index) {
  Rng rng = Rng::substream(cfg.seed, static_cast<std::uint64_t>(global_index));
  const int g = cfg.grid_size;

  constexpr int kPlacementRetries = 200;
  constexpr int kExampleRestarts = 25;
  for (int attempt = 0; attempt < kExampleRestarts; ++attempt) {
    const int card = rng.uniform_range(cfg.cardinality.min_card, cfg.cardinality.max_card);
    std::vector<Glyph> glyphs;
    glyphs.reserve(static_cast<std::size_t>(card));
    bool placed_all = true;
    for (int j = 0; j < card; ++j) {
      Glyph glyph;
      glyph.class_id = rng.uniform_int(cfg.num_classes);
      glyph.size = rng.uniform_range(cfg.glyph_min_size, cfg.glyph_max_size);
      glyph.area = motif_area(glyph.class_id, glyph.size);
      bool placed = false;
      for (int r = 0; r < kPlacementRetries && !placed; ++r) {
        glyph.row = rng.uniform_int(g - glyph.size + 1);
        glyph.col = rng.uniform_int(g - glyph.size + 1);
        placed = true;
        if (!cfg.allow_overlap)
          for (const Glyph& other : glyphs)
            if (boxes_overlap(glyph, other)) {
              placed = false;
              break;
            }
      }
      if (!placed) {
        placed_all = false;
        break;
      }
      glyphs.push_back(glyph);
    }
    if (!placed_all) continue;

    Example ex;
    ex.id = global_index;
    ex.grid = RowMat::Zero(g, g);
    LabelSequence labels;
    for (const Glyph& glyph : glyphs) {
      labels.push_back(glyph.class_id);
      for (int r = 0; r < glyph.size; ++r)
        for (int c = 0; c < glyph.size; ++c)
          if (motif_cell(glyph.class_id, glyph.size, r, c))
            ex.grid(glyph.row + r, glyph.col + c) = 1.0;
    }
    for (int r = 0; r < g; ++r)
      for (int c = 0; c < g; ++c)
        if (rng.bernoulli(cfg.clutter_density)) ex.grid(r, c) = 1.0;
    ex.target = Multiset::from_labels(labels, cfg.num_classes);
    ex.glyphs = std::move(glyphs);
    return ex;
  }
  throw DataError("generate_dataset: placement failed for example " +
                  std::to_string(global_index));
}

}  // namespace

DatasetConfig profile_config(const std::string& name, std::uint64_t seed) {
  DatasetConfig cfg;
  cfg.seed = seed;
  cfg.profile = name;
  if (name == "multi4") {
    cfg.cardinality = CardinalitySpec::fixed(4);
  } else if (name == "multi1to4") {
    cfg.cardinality = CardinalitySpec::range(1, 4);
  } else if (name == "multi10") {
    cfg.cardinality = CardinalitySpec::fixed(10);
    cfg.grid_size = 24;
  } else {
    throw std::invalid_argument("profile_config: unknown profile '" + name + "'");
  }
  return cfg;
}

Dataset generate_dataset(const DatasetConfig& config) {
  validate(config);
  Dataset ds;
  ds.config = config;
  int index = 0;
  auto fill = [&](std::vector<Example>& split, int n) {
    split.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) split.push_back(make_example(config, index++));
  };
  fill(ds.train, config.num_train);
  fill(ds.valid, config.num_valid);
  fill(ds.test, config.num_test);
  return ds;
}

// ---- persistence ------------------------------------------------------------

namespace {

nlohmann::json config_to_json(const DatasetConfig& c) {
  return nlohmann::json{{"num_train", c.num_train},
                        {"num_valid", c.num_valid},
                        {"num_test", c.num_test},
                        {"grid_size", c.grid_size},
                        {"num_classes", c.num_classes},
                        {"min_card", c.cardinality.min_card},
                        {"max_card", c.cardinality.max_card},
                        {"glyph_min_size", c.glyph_min_size},
                        {"glyph_max_size", c.glyph_max_size},
                        {"clutter_density", c.clutter_density},
                        {"allow_overlap", c.allow_overlap},
                        {"seed", c.seed},
                        {"profile", c.profile}};
}

DatasetConfig config_from_json(const nlohmann::json& j) {
  DatasetConfig c;
  c.num_train = j.at("num_train").get<int>();
  c.num_valid = j.at("num_valid").get<int>();
  c.num_test = j.at("num_test").get<int>();
  c.grid_size = j.at("grid_size").get<int>();
  c.num_classes = j.at("num_classes").get<int>();
  c.cardinality.min_card = j.at("min_card").get<int>();
  c.cardinality.max_card = j.at("max_card").get<int>();
  c.glyph_min_size = j.at("glyph_min_size").get<int>();
  c.glyph_max_size = j.at("glyph_max_size").get<int>();
  c.clutter_density = j.at("clutter_density").get<double>();
  c.allow_overlap = j.at("allow_overlap").get<bool>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.profile = j.at("profile").get<std::string>();
  return c;
}

nlohmann::json example_to_json(const Example& ex, const char* split) {
  nlohmann::json j;
  j["id"] = ex.id;
  j["split"] = split;
  std::vector<double> grid(ex.grid.data(), ex.grid.data() + ex.grid.size());
  j["grid"] = grid;
  std::vector<int> counts(ex.target.counts().data(),
                          ex.target.counts().data() + ex.target.num_classes());
  j["target"] = counts;
  nlohmann::json glyphs = nlohmann::json::array();
  for (const Glyph& g : ex.glyphs)
    glyphs.push_back({g.class_id, g.row, g.col, g.size, g.area});
  j["glyphs"] = glyphs;
  return j;
}

Example example_from_json(const nlohmann::json& j, const DatasetConfig& cfg) {
  Example ex;
  ex.id = j.at("id").get<int>();
  const auto grid = j.at("grid").get<std::vector<double>>();
  if (static_cast<int>(grid.size()) != cfg.grid_size * cfg.grid_size)
    throw DataError("load_dataset: grid length mismatch in example " + std::to_string(ex.id));
  ex.grid = RowMat::Zero(cfg.grid_size, cfg.grid_size);
  for (int i = 0; i < static_cast<int>(grid.size()); ++i) ex.grid.data()[i] = grid[i];
  const auto counts = j.at("target").get<std::vector<int>>();
  if (static_cast<int>(counts.size()) != cfg.num_classes)
    throw DataError("load_dataset: target length mismatch in example " + std::to_string(ex.id));
  Eigen::VectorXi cv(cfg.num_classes);
  for (int i = 0; i < cfg.num_classes; ++i) cv[i] = counts[i];
  ex.target = Multiset::from_counts(cv);
  for (const auto& g : j.at("glyphs")) {
    if (!g.is_array() || g.size() != 5)
      throw DataError("load_dataset: malformed glyph in example " + std::to_string(ex.id));
    ex.glyphs.push_back(Glyph{g[0].get<int>(), g[1].get<int>(), g[2].get<int>(),
                              g[3].get<int>(), g[4].get<int>()});
  }
  return ex;
}

}  // namespace

void save_dataset(const Dataset& ds, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("save_dataset: cannot open " + path);
  nlohmann::json header;
  header["version"] = kDatasetVersion;
  header["config"] = config_to_json(ds.config);
  out << header.dump() << "\n";
  for (const Example& ex : ds.train) out << example_to_json(ex, "train").dump() << "\n";
  for (const Example& ex : ds.valid) out << example_to_json(ex, "valid").dump() << "\n";
  for (const Example& ex : ds.test) out << example_to_json(ex, "test").dump() << "\n";
}

Dataset load_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("load_dataset: cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw DataError("load_dataset: missing header: " + path);
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw DataError("load_dataset: bad header: " + std::string(e.what()));
  }
  if (!header.contains("version")) throw DataError("load_dataset: header has no version");
  if (header["version"].get<int>() != kDatasetVersion)
    throw DataError("load_dataset: unsupported version " + header["version"].dump());

  Dataset ds;
  ds.config = config_from_json(header.at("config"));
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw DataError("load_dataset: parse failure at line " + std::to_string(line_no) + ": " +
                      e.what());
    }
    const std::string split = j.at("split").get<std::string>();
    Example ex = example_from_json(j, ds.config);
    if (split == "train")
      ds.train.push_back(std::move(ex));
    else if (split == "valid")
      ds.valid.push_back(std::move(ex));
    else if (split == "test")
      ds.test.push_back(std::move(ex));
    else
      throw DataError("load_dataset: unknown split '" + split + "'");
  }
  if (static_cast<int>(ds.train.size()) != ds.config.num_train ||
      static_cast<int>(ds.valid.size()) != ds.config.num_valid ||
      static_cast<int>(ds.test.size()) != ds.config.num_test)
    throw DataError("load_dataset: split sizes disagree with config (truncated file?)");
  return ds;
}

bool datasets_equal(const Dataset& a, const Dataset& b) {
  auto examples_equal = [](const std::vector<Example>& xs, const std::vector<Example>& ys) {
    if (xs.size() != ys.size()) return false;
    for (std::size_t i = 0; i < xs.size(); ++i) {
      const Example& x = xs[i];
      const Example& y = ys[i];
      if (x.id != y.id || x.grid != y.grid || x.target != y.target ||
          x.glyphs.size() != y.glyphs.size())
        return false;
      for (std::size_t k = 0; k < x.glyphs.size(); ++k) {
        const Glyph& gx = x.glyphs[k];
        const Glyph& gy = y.glyphs[k];
        if (gx.class_id != gy.class_id || gx.row != gy.row || gx.col != gy.col ||
            gx.size != gy.size || gx.area != gy.area)
          return false;
      }
    }
    return true;
  };
  return examples_equal(a.train, b.train) && examples_equal(a.valid, b.valid) &&
         examples_equal(a.test, b.test);
}

}  // namespace msp
