#include "msp/policy.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "msp/errors.hpp"
#include "msp/rng.hpp"

namespace msp {

namespace {

// conv path spatial sizes: 5x5 valid conv, 2x2 pool, 3x3 valid conv, 2x2 pool
struct ConvDims {
  int h1, h2, h3, h4;  // side lengths after conv1 / pool1 / conv2 / pool2
  int flat;            // h4*h4*channels2
};

ConvDims conv_dims(const PolicyConfig& cfg) {
  const int g = cfg.grid_size;
  if (g < 12 || g % 4 != 0)
    throw std::invalid_argument("PolicyModel: conv encoder needs grid_size >= 12, multiple of 4");
  ConvDims d;
  d.h1 = g - 4;
  d.h2 = d.h1 / 2;
  d.h3 = d.h2 - 2;
  d.h4 = d.h3 / 2;
  d.flat = d.h4 * d.h4 * cfg.conv_channels2;
  return d;
}

void validate(const PolicyConfig& cfg) {
  if (cfg.num_classes <= 0 || cfg.grid_size <= 0 || cfg.feature_dim <= 0 ||
      cfg.embed_dim <= 0 || cfg.hidden_dim <= 0 || cfg.conv_channels1 <= 0 ||
      cfg.conv_channels2 <= 0 || cfg.mlp_hidden <= 0)
    throw std::invalid_argument("PolicyModel: all dimensions must be positive");
  if (cfg.encoder != "conv" && cfg.encoder != "mlp")
    throw std::invalid_argument("PolicyModel: encoder must be 'conv' or 'mlp'");
  if (cfg.encoder_tail != "avg" && cfg.encoder_tail != "flatten" &&
      cfg.encoder_tail != "concat")
    throw std::invalid_argument(
        "PolicyModel: encoder_tail must be 'avg', 'flatten', or 'concat'");
  if (cfg.encoder == "conv") conv_dims(cfg);
}

Tensor uniform_param(Rng& rng, int rows, int cols, int fan_in, double gain = 1.0) {
  Tensor t = Tensor::zeros(rows, cols, true);
  const double bound = gain / std::sqrt(static_cast<double>(fan_in));
  for (int i = 0; i < t.size(); ++i) t.flat()[i] = rng.uniform_real(-bound, bound);
  return t;
}

// relu-era uniform init, sqrt(6/fan_in)
constexpr double kFeedforwardGain = 2.449489742783178;

}  // namespace

PolicyModel PolicyModel::init(const PolicyConfig& config, std::uint64_t seed) {
  validate(config);
  PolicyModel m;
  m.cfg_ = config;
  Rng rng(seed);
  const int d = config.feature_dim, e = config.embed_dim, h = config.hidden_dim;
  const int n_cls = config.num_classes;

  if (config.encoder == "conv") {
    const ConvDims cd = conv_dims(config);
    const int c1 = config.conv_channels1, c2 = config.conv_channels2;
    m.enc_k1_ = uniform_param(rng, 25, c1, 25, kFeedforwardGain);
    m.enc_b1_ = uniform_param(rng, 1, c1, 25);
    m.enc_k2_ = uniform_param(rng, 9 * c1, c2, 9 * c1, kFeedforwardGain);
    m.enc_b2_ = uniform_param(rng, 1, c2, 9 * c1);
    const int tail_in = config.encoder_tail == "avg"
                            ? c2
                            : (config.encoder_tail == "concat" ? cd.flat + c2 : cd.flat);
    m.enc_wf_ = uniform_param(rng, tail_in, d, tail_in, kFeedforwardGain);
    m.enc_bf_ = uniform_param(rng, 1, d, tail_in);
  } else {
    const int in = config.grid_size * config.grid_size, mh = config.mlp_hidden;
    m.mlp_w1_ = uniform_param(rng, in, mh, in, kFeedforwardGain);
    m.mlp_b1_ = uniform_param(rng, 1, mh, in);
    m.mlp_w2_ = uniform_param(rng, mh, d, mh, kFeedforwardGain);
    m.mlp_b2_ = uniform_param(rng, 1, d, mh);
  }

  m.emb_ = uniform_param(rng, n_cls + 1, e, e);
  m.cell_wx_ = uniform_param(rng, d + e, 4 * h, d + e);
  m.cell_wh_ = uniform_param(rng, h, 4 * h, h);
  m.cell_b_ = uniform_param(rng, 1, 4 * h, d + e + h);
  for (int i = 0; i < h; ++i) m.cell_b_.flat()[h + i] += 1.0;  // open forget gates
  m.cls_w_ = uniform_param(rng, h, n_cls, h);
  m.cls_b_ = uniform_param(rng, 1, n_cls, h);
  m.stop_w_ = uniform_param(rng, h, 1, h);
  m.stop_b_ = uniform_param(rng, 1, 1, h);
  m.size_w_ = uniform_param(rng, h, 1, h);
  m.size_b_ = uniform_param(rng, 1, 1, h);
  return m;
}

std::vector<std::pair<std::string, Tensor>> PolicyModel::parameters() {
  std::vector<std::pair<std::string, Tensor>> ps;
  if (cfg_.encoder == "conv") {
    ps = {{"enc.k1", enc_k1_}, {"enc.b1", enc_b1_}, {"enc.k2", enc_k2_},
          {"enc.b2", enc_b2_}, {"enc.wf", enc_wf_}, {"enc.bf", enc_bf_}};
  } else {
    ps = {{"mlp.w1", mlp_w1_}, {"mlp.b1", mlp_b1_}, {"mlp.w2", mlp_w2_}, {"mlp.b2", mlp_b2_}};
  }
  ps.insert(ps.end(), {{"emb", emb_},
                       {"cell.wx", cell_wx_},
                       {"cell.wh", cell_wh_},
                       {"cell.b", cell_b_},
                       {"cls.w", cls_w_},
                       {"cls.b", cls_b_},
                       {"stop.w", stop_w_},
                       {"stop.b", stop_b_},
                       {"size.w", size_w_},
                       {"size.b", size_b_}});
  return ps;
}

std::vector<std::pair<std::string, Tensor>> PolicyModel::parameters() const {
  return const_cast<PolicyModel*>(this)->parameters();
}

long PolicyModel::parameter_count() const {
  long n = 0;
  for (const auto& [name, t] : parameters()) n += t.size();
  return n;
}

Tensor PolicyModel::encode(const RowMat& grid) const {
  if (cfg_.encoder == "mlp") {
    if (grid.size() != cfg_.grid_size * cfg_.grid_size)
      throw std::invalid_argument("encode: grid size mismatch");
    RowMat flat(1, grid.size());
    int k = 0;
    for (int r = 0; r < grid.rows(); ++r)
      for (int c = 0; c < grid.cols(); ++c) flat(0, k++) = grid(r, c);
    Tensor x = Tensor::from_matrix(flat);
    Tensor hidden = relu(add(matmul(x, mlp_w1_), mlp_b1_));
    return relu(add(matmul(hidden, mlp_w2_), mlp_b2_));
  }

  const int g = cfg_.grid_size;
  if (grid.rows() != g || grid.cols() != g)
    throw std::invalid_argument("encode: grid shape mismatch");
  const ConvDims cd = conv_dims(cfg_);

  // The input grid carries no gradient, so its 5x5 patches are a constant.
  RowMat patches(cd.h1 * cd.h1, 25);
  for (int r = 0; r < cd.h1; ++r)
    for (int c = 0; c < cd.h1; ++c) {
      const int row = r * cd.h1 + c;
      int k = 0;
      for (int kr = 0; kr < 5; ++kr)
        for (int kc = 0; kc < 5; ++kc) patches(row, k++) = grid(r + kr, c + kc);
    }
  Tensor a1 = relu(add(matmul(Tensor::from_matrix(patches), enc_k1_), enc_b1_));
  Tensor m1 = max_pool2x2(a1, cd.h1, cd.h1);  // [h2*h2, c1]

  // 3x3 patches of the pooled map, via differentiable gather + reshape.
  std::vector<int> idx;
  idx.reserve(static_cast<std::size_t>(cd.h3) * cd.h3 * 9);
  for (int r = 0; r < cd.h3; ++r)
    for (int c = 0; c < cd.h3; ++c)
      for (int kr = 0; kr < 3; ++kr)
        for (int kc = 0; kc < 3; ++kc) idx.push_back((r + kr) * cd.h2 + (c + kc));
  Tensor p2 = reshape(gather_rows(m1, idx), cd.h3 * cd.h3, 9 * cfg_.conv_channels1);
  Tensor a2 = relu(add(matmul(p2, enc_k2_), enc_b2_));

  if (cfg_.encoder_tail == "avg") {
    // spatial average per channel: translation invariant and count additive
    const int positions = cd.h3 * cd.h3;
    Tensor pool = Tensor::constant(1, positions, 1.0 / positions);
    Tensor pooled = matmul(pool, a2);  // [1, c2]
    return relu(add(matmul(pooled, enc_wf_), enc_bf_));
  }
  Tensor m2 = max_pool2x2(a2, cd.h3, cd.h3);  // [h4*h4, c2]
  Tensor flat = reshape(m2, 1, cd.flat);
  if (cfg_.encoder_tail == "concat") {
    // max-pooled layout plus a count-preserving channel sum
    const int positions = cd.h3 * cd.h3;
    Tensor pool = Tensor::constant(1, positions, 1.0 / positions);
    flat = concat_cols(flat, matmul(pool, a2));
  }
  return relu(add(matmul(flat, enc_wf_), enc_bf_));
}

RecurrentState PolicyModel::initial_state() const {
  return RecurrentState{Tensor::zeros(1, cfg_.hidden_dim), Tensor::zeros(1, cfg_.hidden_dim)};
}

PolicyModel::StepResult PolicyModel::step(const RecurrentState& state, const Tensor& features,
                                          int prev_label) const {
  if (prev_label < 0 || prev_label > cfg_.num_classes)
    throw std::invalid_argument("step: prev_label out of range");
  const int h = cfg_.hidden_dim;
  Tensor embedded = gather_rows(emb_, {prev_label});  // [1, e]
  Tensor xt = concat_cols(features, embedded);
  Tensor z = add(add(matmul(xt, cell_wx_), matmul(state.h, cell_wh_)), cell_b_);
  Tensor gate_i = sigmoid(slice_cols(z, 0, h));
  Tensor gate_f = sigmoid(slice_cols(z, h, h));
  Tensor gate_o = sigmoid(slice_cols(z, 2 * h, h));
  Tensor gate_g = tanh(slice_cols(z, 3 * h, h));
  Tensor c_new = add(mul(gate_f, state.c), mul(gate_i, gate_g));
  Tensor h_new = mul(gate_o, tanh(c_new));

  StepResult out;
  out.probs = softmax_rows(add(matmul(h_new, cls_w_), cls_b_));
  out.stop_prob = sigmoid(add(matmul(h_new, stop_w_), stop_b_));
  out.state = RecurrentState{h_new, c_new};
  return out;
}

Tensor PolicyModel::predict_size(const RecurrentState& state) const {
  return add(matmul(state.h, size_w_), size_b_);
}

// ---- checkpoints ------------------------------------------------------------

namespace {

nlohmann::json config_to_json(const PolicyConfig& c) {
  return nlohmann::json{{"num_classes", c.num_classes},
                        {"grid_size", c.grid_size},
                        {"encoder", c.encoder},
                        {"encoder_tail", c.encoder_tail},
                        {"conv_channels1", c.conv_channels1},
                        {"conv_channels2", c.conv_channels2},
                        {"mlp_hidden", c.mlp_hidden},
                        {"feature_dim", c.feature_dim},
                        {"embed_dim", c.embed_dim},
                        {"hidden_dim", c.hidden_dim}};
}

PolicyConfig config_from_json(const nlohmann::json& j) {
  PolicyConfig c;
  c.num_classes = j.at("num_classes").get<int>();
  c.grid_size = j.at("grid_size").get<int>();
  c.encoder = j.at("encoder").get<std::string>();
  c.encoder_tail = j.value("encoder_tail", "flatten");
  c.conv_channels1 = j.at("conv_channels1").get<int>();
  c.conv_channels2 = j.at("conv_channels2").get<int>();
  c.mlp_hidden = j.at("mlp_hidden").get<int>();
  c.feature_dim = j.at("feature_dim").get<int>();
  c.embed_dim = j.at("embed_dim").get<int>();
  c.hidden_dim = j.at("hidden_dim").get<int>();
  return c;
}

}  // namespace

void save_checkpoint(const PolicyModel& model, const std::string& path) {
  nlohmann::json j;
  j["format_version"] = 1;
  j["config"] = config_to_json(model.config());
  nlohmann::json params = nlohmann::json::object();
  for (const auto& [name, t] : model.parameters()) {
    nlohmann::json entry;
    entry["shape"] = {t.rows(), t.cols()};
    std::vector<double> data(t.flat().data(), t.flat().data() + t.size());
    entry["data"] = data;
    params[name] = entry;
  }
  j["params"] = params;
  std::ofstream out(path);
  if (!out) throw DataError("save_checkpoint: cannot open " + path);
  out << j.dump() << "\n";
}

PolicyModel load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("load_checkpoint: cannot open " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("load_checkpoint: parse failure: " + std::string(e.what()));
  }
  if (!j.contains("format_version") || j["format_version"].get<int>() != 1)
    throw DataError("load_checkpoint: unsupported format_version");
  PolicyModel model = PolicyModel::init(config_from_json(j.at("config")), 0);
  for (auto& [name, t] : model.parameters()) {
    if (!j["params"].contains(name)) throw DataError("load_checkpoint: missing param " + name);
    const auto& entry = j["params"][name];
    const auto shape = entry.at("shape").get<std::vector<int>>();
    if (shape.size() != 2 || shape[0] != t.rows() || shape[1] != t.cols())
      throw DataError("load_checkpoint: shape mismatch for " + name);
    const auto data = entry.at("data").get<std::vector<double>>();
    if (static_cast<int>(data.size()) != t.size())
      throw DataError("load_checkpoint: data length mismatch for " + name);
    for (int i = 0; i < t.size(); ++i) t.flat()[i] = data[i];
  }
  return model;
}

}  // namespace msp
