#include "core/weights.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

namespace octcast {

using nlohmann::json;

Eigen::MatrixXd& ParamStore::at(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end()) fail(ErrorKind::InvalidArgument, "unknown parameter '" + name + "'");
  return it->second;
}

const Eigen::MatrixXd& ParamStore::at(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) fail(ErrorKind::InvalidArgument, "unknown parameter '" + name + "'");
  return it->second;
}

void ParamStore::set(const std::string& name, Eigen::MatrixXd value) {
  params_[name] = std::move(value);
}

size_t ParamStore::count_scalars() const {
  size_t n = 0;
  for (const auto& [name, m] : params_) n += static_cast<size_t>(m.size());
  return n;
}

ad::Var ParamTape::p(const std::string& name) {
  auto it = leaves_.find(name);
  if (it != leaves_.end()) return it->second;
  const ad::Var v = tape_.param(store_->at(name));
  leaves_.emplace(name, v);
  return v;
}

std::map<std::string, Eigen::MatrixXd> ParamTape::grads() const {
  std::map<std::string, Eigen::MatrixXd> out;
  for (const auto& [name, var] : leaves_) {
    if (tape_.has_grad(var)) {
      out[name] = tape_.grad(var);
    } else {
      out[name] = Eigen::MatrixXd::Zero(var.val().rows(), var.val().cols());
    }
  }
  return out;
}

namespace {

Eigen::MatrixXd uniform_init(Rng& rng, int rows, int cols, int fan_in) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  Eigen::MatrixXd m(rows, cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) m(r, c) = rng.uniform(-bound, bound);
  return m;
}

void init_block(ParamStore& s, Rng& rng, const std::string& prefix, int D) {
  s.set(prefix + ".qkv.w", uniform_init(rng, D, 3 * D, D));
  s.set(prefix + ".qkv.b", Eigen::MatrixXd::Zero(1, 3 * D));
  s.set(prefix + ".ln.g", Eigen::MatrixXd::Ones(1, D));
  s.set(prefix + ".ln.b", Eigen::MatrixXd::Zero(1, D));
  s.set(prefix + ".mlp.w1", uniform_init(rng, D, 4 * D, D));
  s.set(prefix + ".mlp.b1", Eigen::MatrixXd::Zero(1, 4 * D));
  s.set(prefix + ".mlp.w2", uniform_init(rng, 4 * D, D, 4 * D));
  s.set(prefix + ".mlp.b2", Eigen::MatrixXd::Zero(1, D));
}

}  // namespace

ParamStore init_model_weights(const ModelConfig& cfg, uint64_t seed) {
  cfg.validate();
  Rng rng(mix_seed(seed, 0x1417));
  ParamStore s;
  const int D = cfg.D;
  const int L = cfg.latent_dim;

  s.set("tok.w_h", uniform_init(rng, 4 + cfg.d_feat, D, 4 + cfg.d_feat));
  s.set("tok.b_h", Eigen::MatrixXd::Zero(1, D));
  s.set("tok.w_o", uniform_init(rng, 4 + cfg.d_feat, D, 4 + cfg.d_feat));
  s.set("tok.b_o", Eigen::MatrixXd::Zero(1, D));
  s.set("tok.w_g", uniform_init(rng, cfg.d_feat, D, cfg.d_feat));
  s.set("tok.b_g", Eigen::MatrixXd::Zero(1, D));
  s.set("tok.spatial", uniform_init(rng, 3, D, D));

  for (int i = 0; i < cfg.enc_blocks; ++i) init_block(s, rng, "enc" + std::to_string(i), D);
  s.set("dec.embed.w", uniform_init(rng, 4, D, 4));
  s.set("dec.embed.b", Eigen::MatrixXd::Zero(1, D));
  for (int i = 0; i < cfg.dec_blocks; ++i) init_block(s, rng, "dec" + std::to_string(i), D);

  s.set("hand.enc.w", uniform_init(rng, 4 + D, 2 * L, 4 + D));
  s.set("hand.enc.b", Eigen::MatrixXd::Zero(1, 2 * L));
  s.set("hand.dec.w", uniform_init(rng, L + D, 4, L + D));
  s.set("hand.dec.b", Eigen::MatrixXd::Zero(1, 4));

  int cond = D;
  if (cfg.conditioning == "o_given_h") {
    s.set("obj.traj.w", uniform_init(rng, 4 * cfg.F, D, 4 * cfg.F));
    s.set("obj.traj.b", Eigen::MatrixXd::Zero(1, D));
    cond = 2 * D;
  }
  s.set("obj.enc.w", uniform_init(rng, 2 + cond, 2 * L, 2 + cond));
  s.set("obj.enc.b", Eigen::MatrixXd::Zero(1, 2 * L));
  s.set("obj.dec.w", uniform_init(rng, L + cond, 2, L + cond));
  s.set("obj.dec.b", Eigen::MatrixXd::Zero(1, 2));

  if (cfg.n_actions() > 0) {
    s.set("ant.w1", uniform_init(rng, D, D, D));
    s.set("ant.b1", Eigen::MatrixXd::Zero(1, D));
    s.set("ant.w2", uniform_init(rng, D, cfg.n_actions(), D));
    s.set("ant.b2", Eigen::MatrixXd::Zero(1, cfg.n_actions()));
  }
  return s;
}

namespace {

constexpr char kMagic[5] = {'O', 'C', 'T', 'W', '1'};

std::map<std::string, double> config_scalars(const ModelConfig& cfg) {
  double mode = 2.0;
  if (cfg.conditioning == "none") mode = 0.0;
  if (cfg.conditioning == "h_given_o") mode = 1.0;
  return {{"cfg.T", double(cfg.T)},
          {"cfg.F", double(cfg.F)},
          {"cfg.D", double(cfg.D)},
          {"cfg.heads", double(cfg.heads)},
          {"cfg.enc_blocks", double(cfg.enc_blocks)},
          {"cfg.dec_blocks", double(cfg.dec_blocks)},
          {"cfg.dropout", cfg.dropout},
          {"cfg.latent_dim", double(cfg.latent_dim)},
          {"cfg.lambda_obj", cfg.lambda_obj},
          {"cfg.K_samples", double(cfg.K_samples)},
          {"cfg.N_contacts", double(cfg.N_contacts)},
          {"cfg.d_feat", double(cfg.d_feat)},
          {"cfg.conditioning", mode},
          {"cfg.n_verbs", double(cfg.n_verbs)},
          {"cfg.n_nouns", double(cfg.n_nouns)},
          {"cfg.ablate_hand", cfg.ablate.count("hand") ? 1.0 : 0.0},
          {"cfg.ablate_object", cfg.ablate.count("object") ? 1.0 : 0.0},
          {"cfg.ablate_global", cfg.ablate.count("global") ? 1.0 : 0.0}};
}

ModelConfig config_from_scalars(const std::map<std::string, double>& v) {
  const auto get = [&](const char* k) {
    auto it = v.find(k);
    if (it == v.end()) fail(ErrorKind::SchemaError, std::string("weights miss ") + k);
    return it->second;
  };
  ModelConfig cfg;
  cfg.T = int(get("cfg.T"));
  cfg.F = int(get("cfg.F"));
  cfg.D = int(get("cfg.D"));
  cfg.heads = int(get("cfg.heads"));
  cfg.enc_blocks = int(get("cfg.enc_blocks"));
  cfg.dec_blocks = int(get("cfg.dec_blocks"));
  cfg.dropout = get("cfg.dropout");
  cfg.latent_dim = int(get("cfg.latent_dim"));
  cfg.lambda_obj = get("cfg.lambda_obj");
  cfg.K_samples = int(get("cfg.K_samples"));
  cfg.N_contacts = int(get("cfg.N_contacts"));
  cfg.d_feat = int(get("cfg.d_feat"));
  const int mode = int(get("cfg.conditioning"));
  cfg.conditioning = mode == 0 ? "none" : (mode == 1 ? "h_given_o" : "o_given_h");
  cfg.n_verbs = int(get("cfg.n_verbs"));
  cfg.n_nouns = int(get("cfg.n_nouns"));
  if (get("cfg.ablate_hand") != 0.0) cfg.ablate.insert("hand");
  if (get("cfg.ablate_object") != 0.0) cfg.ablate.insert("object");
  if (get("cfg.ablate_global") != 0.0) cfg.ablate.insert("global");
  cfg.validate();
  return cfg;
}

}  // namespace

void save_weights(const std::string& path, const ParamStore& store, const ModelConfig& cfg) {
  // assemble named tensors: parameters plus cfg.* scalars
  std::map<std::string, Eigen::MatrixXd> tensors = store.all();
  for (const auto& [name, value] : config_scalars(cfg)) {
    Eigen::MatrixXd m(1, 1);
    m(0, 0) = value;
    tensors[name] = std::move(m);
  }

  json manifest = json::array();
  uint64_t offset = 0;
  for (const auto& [name, m] : tensors) {
    manifest.push_back({{"name", name},
                        {"shape", {m.rows(), m.cols()}},
                        {"offset", offset}});
    offset += static_cast<uint64_t>(m.size()) * sizeof(float);
  }
  const std::string mtext = manifest.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::IOFailure, "cannot write " + path);
  out.write(kMagic, sizeof(kMagic));
  const uint64_t mlen = mtext.size();
  char lenbuf[8];
  for (int i = 0; i < 8; ++i) lenbuf[i] = static_cast<char>((mlen >> (8 * i)) & 0xff);
  out.write(lenbuf, 8);
  out.write(mtext.data(), static_cast<std::streamsize>(mtext.size()));
  std::vector<float> row;
  for (const auto& [name, m] : tensors) {
    row.resize(static_cast<size_t>(m.size()));
    size_t k = 0;
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index c = 0; c < m.cols(); ++c) row[k++] = static_cast<float>(m(r, c));
    out.write(reinterpret_cast<const char*>(row.data()),
              static_cast<std::streamsize>(row.size() * sizeof(float)));
  }
  if (!out) fail(ErrorKind::IOFailure, "failed writing " + path);
}

std::pair<ParamStore, ModelConfig> load_weights(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::IOFailure, "cannot open " + path);
  char magic[5];
  in.read(magic, 5);
  if (!in || std::memcmp(magic, kMagic, 5) != 0)
    fail(ErrorKind::SchemaError, path + " is not an OCTW1 weight file");
  char lenbuf[8];
  in.read(lenbuf, 8);
  if (!in) fail(ErrorKind::SchemaError, "truncated weight file");
  uint64_t mlen = 0;
  for (int i = 0; i < 8; ++i)
    mlen |= static_cast<uint64_t>(static_cast<unsigned char>(lenbuf[i])) << (8 * i);
  std::string mtext(mlen, '\0');
  in.read(mtext.data(), static_cast<std::streamsize>(mlen));
  if (!in) fail(ErrorKind::SchemaError, "truncated weight manifest");
  const json manifest = json::parse(mtext, nullptr, false);
  if (manifest.is_discarded() || !manifest.is_array())
    fail(ErrorKind::SchemaError, "malformed weight manifest");

  const std::streampos payload_start = in.tellg();
  ParamStore store;
  std::map<std::string, double> cfg_values;
  std::vector<float> buf;
  for (const auto& entry : manifest) {
    const std::string name = entry.at("name").get<std::string>();
    const auto shape = entry.at("shape");
    const auto rows = shape.at(0).get<Eigen::Index>();
    const auto cols = shape.at(1).get<Eigen::Index>();
    const uint64_t offset = entry.at("offset").get<uint64_t>();
    in.seekg(payload_start + static_cast<std::streamoff>(offset));
    buf.resize(static_cast<size_t>(rows * cols));
    in.read(reinterpret_cast<char*>(buf.data()),
            static_cast<std::streamsize>(buf.size() * sizeof(float)));
    if (!in) fail(ErrorKind::SchemaError, "truncated tensor data for " + name);
    Eigen::MatrixXd m(rows, cols);
    size_t k = 0;
    for (Eigen::Index r = 0; r < rows; ++r)
      for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = static_cast<double>(buf[k++]);
    if (name.rfind("cfg.", 0) == 0) {
      cfg_values[name] = m(0, 0);
    } else {
      store.set(name, std::move(m));
    }
  }
  return {std::move(store), config_from_scalars(cfg_values)};
}

}  // namespace octcast
