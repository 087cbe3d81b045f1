#include "ilnrs/pretrain_model.hpp"

#include <array>
#include <stdexcept>

namespace ilnrs::model {

namespace {

constexpr double kEmbeddingInitBound = 0.25;

bool one_of(std::size_t v, std::initializer_list<std::size_t> allowed) {
  for (std::size_t a : allowed)
    if (v == a) return true;
  return false;
}

}  // namespace

void PretrainConfig::validate() const {
  if (embedding_dim != 100)
    throw std::invalid_argument("PretrainConfig: embedding_dim is fixed at 100");
  if (!one_of(branch_width, {100, 200, 300}))
    throw std::invalid_argument("PretrainConfig: branch_width must be one of {100, 200, 300}");
  if (!one_of(blocks_per_branch, {1, 2}))
    throw std::invalid_argument("PretrainConfig: blocks_per_branch must be 1 or 2");
  if (!one_of(head_width, {50, 100, 200, 400}))
    throw std::invalid_argument("PretrainConfig: head_width must be one of {50, 100, 200, 400}");
  if (head_width % 2 != 0) throw std::invalid_argument("PretrainConfig: head_width must be even");
  if (dropout_rate < 0.0 || dropout_rate >= 1.0)
    throw std::invalid_argument("PretrainConfig: dropout_rate must lie in [0, 1)");
  if (!(learning_rate > 0.0))
    throw std::invalid_argument("PretrainConfig: learning_rate must be > 0");
}

// ---- ResidualBlock -----------------------------------------------------------

ResidualBlock::ResidualBlock(std::size_t width, double rate, std::uint64_t seed)
    : fc(width, width), drop(rate, seed) {}

Matrix ResidualBlock::forward(const Matrix& x, nn::Mode mode) {
  return nn::residual_add(x, drop.forward(relu.forward(fc.forward(x, mode), mode), mode));
}

Matrix ResidualBlock::backward(const Matrix& gout) {
  Matrix through = fc.backward(relu.backward(drop.backward(gout)));
  return nn::residual_add(gout, through);
}

Matrix ResidualBlock::apply(const Matrix& x) const {
  return nn::residual_add(x, relu.apply(fc.apply(x)));
}

void ResidualBlock::collect(std::vector<nn::Parameter*>& out) {
  out.push_back(&fc.weight);
  out.push_back(&fc.bias);
}

// ---- Branch ------------------------------------------------------------------

Branch::Branch(std::size_t in_dim, std::size_t width, std::size_t num_blocks, double rate,
               std::uint64_t seed)
    : proj(in_dim, width), proj_drop(rate, derive_seed(seed, 0)) {
  blocks.reserve(num_blocks);
  for (std::size_t b = 0; b < num_blocks; ++b)
    blocks.emplace_back(width, rate, derive_seed(seed, b + 1));
}

Matrix Branch::forward(const Matrix& emb, nn::Mode mode) {
  Matrix x = proj_drop.forward(proj_relu.forward(proj.forward(emb, mode), mode), mode);
  for (ResidualBlock& block : blocks) x = block.forward(x, mode);
  return x;
}

Matrix Branch::backward(const Matrix& gout) {
  Matrix g = gout;
  for (auto it = blocks.rbegin(); it != blocks.rend(); ++it) g = it->backward(g);
  return proj.backward(proj_relu.backward(proj_drop.backward(g)));
}

Matrix Branch::apply(const Matrix& emb) const {
  Matrix x = proj_relu.apply(proj.apply(emb));
  for (const ResidualBlock& block : blocks) x = block.apply(x);
  return x;
}

void Branch::collect(std::vector<nn::Parameter*>& out) {
  out.push_back(&proj.weight);
  out.push_back(&proj.bias);
  for (ResidualBlock& block : blocks) block.collect(out);
}

// ---- Head --------------------------------------------------------------------

Head::Head(std::size_t in_dim, std::size_t width, double rate, std::uint64_t seed)
    : fc1(in_dim, width),
      drop1(rate, derive_seed(seed, 0)),
      fc2(width, width / 2),
      drop2(rate, derive_seed(seed, 1)),
      out(width / 2, 1) {}

Matrix Head::forward(const Matrix& x, nn::Mode mode) {
  Matrix h = drop1.forward(relu1.forward(fc1.forward(x, mode), mode), mode);
  h = drop2.forward(relu2.forward(fc2.forward(h, mode), mode), mode);
  return out.forward(h, mode);  // output layer stays activation-free
}

Matrix Head::backward(const Matrix& gout) {
  Matrix g = out.backward(gout);
  g = fc2.backward(relu2.backward(drop2.backward(g)));
  return fc1.backward(relu1.backward(drop1.backward(g)));
}

Matrix Head::apply(const Matrix& x) const {
  Matrix h = relu1.apply(fc1.apply(x));
  h = relu2.apply(fc2.apply(h));
  return out.apply(h);
}

void Head::collect(std::vector<nn::Parameter*>& out_params) {
  out_params.push_back(&fc1.weight);
  out_params.push_back(&fc1.bias);
  out_params.push_back(&fc2.weight);
  out_params.push_back(&fc2.bias);
  out_params.push_back(&out.weight);
  out_params.push_back(&out.bias);
}

// ---- PretrainModel -------------------------------------------------------------

PretrainModel::PretrainModel(const PretrainConfig& config, std::size_t num_cations,
                             std::size_t num_anions, std::uint64_t seed)
    : cation_table_(num_cations, config.embedding_dim),
      anion_table_(num_anions, config.embedding_dim),
      cation_branch_(config.embedding_dim, config.branch_width, config.blocks_per_branch,
                     config.dropout_rate, derive_seed(seed, 0x636174ULL)),
      anion_branch_(config.embedding_dim, config.branch_width, config.blocks_per_branch,
                    config.dropout_rate, derive_seed(seed, 0x616e69ULL)),
      head_(2 * config.branch_width, config.head_width, config.dropout_rate,
            derive_seed(seed, 0x68656164ULL)),
      config_(config) {}

PretrainModel PretrainModel::build(const PretrainConfig& config, std::size_t num_cations,
                                   std::size_t num_anions, std::uint64_t seed) {
  config.validate();
  if (num_cations == 0 || num_anions == 0)
    throw std::invalid_argument("PretrainModel: vocabulary sizes must be > 0");
  PretrainModel model(config, num_cations, num_anions, seed);
  Rng rng(derive_seed(seed, 0x696e6974ULL));
  model.cation_table_.init(rng, kEmbeddingInitBound);
  model.anion_table_.init(rng, kEmbeddingInitBound);
  model.cation_branch_.proj.init(rng);
  for (ResidualBlock& b : model.cation_branch_.blocks) b.fc.init(rng);
  model.anion_branch_.proj.init(rng);
  for (ResidualBlock& b : model.anion_branch_.blocks) b.fc.init(rng);
  model.head_.fc1.init(rng);
  model.head_.fc2.init(rng);
  model.head_.out.init(rng);
  return model;
}

Matrix PretrainModel::forward(std::span<const int> cation_ids, std::span<const int> anion_ids,
                              nn::Mode mode) {
  if (cation_ids.size() != anion_ids.size())
    throw std::invalid_argument("PretrainModel::forward: id arrays differ in length");
  Matrix ce = cation_branch_.forward(cation_table_.forward(cation_ids), mode);
  Matrix ae = anion_branch_.forward(anion_table_.forward(anion_ids), mode);
  const std::array<const Matrix*, 2> parts = {&ce, &ae};
  return head_.forward(nn::concat_cols(parts), mode);
}

void PretrainModel::backward(const Matrix& grad_pred) {
  Matrix g_concat = head_.backward(grad_pred);
  const std::array<std::size_t, 2> widths = {config_.branch_width, config_.branch_width};
  std::vector<Matrix> parts = nn::split_cols(g_concat, widths);
  cation_table_.backward(cation_branch_.backward(parts[0]));
  anion_table_.backward(anion_branch_.backward(parts[1]));
}

Matrix PretrainModel::predict(std::span<const int> cation_ids,
                              std::span<const int> anion_ids) const {
  return head_.apply(encode(cation_ids, anion_ids));
}

Matrix PretrainModel::encode(std::span<const int> cation_ids,
                             std::span<const int> anion_ids) const {
  if (cation_ids.size() != anion_ids.size())
    throw std::invalid_argument("PretrainModel::encode: id arrays differ in length");
  Matrix ce = cation_branch_.apply(cation_table_.apply(cation_ids));
  Matrix ae = anion_branch_.apply(anion_table_.apply(anion_ids));
  const std::array<const Matrix*, 2> parts = {&ce, &ae};
  return nn::concat_cols(parts);
}

std::vector<nn::Parameter*> PretrainModel::parameters() {
  std::vector<nn::Parameter*> out;
  out.push_back(&cation_table_.table);
  out.push_back(&anion_table_.table);
  cation_branch_.collect(out);
  anion_branch_.collect(out);
  head_.collect(out);
  return out;
}

void PretrainModel::adam_step_all(const nn::AdamConfig& cfg) {
  for (nn::Parameter* p : parameters()) nn::adam_step(*p, cfg);
}

EncoderSnapshot PretrainModel::export_encoder() const {
  return EncoderSnapshot(config_, cation_table_, anion_table_, cation_branch_, anion_branch_);
}

// ---- EncoderSnapshot ------------------------------------------------------------

EncoderSnapshot::EncoderSnapshot(const PretrainConfig& config, const nn::Embedding& cation_table,
                                 const nn::Embedding& anion_table, const Branch& cation_branch,
                                 const Branch& anion_branch)
    : config_(config),
      cation_table_(cation_table),
      anion_table_(anion_table),
      cation_branch_(cation_branch),
      anion_branch_(anion_branch) {
  for (const nn::Parameter* p : parameters()) const_cast<nn::Parameter*>(p)->frozen = true;
}

Matrix EncoderSnapshot::encode(std::span<const int> cation_ids,
                               std::span<const int> anion_ids) const {
  if (cation_ids.size() != anion_ids.size())
    throw std::invalid_argument("EncoderSnapshot::encode: id arrays differ in length");
  Matrix ce = cation_branch_.apply(cation_table_.apply(cation_ids));
  Matrix ae = anion_branch_.apply(anion_table_.apply(anion_ids));
  const std::array<const Matrix*, 2> parts = {&ce, &ae};
  return nn::concat_cols(parts);
}

std::vector<const nn::Parameter*> EncoderSnapshot::parameters() const {
  std::vector<nn::Parameter*> mut;
  mut.push_back(const_cast<nn::Parameter*>(&cation_table_.table));
  mut.push_back(const_cast<nn::Parameter*>(&anion_table_.table));
  const_cast<Branch&>(cation_branch_).collect(mut);
  const_cast<Branch&>(anion_branch_).collect(mut);
  return {mut.begin(), mut.end()};
}

}  // namespace ilnrs::model
