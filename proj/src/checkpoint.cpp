#include "frn/checkpoint.hpp"

#include <cmath>
#include <map>

#include "frn/binary_io.hpp"

namespace frn {
namespace {

void put_tensor(ByteWriter& w, const std::string& name, const Matrix<double>& m) {
  w.put<std::uint32_t>(static_cast<std::uint32_t>(name.size()));
  w.put_bytes(name);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(m.rows()));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(m.cols()));
  for (Index i = 0; i < m.rows(); ++i)
    for (Index j = 0; j < m.cols(); ++j) w.put<double>(m(i, j));
}

Matrix<double> scalar(double v) { return Matrix<double>::Constant(1, 1, v); }

}  // namespace

void save_checkpoint(const std::string& path, const Model& model, const CheckpointMeta& meta) {
  std::map<std::string, Matrix<double>> tensors;
  tensors["embedding.weight"] = model.embedding.weight;
  tensors["embedding.bias"] = model.embedding.bias;
  tensors["embedding.scale"] = scalar(model.embedding.output_scale);
  tensors["head.alpha"] = scalar(model.head.alpha);
  tensors["head.beta"] = scalar(model.head.beta);
  tensors["head.gamma"] = scalar(model.head.gamma);
  Matrix<double> mask(1, 3);
  mask << model.head.learnable.alpha, model.head.learnable.beta, model.head.learnable.gamma;
  tensors["head.mask"] = mask;
  tensors["dsn.lambda"] = scalar(model.dsn.lambda_fixed);
  tensors["ctx.identity"] = scalar(model.ctx.identity_mode ? 1.0 : 0.0);
  if (!model.ctx.identity_mode && model.ctx.key_proj.size() > 0) {
    tensors["ctx.key_proj"] = model.ctx.key_proj;
    tensors["ctx.value_proj"] = model.ctx.value_proj;
  }

  ByteWriter w;
  w.put_bytes(std::string_view(kCheckpointMagic, 8));
  w.put<std::uint32_t>(kCheckpointVersion);
  w.put<std::uint32_t>(meta.precision == Precision::f32 ? 1u : 2u);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(model.kind));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(model.formulation));
  w.put<std::uint64_t>(meta.config_hash);
  w.put<std::uint64_t>(meta.rng_seed);
  w.put<std::uint64_t>(meta.rng_blocks);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(tensors.size()));
  for (const auto& [name, m] : tensors) put_tensor(w, name, m);
  w.put_crc();
  w.write_file(path);
}

Checkpoint load_checkpoint(const std::string& path) {
  auto in = ByteReader::from_file(path);
  if (in.get_bytes(8, "magic") != std::string_view(kCheckpointMagic, 8))
    throw IoError("'" + path + "' is not a checkpoint (bad magic)", 0);
  const auto version = in.get<std::uint32_t>("version");
  if (version != kCheckpointVersion)
    throw IoError("unsupported checkpoint version " + std::to_string(version), 8);
  in.check_crc();
  Checkpoint ck;
  const auto precision_at = in.offset();
  const auto precision = in.get<std::uint32_t>("precision");
  if (precision != 1 && precision != 2) throw IoError("bad precision tag", precision_at);
  ck.meta.precision = precision == 1 ? Precision::f32 : Precision::f64;
  const auto kind_at = in.offset();
  const auto kind = in.get<std::uint32_t>("head kind");
  if (kind > static_cast<std::uint32_t>(HeadKind::ctx)) throw IoError("bad head kind", kind_at);
  ck.model.kind = static_cast<HeadKind>(kind);
  const auto form_at = in.offset();
  const auto form = in.get<std::uint32_t>("formulation");
  if (form > static_cast<std::uint32_t>(FormulationChoice::woodbury))
    throw IoError("bad formulation tag", form_at);
  ck.model.formulation = static_cast<FormulationChoice>(form);
  ck.meta.config_hash = in.get<std::uint64_t>("config hash");
  ck.meta.rng_seed = in.get<std::uint64_t>("rng seed");
  ck.meta.rng_blocks = in.get<std::uint64_t>("rng blocks");
  const auto count = in.get<std::uint32_t>("tensor count");
  std::map<std::string, Matrix<double>> tensors;
  for (std::uint32_t t = 0; t < count; ++t) {
    const auto len = in.get<std::uint32_t>("tensor name length");
    std::string name = in.get_bytes(len, "tensor name");
    const auto rows = in.get<std::uint32_t>("tensor rows");
    const auto cols = in.get<std::uint32_t>("tensor cols");
    if (static_cast<std::size_t>(rows) * cols * 8 > in.remaining())
      throw IoError("tensor '" + name + "' larger than the file", in.offset());
    Matrix<double> m(rows, cols);
    for (Index i = 0; i < m.rows(); ++i)
      for (Index j = 0; j < m.cols(); ++j) {
        const auto at = in.offset();
        m(i, j) = in.get<double>("tensor data");
        if (!std::isfinite(m(i, j))) throw IoError("non-finite value in tensor '" + name + "'", at);
      }
    tensors[std::move(name)] = std::move(m);
  }
  if (in.remaining() != 0) throw IoError("trailing bytes after tensors", in.offset());

  auto need = [&](const std::string& name) -> const Matrix<double>& {
    const auto it = tensors.find(name);
    if (it == tensors.end()) throw IoError("checkpoint lacks tensor '" + name + "'", in.offset());
    return it->second;
  };
  ck.model.embedding.weight = need("embedding.weight");
  ck.model.embedding.bias = need("embedding.bias");
  if (ck.model.embedding.bias.cols() != ck.model.embedding.weight.cols())
    throw IoError("embedding bias width mismatch", in.offset());
  ck.model.embedding.output_scale = need("embedding.scale")(0, 0);
  ck.model.head.alpha = need("head.alpha")(0, 0);
  ck.model.head.beta = need("head.beta")(0, 0);
  ck.model.head.gamma = need("head.gamma")(0, 0);
  const auto& mask = need("head.mask");
  ck.model.head.learnable = {mask(0, 0) != 0.0, mask(0, 1) != 0.0, mask(0, 2) != 0.0};
  ck.model.dsn.lambda_fixed = need("dsn.lambda")(0, 0);
  ck.model.ctx.identity_mode = need("ctx.identity")(0, 0) != 0.0;
  if (!ck.model.ctx.identity_mode && tensors.count("ctx.key_proj")) {
    ck.model.ctx.key_proj = need("ctx.key_proj");
    ck.model.ctx.value_proj = need("ctx.value_proj");
  }
  return ck;
}

}  // namespace frn
