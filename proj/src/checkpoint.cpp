#include <nlohmann/json.hpp>

#include "binary_io.hpp"
#include "model_io.hpp"
#include "retarget/errors.hpp"
#include "retarget/training.hpp"

namespace retarget {

namespace io {

namespace {

constexpr std::size_t kModelHeader = 24;

void put_matrix(ByteWriter& w, const auto& m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      w.f32(m(r, c));
    }
  }
}

void get_matrix(ByteReader& r, auto& m) {
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      m(i, c) = r.f32();
    }
  }
}

}  // namespace

nlohmann::json mlp_shape(const nn::MlpModel<float>& model) {
  return {{"layer_dims", model.layer_dims},
          {"output", model.output_activation == nn::OutputActivation::limit_squash
                         ? "limit_squash"
                         : "linear"}};
}

std::vector<std::uint8_t> encode_model_file(std::string_view magic, std::uint32_t version,
                                            const nlohmann::json& metadata,
                                            std::span<const nn::MlpModel<float>* const> nets) {
  ByteWriter w;
  w.text(magic);
  w.u32(version);
  w.u32(0);
  const std::string meta = metadata.dump();
  w.u64(meta.size());
  w.text(meta);
  for (const auto* net : nets) {
    net->validate();
    for (const auto& layer : net->layers) {
      put_matrix(w, layer.weight);
      put_matrix(w, layer.bias);
    }
    if (net->output_activation == nn::OutputActivation::limit_squash) {
      put_matrix(w, net->squash_center);
      put_matrix(w, net->squash_halfwidth);
    }
  }
  auto& bytes = w.data();
  const std::uint32_t crc = crc32(std::span(bytes).subspan(16));
  std::memcpy(bytes.data() + 12, &crc, sizeof crc);
  return std::move(bytes);
}

ModelFile decode_model_file(std::span<const std::uint8_t> bytes, std::string_view magic,
                            std::uint32_t version, std::string_view what) {
  const std::string name(what);
  if (bytes.size() < 12 ||
      std::string_view(reinterpret_cast<const char*>(bytes.data()), 8) != magic) {
    throw FormatError(name + ": not a " + std::string(magic) + " file");
  }
  ByteReader header(bytes, name);
  header.seek(8);
  const std::uint32_t found = header.u32();
  if (found != version) {
    throw VersionError(found, version, name);
  }
  if (bytes.size() < kModelHeader) {
    throw ChecksumError(name + ": file too short (truncated)");
  }
  const std::uint32_t stored = header.u32();
  if (crc32(bytes.subspan(16)) != stored) {
    throw ChecksumError(name + ": checksum mismatch (file damaged or truncated)");
  }
  ModelFile out;
  try {
    ByteReader r(bytes, name);
    r.seek(16);
    const std::uint64_t meta_len = r.u64();
    if (meta_len > r.remaining()) {
      throw ChecksumError(name + ": metadata length exceeds file size");
    }
    out.metadata = nlohmann::json::parse(r.text(static_cast<std::size_t>(meta_len)));
    for (const auto& shape : out.metadata.at("networks")) {
      nn::MlpModel<float> net;
      net.layer_dims = shape.at("layer_dims").get<std::vector<std::size_t>>();
      const auto output = shape.at("output").get<std::string>();
      if (output != "linear" && output != "limit_squash") {
        throw ChecksumError(name + ": unknown output activation '" + output + "'");
      }
      net.output_activation = output == "linear" ? nn::OutputActivation::linear
                                                 : nn::OutputActivation::limit_squash;
      if (net.layer_dims.size() < 2) {
        throw ShapeMismatchError(name + ": network needs at least two layer widths");
      }
      for (std::size_t l = 0; l + 1 < net.layer_dims.size(); ++l) {
        const auto in = static_cast<Eigen::Index>(net.layer_dims[l]);
        const auto o = static_cast<Eigen::Index>(net.layer_dims[l + 1]);
        if (static_cast<std::size_t>(in * o) > r.remaining() / 4) {
          throw ChecksumError(name + ": parameter block exceeds file size");
        }
        nn::DenseLayer<float> layer{nn::Matrix<float>(in, o), nn::RowVector<float>(o)};
        get_matrix(r, layer.weight);
        get_matrix(r, layer.bias);
        net.layers.push_back(std::move(layer));
      }
      if (net.output_activation == nn::OutputActivation::limit_squash) {
        const auto o = static_cast<Eigen::Index>(net.output_dim());
        net.squash_center.resize(o);
        net.squash_halfwidth.resize(o);
        get_matrix(r, net.squash_center);
        get_matrix(r, net.squash_halfwidth);
      }
      net.validate();
      out.nets.push_back(std::move(net));
    }
    if (r.remaining() != 0) {
      throw ChecksumError(name + ": trailing bytes after parameters");
    }
  } catch (const TruncatedError& e) {
    throw ChecksumError(e.what());
  } catch (const nlohmann::json::exception& e) {
    throw ChecksumError(name + ": bad metadata: " + e.what());
  }
  return out;
}

}  // namespace io

namespace {

constexpr std::string_view kMagic = "RTGTMODL";

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const RetargetModel& model) {
  model.nets.validate();
  nlohmann::json meta;
  meta["human_chain"] = nlohmann::json::parse(model.human_chain.to_json());
  meta["robot_chain"] = nlohmann::json::parse(model.robot_chain.to_json());
  meta["config"] = nlohmann::json::parse(model.config.to_json());
  meta["networks"] = {io::mlp_shape(model.nets.encoder_h), io::mlp_shape(model.nets.encoder_r),
                      io::mlp_shape(model.nets.decoder)};
  const std::array<const nn::MlpModel<float>*, 3> nets{&model.nets.encoder_h,
                                                       &model.nets.encoder_r, &model.nets.decoder};
  return io::encode_model_file(kMagic, kCheckpointVersion, meta, nets);
}

RetargetModel decode_checkpoint(std::span<const std::uint8_t> bytes) {
  auto file = io::decode_model_file(bytes, kMagic, kCheckpointVersion, "checkpoint");
  if (file.nets.size() != 3) {
    throw ShapeMismatchError("checkpoint: expected 3 networks, found " +
                             std::to_string(file.nets.size()));
  }
  try {
    RetargetModel model{KinematicChain::from_json(file.metadata.at("human_chain").dump()),
                        KinematicChain::from_json(file.metadata.at("robot_chain").dump()),
                        TrainConfig::from_json(file.metadata.at("config").dump()),
                        {std::move(file.nets[0]), std::move(file.nets[1]), std::move(file.nets[2])}};
    model.nets.validate();
    if (model.nets.encoder_h.input_dim() != 4 * model.human_chain.joint_count() ||
        model.nets.encoder_r.input_dim() != model.robot_chain.joint_count()) {
      throw ShapeMismatchError("checkpoint: network widths do not match the embedded chains");
    }
    return model;
  } catch (const nlohmann::json::exception& e) {
    throw ChecksumError(std::string("checkpoint: bad metadata: ") + e.what());
  }
}

void save_checkpoint(const RetargetModel& model, const std::filesystem::path& path) {
  io::write_file_atomic(path, encode_checkpoint(model));
}

RetargetModel load_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(io::read_file(path));
}

RetargetModel load_checkpoint(const std::filesystem::path& path, const KinematicChain& robot_chain) {
  auto model = load_checkpoint(path);
  if (!(model.robot_chain == robot_chain)) {
    throw ShapeMismatchError("checkpoint " + path.string() + " was trained for robot chain '" +
                             model.robot_chain.name() + "' (" +
                             std::to_string(model.robot_chain.joint_count()) +
                             " joints), not '" + robot_chain.name() + "' (" +
                             std::to_string(robot_chain.joint_count()) + " joints)");
  }
  return model;
}

}  // namespace retarget
