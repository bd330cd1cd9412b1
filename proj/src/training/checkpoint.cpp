#include "bcl/training/checkpoint.hpp"

#include <limits>

#include "bcl/errors.hpp"
#include "bcl/io/binary.hpp"

namespace bcl {
namespace {

constexpr std::string_view kMagic = "BCL1";
// Upper bound on header size; anything larger is treated as corruption.
constexpr std::uint32_t kMaxHeader = 64u << 20;

nlohmann::json shape_json(const std::string& name, const Matrix& m) {
  return {{"name", name}, {"rows", m.rows()}, {"cols", m.cols()}};
}

}  // namespace

nlohmann::json epoch_log_json(const EpochLog& log, bool with_wall_time) {
  nlohmann::json j{{"epoch", log.epoch},
                   {"loss_total", log.loss_total},
                   {"loss_bpr", log.loss_bpr},
                   {"loss_cl", log.loss_cl}};
  if (with_wall_time) j["wall_ms"] = log.wall_ms;
  if (log.val_recall) j["val_recall_at_50"] = *log.val_recall;
  return j;
}

std::string serialize_checkpoint(const Checkpoint& ckpt) {
  nlohmann::json header;
  header["config"] = ckpt.config;
  header["encoder"] = ckpt.encoder;
  nlohmann::json tensors = nlohmann::json::array();
  for (const auto& [name, m] : ckpt.tensors) tensors.push_back(shape_json(name, m));
  header["tensors"] = tensors;
  header["correlation"] = {{"rows", ckpt.correlation.rows()}, {"cols", ckpt.correlation.cols()}};
  nlohmann::json log = nlohmann::json::array();
  for (const auto& e : ckpt.log) log.push_back(epoch_log_json(e, false));
  header["log"] = log;
  const std::string text = header.dump();

  io::ByteWriter w;
  w.bytes(kMagic);
  w.u8(Checkpoint::kVersion);
  w.u32(static_cast<std::uint32_t>(text.size()));
  w.bytes(text);
  auto payload = [&](const Matrix& m) {
    for (double v : m.values()) w.f32(static_cast<float>(v));
  };
  for (const auto& [_, m] : ckpt.tensors) payload(m);
  payload(ckpt.correlation);
  w.u64(io::fnv1a64(w.data()));
  return w.data();
}

Checkpoint deserialize_checkpoint(std::string_view bytes, const std::string& source) {
  io::ByteReader r(bytes, source);
  if (r.remaining() < kMagic.size() || bytes.substr(0, kMagic.size()) != kMagic)
    r.fail("not a checkpoint (bad magic)");
  r.bytes(kMagic.size());
  const std::uint8_t version = r.u8();
  if (version != Checkpoint::kVersion) {
    r.fail("unsupported checkpoint version " + std::to_string(version) + " (expected " +
           std::to_string(Checkpoint::kVersion) + ")");
  }
  const std::uint32_t header_len = r.u32();
  if (header_len > kMaxHeader) r.fail("implausible header length " + std::to_string(header_len));
  const std::size_t header_at = r.offset();
  const std::string_view text = r.bytes(header_len);

  Checkpoint ckpt;
  std::vector<std::pair<std::string, std::pair<std::size_t, std::size_t>>> shapes;
  std::pair<std::size_t, std::size_t> corr_shape;
  try {
    const auto header = nlohmann::json::parse(text);
    ckpt.config = header.at("config").get<TrainConfig>();
    ckpt.encoder = header.at("encoder").get<EncoderConfig>();
    for (const auto& t : header.at("tensors")) {
      shapes.push_back({t.at("name").get<std::string>(),
                        {t.at("rows").get<std::size_t>(), t.at("cols").get<std::size_t>()}});
    }
    corr_shape = {header.at("correlation").at("rows").get<std::size_t>(),
                  header.at("correlation").at("cols").get<std::size_t>()};
    for (const auto& e : header.at("log")) {
      EpochLog l;
      l.epoch = e.at("epoch").get<std::size_t>();
      l.loss_total = e.at("loss_total").get<double>();
      l.loss_bpr = e.at("loss_bpr").get<double>();
      l.loss_cl = e.at("loss_cl").get<double>();
      if (e.contains("val_recall_at_50")) l.val_recall = e.at("val_recall_at_50").get<double>();
      ckpt.log.push_back(l);
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(source + ": bad checkpoint header at offset " + std::to_string(header_at) +
                      ": " + e.what());
  } catch (const ContractError& e) {
    throw FormatError(source + ": bad checkpoint header at offset " + std::to_string(header_at) +
                      ": " + e.what());
  }

  // Size the payload from the header before touching it.
  std::size_t floats = 0;
  auto add = [&](std::size_t rows, std::size_t cols) {
    constexpr std::size_t cap = std::numeric_limits<std::size_t>::max() / 8;
    if (cols != 0 && rows > cap / cols) r.fail("tensor shape overflows");
    floats += rows * cols;
    if (floats > cap) r.fail("tensor shapes overflow");
  };
  for (const auto& [_, s] : shapes) add(s.first, s.second);
  add(corr_shape.first, corr_shape.second);
  if (r.remaining() != floats * 4 + 8) {
    r.fail("payload holds " + std::to_string(r.remaining()) + " bytes, header describes " +
           std::to_string(floats * 4) + " plus checksum");
  }

  auto read = [&](std::size_t rows, std::size_t cols) {
    Matrix m(rows, cols);
    for (double& v : m.values()) v = static_cast<double>(r.f32());
    return m;
  };
  for (const auto& [name, s] : shapes) {
    if (!ckpt.tensors.emplace(name, read(s.first, s.second)).second)
      r.fail("duplicate tensor '" + name + "'");
  }
  ckpt.correlation = read(corr_shape.first, corr_shape.second);
  if (r.u64() != io::fnv1a64(bytes.substr(0, bytes.size() - 8))) r.fail("checksum mismatch");
  return ckpt;
}

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  io::write_file_bytes(path, serialize_checkpoint(ckpt));
}

Checkpoint load_checkpoint(const std::string& path) {
  return deserialize_checkpoint(io::read_file_bytes(path), path);
}

std::uint64_t checkpoint_fingerprint(const Checkpoint& ckpt) {
  return io::fnv1a64(serialize_checkpoint(ckpt));
}

EncoderModel model_from_checkpoint(const Checkpoint& ckpt) {
  ParamStore store;
  for (const auto& [name, m] : ckpt.tensors) store.add(name, m);
  return EncoderModel(ckpt.encoder, std::move(store));
}

}  // namespace bcl
