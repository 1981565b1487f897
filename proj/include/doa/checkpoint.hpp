#pragma once
#include <string>

#include <json.hpp>

#include "doa/io_util.hpp"
#include "doa/model.hpp"

namespace doa {

// DOAW checkpoint container: magic, version, JSON config blob, then the
// named tensors with explicit rank/dims and row-major f64 data. The blob is
// kept verbatim on load so a save round-trips bit-exactly.
struct Checkpoint {
  TransDoaParams params;
  std::string blob;

  nlohmann::json blob_json() const { return nlohmann::json::parse(blob); }
};

inline void save_checkpoint(const std::string& path,
                            const TransDoaParams& params,
                            const std::string& blob) {
  auto os = open_output(path);
  ByteWriter w(os);
  w.bytes("DOAW", 4);
  w.u32(1);
  w.u32(static_cast<std::uint32_t>(blob.size()));
  w.str(blob);
  w.u32(static_cast<std::uint32_t>(params.layout.entries.size()));
  for (const auto& e : params.layout.entries) {
    w.u16(static_cast<std::uint16_t>(e.name.size()));
    w.str(e.name);
    w.u8(e.rank);
    if (e.rank == 1) {
      w.u32(static_cast<std::uint32_t>(e.cols));
    } else {
      w.u32(static_cast<std::uint32_t>(e.rows));
      w.u32(static_cast<std::uint32_t>(e.cols));
    }
    const double* src = params.data.data() + e.offset;
    for (std::size_t i = 0; i < e.rows * e.cols; ++i) w.f64(src[i]);
  }
}

inline Checkpoint load_checkpoint(const std::string& path) {
  auto is = open_input(path);
  ByteReader r(is);
  if (r.str(4) != "DOAW") throw IoError("bad checkpoint magic");
  if (r.u32() != 1) throw IoError("unsupported checkpoint version");
  Checkpoint ck;
  ck.blob = r.str(r.u32());

  nlohmann::json blob;
  try {
    blob = nlohmann::json::parse(ck.blob);
  } catch (const nlohmann::json::exception&) {
    throw IoError("checkpoint config blob is not valid JSON");
  }
  const ModelConfig config = ModelConfig::from_json(blob.at("model"));
  ck.params.config = config;
  ck.params.layout = make_layout(config);
  ck.params.data.assign(ck.params.layout.total, 0.0);

  const std::uint32_t count = r.u32();
  if (count != ck.params.layout.entries.size())
    throw IoError("checkpoint tensor count does not match config");
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto& e = ck.params.layout.entries[i];
    const std::string name = r.str(r.u16());
    if (name != e.name) throw IoError("unexpected tensor: " + name);
    const std::uint8_t rank = r.u8();
    if (rank != e.rank) throw IoError("bad tensor rank: " + name);
    if (rank == 1) {
      if (r.u32() != e.cols) throw IoError("bad tensor dims: " + name);
    } else {
      if (r.u32() != e.rows || r.u32() != e.cols)
        throw IoError("bad tensor dims: " + name);
    }
    double* dst = ck.params.data.data() + e.offset;
    for (std::size_t j = 0; j < e.rows * e.cols; ++j) dst[j] = r.f64();
  }
  return ck;
}

}  // namespace doa
