#pragma once
#include <cstdint>
#include <string>
#include <vector>

#include "doa/io_util.hpp"
#include "doa/parallel.hpp"
#include "doa/simulate.hpp"

namespace doa {

// Shared header of the DOA1 (labeled SCM) and DOAP (paired SCM) containers.
struct DatasetMeta {
  std::uint32_t m = 0;
  std::uint32_t k = 0;
  ArrayKind kind = ArrayKind::ula;
  std::uint8_t label_dims = 1;
  double rho = 0.0;

  std::size_t label_count() const { return std::size_t(k) * label_dims; }

  static DatasetMeta from_scenario(const SignalScenario& sc, double rho) {
    DatasetMeta meta;
    meta.m = static_cast<std::uint32_t>(sc.geometry.elements);
    meta.k = static_cast<std::uint32_t>(sc.sources);
    meta.kind = sc.geometry.kind;
    meta.label_dims = sc.two_d() ? 2 : 1;
    meta.rho = rho;
    return meta;
  }
};

struct Dataset {
  DatasetMeta meta;
  std::vector<DatasetRecord> records;
};

struct PairedRecord {
  DoaLabel label;
  CMat target_scm;  // measured, imperfect domain
  CMat ideal_scm;   // generated counterpart
  std::uint64_t gen_seed = 0;
};

struct PairedDataset {
  DatasetMeta meta;
  std::vector<PairedRecord> records;
};

namespace detail {

inline void write_header(ByteWriter& w, const char magic[4],
                         const DatasetMeta& meta, std::uint64_t count) {
  w.bytes(magic, 4);
  w.u32(1);  // version
  w.u32(meta.m);
  w.u32(meta.k);
  w.u8(static_cast<std::uint8_t>(meta.kind));
  w.u8(meta.label_dims);
  w.u16(0);  // reserved
  w.f64(meta.rho);
  w.u64(count);
}

inline DatasetMeta read_header(ByteReader& r, const char magic[4],
                               std::uint64_t& count) {
  const std::string got = r.str(4);
  if (got != std::string(magic, 4))
    throw IoError("bad magic, expected " + std::string(magic, 4));
  const std::uint32_t version = r.u32();
  if (version != 1) throw IoError("unsupported dataset version");
  DatasetMeta meta;
  meta.m = r.u32();
  meta.k = r.u32();
  const std::uint8_t kind = r.u8();
  if (kind > 1) throw IoError("bad array kind");
  meta.kind = static_cast<ArrayKind>(kind);
  meta.label_dims = r.u8();
  if (meta.label_dims != 1 && meta.label_dims != 2)
    throw IoError("bad label dimensionality");
  r.u16();  // reserved
  meta.rho = r.f64();
  count = r.u64();
  if (meta.m < 2 || meta.k < 1) throw IoError("bad dataset header");
  return meta;
}

inline void write_label(ByteWriter& w, const DatasetMeta& meta,
                        const DoaLabel& label) {
  for (double t : label.thetas) w.f64(t);
  if (meta.label_dims == 2)
    for (double p : label.phis) w.f64(p);
}

inline DoaLabel read_label(ByteReader& r, const DatasetMeta& meta) {
  DoaLabel label;
  label.thetas.resize(meta.k);
  for (double& t : label.thetas) t = r.f64();
  if (meta.label_dims == 2) {
    label.phis.resize(meta.k);
    for (double& p : label.phis) p = r.f64();
  }
  return label;
}

inline void write_cmat(ByteWriter& w, const CMat& mat) {
  for (const cplx& v : mat.a) {
    w.f64(v.real());
    w.f64(v.imag());
  }
}

inline CMat read_cmat(ByteReader& r, std::size_t m) {
  CMat mat(m, m);
  for (cplx& v : mat.a) {
    const double re = r.f64();
    const double im = r.f64();
    v = {re, im};
  }
  return mat;
}

}  // namespace detail

inline void save_dataset(const std::string& path, const Dataset& ds) {
  auto os = open_output(path);
  ByteWriter w(os);
  detail::write_header(w, "DOA1", ds.meta, ds.records.size());
  for (const DatasetRecord& rec : ds.records) {
    detail::write_label(w, ds.meta, rec.label);
    detail::write_cmat(w, rec.scm);
  }
}

inline Dataset load_dataset(const std::string& path) {
  auto is = open_input(path);
  ByteReader r(is);
  Dataset ds;
  std::uint64_t count = 0;
  ds.meta = detail::read_header(r, "DOA1", count);
  ds.records.reserve(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    DatasetRecord rec;
    rec.label = detail::read_label(r, ds.meta);
    rec.scm = detail::read_cmat(r, ds.meta.m);
    ds.records.push_back(std::move(rec));
  }
  return ds;
}

inline void save_paired(const std::string& path, const PairedDataset& ds) {
  auto os = open_output(path);
  ByteWriter w(os);
  detail::write_header(w, "DOAP", ds.meta, ds.records.size());
  for (const PairedRecord& rec : ds.records) {
    detail::write_label(w, ds.meta, rec.label);
    detail::write_cmat(w, rec.target_scm);
    detail::write_cmat(w, rec.ideal_scm);
    w.u64(rec.gen_seed);
  }
}

inline PairedDataset load_paired(const std::string& path) {
  auto is = open_input(path);
  ByteReader r(is);
  PairedDataset ds;
  std::uint64_t count = 0;
  ds.meta = detail::read_header(r, "DOAP", count);
  ds.records.reserve(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    PairedRecord rec;
    rec.label = detail::read_label(r, ds.meta);
    rec.target_scm = detail::read_cmat(r, ds.meta.m);
    rec.ideal_scm = detail::read_cmat(r, ds.meta.m);
    rec.gen_seed = r.u64();
    ds.records.push_back(std::move(rec));
  }
  return ds;
}

// Record i is generated from mix_seed(seed, i), so content depends only on
// (scenario, imperfections, seed, count). Records are simulated in parallel
// chunks and written in index order.
inline Dataset generate_records(const SignalScenario& sc,
                                const ImperfectionSpec& imp, std::size_t count,
                                std::uint64_t seed) {
  sc.validate();
  Dataset ds;
  ds.meta = DatasetMeta::from_scenario(sc, imp.rho);
  ds.records.resize(count);
  constexpr std::size_t kChunk = 2048;
  for (std::size_t base = 0; base < count; base += kChunk) {
    const std::size_t n = std::min(kChunk, count - base);
    parallel_for(n, [&](std::size_t i) {
      ds.records[base + i] = generate_record(sc, imp, mix_seed(seed, base + i));
    });
  }
  return ds;
}

inline void generate_dataset(const SignalScenario& sc,
                             const ImperfectionSpec& imp, std::size_t count,
                             std::uint64_t seed, const std::string& path) {
  save_dataset(path, generate_records(sc, imp, count, seed));
}

}  // namespace doa
