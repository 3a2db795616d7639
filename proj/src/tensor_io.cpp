#include "frn/tensor_io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "frn/binary_io.hpp"

namespace frn {

std::string manifest_path(const std::string& tensor_path) { return tensor_path + ".csv"; }

void write_dataset(const std::string& path, const Dataset& ds, DType dtype) {
  ds.validate();
  const auto items = static_cast<std::uint32_t>(ds.num_items());
  ByteWriter w;
  w.put_bytes(std::string_view(kTensorMagic, 8));
  w.put<std::uint32_t>(kTensorVersion);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(dtype));
  w.put<std::uint32_t>(3);
  w.put<std::uint32_t>(items);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(ds.r));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(ds.d));
  std::ostringstream manifest;
  manifest << "item_index,class_id\n";
  std::size_t index = 0;
  for (const auto& cls : ds.classes) {
    for (const auto& item : cls.items) {
      for (Index i = 0; i < item.rows(); ++i)
        for (Index j = 0; j < item.cols(); ++j) {
          if (dtype == DType::f32) {
            w.put<float>(static_cast<float>(item(i, j)));
          } else {
            w.put<double>(item(i, j));
          }
        }
      manifest << index++ << ',' << cls.id << '\n';
    }
  }
  w.put_crc();
  w.write_file(path);
  std::ofstream out(manifest_path(path), std::ios::trunc);
  if (!out) throw IoError("cannot open '" + manifest_path(path) + "' for writing", 0);
  out << manifest.str();
  if (!out) throw IoError("write to '" + manifest_path(path) + "' failed", 0);
}

namespace {

/// class id per item index, in file order.
std::vector<int> read_manifest(const std::string& path, std::size_t items) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open label manifest '" + path + "'", 0);
  std::string line;
  std::size_t offset = 0;
  if (!std::getline(in, line) || (line != "item_index,class_id" && line != "item_index,class_id\r"))
    throw IoError("manifest '" + path + "': expected header item_index,class_id", 0);
  offset += line.size() + 1;
  std::vector<int> labels(items, 0);
  std::vector<char> seen(items, 0);
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) {
      offset += 1;
      continue;
    }
    const auto comma = line.find(',');
    std::size_t idx = 0;
    int cls = 0;
    const char* begin = line.data();
    const char* end = line.data() + line.size();
    bool ok = comma != std::string::npos;
    if (ok) ok = std::from_chars(begin, begin + comma, idx).ec == std::errc{};
    if (ok) {
      auto res = std::from_chars(begin + comma + 1, end, cls);
      ok = res.ec == std::errc{} && res.ptr == end;
    }
    if (!ok) throw IoError("manifest '" + path + "': malformed row '" + line + "'", offset);
    if (idx >= items || seen[idx])
      throw IoError("manifest '" + path + "': item index " + std::to_string(idx) +
                        (idx >= items ? " out of range" : " repeated"),
                    offset);
    seen[idx] = 1;
    labels[idx] = cls;
    offset += line.size() + 1;
  }
  for (std::size_t i = 0; i < items; ++i)
    if (!seen[i]) throw IoError("manifest '" + path + "': no label for item " + std::to_string(i), offset);
  return labels;
}

}  // namespace

Dataset ingest(const std::string& path) {
  auto in = ByteReader::from_file(path);
  if (in.get_bytes(8, "magic") != std::string_view(kTensorMagic, 8))
    throw IoError("'" + path + "' is not a feature tensor container (bad magic)", 0);
  const auto version = in.get<std::uint32_t>("version");
  if (version != kTensorVersion)
    throw IoError("unsupported container version " + std::to_string(version), 8);
  in.check_crc();
  const auto dtype_at = in.offset();
  const auto dtype = in.get<std::uint32_t>("dtype");
  if (dtype != static_cast<std::uint32_t>(DType::f32) && dtype != static_cast<std::uint32_t>(DType::f64))
    throw IoError("unknown dtype tag " + std::to_string(dtype), dtype_at);
  const auto rank_at = in.offset();
  const auto rank = in.get<std::uint32_t>("rank");
  if (rank != 3) throw IoError("expected rank 3 (items, r, d), got " + std::to_string(rank), rank_at);
  const auto dims_at = in.offset();
  const auto items = in.get<std::uint32_t>("dims");
  const auto r = in.get<std::uint32_t>("dims");
  const auto d = in.get<std::uint32_t>("dims");
  if (r == 0 || d == 0) throw IoError("zero-sized feature map dimension", dims_at);
  const std::size_t width = dtype == static_cast<std::uint32_t>(DType::f32) ? 4 : 8;
  const std::size_t expected = static_cast<std::size_t>(items) * r * d * width;
  if (in.remaining() != expected)
    throw IoError("payload holds " + std::to_string(in.remaining()) + " bytes, shape needs " +
                      std::to_string(expected),
                  in.offset());

  const auto labels = read_manifest(manifest_path(path), items);
  Dataset ds;
  ds.r = r;
  ds.d = d;
  std::map<int, std::size_t> slot;
  for (std::uint32_t n = 0; n < items; ++n) {
    Matrix<double> m(r, d);
    for (Index i = 0; i < m.rows(); ++i) {
      for (Index j = 0; j < m.cols(); ++j) {
        const auto at = in.offset();
        const double v = width == 4 ? static_cast<double>(in.get<float>("payload")) : in.get<double>("payload");
        if (!std::isfinite(v)) throw IoError("non-finite value in item " + std::to_string(n), at);
        m(i, j) = v;
      }
    }
    const int cls = labels[n];
    auto [it, inserted] = slot.try_emplace(cls, ds.classes.size());
    if (inserted) ds.classes.push_back({cls, {}});
    ds.classes[it->second].items.push_back(std::move(m));
  }
  return ds;
}

}  // namespace frn
