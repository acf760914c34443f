#include "tokidx/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

namespace tokidx::ckpt {

namespace {

constexpr char kMagic[8] = {'T', 'I', 'D', 'X', 'C', 'K', 'P', 'T'};

template <typename T>
void write_pod(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw std::runtime_error("checkpoint: truncated file");
  return v;
}

// Derives table metadata from the canonical parameter names
// "L<layer>.jtok.table" and "L<layer>.jtokm.e<expert>.table".
std::optional<TableMeta> table_meta(const std::string& name, const Tensor& value) {
  if (name.size() < 2 || name[0] != 'L') return std::nullopt;
  std::size_t pos = 1;
  std::uint32_t layer = 0;
  bool has_digit = false;
  while (pos < name.size() && name[pos] >= '0' && name[pos] <= '9') {
    layer = layer * 10 + static_cast<std::uint32_t>(name[pos] - '0');
    ++pos;
    has_digit = true;
  }
  if (!has_digit) return std::nullopt;
  const std::string rest = name.substr(pos);
  TableMeta meta;
  meta.layer = layer;
  meta.vocab = value.rank() == 2 ? value.rows() : 0;
  meta.dim = value.rank() == 2 ? value.cols() : 0;
  if (rest == ".jtok.table") return meta;
  if (rest.rfind(".jtokm.e", 0) == 0 && rest.size() > 8) {
    std::size_t epos = 8;
    std::uint32_t expert = 0;
    bool edigit = false;
    while (epos < rest.size() && rest[epos] >= '0' && rest[epos] <= '9') {
      expert = expert * 10 + static_cast<std::uint32_t>(rest[epos] - '0');
      ++epos;
      edigit = true;
    }
    if (edigit && rest.substr(epos) == ".table") {
      meta.expert = expert;
      return meta;
    }
  }
  return std::nullopt;
}

}  // namespace

void save_checkpoint(const Model& model, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("checkpoint: cannot open " + path + " for writing");
  out.write(kMagic, sizeof(kMagic));
  write_pod<std::uint32_t>(out, kFormatVersion);
  write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(model.params().size()));
  for (const Param& p : model.params()) {
    const auto meta = table_meta(p.name, p.value);
    write_pod<std::uint8_t>(out, meta ? 1 : 0);
    if (meta) {
      write_pod<std::uint32_t>(out, meta->layer);
      write_pod<std::uint32_t>(out, meta->expert);
      write_pod<std::uint64_t>(out, meta->vocab);
      write_pod<std::uint64_t>(out, meta->dim);
    }
    write_pod<std::uint16_t>(out, static_cast<std::uint16_t>(p.name.size()));
    out.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
    write_pod<std::uint8_t>(out, static_cast<std::uint8_t>(p.value.rank()));
    for (std::size_t dim : p.value.shape()) write_pod<std::uint64_t>(out, dim);
    out.write(reinterpret_cast<const char*>(p.value.data()),
              static_cast<std::streamsize>(p.value.size() * sizeof(double)));
  }
  if (!out) throw std::runtime_error("checkpoint: write failed for " + path);
}

std::vector<Record> read_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("checkpoint: cannot open " + path);
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw std::runtime_error("checkpoint: bad magic in " + path);
  const auto version = read_pod<std::uint32_t>(in);
  if (version != kFormatVersion)
    throw std::runtime_error("checkpoint: unsupported format version " +
                             std::to_string(version));
  const auto count = read_pod<std::uint32_t>(in);
  std::vector<Record> records;
  records.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    Record rec;
    const auto kind = read_pod<std::uint8_t>(in);
    if (kind == 1) {
      TableMeta meta;
      meta.layer = read_pod<std::uint32_t>(in);
      meta.expert = read_pod<std::uint32_t>(in);
      meta.vocab = read_pod<std::uint64_t>(in);
      meta.dim = read_pod<std::uint64_t>(in);
      rec.table = meta;
    } else if (kind != 0) {
      throw std::runtime_error("checkpoint: unknown record kind");
    }
    const auto name_len = read_pod<std::uint16_t>(in);
    rec.name.resize(name_len);
    in.read(rec.name.data(), name_len);
    const auto rank = read_pod<std::uint8_t>(in);
    std::vector<std::size_t> shape(rank);
    for (auto& dim : shape) dim = static_cast<std::size_t>(read_pod<std::uint64_t>(in));
    Tensor value(shape);
    in.read(reinterpret_cast<char*>(value.data()),
            static_cast<std::streamsize>(value.size() * sizeof(double)));
    if (!in) throw std::runtime_error("checkpoint: truncated record in " + path);
    rec.value = std::move(value);
    records.push_back(std::move(rec));
  }
  return records;
}

void load_checkpoint(Model& model, const std::string& path) {
  const auto records = read_checkpoint(path);
  for (const Record& rec : records) {
    Param& p = model.param(rec.name);
    if (!p.value.same_shape(rec.value))
      throw std::runtime_error("checkpoint: shape mismatch for " + rec.name);
    p.value = rec.value;
  }
}

}  // namespace tokidx::ckpt
