#include "svtr/checkpoint.hpp"

#include <zlib.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

#include "svtr/error.hpp"

namespace svtr {
namespace {

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

constexpr char kMagic[8] = {'S', 'V', 'T', 'R', 'C', 'K', 'P', 'T'};

std::uint32_t crc(const std::string& bytes, std::size_t begin, std::size_t end) {
  return static_cast<std::uint32_t>(
      crc32(0L, reinterpret_cast<const Bytef*>(bytes.data() + begin), static_cast<uInt>(end - begin)));
}

class Writer {
 public:
  template <typename U>
  void put(U value) {
    char raw[sizeof(U)];
    std::memcpy(raw, &value, sizeof(U));
    buf.append(raw, sizeof(U));
  }
  void put_bytes(const void* data, std::size_t n) { buf.append(static_cast<const char*>(data), n); }
  std::string buf;
};

class Reader {
 public:
  Reader(std::string bytes, std::string name) : buf(std::move(bytes)), name_(std::move(name)) {}

  template <typename U>
  U get() {
    need(sizeof(U));
    U value;
    std::memcpy(&value, buf.data() + pos, sizeof(U));
    pos += sizeof(U);
    return value;
  }
  std::string get_bytes(std::size_t n) {
    need(n);
    std::string out = buf.substr(pos, n);
    pos += n;
    return out;
  }
  void need(std::size_t n) const {
    SVTR_REQUIRE(n <= buf.size() - pos, ErrorKind::kParse, name_ + ": truncated checkpoint");
  }

  std::string buf;
  std::size_t pos = 0;

 private:
  std::string name_;
};

std::string header_text(const Checkpoint& ck) {
  std::ostringstream out;
  out.precision(17);
  out << format_config(ck.config);
  out << "step = " << ck.step << '\n';
  for (const auto& [k, v] : ck.metrics) out << "metric." << k << " = " << v << '\n';
  return out.str();
}

void parse_header(const std::string& text, Checkpoint& ck) {
  std::istringstream in(text);
  std::string line, config_text;
  while (std::getline(in, line)) {
    const auto eq = line.find(" = ");
    if (line.rfind("step = ", 0) == 0) {
      ck.step = std::stoull(line.substr(7));
    } else if (line.rfind("metric.", 0) == 0 && eq != std::string::npos) {
      ck.metrics[line.substr(7, eq - 7)] = std::stod(line.substr(eq + 3));
    } else {
      config_text += line + '\n';
    }
  }
  ck.config = parse_config(config_text);
}

}  // namespace

Checkpoint make_checkpoint(const SvtrModel& model, std::uint64_t step,
                           std::map<std::string, double> metrics) {
  Checkpoint ck;
  ck.config = model.config();
  ck.step = step;
  ck.metrics = std::move(metrics);
  auto add = [&ck](const NamedTensor<float>& t, RecordKind kind) {
    auto d = t.tensor.data();
    ck.records.push_back({t.name, kind, t.tensor.shape(), std::vector<float>(d.begin(), d.end())});
  };
  for (const auto& p : model.parameters()) add(p, RecordKind::kParameter);
  for (const auto& b : model.buffers()) add(b, RecordKind::kBuffer);
  return ck;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
  Writer w;
  w.put_bytes(kMagic, sizeof kMagic);
  w.put<std::uint32_t>(kCheckpointVersion);
  const std::string header = header_text(ck);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(header.size()));
  const std::size_t header_begin = w.buf.size();
  w.put_bytes(header.data(), header.size());
  w.put<std::uint32_t>(crc(w.buf, header_begin, w.buf.size()));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(ck.records.size()));
  for (const auto& r : ck.records) {
    SVTR_REQUIRE(r.values.size() == numel(r.shape), ErrorKind::kContract,
                 "record " + r.name + " has " + std::to_string(r.values.size()) +
                     " values for shape " + shape_str(r.shape));
    const std::size_t begin = w.buf.size();
    w.put<std::uint16_t>(static_cast<std::uint16_t>(r.name.size()));
    w.put_bytes(r.name.data(), r.name.size());
    w.put<std::uint8_t>(static_cast<std::uint8_t>(r.kind));
    w.put<std::uint8_t>(0);
    w.put<std::uint8_t>(static_cast<std::uint8_t>(r.shape.size()));
    for (auto d : r.shape) w.put<std::uint64_t>(d);
    w.put<std::uint64_t>(r.values.size() * sizeof(float));
    w.put_bytes(r.values.data(), r.values.size() * sizeof(float));
    w.put<std::uint32_t>(crc(w.buf, begin, w.buf.size()));
  }
  // Write to a sibling file first so a failed save never truncates a good checkpoint.
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    SVTR_REQUIRE(out.good(), ErrorKind::kIo, "cannot write checkpoint " + tmp.string());
    out.write(w.buf.data(), static_cast<std::streamsize>(w.buf.size()));
    SVTR_REQUIRE(out.good(), ErrorKind::kIo, "failed writing checkpoint " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  SVTR_REQUIRE(in.good(), ErrorKind::kIo, "cannot open checkpoint " + path.string());
  const std::string name = path.string();
  Reader r(std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>()), name);
  SVTR_REQUIRE(r.get_bytes(sizeof kMagic) == std::string(kMagic, sizeof kMagic), ErrorKind::kParse,
               name + ": not a checkpoint file");
  const auto version = r.get<std::uint32_t>();
  SVTR_REQUIRE(version == kCheckpointVersion, ErrorKind::kCompatibility,
               name + ": unsupported checkpoint version " + std::to_string(version));
  const auto header_len = r.get<std::uint32_t>();
  const std::size_t header_begin = r.pos;
  const std::string header = r.get_bytes(header_len);
  const std::uint32_t header_crc = crc(r.buf, header_begin, r.pos);
  SVTR_REQUIRE(r.get<std::uint32_t>() == header_crc, ErrorKind::kChecksum,
               name + ": header checksum mismatch");
  Checkpoint ck;
  parse_header(header, ck);
  const auto count = r.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::size_t begin = r.pos;
    TensorRecord rec;
    rec.name = r.get_bytes(r.get<std::uint16_t>());
    const auto kind = r.get<std::uint8_t>();
    const auto dtype = r.get<std::uint8_t>();
    const auto rank = r.get<std::uint8_t>();
    SVTR_REQUIRE(kind <= 1 && dtype == 0 && rank >= 1 && rank <= 4, ErrorKind::kParse,
                 name + ": malformed record " + rec.name);
    rec.kind = static_cast<RecordKind>(kind);
    for (std::uint8_t k = 0; k < rank; ++k) rec.shape.push_back(r.get<std::uint64_t>());
    const auto bytes = r.get<std::uint64_t>();
    SVTR_REQUIRE(bytes == numel(rec.shape) * sizeof(float), ErrorKind::kParse,
                 name + ": payload size of " + rec.name + " does not match its shape");
    r.need(bytes);
    rec.values.resize(bytes / sizeof(float));
    std::memcpy(rec.values.data(), r.buf.data() + r.pos, bytes);
    r.pos += bytes;
    const std::uint32_t expected = crc(r.buf, begin, r.pos);
    SVTR_REQUIRE(r.get<std::uint32_t>() == expected, ErrorKind::kChecksum,
                 name + ": checksum mismatch in record " + rec.name);
    ck.records.push_back(std::move(rec));
  }
  SVTR_REQUIRE(r.pos == r.buf.size(), ErrorKind::kParse, name + ": trailing bytes after last record");
  return ck;
}

void restore_checkpoint(SvtrModel& model, const Checkpoint& ck) {
  const auto diff = config_differences(model.config(), ck.config);
  if (!diff.empty()) {
    std::string list;
    for (const auto& d : diff) list += (list.empty() ? "" : ", ") + d;
    fail(ErrorKind::kCompatibility, "checkpoint config differs in: " + list);
  }
  std::map<std::string, const TensorRecord*> by_name;
  for (const auto& r : ck.records) by_name[r.name] = &r;
  auto fill = [&by_name](NamedTensor<float>& t, RecordKind kind) {
    auto it = by_name.find(t.name);
    SVTR_REQUIRE(it != by_name.end() && it->second->kind == kind, ErrorKind::kCompatibility,
                 "checkpoint has no " + std::string(kind == RecordKind::kParameter ? "parameter " : "buffer ") +
                     t.name);
    SVTR_REQUIRE(it->second->shape == t.tensor.shape(), ErrorKind::kCompatibility,
                 "checkpoint shape " + shape_str(it->second->shape) + " for " + t.name +
                     ", model expects " + shape_str(t.tensor.shape()));
    std::copy(it->second->values.begin(), it->second->values.end(), t.tensor.mutable_data().begin());
  };
  for (auto& p : model.parameters()) fill(p, RecordKind::kParameter);
  for (auto& b : model.buffers()) fill(b, RecordKind::kBuffer);
  SVTR_REQUIRE(ck.records.size() == model.parameters().size() + model.buffers().size(),
               ErrorKind::kCompatibility, "checkpoint holds tensors the model does not have");
}

SvtrModel load_model(const std::filesystem::path& path, std::uint64_t seed) {
  const Checkpoint ck = read_checkpoint(path);
  SvtrModel model(ck.config, seed);
  restore_checkpoint(model, ck);
  return model;
}

std::size_t serialized_parameter_floats(const Checkpoint& ck) {
  std::size_t n = 0;
  for (const auto& r : ck.records)
    if (r.kind == RecordKind::kParameter) n += r.values.size();
  return n;
}

}  // namespace svtr
