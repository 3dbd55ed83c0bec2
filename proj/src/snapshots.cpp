#include "ibsplit/snapshots.hpp"

#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iterator>
#include <optional>
#include <json.hpp>
#include <sstream>

namespace ibsplit {

using nlohmann::json;

std::uint64_t fnv1a64(std::span<const unsigned char> bytes, std::uint64_t seed) noexcept {
  std::uint64_t h = seed;
  for (unsigned char b : bytes) {
    h ^= b;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t fnv1a64(std::string_view text) noexcept {
  return fnv1a64({reinterpret_cast<const unsigned char*>(text.data()), text.size()});
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

namespace {

constexpr char magic[4] = {'I', 'B', 'S', 'N'};
constexpr std::size_t header_bytes = 4 + 4 + 4 + 8 + 8 + 8;

void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>(v >> (8 * i)));
}
void put_u64(std::vector<unsigned char>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<unsigned char>(v >> (8 * i)));
}
void put_f64(std::vector<unsigned char>& out, double v) { put_u64(out, std::bit_cast<std::uint64_t>(v)); }

std::uint32_t get_u32(const unsigned char* p) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(p[i]) << (8 * i);
  return v;
}
std::uint64_t get_u64(const unsigned char* p) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return v;
}
double get_f64(const unsigned char* p) { return std::bit_cast<double>(get_u64(p)); }

std::filesystem::path sidecar_path(const std::filesystem::path& p) { return p.string() + ".json"; }

}  // namespace

SnapshotFile snapshots_from(const std::vector<IBState>& traj, const StepControl& ctrl) {
  SnapshotFile f;
  f.meta.kind = "IB";
  if (!traj.empty()) f.meta.params = traj.front().params;
  f.meta.scheme = scheme_name(ctrl.scheme());
  f.meta.dt = ctrl.step();
  f.meta.t_end = ctrl.t_end();
  f.meta.stride = ctrl.snapshot_stride();
  f.meta.field_names = {"u", "u_t"};
  for (const auto& s : traj) {
    f.times.push_back(s.time);
    f.records.push_back({s.u, s.p});
  }
  return f;
}

SnapshotFile snapshots_from(const std::vector<WaveState>& traj, const StepControl& ctrl) {
  SnapshotFile f;
  if (!traj.empty()) {
    f.meta.kind = traj.front().family.name();
    f.meta.params = traj.front().params;
  }
  f.meta.scheme = scheme_name(ctrl.scheme());
  f.meta.dt = ctrl.step();
  f.meta.t_end = ctrl.t_end();
  f.meta.stride = ctrl.snapshot_stride();
  f.meta.field_names = {"w"};
  for (const auto& s : traj) {
    f.times.push_back(s.time);
    f.records.push_back({s.w});
  }
  return f;
}

std::vector<IBState> ib_states_from(const SnapshotFile& file) {
  if (file.meta.kind != "IB" || file.meta.field_names.size() != 2)
    throw SnapshotFormatError("snapshot file does not hold an IB trajectory (kind '" + file.meta.kind + "')");
  std::vector<IBState> out;
  for (std::size_t i = 0; i < file.records.size(); ++i)
    out.push_back({file.records[i][0], file.records[i][1], file.times[i], file.meta.params});
  return out;
}

std::vector<WaveState> wave_states_from(const SnapshotFile& file) {
  const ModelFamily fam = parse_family(file.meta.kind);
  if (file.meta.field_names.size() != 1) throw SnapshotFormatError("model snapshot file must hold one field");
  std::vector<WaveState> out;
  for (std::size_t i = 0; i < file.records.size(); ++i)
    out.push_back({file.records[i][0], file.times[i], file.meta.params, fam});
  return out;
}

void write_snapshot_file(const std::filesystem::path& path, const SnapshotFile& file) {
  if (file.times.size() != file.records.size())
    throw std::invalid_argument("write_snapshot_file: times and records differ in length");
  std::vector<unsigned char> bytes;
  json checks = json::array();
  std::size_t n = 0;
  double L = 0.0;
  for (std::size_t i = 0; i < file.records.size(); ++i) {
    const auto& rec = file.records[i];
    if (rec.size() != file.meta.field_names.size())
      throw std::invalid_argument("write_snapshot_file: record field count does not match field_names");
    if (rec.empty()) continue;
    n = rec.front().size();
    L = rec.front().grid().half_length();
    const std::size_t start = bytes.size();
    bytes.insert(bytes.end(), std::begin(magic), std::end(magic));
    put_u32(bytes, snapshot_version);
    put_u32(bytes, static_cast<std::uint32_t>(rec.size()));
    put_u64(bytes, n);
    put_f64(bytes, L);
    put_f64(bytes, file.times[i]);
    for (const auto& f : rec) {
      if (f.size() != n) throw std::invalid_argument("write_snapshot_file: fields of one record differ in size");
      for (double v : f.values()) put_f64(bytes, v);
    }
    checks.push_back({{"time", file.times[i]},
                      {"offset", start},
                      {"bytes", bytes.size() - start},
                      {"fnv1a64", hex64(fnv1a64({bytes.data() + start, bytes.size() - start}))}});
  }

  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("write failed for '" + path.string() + "'");

  const auto& m = file.meta;
  json side = {{"format", "ibsplit-snapshots"},
               {"version", snapshot_version},
               {"byte_order", "little"},
               {"kind", m.kind},
               {"params", {{"epsilon", m.params.epsilon}, {"delta", m.params.delta}, {"s", m.params.sobolev_index}}},
               {"control", {{"scheme", m.scheme}, {"dt", m.dt}, {"t_end", m.t_end}, {"stride", m.stride}}},
               {"grid", {{"L", L}, {"N", n}}},
               {"fields", m.field_names},
               {"records", checks},
               {"file_fnv1a64", hex64(fnv1a64(bytes))}};
  std::ofstream js(sidecar_path(path));
  if (!js) throw std::runtime_error("cannot open '" + sidecar_path(path).string() + "' for writing");
  js << side.dump(2) << '\n';
  if (!js) throw std::runtime_error("write failed for '" + sidecar_path(path).string() + "'");
}

SnapshotFile read_snapshot_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path.string() + "'");
  const std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  std::ifstream js(sidecar_path(path));
  if (!js) throw std::runtime_error("cannot open '" + sidecar_path(path).string() + "'");
  json side;
  try {
    side = json::parse(js);
  } catch (const json::exception& e) {
    throw SnapshotFormatError("bad sidecar '" + sidecar_path(path).string() + "': " + e.what());
  }

  auto fail = [&](const std::string& why) { throw SnapshotFormatError("'" + path.string() + "': " + why); };
  try {
    if (side.at("file_fnv1a64").get<std::string>() != hex64(fnv1a64(bytes))) fail("file checksum mismatch");

    SnapshotFile f;
    f.meta.kind = side.at("kind").get<std::string>();
    const auto& p = side.at("params");
    f.meta.params = {p.at("epsilon").get<double>(), p.at("delta").get<double>(), p.at("s").get<double>()};
    const auto& c = side.at("control");
    f.meta.scheme = c.at("scheme").get<std::string>();
    f.meta.dt = c.at("dt").get<double>();
    f.meta.t_end = c.at("t_end").get<double>();
    f.meta.stride = c.at("stride").get<std::size_t>();
    f.meta.field_names = side.at("fields").get<std::vector<std::string>>();

    const auto& recs = side.at("records");
    std::size_t pos = 0;
    std::optional<PeriodicGrid> grid;
    for (const auto& r : recs) {
      if (pos + header_bytes > bytes.size()) fail("truncated record header");
      const unsigned char* h = bytes.data() + pos;
      if (std::memcmp(h, magic, 4) != 0) fail("bad magic");
      if (get_u32(h + 4) != snapshot_version) fail("unsupported version");
      const std::uint32_t nf = get_u32(h + 8);
      const std::uint64_t n = get_u64(h + 12);
      const double L = get_f64(h + 20);
      const double t = get_f64(h + 28);
      const std::size_t len = header_bytes + 8 * nf * n;
      if (nf != f.meta.field_names.size()) fail("field count disagrees with sidecar");
      if (pos + len > bytes.size()) fail("truncated record samples");
      if (r.at("offset").get<std::size_t>() != pos || r.at("bytes").get<std::size_t>() != len)
        fail("record layout disagrees with sidecar");
      if (r.at("fnv1a64").get<std::string>() != hex64(fnv1a64({bytes.data() + pos, len})))
        fail("record checksum mismatch");
      if (!grid) grid.emplace(L, n);
      if (grid->size() != n || grid->half_length() != L) fail("grid changes between records");
      std::vector<Field> fields;
      const unsigned char* s = h + header_bytes;
      for (std::uint32_t k = 0; k < nf; ++k) {
        std::vector<double> v(n);
        for (std::size_t j = 0; j < n; ++j) v[j] = get_f64(s + 8 * (k * n + j));
        fields.emplace_back(*grid, std::move(v));
      }
      f.times.push_back(t);
      f.records.push_back(std::move(fields));
      pos += len;
    }
    if (pos != bytes.size()) fail("trailing bytes after the last record");
    return f;
  } catch (const json::exception& e) {
    throw SnapshotFormatError("bad sidecar '" + sidecar_path(path).string() + "': " + e.what());
  }
}

}  // namespace ibsplit
