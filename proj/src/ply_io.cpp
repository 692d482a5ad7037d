#include "gsfuse/ply_io.hpp"

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "gsfuse/error.hpp"

namespace gsfuse {
namespace {

static_assert(std::endian::native == std::endian::little, "PLY I/O assumes a little-endian host");

struct Property {
  std::string name;
  std::size_t size = 0;  // bytes
  bool is_double = false;
  bool is_float = false;
  bool is_signed = false;
  std::size_t offset = 0;
};

std::optional<std::pair<std::size_t, int>> scalar_type(const std::string& t) {
  // returns (size, kind) with kind 0 = float, 1 = double, 2 = signed int, 3 = unsigned int
  if (t == "float" || t == "float32") return std::pair{std::size_t{4}, 0};
  if (t == "double" || t == "float64") return std::pair{std::size_t{8}, 1};
  if (t == "char" || t == "int8") return std::pair{std::size_t{1}, 2};
  if (t == "uchar" || t == "uint8") return std::pair{std::size_t{1}, 3};
  if (t == "short" || t == "int16") return std::pair{std::size_t{2}, 2};
  if (t == "ushort" || t == "uint16") return std::pair{std::size_t{2}, 3};
  if (t == "int" || t == "int32") return std::pair{std::size_t{4}, 2};
  if (t == "uint" || t == "uint32") return std::pair{std::size_t{4}, 3};
  return std::nullopt;
}

double read_scalar(const char* p, const Property& prop) {
  if (prop.is_float) {
    float v;
    std::memcpy(&v, p, 4);
    return static_cast<double>(v);
  }
  if (prop.is_double) {
    double v;
    std::memcpy(&v, p, 8);
    return v;
  }
  std::int64_t v = 0;
  switch (prop.size) {
    case 1: v = prop.is_signed ? static_cast<std::int8_t>(*p) : static_cast<std::uint8_t>(*p); break;
    case 2: {
      std::int16_t s;
      std::memcpy(&s, p, 2);
      v = prop.is_signed ? s : static_cast<std::uint16_t>(s);
      break;
    }
    default: {
      std::int32_t s;
      std::memcpy(&s, p, 4);
      v = prop.is_signed ? s : static_cast<std::uint32_t>(s);
      break;
    }
  }
  return static_cast<double>(v);
}

double to_float(double v) { return static_cast<double>(static_cast<float>(v)); }

void put_float(std::string& buf, double v) {
  const float f = static_cast<float>(v);
  char bytes[4];
  std::memcpy(bytes, &f, 4);
  buf.append(bytes, 4);
}

}  // namespace

GaussianModel read_ply(std::istream& in, const std::string& source_name) {
  const auto format_error = [&](const std::string& what) { throw FormatError(source_name + ": " + what); };

  std::string line;
  if (!std::getline(in, line) || line != "ply") format_error("missing 'ply' magic");

  std::size_t vertex_count = 0;
  bool have_vertex = false;
  bool in_vertex = false;
  std::size_t stride = 0;
  std::vector<Property> props;
  std::size_t pre_vertex_bytes = 0;  // elements preceding "vertex" are not supported
  bool format_ok = false;

  while (true) {
    if (!std::getline(in, line)) format_error("unterminated header");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::istringstream ls(line);
    std::string kw;
    ls >> kw;
    if (kw == "end_header") break;
    if (kw == "comment" || kw == "obj_info" || kw.empty()) continue;
    if (kw == "format") {
      std::string fmt, ver;
      ls >> fmt >> ver;
      if (fmt != "binary_little_endian") format_error("unsupported PLY format '" + fmt + "'");
      format_ok = true;
    } else if (kw == "element") {
      std::string name;
      std::size_t count = 0;
      ls >> name >> count;
      if (name == "vertex") {
        if (have_vertex) format_error("duplicate vertex element");
        have_vertex = true;
        in_vertex = true;
        vertex_count = count;
      } else {
        if (!have_vertex && count > 0) pre_vertex_bytes = 1;
        in_vertex = false;
      }
    } else if (kw == "property") {
      std::string type;
      ls >> type;
      if (type == "list") {
        if (in_vertex) format_error("list properties on vertex element are not supported");
        continue;
      }
      std::string name;
      ls >> name;
      if (!in_vertex) continue;
      const auto st = scalar_type(type);
      if (!st) format_error("unknown property type '" + type + "'");
      Property p;
      p.name = name;
      p.size = st->first;
      p.is_float = st->second == 0;
      p.is_double = st->second == 1;
      p.is_signed = st->second == 2;
      p.offset = stride;
      stride += p.size;
      props.push_back(p);
    } else {
      format_error("unexpected header line '" + line + "'");
    }
  }
  if (!format_ok) format_error("missing format line");
  if (!have_vertex) format_error("missing vertex element");
  if (pre_vertex_bytes) format_error("elements before 'vertex' are not supported");

  std::unordered_map<std::string, const Property*> by_name;
  for (const auto& p : props) by_name[p.name] = &p;
  const auto require = [&](const std::string& name) -> const Property& {
    auto it = by_name.find(name);
    if (it == by_name.end()) format_error("missing required property '" + name + "'");
    return *it->second;
  };

  const Property* px = &require("x");
  const Property* py = &require("y");
  const Property* pz = &require("z");
  const Property* pdc[3] = {&require("f_dc_0"), &require("f_dc_1"), &require("f_dc_2")};
  const Property* pop = &require("opacity");
  const Property* psc[3] = {&require("scale_0"), &require("scale_1"), &require("scale_2")};
  const Property* prot[4] = {&require("rot_0"), &require("rot_1"), &require("rot_2"), &require("rot_3")};

  std::vector<const Property*> rest;
  for (std::size_t k = 0;; ++k) {
    auto it = by_name.find("f_rest_" + std::to_string(k));
    if (it == by_name.end()) break;
    rest.push_back(it->second);
  }
  if (rest.size() % 3 != 0) format_error("f_rest_* count " + std::to_string(rest.size()) + " is not a multiple of 3");
  const std::size_t triples = rest.size() / 3;
  bool supported = false;
  for (int d = 0; d <= 4; ++d) supported = supported || sh_rest_count(d) == triples;
  if (!supported) format_error("f_rest_* count " + std::to_string(rest.size()) + " does not match an SH degree");

  std::vector<char> data(stride * vertex_count);
  if (!data.empty()) {
    in.read(data.data(), static_cast<std::streamsize>(data.size()));
    if (in.gcount() != static_cast<std::streamsize>(data.size())) format_error("truncated vertex data");
  }

  std::vector<GaussianPrimitive> prims(vertex_count);
  for (std::size_t i = 0; i < vertex_count; ++i) {
    const char* row = data.data() + i * stride;
    const auto get = [&](const Property* p) { return to_float(read_scalar(row + p->offset, *p)); };
    GaussianPrimitive& g = prims[i];
    g.mean = {get(px), get(py), get(pz)};
    g.sh_dc = {get(pdc[0]), get(pdc[1]), get(pdc[2])};
    g.opacity_logit = get(pop);
    g.log_scale = {get(psc[0]), get(psc[1]), get(psc[2])};
    // rot_0 is w
    Eigen::Quaterniond q(get(prot[0]), get(prot[1]), get(prot[2]), get(prot[3]));
    if (!q.coeffs().allFinite()) throw ValidationError("primitive " + std::to_string(i) + ": non-finite rotation");
    const double n = q.norm();
    if (!(n > 0.0)) throw ValidationError("primitive " + std::to_string(i) + ": zero-norm rotation quaternion");
    if (std::abs(n - 1.0) > 1e-6) {
      q.coeffs() /= n;
      for (int c = 0; c < 4; ++c) q.coeffs()[c] = to_float(q.coeffs()[c]);
    }
    g.rotation = q;
    // f_rest is channel-major: all R coefficients, then G, then B.
    g.sh_rest.resize(triples);
    for (std::size_t k = 0; k < triples; ++k) {
      g.sh_rest[k] = {get(rest[k]), get(rest[triples + k]), get(rest[2 * triples + k])};
    }
    validate_primitive(g, i);
  }
  return GaussianModel(std::move(prims));
}

GaussianModel load_ply(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  return read_ply(in, path.string());
}

void write_ply(const GaussianModel& model, std::ostream& out) {
  if (model.empty()) throw ValidationError("refusing to write an empty model");
  const std::size_t triples = model[0].sh_rest.size();

  std::ostringstream hdr;
  hdr << "ply\nformat binary_little_endian 1.0\nelement vertex " << model.size() << "\n";
  for (const char* n : {"x", "y", "z", "nx", "ny", "nz", "f_dc_0", "f_dc_1", "f_dc_2"}) {
    hdr << "property float " << n << "\n";
  }
  for (std::size_t k = 0; k < 3 * triples; ++k) hdr << "property float f_rest_" << k << "\n";
  for (const char* n : {"opacity", "scale_0", "scale_1", "scale_2", "rot_0", "rot_1", "rot_2", "rot_3"}) {
    hdr << "property float " << n << "\n";
  }
  hdr << "end_header\n";
  out << hdr.str();

  std::string buf;
  buf.reserve(model.size() * 4 * (17 + 3 * triples));
  for (const auto& g : model.primitives()) {
    for (int k = 0; k < 3; ++k) put_float(buf, g.mean[k]);
    for (int k = 0; k < 3; ++k) put_float(buf, 0.0);
    for (int k = 0; k < 3; ++k) put_float(buf, g.sh_dc[k]);
    for (int c = 0; c < 3; ++c) {
      for (std::size_t k = 0; k < triples; ++k) put_float(buf, g.sh_rest[k][c]);
    }
    put_float(buf, g.opacity_logit);
    for (int k = 0; k < 3; ++k) put_float(buf, g.log_scale[k]);
    put_float(buf, g.rotation.w());
    put_float(buf, g.rotation.x());
    put_float(buf, g.rotation.y());
    put_float(buf, g.rotation.z());
  }
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
}

void save_ply(const GaussianModel& model, const std::filesystem::path& path) {
  if (model.empty()) throw ValidationError("refusing to write an empty model");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  write_ply(model, out);
  out.flush();
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

}  // namespace gsfuse
