#include "gfn/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

namespace gfn {

namespace {

constexpr char kMagic[8] = {'G', 'F', 'N', 'C', 'K', 'P', 'T', '1'};

void write_i64(std::ostream& os, int64_t v) { os.write(reinterpret_cast<const char*>(&v), 8); }
int64_t read_i64(std::istream& is) {
  int64_t v = 0;
  is.read(reinterpret_cast<char*>(&v), 8);
  if (!is) throw std::runtime_error("checkpoint: truncated file");
  return v;
}

void write_tensor(std::ostream& os, const Tensor& t) {
  write_i64(os, static_cast<int64_t>(t.shape.size()));
  for (int d : t.shape) write_i64(os, d);
  os.write(reinterpret_cast<const char*>(t.data.data()),
           static_cast<std::streamsize>(t.data.size() * sizeof(double)));
}

Tensor read_tensor(std::istream& is) {
  const int64_t rank = read_i64(is);
  if (rank < 0 || rank > 8) throw std::runtime_error("checkpoint: bad tensor rank");
  std::vector<int> shape(rank);
  for (int64_t i = 0; i < rank; ++i) shape[i] = static_cast<int>(read_i64(is));
  Tensor t(shape);
  is.read(reinterpret_cast<char*>(t.data.data()),
          static_cast<std::streamsize>(t.data.size() * sizeof(double)));
  if (!is) throw std::runtime_error("checkpoint: truncated tensor data");
  return t;
}

void write_dense(std::ostream& os, const Dense& d) {
  write_tensor(os, d.weight);
  write_tensor(os, d.bias);
}

Dense read_dense(std::istream& is) {
  Dense d;
  d.weight = read_tensor(is);
  d.bias = read_tensor(is);
  return d;
}

void write_adam(std::ostream& os, const AdamState& st) {
  write_i64(os, st.t);
  write_i64(os, static_cast<int64_t>(st.m.size()));
  for (const Tensor& t : st.m) write_tensor(os, t);
  for (const Tensor& t : st.v) write_tensor(os, t);
}

AdamState read_adam(std::istream& is) {
  AdamState st;
  st.t = read_i64(is);
  const int64_t n = read_i64(is);
  st.m.reserve(n);
  st.v.reserve(n);
  for (int64_t i = 0; i < n; ++i) st.m.push_back(read_tensor(is));
  for (int64_t i = 0; i < n; ++i) st.v.push_back(read_tensor(is));
  return st;
}

}  // namespace

void save_checkpoint(const Checkpoint& c, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("checkpoint: cannot open for write: " + path);
  os.write(kMagic, 8);
  write_i64(os, static_cast<int64_t>(c.params.trunk.size()));
  for (const Dense& d : c.params.trunk) write_dense(os, d);
  write_dense(os, c.params.fwd_head);
  write_dense(os, c.params.bwd_head);
  write_dense(os, c.params.flow_head);
  write_tensor(os, c.params.log_z);
  write_adam(os, c.opt_main);
  write_adam(os, c.opt_z);
  write_i64(os, c.step);
  if (!os) throw std::runtime_error("checkpoint: write failed: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("checkpoint: cannot open: " + path);
  char magic[8];
  is.read(magic, 8);
  if (!is || std::memcmp(magic, kMagic, 8) != 0)
    throw std::runtime_error("checkpoint: bad magic in " + path);
  Checkpoint c;
  const int64_t depth = read_i64(is);
  if (depth < 0 || depth > 64) throw std::runtime_error("checkpoint: bad trunk depth");
  for (int64_t i = 0; i < depth; ++i) c.params.trunk.push_back(read_dense(is));
  c.params.fwd_head = read_dense(is);
  c.params.bwd_head = read_dense(is);
  c.params.flow_head = read_dense(is);
  c.params.log_z = read_tensor(is);
  c.opt_main = read_adam(is);
  c.opt_z = read_adam(is);
  c.step = read_i64(is);
  return c;
}

}  // namespace gfn
