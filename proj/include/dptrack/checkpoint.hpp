#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "dptrack/nn.hpp"

namespace dptrack {

inline constexpr uint32_t kCheckpointVersion = 1;

namespace detail {

inline void write_str(std::ofstream& out, const std::string& s) {
  uint16_t len = uint16_t(s.size());
  out.write(reinterpret_cast<const char*>(&len), sizeof(len));
  out.write(s.data(), len);
}

inline std::string read_str(std::ifstream& in) {
  uint16_t len = 0;
  in.read(reinterpret_cast<char*>(&len), sizeof(len));
  std::string s(len, '\0');
  in.read(s.data(), len);
  return s;
}

}  // namespace detail

// Self-describing parameter archive: hyperparameters as named doubles,
// tensors as named float blobs.
template <typename T>
void save_checkpoint(const std::string& path, const std::map<std::string, double>& hypers,
                     const std::vector<nn::ParamPtr<T>>& params) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint: " + path);
  out.write("DPCK", 4);
  uint32_t version = kCheckpointVersion;
  out.write(reinterpret_cast<const char*>(&version), 4);
  uint32_t nh = uint32_t(hypers.size());
  out.write(reinterpret_cast<const char*>(&nh), 4);
  for (const auto& [k, v] : hypers) {
    detail::write_str(out, k);
    out.write(reinterpret_cast<const char*>(&v), sizeof(double));
  }
  uint32_t nt = uint32_t(params.size());
  out.write(reinterpret_cast<const char*>(&nt), 4);
  for (const auto& p : params) {
    detail::write_str(out, p->name);
    int32_t dims[4] = {p->value.n, p->value.c, p->value.h, p->value.w};
    out.write(reinterpret_cast<const char*>(dims), sizeof(dims));
    for (T v : p->value.data) {
      float f = float(v);
      out.write(reinterpret_cast<const char*>(&f), sizeof(float));
    }
  }
}

struct CheckpointData {
  uint32_t version = 0;
  std::map<std::string, double> hypers;
  std::map<std::string, std::pair<std::array<int32_t, 4>, std::vector<float>>> tensors;
};

inline CheckpointData load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint: " + path);
  char magic[4];
  in.read(magic, 4);
  if (std::string(magic, 4) != "DPCK") throw ParseError("not a checkpoint file: " + path);
  CheckpointData ck;
  in.read(reinterpret_cast<char*>(&ck.version), 4);
  if (ck.version != kCheckpointVersion)
    throw ParseError("unsupported checkpoint version in " + path);
  uint32_t nh = 0;
  in.read(reinterpret_cast<char*>(&nh), 4);
  for (uint32_t i = 0; i < nh; ++i) {
    std::string k = detail::read_str(in);
    double v = 0;
    in.read(reinterpret_cast<char*>(&v), sizeof(double));
    ck.hypers[k] = v;
  }
  uint32_t nt = 0;
  in.read(reinterpret_cast<char*>(&nt), 4);
  for (uint32_t i = 0; i < nt; ++i) {
    std::string name = detail::read_str(in);
    std::array<int32_t, 4> dims;
    in.read(reinterpret_cast<char*>(dims.data()), sizeof(int32_t) * 4);
    size_t count = size_t(dims[0]) * dims[1] * dims[2] * dims[3];
    std::vector<float> data(count);
    in.read(reinterpret_cast<char*>(data.data()), std::streamsize(count * sizeof(float)));
    if (!in) throw ParseError("truncated checkpoint: " + path);
    ck.tensors[name] = {dims, std::move(data)};
  }
  return ck;
}

template <typename T>
void restore_params(const CheckpointData& ck, const std::vector<nn::ParamPtr<T>>& params) {
  for (const auto& p : params) {
    auto it = ck.tensors.find(p->name);
    if (it == ck.tensors.end()) throw ParseError("checkpoint missing tensor: " + p->name);
    const auto& [dims, data] = it->second;
    if (dims[0] != p->value.n || dims[1] != p->value.c || dims[2] != p->value.h ||
        dims[3] != p->value.w)
      throw ShapeError("checkpoint tensor shape mismatch: " + p->name);
    for (size_t i = 0; i < data.size(); ++i) p->value.data[i] = T(data[i]);
  }
}

}  // namespace dptrack
