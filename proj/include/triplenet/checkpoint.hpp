#pragma once

// Checkpoint container: versioned magic line, text header (step counter,
// RNG state, config snapshot, tensor directory), then raw little-endian
// IEEE-754 32-bit payloads in directory order. save -> load -> save is
// byte-identical.

#include <cstring>
#include <fstream>
#include <sstream>

#include "triplenet/config.hpp"
#include "triplenet/tensor.hpp"

namespace triplenet {

inline constexpr const char* kCheckpointMagic = "TRIPLENET-CKPT-V1";

struct TensorEntry {
  std::string name;
  Shape shape;
  std::vector<float> data;
};

struct Checkpoint {
  uint64_t step = 0;
  std::string rng_state;  // mt19937_64 stream serialization
  TrainConfig config;
  std::vector<TensorEntry> tensors;

  const TensorEntry& find(const std::string& name) const {
    for (auto& t : tensors)
      if (t.name == name) return t;
    tensor_error("checkpoint", "missing tensor " + name);
  }

  void save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    check(bool(out), "checkpoint", "cannot write " + path);
    out << kCheckpointMagic << '\n';
    out << "step " << step << '\n';
    out << "rng " << rng_state << '\n';
    out << "config_begin\n" << serialize_config(config) << "config_end\n";
    out << "tensors " << tensors.size() << '\n';
    for (auto& t : tensors) {
      out << t.name << " f32 " << t.shape.size();
      for (size_t d : t.shape) out << ' ' << d;
      out << '\n';
    }
    out << "end_header\n";
    static_assert(sizeof(float) == 4);
    for (auto& t : tensors)
      out.write(reinterpret_cast<const char*>(t.data.data()),
                std::streamsize(t.data.size() * 4));
    check(bool(out), "checkpoint", "write failed for " + path);
  }

  static Checkpoint load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    check(bool(in), "checkpoint", "cannot open " + path);
    Checkpoint ck;
    std::string line;
    auto next = [&](const char* what) {
      check(bool(std::getline(in, line)), "checkpoint",
            std::string("truncated header: expected ") + what);
      return line;
    };
    check(next("magic") == kCheckpointMagic, "checkpoint",
          "bad magic line '" + line + "' in " + path);
    {
      std::istringstream is(next("step"));
      std::string key;
      check(bool(is >> key >> ck.step) && key == "step", "checkpoint", "bad step line");
    }
    {
      std::string l = next("rng");
      check(l.rfind("rng ", 0) == 0, "checkpoint", "bad rng line");
      ck.rng_state = l.substr(4);
    }
    check(next("config_begin") == "config_begin", "checkpoint", "missing config block");
    std::string cfg_text;
    while (next("config_end") != "config_end") cfg_text += line + "\n";
    {
      std::istringstream is(cfg_text);
      parse_config_text(ck.config, is);
    }
    size_t count = 0;
    {
      std::istringstream is(next("tensors"));
      std::string key;
      check(bool(is >> key >> count) && key == "tensors", "checkpoint", "bad tensor count");
    }
    for (size_t i = 0; i < count; ++i) {
      std::istringstream is(next("tensor entry"));
      TensorEntry t;
      std::string dtype;
      size_t rank = 0;
      check(bool(is >> t.name >> dtype >> rank) && dtype == "f32", "checkpoint",
            "bad tensor entry: " + line);
      t.shape.resize(rank);
      for (size_t d = 0; d < rank; ++d)
        check(bool(is >> t.shape[d]), "checkpoint", "bad tensor shape: " + line);
      t.data.resize(shape_numel(t.shape));
      ck.tensors.push_back(std::move(t));
    }
    check(next("end_header") == "end_header", "checkpoint", "missing end_header");
    for (auto& t : ck.tensors) {
      in.read(reinterpret_cast<char*>(t.data.data()), std::streamsize(t.data.size() * 4));
      check(in.gcount() == std::streamsize(t.data.size() * 4), "checkpoint",
            "truncated payload for " + t.name);
    }
    return ck;
  }
};

}  // namespace triplenet
