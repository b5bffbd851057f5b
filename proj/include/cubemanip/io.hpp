// Copyright 2026 The cubemanip Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

// Files: atomic whole-file writes and the versioned checkpoint container.
//
// Checkpoint layout:
//   cubemanip-checkpoint <version>
//   seed <integer>
//   config <line count>
//   <resolved config lines>
//   net <name> <activation> <layer count + 1> <sizes...>
//   then per layer: <out> rows of <in> weights, one row per line, and one
//   line of <out> biases
// Networks appear in the order policy, q1, q2, target1, target2.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "cubemanip/config.hpp"
#include "cubemanip/sac.hpp"

namespace cubemanip {

inline constexpr int kCheckpointVersion = 1;
inline constexpr int kTraceVersion = 1;
inline constexpr int kMetricsVersion = 1;

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Writes to a sibling temporary file, then renames over `path`.
inline void write_file_atomic(const std::filesystem::path& path, const std::string& contents) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
    out << contents;
    out.flush();
    if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw std::runtime_error("cannot write '" + path.string() + "'");
  }
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct Checkpoint {
  RunConfig config;
  std::uint64_t seed = 0;
  GaussianPolicy policy;
  TwinCritic critics;
};

namespace io_detail {

inline void write_net(std::ostream& os, const std::string& name, const Mlp& net) {
  os << "net " << name << ' ' << activation_name(net.activation()) << ' ' << net.sizes().size();
  for (int s : net.sizes()) os << ' ' << s;
  os << '\n';
  for (int l = 0; l < net.layers(); ++l) {
    const auto W = net.W(l);
    for (Eigen::Index r = 0; r < W.rows(); ++r) {
      for (Eigen::Index c = 0; c < W.cols(); ++c) os << (c ? " " : "") << config_detail::fmt(W(r, c));
      os << '\n';
    }
    const auto b = net.b(l);
    for (Eigen::Index r = 0; r < b.size(); ++r) os << (r ? " " : "") << config_detail::fmt(b[r]);
    os << '\n';
  }
}

inline std::string next_line(std::istream& is, const char* what) {
  std::string line;
  if (!std::getline(is, line)) throw FormatError(std::string("checkpoint truncated while reading ") + what);
  return line;
}

inline Mlp read_net(std::istream& is, const std::string& expected) {
  std::istringstream head(next_line(is, "network header"));
  std::string tag, name, act;
  std::size_t count = 0;
  if (!(head >> tag >> name >> act >> count) || tag != "net" || name != expected || count < 2 || count > 64) {
    throw FormatError("checkpoint: bad header for network '" + expected + "'");
  }
  std::vector<int> sizes(count);
  for (auto& s : sizes) {
    if (!(head >> s) || s <= 0) throw FormatError("checkpoint: bad layer sizes for '" + expected + "'");
  }
  Mlp net;
  try {
    net = Mlp(sizes, parse_activation(act));
  } catch (const std::invalid_argument& e) {
    throw FormatError(std::string("checkpoint: ") + e.what());
  }
  VectorXd& p = net.params;
  Eigen::Index k = 0;
  for (int l = 0; l + 1 < static_cast<int>(sizes.size()); ++l) {
    const int out = sizes[l + 1];
    const int in = sizes[l];
    const Eigen::Index w0 = k;
    for (int r = 0; r < out; ++r) {
      const auto row = config_detail::parse_numbers(next_line(is, "weights"));
      if (static_cast<int>(row.size()) != in) throw FormatError("checkpoint: weight row has the wrong length");
      for (int c = 0; c < in; ++c) p[w0 + Eigen::Index(c) * out + r] = row[c];
    }
    k += Eigen::Index(out) * in;
    const auto bias = config_detail::parse_numbers(next_line(is, "biases"));
    if (static_cast<int>(bias.size()) != out) throw FormatError("checkpoint: bias row has the wrong length");
    for (int r = 0; r < out; ++r) p[k + r] = bias[r];
    k += out;
  }
  if (!p.allFinite()) throw FormatError("checkpoint: non-finite parameter in '" + expected + "'");
  return net;
}

}  // namespace io_detail

inline std::string checkpoint_to_string(const Checkpoint& ck) {
  std::ostringstream os;
  os << "cubemanip-checkpoint " << kCheckpointVersion << '\n';
  os << "seed " << ck.seed << '\n';
  const std::string cfg = config_to_string(ck.config);
  os << "config " << std::count(cfg.begin(), cfg.end(), '\n') << '\n' << cfg;
  io_detail::write_net(os, "policy", ck.policy.trunk);
  io_detail::write_net(os, "q1", ck.critics.q1);
  io_detail::write_net(os, "q2", ck.critics.q2);
  io_detail::write_net(os, "target1", ck.critics.target1);
  io_detail::write_net(os, "target2", ck.critics.target2);
  return os.str();
}

inline Checkpoint checkpoint_from_string(const std::string& text) {
  std::istringstream is(text);
  std::string magic;
  int version = 0;
  {
    std::istringstream head(io_detail::next_line(is, "header"));
    if (!(head >> magic >> version) || magic != "cubemanip-checkpoint") {
      throw FormatError("checkpoint: missing 'cubemanip-checkpoint' header");
    }
  }
  if (version < 1 || version > kCheckpointVersion) {
    throw FormatError("checkpoint: unsupported version " + std::to_string(version) + " (reader supports up to " +
                      std::to_string(kCheckpointVersion) + ")");
  }
  Checkpoint ck;
  {
    std::istringstream ls(io_detail::next_line(is, "seed"));
    std::string tag;
    if (!(ls >> tag >> ck.seed) || tag != "seed") throw FormatError("checkpoint: bad seed line");
  }
  int lines = 0;
  {
    std::istringstream ls(io_detail::next_line(is, "config"));
    std::string tag;
    if (!(ls >> tag >> lines) || tag != "config" || lines < 0) throw FormatError("checkpoint: bad config line");
  }
  std::string cfg;
  for (int i = 0; i < lines; ++i) cfg += io_detail::next_line(is, "config") + '\n';
  try {
    std::istringstream cs(cfg);
    ck.config = parse_config(cs, "checkpoint config");
  } catch (const std::invalid_argument& e) {
    throw FormatError(e.what());
  }
  ck.policy.trunk = io_detail::read_net(is, "policy");
  ck.critics.q1 = io_detail::read_net(is, "q1");
  ck.critics.q2 = io_detail::read_net(is, "q2");
  ck.critics.target1 = io_detail::read_net(is, "target1");
  ck.critics.target2 = io_detail::read_net(is, "target2");
  if (!ck.critics.q1.same_shape(ck.critics.target1) || !ck.critics.q2.same_shape(ck.critics.target2) ||
      !ck.critics.q1.same_shape(ck.critics.q2)) {
    throw FormatError("checkpoint: critic and target shapes differ");
  }
  return ck;
}

inline void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
  write_file_atomic(path, checkpoint_to_string(ck));
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) { return checkpoint_from_string(read_file(path)); }

}  // namespace cubemanip
