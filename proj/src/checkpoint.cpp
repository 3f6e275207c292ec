/* Copyright 2026 The fedstyle Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#include <array>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "binary_io.hpp"
#include "fedstyle/model.hpp"

namespace fedstyle {
namespace {

constexpr char kMagic[4] = {'F', 'S', 'C', 'K'};
constexpr std::uint8_t kVersion = 1;
constexpr std::uint8_t kHasVelocity = 0x1;

std::vector<std::vector<std::uint32_t>> tensor_dims(const ModelShape& s, ParamGroup g) {
  const auto f = static_cast<std::uint32_t>(s.features);
  const auto c = static_cast<std::uint32_t>(s.in_channels);
  const auto q = static_cast<std::uint32_t>(s.classes);
  switch (g) {
    case ParamGroup::kBackbone: return {{f, c, 3, 3}, {f}};
    case ParamGroup::kNorm: return {{f}, {f}};
    case ParamGroup::kClassifier: return {{q, f}, {q}};
  }
  return {};
}

void write_groups(std::ostream& out, const ParamSet& p) {
  std::uint32_t count = 0;
  for (auto g : kAllGroups) count += p.has(g);
  detail::put<std::uint32_t>(out, count);
  for (auto g : kAllGroups) {
    if (!p.has(g)) continue;
    const auto name = group_name(g);
    detail::put<std::uint8_t>(out, static_cast<std::uint8_t>(g));
    detail::put<std::uint8_t>(out, static_cast<std::uint8_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    const auto dims = tensor_dims(p.shape, g);
    detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(dims.size()));
    for (const auto& d : dims) {
      detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(d.size()));
      for (auto x : d) detail::put<std::uint32_t>(out, x);
    }
    detail::put<std::uint64_t>(out, p[g].size());
    for (double v : p[g]) detail::put_f64(out, v);
  }
}

ParamSet read_groups(std::istream& in, const ModelShape& shape) {
  ParamSet p;
  p.shape = shape;
  const auto count = detail::get<std::uint32_t>(in, "group count");
  if (count > kNumGroups) throw FormatError("checkpoint lists too many groups");
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto id = detail::get<std::uint8_t>(in, "group id");
    if (id >= kNumGroups) throw FormatError("unknown group id " + std::to_string(id));
    const auto g = static_cast<ParamGroup>(id);
    const auto len = detail::get<std::uint8_t>(in, "group name length");
    std::string name(len, '\0');
    in.read(name.data(), len);
    if (!in || name != group_name(g)) throw FormatError("group name does not match its id");
    if (p.has(g)) throw FormatError("duplicate group '" + name + "'");
    const auto expected = tensor_dims(shape, g);
    const auto tensors = detail::get<std::uint32_t>(in, "tensor count");
    if (tensors != expected.size()) throw FormatError("unexpected tensor count in " + name);
    for (const auto& dims : expected) {
      const auto rank = detail::get<std::uint32_t>(in, "tensor rank");
      if (rank != dims.size()) throw FormatError("unexpected tensor rank in " + name);
      for (auto d : dims) {
        if (detail::get<std::uint32_t>(in, "tensor dim") != d) {
          throw FormatError("tensor shape in " + name + " does not match the header");
        }
      }
    }
    const auto n = detail::get<std::uint64_t>(in, "value count");
    if (n != shape.group_size(g)) throw FormatError("value count mismatch in " + name);
    auto& v = p[g];
    v.resize(n);
    for (double& x : v) x = detail::get_f64(in, "parameter values");
  }
  return p;
}

}  // namespace

void write_checkpoint(std::ostream& out, const ParamSet& params, const ParamSet* velocity) {
  validate(params);
  if (velocity) {
    require(velocity->shape == params.shape && velocity->present() == params.present(),
            "velocity must match the parameter groups");
  }
  out.write(kMagic, sizeof(kMagic));
  detail::put<std::uint8_t>(out, kVersion);
  detail::put<std::uint8_t>(out, velocity ? kHasVelocity : 0);
  detail::put<std::uint16_t>(out, 0);
  detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(params.shape.in_channels));
  detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(params.shape.features));
  detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(params.shape.classes));
  write_groups(out, params);
  if (velocity) write_groups(out, *velocity);
  if (!out) throw FormatError("failed to write checkpoint");
}

Checkpoint read_checkpoint(std::istream& in) {
  char magic[4];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw FormatError("not a checkpoint (bad magic)");
  }
  const auto version = detail::get<std::uint8_t>(in, "version");
  if (version != kVersion) throw FormatError("unsupported checkpoint version " + std::to_string(version));
  const auto flags = detail::get<std::uint8_t>(in, "flags");
  if (flags & ~kHasVelocity) throw FormatError("unknown checkpoint flags");
  detail::get<std::uint16_t>(in, "reserved");
  ModelShape shape;
  shape.in_channels = static_cast<int>(detail::get<std::uint32_t>(in, "in_channels"));
  shape.features = static_cast<int>(detail::get<std::uint32_t>(in, "features"));
  shape.classes = static_cast<int>(detail::get<std::uint32_t>(in, "classes"));
  if (shape.in_channels < 1 || shape.features < 1 || shape.classes < 2 ||
      shape.in_channels > 4096 || shape.features > 4096 || shape.classes > 4096) {
    throw FormatError("checkpoint model shape out of range");
  }
  Checkpoint ck;
  ck.params = read_groups(in, shape);
  if (flags & kHasVelocity) {
    ck.has_velocity = true;
    ck.velocity = read_groups(in, shape);
    if (ck.velocity.present() != ck.params.present()) {
      throw FormatError("velocity groups differ from parameter groups");
    }
  }
  return ck;
}

}  // namespace fedstyle
