#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "amstack/diagnostic.hpp"
#include "amstack/graph.hpp"
#include "amstack/types.hpp"

namespace amstack {

using DeviceIndex = std::uint32_t;

struct Device {
  std::string id;
  std::string name;
  DeviceClass cls = DeviceClass::cpu;
  std::uint32_t cores = 1;
  double link_bw_bps = 0;
  double idle_w = 0;

  friend bool operator==(const Device&, const Device&) = default;
};

/// Profiled cost of one implementation variant of an operator on a device class.
struct VariantProfile {
  std::string op;
  std::string variant;
  DeviceClass cls = DeviceClass::cpu;
  double lat_ms_mean = 0;
  double lat_ms_std = 0;
  double energy_mj = 0;

  friend bool operator==(const VariantProfile&, const VariantProfile&) = default;
};

class SubstrateModel {
 public:
  SubstrateModel() = default;
  /// Validates invariants; throws Error("E-SCHEMA") or Error("E-DUPKEY").
  SubstrateModel(std::vector<Device> devices, std::vector<VariantProfile> profiles);

  const std::vector<Device>& devices() const { return devices_; }
  const std::vector<VariantProfile>& profiles() const { return profiles_; }
  const Device& device(DeviceIndex index) const { return devices_.at(index); }

  std::optional<DeviceIndex> find_device(std::string_view id) const;
  std::vector<DeviceIndex> devices_of_class(DeviceClass cls) const;
  bool has_class(DeviceClass cls) const;

  /// Variants of `op` runnable on `cls`, fastest first (ties by variant name).
  std::vector<VariantProfile> query(std::string_view op, DeviceClass cls) const;
  /// Fastest variant of `op` on `cls`, if any.
  std::optional<VariantProfile> best(std::string_view op, DeviceClass cls) const;
  const VariantProfile* find(std::string_view op, std::string_view variant, DeviceClass cls) const;

  /// Transfer time in ms for `bytes` between two devices; 0 on the same device.
  double comm_cost_ms(double bytes, DeviceIndex from, DeviceIndex to) const;

  friend bool operator==(const SubstrateModel& a, const SubstrateModel& b) {
    return a.devices_ == b.devices_ && a.profiles_ == b.profiles_;
  }

 private:
  std::vector<Device> devices_;
  std::vector<VariantProfile> profiles_;
  std::map<std::pair<std::string, DeviceClass>, std::vector<std::size_t>, std::less<>> index_;
};

/// Throws Error with code E-IO, E-SCHEMA or E-DUPKEY; schema messages carry a
/// JSON-pointer path to the offending value.
SubstrateModel load_profiles(const std::filesystem::path& path);
SubstrateModel parse_profiles(std::string_view json_text);
std::string write_profiles(const SubstrateModel& model);

/// E-NOPROFILE / E-MAPCONFLICT diagnostics (no source location).
Diagnostics validate_coverage(const SubstrateModel& model, const ComputationGraph& graph);

}  // namespace amstack
