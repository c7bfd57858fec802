#include "amstack/substrate.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <tuple>

namespace amstack {

SubstrateModel::SubstrateModel(std::vector<Device> devices, std::vector<VariantProfile> profiles)
    : devices_(std::move(devices)), profiles_(std::move(profiles)) {
  if (devices_.empty()) throw Error("E-SCHEMA", "/devices: at least one device is required");
  std::set<std::string> ids;
  for (std::size_t i = 0; i < devices_.size(); ++i) {
    const auto& d = devices_[i];
    std::string where = "/devices/" + std::to_string(i);
    if (!ids.insert(d.id).second) throw Error("E-DUPKEY", where + "/id: duplicate device id '" + d.id + "'");
    if (d.cores < 1) throw Error("E-SCHEMA", where + "/cores: must be >= 1");
    if (!(d.link_bw_bps > 0)) throw Error("E-SCHEMA", where + "/link_bw_bps: must be > 0");
    if (!(d.idle_w >= 0)) throw Error("E-SCHEMA", where + "/idle_w: must be >= 0");
  }
  std::set<std::tuple<std::string, std::string, DeviceClass>> keys;
  for (std::size_t i = 0; i < profiles_.size(); ++i) {
    const auto& p = profiles_[i];
    std::string where = "/profiles/" + std::to_string(i);
    if (!keys.insert({p.op, p.variant, p.cls}).second) {
      throw Error("E-DUPKEY", where + ": duplicate (op, variant, class) = (" + p.op + ", " +
                                  p.variant + ", " + std::string(to_string(p.cls)) + ")");
    }
    if (!(p.lat_ms_mean > 0)) throw Error("E-SCHEMA", where + "/lat_ms_mean: must be > 0");
    if (!(p.lat_ms_std >= 0)) throw Error("E-SCHEMA", where + "/lat_ms_std: must be >= 0");
    if (!(p.energy_mj >= 0)) throw Error("E-SCHEMA", where + "/energy_mj: must be >= 0");
    index_[{p.op, p.cls}].push_back(i);
  }
  for (auto& [key, list] : index_) {
    std::sort(list.begin(), list.end(), [&](std::size_t a, std::size_t b) {
      const auto& pa = profiles_[a];
      const auto& pb = profiles_[b];
      if (pa.lat_ms_mean != pb.lat_ms_mean) return pa.lat_ms_mean < pb.lat_ms_mean;
      return pa.variant < pb.variant;
    });
  }
}

std::optional<DeviceIndex> SubstrateModel::find_device(std::string_view id) const {
  for (DeviceIndex i = 0; i < devices_.size(); ++i) {
    if (devices_[i].id == id) return i;
  }
  return std::nullopt;
}

std::vector<DeviceIndex> SubstrateModel::devices_of_class(DeviceClass cls) const {
  std::vector<DeviceIndex> out;
  for (DeviceIndex i = 0; i < devices_.size(); ++i) {
    if (devices_[i].cls == cls) out.push_back(i);
  }
  return out;
}

bool SubstrateModel::has_class(DeviceClass cls) const {
  return std::any_of(devices_.begin(), devices_.end(), [&](const Device& d) { return d.cls == cls; });
}

std::vector<VariantProfile> SubstrateModel::query(std::string_view op, DeviceClass cls) const {
  std::vector<VariantProfile> out;
  auto it = index_.find(std::make_pair(std::string(op), cls));
  if (it == index_.end()) return out;
  for (auto i : it->second) out.push_back(profiles_[i]);
  return out;
}

std::optional<VariantProfile> SubstrateModel::best(std::string_view op, DeviceClass cls) const {
  auto it = index_.find(std::make_pair(std::string(op), cls));
  if (it == index_.end() || it->second.empty()) return std::nullopt;
  return profiles_[it->second.front()];
}

const VariantProfile* SubstrateModel::find(std::string_view op, std::string_view variant,
                                           DeviceClass cls) const {
  auto it = index_.find(std::make_pair(std::string(op), cls));
  if (it == index_.end()) return nullptr;
  for (auto i : it->second) {
    if (profiles_[i].variant == variant) return &profiles_[i];
  }
  return nullptr;
}

double SubstrateModel::comm_cost_ms(double bytes, DeviceIndex from, DeviceIndex to) const {
  if (from == to || bytes <= 0) return 0.0;
  double bw = std::min(devices_.at(from).link_bw_bps, devices_.at(to).link_bw_bps);
  return bytes / bw * 1000.0;
}

namespace {

using json = nlohmann::json;

[[noreturn]] void schema(const std::string& where, const std::string& what) {
  throw Error("E-SCHEMA", (where.empty() ? "/" : where) + ": " + what);
}

void exact_keys(const json& obj, const std::string& where, std::initializer_list<const char*> keys) {
  if (!obj.is_object()) schema(where, "expected an object");
  for (const char* k : keys) {
    if (!obj.contains(k)) schema(where, "missing field '" + std::string(k) + "'");
  }
  for (const auto& [k, v] : obj.items()) {
    bool known = std::any_of(keys.begin(), keys.end(), [&](const char* want) { return k == want; });
    if (!known) schema(where + "/" + k, "unknown field");
  }
}

std::string get_string(const json& obj, const std::string& where, const char* key) {
  const auto& v = obj.at(key);
  if (!v.is_string()) schema(where + "/" + key, "expected a string");
  return v.get<std::string>();
}

double get_number(const json& obj, const std::string& where, const char* key) {
  const auto& v = obj.at(key);
  if (!v.is_number()) schema(where + "/" + key, "expected a number");
  double d = v.get<double>();
  if (!std::isfinite(d)) schema(where + "/" + key, "expected a finite number");
  return d;
}

DeviceClass get_class(const json& obj, const std::string& where) {
  std::string text = get_string(obj, where, "class");
  auto cls = parse_device_class(text);
  if (!cls) schema(where + "/class", "unknown device class '" + text + "'");
  return *cls;
}

}  // namespace

SubstrateModel parse_profiles(std::string_view json_text) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw Error("E-SCHEMA", std::string("/: invalid JSON: ") + e.what());
  }
  exact_keys(root, "", {"devices", "profiles"});
  if (!root["devices"].is_array()) schema("/devices", "expected an array");
  if (root["devices"].empty()) schema("/devices", "at least one device is required");
  if (!root["profiles"].is_array()) schema("/profiles", "expected an array");

  std::vector<Device> devices;
  for (std::size_t i = 0; i < root["devices"].size(); ++i) {
    const auto& d = root["devices"][i];
    std::string where = "/devices/" + std::to_string(i);
    exact_keys(d, where, {"id", "name", "class", "cores", "link_bw_bps", "idle_w"});
    Device dev;
    dev.id = get_string(d, where, "id");
    dev.name = get_string(d, where, "name");
    dev.cls = get_class(d, where);
    if (!d["cores"].is_number_integer() || d["cores"].get<std::int64_t>() < 1) {
      schema(where + "/cores", "expected a positive integer");
    }
    dev.cores = static_cast<std::uint32_t>(d["cores"].get<std::int64_t>());
    dev.link_bw_bps = get_number(d, where, "link_bw_bps");
    dev.idle_w = get_number(d, where, "idle_w");
    devices.push_back(std::move(dev));
  }
  std::vector<VariantProfile> profiles;
  for (std::size_t i = 0; i < root["profiles"].size(); ++i) {
    const auto& p = root["profiles"][i];
    std::string where = "/profiles/" + std::to_string(i);
    exact_keys(p, where, {"op", "variant", "class", "lat_ms_mean", "lat_ms_std", "energy_mj"});
    VariantProfile prof;
    prof.op = get_string(p, where, "op");
    prof.variant = get_string(p, where, "variant");
    prof.cls = get_class(p, where);
    prof.lat_ms_mean = get_number(p, where, "lat_ms_mean");
    prof.lat_ms_std = get_number(p, where, "lat_ms_std");
    prof.energy_mj = get_number(p, where, "energy_mj");
    profiles.push_back(std::move(prof));
  }
  return SubstrateModel(std::move(devices), std::move(profiles));
}

SubstrateModel load_profiles(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("E-IO", "cannot read profile file '" + path.string() + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_profiles(buf.str());
}

std::string write_profiles(const SubstrateModel& model) {
  nlohmann::ordered_json root;
  auto devices = nlohmann::ordered_json::array();
  for (const auto& d : model.devices()) {
    devices.push_back({{"id", d.id},
                       {"name", d.name},
                       {"class", to_string(d.cls)},
                       {"cores", d.cores},
                       {"link_bw_bps", d.link_bw_bps},
                       {"idle_w", d.idle_w}});
  }
  auto profiles = nlohmann::ordered_json::array();
  for (const auto& p : model.profiles()) {
    profiles.push_back({{"op", p.op},
                        {"variant", p.variant},
                        {"class", to_string(p.cls)},
                        {"lat_ms_mean", p.lat_ms_mean},
                        {"lat_ms_std", p.lat_ms_std},
                        {"energy_mj", p.energy_mj}});
  }
  root["devices"] = std::move(devices);
  root["profiles"] = std::move(profiles);
  return root.dump(2) + "\n";
}

Diagnostics validate_coverage(const SubstrateModel& model, const ComputationGraph& graph) {
  Diagnostics out;
  for (const auto& node : graph.nodes()) {
    if (!node.is_operator()) continue;
    bool runnable = false;
    for (auto cls : kAllDeviceClasses) {
      if (model.has_class(cls) && !model.query(node.name, cls).empty()) runnable = true;
    }
    if (!runnable) {
      out.push_back(Diagnostic{Severity::error, {}, "E-NOPROFILE",
                               "operator '" + node.name +
                                   "' has no profile for any device class in the substrate"});
    }
    if (node.required_class) {
      auto cls = *node.required_class;
      if (!model.has_class(cls) || model.query(node.name, cls).empty()) {
        out.push_back(Diagnostic{Severity::error, {}, "E-MAPCONFLICT",
                                 "require_map " + node.name + " on " + std::string(to_string(cls)) +
                                     ": no " + std::string(to_string(cls)) +
                                     " device runs a profiled variant of this operator"});
      }
    }
  }
  return out;
}

}  // namespace amstack
