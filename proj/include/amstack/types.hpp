#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

namespace amstack {

enum class DeviceClass { cpu, gpu, dsp, fpga, accelerator };

inline constexpr std::array<DeviceClass, 5> kAllDeviceClasses = {
    DeviceClass::cpu, DeviceClass::gpu, DeviceClass::dsp, DeviceClass::fpga,
    DeviceClass::accelerator};

std::string_view to_string(DeviceClass cls);
std::optional<DeviceClass> parse_device_class(std::string_view text);

enum class Strength { hint, requirement };

enum class Comparator { geq, leq, eq };

std::string_view to_string(Comparator cmp);

using NodeId = std::uint32_t;

/// Simulation and budget time base.
using Nanos = std::int64_t;
using Micros = std::int64_t;

inline constexpr Nanos kNanosPerMs = 1'000'000;
inline constexpr Nanos kNanosPerSecond = 1'000'000'000;

inline double nanos_to_ms(Nanos t) { return static_cast<double>(t) / 1e6; }
Nanos ms_to_nanos(double ms);

/// Shortest decimal text that parses back to the same double, never in
/// exponent notation.
std::string format_number(double value);

}  // namespace amstack
