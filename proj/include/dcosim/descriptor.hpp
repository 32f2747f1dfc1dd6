#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace dcosim {

enum class VariableType : std::uint8_t { Real = 0, Integer = 1, Boolean = 2, Text = 3 };
enum class Causality : std::uint8_t { Input, Output, Parameter };

inline constexpr VariableType kAllVariableTypes[] = {
    VariableType::Real, VariableType::Integer, VariableType::Boolean, VariableType::Text};

std::string_view to_string(VariableType type) noexcept;
std::string_view to_string(Causality causality) noexcept;
std::optional<VariableType> parse_variable_type(std::string_view keyword) noexcept;
std::optional<Causality> parse_causality(std::string_view keyword) noexcept;

/// A single scalar value. The alternative index equals the VariableType code.
using ScalarValue = std::variant<double, std::int32_t, bool, std::string>;

VariableType type_of(const ScalarValue& value) noexcept;

struct ScalarVariable {
    std::string name;
    std::uint32_t value_reference = 0;
    VariableType type = VariableType::Real;
    Causality causality = Causality::Input;
    std::optional<ScalarValue> start;

    bool operator==(const ScalarVariable&) const = default;
};

struct ModelDescriptor {
    std::string model_name;
    std::string instance_guid;
    std::vector<ScalarVariable> variables;

    const ScalarVariable* find(std::string_view name) const noexcept;
    const ScalarVariable* find(VariableType type, std::uint32_t value_reference) const noexcept;

    bool operator==(const ModelDescriptor&) const = default;
};

/// Throws ValidationError naming the field path of the first violation.
ModelDescriptor parse_descriptor(std::string_view text);
ModelDescriptor load_descriptor(const std::string& path);
std::string serialize_descriptor(const ModelDescriptor& descriptor);

/// Checks every descriptor invariant on an already-built value.
void validate_descriptor(const ModelDescriptor& descriptor);

struct UnitConfig {
    std::string unit_name;
    std::string descriptor_path;
    std::string listen_address;
    std::string auth_token;
};

/// A variable endpoint resolved against its unit's descriptor.
struct VariableRef {
    std::size_t unit = 0;
    std::string unit_name;
    std::string variable;
    std::uint32_t value_reference = 0;
    VariableType type = VariableType::Real;

    std::string qualified_name() const { return unit_name + "." + variable; }
    bool operator==(const VariableRef&) const = default;
};

struct Connection {
    VariableRef source;
    VariableRef target;

    bool operator==(const Connection&) const = default;
};

struct ScenarioConfig {
    std::vector<UnitConfig> units;
    std::vector<ModelDescriptor> descriptors; // parallel to `units`
    std::vector<Connection> connections;
    std::vector<VariableRef> captures;        // extra outputs recorded each step
    double step_size = 0.0;
    double start_time = 0.0;
    double end_time = 0.0;
    bool real_time = false;
    std::string output_path;

    /// N = round((end_time - start_time) / step_size).
    std::int64_t step_count() const noexcept;
    /// t_k = start_time + k * step_size, never accumulated.
    double time_at(std::int64_t k) const noexcept { return start_time + static_cast<double>(k) * step_size; }
};

/// `descriptors` maps unit_name to its parsed descriptor. Throws ValidationError.
ScenarioConfig parse_scenario(std::string_view text,
                              const std::map<std::string, ModelDescriptor>& descriptors);

/// Reads the scenario file and every descriptor it references. Relative
/// descriptor paths resolve against the scenario's directory.
ScenarioConfig load_scenario(const std::string& path);

/// Splits "host:port". Throws ValidationError on malformed input.
std::pair<std::string, std::uint16_t> split_address(const std::string& address);

} // namespace dcosim
