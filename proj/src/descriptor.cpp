#include "dcosim/descriptor.hpp"

#include "dcosim/error.hpp"

#include <json.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

namespace dcosim {

using json = nlohmann::json;

std::string_view to_string(VariableType type) noexcept
{
    switch (type) {
    case VariableType::Real: return "Real";
    case VariableType::Integer: return "Integer";
    case VariableType::Boolean: return "Boolean";
    case VariableType::Text: return "Text";
    }
    return "?";
}

std::string_view to_string(Causality causality) noexcept
{
    switch (causality) {
    case Causality::Input: return "input";
    case Causality::Output: return "output";
    case Causality::Parameter: return "parameter";
    }
    return "?";
}

std::optional<VariableType> parse_variable_type(std::string_view keyword) noexcept
{
    for (auto type : kAllVariableTypes) {
        if (to_string(type) == keyword) return type;
    }
    return std::nullopt;
}

std::optional<Causality> parse_causality(std::string_view keyword) noexcept
{
    for (auto c : {Causality::Input, Causality::Output, Causality::Parameter}) {
        if (to_string(c) == keyword) return c;
    }
    return std::nullopt;
}

VariableType type_of(const ScalarValue& value) noexcept
{
    return static_cast<VariableType>(value.index());
}

const ScalarVariable* ModelDescriptor::find(std::string_view name) const noexcept
{
    for (const auto& v : variables) {
        if (v.name == name) return &v;
    }
    return nullptr;
}

const ScalarVariable* ModelDescriptor::find(VariableType type, std::uint32_t value_reference) const noexcept
{
    for (const auto& v : variables) {
        if (v.type == type && v.value_reference == value_reference) return &v;
    }
    return nullptr;
}

namespace {

bool is_identifier(std::string_view s)
{
    if (s.empty()) return false;
    auto alpha = [](char c) { return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || c == '_'; };
    if (!alpha(s.front())) return false;
    for (char c : s) {
        if (!alpha(c) && !(c >= '0' && c <= '9')) return false;
    }
    return true;
}

json parse_json(std::string_view text)
{
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        throw ValidationError("", std::string("malformed document: ") + e.what());
    }
}

const json& require(const json& obj, const std::string& key, const std::string& path)
{
    if (!obj.is_object()) throw ValidationError(path, "expected an object");
    auto it = obj.find(key);
    if (it == obj.end()) throw ValidationError(path.empty() ? key : path + "." + key, "missing required field");
    return *it;
}

std::string field(const std::string& path, const std::string& key)
{
    return path.empty() ? key : path + "." + key;
}

std::string require_string(const json& obj, const std::string& key, const std::string& path)
{
    const auto& v = require(obj, key, path);
    if (!v.is_string()) throw ValidationError(field(path, key), "expected a string");
    return v.get<std::string>();
}

double require_number(const json& obj, const std::string& key, const std::string& path)
{
    const auto& v = require(obj, key, path);
    if (!v.is_number()) throw ValidationError(field(path, key), "expected a number");
    return v.get<double>();
}

ScalarValue parse_start(const json& v, VariableType type, const std::string& path)
{
    switch (type) {
    case VariableType::Real:
        if (!v.is_number()) throw ValidationError(path, "expected a Real literal");
        return v.get<double>();
    case VariableType::Integer: {
        if (!v.is_number_integer()) throw ValidationError(path, "expected an Integer literal");
        const auto wide = v.get<std::int64_t>();
        if (wide < std::numeric_limits<std::int32_t>::min() || wide > std::numeric_limits<std::int32_t>::max()) {
            throw ValidationError(path, "Integer literal out of 32-bit range");
        }
        return static_cast<std::int32_t>(wide);
    }
    case VariableType::Boolean:
        if (!v.is_boolean()) throw ValidationError(path, "expected a Boolean literal");
        return v.get<bool>();
    case VariableType::Text:
        if (!v.is_string()) throw ValidationError(path, "expected a Text literal");
        return v.get<std::string>();
    }
    throw ValidationError(path, "unknown type");
}

json start_to_json(const ScalarValue& value)
{
    return std::visit([](const auto& v) { return json(v); }, value);
}

std::string read_file(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError(path, "cannot open file");
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return buffer.str();
}

} // namespace

void validate_descriptor(const ModelDescriptor& descriptor)
{
    if (!is_identifier(descriptor.model_name)) throw ValidationError("model_name", "not an identifier");
    if (descriptor.variables.empty()) throw ValidationError("variables", "empty variable list");

    std::map<std::string, std::size_t> names;
    std::map<std::pair<VariableType, std::uint32_t>, std::size_t> refs;
    for (std::size_t i = 0; i < descriptor.variables.size(); ++i) {
        const auto& v = descriptor.variables[i];
        const std::string path = "variables[" + std::to_string(i) + "]";
        if (!is_identifier(v.name)) throw ValidationError(path + ".name", "not an identifier");
        if (v.start && type_of(*v.start) != v.type) {
            throw ValidationError(path + ".start", "literal does not match type " + std::string(to_string(v.type)));
        }
        if (auto [it, fresh] = names.emplace(v.name, i); !fresh) {
            throw ValidationError(path + ".name", "duplicate name '" + v.name + "' (also variables[" +
                                                      std::to_string(it->second) + "])");
        }
        if (auto [it, fresh] = refs.emplace(std::pair{v.type, v.value_reference}, i); !fresh) {
            const auto& other = descriptor.variables[it->second];
            throw ValidationError(path + ".value_reference",
                                  "duplicate " + std::string(to_string(v.type)) + " value reference " +
                                      std::to_string(v.value_reference) + " shared by '" + other.name + "' and '" +
                                      v.name + "'");
        }
    }
}

ModelDescriptor parse_descriptor(std::string_view text)
{
    const json doc = parse_json(text);
    if (!doc.is_object()) throw ValidationError("", "expected a JSON object");

    ModelDescriptor out;
    out.model_name = require_string(doc, "model_name", "");
    out.instance_guid = require_string(doc, "instance_guid", "");
    const auto& vars = require(doc, "variables", "");
    if (!vars.is_array()) throw ValidationError("variables", "expected an array");

    for (std::size_t i = 0; i < vars.size(); ++i) {
        const std::string path = "variables[" + std::to_string(i) + "]";
        const auto& v = vars[i];
        if (!v.is_object()) throw ValidationError(path, "expected an object");

        ScalarVariable var;
        var.name = require_string(v, "name", path);

        const auto& vr = require(v, "value_reference", path);
        if (!vr.is_number_unsigned() || vr.get<std::uint64_t>() > std::numeric_limits<std::uint32_t>::max()) {
            throw ValidationError(path + ".value_reference", "expected an unsigned 32-bit integer");
        }
        var.value_reference = vr.get<std::uint32_t>();

        const auto type_kw = require_string(v, "type", path);
        auto type = parse_variable_type(type_kw);
        if (!type) throw ValidationError(path + ".type", "unknown type keyword '" + type_kw + "'");
        var.type = *type;

        const auto causality_kw = require_string(v, "causality", path);
        auto causality = parse_causality(causality_kw);
        if (!causality) throw ValidationError(path + ".causality", "unknown causality keyword '" + causality_kw + "'");
        var.causality = *causality;

        if (auto it = v.find("start"); it != v.end()) var.start = parse_start(*it, var.type, path + ".start");
        out.variables.push_back(std::move(var));
    }

    validate_descriptor(out);
    return out;
}

ModelDescriptor load_descriptor(const std::string& path)
{
    return parse_descriptor(read_file(path));
}

std::string serialize_descriptor(const ModelDescriptor& descriptor)
{
    json vars = json::array();
    for (const auto& v : descriptor.variables) {
        json item = {{"name", v.name},
                     {"value_reference", v.value_reference},
                     {"type", to_string(v.type)},
                     {"causality", to_string(v.causality)}};
        if (v.start) item["start"] = start_to_json(*v.start);
        vars.push_back(std::move(item));
    }
    json doc = {{"model_name", descriptor.model_name},
                {"instance_guid", descriptor.instance_guid},
                {"variables", std::move(vars)}};
    return doc.dump(2);
}

std::int64_t ScenarioConfig::step_count() const noexcept
{
    return static_cast<std::int64_t>(std::llround((end_time - start_time) / step_size));
}

std::pair<std::string, std::uint16_t> split_address(const std::string& address)
{
    const auto colon = address.rfind(':');
    if (colon == std::string::npos || colon == 0 || colon + 1 == address.size()) {
        throw ValidationError("", "address '" + address + "' is not host:port");
    }
    const auto port_text = address.substr(colon + 1);
    unsigned long port = 0;
    try {
        std::size_t used = 0;
        port = std::stoul(port_text, &used);
        if (used != port_text.size()) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
        throw ValidationError("", "address '" + address + "' has a non-numeric port");
    }
    if (port > 65535) throw ValidationError("", "address '" + address + "' port out of range");
    return {address.substr(0, colon), static_cast<std::uint16_t>(port)};
}

namespace {

VariableRef resolve_endpoint(const std::string& spec, const std::string& path, const ScenarioConfig& config)
{
    const auto dot = spec.find('.');
    if (dot == std::string::npos) throw ValidationError(path, "expected unit.variable, got '" + spec + "'");
    const auto unit_name = spec.substr(0, dot);
    const auto var_name = spec.substr(dot + 1);
    for (std::size_t u = 0; u < config.units.size(); ++u) {
        if (config.units[u].unit_name != unit_name) continue;
        const auto* var = config.descriptors[u].find(var_name);
        if (!var) throw ValidationError(path, "dangling endpoint: unit '" + unit_name + "' has no variable '" + var_name + "'");
        return VariableRef{u, unit_name, var_name, var->value_reference, var->type};
    }
    throw ValidationError(path, "dangling endpoint: no unit named '" + unit_name + "'");
}

Causality causality_of(const ScenarioConfig& config, const VariableRef& ref)
{
    return config.descriptors[ref.unit].find(ref.variable)->causality;
}

} // namespace

ScenarioConfig parse_scenario(std::string_view text, const std::map<std::string, ModelDescriptor>& descriptors)
{
    const json doc = parse_json(text);
    if (!doc.is_object()) throw ValidationError("", "expected a JSON object");

    ScenarioConfig config;
    const auto& units = require(doc, "units", "");
    if (!units.is_array() || units.empty()) throw ValidationError("units", "expected a non-empty array");

    std::set<std::string> names;
    std::set<std::string> addresses;
    for (std::size_t i = 0; i < units.size(); ++i) {
        const std::string path = "units[" + std::to_string(i) + "]";
        UnitConfig unit;
        unit.unit_name = require_string(units[i], "unit_name", path);
        unit.descriptor_path = require_string(units[i], "descriptor", path);
        unit.listen_address = require_string(units[i], "listen", path);
        unit.auth_token = require_string(units[i], "token", path);
        if (!is_identifier(unit.unit_name)) throw ValidationError(path + ".unit_name", "not an identifier");
        try {
            split_address(unit.listen_address);
        } catch (const ValidationError& e) {
            throw ValidationError(path + ".listen", e.what());
        }
        if (!names.insert(unit.unit_name).second) {
            throw ValidationError(path + ".unit_name", "duplicate unit name '" + unit.unit_name + "'");
        }
        if (!addresses.insert(unit.listen_address).second) {
            throw ValidationError(path + ".listen", "duplicate listen address '" + unit.listen_address + "'");
        }
        auto it = descriptors.find(unit.unit_name);
        if (it == descriptors.end()) throw ValidationError(path + ".descriptor", "descriptor not loaded");
        config.descriptors.push_back(it->second);
        config.units.push_back(std::move(unit));
    }

    config.step_size = require_number(doc, "step_size", "");
    config.start_time = require_number(doc, "start_time", "");
    config.end_time = require_number(doc, "end_time", "");
    if (!(config.step_size > 0.0) || !std::isfinite(config.step_size)) {
        throw ValidationError("step_size", "must be > 0");
    }
    if (!(config.end_time - config.start_time > 0.0)) {
        throw ValidationError("end_time", "must be greater than start_time");
    }
    if (config.step_count() < 1) throw ValidationError("step_size", "larger than the simulation horizon");

    const auto& rt = require(doc, "real_time", "");
    if (!rt.is_boolean()) throw ValidationError("real_time", "expected a boolean");
    config.real_time = rt.get<bool>();
    config.output_path = require_string(doc, "output_path", "");

    const auto& conns = require(doc, "connections", "");
    if (!conns.is_array()) throw ValidationError("connections", "expected an array");
    for (std::size_t i = 0; i < conns.size(); ++i) {
        const std::string path = "connections[" + std::to_string(i) + "]";
        Connection c;
        c.source = resolve_endpoint(require_string(conns[i], "source", path), path + ".source", config);
        c.target = resolve_endpoint(require_string(conns[i], "target", path), path + ".target", config);
        if (causality_of(config, c.source) != Causality::Output) {
            throw ValidationError(path + ".source", "causality mismatch: '" + c.source.qualified_name() +
                                                        "' is " + std::string(to_string(causality_of(config, c.source))) +
                                                        ", expected output");
        }
        if (causality_of(config, c.target) != Causality::Input) {
            throw ValidationError(path + ".target", "causality mismatch: '" + c.target.qualified_name() +
                                                        "' is " + std::string(to_string(causality_of(config, c.target))) +
                                                        ", expected input");
        }
        if (c.source.type != c.target.type) {
            throw ValidationError(path, "type mismatch: " + std::string(to_string(c.source.type)) + " -> " +
                                            std::string(to_string(c.target.type)));
        }
        for (const auto& prev : config.connections) {
            if (prev.target == c.target) throw ValidationError(path + ".target", "input connected twice");
        }
        config.connections.push_back(std::move(c));
    }

    if (auto it = doc.find("capture"); it != doc.end()) {
        if (!it->is_array()) throw ValidationError("capture", "expected an array");
        for (std::size_t i = 0; i < it->size(); ++i) {
            const std::string path = "capture[" + std::to_string(i) + "]";
            if (!(*it)[i].is_string()) throw ValidationError(path, "expected a string");
            auto ref = resolve_endpoint((*it)[i].get<std::string>(), path, config);
            if (causality_of(config, ref) != Causality::Output) {
                throw ValidationError(path, "only outputs can be captured");
            }
            config.captures.push_back(std::move(ref));
        }
    }
    return config;
}

ScenarioConfig load_scenario(const std::string& path)
{
    const auto text = read_file(path);
    const json doc = parse_json(text);
    const auto base = std::filesystem::path(path).parent_path();

    std::map<std::string, ModelDescriptor> descriptors;
    if (doc.is_object() && doc.contains("units") && doc["units"].is_array()) {
        for (const auto& unit : doc["units"]) {
            if (!unit.is_object() || !unit.contains("unit_name") || !unit.contains("descriptor")) continue;
            if (!unit["unit_name"].is_string() || !unit["descriptor"].is_string()) continue;
            std::filesystem::path desc = unit["descriptor"].get<std::string>();
            if (desc.is_relative()) desc = base / desc;
            descriptors.emplace(unit["unit_name"].get<std::string>(), load_descriptor(desc.string()));
        }
    }
    return parse_scenario(text, descriptors);
}

} // namespace dcosim
