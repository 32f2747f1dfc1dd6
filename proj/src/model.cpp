#include "dcosim/model.hpp"

#include "dcosim/error.hpp"

#include <algorithm>

namespace dcosim {

namespace {

ScalarValue zero_of(VariableType type)
{
    switch (type) {
    case VariableType::Real: return 0.0;
    case VariableType::Integer: return std::int32_t{0};
    case VariableType::Boolean: return false;
    case VariableType::Text: return std::string{};
    }
    return 0.0;
}

ScalarVariable var(std::string name, std::uint32_t vr, VariableType type, Causality causality,
                   std::optional<ScalarValue> start = std::nullopt)
{
    return ScalarVariable{std::move(name), vr, type, causality, std::move(start)};
}

} // namespace

StoredModel::StoredModel(ModelDescriptor descriptor) : descriptor_(std::move(descriptor))
{
    validate_descriptor(descriptor_);
    for (const auto& v : descriptor_.variables) {
        values_.emplace(std::pair{v.type, v.value_reference}, v.start.value_or(zero_of(v.type)));
    }
}

Status StoredModel::set(std::span<const std::uint32_t> vrs, const ValueArray& values)
{
    if (vrs.size() != wire::size_of(values)) return Status::Error;
    const auto type = wire::type_of(values);
    for (auto vr : vrs) {
        if (!values_.contains({type, vr})) return Status::Error;
    }
    for (std::size_t i = 0; i < vrs.size(); ++i) values_[{type, vrs[i]}] = wire::value_at(values, i);
    return Status::Ok;
}

Status StoredModel::get(VariableType type, std::span<const std::uint32_t> vrs, ValueArray& out)
{
    out = wire::empty_values(type);
    for (auto vr : vrs) {
        auto it = values_.find({type, vr});
        if (it == values_.end()) {
            out = wire::empty_values(type);
            return Status::Error;
        }
        wire::push_value(out, it->second);
    }
    return Status::Ok;
}

ScalarValue& StoredModel::slot(std::string_view name)
{
    const auto* v = descriptor_.find(name);
    if (!v) throw Error("model '" + descriptor_.model_name + "' has no variable '" + std::string(name) + "'");
    return values_.at({v->type, v->value_reference});
}

const ScalarValue& StoredModel::slot(std::string_view name) const
{
    return const_cast<StoredModel*>(this)->slot(name);
}

double StoredModel::real(std::string_view name) const { return std::get<double>(slot(name)); }
std::int32_t StoredModel::integer(std::string_view name) const { return std::get<std::int32_t>(slot(name)); }
bool StoredModel::boolean(std::string_view name) const { return std::get<bool>(slot(name)); }
const std::string& StoredModel::text(std::string_view name) const { return std::get<std::string>(slot(name)); }

void StoredModel::set_real(std::string_view name, double v) { std::get<double>(slot(name)) = v; }
void StoredModel::set_integer(std::string_view name, std::int32_t v) { std::get<std::int32_t>(slot(name)) = v; }
void StoredModel::set_boolean(std::string_view name, bool v) { std::get<bool>(slot(name)) = v; }
void StoredModel::set_text(std::string_view name, std::string v) { std::get<std::string>(slot(name)) = std::move(v); }

ModelDescriptor adder_descriptor()
{
    using T = VariableType;
    using C = Causality;
    return ModelDescriptor{
        "adder",
        "{demo1-adder-0001}",
        {
            var("real_a", 0, T::Real, C::Input, 0.0),
            var("real_b", 1, T::Real, C::Input, 0.0),
            var("real_c", 2, T::Real, C::Output),
            var("integer_a", 0, T::Integer, C::Input, std::int32_t{0}),
            var("integer_b", 1, T::Integer, C::Input, std::int32_t{0}),
            var("integer_c", 2, T::Integer, C::Output),
            var("boolean_a", 0, T::Boolean, C::Input, false),
            var("boolean_b", 1, T::Boolean, C::Input, false),
            var("boolean_c", 2, T::Boolean, C::Output),
            var("string_a", 0, T::Text, C::Input, std::string{}),
            var("string_b", 1, T::Text, C::Input, std::string{}),
            var("string_c", 2, T::Text, C::Output),
        }};
}

ModelDescriptor controller_descriptor()
{
    using T = VariableType;
    using C = Causality;
    return ModelDescriptor{"controller",
                           "{demo2-controller-0001}",
                           {
                               var("omega_meas", 0, T::Real, C::Input, 0.0),
                               var("tau_cmd", 1, T::Real, C::Output),
                               var("omega_ref", 2, T::Real, C::Parameter, 10.0),
                               var("Kp", 3, T::Real, C::Parameter, 5.0),
                               var("Ki", 4, T::Real, C::Parameter, 1.0),
                               var("tau_max", 5, T::Real, C::Parameter, 500.0),
                           }};
}

ModelDescriptor motor_descriptor()
{
    using T = VariableType;
    using C = Causality;
    return ModelDescriptor{"motor",
                           "{demo2-motor-0001}",
                           {
                               var("tau_cmd_in", 0, T::Real, C::Input, 0.0),
                               var("tau_mot", 1, T::Real, C::Output),
                               var("T_m", 2, T::Real, C::Parameter, 0.5),
                           }};
}

ModelDescriptor generator_descriptor()
{
    using T = VariableType;
    using C = Causality;
    return ModelDescriptor{"generator",
                           "{demo2-generator-0001}",
                           {
                               var("tau_in", 0, T::Real, C::Input, 0.0),
                               var("omega", 1, T::Real, C::Output),
                               var("J", 2, T::Real, C::Parameter, 10.0),
                               var("b", 3, T::Real, C::Parameter, 0.5),
                               var("c", 4, T::Real, C::Parameter, 0.5),
                           }};
}

AdderModel::AdderModel() : StoredModel(adder_descriptor()) {}

Status AdderModel::do_step(double, double)
{
    set_real("real_c", real("real_a") + real("real_b"));
    // wraps like the two's complement wire type instead of overflowing
    const auto diff = static_cast<std::uint32_t>(integer("integer_a")) - static_cast<std::uint32_t>(integer("integer_b"));
    set_integer("integer_c", static_cast<std::int32_t>(diff));
    set_boolean("boolean_c", boolean("boolean_a") && boolean("boolean_b"));
    set_text("string_c", text("string_a") + text("string_b"));
    return Status::Ok;
}

ControllerModel::ControllerModel() : StoredModel(controller_descriptor()) {}

Status ControllerModel::enter_initialization_mode()
{
    integral_e_ = 0.0;
    return Status::Ok;
}

Status ControllerModel::do_step(double, double h)
{
    const double e = real("omega_ref") - real("omega_meas");
    integral_e_ += e * h;
    const double tau_max = real("tau_max");
    const double tau = real("Kp") * e + real("Ki") * integral_e_;
    set_real("tau_cmd", std::clamp(tau, -tau_max, tau_max));
    return Status::Ok;
}

MotorModel::MotorModel() : StoredModel(motor_descriptor()) {}

Status MotorModel::do_step(double, double h)
{
    const double tau = real("tau_mot");
    set_real("tau_mot", tau + h * (real("tau_cmd_in") - tau) / real("T_m"));
    return Status::Ok;
}

GeneratorModel::GeneratorModel() : StoredModel(generator_descriptor()) {}

Status GeneratorModel::do_step(double, double h)
{
    const double omega = real("omega");
    set_real("omega", omega + h * (real("tau_in") - (real("b") + real("c")) * omega) / real("J"));
    return Status::Ok;
}

std::vector<std::string> builtin_model_names()
{
    return {"adder", "controller", "motor", "generator"};
}

std::unique_ptr<Model> make_builtin_model(std::string_view name)
{
    if (name == "adder") return std::make_unique<AdderModel>();
    if (name == "controller") return std::make_unique<ControllerModel>();
    if (name == "motor") return std::make_unique<MotorModel>();
    if (name == "generator") return std::make_unique<GeneratorModel>();
    return nullptr;
}

std::optional<ModelDescriptor> builtin_descriptor(std::string_view name)
{
    if (name == "adder") return adder_descriptor();
    if (name == "controller") return controller_descriptor();
    if (name == "motor") return motor_descriptor();
    if (name == "generator") return generator_descriptor();
    return std::nullopt;
}

} // namespace dcosim
