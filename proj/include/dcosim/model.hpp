#pragma once

#include "dcosim/descriptor.hpp"
#include "dcosim/wire.hpp"

#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace dcosim {

using wire::Status;
using wire::ValueArray;

/// Trusted-side model behaviour. Callbacks map 1:1 onto the forwarded calls.
/// Implementations need not be thread-safe: a backend calls them serially.
class Model {
public:
    virtual ~Model() = default;

    virtual const ModelDescriptor& descriptor() const = 0;

    virtual Status setup_experiment(double start_time, std::optional<double> stop_time, std::optional<double> tolerance)
    {
        (void)start_time, (void)stop_time, (void)tolerance;
        return Status::Ok;
    }
    virtual Status enter_initialization_mode() { return Status::Ok; }
    virtual Status exit_initialization_mode() { return Status::Ok; }
    virtual Status set(std::span<const std::uint32_t> vrs, const ValueArray& values) = 0;
    virtual Status get(VariableType type, std::span<const std::uint32_t> vrs, ValueArray& out) = 0;
    virtual Status do_step(double current_time, double step_size) = 0;
    virtual Status terminate() { return Status::Ok; }
};

/// Model base holding one value per declared variable, seeded from start
/// values (zero / false / empty otherwise). Unknown references yield Error.
class StoredModel : public Model {
public:
    explicit StoredModel(ModelDescriptor descriptor);

    const ModelDescriptor& descriptor() const override { return descriptor_; }
    Status set(std::span<const std::uint32_t> vrs, const ValueArray& values) override;
    Status get(VariableType type, std::span<const std::uint32_t> vrs, ValueArray& out) override;

    double real(std::string_view name) const;
    std::int32_t integer(std::string_view name) const;
    bool boolean(std::string_view name) const;
    const std::string& text(std::string_view name) const;

    void set_real(std::string_view name, double v);
    void set_integer(std::string_view name, std::int32_t v);
    void set_boolean(std::string_view name, bool v);
    void set_text(std::string_view name, std::string v);

protected:
    ScalarValue& slot(std::string_view name);
    const ScalarValue& slot(std::string_view name) const;

private:
    ModelDescriptor descriptor_;
    std::map<std::pair<VariableType, std::uint32_t>, ScalarValue> values_;
};

/// Demo 1: real_c = a + b, integer_c = a - b, boolean_c = a && b,
/// string_c = a + b. Outputs are refreshed in do_step only.
class AdderModel : public StoredModel {
public:
    AdderModel();
    Status do_step(double current_time, double step_size) override;
};

/// PI speed controller with output clamp.
class ControllerModel : public StoredModel {
public:
    ControllerModel();
    Status do_step(double current_time, double step_size) override;
    Status enter_initialization_mode() override;
    double integral_error() const noexcept { return integral_e_; }

private:
    double integral_e_ = 0.0;
};

/// First-order torque lag, explicit Euler.
class MotorModel : public StoredModel {
public:
    MotorModel();
    Status do_step(double current_time, double step_size) override;
};

/// Rotational inertia with speed-proportional friction and load, explicit Euler.
class GeneratorModel : public StoredModel {
public:
    GeneratorModel();
    Status do_step(double current_time, double step_size) override;
};

ModelDescriptor adder_descriptor();
ModelDescriptor controller_descriptor();
ModelDescriptor motor_descriptor();
ModelDescriptor generator_descriptor();

/// Registry keys: adder, controller, motor, generator.
std::vector<std::string> builtin_model_names();
/// nullptr for an unknown key.
std::unique_ptr<Model> make_builtin_model(std::string_view name);
std::optional<ModelDescriptor> builtin_descriptor(std::string_view name);

} // namespace dcosim
