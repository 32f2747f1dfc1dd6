// Python bindings: descriptor parsing, wire encode/decode, the reference
// simulation, timing reports and an in-process Demo 1.

#include "dcosim/backend.hpp"
#include "dcosim/error.hpp"
#include "dcosim/master.hpp"
#include "dcosim/metrics.hpp"
#include "dcosim/model.hpp"
#include "dcosim/proxy.hpp"
#include "dcosim/reference.hpp"
#include "dcosim/wire.hpp"

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <future>

namespace py = pybind11;
using namespace dcosim;
using wire::MessageKind;

namespace {

py::object json_loads(const std::string& text) { return py::module_::import("json").attr("loads")(text); }

MessageKind kind_from_name(const std::string& name)
{
    if (name == wire::to_string(MessageKind::Handshake)) return MessageKind::Handshake;
    for (auto k : wire::kCallKinds)
        if (name == wire::to_string(k)) return k;
    throw py::value_error("unknown message kind '" + name + "'");
}

py::object scalar_to_py(const ScalarValue& v)
{
    return std::visit([](const auto& x) -> py::object { return py::cast(x); }, v);
}

py::list values_to_py(const wire::ValueArray& values)
{
    py::list out;
    for (std::size_t i = 0; i < wire::size_of(values); ++i) out.append(scalar_to_py(wire::value_at(values, i)));
    return out;
}

wire::ValueArray values_from_py(VariableType type, const py::handle& seq)
{
    switch (type) {
    case VariableType::Real: return seq.cast<std::vector<double>>();
    case VariableType::Integer: return seq.cast<std::vector<std::int32_t>>();
    case VariableType::Boolean: return seq.cast<std::vector<bool>>();
    case VariableType::Text: return seq.cast<std::vector<std::string>>();
    }
    throw py::value_error("bad variable type");
}

template <typename T>
T get_or(const py::dict& d, const char* key, T fallback)
{
    return d.contains(key) ? d[key].cast<T>() : fallback;
}

std::optional<double> optional_real(const py::dict& d, const char* key)
{
    if (!d.contains(key) || d[key].is_none()) return std::nullopt;
    return d[key].cast<double>();
}

wire::Message message_from_py(const py::dict& d)
{
    const auto kind = kind_from_name(d["kind"].cast<std::string>());
    if (get_or(d, "reply", false)) {
        const auto status = static_cast<wire::Status>(get_or<int>(d, "status", 0));
        if (wire::is_get_kind(kind)) {
            return wire::make_values_reply(kind, status,
                                           d.contains("values") ? values_from_py(wire::data_type(kind), d["values"])
                                                                : wire::empty_values(wire::data_type(kind)));
        }
        return wire::make_status_reply(kind, status);
    }
    switch (kind) {
    case MessageKind::Handshake:
        return wire::make_request(kind, wire::Handshake{get_or<std::uint16_t>(d, "protocol_version", wire::kProtocolVersion),
                                                        d["instance_name"].cast<std::string>(),
                                                        d["auth_token"].cast<std::string>()});
    case MessageKind::SetupExperiment:
        return wire::make_request(kind, wire::SetupExperiment{get_or(d, "start_time", 0.0), optional_real(d, "stop_time"),
                                                              optional_real(d, "tolerance")});
    case MessageKind::DoStep:
        return wire::make_request(kind, wire::DoStep{d["current_time"].cast<double>(), d["step_size"].cast<double>()});
    default: break;
    }
    if (wire::is_set_kind(kind)) {
        return wire::make_request(kind, wire::SetValues{d["vrs"].cast<std::vector<std::uint32_t>>(),
                                                        values_from_py(wire::data_type(kind), d["values"])});
    }
    if (wire::is_get_kind(kind)) return wire::make_request(kind, wire::GetValues{d["vrs"].cast<std::vector<std::uint32_t>>()});
    return wire::make_request(kind);
}

py::dict message_to_py(const wire::Message& m)
{
    py::dict d;
    d["kind"] = std::string(wire::to_string(m.kind()));
    d["reply"] = m.is_reply();
    std::visit(
        [&](const auto& b) {
            using B = std::decay_t<decltype(b)>;
            if constexpr (std::is_same_v<B, wire::Handshake>) {
                d["protocol_version"] = b.protocol_version;
                d["instance_name"] = b.instance_name;
                d["auth_token"] = b.auth_token;
            } else if constexpr (std::is_same_v<B, wire::SetupExperiment>) {
                d["start_time"] = b.start_time;
                d["stop_time"] = b.stop_time;
                d["tolerance"] = b.tolerance;
            } else if constexpr (std::is_same_v<B, wire::DoStep>) {
                d["current_time"] = b.current_time;
                d["step_size"] = b.step_size;
            } else if constexpr (std::is_same_v<B, wire::SetValues>) {
                d["vrs"] = b.vrs;
                d["values"] = values_to_py(b.values);
            } else if constexpr (std::is_same_v<B, wire::GetValues>) {
                d["vrs"] = b.vrs;
            } else if constexpr (std::is_same_v<B, wire::StatusReply>) {
                d["status"] = static_cast<int>(b.status);
            } else if constexpr (std::is_same_v<B, wire::ValuesReply>) {
                d["status"] = static_cast<int>(b.status);
                d["values"] = values_to_py(b.values);
            }
        },
        m.body);
    return d;
}

py::bytes encode(const py::dict& message)
{
    const auto bytes = wire::encode_message(message_from_py(message));
    return py::bytes(reinterpret_cast<const char*>(bytes.data()), bytes.size());
}

py::object decode(const py::bytes& data)
{
    const std::string_view view = data;
    const auto result = wire::decode_message(std::span(reinterpret_cast<const std::byte*>(view.data()), view.size()));
    if (std::holds_alternative<wire::Incomplete>(result)) return py::none();
    const auto& decoded = std::get<wire::Decoded>(result);
    return py::make_tuple(message_to_py(decoded.message), decoded.consumed);
}

py::dict trajectory_to_py(const master::Trajectory& t)
{
    py::list steps, times, rows;
    for (const auto& r : t.rows) {
        steps.append(r.step);
        times.append(r.time);
        py::list values;
        for (const auto& v : r.values) values.append(scalar_to_py(v));
        rows.append(values);
    }
    py::dict d;
    d["columns"] = t.columns;
    d["steps"] = steps;
    d["times"] = times;
    d["values"] = rows;
    return d;
}

metrics::RunMode mode_from_name(const std::string& name)
{
    const auto mode = metrics::parse_run_mode(name);
    if (!mode) throw py::value_error("mode must be 'fast' or 'real-time', got '" + name + "'");
    return *mode;
}

py::object finalize(const std::vector<double>& durations, double step_size, const std::string& mode,
                    const std::vector<bool>& overruns)
{
    if (!overruns.empty() && overruns.size() != durations.size())
        throw py::value_error("overruns must be empty or match durations");
    std::vector<metrics::TimingRecord> records;
    for (std::size_t i = 0; i < durations.size(); ++i)
        records.push_back({static_cast<std::int64_t>(i), durations[i], !overruns.empty() && overruns[i]});
    return json_loads(metrics::finalize_report(records, step_size, mode_from_name(mode)).to_json());
}

py::dict run_demo1(std::int64_t iterations, double step_size, const std::string& mode, int delay_ms)
{
    master::Demo1Options o;
    o.address = "127.0.0.1:0";
    o.token = "s3cret";
    o.iterations = iterations;
    o.step_size = step_size;
    o.mode = mode_from_name(mode);
    std::future<backend::ExitReport> served;
    master::RunResult result;
    {
        py::gil_scoped_release release;
        o.on_listening = [&](const std::string& addr) {
            backend::BackendConfig cfg;
            cfg.proxy_address = addr;
            cfg.instance_name = "adder";
            cfg.auth_token = o.token;
            cfg.reply_delay = std::chrono::milliseconds(delay_ms);
            served = std::async(std::launch::async, [cfg] {
                auto model = make_builtin_model("adder");
                return backend::connect_and_serve(*model, cfg);
            });
        };
        try {
            result = master::scripted_run_demo1(o);
        } catch (...) {
            if (served.valid()) served.wait();
            throw;
        }
    }
    const auto report = served.get();
    py::dict d = trajectory_to_py(result.trajectory);
    d["timing"] = result.report ? json_loads(result.report->to_json()) : py::none();
    d["backend"] = json_loads(report.to_json());
    return d;
}

} // namespace

PYBIND11_MODULE(_dcosim, m)
{
    m.doc() = "Distributed co-simulation core";

    // exception classes live for the interpreter's lifetime; handles are leaked on purpose
    auto make = [&m](const char* name, PyObject* bases) {
        const std::string qualified = std::string("dcosim._dcosim.") + name;
        PyObject* cls = PyErr_NewException(qualified.c_str(), bases, nullptr);
        if (!cls) throw py::error_already_set();
        m.add_object(name, py::handle(cls));
        return cls;
    };
    static PyObject* base = make("Error", PyExc_RuntimeError);
    static PyObject* validation = make("ValidationError", py::make_tuple(py::handle(base), py::handle(PyExc_ValueError)).release().ptr());
    static PyObject* protocol = make("ProtocolError", base);
    static PyObject* timeout = make("TimeoutError", base);
    static PyObject* connection = make("ConnectionError", base);
    static PyObject* auth = make("AuthenticationError", base);
    py::register_exception_translator([](std::exception_ptr p) {
        try {
            if (p) std::rethrow_exception(p);
        } catch (const ValidationError& e) {
            py::object err = py::handle(validation)(e.what());
            err.attr("path") = e.path();
            PyErr_SetObject(validation, err.ptr());
        } catch (const ProtocolError& e) {
            PyErr_SetString(protocol, e.what());
        } catch (const TimeoutError& e) {
            PyErr_SetString(timeout, e.what());
        } catch (const ConnectionError& e) {
            PyErr_SetString(connection, e.what());
        } catch (const AuthenticationError& e) {
            PyErr_SetString(auth, e.what());
        } catch (const Error& e) {
            PyErr_SetString(base, e.what());
        }
    });

    m.def(
        "parse_descriptor", [](const std::string& text) { return json_loads(serialize_descriptor(parse_descriptor(text))); },
        py::arg("text"), "Validates a descriptor document and returns its normalized form.");
    m.def("builtin_models", &builtin_model_names);
    m.def(
        "builtin_descriptor",
        [](const std::string& name) {
            const auto d = builtin_descriptor(name);
            if (!d) throw py::value_error("no built-in model '" + name + "'");
            return json_loads(serialize_descriptor(*d));
        },
        py::arg("name"));

    m.def("encode", &encode, py::arg("message"), "Encodes one message dict into a frame.");
    m.def("decode", &decode, py::arg("data"),
          "Decodes the frame at the front of `data`: (message, consumed), or None when more bytes are needed.");
    m.def(
        "is_legal",
        [](const std::string& state, const std::string& kind) {
            for (auto s : proxy::kAllStates)
                if (state == proxy::to_string(s)) return proxy::is_legal(s, kind_from_name(kind));
            throw py::value_error("unknown state '" + state + "'");
        },
        py::arg("state"), py::arg("kind"));

    m.def(
        "reference_simulation",
        [](double step_size, double end_time) { return trajectory_to_py(run_reference_simulation(step_size, end_time)); },
        py::arg("step_size") = 0.1, py::arg("end_time") = 50.0, "Demo 2 plant run in process, no sockets.");
    m.def("finalize_report", &finalize, py::arg("durations"), py::arg("step_size"), py::arg("mode") = "fast",
          py::arg("overruns") = std::vector<bool>{});
    m.def("run_demo1", &run_demo1, py::arg("iterations") = 1000, py::arg("step_size") = 0.01, py::arg("mode") = "fast",
          py::arg("delay_ms") = 0, "Demo 1 over loopback with the adder backend on a thread.");
}
