#pragma once

// JSON interchange (format_version "1"): complex numbers as [re, im],
// matrices as row-major arrays of rows, manifests tagged with a kind.

#include "cqm/dilation.hpp"
#include "cqm/instrument.hpp"
#include "cqm/matrix.hpp"
#include "cqm/montecarlo.hpp"
#include "cqm/povm.hpp"
#include "cqm/sequential.hpp"

#include <json.hpp>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

namespace cqm {

using Json = nlohmann::json;

inline constexpr const char* kFormatVersion = "1";

class ParseError : public std::runtime_error {
public:
    explicit ParseError(const std::string& what) : std::runtime_error(what) {}
};

// ---- primitives ----

inline Json complex_to_json(const Complex& z) {
    return Json::array({z.real(), z.imag()});
}

inline Complex complex_from_json(const Json& j) {
    if (!j.is_array() || j.size() != 2 || !j[0].is_number() || !j[1].is_number())
        throw ParseError("complex number must be [re, im]");
    return {j[0].get<double>(), j[1].get<double>()};
}

inline Json matrix_to_json(const Matrix& m) {
    Json rows = Json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        Json row = Json::array();
        for (Eigen::Index j = 0; j < m.cols(); ++j)
            row.push_back(complex_to_json(m(i, j)));
        rows.push_back(std::move(row));
    }
    return rows;
}

inline Matrix matrix_from_json(const Json& j) {
    if (!j.is_array() || j.empty())
        throw ParseError("matrix must be a non-empty array of rows");
    const std::size_t cols = j[0].is_array() ? j[0].size() : 0;
    if (cols == 0)
        throw ParseError("matrix rows must be non-empty arrays");
    Matrix m(j.size(), cols);
    for (std::size_t i = 0; i < j.size(); ++i) {
        if (!j[i].is_array() || j[i].size() != cols)
            throw ParseError("matrix rows have inconsistent lengths");
        for (std::size_t c = 0; c < cols; ++c)
            m(i, c) = complex_from_json(j[i][c]);
    }
    if (!is_finite(m))
        throw ParseError("matrix has non-finite entries");
    return m;
}

inline Json vector_to_json(const Vector& v) {
    Json out = Json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i)
        out.push_back(complex_to_json(v(i)));
    return out;
}

inline Vector vector_from_json(const Json& j) {
    if (!j.is_array() || j.empty())
        throw ParseError("vector must be a non-empty array");
    Vector v(j.size());
    for (std::size_t i = 0; i < j.size(); ++i)
        v(i) = complex_from_json(j[i]);
    return v;
}

// ---- domain objects ----

inline Json to_json(const DiscretePOVM& povm) {
    Json out{{"dim", povm.dim}};
    Json outcomes = Json::array();
    for (const auto& o : povm.outcomes)
        outcomes.push_back({{"label", o.label}, {"effect", matrix_to_json(o.effect)}});
    out["outcomes"] = std::move(outcomes);
    return out;
}

inline DiscretePOVM povm_from_json(const Json& j) {
    if (!j.contains("dim") || !j.contains("outcomes") || !j["outcomes"].is_array())
        throw ParseError("POVM needs \"dim\" and \"outcomes\"");
    DiscretePOVM povm;
    povm.dim = j["dim"].get<int>();
    for (const auto& o : j["outcomes"]) {
        if (!o.contains("label") || !o.contains("effect"))
            throw ParseError("POVM outcome needs \"label\" and \"effect\"");
        povm.outcomes.push_back({o["label"].get<std::string>(), matrix_from_json(o["effect"])});
    }
    return povm;
}

inline Json to_json(const RefinedPOVM& refined) {
    Json out{{"dim", refined.dim}};
    Json entries = Json::array();
    for (const auto& e : refined.entries)
        entries.push_back({{"label", e.label},
                           {"k", e.k},
                           {"d", vector_to_json(e.d)},
                           {"g", vector_to_json(e.g)}});
    out["entries"] = std::move(entries);
    return out;
}

inline RefinedPOVM refined_povm_from_json(const Json& j) {
    if (!j.contains("dim") || !j.contains("entries") || !j["entries"].is_array())
        throw ParseError("refined POVM needs \"dim\" and \"entries\"");
    RefinedPOVM refined;
    refined.dim = j["dim"].get<int>();
    for (const auto& e : j["entries"]) {
        if (!e.contains("label") || !e.contains("k") || !e.contains("d") || !e.contains("g"))
            throw ParseError("refined entry needs \"label\", \"k\", \"d\", \"g\"");
        refined.entries.push_back({e["label"].get<std::string>(), e["k"].get<int>(),
                                   vector_from_json(e["d"]), vector_from_json(e["g"])});
    }
    return refined;
}

inline Json to_json(const Instrument& inst) {
    Json out{{"dim", inst.dim}};
    Json outcomes = Json::array();
    for (const auto& o : inst.outcomes) {
        Json kraus = Json::array();
        for (const auto& a : o.kraus)
            kraus.push_back(matrix_to_json(a));
        outcomes.push_back({{"label", o.label}, {"kraus", std::move(kraus)}});
    }
    out["outcomes"] = std::move(outcomes);
    return out;
}

inline Instrument instrument_from_json(const Json& j) {
    if (!j.contains("dim") || !j.contains("outcomes") || !j["outcomes"].is_array())
        throw ParseError("instrument needs \"dim\" and \"outcomes\"");
    Instrument inst;
    inst.dim = j["dim"].get<int>();
    for (const auto& o : j["outcomes"]) {
        if (!o.contains("label") || !o.contains("kraus") || !o["kraus"].is_array())
            throw ParseError("instrument outcome needs \"label\" and \"kraus\"");
        InstrumentOutcome outcome;
        outcome.label = o["label"].get<std::string>();
        for (const auto& a : o["kraus"])
            outcome.kraus.push_back(matrix_from_json(a));
        inst.outcomes.push_back(std::move(outcome));
    }
    return inst;
}

inline Json to_json(const MeasurementModel& model) {
    Json blocks = Json::object();
    for (const auto& [label, idx] : model.pointer_blocks)
        blocks[label] = idx;
    Json out{{"system_dim", model.system_dim},
             {"ancilla_dim", model.ancilla_dim},
             {"pointer_blocks", std::move(blocks)},
             {"xi", vector_to_json(model.xi)},
             {"U", matrix_to_json(model.U)}};
    if (model.source)
        out["instrument"] = to_json(*model.source);
    return out;
}

inline MeasurementModel model_from_json(const Json& j) {
    for (const char* field : {"system_dim", "ancilla_dim", "pointer_blocks", "xi", "U"})
        if (!j.contains(field))
            throw ParseError(std::string("model needs \"") + field + "\"");
    MeasurementModel model;
    model.system_dim = j["system_dim"].get<int>();
    model.ancilla_dim = j["ancilla_dim"].get<int>();
    for (const auto& [label, idx] : j["pointer_blocks"].items())
        model.pointer_blocks.emplace_back(label, idx.get<std::vector<int>>());
    // JSON objects lose insertion order; recover block order from indices
    std::sort(model.pointer_blocks.begin(), model.pointer_blocks.end(),
              [](const auto& a, const auto& b) {
                  return (a.second.empty() ? -1 : a.second.front()) <
                         (b.second.empty() ? -1 : b.second.front());
              });
    model.xi = vector_from_json(j["xi"]);
    model.U = matrix_from_json(j["U"]);
    if (j.contains("instrument"))
        model.source = instrument_from_json(j["instrument"]);
    return model;
}

inline Json to_json(const JointInstrument& joint) {
    Json out{{"dim", joint.dim}};
    Json outcomes = Json::array();
    for (const auto& o : joint.outcomes) {
        Json kraus = Json::array();
        for (const auto& a : o.kraus)
            kraus.push_back(matrix_to_json(a));
        outcomes.push_back(
            {{"label1", o.first}, {"label2", o.second}, {"kraus", std::move(kraus)}});
    }
    out["outcomes"] = std::move(outcomes);
    return out;
}

inline JointInstrument joint_from_json(const Json& j) {
    if (!j.contains("dim") || !j.contains("outcomes") || !j["outcomes"].is_array())
        throw ParseError("joint instrument needs \"dim\" and \"outcomes\"");
    JointInstrument joint;
    joint.dim = j["dim"].get<int>();
    for (const auto& o : j["outcomes"]) {
        if (!o.contains("label1") || !o.contains("label2") || !o.contains("kraus"))
            throw ParseError("joint outcome needs \"label1\", \"label2\", \"kraus\"");
        JointOutcome outcome;
        outcome.first = o["label1"].get<std::string>();
        outcome.second = o["label2"].get<std::string>();
        for (const auto& a : o["kraus"])
            outcome.kraus.push_back(matrix_from_json(a));
        joint.outcomes.push_back(std::move(outcome));
    }
    return joint;
}

// Multiplicity PVM file: projections N_1..N_K plus optional phi vectors;
// when absent, phi_k defaults to the top eigenvector of N_k.
struct MultiplicitySpec {
    MultiplicityPVM pvm;
    std::vector<Vector> phis;
};

inline Json to_json(const MultiplicitySpec& spec) {
    Json projections = Json::array();
    for (const auto& n : spec.pvm.projections)
        projections.push_back(matrix_to_json(n));
    Json phis = Json::array();
    for (const auto& phi : spec.phis)
        phis.push_back(vector_to_json(phi));
    return Json{{"dim", spec.pvm.dim},
                {"projections", std::move(projections)},
                {"phi", std::move(phis)}};
}

inline MultiplicitySpec multiplicity_from_json(const Json& j) {
    if (!j.contains("dim") || !j.contains("projections") || !j["projections"].is_array())
        throw ParseError("multiplicity PVM needs \"dim\" and \"projections\"");
    MultiplicitySpec spec;
    const int dim = j["dim"].get<int>();
    std::vector<Matrix> projections;
    for (const auto& n : j["projections"])
        projections.push_back(matrix_from_json(n));
    spec.pvm = validate_multiplicity_pvm(dim, projections);
    if (j.contains("phi")) {
        for (const auto& phi : j["phi"])
            spec.phis.push_back(vector_from_json(phi));
    } else {
        for (const auto& n : spec.pvm.projections) {
            const auto eig = hermitian_eig(n);
            spec.phis.push_back(eig.eigenvectors.col(0));
        }
    }
    return spec;
}

inline Json to_json(const ChainSpec& spec) {
    Json stages = Json::array();
    for (const auto& stage : spec.stages)
        stages.push_back(to_json(stage));
    return Json{{"initial", matrix_to_json(spec.initial)},
                {"stages", std::move(stages)},
                {"trials", spec.trials},
                {"seed", spec.seed}};
}

inline ChainSpec chain_from_json(const Json& j) {
    if (!j.contains("initial") || !j.contains("stages") || !j["stages"].is_array())
        throw ParseError("chain needs \"initial\" and \"stages\"");
    ChainSpec spec;
    spec.initial = matrix_from_json(j["initial"]);
    for (const auto& stage : j["stages"])
        spec.stages.push_back(instrument_from_json(stage));
    spec.trials = j.value("trials", std::int64_t{1});
    spec.seed = j.value("seed", std::uint64_t{0});
    return spec;
}

// ---- manifests ----

inline Json wrap_manifest(const std::string& kind, Json payload) {
    payload["format_version"] = kFormatVersion;
    payload["kind"] = kind;
    return payload;
}

inline std::pair<std::string, Json> read_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in)
        throw ParseError("cannot open " + path);
    Json j;
    try {
        in >> j;
    } catch (const Json::exception& e) {
        throw ParseError(path + ": " + e.what());
    }
    if (!j.is_object() || !j.contains("format_version") || !j.contains("kind"))
        throw ParseError(path + ": manifest needs \"format_version\" and \"kind\"");
    if (j["format_version"].get<std::string>() != kFormatVersion)
        throw ParseError(path + ": unrecognized format_version");
    return {j["kind"].get<std::string>(), j};
}

// Atomic write: temp file in the same directory, then rename.
inline void write_manifest(const std::string& path, const Json& j) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp);
        if (!out)
            throw Error("IoError", "cannot write " + tmp);
        out << j.dump(2) << '\n';
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0)
        throw Error("IoError", "cannot rename " + tmp + " to " + path);
}

}  // namespace cqm
