#include "mechlin/systemio.hpp"

#include "json.hpp"
#include "mechlin/parse.hpp"

#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <utility>

namespace mechlin {

namespace {

using Json = nlohmann::ordered_json;

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FileFormatError(path + ": cannot open file");
    std::ostringstream buf;
    buf << in.rdbuf();
    return std::move(buf).str();
}

std::string line_column(const std::string& text, std::size_t offset) {
    std::size_t line = 1, col = 1;
    for (std::size_t i = 0; i < offset && i < text.size(); ++i) {
        if (text[i] == '\n') {
            ++line;
            col = 1;
        } else {
            ++col;
        }
    }
    return "line " + std::to_string(line) + ", column " + std::to_string(col);
}

Json parse_json(const std::string& text, const std::string& origin) {
    try {
        return Json::parse(text);
    } catch (const nlohmann::json::parse_error& err) {
        // err.byte is one past the offending byte
        const std::size_t at = err.byte > 0 ? err.byte - 1 : 0;
        throw FileFormatError(origin + ": " + line_column(text, at) + ": " + err.what());
    }
}

[[noreturn]] void fail(const std::string& origin, const std::string& what) {
    throw FileFormatError(origin + ": " + what);
}

ExprPtr parse_field(const std::string& text, const std::string& origin, const std::string& where,
                    const FnRegistry& fns = {}) {
    try {
        return parse_expr(text, fns);
    } catch (const ParseError& err) {
        fail(origin, where + ": " + err.what() + " at offset " +
                         std::to_string(err.position) + " in \"" + text + "\"");
    }
}

const Json& require_key(const Json& obj, const char* key, const std::string& origin) {
    const auto it = obj.find(key);
    if (it == obj.end()) fail(origin, std::string("missing required field \"") + key + "\"");
    return *it;
}

// Shortest round-trip rendering for canonical strings and text reports.
std::string number_text(double v) {
    return Json(v).dump();
}

std::string hex16(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016" PRIx64, v);
    return buf;
}

std::uint64_t fnv1a64(const std::string& s) {
    std::uint64_t h = 1469598103934665603ULL;
    for (const unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

std::string canonical(const ExprPtr& f) { return to_string(simplify(f)); }

Json gamma_entries(const SymExprMatrix& m, int i) {
    Json out = Json::array();
    for (int j = 1; j <= m.dim(); ++j)
        for (int k = j; k <= m.dim(); ++k)
            if (!is_zero(m.at(j, k)))
                out.push_back(
                    {{"i", i}, {"j", j}, {"k", k}, {"expr", canonical(m.at(j, k))}});
    return out;
}

// Collect the numeric tables referenced by NumFn nodes anywhere under f.
void collect_tables(const ExprPtr& f,
                    std::map<std::string, std::shared_ptr<const UnivariateFn>>& out) {
    if (!f) return;
    if (f->kind == ExprKind::NumFn && f->fn) {
        const auto [it, fresh] = out.emplace(f->fn->name, f->fn);
        if (!fresh && it->second != f->fn)
            throw FileFormatError("artifact: two distinct numeric tables share the name \"" +
                                  f->fn->name + "\"");
    }
    for (const auto& kid : f->kids) collect_tables(kid, out);
}

Json matrix_rows(const Eigen::MatrixXd& m) {
    Json rows = Json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        Json row = Json::array();
        for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
        rows.push_back(std::move(row));
    }
    return rows;
}

Json vector_items(const Eigen::VectorXd& v) {
    Json items = Json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) items.push_back(v(i));
    return items;
}

Eigen::MatrixXd rows_to_matrix(const Json& rows, Eigen::Index n, const std::string& origin,
                               const std::string& where) {
    if (!rows.is_array() || static_cast<Eigen::Index>(rows.size()) != n)
        fail(origin, where + ": expected " + std::to_string(n) + " rows");
    Eigen::MatrixXd m(n, n);
    for (Eigen::Index r = 0; r < n; ++r) {
        const auto& row = rows[static_cast<std::size_t>(r)];
        if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != n)
            fail(origin, where + ": expected " + std::to_string(n) + " numbers per row");
        for (Eigen::Index c = 0; c < n; ++c) {
            const auto& cell = row[static_cast<std::size_t>(c)];
            if (!cell.is_number()) fail(origin, where + ": non-numeric entry");
            m(r, c) = cell.get<double>();
        }
    }
    return m;
}

Eigen::VectorXd items_to_vector(const Json& items, Eigen::Index n, const std::string& origin,
                                const std::string& where) {
    if (!items.is_array() || static_cast<Eigen::Index>(items.size()) != n)
        fail(origin, where + ": expected " + std::to_string(n) + " numbers");
    Eigen::VectorXd v(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& cell = items[static_cast<std::size_t>(i)];
        if (!cell.is_number()) fail(origin, where + ": non-numeric entry");
        v(i) = cell.get<double>();
    }
    return v;
}

std::vector<double> items_to_doubles(const Json& items, const std::string& origin,
                                     const std::string& where) {
    if (!items.is_array()) fail(origin, where + ": expected an array of numbers");
    std::vector<double> v;
    v.reserve(items.size());
    for (const auto& cell : items) {
        if (!cell.is_number()) fail(origin, where + ": non-numeric entry");
        v.push_back(cell.get<double>());
    }
    return v;
}

Json witness_json(const Point& w) {
    Json out = Json::object();
    out["x"] = vector_items(w.x);
    if (w.y) out["y"] = vector_items(*w.y);
    return out;
}

}  // namespace

MechanicalSystem load_system(const std::string& path) {
    return load_system_text(read_file(path), path);
}

MechanicalSystem load_system_text(const std::string& text, const std::string& origin) {
    const Json doc = parse_json(text, origin);
    if (!doc.is_object()) fail(origin, "top level must be a JSON object");

    const Json& jn = require_key(doc, "n", origin);
    if (!jn.is_number_integer() || jn.get<int>() < 2)
        fail(origin, "\"n\" must be an integer >= 2");
    const int n = jn.get<int>();

    ParamMap params;
    if (const auto it = doc.find("params"); it != doc.end()) {
        if (!it->is_object()) fail(origin, "\"params\" must be an object of numbers");
        for (const auto& [key, val] : it->items()) {
            if (!val.is_number()) fail(origin, "params." + key + ": expected a number");
            params[key] = val.get<double>();
        }
    }

    std::vector<SymExprMatrix> gamma(static_cast<std::size_t>(n), SymExprMatrix(n));
    if (const auto it = doc.find("gamma"); it != doc.end()) {
        if (!it->is_array()) fail(origin, "\"gamma\" must be a list of {i, j, k, expr} entries");
        std::set<std::array<int, 3>> seen;
        for (std::size_t idx = 0; idx < it->size(); ++idx) {
            const auto& entry = (*it)[idx];
            const std::string where = "gamma[" + std::to_string(idx) + "]";
            if (!entry.is_object()) fail(origin, where + ": expected an object");
            int ijk[3];
            const char* names[3] = {"i", "j", "k"};
            for (int t = 0; t < 3; ++t) {
                const Json& v = require_key(entry, names[t], origin);
                if (!v.is_number_integer() || v.get<int>() < 1 || v.get<int>() > n)
                    fail(origin, where + "." + names[t] + ": expected an integer in 1.." +
                                     std::to_string(n));
                ijk[t] = v.get<int>();
            }
            if (ijk[1] > ijk[2])
                fail(origin, where + ": lower indices must satisfy j <= k");
            if (!seen.insert({ijk[0], ijk[1], ijk[2]}).second)
                fail(origin, where + ": duplicate entry for (i, j, k)");
            const Json& je = require_key(entry, "expr", origin);
            if (!je.is_string()) fail(origin, where + ".expr: expected a string");
            gamma[static_cast<std::size_t>(ijk[0] - 1)].set(
                ijk[1], ijk[2], parse_field(je.get<std::string>(), origin, where + ".expr"));
        }
    }

    const auto load_field = [&](const char* key) {
        const Json& arr = require_key(doc, key, origin);
        if (!arr.is_array() || static_cast<int>(arr.size()) != n)
            fail(origin, std::string("\"") + key + "\" must list exactly " + std::to_string(n) +
                             " expression strings");
        VecField field;
        for (std::size_t i = 0; i < arr.size(); ++i) {
            const std::string where = std::string(key) + "[" + std::to_string(i) + "]";
            if (!arr[i].is_string()) fail(origin, where + ": expected a string");
            field.push_back(parse_field(arr[i].get<std::string>(), origin, where));
        }
        return field;
    };
    VecField e = load_field("e");
    VecField g = load_field("g");

    const Json& jd = require_key(doc, "domain", origin);
    if (!jd.is_array() || static_cast<int>(jd.size()) != n)
        fail(origin, "\"domain\" must list exactly " + std::to_string(n) + " [lo, hi] pairs");
    Box domain;
    for (std::size_t i = 0; i < jd.size(); ++i) {
        const auto& pair = jd[i];
        const std::string where = "domain[" + std::to_string(i) + "]";
        if (!pair.is_array() || pair.size() != 2 || !pair[0].is_number() || !pair[1].is_number())
            fail(origin, where + ": expected [lo, hi]");
        const double lo = pair[0].get<double>(), hi = pair[1].get<double>();
        if (!(lo < hi)) fail(origin, where + ": lo must be strictly below hi");
        domain.push_back({lo, hi});
    }

    std::string name;
    if (const auto it = doc.find("name"); it != doc.end()) {
        if (!it->is_string()) fail(origin, "\"name\" must be a string");
        name = it->get<std::string>();
    }

    try {
        return MechanicalSystem(n, std::move(gamma), std::move(e), std::move(g),
                                std::move(domain), std::move(params), std::move(name));
    } catch (const std::invalid_argument& err) {
        fail(origin, err.what());
    }
}

std::string system_to_json(const MechanicalSystem& sys) {
    const int n = sys.dim();
    Json doc = Json::object();
    doc["n"] = n;
    if (!sys.name().empty()) doc["name"] = sys.name();
    doc["params"] = Json::object();
    for (const auto& [key, val] : sys.params()) doc["params"][key] = val;
    Json gamma = Json::array();
    for (int i = 1; i <= n; ++i)
        for (auto& entry : gamma_entries(sys.christoffel_matrix(i), i))
            gamma.push_back(std::move(entry));
    doc["gamma"] = std::move(gamma);
    Json e = Json::array(), g = Json::array();
    for (int i = 0; i < n; ++i) {
        e.push_back(canonical(sys.drift()[static_cast<std::size_t>(i)]));
        g.push_back(canonical(sys.control()[static_cast<std::size_t>(i)]));
    }
    doc["e"] = std::move(e);
    doc["g"] = std::move(g);
    Json domain = Json::array();
    for (const auto& pair : sys.domain()) domain.push_back({pair[0], pair[1]});
    doc["domain"] = std::move(domain);
    return doc.dump(2) + "\n";
}

std::uint64_t system_fingerprint(const MechanicalSystem& sys) {
    const int n = sys.dim();
    std::ostringstream s;
    s << "n=" << n << ";";
    for (const auto& [key, val] : sys.params()) s << "p:" << key << "=" << number_text(val) << ";";
    for (const auto& pair : sys.domain())
        s << "d:" << number_text(pair[0]) << "," << number_text(pair[1]) << ";";
    for (int i = 1; i <= n; ++i)
        for (int j = 1; j <= n; ++j)
            for (int k = j; k <= n; ++k)
                if (!is_zero(sys.christoffel(i, j, k)))
                    s << "G" << i << "," << j << "," << k << "="
                      << canonical(sys.christoffel(i, j, k)) << ";";
    for (int i = 0; i < n; ++i) s << "e" << i << "=" << canonical(sys.drift()[static_cast<std::size_t>(i)]) << ";";
    for (int i = 0; i < n; ++i) s << "g" << i << "=" << canonical(sys.control()[static_cast<std::size_t>(i)]) << ";";
    return fnv1a64(std::move(s).str());
}

std::string artifact_to_json(const Linearization& lin, const MechanicalSystem& sys) {
    const int n = sys.dim();
    Json doc = Json::object();
    doc["format"] = "mechlin-artifact-v1";
    Json about = Json::object();
    about["name"] = sys.name();
    about["n"] = n;
    about["fingerprint"] = hex16(system_fingerprint(sys));
    doc["system"] = std::move(about);

    Json output = Json::object();
    output["h"] = canonical(lin.output.h);
    output["annihilation_residual"] = lin.output.annihilation_residual;
    output["transversality_margin"] = lin.output.transversality_margin;
    doc["output"] = std::move(output);

    std::map<std::string, std::shared_ptr<const UnivariateFn>> tables;
    Json phi = Json::array();
    for (const auto& component : lin.diffeo.phi) {
        collect_tables(component, tables);
        phi.push_back(canonical(component));
    }
    doc["phi"] = std::move(phi);

    Json feedback = Json::object();
    collect_tables(lin.feedback.alpha, tables);
    collect_tables(lin.feedback.beta, tables);
    feedback["alpha"] = canonical(lin.feedback.alpha);
    feedback["beta"] = canonical(lin.feedback.beta);
    Json gamma = Json::array();
    for (int j = 1; j <= n; ++j)
        for (int k = j; k <= n; ++k)
            if (!is_zero(lin.feedback.gamma.at(j, k))) {
                collect_tables(lin.feedback.gamma.at(j, k), tables);
                gamma.push_back(
                    {{"j", j}, {"k", k}, {"expr", canonical(lin.feedback.gamma.at(j, k))}});
            }
    feedback["gamma"] = std::move(gamma);
    doc["feedback"] = std::move(feedback);

    Json model = Json::object();
    model["E"] = matrix_rows(lin.model.E);
    model["b"] = vector_items(lin.model.b);
    model["offset"] = vector_items(lin.model.offset);
    model["fit_residual"] = lin.model.fit_residual;
    doc["model"] = std::move(model);

    if (lin.lambda) {
        collect_tables(lin.lambda, tables);
        doc["lambda"] = canonical(lin.lambda);
    } else {
        doc["lambda"] = nullptr;
    }

    Json jtables = Json::array();
    for (const auto& [name, fn] : tables) {
        Json t = Json::object();
        t["name"] = name;
        t["interpolation"] = "cubic-hermite";
        t["lo"] = fn->lo;
        t["hi"] = fn->hi;
        t["derivative"] = canonical(fn->deriv_body);
        t["values"] = fn->values;
        t["derivs"] = fn->derivs;
        jtables.push_back(std::move(t));
    }
    doc["tables"] = std::move(jtables);
    return doc.dump(2) + "\n";
}

void save_artifact(const Linearization& lin, const MechanicalSystem& sys,
                   const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FileFormatError(path + ": cannot open file for writing");
    out << artifact_to_json(lin, sys);
    if (!out) throw FileFormatError(path + ": write failed");
}

Linearization load_artifact(const std::string& path, const MechanicalSystem& sys) {
    return load_artifact_text(read_file(path), path, sys);
}

Linearization load_artifact_text(const std::string& text, const std::string& origin,
                                 const MechanicalSystem& sys) {
    const Json doc = parse_json(text, origin);
    if (!doc.is_object()) fail(origin, "top level must be a JSON object");
    if (const auto it = doc.find("format");
        it == doc.end() || !it->is_string() || it->get<std::string>() != "mechlin-artifact-v1")
        fail(origin, "not a mechlin transformation artifact (missing or unknown \"format\")");

    const int n = sys.dim();
    const Json& about = require_key(doc, "system", origin);
    const Json& jn = require_key(about, "n", origin);
    if (!jn.is_number_integer() || jn.get<int>() != n)
        throw ArtifactMismatch(origin + ": artifact dimension " + jn.dump() +
                               " does not match the system's " + std::to_string(n));
    const Json& jf = require_key(about, "fingerprint", origin);
    const std::string expected = hex16(system_fingerprint(sys));
    if (!jf.is_string() || jf.get<std::string>() != expected)
        throw ArtifactMismatch(origin + ": artifact fingerprint " + jf.dump() +
                               " does not match the system's " + expected +
                               " (was it built from a different system file?)");

    FnRegistry fns;
    if (const auto it = doc.find("tables"); it != doc.end()) {
        if (!it->is_array()) fail(origin, "\"tables\" must be an array");
        for (std::size_t i = 0; i < it->size(); ++i) {
            const auto& t = (*it)[i];
            const std::string where = "tables[" + std::to_string(i) + "]";
            if (!t.is_object()) fail(origin, where + ": expected an object");
            const Json& jname = require_key(t, "name", origin);
            if (!jname.is_string()) fail(origin, where + ".name: expected a string");
            auto fn = std::make_shared<UnivariateFn>();
            fn->name = jname.get<std::string>();
            const Json& lo = require_key(t, "lo", origin);
            const Json& hi = require_key(t, "hi", origin);
            if (!lo.is_number() || !hi.is_number() || !(lo.get<double>() < hi.get<double>()))
                fail(origin, where + ": lo/hi must be numbers with lo < hi");
            fn->lo = lo.get<double>();
            fn->hi = hi.get<double>();
            const Json& jd = require_key(t, "derivative", origin);
            if (!jd.is_string()) fail(origin, where + ".derivative: expected a string");
            fn->deriv_body =
                parse_field(jd.get<std::string>(), origin, where + ".derivative");
            fn->values = items_to_doubles(require_key(t, "values", origin), origin,
                                          where + ".values");
            fn->derivs = items_to_doubles(require_key(t, "derivs", origin), origin,
                                          where + ".derivs");
            if (fn->values.size() < 2 || fn->values.size() != fn->derivs.size())
                fail(origin, where + ": values/derivs must be equal-length tables (>= 2 knots)");
            if (!fns.emplace(fn->name, std::move(fn)).second)
                fail(origin, where + ": duplicate table name");
        }
    }
    const auto expr_field = [&](const Json& v, const std::string& where) {
        if (!v.is_string()) fail(origin, where + ": expected an expression string");
        return parse_field(v.get<std::string>(), origin, where, fns);
    };

    Linearization lin;
    const Json& output = require_key(doc, "output", origin);
    lin.output.h = expr_field(require_key(output, "h", origin), "output.h");
    const Json& jar = require_key(output, "annihilation_residual", origin);
    const Json& jtm = require_key(output, "transversality_margin", origin);
    if (!jar.is_number() || !jtm.is_number())
        fail(origin, "output residual fields must be numbers");
    lin.output.annihilation_residual = jar.get<double>();
    lin.output.transversality_margin = jtm.get<double>();

    const Json& phi = require_key(doc, "phi", origin);
    if (!phi.is_array() || static_cast<int>(phi.size()) != n)
        fail(origin, "\"phi\" must list exactly " + std::to_string(n) + " expression strings");
    for (std::size_t i = 0; i < phi.size(); ++i)
        lin.diffeo.phi.push_back(expr_field(phi[i], "phi[" + std::to_string(i) + "]"));

    const Json& feedback = require_key(doc, "feedback", origin);
    lin.feedback.alpha = expr_field(require_key(feedback, "alpha", origin), "feedback.alpha");
    lin.feedback.beta = expr_field(require_key(feedback, "beta", origin), "feedback.beta");
    lin.feedback.gamma = SymExprMatrix(n);
    const Json& gamma = require_key(feedback, "gamma", origin);
    if (!gamma.is_array()) fail(origin, "feedback.gamma must be a list of {j, k, expr} entries");
    for (std::size_t i = 0; i < gamma.size(); ++i) {
        const auto& entry = gamma[i];
        const std::string where = "feedback.gamma[" + std::to_string(i) + "]";
        if (!entry.is_object()) fail(origin, where + ": expected an object");
        const Json& jj = require_key(entry, "j", origin);
        const Json& jk = require_key(entry, "k", origin);
        if (!jj.is_number_integer() || !jk.is_number_integer() || jj.get<int>() < 1 ||
            jk.get<int>() > n || jj.get<int>() > jk.get<int>())
            fail(origin, where + ": indices must satisfy 1 <= j <= k <= " + std::to_string(n));
        lin.feedback.gamma.set(jj.get<int>(), jk.get<int>(),
                               expr_field(require_key(entry, "expr", origin), where + ".expr"));
    }

    const Json& model = require_key(doc, "model", origin);
    lin.model.E = rows_to_matrix(require_key(model, "E", origin), n, origin, "model.E");
    lin.model.b = items_to_vector(require_key(model, "b", origin), n, origin, "model.b");
    lin.model.offset =
        items_to_vector(require_key(model, "offset", origin), n, origin, "model.offset");
    const Json& jfr = require_key(model, "fit_residual", origin);
    if (!jfr.is_number()) fail(origin, "model.fit_residual must be a number");
    lin.model.fit_residual = jfr.get<double>();

    const Json& jl = require_key(doc, "lambda", origin);
    lin.lambda = jl.is_null() ? nullptr : expr_field(jl, "lambda");
    return lin;
}

std::string report_to_json(const MFReport& report) {
    Json doc = Json::object();
    doc["overall"] = to_string(report.overall);
    Json conditions = Json::array();
    for (const auto& v : report.verdicts) {
        Json c = Json::object();
        c["condition"] = v.condition;
        c["status"] = to_string(v.status);
        c["residual"] = v.worst_residual;
        c["witness"] = witness_json(v.witness);
        c["samples_failed"] = v.samples_failed;
        conditions.push_back(std::move(c));
    }
    doc["conditions"] = std::move(conditions);
    doc["notes"] = report.notes;
    return doc.dump(2) + "\n";
}

std::string report_to_text(const MFReport& report) {
    std::ostringstream out;
    std::size_t width = 0;
    for (const auto& v : report.verdicts) width = std::max(width, v.condition.size());
    for (const auto& v : report.verdicts) {
        out << v.condition << std::string(width - v.condition.size(), ' ') << "  "
            << to_string(v.status) << "  residual " << number_text(v.worst_residual);
        if (v.samples_failed > 0) out << "  (" << v.samples_failed << " samples failed)";
        if (v.status != ConditionStatus::Pass && v.witness.x.size() > 0) {
            out << "  witness (";
            for (Eigen::Index i = 0; i < v.witness.x.size(); ++i)
                out << (i ? ", " : "") << number_text(v.witness.x(i));
            out << ")";
        }
        out << "\n";
    }
    out << "overall: " << to_string(report.overall) << "\n";
    for (const auto& note : report.notes) out << "note: " << note << "\n";
    return std::move(out).str();
}

}  // namespace mechlin
