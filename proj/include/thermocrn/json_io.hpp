#pragma once

#include <json.hpp>

#include "thermocrn/network.hpp"

namespace thermocrn {

using json = nlohmann::json;

inline json to_json(const Complex& c, const NetworkSpec& spec) {
    json j = json::object();
    for (const auto& [i, coeff] : c.terms) j[spec.species[static_cast<size_t>(i)].name] = coeff;
    return j;
}

inline json to_json(const NetworkSpec& spec) {
    json j;
    j["kappa"] = spec.constants.kappa;
    j["T_env"] = spec.T_env ? json(*spec.T_env) : json(nullptr);
    j["energy_mode"] = spec.energy_mode == EnergyMode::Isolated ? "isolated" : "isothermal";
    j["species"] = json::array();
    for (const auto& sp : spec.species)
        j["species"].push_back({{"name", sp.name}, {"z", sp.z}, {"p", sp.p}, {"e", sp.e}});
    j["reactions"] = json::array();
    for (const auto& rx : spec.reactions)
        j["reactions"].push_back({{"kind", to_string(rx.kind)},
                                  {"substrate", to_json(rx.substrate, spec)},
                                  {"product", to_json(rx.product, spec)},
                                  {"k", rx.k},
                                  {"gas", {rx.gas.a, rx.gas.b, rx.gas.c}},
                                  {"pair", rx.pair}});
    j["reversible"] = spec.reversible();
    return j;
}

/// Dense matrices serialize column-major: an array of columns.
inline json to_json(const Mat& m) {
    json cols = json::array();
    for (int j = 0; j < m.cols; ++j) {
        json col = json::array();
        for (int i = 0; i < m.rows; ++i) col.push_back(m(i, j));
        cols.push_back(std::move(col));
    }
    return cols;
}

inline json to_json(const Matrices& mat, const NetworkSpec& spec) {
    json j;
    j["complexes"] = json::array();
    for (const auto& c : mat.complexes) j["complexes"].push_back(to_json(c, spec));
    j["Y"] = to_json(mat.Y);
    j["D"] = to_json(mat.D);
    j["B"] = to_json(mat.B);
    j["Gamma"] = to_json(mat.Gamma);
    j["GammaTilde"] = to_json(mat.GammaTilde);
    j["gamma_tilde_form"] = mat.stacked ? "stacked" : "block";
    j["ker_gamma_tilde_T"] = mat.bases.ker_gamma_tilde_T;
    j["im_gamma_tilde"] = mat.bases.im_gamma_tilde;
    j["ker_gamma_int"] = mat.bases.ker_gamma;
    j["exact_bases"] = mat.bases.exact;
    return j;
}

}  // namespace thermocrn
