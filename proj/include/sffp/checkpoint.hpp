#pragma once

// JSON checkpoint of a complete SffpModel. Doubles are written in shortest
// round-trip form, so save followed by load reproduces every parameter bit
// for bit. The stored order is the raw unconstrained value.

#include <Eigen/Dense>

#include <filesystem>
#include <fstream>
#include <string>

#include <nlohmann/json.hpp>

#include "sffp/errors.hpp"
#include "sffp/model.hpp"

namespace sffp {

inline constexpr int kCheckpointVersion = 1;
inline constexpr const char* kCheckpointFormat = "sffp-checkpoint";

namespace detail {

inline nlohmann::ordered_json matrix_to_json(const Eigen::MatrixXd& a) {
    nlohmann::ordered_json rows = nlohmann::ordered_json::array();
    for (Eigen::Index r = 0; r < a.rows(); ++r) {
        nlohmann::ordered_json row = nlohmann::ordered_json::array();
        for (Eigen::Index c = 0; c < a.cols(); ++c) row.push_back(a(r, c));
        rows.push_back(std::move(row));
    }
    return rows;
}

inline nlohmann::ordered_json vector_to_json(const Eigen::VectorXd& v) {
    nlohmann::ordered_json out = nlohmann::ordered_json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
    return out;
}

inline Eigen::MatrixXd matrix_from_json(const nlohmann::json& j, Eigen::Index rows, Eigen::Index cols,
                                        const std::string& what) {
    if (!j.is_array() || static_cast<Eigen::Index>(j.size()) != rows) {
        throw ConfigError("checkpoint: " + what + " must have " + std::to_string(rows) + " rows");
    }
    Eigen::MatrixXd a(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
        const auto& row = j[static_cast<std::size_t>(r)];
        if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols) {
            throw ConfigError("checkpoint: " + what + " must have " + std::to_string(cols) + " columns");
        }
        for (Eigen::Index c = 0; c < cols; ++c) a(r, c) = row[static_cast<std::size_t>(c)].get<double>();
    }
    return a;
}

inline Eigen::VectorXd vector_from_json(const nlohmann::json& j, Eigen::Index n, const std::string& what) {
    if (!j.is_array() || static_cast<Eigen::Index>(j.size()) != n) {
        throw ConfigError("checkpoint: " + what + " must have length " + std::to_string(n));
    }
    Eigen::VectorXd v(n);
    for (Eigen::Index i = 0; i < n; ++i) v(i) = j[static_cast<std::size_t>(i)].get<double>();
    return v;
}

}  // namespace detail

inline nlohmann::ordered_json checkpoint_to_json(const SffpModel& model) {
    model.validate();
    nlohmann::ordered_json j;
    j["format"] = kCheckpointFormat;
    j["format_version"] = kCheckpointVersion;
    j["m"] = model.m;
    j["p"] = model.p;
    j["f"] = model.f;
    j["revin_eps"] = model.revin_eps;
    j["per_channel_heads"] = model.per_channel_heads();

    nlohmann::ordered_json filter;
    filter["lowpass_cutoff"] = model.filter.lowpass_cutoff;
    filter["random_high_count"] = model.filter.random_high_count;
    filter["sampling_seed"] = model.filter.sampling_seed;
    nlohmann::ordered_json mask = nlohmann::ordered_json::array();
    for (bool keep : model.filter.keep_mask) mask.push_back(keep ? 1 : 0);
    filter["keep_mask"] = std::move(mask);
    j["filter"] = std::move(filter);

    nlohmann::ordered_json params;
    params["alpha"] = model.params.alpha;
    params["alpha_canonical"] = model.canonical_alpha();
    params["filter_weights_real"] = detail::vector_to_json(model.params.filter_weights.real());
    params["filter_weights_imag"] = detail::vector_to_json(model.params.filter_weights.imag());
    nlohmann::ordered_json heads = nlohmann::ordered_json::array();
    for (const auto& h : model.params.heads) {
        nlohmann::ordered_json head;
        head["lin_real"] = detail::matrix_to_json(h.weight_real);
        head["lin_imag"] = detail::matrix_to_json(h.weight_imag);
        head["bias_real"] = detail::vector_to_json(h.bias_real);
        head["bias_imag"] = detail::vector_to_json(h.bias_imag);
        heads.push_back(std::move(head));
    }
    params["heads"] = std::move(heads);
    params["revin_gamma"] = detail::vector_to_json(model.params.revin_gamma);
    params["revin_beta"] = detail::vector_to_json(model.params.revin_beta);
    j["params"] = std::move(params);
    return j;
}

inline SffpModel checkpoint_from_json(const nlohmann::json& j) {
    try {
        if (j.value("format", std::string()) != kCheckpointFormat) {
            throw ConfigError("checkpoint: not an sffp checkpoint");
        }
        const int version = j.at("format_version").get<int>();
        if (version != kCheckpointVersion) {
            throw ConfigError("checkpoint: unsupported format_version " + std::to_string(version));
        }
        SffpModel model;
        model.m = j.at("m").get<int>();
        model.p = j.at("p").get<int>();
        model.f = j.at("f").get<int>();
        model.revin_eps = j.at("revin_eps").get<double>();
        if (model.m < 2 || model.p < 2 || model.f < 1) throw ShapeError("checkpoint: invalid dimensions");

        const auto& filter = j.at("filter");
        model.filter.lowpass_cutoff = filter.at("lowpass_cutoff").get<int>();
        model.filter.random_high_count = filter.at("random_high_count").get<int>();
        model.filter.sampling_seed = filter.at("sampling_seed").get<std::uint64_t>();
        for (const auto& bit : filter.at("keep_mask")) model.filter.keep_mask.push_back(bit.get<int>() != 0);

        const auto& params = j.at("params");
        model.params.alpha = params.at("alpha").get<double>();
        const Eigen::VectorXd wr = detail::vector_from_json(params.at("filter_weights_real"), model.m, "filter_weights_real");
        const Eigen::VectorXd wi = detail::vector_from_json(params.at("filter_weights_imag"), model.m, "filter_weights_imag");
        model.params.filter_weights.resize(model.m);
        model.params.filter_weights.real() = wr;
        model.params.filter_weights.imag() = wi;

        const auto& heads = params.at("heads");
        const std::size_t expected_heads = j.at("per_channel_heads").get<bool>() ? static_cast<std::size_t>(model.f) : 1;
        if (heads.size() != expected_heads) throw ConfigError("checkpoint: head count does not match per_channel_heads");
        for (const auto& h : heads) {
            model.params.heads.push_back({detail::matrix_from_json(h.at("lin_real"), model.p, model.m, "lin_real"),
                                          detail::matrix_from_json(h.at("lin_imag"), model.p, model.m, "lin_imag"),
                                          detail::vector_from_json(h.at("bias_real"), model.p, "bias_real"),
                                          detail::vector_from_json(h.at("bias_imag"), model.p, "bias_imag")});
        }
        model.params.revin_gamma = detail::vector_from_json(params.at("revin_gamma"), model.f, "revin_gamma");
        model.params.revin_beta = detail::vector_from_json(params.at("revin_beta"), model.f, "revin_beta");
        model.validate();
        return model;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("checkpoint: malformed document: ") + e.what());
    }
}

inline void save_checkpoint(const SffpModel& model, const std::filesystem::path& path) {
    const auto doc = checkpoint_to_json(model);
    std::ofstream out(path);
    if (!out) throw IoError("cannot write checkpoint " + path.string());
    out << doc.dump(1) << '\n';
    if (!out) throw IoError("write failed for checkpoint " + path.string());
}

inline SffpModel load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open checkpoint " + path.string());
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError("checkpoint " + path.string() + ": " + e.what());
    }
    try {
        return checkpoint_from_json(doc);
    } catch (const ConfigError& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
}

}  // namespace sffp
