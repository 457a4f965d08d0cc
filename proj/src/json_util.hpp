#pragma once

#include <string>

#include <json.hpp>

#include "sdeis/types.hpp"

namespace sdeis::detail {

inline nlohmann::json vec_to_json(const Vec& v)
{
    nlohmann::json a = nlohmann::json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i)
        a.push_back(v[i]);
    return a;
}

inline Vec json_to_vec(const nlohmann::json& j)
{
    return to_vec(j.get<std::vector<double>>());
}

inline nlohmann::json mat_to_json(const Mat& m)
{
    nlohmann::json rows = nlohmann::json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        nlohmann::json row = nlohmann::json::array();
        for (Eigen::Index j = 0; j < m.cols(); ++j)
            row.push_back(m(i, j));
        rows.push_back(std::move(row));
    }
    return rows;
}

inline Mat json_to_mat(const nlohmann::json& j)
{
    const auto r = static_cast<Eigen::Index>(j.size());
    if (r == 0)
        return Mat(0, 0);
    const auto c = static_cast<Eigen::Index>(j.at(0).size());
    Mat m(r, c);
    for (Eigen::Index i = 0; i < r; ++i) {
        auto row = j.at(static_cast<std::size_t>(i)).get<std::vector<double>>();
        if (static_cast<Eigen::Index>(row.size()) != c)
            throw InputError("json matrix: ragged rows");
        for (Eigen::Index k = 0; k < c; ++k)
            m(i, k) = row[static_cast<std::size_t>(k)];
    }
    return m;
}

}  // namespace sdeis::detail
