#pragma once

// JSON helpers shared by the problem and results documents.

#include "covsteer/types.hpp"

#include <json.hpp>

#include <string>

namespace covsteer::json_io {

using nlohmann::json;

inline const json& require(const json& obj, const std::string& key, const std::string& path) {
    if (!obj.is_object()) throw ParseError("expected an object at " + path, path);
    auto it = obj.find(key);
    if (it == obj.end()) throw ParseError("missing field " + key, path.empty() ? key : path + "." + key);
    return *it;
}

inline const json* optional(const json& obj, const std::string& key) {
    if (!obj.is_object()) return nullptr;
    auto it = obj.find(key);
    return it == obj.end() ? nullptr : &*it;
}

inline int array_depth(const json& j) {
    int depth = 0;
    const json* cur = &j;
    while (cur->is_array()) {
        ++depth;
        if (cur->empty()) break;
        cur = &cur->front();
    }
    return depth;
}

inline double read_number(const json& j, const std::string& path) {
    if (!j.is_number()) throw ParseError("expected a number at " + path, path);
    return j.get<double>();
}

inline Vector read_vector(const json& j, const std::string& path) {
    if (!j.is_array() || array_depth(j) != 1) throw ParseError("expected a vector at " + path, path);
    Vector v(static_cast<Eigen::Index>(j.size()));
    for (std::size_t i = 0; i < j.size(); ++i) v(static_cast<Eigen::Index>(i)) = read_number(j[i], path);
    return v;
}

inline Matrix read_matrix(const json& j, const std::string& path) {
    if (!j.is_array() || j.empty() || array_depth(j) != 2)
        throw ParseError("expected a matrix (nested rows) at " + path, path);
    const std::size_t rows = j.size();
    const std::size_t cols = j.front().size();
    Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    for (std::size_t r = 0; r < rows; ++r) {
        if (!j[r].is_array() || j[r].size() != cols) throw ValidationError("ragged matrix rows at " + path);
        for (std::size_t c = 0; c < cols; ++c)
            m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = read_number(j[r][c], path);
    }
    return m;
}

inline json write_vector(const Vector& v) {
    json j = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) j.push_back(v(i));
    return j;
}

inline json write_matrix(const Matrix& m) {
    json j = json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        json row = json::array();
        for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
        j.push_back(std::move(row));
    }
    return j;
}

inline json write_sequence(const MatrixSeq& seq) {
    json j = json::array();
    for (const auto& m : seq) j.push_back(write_matrix(m));
    return j;
}

inline json write_vectors(const VectorSeq& seq) {
    json j = json::array();
    for (const auto& v : seq) j.push_back(write_vector(v));
    return j;
}

}  // namespace covsteer::json_io
