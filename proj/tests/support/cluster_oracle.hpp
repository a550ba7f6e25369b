#pragma once

// Naive agglomerative clustering: every step recomputes the linkage
// distance of every cluster pair from the member points.

#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <vector>

namespace oracle {

using Points = std::vector<std::vector<double>>;

inline double euclid(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0;
    for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    return std::sqrt(s);
}

inline double linkage_distance(const Points& pts, const std::vector<std::size_t>& u, const std::vector<std::size_t>& v,
                               const std::string& linkage) {
    if (linkage == "ward") {
        const std::size_t d = pts[0].size();
        std::vector<double> cu(d, 0.0), cv(d, 0.0);
        for (auto i : u)
            for (std::size_t k = 0; k < d; ++k) cu[k] += pts[i][k] / static_cast<double>(u.size());
        for (auto i : v)
            for (std::size_t k = 0; k < d; ++k) cv[k] += pts[i][k] / static_cast<double>(v.size());
        const double nu = static_cast<double>(u.size()), nv = static_cast<double>(v.size());
        return std::sqrt(2.0 * nu * nv / (nu + nv)) * euclid(cu, cv);
    }
    double lo = std::numeric_limits<double>::infinity(), hi = 0, sum = 0;
    for (auto i : u)
        for (auto j : v) {
            const double e = euclid(pts[i], pts[j]);
            lo = std::min(lo, e);
            hi = std::max(hi, e);
            sum += e;
        }
    if (linkage == "single") return lo;
    if (linkage == "complete") return hi;
    return sum / static_cast<double>(u.size() * v.size());
}

// Cluster label per point, numbered by first appearance.
inline std::vector<std::size_t> agglomerate(const Points& pts, double threshold, const std::string& linkage) {
    std::vector<std::vector<std::size_t>> clusters;
    for (std::size_t i = 0; i < pts.size(); ++i) clusters.push_back({i});
    while (clusters.size() > 1) {
        double best = std::numeric_limits<double>::infinity();
        std::size_t bi = 0, bj = 0;
        for (std::size_t i = 0; i < clusters.size(); ++i)
            for (std::size_t j = i + 1; j < clusters.size(); ++j) {
                const double d = linkage_distance(pts, clusters[i], clusters[j], linkage);
                if (d < best) {
                    best = d;
                    bi = i;
                    bj = j;
                }
            }
        if (best > threshold) break;
        clusters[bi].insert(clusters[bi].end(), clusters[bj].begin(), clusters[bj].end());
        clusters.erase(clusters.begin() + static_cast<std::ptrdiff_t>(bj));
    }
    std::vector<std::size_t> owner(pts.size());
    for (std::size_t c = 0; c < clusters.size(); ++c)
        for (auto i : clusters[c]) owner[i] = c;
    std::vector<std::size_t> label(pts.size());
    std::vector<long> renumber(clusters.size(), -1);
    std::size_t next = 0;
    for (std::size_t i = 0; i < pts.size(); ++i) {
        if (renumber[owner[i]] < 0) renumber[owner[i]] = static_cast<long>(next++);
        label[i] = static_cast<std::size_t>(renumber[owner[i]]);
    }
    return label;
}

}  // namespace oracle
