#pragma once

// Shared test helpers: finite-difference gradient checking, random tensor
// builders, chi-square critical values, and temp-directory management.

#include "lesiondet/autodiff.hpp"
#include "lesiondet/rng.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <unistd.h>
#include <vector>

namespace testutil {

inline double rel_err(double a, double b) {
    const double denom = std::max({1.0, std::fabs(a), std::fabs(b)});
    return std::fabs(a - b) / denom;
}

inline lesiondet::Tensor<double> random_tensor(const lesiondet::Shape& s, lesiondet::Rng& rng,
                                               bool requires_grad = true, double lo = -1.0,
                                               double hi = 1.0) {
    std::vector<double> v(static_cast<std::size_t>(s.numel()));
    for (auto& x : v) x = rng.uniform(lo, hi);
    return lesiondet::Tensor<double>(s, std::move(v), requires_grad);
}

// Central finite differences on every element of every leaf, compared with
// the analytic gradients from one backward pass seeded with `seed` (the
// scalar functional checked is F = sum_i seed_i * out_i). `forward` must
// rebuild the graph from the leaves each call. Returns the worst relative
// error over all checked elements.
inline double max_grad_rel_err_seeded(const std::function<lesiondet::Tensor<double>()>& forward,
                                      std::vector<lesiondet::Tensor<double>> leaves,
                                      const std::vector<double>& seed, double eps = 1e-4) {
    lesiondet::Tensor<double> out = forward();
    REQUIRE(std::int64_t(seed.size()) == out.shape().numel());
    for (auto& leaf : leaves) leaf.zero_grad();
    lesiondet::backward(out, seed);

    const auto functional = [&seed](const lesiondet::Tensor<double>& t) {
        double s = 0.0;
        const auto& d = t.data();
        for (std::size_t i = 0; i < d.size(); ++i) s += seed[i] * d[i];
        return s;
    };

    double worst = 0.0;
    for (auto& leaf : leaves) {
        auto& vals = leaf.data();
        const std::vector<double> analytic =
            leaf.has_grad() ? leaf.grad() : std::vector<double>(vals.size(), 0.0);
        for (std::size_t i = 0; i < vals.size(); ++i) {
            const double orig = vals[i];
            vals[i] = orig + eps;
            const double up = functional(forward());
            vals[i] = orig - eps;
            const double dn = functional(forward());
            vals[i] = orig;
            const double numeric = (up - dn) / (2.0 * eps);
            worst = std::max(worst, rel_err(analytic[i], numeric));
        }
    }
    return worst;
}

// Scalar-output convenience wrapper (seed 1).
inline double max_grad_rel_err(const std::function<lesiondet::Tensor<double>()>& forward,
                               std::vector<lesiondet::Tensor<double>> leaves,
                               double eps = 1e-4) {
    return max_grad_rel_err_seeded(forward, std::move(leaves), {1.0}, eps);
}

// 99th-percentile chi-square critical value (Wilson-Hilferty approximation),
// good to ~1% for dof >= 3 -- ample for p > 0.01 acceptance checks.
inline double chi2_crit_p01(int dof) {
    const double z = 2.3263478740408408; // Phi^-1(0.99)
    const double a = 2.0 / (9.0 * dof);
    const double c = 1.0 - a + z * std::sqrt(a);
    return dof * c * c * c;
}

// Self-deleting temp directory for file-format and pipeline tests.
class TempDir {
  public:
    explicit TempDir(const std::string& tag) {
        base_ = std::filesystem::temp_directory_path() /
                ("lesiondet_test_" + tag + "_" + std::to_string(::getpid()));
        std::filesystem::remove_all(base_);
        std::filesystem::create_directories(base_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(base_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    std::string path() const { return base_.string(); }
    std::string file(const std::string& name) const { return (base_ / name).string(); }
    std::string subdir(const std::string& name) const {
        auto p = base_ / name;
        std::filesystem::create_directories(p);
        return p.string();
    }

  private:
    std::filesystem::path base_;
};

inline std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE_MESSAGE(in.good(), ("cannot open " + path).c_str());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline std::vector<std::string> read_lines(const std::string& path) {
    std::ifstream in(path);
    REQUIRE_MESSAGE(in.good(), ("cannot open " + path).c_str());
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) lines.push_back(line);
    return lines;
}

} // namespace testutil
