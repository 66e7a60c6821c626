#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "behrt/behrt.hpp"

namespace behrt::test {

using numerics::Graph;
using numerics::Tensor;
using numerics::Var;
using model::ParamBinding;
using model::ParamStore;

struct GradReport {
    std::string name;
    double rel_error = 0.0;  // ||analytic - numeric||_inf / max(||analytic||_inf, ||numeric||_inf)
};

// Central differences with step h on every entry of every tensor in `store`.
// `loss` builds a scalar on a fresh graph from a binding of the store.
template <typename F>
std::vector<GradReport> gradcheck(ParamStore<double>& store, F&& loss, double h = 1e-5) {
    ParamStore<double> analytic = store.zeros_like();
    {
        Graph<double> g;
        ParamBinding<double> p(g, store);
        Var l = loss(p);
        g.backward(l);
        p.accumulate_into(analytic);
    }
    auto eval = [&] {
        Graph<double> g;
        ParamBinding<double> p(g, store);
        return g.value(loss(p))[0];
    };
    std::vector<GradReport> out;
    for (std::size_t i = 0; i < store.size(); ++i) {
        auto& t = store[i].second;
        double diff = 0.0, scale = 0.0;
        for (std::size_t k = 0; k < t.size(); ++k) {
            const double keep = t[k];
            t[k] = keep + h;
            const double up = eval();
            t[k] = keep - h;
            const double down = eval();
            t[k] = keep;
            const double numeric = (up - down) / (2.0 * h);
            const double a = analytic[i].second[k];
            diff = std::max(diff, std::abs(a - numeric));
            scale = std::max({scale, std::abs(a), std::abs(numeric)});
        }
        out.push_back({store[i].first, scale == 0.0 ? 0.0 : diff / scale});
    }
    return out;
}

inline double max_error(const std::vector<GradReport>& r) {
    double m = 0.0;
    for (const auto& x : r) m = std::max(m, x.rel_error);
    return m;
}

inline Tensor<double> random_tensor(numerics::Shape shape, std::mt19937_64& rng, double scale = 1.0) {
    Tensor<double> t(std::move(shape));
    std::normal_distribution<double> n(0.0, scale);
    for (auto& v : t.values()) v = n(rng);
    return t;
}

// Random record with `visits` visits whose codes are drawn from the vocab and
// a few unknown codes.
inline data::PatientRecord random_record(std::mt19937_64& rng, const data::DiseaseVocab& vocab, int visits,
                                         int max_codes = 4, const std::string& id = "P") {
    data::PatientRecord r;
    r.patient_id = id;
    r.sex = rng() % 2 ? data::Sex::female : data::Sex::male;
    int day = 0;
    const int start_age = 20 + static_cast<int>(rng() % 50);
    std::uniform_int_distribution<int> gap(1, 400), ncodes(1, max_codes), code(0, vocab.num_diseases() - 1);
    for (int v = 0; v < visits; ++v) {
        if (v) day += gap(rng);
        data::Visit vis;
        vis.day_offset = day;
        vis.age_years = start_age + day / 365;
        const int k = ncodes(rng);
        for (int c = 0; c < k; ++c) vis.codes.push_back(rng() % 17 == 0 ? "ZZ" + std::to_string(rng() % 9) : vocab.code(code(rng)));
        r.visits.push_back(std::move(vis));
    }
    return r;
}

inline data::DiseaseVocab small_vocab(int n) {
    std::vector<std::string> codes;
    for (int i = 0; i < n; ++i) codes.push_back("C" + std::to_string(i));
    return data::DiseaseVocab(codes);
}

// Scratch directory removed at scope exit.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        std::random_device rd;
        path_ = std::filesystem::temp_directory_path() / ("behrt-" + tag + "-" + std::to_string(rd()));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;
    std::string file(const std::string& name) const { return (path_ / name).string(); }
    const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
};

inline std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

}  // namespace behrt::test
