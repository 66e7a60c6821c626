#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "behrt/data/record.hpp"
#include "behrt/data/vocab.hpp"
#include "behrt/errors.hpp"
#include "behrt/rng.hpp"

namespace behrt::data {

// A group of diseases that tend to co-occur in the same patients. Onset hazard
// per visit is onset_rate * exp(age_slope * (age - 50) / 10).
struct ClusterSpec {
    std::string name;
    std::vector<std::string> diseases;
    double onset_rate = 0.04;
    double age_slope = 0.2;
    std::optional<Sex> sex;  // set for sex-exclusive disease sets
};

// If a visit contains `trigger`, the next visit contains `consequence` with
// probability q. Consequence diseases arise through their rule only.
struct RuleSpec {
    std::string trigger;
    std::string consequence;
    double q = 0.9;
};

struct GeneratorConfig {
    int num_patients = 1000;
    int num_diseases = 60;
    std::string code_prefix = "D";
    int min_visits = 5;
    int max_visits = 12;
    double mean_gap_days = 90.0;
    int start_age_min = 18;
    int start_age_max = 75;
    int clusters_per_patient = 2;       // clusters with full onset hazard for a patient
    double off_cluster_factor = 0.05;   // hazard multiplier for the other clusters
    double recurrence = 0.6;            // chance an acquired disease is recorded again
    double noise_rate = 0.05;           // chance of one incidental diagnosis per visit
    std::vector<ClusterSpec> clusters;
    std::vector<RuleSpec> rules;
};

inline std::string disease_code(const std::string& prefix, int index, int num_diseases) {
    std::size_t width = 3;
    for (int n = num_diseases - 1; n >= 1000; n /= 10) ++width;
    std::string digits = std::to_string(index);
    if (digits.size() < width) digits.insert(0, width - digits.size(), '0');
    return prefix + digits;
}

inline DiseaseVocab generator_vocab(const GeneratorConfig& cfg) {
    std::vector<std::string> codes;
    for (int i = 0; i < cfg.num_diseases; ++i) codes.push_back(disease_code(cfg.code_prefix, i, cfg.num_diseases));
    return DiseaseVocab(std::move(codes));
}

inline void validate(const GeneratorConfig& cfg) {
    auto fail = [](const std::string& m) { throw ConfigError("generator config: " + m); };
    auto unit = [&](double p, const std::string& what) {
        if (!(p >= 0.0 && p <= 1.0)) fail(what + " must lie in [0,1]");
    };
    if (cfg.num_patients < 0) fail("num_patients must be >= 0");
    if (cfg.num_diseases < 1) fail("num_diseases must be >= 1");
    if (cfg.min_visits < 5) fail("min_visits must be >= 5");
    if (cfg.max_visits < cfg.min_visits) fail("max_visits must be >= min_visits");
    if (!(cfg.mean_gap_days >= 1.0)) fail("mean_gap_days must be >= 1");
    if (cfg.start_age_min < 0 || cfg.start_age_max < cfg.start_age_min) fail("invalid start age range");
    if (cfg.clusters_per_patient < 1) fail("clusters_per_patient must be >= 1");
    unit(cfg.off_cluster_factor, "off_cluster_factor");
    unit(cfg.recurrence, "recurrence");
    unit(cfg.noise_rate, "noise_rate");
    if (cfg.clusters.empty()) fail("at least one cluster is required");

    const DiseaseVocab vocab = generator_vocab(cfg);
    std::unordered_map<std::string, const ClusterSpec*> owner;
    for (const auto& c : cfg.clusters) {
        if (c.diseases.empty()) fail("cluster '" + c.name + "' is empty");
        if (!(c.onset_rate >= 0.0 && c.onset_rate <= 1.0)) fail("cluster '" + c.name + "' onset_rate must lie in [0,1]");
        if (!std::isfinite(c.age_slope)) fail("cluster '" + c.name + "' age_slope must be finite");
        for (const auto& d : c.diseases) {
            if (!vocab.contains(d)) fail("unknown disease " + d + " in cluster '" + c.name + "'");
            if (!owner.emplace(d, &c).second) fail("disease " + d + " belongs to more than one cluster");
        }
    }
    std::set<std::string> consequences;
    for (const auto& r : cfg.rules) {
        unit(r.q, "rule " + r.trigger + "->" + r.consequence + " q");
        if (!vocab.contains(r.trigger) || !vocab.contains(r.consequence)) {
            fail("rule references unknown disease " + r.trigger + "->" + r.consequence);
        }
        if (r.trigger == r.consequence) fail("rule trigger and consequence must differ: " + r.trigger);
        if (owner.count(r.consequence)) fail("rule consequence " + r.consequence + " must not belong to a cluster");
        if (!consequences.insert(r.consequence).second) fail("disease " + r.consequence + " is the consequence of two rules");
    }
    for (const auto& r : cfg.rules) {
        if (consequences.count(r.trigger)) fail("rule trigger " + r.trigger + " is itself a rule consequence");
    }
}

struct CatalogEntry {
    std::string code;
    std::string description;
    std::string chapter;
};

// Human-readable labels for the synthetic diseases, keyed by code.
inline std::vector<CatalogEntry> generator_catalog(const GeneratorConfig& cfg) {
    const DiseaseVocab vocab = generator_vocab(cfg);
    std::vector<CatalogEntry> out;
    for (const auto& code : vocab.codes()) out.push_back({code, "incidental finding " + code, "background"});
    auto at = [&](const std::string& code) -> CatalogEntry& {
        return out[static_cast<std::size_t>(vocab.id(code) - kNumSpecial)];
    };
    for (const auto& c : cfg.clusters) {
        for (std::size_t i = 0; i < c.diseases.size(); ++i) {
            at(c.diseases[i]) = {c.diseases[i], c.name + " condition " + std::to_string(i + 1), c.name};
        }
    }
    for (const auto& r : cfg.rules) at(r.consequence) = {r.consequence, "sequela of " + r.trigger, "rule consequence"};
    return out;
}

inline void write_catalog(const std::string& path, const std::vector<CatalogEntry>& catalog) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot write catalog: " + path);
    out << "code\tdescription\tchapter\n";
    for (const auto& e : catalog) out << e.code << '\t' << e.description << '\t' << e.chapter << '\n';
}

inline std::vector<CatalogEntry> read_catalog(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open catalog: " + path);
    std::vector<CatalogEntry> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        if (++line_no == 1 || line.empty()) continue;
        const auto a = line.find('\t');
        const auto b = a == std::string::npos ? a : line.find('\t', a + 1);
        if (b == std::string::npos) throw FormatError("catalog row needs three tab-separated fields", line_no);
        out.push_back({line.substr(0, a), line.substr(a + 1, b - a - 1), line.substr(b + 1)});
    }
    return out;
}

namespace detail {

struct GeneratorTables {
    DiseaseVocab vocab;
    std::vector<int> cluster_of;        // disease index -> cluster index, -1 if none
    std::vector<std::uint8_t> is_consequence;
    std::vector<std::vector<int>> cluster_members;
    std::vector<std::pair<int, int>> rules;  // (trigger, consequence) disease indices
};

inline GeneratorTables make_tables(const GeneratorConfig& cfg) {
    GeneratorTables t{generator_vocab(cfg), {}, {}, {}, {}};
    const int g = cfg.num_diseases;
    t.cluster_of.assign(static_cast<std::size_t>(g), -1);
    t.is_consequence.assign(static_cast<std::size_t>(g), 0);
    for (std::size_t c = 0; c < cfg.clusters.size(); ++c) {
        std::vector<int> members;
        for (const auto& d : cfg.clusters[c].diseases) {
            const int idx = t.vocab.id(d) - kNumSpecial;
            t.cluster_of[static_cast<std::size_t>(idx)] = static_cast<int>(c);
            members.push_back(idx);
        }
        t.cluster_members.push_back(std::move(members));
    }
    for (const auto& r : cfg.rules) {
        const int tr = t.vocab.id(r.trigger) - kNumSpecial;
        const int co = t.vocab.id(r.consequence) - kNumSpecial;
        t.is_consequence[static_cast<std::size_t>(co)] = 1;
        t.rules.emplace_back(tr, co);
    }
    return t;
}

inline bool sex_allows(const GeneratorConfig& cfg, const GeneratorTables& t, int disease, Sex sex) {
    const int c = t.cluster_of[static_cast<std::size_t>(disease)];
    if (c >= 0) {
        const auto& s = cfg.clusters[static_cast<std::size_t>(c)].sex;
        return !s || *s == sex;
    }
    // Consequences inherit the restriction of their trigger.
    for (const auto& [tr, co] : t.rules)
        if (co == disease) return sex_allows(cfg, t, tr, sex);
    return true;
}

inline PatientRecord generate_patient(const GeneratorConfig& cfg, const GeneratorTables& t, int index, Rng& rng) {
    PatientRecord rec;
    char id[32];
    std::snprintf(id, sizeof id, "P%07d", index);
    rec.patient_id = id;
    rec.sex = uniform01(rng) < 0.5 ? Sex::female : Sex::male;

    const int g = cfg.num_diseases;
    std::vector<int> eligible_clusters;
    for (std::size_t c = 0; c < cfg.clusters.size(); ++c) {
        const auto& s = cfg.clusters[c].sex;
        if (!s || *s == rec.sex) eligible_clusters.push_back(static_cast<int>(c));
    }
    std::shuffle(eligible_clusters.begin(), eligible_clusters.end(), rng);
    std::vector<std::uint8_t> affine(cfg.clusters.size(), 0);
    const std::size_t n_aff = std::min<std::size_t>(static_cast<std::size_t>(cfg.clusters_per_patient),
                                                    eligible_clusters.size());
    for (std::size_t i = 0; i < n_aff; ++i) affine[static_cast<std::size_t>(eligible_clusters[i])] = 1;

    std::vector<int> incidental;  // candidates for noise diagnoses
    for (int d = 0; d < g; ++d)
        if (!t.is_consequence[static_cast<std::size_t>(d)] && sex_allows(cfg, t, d, rec.sex)) incidental.push_back(d);

    const int n_visits = uniform_int(rng, cfg.min_visits, cfg.max_visits);
    const int start_age = uniform_int(rng, cfg.start_age_min, cfg.start_age_max);
    std::exponential_distribution<double> gap(1.0 / std::max(1e-9, cfg.mean_gap_days - 1.0));

    std::vector<std::uint8_t> acquired(static_cast<std::size_t>(g), 0);
    std::vector<int> acquired_list;
    std::vector<std::uint8_t> prev(static_cast<std::size_t>(g), 0);
    int day = 0;
    for (int k = 0; k < n_visits; ++k) {
        if (k > 0) day += 1 + static_cast<int>(std::floor(gap(rng)));
        const int age = start_age + day / 365;
        std::vector<int> codes;
        std::vector<std::uint8_t> here(static_cast<std::size_t>(g), 0);
        auto add = [&](int d) {
            if (!here[static_cast<std::size_t>(d)]) {
                here[static_cast<std::size_t>(d)] = 1;
                codes.push_back(d);
            }
        };
        for (std::size_t r = 0; r < t.rules.size(); ++r) {
            const auto [tr, co] = t.rules[r];
            if (prev[static_cast<std::size_t>(tr)] && uniform01(rng) < cfg.rules[r].q) add(co);
        }
        const std::vector<int> known = acquired_list;
        for (int d : known)
            if (uniform01(rng) < cfg.recurrence) add(d);
        for (std::size_t c = 0; c < cfg.clusters.size(); ++c) {
            const auto& spec = cfg.clusters[c];
            if (spec.sex && *spec.sex != rec.sex) continue;
            double p = spec.onset_rate * std::exp(spec.age_slope * (age - 50) / 10.0);
            if (!affine[c]) p *= cfg.off_cluster_factor;
            p = std::min(1.0, p);
            for (int d : t.cluster_members[c]) {
                if (acquired[static_cast<std::size_t>(d)]) continue;
                if (uniform01(rng) < p) {
                    acquired[static_cast<std::size_t>(d)] = 1;
                    acquired_list.push_back(d);
                    add(d);
                }
            }
        }
        if (!incidental.empty() && uniform01(rng) < cfg.noise_rate) {
            add(incidental[static_cast<std::size_t>(uniform_int(rng, 0, static_cast<int>(incidental.size()) - 1))]);
        }
        if (codes.empty()) {
            if (!acquired_list.empty()) {
                add(acquired_list[static_cast<std::size_t>(
                    uniform_int(rng, 0, static_cast<int>(acquired_list.size()) - 1))]);
            } else {
                std::vector<int> pool;
                for (std::size_t c = 0; c < cfg.clusters.size(); ++c)
                    if (affine[c])
                        for (int d : t.cluster_members[c]) pool.push_back(d);
                if (pool.empty()) pool = incidental;
                const int d = pool[static_cast<std::size_t>(uniform_int(rng, 0, static_cast<int>(pool.size()) - 1))];
                acquired[static_cast<std::size_t>(d)] = 1;
                acquired_list.push_back(d);
                add(d);
            }
        }
        Visit v;
        v.day_offset = day;
        v.age_years = age;
        for (int d : codes) v.codes.push_back(t.vocab.code(d));
        rec.visits.push_back(std::move(v));
        prev = here;
    }
    return rec;
}

}  // namespace detail

// Patient i draws from its own stream keyed by (seed, i).
inline std::vector<PatientRecord> generate_cohort(const GeneratorConfig& cfg, std::uint64_t seed) {
    validate(cfg);
    const auto tables = detail::make_tables(cfg);
    std::vector<PatientRecord> out;
    out.reserve(static_cast<std::size_t>(cfg.num_patients));
    for (int i = 0; i < cfg.num_patients; ++i) {
        Rng rng = derive_rng(seed, {static_cast<std::uint64_t>(i), 0xC0407ULL});
        out.push_back(detail::generate_patient(cfg, tables, i, rng));
    }
    return out;
}

// The desk-scale preset: eight co-morbidity clusters of six diseases, one
// female-only and one male-only set of four, and four planted rules whose
// consequences live outside every cluster. Each patient follows one cluster
// and revisits most of its diagnoses.
inline GeneratorConfig desk_scale_generator_config(int num_patients = 10000, double rule_q = 0.9) {
    GeneratorConfig cfg;
    cfg.num_patients = num_patients;
    cfg.num_diseases = 60;
    cfg.clusters_per_patient = 1;
    cfg.recurrence = 0.8;
    auto code = [&](int i) { return disease_code(cfg.code_prefix, i, cfg.num_diseases); };
    const double slopes[] = {0.4, 0.3, 0.2, 0.1, 0.0, -0.1, 0.3, 0.2};
    for (int c = 0; c < 8; ++c) {
        ClusterSpec spec;
        spec.name = "cluster" + std::to_string(c);
        for (int i = 0; i < 6; ++i) spec.diseases.push_back(code(c * 6 + i));
        spec.onset_rate = 0.05;
        spec.age_slope = slopes[c];
        cfg.clusters.push_back(std::move(spec));
    }
    ClusterSpec fem{"female", {}, 0.05, 0.0, Sex::female};
    ClusterSpec mal{"male", {}, 0.05, 0.2, Sex::male};
    for (int i = 0; i < 4; ++i) {
        fem.diseases.push_back(code(48 + i));
        mal.diseases.push_back(code(52 + i));
    }
    cfg.clusters.push_back(std::move(fem));
    cfg.clusters.push_back(std::move(mal));
    cfg.rules = {{code(1), code(56), rule_q},
                 {code(13), code(57), rule_q},
                 {code(25), code(58), rule_q},
                 {code(37), code(59), rule_q}};
    return cfg;
}

inline GeneratorConfig parse_generator_config(const nlohmann::json& j) {
    try {
        GeneratorConfig cfg;
        cfg.num_patients = j.value("num_patients", cfg.num_patients);
        cfg.num_diseases = j.value("num_diseases", cfg.num_diseases);
        cfg.code_prefix = j.value("code_prefix", cfg.code_prefix);
        cfg.min_visits = j.value("min_visits", cfg.min_visits);
        cfg.max_visits = j.value("max_visits", cfg.max_visits);
        cfg.mean_gap_days = j.value("mean_gap_days", cfg.mean_gap_days);
        cfg.start_age_min = j.value("start_age_min", cfg.start_age_min);
        cfg.start_age_max = j.value("start_age_max", cfg.start_age_max);
        cfg.clusters_per_patient = j.value("clusters_per_patient", cfg.clusters_per_patient);
        cfg.off_cluster_factor = j.value("off_cluster_factor", cfg.off_cluster_factor);
        cfg.recurrence = j.value("recurrence", cfg.recurrence);
        cfg.noise_rate = j.value("noise_rate", cfg.noise_rate);
        for (const auto& jc : j.at("clusters")) {
            ClusterSpec c;
            c.name = jc.at("name").get<std::string>();
            c.diseases = jc.at("diseases").get<std::vector<std::string>>();
            c.onset_rate = jc.value("onset_rate", c.onset_rate);
            c.age_slope = jc.value("age_slope", c.age_slope);
            const std::string sex = jc.value("sex", std::string("any"));
            if (sex != "any") c.sex = parse_sex(sex);
            cfg.clusters.push_back(std::move(c));
        }
        if (j.contains("rules")) {
            for (const auto& jr : j.at("rules")) {
                cfg.rules.push_back({jr.at("trigger").get<std::string>(), jr.at("consequence").get<std::string>(),
                                     jr.at("q").get<double>()});
            }
        }
        validate(cfg);
        return cfg;
    } catch (const ConfigError&) {
        throw;
    } catch (const std::exception& e) {
        throw ConfigError(std::string("generator config: ") + e.what());
    }
}

inline nlohmann::ordered_json to_json(const GeneratorConfig& cfg) {
    nlohmann::ordered_json j;
    j["num_patients"] = cfg.num_patients;
    j["num_diseases"] = cfg.num_diseases;
    j["code_prefix"] = cfg.code_prefix;
    j["min_visits"] = cfg.min_visits;
    j["max_visits"] = cfg.max_visits;
    j["mean_gap_days"] = cfg.mean_gap_days;
    j["start_age_min"] = cfg.start_age_min;
    j["start_age_max"] = cfg.start_age_max;
    j["clusters_per_patient"] = cfg.clusters_per_patient;
    j["off_cluster_factor"] = cfg.off_cluster_factor;
    j["recurrence"] = cfg.recurrence;
    j["noise_rate"] = cfg.noise_rate;
    auto clusters = nlohmann::ordered_json::array();
    for (const auto& c : cfg.clusters) {
        nlohmann::ordered_json jc;
        jc["name"] = c.name;
        jc["diseases"] = c.diseases;
        jc["onset_rate"] = c.onset_rate;
        jc["age_slope"] = c.age_slope;
        jc["sex"] = c.sex ? to_string(*c.sex) : "any";
        clusters.push_back(std::move(jc));
    }
    j["clusters"] = std::move(clusters);
    auto rules = nlohmann::ordered_json::array();
    for (const auto& r : cfg.rules) rules.push_back({{"trigger", r.trigger}, {"consequence", r.consequence}, {"q", r.q}});
    j["rules"] = std::move(rules);
    return j;
}

inline GeneratorConfig load_generator_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open generator config: " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const std::exception& e) {
        throw ConfigError("generator config " + path + ": " + e.what());
    }
    return parse_generator_config(j);
}

}  // namespace behrt::data
