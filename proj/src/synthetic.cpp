#include "synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <json.hpp>

#include "analysis.hpp"
#include "errors.hpp"

namespace nastl {

SyntheticSpec SyntheticSpec::four_task_default() {
    SyntheticSpec s;
    SyntheticTaskSpec cls;
    cls.name = "class_object";
    cls.metric_name = "top1_accuracy";
    cls.band_lo = 0.30;
    cls.band_hi = 0.47;
    SyntheticTaskSpec room{.name = "room_layout", .metric_name = "neg_loss", .band_lo = -0.75, .band_hi = -0.55,
                           .correlate_with = "class_object", .correlation = 0.5};
    SyntheticTaskSpec ae{.name = "autoencoder", .metric_name = "ssim", .band_lo = 0.45, .band_hi = 0.75,
                         .correlate_with = "class_object", .correlation = 0.3};
    SyntheticTaskSpec seg{.name = "segmentsemantic", .metric_name = "mIoU", .family = LandscapeFamily::skewed,
                          .band_lo = 0.02, .band_hi = 0.08, .correlate_with = "class_object", .correlation = 0.4};
    s.tasks = {cls, room, ae, seg};
    return s;
}

void SyntheticSpec::validate() const {
    descriptor.validate();
    require(!tasks.empty(), ErrorKind::invalid_argument, "synthetic spec declares no tasks");
    for (size_t i = 0; i < tasks.size(); ++i) {
        const auto& t = tasks[i];
        require(!t.name.empty(), ErrorKind::invalid_argument, "synthetic task " + std::to_string(i) + " has no name");
        require(t.band_lo < t.band_hi, ErrorKind::invalid_argument, "task '" + t.name + "': band must have lo < hi");
        require(t.landscape_noise >= 0.0 && t.split_noise >= 0.0, ErrorKind::invalid_argument,
                "task '" + t.name + "': noise levels must be non-negative");
        require(t.skew_power > 0.0, ErrorKind::invalid_argument, "task '" + t.name + "': skew_power must be positive");
        require(t.correlation >= -1.0 && t.correlation <= 1.0, ErrorKind::invalid_argument,
                "task '" + t.name + "': correlation target " + std::to_string(t.correlation) + " outside [-1, 1]");
        if (!t.correlate_with.empty()) {
            bool found = false;
            for (size_t j = 0; j < i; ++j) {
                found = found || tasks[j].name == t.correlate_with;
            }
            require(found, ErrorKind::invalid_argument,
                    "task '" + t.name + "': correlate_with must name an earlier task ('" + t.correlate_with + "')");
        }
        for (size_t j = 0; j < i; ++j) {
            require(tasks[j].name != t.name, ErrorKind::invalid_argument, "duplicate task '" + t.name + "'");
        }
    }
}

SyntheticSpec parse_synthetic_spec(std::string_view text) {
    using nlohmann::json;
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::exception& e) {
        fail(ErrorKind::format, std::string("synthetic spec: ") + e.what());
    }
    SyntheticSpec s;
    try {
        if (doc.contains("search_space")) {
            const auto& ss = doc["search_space"];
            s.descriptor.node_count = ss.at("node_count").get<int>();
            s.descriptor.edges = ss.at("edges").get<std::vector<std::pair<int, int>>>();
            s.descriptor.ops = ss.at("ops").get<std::vector<std::string>>();
        }
        for (const auto& t : doc.at("tasks")) {
            SyntheticTaskSpec ts;
            ts.name = t.at("name").get<std::string>();
            ts.metric_name = t.value("metric_name", ts.metric_name);
            ts.higher_is_better = t.value("higher_is_better", true);
            const std::string fam = t.value("family", std::string("smooth"));
            require(fam == "smooth" || fam == "skewed", ErrorKind::invalid_argument,
                    "task '" + ts.name + "': unknown family '" + fam + "'");
            ts.family = fam == "smooth" ? LandscapeFamily::smooth : LandscapeFamily::skewed;
            if (t.contains("band")) {
                const auto band = t["band"].get<std::vector<double>>();
                require(band.size() == 2, ErrorKind::invalid_argument, "task '" + ts.name + "': band needs [lo, hi]");
                ts.band_lo = band[0];
                ts.band_hi = band[1];
            }
            ts.landscape_noise = t.value("landscape_noise", ts.landscape_noise);
            ts.split_noise = t.value("split_noise", ts.split_noise);
            ts.skew_power = t.value("skew_power", ts.skew_power);
            ts.correlate_with = t.value("correlate_with", std::string());
            ts.correlation = t.value("correlation", 0.0);
            s.tasks.push_back(std::move(ts));
        }
    } catch (const json::exception& e) {
        fail(ErrorKind::format, std::string("synthetic spec: ") + e.what());
    }
    s.validate();
    return s;
}

namespace {

void standardize(std::vector<double>& v) {
    const double m = mean_of(v);
    double ss = 0.0;
    for (double x : v) {
        ss += (x - m) * (x - m);
    }
    const double sd = std::sqrt(ss / static_cast<double>(v.size()));
    for (double& x : v) {
        x = sd > 0.0 ? (x - m) / sd : 0.0;
    }
}

// Independent structure of one task: Hamming falloff around its optimum
// plus per-architecture roughness, and three split-noise draws.
struct TaskDraws {
    CellArch optimum;
    std::vector<double> latent;
    std::array<std::vector<double>, 3> split_noise;
};

TaskDraws draw_task(Rng& rng, const SearchSpaceDescriptor& desc, const std::vector<CellArch>& all,
                    const SyntheticTaskSpec& t) {
    TaskDraws d;
    d.optimum = random_arch(rng, desc);
    const double edges = static_cast<double>(desc.edge_count());
    d.latent.resize(all.size());
    for (size_t i = 0; i < all.size(); ++i) {
        d.latent[i] = -static_cast<double>(hamming_distance(all[i], d.optimum)) / edges + t.landscape_noise * standard_normal(rng);
    }
    const double scale = [&] {
        std::vector<double> tmp = d.latent;
        const double m = mean_of(tmp);
        double ss = 0.0;
        for (double x : tmp) ss += (x - m) * (x - m);
        return std::sqrt(ss / static_cast<double>(tmp.size()));
    }();
    standardize(d.latent);
    for (auto& s : d.split_noise) {
        s.resize(all.size());
        for (double& x : s) {
            // split noise is expressed relative to the latent spread
            x = scale > 0.0 ? t.split_noise / scale * standard_normal(rng) : 0.0;
        }
    }
    return d;
}

struct TaskValues {
    std::array<std::vector<double>, 3> split;  // latent + noise, per split
    CellArch optimum;
};

TaskValues combine(const TaskDraws& own, const TaskValues* ref, double rho, const std::vector<CellArch>& all,
                   const SearchSpaceDescriptor& desc) {
    TaskValues out;
    const size_t n = all.size();
    const double w = std::sqrt(std::max(0.0, 1.0 - rho * rho));
    std::vector<double> latent(n);
    for (size_t i = 0; i < n; ++i) {
        latent[i] = ref ? rho * ref->split[1][i] + w * own.latent[i] : own.latent[i];
    }
    for (int s = 0; s < 3; ++s) {
        out.split[s].resize(n);
        for (size_t i = 0; i < n; ++i) {
            if (ref) {
                // mix the reference's finished split values so that rho = +-1
                // reproduces its ranking exactly
                out.split[s][i] = rho * ref->split[s][i] + w * (own.latent[i] + own.split_noise[s][i]);
            } else {
                out.split[s][i] = latent[i] + own.split_noise[s][i];
            }
        }
    }
    if (ref && std::abs(rho) == 1.0) {
        const auto best = std::max_element(out.split[1].begin(), out.split[1].end()) - out.split[1].begin();
        out.optimum = all[best];
        return out;
    }
    // Planted optimum sits strictly above every other value in every split.
    out.optimum = own.optimum;
    const uint64_t r = arch_rank(own.optimum, desc);
    for (int s = 0; s < 3; ++s) {
        double top = -INFINITY;
        for (size_t i = 0; i < n; ++i) {
            if (i != r) top = std::max(top, out.split[s][i]);
        }
        out.split[s][r] = std::max(out.split[s][r], top + 0.1);
    }
    return out;
}

double oriented_tau(const TaskValues& a, const TaskValues& b) {
    return kendall_tau(a.split[1], b.split[1]);
}

}  // namespace

SyntheticBenchmark generate_synthetic_with_optima(uint64_t seed, const SyntheticSpec& spec) {
    spec.validate();
    const auto& desc = spec.descriptor;
    const auto all = enumerate_all(desc);
    Rng rng(derive_seed(seed, "synthetic"));

    std::vector<TaskValues> values;
    for (const auto& t : spec.tasks) {
        const TaskDraws own = draw_task(rng, desc, all, t);
        const TaskValues* ref = nullptr;
        if (!t.correlate_with.empty()) {
            for (size_t j = 0; j < values.size(); ++j) {
                if (spec.tasks[j].name == t.correlate_with) ref = &values[j];
            }
        }
        if (!ref) {
            values.push_back(combine(own, nullptr, 0.0, all, desc));
            continue;
        }
        if (std::abs(t.correlation) == 1.0) {
            values.push_back(combine(own, ref, t.correlation, all, desc));
            continue;
        }
        // Bisection on the mixing weight until the valid-split tau hits the
        // target; tau is monotone in rho for this construction.
        double lo = -1.0;
        double hi = 1.0;
        TaskValues best = combine(own, ref, 0.0, all, desc);
        for (int it = 0; it < 40; ++it) {
            const double mid = 0.5 * (lo + hi);
            best = combine(own, ref, mid, all, desc);
            const double tau = oriented_tau(best, *ref);
            if (std::abs(tau - t.correlation) < 1e-4) break;
            (tau < t.correlation ? lo : hi) = mid;
        }
        values.push_back(std::move(best));
    }

    std::vector<TaskSpec> tasks;
    for (const auto& t : spec.tasks) {
        tasks.push_back({t.name, t.metric_name, t.higher_is_better});
    }
    std::vector<ArchRecord> records(all.size());
    for (size_t i = 0; i < all.size(); ++i) {
        records[i].arch = all[i];
        records[i].metrics.resize(spec.tasks.size());
    }
    SyntheticBenchmark out;
    for (size_t t = 0; t < spec.tasks.size(); ++t) {
        const auto& ts = spec.tasks[t];
        for (int s = 0; s < 3; ++s) {
            const auto& v = values[t].split[s];
            const auto [mn, mx] = std::minmax_element(v.begin(), v.end());
            const double span = *mx - *mn;
            for (size_t i = 0; i < all.size(); ++i) {
                double u = span > 0.0 ? (v[i] - *mn) / span : 0.5;
                if (ts.family == LandscapeFamily::skewed) {
                    u = std::pow(u, ts.skew_power);
                }
                double m = ts.higher_is_better ? ts.band_lo + (ts.band_hi - ts.band_lo) * u
                                               : ts.band_hi - (ts.band_hi - ts.band_lo) * u;
                m = std::clamp(m, ts.band_lo, ts.band_hi);
                double* dst = s == 0 ? &records[i].metrics[t].train : s == 1 ? &records[i].metrics[t].valid
                                                                             : &records[i].metrics[t].test;
                *dst = m;
            }
        }
        out.planted_optima.push_back(values[t].optimum);
    }
    out.bench = Benchmark(desc, std::move(tasks), std::move(records));
    return out;
}

Benchmark generate_synthetic(uint64_t seed, const SyntheticSpec& spec) {
    return generate_synthetic_with_optima(seed, spec).bench;
}

}  // namespace nastl
