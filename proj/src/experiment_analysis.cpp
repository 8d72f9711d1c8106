#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "analysis.hpp"
#include "errors.hpp"
#include "evaluate.hpp"
#include "transfer_lab.hpp"

namespace nastl {

namespace fs = std::filesystem;
using json = nlohmann::json;

TrainingCurve curve_from_events(const std::vector<RunEvent>& events) {
    TrainingCurve c;
    for (const auto& ev : events) {
        if (ev.type == "eval" && ev.fields.contains("mean")) {
            c.points.push_back({ev.step, ev.walltime_s, ev.fields.at("mean").get<double>()});
        }
    }
    return c;
}

namespace {

std::string num(double v) {
    if (std::isnan(v)) {
        return "nan";
    }
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::vector<std::string> plan_tasks(const Manifest& m) {
    if (m.plan.contains("tasks")) {
        return m.plan.at("tasks").get<std::vector<std::string>>();
    }
    std::vector<std::string> tasks;
    for (const auto& c : m.cells) {
        if (std::find(tasks.begin(), tasks.end(), c.source) == tasks.end()) {
            tasks.push_back(c.source);
        }
    }
    return tasks;
}

std::vector<uint64_t> plan_seeds(const Manifest& m) {
    std::vector<uint64_t> seeds;
    for (const auto& c : m.cells) {
        if (std::find(seeds.begin(), seeds.end(), c.seed) == seeds.end()) {
            seeds.push_back(c.seed);
        }
    }
    return seeds;
}

// The cell that stands for (source, target) under a regime; the diagonal is
// the from-scratch pretrain run.
const ManifestCell* cell_for(const Manifest& m, uint64_t seed, const std::string& s, const std::string& t,
                             const std::string& regime) {
    return m.find(seed, s, t, s == t ? "pretrain" : regime);
}

bool usable(const fs::path& root, const ManifestCell* c) {
    return c && c->status == "complete" && fs::exists(root / c->eval);
}

json read_json_file(const fs::path& p) {
    std::ifstream f(p);
    require(f.good(), ErrorKind::io, "cannot read " + p.string());
    try {
        return json::parse(f);
    } catch (const json::exception& e) {
        fail(ErrorKind::format, p.string() + ": " + e.what());
    }
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : line) {
        if (ch == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (ch != '\r') {
            cur.push_back(ch);
        }
    }
    out.push_back(cur);
    return out;
}

double parse_num(const std::string& s, size_t line) {
    if (s == "nan") {
        return NAN;
    }
    char* end = nullptr;
    const double v = std::strtod(s.c_str(), &end);
    require(end && *end == '\0' && !s.empty(), ErrorKind::format,
            "matrix csv line " + std::to_string(line) + ": bad number '" + s + "'");
    return v;
}

}  // namespace

MatrixReport performance_matrix(const fs::path& experiment_dir, const std::string& regime, uint64_t seed) {
    parse_regime(regime);
    const Manifest m = Manifest::read(experiment_dir);
    MatrixReport rep;
    rep.tasks = plan_tasks(m);
    const auto seeds = plan_seeds(m);
    for (const auto& s : rep.tasks) {
        for (const auto& t : rep.tasks) {
            std::vector<double> means;
            for (uint64_t sd : seeds) {
                const ManifestCell* c = cell_for(m, sd, s, t, regime);
                if (!usable(experiment_dir, c)) {
                    rep.missing.push_back(cell_dir(sd, s, t, s == t ? "pretrain" : regime).generic_string());
                    continue;
                }
                means.push_back(EvalReport::from_json(read_json_file(experiment_dir / c->eval)).mean);
            }
            MatrixCell cell;
            cell.source = s;
            cell.target = t;
            cell.n = static_cast<int>(means.size());
            if (means.empty()) {
                cell.mean = cell.std = cell.ci_low = cell.ci_high = NAN;
            } else if (means.size() == 1) {
                cell.mean = cell.ci_low = cell.ci_high = means[0];
                cell.std = 0.0;
            } else {
                const Interval iv = bootstrap_ci(means, 0.95, 10000, derive_seed(seed, s + ">" + t));
                cell.mean = iv.mean;
                cell.ci_low = iv.ci_low;
                cell.ci_high = iv.ci_high;
                cell.std = sample_std(means);
            }
            rep.cells.push_back(cell);
        }
    }
    return rep;
}

std::string matrix_to_csv(const MatrixReport& report) {
    std::ostringstream os;
    os << "source,target,mean,std,ci_low,ci_high,n\n";
    for (const auto& c : report.cells) {
        os << c.source << ',' << c.target << ',' << num(c.mean) << ',' << num(c.std) << ',' << num(c.ci_low) << ','
           << num(c.ci_high) << ',' << c.n << '\n';
    }
    return os.str();
}

MatrixReport matrix_from_csv(const std::string& csv) {
    std::istringstream is(csv);
    std::string line;
    require(static_cast<bool>(std::getline(is, line)), ErrorKind::format, "matrix csv is empty");
    require(split_csv_line(line) ==
                std::vector<std::string>{"source", "target", "mean", "std", "ci_low", "ci_high", "n"},
            ErrorKind::format, "matrix csv: unexpected header '" + line + "'");
    MatrixReport rep;
    size_t lineno = 1;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) {
            continue;
        }
        const auto f = split_csv_line(line);
        require(f.size() == 7, ErrorKind::format, "matrix csv line " + std::to_string(lineno) + ": expected 7 fields");
        MatrixCell c;
        c.source = f[0];
        c.target = f[1];
        c.mean = parse_num(f[2], lineno);
        c.std = parse_num(f[3], lineno);
        c.ci_low = parse_num(f[4], lineno);
        c.ci_high = parse_num(f[5], lineno);
        c.n = static_cast<int>(parse_num(f[6], lineno));
        for (const auto& name : {c.source, c.target}) {
            if (std::find(rep.tasks.begin(), rep.tasks.end(), name) == rep.tasks.end()) {
                rep.tasks.push_back(name);
            }
        }
        rep.cells.push_back(c);
    }
    return rep;
}

std::string matrix_to_svg(const MatrixReport& report, const std::string& title) {
    const int cell = 110;
    const int left = 150;
    const int top = 70;
    const int n = static_cast<int>(report.tasks.size());
    double lo = INFINITY;
    double hi = -INFINITY;
    for (const auto& c : report.cells) {
        if (c.n > 0) {
            lo = std::min(lo, c.mean);
            hi = std::max(hi, c.mean);
        }
    }
    std::ostringstream os;
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << left + n * cell + 20 << "\" height=\""
       << top + n * cell + 40 << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
    os << "<text x=\"10\" y=\"24\" font-size=\"16\">" << title << "</text>\n";
    os << "<text x=\"" << left << "\" y=\"48\">target</text>\n";
    for (int i = 0; i < n; ++i) {
        os << "<text x=\"" << left + i * cell + 6 << "\" y=\"" << top - 6 << "\">" << report.tasks[i] << "</text>\n";
        os << "<text x=\"6\" y=\"" << top + i * cell + cell / 2 << "\">" << report.tasks[i] << "</text>\n";
    }
    for (const auto& c : report.cells) {
        const auto si = std::find(report.tasks.begin(), report.tasks.end(), c.source) - report.tasks.begin();
        const auto ti = std::find(report.tasks.begin(), report.tasks.end(), c.target) - report.tasks.begin();
        const int x = left + static_cast<int>(ti) * cell;
        const int y = top + static_cast<int>(si) * cell;
        std::string fill = "#dddddd";
        if (c.n > 0) {
            const double u = hi > lo ? (c.mean - lo) / (hi - lo) : 0.5;
            const int g = static_cast<int>(235 - 150 * u);
            char buf[16];
            std::snprintf(buf, sizeof buf, "#%02x%02xff", g, g);
            fill = buf;
        }
        os << "<rect x=\"" << x << "\" y=\"" << y << "\" width=\"" << cell << "\" height=\"" << cell
           << "\" fill=\"" << fill << "\" stroke=\"#ffffff\"/>\n";
        char txt[96];
        if (c.n > 0) {
            std::snprintf(txt, sizeof txt, "%.4f", c.mean);
        } else {
            std::snprintf(txt, sizeof txt, "missing");
        }
        os << "<text x=\"" << x + 8 << "\" y=\"" << y + cell / 2 << "\">" << txt << "</text>\n";
        if (c.n > 1) {
            std::snprintf(txt, sizeof txt, "[%.4f, %.4f]", c.ci_low, c.ci_high);
            os << "<text x=\"" << x + 8 << "\" y=\"" << y + cell / 2 + 16 << "\" font-size=\"10\">" << txt
               << "</text>\n";
        }
    }
    os << "<text x=\"10\" y=\"" << top + n * cell + 28 << "\">rows: source task, diagonal: trained from scratch</text>\n";
    os << "</svg>\n";
    return os.str();
}

std::string curves_csv(const fs::path& experiment_dir, const std::string& regime, int kernel) {
    parse_regime(regime);
    const Manifest m = Manifest::read(experiment_dir);
    std::ostringstream os;
    os << "seed,source,target,regime,step,walltime_s,value,smoothed\n";
    for (const auto& c : m.cells) {
        if ((c.regime != regime && c.regime != "pretrain") || c.status != "complete") {
            continue;
        }
        const auto curve = curve_from_events(RunLog::read(experiment_dir / c.runlog).events());
        std::vector<double> smooth(curve.points.size(), NAN);
        if (curve.points.size() >= static_cast<size_t>(kernel)) {
            const auto sm = smooth_curve(curve, kernel);
            for (size_t i = 0; i < sm.points.size(); ++i) {
                smooth[i + kernel - 1] = sm.points[i].value;
            }
        }
        for (size_t i = 0; i < curve.points.size(); ++i) {
            const auto& p = curve.points[i];
            os << c.seed << ',' << c.source << ',' << c.target << ',' << c.regime << ',' << p.step << ','
               << num(p.walltime_s) << ',' << num(p.value) << ',' << (std::isnan(smooth[i]) ? "" : num(smooth[i]))
               << '\n';
        }
    }
    return os.str();
}

std::string crossover_csv(const fs::path& experiment_dir, const std::string& regime, ReferenceMode mode, int kernel,
                          uint64_t seed) {
    parse_regime(regime);
    const Manifest m = Manifest::read(experiment_dir);
    const auto tasks = plan_tasks(m);
    const auto seeds = plan_seeds(m);
    std::ostringstream os;
    os << "source,target,pair_count,crossed_count,mean_steps,ci_low,ci_high,mean_walltime_s,walltime_ci_low,"
          "walltime_ci_high,note\n";
    auto curves = [&](const std::string& s, const std::string& t, const std::string& r) {
        std::vector<TrainingCurve> out;
        for (uint64_t sd : seeds) {
            const ManifestCell* c = m.find(sd, s, t, r);
            if (c && c->status == "complete" && fs::exists(experiment_dir / c->runlog)) {
                out.push_back(curve_from_events(RunLog::read(experiment_dir / c->runlog).events()));
            }
        }
        return out;
    };
    for (const auto& s : tasks) {
        for (const auto& t : tasks) {
            if (s == t) {
                continue;
            }
            const auto transfer = curves(s, t, regime);
            const auto reference = curves(t, t, "pretrain");
            std::string note;
            bool short_curve = false;
            for (const auto* group : {&transfer, &reference}) {
                for (const auto& c : *group) {
                    short_curve = short_curve || c.points.size() < static_cast<size_t>(kernel);
                }
            }
            EquivalenceReport eq;
            if (transfer.empty() || reference.empty()) {
                note = "missing runs";
                eq.steps = eq.walltime_s = Interval{NAN, NAN, NAN};
            } else if (short_curve) {
                note = "curve shorter than smoothing kernel";
                eq.pair_count = static_cast<int>(transfer.size() * reference.size());
                eq.steps = eq.walltime_s = Interval{NAN, NAN, NAN};
            } else {
                eq = time_to_equivalence(transfer, reference, mode, kernel, derive_seed(seed, s + ">" + t));
                if (eq.crossed_count < eq.pair_count) {
                    note = std::to_string(eq.pair_count - eq.crossed_count) + " pairs never crossed (excluded)";
                }
            }
            os << s << ',' << t << ',' << eq.pair_count << ',' << eq.crossed_count << ',' << num(eq.steps.mean) << ','
               << num(eq.steps.ci_low) << ',' << num(eq.steps.ci_high) << ',' << num(eq.walltime_s.mean) << ','
               << num(eq.walltime_s.ci_low) << ',' << num(eq.walltime_s.ci_high) << ',' << note << '\n';
        }
    }
    return os.str();
}

}  // namespace nastl
