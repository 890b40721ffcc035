#include "lowrank/io.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

namespace lowrank::io {

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

namespace {

json vector_to_json(const Eigen::VectorXd& v) {
    json a = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
    return a;
}

Eigen::VectorXd vector_from_json(const json& a) {
    Eigen::VectorXd v(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) v(i) = a[i].get<double>();
    return v;
}

}  // namespace

json overlap_to_json(const OverlapState& s) {
    return json{{"variant", variant_name(s.variant)},
                {"visible", vector_to_json(s.visible)},
                {"invisible", vector_to_json(s.invisible)}};
}

OverlapState overlap_from_json(const json& j) {
    check_keys(j, {"variant", "visible", "invisible"}, "overlap state");
    return OverlapState(variant_from_name(j.at("variant").get<std::string>()),
                        vector_from_json(j.at("visible")), vector_from_json(j.at("invisible")));
}

json task_to_json(const TaskSpec& spec) {
    json j;
    j["kind"] = task_name(spec);
    if (const auto* f = std::get_if<FilterTaskSpec>(&spec)) {
        j["a_star"] = f->a_star;
        j["c_star"] = f->c_star;
        j["input"] = f->input_kind == InputKind::Impulse ? "impulse" : "white_noise";
    } else if (const auto* o = std::get_if<OscillatorTaskSpec>(&spec)) {
        j["c_star"] = o->c_star;
        j["omega_star"] = o->omega_star;
        j["input"] = o->input_kind == InputKind::Impulse ? "impulse" : "white_noise";
    } else if (const auto* ff = std::get_if<FlipFlopSpec>(&spec)) {
        j["x_amp"] = ff->x_amp;
        j["y_amp"] = ff->y_amp;
        j["t_stim"] = ff->t_stim;
        j["t_delay"] = ff->t_delay;
        j["isd_min"] = ff->isd_min;
        j["isd_max"] = ff->isd_max;
        j["transient_mask"] = ff->transient_mask;
    } else if (const auto* d = std::get_if<DecisionSpec>(&spec)) {
        j["coherences"] = d->coherences;
        j["noise_std"] = d->noise_std;
        j["y_amp"] = d->y_amp;
        j["c_max"] = d->c_max;
        j["t_stim"] = d->t_stim;
        j["t_delay"] = d->t_delay;
    } else if (const auto* t = std::get_if<TeacherSpec>(&spec)) {
        j["teacher_visible"] = vector_to_json(t->teacher_visible);
    }
    return j;
}

TaskSpec task_from_json(const json& j) {
    const std::string kind = j.at("kind").get<std::string>();
    auto input_kind = [&](const json& o) {
        const std::string s = o.value("input", "impulse");
        if (s == "impulse") return InputKind::Impulse;
        if (s == "white_noise") return InputKind::WhiteNoise;
        throw ConfigError("unknown input kind: " + s);
    };
    if (kind == "filter") {
        check_keys(j, {"kind", "a_star", "c_star", "input"}, "filter task");
        FilterTaskSpec f;
        f.a_star = j.value("a_star", f.a_star);
        f.c_star = j.value("c_star", f.c_star);
        f.input_kind = input_kind(j);
        return f;
    }
    if (kind == "oscillator") {
        check_keys(j, {"kind", "c_star", "omega_star", "input"}, "oscillator task");
        OscillatorTaskSpec o;
        o.c_star = j.value("c_star", o.c_star);
        o.omega_star = j.value("omega_star", o.omega_star);
        o.input_kind = input_kind(j);
        return o;
    }
    if (kind == "flipflop") {
        check_keys(j, {"kind", "x_amp", "y_amp", "t_stim", "t_delay", "isd_min", "isd_max",
                       "transient_mask"},
                   "flipflop task");
        FlipFlopSpec f;
        f.x_amp = j.value("x_amp", f.x_amp);
        f.y_amp = j.value("y_amp", f.y_amp);
        f.t_stim = j.value("t_stim", f.t_stim);
        f.t_delay = j.value("t_delay", f.t_delay);
        f.isd_min = j.value("isd_min", f.isd_min);
        f.isd_max = j.value("isd_max", f.isd_max);
        f.transient_mask = j.value("transient_mask", f.transient_mask);
        return f;
    }
    if (kind == "decision") {
        check_keys(j, {"kind", "coherences", "noise_std", "y_amp", "c_max", "t_stim", "t_delay"},
                   "decision task");
        DecisionSpec d;
        if (j.contains("coherences")) d.coherences = j["coherences"].get<std::vector<double>>();
        d.noise_std = j.value("noise_std", d.noise_std);
        d.y_amp = j.value("y_amp", d.y_amp);
        d.c_max = j.value("c_max", d.c_max);
        d.t_stim = j.value("t_stim", d.t_stim);
        d.t_delay = j.value("t_delay", d.t_delay);
        return d;
    }
    if (kind == "teacher") {
        check_keys(j, {"kind", "teacher_visible"}, "teacher task");
        TeacherSpec t;
        t.teacher_visible = vector_from_json(j.at("teacher_visible"));
        return t;
    }
    throw ConfigError("unknown task kind: " + kind);
}

json sim_to_json(const SimConfig& cfg) {
    return json{{"dt", cfg.dt},
                {"horizon", cfg.horizon},
                {"activation_alpha", cfg.activation_alpha}};
}

SimConfig sim_from_json(const json& j) {
    check_keys(j, {"dt", "horizon", "activation_alpha"}, "sim config");
    SimConfig cfg;
    cfg.dt = j.value("dt", cfg.dt);
    cfg.horizon = j.value("horizon", cfg.horizon);
    cfg.activation_alpha = j.value("activation_alpha", cfg.activation_alpha);
    return cfg;
}

json record_to_json(const EpochRecord& r, Variant variant) {
    const auto& info = variant_info(variant);
    json j;
    j["epoch"] = r.epoch;
    j["phase"] = r.phase;
    j["loss"] = r.loss;
    j["eta"] = r.eta;
    for (std::size_t i = 0; i < info.visible_names.size(); ++i) {
        j[info.visible_names[i]] = r.visible(i);
    }
    for (std::size_t i = 0; i < info.invisible_names.size(); ++i) {
        j[info.invisible_names[i]] = r.invisible(i);
    }
    if (r.has_invariants) {
        j["c1"] = r.c[0];
        j["c2"] = r.c[1];
        j["c3"] = r.c[2];
        j["c4"] = r.c[3];
    }
    if (!r.k_entries.empty()) j["k_entries"] = r.k_entries;
    if (r.delta_clamps > 0) j["delta_clamps"] = r.delta_clamps;
    if (r.qq_r.size() > 0) j["qq_r"] = std::vector<double>(r.qq_r.data(),
                                                          r.qq_r.data() + r.qq_r.size());
    return j;
}

void write_trace_jsonl(const std::filesystem::path& path, const TrainTrace& trace,
                       Variant variant) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot open " + path.string());
    for (const auto& r : trace.records) os << record_to_json(r, variant).dump() << "\n";
    if (trace.diverged) {
        os << json{{"diverged", true}, {"diagnostic", trace.diagnostic}}.dump() << "\n";
    }
}

void write_trace_csv(const std::filesystem::path& path, const TrainTrace& trace,
                     Variant variant) {
    const auto& info = variant_info(variant);
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot open " + path.string());
    os << "epoch,phase,loss,eta";
    for (const auto& n : info.visible_names) os << "," << n;
    for (const auto& n : info.invisible_names) os << "," << n;
    const bool with_c = !trace.records.empty() && trace.records.front().has_invariants;
    if (with_c) os << ",c1,c2,c3,c4";
    const std::size_t n_entries =
        trace.records.empty() ? 0 : trace.records.front().k_entries.size();
    for (std::size_t i = 0; i < n_entries; ++i) os << ",k" << i + 1;
    os << "\n";
    for (const auto& r : trace.records) {
        os << r.epoch << "," << r.phase << "," << format_double(r.loss) << ","
           << format_double(r.eta);
        for (Eigen::Index i = 0; i < r.visible.size(); ++i) {
            os << "," << format_double(r.visible(i));
        }
        for (Eigen::Index i = 0; i < r.invisible.size(); ++i) {
            os << "," << format_double(r.invisible(i));
        }
        if (with_c) {
            for (double c : r.c) os << "," << format_double(c);
        }
        for (std::size_t i = 0; i < n_entries; ++i) {
            os << "," << format_double(i < r.k_entries.size() ? r.k_entries[i] : 0.0);
        }
        os << "\n";
    }
}

void write_trajectory_csv(const std::filesystem::path& path, const EffectiveTrajectory& traj,
                          const SimConfig& cfg) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot open " + path.string());
    const bool has_delta = traj.delta.size() > 0;
    os << "t";
    for (Eigen::Index c = 0; c < traj.kappa.cols(); ++c) os << ",kappa" << c + 1;
    if (has_delta) os << ",delta";
    os << ",output\n";
    for (Eigen::Index k = 0; k < traj.output.size(); ++k) {
        os << format_double(k * cfg.dt);
        for (Eigen::Index c = 0; c < traj.kappa.cols(); ++c) {
            os << "," << format_double(traj.kappa(k, c));
        }
        if (has_delta) os << "," << format_double(traj.delta(k));
        os << "," << format_double(traj.output(k)) << "\n";
    }
}

void write_text(const std::filesystem::path& path, const std::string& content) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot open " + path.string());
    os << content;
}

void write_json(const std::filesystem::path& path, const json& j) {
    write_text(path, j.dump(2) + "\n");
}

json read_json_file(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open config file: " + path.string());
    std::stringstream buf;
    buf << is.rdbuf();
    const std::string text = buf.str();
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        // Translate the byte offset into line/column for the diagnostic.
        std::size_t line = 1, col = 1;
        for (std::size_t i = 0; i + 1 < e.byte && i < text.size(); ++i) {
            if (text[i] == '\n') {
                ++line;
                col = 1;
            } else {
                ++col;
            }
        }
        throw ConfigError(path.string() + ":" + std::to_string(line) + ":" + std::to_string(col) +
                          ": " + e.what());
    }
}

void check_keys(const json& j, const std::set<std::string>& allowed,
                const std::string& context) {
    if (!j.is_object()) throw ConfigError(context + ": expected a JSON object");
    for (const auto& [key, value] : j.items()) {
        if (!allowed.count(key)) throw ConfigError(context + ": unknown field \"" + key + "\"");
    }
}

std::string fnv1a_file(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot hash missing file " + path.string());
    std::uint64_t h = 0xcbf29ce484222325ull;
    char buf[8192];
    while (is.read(buf, sizeof(buf)) || is.gcount() > 0) {
        const std::streamsize got = is.gcount();
        for (std::streamsize i = 0; i < got; ++i) {
            h ^= static_cast<unsigned char>(buf[i]);
            h *= 0x100000001b3ull;
        }
        if (!is) break;
    }
    char out[17];
    std::snprintf(out, sizeof(out), "%016llx", static_cast<unsigned long long>(h));
    return out;
}

}  // namespace lowrank::io
