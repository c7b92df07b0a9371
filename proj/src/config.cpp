#include "sentinel/config.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "sentinel/errors.hpp"

namespace sentinel {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::string fmt_double(double v) {
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

double parse_double(const std::string& s) {
    if (s == "inf" || s == "iid" || s == "infinity") return std::numeric_limits<double>::infinity();
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument("trailing characters");
    return v;
}

template <typename Int>
Int parse_int(const std::string& s) {
    Int v{};
    const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || p != s.data() + s.size()) throw std::invalid_argument("not an integer");
    return v;
}

bool parse_bool(const std::string& s) {
    if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
    if (s == "false" || s == "0" || s == "no" || s == "off") return false;
    throw std::invalid_argument("not a boolean");
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

struct Field {
    std::function<void(RunConfig&, const std::string&)> set;
    std::function<std::string(const RunConfig&)> get;
};

template <typename T>
Field number(T RunConfig::*m) {
    return {[m](RunConfig& c, const std::string& v) {
                if constexpr (std::is_floating_point_v<T>) {
                    c.*m = parse_double(v);
                } else {
                    c.*m = parse_int<T>(v);
                }
            },
            [m](const RunConfig& c) {
                if constexpr (std::is_floating_point_v<T>) {
                    return fmt_double(c.*m);
                } else {
                    return std::to_string(c.*m);
                }
            }};
}

Field flag(bool RunConfig::*m) {
    return {[m](RunConfig& c, const std::string& v) { c.*m = parse_bool(v); },
            [m](const RunConfig& c) { return std::string(c.*m ? "true" : "false"); }};
}

Field text(std::string RunConfig::*m) {
    return {[m](RunConfig& c, const std::string& v) { c.*m = v; }, [m](const RunConfig& c) { return c.*m; }};
}

const std::vector<std::pair<std::string, Field>>& fields() {
    static const std::vector<std::pair<std::string, Field>> table = {
        {"csv_path", text(&RunConfig::csv_path)},
        {"label_column", text(&RunConfig::label_column)},
        {"synth_counts",
         {[](RunConfig& c, const std::string& v) {
              c.synth_counts.clear();
              for (const auto& item : split_list(v)) c.synth_counts.push_back(parse_int<long>(item));
          },
          [](const RunConfig& c) {
              std::string out;
              for (std::size_t i = 0; i < c.synth_counts.size(); ++i) {
                  out += (i ? "," : "") + std::to_string(c.synth_counts[i]);
              }
              return out;
          }}},
        {"synth_dim", number(&RunConfig::synth_dim)},
        {"synth_separation", number(&RunConfig::synth_separation)},
        {"num_clients", number(&RunConfig::num_clients)},
        {"rounds", number(&RunConfig::rounds)},
        {"local_epochs", number(&RunConfig::local_epochs)},
        {"batch_size", number(&RunConfig::batch_size)},
        {"lr", number(&RunConfig::lr)},
        {"variant", text(&RunConfig::variant)},
        {"alpha", number(&RunConfig::alpha)},
        {"seed", number(&RunConfig::seed)},
        {"rho", number(&RunConfig::rho)},
        {"p_drop", number(&RunConfig::p_drop)},
        {"t_thresh", number(&RunConfig::t_thresh)},
        {"eta", number(&RunConfig::eta)},
        {"beta_momentum", number(&RunConfig::beta_momentum)},
        {"use_balanced", flag(&RunConfig::use_balanced)},
        {"use_kd", flag(&RunConfig::use_kd)},
        {"use_align", flag(&RunConfig::use_align)},
        {"out_dir", text(&RunConfig::out_dir)},
        {"train_fraction", number(&RunConfig::train_fraction)},
        {"min_per_client", number(&RunConfig::min_per_client)},
        {"clip_norm", number(&RunConfig::clip_norm)},
        {"weight_decay", number(&RunConfig::weight_decay)},
        {"lr_decay", number(&RunConfig::lr_decay)},
        {"bank_capacity", number(&RunConfig::bank_capacity)},
        {"scaler", text(&RunConfig::scaler)},
        {"delta_mode", text(&RunConfig::delta_mode)},
        {"macro_mode", text(&RunConfig::macro_mode)},
        {"reset_student_optimizer", flag(&RunConfig::reset_student_optimizer)},
        {"threads", number(&RunConfig::threads)},
        {"straggler_delay",
         {[](RunConfig& c, const std::string& v) {
              c.straggler_delay.clear();
              for (const auto& item : split_list(v)) c.straggler_delay.push_back(parse_double(item));
          },
          [](const RunConfig& c) {
              std::string out;
              for (std::size_t i = 0; i < c.straggler_delay.size(); ++i) {
                  out += (i ? "," : "") + fmt_double(c.straggler_delay[i]);
              }
              return out;
          }}},
    };
    return table;
}

const Field* find_field(const std::string& key) {
    for (const auto& [k, f] : fields()) {
        if (k == key) return &f;
    }
    return nullptr;
}

std::string join(const std::vector<std::string>& items) {
    std::string out;
    for (std::size_t i = 0; i < items.size(); ++i) out += (i ? ", " : "") + items[i];
    return out;
}

// FedAvg has a single plain-CE model, so the Sentinel loss toggles are off.
RunConfig effective(const RunConfig& cfg) {
    RunConfig out = cfg;
    if (out.is_fedavg()) out.use_balanced = out.use_kd = out.use_align = false;
    return out;
}

}  // namespace

std::vector<std::string> config_keys() {
    std::vector<std::string> keys;
    for (const auto& [k, f] : fields()) keys.push_back(k);
    return keys;
}

RunConfig parse_config(const std::string& text) {
    RunConfig cfg;
    std::vector<std::string> unknown, invalid, duplicate;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            invalid.push_back("line " + std::to_string(lineno) + " (expected key = value)");
            continue;
        }
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        const Field* f = find_field(key);
        if (!f) {
            unknown.push_back(key);
            continue;
        }
        if (!cfg.explicit_keys.insert(key).second) duplicate.push_back(key);
        try {
            f->set(cfg, value);
        } catch (const std::exception&) {
            invalid.push_back(key + "='" + value + "'");
        }
    }
    std::string msg;
    if (!unknown.empty()) msg += "unknown keys: " + join(unknown);
    if (!duplicate.empty()) msg += std::string(msg.empty() ? "" : "; ") + "duplicate keys: " + join(duplicate);
    if (!invalid.empty()) msg += std::string(msg.empty() ? "" : "; ") + "invalid values: " + join(invalid);
    if (!msg.empty()) throw ConfigError("config: " + msg);
    validate_config(cfg);
    return effective(cfg);
}

RunConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config: cannot read '" + path.string() + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

std::string serialize_config(const RunConfig& cfg) {
    const RunConfig eff = effective(cfg);
    std::string out;
    for (const auto& [k, f] : fields()) out += k + " = " + f.get(eff) + "\n";
    return out;
}

bool same_effective_values(const RunConfig& a, const RunConfig& b) {
    for (const auto& [k, f] : fields()) {
        if (f.get(effective(a)) != f.get(effective(b))) return false;
    }
    return true;
}

void validate_config(const RunConfig& cfg) {
    std::vector<std::string> bad;
    auto check = [&](bool ok, const std::string& what) {
        if (!ok) bad.push_back(what);
    };
    check(cfg.variant == "sentinel-1" || cfg.variant == "sentinel-2" || cfg.variant == "fedavg",
          "variant (sentinel-1 | sentinel-2 | fedavg)");
    check(cfg.num_clients >= 1, "num_clients (>= 1)");
    check(cfg.rounds >= 0, "rounds (>= 0)");
    check(cfg.local_epochs >= 0, "local_epochs (>= 0)");
    check(cfg.batch_size >= 1, "batch_size (>= 1)");
    check(cfg.lr > 0.0 && std::isfinite(cfg.lr), "lr (> 0)");
    check(cfg.alpha > 0.0, "alpha (> 0 or inf)");
    check(cfg.rho > 0.0 && cfg.rho <= 1.0, "rho (0, 1]");
    check(cfg.p_drop >= 0.0 && cfg.p_drop < 1.0, "p_drop [0, 1)");
    check(cfg.t_thresh > 0.0, "t_thresh (> 0)");
    check(cfg.eta > 0.0 && std::isfinite(cfg.eta), "eta (> 0)");
    check(cfg.beta_momentum >= 0.0 && cfg.beta_momentum < 1.0, "beta_momentum [0, 1)");
    check(cfg.train_fraction > 0.0 && cfg.train_fraction < 1.0, "train_fraction (0, 1)");
    check(cfg.min_per_client >= 0, "min_per_client (>= 0)");
    check(cfg.clip_norm > 0.0, "clip_norm (> 0)");
    check(cfg.weight_decay >= 0.0, "weight_decay (>= 0)");
    check(cfg.lr_decay > 0.0 && cfg.lr_decay <= 1.0, "lr_decay (0, 1]");
    check(cfg.bank_capacity >= 1, "bank_capacity (>= 1)");
    check(cfg.scaler == "local" || cfg.scaler == "global", "scaler (local | global)");
    check(cfg.delta_mode == "mean" || cfg.delta_mode == "geometric", "delta_mode (mean | geometric)");
    check(cfg.macro_mode == "all" || cfg.macro_mode == "present", "macro_mode (all | present)");
    check(cfg.threads >= 1, "threads (>= 1)");
    for (double d : cfg.straggler_delay) check(d >= 0.0 && std::isfinite(d), "straggler_delay (>= 0)");
    if (cfg.csv_path.empty()) {
        check(!cfg.synth_counts.empty(), "synth_counts (non-empty)");
        for (long n : cfg.synth_counts) check(n >= 1, "synth_counts (each >= 1)");
        check(cfg.synth_dim >= 1, "synth_dim (>= 1)");
        check(cfg.synth_separation >= 0.0, "synth_separation (>= 0)");
    } else {
        check(!cfg.label_column.empty(), "label_column (non-empty)");
    }
    if (cfg.is_fedavg()) {
        std::vector<std::string> clash;
        for (const auto* key : {"use_balanced", "use_kd", "use_align"}) {
            const bool on = std::string(key) == "use_balanced" ? cfg.use_balanced
                            : std::string(key) == "use_kd"     ? cfg.use_kd
                                                               : cfg.use_align;
            if (cfg.explicit_keys.count(key) && on) clash.push_back(key);
        }
        if (!clash.empty()) bad.push_back("incompatible keys with variant=fedavg: " + join(clash));
    }
    if (!bad.empty()) throw ConfigError("config: invalid keys: " + join(bad));
}

}  // namespace sentinel
