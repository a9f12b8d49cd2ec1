#include "sf/config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace sf {

std::string format_double(double v) {
    char buf[32];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, ptr);
}

std::string format_g6(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.6g", v);
    return buf;
}

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

double parse_double(const std::string& key, const std::string& v) {
    try {
        size_t pos = 0;
        const double d = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return d;
    } catch (const std::exception&) {
        throw ConfigError("config key '" + key + "': cannot parse '" + v + "' as a number");
    }
}

long parse_int(const std::string& key, const std::string& v) {
    try {
        size_t pos = 0;
        const long n = std::stol(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return n;
    } catch (const std::exception&) {
        throw ConfigError("config key '" + key + "': cannot parse '" + v + "' as an integer");
    }
}

std::uint64_t parse_u64(const std::string& key, const std::string& v) {
    try {
        size_t pos = 0;
        const unsigned long long n = std::stoull(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return n;
    } catch (const std::exception&) {
        throw ConfigError("config key '" + key + "': cannot parse '" + v + "' as an unsigned integer");
    }
}

using Setter = std::function<void(ExperimentConfig&, const std::string&, const std::string&)>;

const std::map<std::string, Setter>& setters() {
    auto int_field = [](int ExperimentConfig::* field) {
        return Setter([field](ExperimentConfig& c, const std::string& k, const std::string& v) {
            c.*field = static_cast<int>(parse_int(k, v));
        });
    };
    auto dbl_field = [](double ExperimentConfig::* field) {
        return Setter([field](ExperimentConfig& c, const std::string& k, const std::string& v) {
            c.*field = parse_double(k, v);
        });
    };
    auto model_field = [](int ModelConfig::* field) {
        return Setter([field](ExperimentConfig& c, const std::string& k, const std::string& v) {
            c.model.*field = static_cast<int>(parse_int(k, v));
        });
    };
    static const std::map<std::string, Setter> table = {
        {"seed", Setter([](ExperimentConfig& c, const std::string& k, const std::string& v) {
             c.seed = parse_u64(k, v);
         })},
        {"difficulty", Setter([](ExperimentConfig& c, const std::string& k, const std::string& v) {
             try {
                 c.difficulty = difficulty_from_name(v);
             } catch (const std::exception&) {
                 throw ConfigError("config key '" + k + "': expected two_view or mono_ambiguous, got '" + v + "'");
             }
         })},
        {"n_train_episodes", int_field(&ExperimentConfig::n_train_episodes)},
        {"data_fraction", dbl_field(&ExperimentConfig::data_fraction)},
        {"iterations", int_field(&ExperimentConfig::iterations)},
        {"batch_size", int_field(&ExperimentConfig::batch_size)},
        {"lr", dbl_field(&ExperimentConfig::lr)},
        {"alpha", dbl_field(&ExperimentConfig::alpha)},
        {"eval_trials", int_field(&ExperimentConfig::eval_trials)},
        {"eval_every", int_field(&ExperimentConfig::eval_every)},
        {"e_scale", dbl_field(&ExperimentConfig::e_scale)},
        {"probe_steps", int_field(&ExperimentConfig::probe_steps)},
        {"probe_lr", dbl_field(&ExperimentConfig::probe_lr)},
        {"d_model", model_field(&ModelConfig::d_model)},
        {"n_layers", model_field(&ModelConfig::n_layers)},
        {"n_heads", model_field(&ModelConfig::n_heads)},
        {"patch_size", model_field(&ModelConfig::patch_size)},
        {"n_views", model_field(&ModelConfig::n_views)},
        {"vocab", model_field(&ModelConfig::vocab)},
        {"m_tokens", model_field(&ModelConfig::m_tokens)},
        {"k_queries", model_field(&ModelConfig::k_queries)},
        {"action_dim", model_field(&ModelConfig::action_dim)},
        {"horizon", model_field(&ModelConfig::horizon)},
        {"aligned_layer", model_field(&ModelConfig::aligned_layer)},
        {"d_teacher", model_field(&ModelConfig::d_teacher)},
    };
    return table;
}

}  // namespace

ExperimentConfig ExperimentConfig::from_text(const std::string& text) {
    ExperimentConfig cfg;
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(line_no) + ": expected key = value");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        const auto it = setters().find(key);
        if (it == setters().end())
            throw ConfigError("config line " + std::to_string(line_no) + ": unknown key '" + key + "'");
        it->second(cfg, key, value);
    }
    cfg.validate();
    return cfg;
}

ExperimentConfig ExperimentConfig::from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return from_text(ss.str());
}

void ExperimentConfig::validate() const {
    auto require = [](bool ok, const std::string& msg) {
        if (!ok) throw ConfigError("config: " + msg);
    };
    require(n_train_episodes >= 1 && n_train_episodes <= 100000, "n_train_episodes must be in [1, 100000]");
    require(data_fraction > 0.0 && data_fraction <= 1.0, "data_fraction must be in (0, 1]");
    require(iterations >= 1 && iterations <= 10000000, "iterations must be in [1, 1e7]");
    require(batch_size >= 1 && batch_size <= 4096, "batch_size must be in [1, 4096]");
    require(lr > 0.0 && std::isfinite(lr), "lr must be positive");
    require(alpha >= 0.0 && std::isfinite(alpha), "alpha must be finite and non-negative");
    require(eval_trials >= 1 && eval_trials <= 100000, "eval_trials must be in [1, 100000]");
    require(eval_every >= 1, "eval_every must be >= 1");
    require(e_scale >= 0.0 && std::isfinite(e_scale), "e_scale must be finite and non-negative");
    require(probe_steps >= 1, "probe_steps must be >= 1");
    require(probe_lr > 0.0 && std::isfinite(probe_lr), "probe_lr must be positive");
    try {
        model.validate();
    } catch (const std::exception& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
}

std::string ExperimentConfig::resolved_text() const {
    std::ostringstream out;
    out << "seed = " << seed << "\n";
    out << "difficulty = " << difficulty_name(difficulty) << "\n";
    out << "n_train_episodes = " << n_train_episodes << "\n";
    out << "data_fraction = " << format_double(data_fraction) << "\n";
    out << "iterations = " << iterations << "\n";
    out << "batch_size = " << batch_size << "\n";
    out << "lr = " << format_double(lr) << "\n";
    out << "alpha = " << format_double(alpha) << "\n";
    out << "eval_trials = " << eval_trials << "\n";
    out << "eval_every = " << eval_every << "\n";
    out << "e_scale = " << format_double(e_scale) << "\n";
    out << "probe_steps = " << probe_steps << "\n";
    out << "probe_lr = " << format_double(probe_lr) << "\n";
    out << "d_model = " << model.d_model << "\n";
    out << "n_layers = " << model.n_layers << "\n";
    out << "n_heads = " << model.n_heads << "\n";
    out << "patch_size = " << model.patch_size << "\n";
    out << "n_views = " << model.n_views << "\n";
    out << "vocab = " << model.vocab << "\n";
    out << "m_tokens = " << model.m_tokens << "\n";
    out << "k_queries = " << model.k_queries << "\n";
    out << "action_dim = " << model.action_dim << "\n";
    out << "horizon = " << model.horizon << "\n";
    out << "aligned_layer = " << model.aligned_layer << "\n";
    out << "d_teacher = " << model.d_teacher << "\n";
    return out.str();
}

}  // namespace sf
