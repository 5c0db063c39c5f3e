#include "slmtl/config.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <variant>
#include <vector>

#include "slmtl/datagen.hpp"
#include "slmtl/tensor.hpp"
#include "slmtl/weighting.hpp"

namespace slmtl {

namespace {

using FieldPtr = std::variant<std::string TrainConfig::*, double TrainConfig::*, int TrainConfig::*,
                              bool TrainConfig::*, std::uint64_t TrainConfig::*>;

struct Field {
    const char* key;
    FieldPtr ptr;
};

const std::vector<Field>& fields() {
    static const std::vector<Field> table = {
        {"algorithm", &TrainConfig::algorithm},
        {"dataset", &TrainConfig::dataset},
        {"lr", &TrainConfig::lr},
        {"batch_size", &TrainConfig::batch_size},
        {"steps", &TrainConfig::steps},
        {"seed", &TrainConfig::seed},
        {"eval_every", &TrainConfig::eval_every},
        {"out_dir", &TrainConfig::out_dir},
        {"main_task", &TrainConfig::main_task},
        {"shared_layers", &TrainConfig::shared_layers},
        {"shared_width", &TrainConfig::shared_width},
        {"task_layers", &TrainConfig::task_layers},
        {"task_width", &TrainConfig::task_width},
        {"input_dim", &TrainConfig::input_dim},
        {"toy_output_dim", &TrainConfig::toy_output_dim},
        {"n_train", &TrainConfig::n_train},
        {"n_val", &TrainConfig::n_val},
        {"n_test", &TrainConfig::n_test},
        {"noise", &TrainConfig::noise},
        {"noise_main_only", &TrainConfig::noise_main_only},
        {"sigma", &TrainConfig::sigma},
        {"b_scale", &TrainConfig::b_scale},
        {"eps_scale", &TrainConfig::eps_scale},
        {"noise_scale", &TrainConfig::noise_scale},
        {"scale_is_variance", &TrainConfig::scale_is_variance},
        {"n_classes", &TrainConfig::n_classes},
        {"class_tasks", &TrainConfig::class_tasks},
        {"flip", &TrainConfig::flip},
        {"flip_frac", &TrainConfig::flip_frac},
        {"background_class", &TrainConfig::background_class},
        {"main_class", &TrainConfig::main_class},
        {"center_scale", &TrainConfig::center_scale},
        {"cluster_std", &TrainConfig::cluster_std},
        {"olaux_horizon", &TrainConfig::olaux_horizon},
        {"olaux_lr", &TrainConfig::olaux_lr},
        {"gradnorm_alpha", &TrainConfig::gradnorm_alpha},
        {"gradnorm_lr", &TrainConfig::gradnorm_lr},
        {"cagrad_c", &TrainConfig::cagrad_c},
        {"cagrad_iters", &TrainConfig::cagrad_iters},
        {"slgrad_true_cosine", &TrainConfig::slgrad_true_cosine},
        {"slgrad_full_val_grad", &TrainConfig::slgrad_full_val_grad},
        {"early_stop_patience", &TrainConfig::early_stop_patience},
        {"taylor_check", &TrainConfig::taylor_check},
        {"exact_lookahead", &TrainConfig::exact_lookahead},
        {"log_weights", &TrainConfig::log_weights},
    };
    return table;
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

std::string value_to_string(const TrainConfig& cfg, const FieldPtr& ptr) {
    return std::visit(
        [&cfg](auto member) -> std::string {
            const auto& v = cfg.*member;
            using T = std::decay_t<decltype(v)>;
            if constexpr (std::is_same_v<T, std::string>) {
                return v;
            } else if constexpr (std::is_same_v<T, bool>) {
                return v ? "true" : "false";
            } else if constexpr (std::is_same_v<T, double>) {
                char buf[64];
                std::snprintf(buf, sizeof(buf), "%.17g", v);
                return buf;
            } else {
                return std::to_string(v);
            }
        },
        ptr);
}

void assign_value(TrainConfig& cfg, const Field& field, const std::string& raw) {
    std::visit(
        [&](auto member) {
            auto& v = cfg.*member;
            using T = std::decay_t<decltype(v)>;
            if constexpr (std::is_same_v<T, std::string>) {
                v = raw;
            } else if constexpr (std::is_same_v<T, bool>) {
                if (raw == "true") {
                    v = true;
                } else if (raw == "false") {
                    v = false;
                } else {
                    require(false, std::string("config: boolean expected for ") + field.key);
                }
            } else {
                std::istringstream in(raw);
                T parsed{};
                in >> parsed;
                require(!in.fail() && in.peek() == EOF,
                        std::string("config: bad value for ") + field.key + ": " + raw);
                v = parsed;
            }
        },
        field.ptr);
}

}  // namespace

std::string serialize_config(const TrainConfig& cfg) {
    std::ostringstream out;
    for (const auto& f : fields()) {
        out << f.key << " = " << value_to_string(cfg, f.ptr) << "\n";
    }
    return out.str();
}

void set_config_field(TrainConfig& cfg, const std::string& key, const std::string& value) {
    for (const auto& f : fields()) {
        if (key == f.key) {
            assign_value(cfg, f, value);
            return;
        }
    }
    require(false, "config: unknown key: " + key);
}

TrainConfig parse_config_text(const std::string& text) {
    TrainConfig cfg;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) {
            line = line.substr(0, hash);
        }
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        require(eq != std::string::npos,
                "config: expected key = value on line " + std::to_string(lineno));
        set_config_field(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    return cfg;
}

TrainConfig load_config_file(const std::string& path) {
    std::ifstream in(path);
    require(in.good(), "config: cannot open " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_config_text(buf.str());
}

void validate_config(const TrainConfig& cfg) {
    parse_algorithm(cfg.algorithm);
    require(cfg.dataset == "toy" || cfg.dataset == "classify",
            "config: dataset must be toy or classify");
    parse_flip_mode(cfg.flip);
    require(cfg.lr > 0.0, "config: lr must be positive");
    require(cfg.batch_size >= 1, "config: batch_size must be >= 1");
    require(cfg.steps >= 1, "config: steps must be >= 1");
    require(cfg.eval_every >= 1, "config: eval_every must be >= 1");
    require(cfg.shared_layers >= 1, "config: shared_layers must be >= 1");
    require(cfg.task_layers >= 0, "config: task_layers must be >= 0");
    require(cfg.noise >= 0.0 && cfg.noise <= 1.0, "config: noise must be in [0,1]");
    require(cfg.flip_frac >= 0.0 && cfg.flip_frac <= 1.0, "config: flip_frac must be in [0,1]");
    require(cfg.early_stop_patience >= 0, "config: early_stop_patience must be >= 0");
    require(cfg.olaux_horizon >= 1, "config: olaux_horizon must be >= 1");
    require(cfg.cagrad_c >= 0.0, "config: cagrad_c must be >= 0");
    require(cfg.cagrad_iters >= 1, "config: cagrad_iters must be >= 1");
}

}  // namespace slmtl
