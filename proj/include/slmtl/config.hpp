#pragma once

#include <cstdint>
#include <string>

namespace slmtl {

/// Everything one run needs, mirrored 1:1 by the flat key=value config file.
struct TrainConfig {
    std::string algorithm = "static";
    std::string dataset = "toy";
    double lr = 0.01;
    int batch_size = 32;
    int steps = 5000;
    std::uint64_t seed = 1;
    int eval_every = 50;
    std::string out_dir;
    int main_task = 0;

    // architecture
    int shared_layers = 2;
    int shared_width = 64;
    int task_layers = 1;
    int task_width = 32;

    // toy dataset
    int input_dim = 10;
    int toy_output_dim = 1;
    int n_train = 1000;
    int n_val = 200;
    int n_test = 200;
    double noise = 0.0;
    bool noise_main_only = false;
    double sigma = 1.0;
    double b_scale = 1.0;
    double eps_scale = 1.8708286933869707;    // sqrt(3.5)
    double noise_scale = 1.4142135623730951;  // sqrt(2)
    bool scale_is_variance = false;

    // classification dataset
    int n_classes = 4;
    int class_tasks = 4;
    std::string flip = "none";
    double flip_frac = 0.0;
    int background_class = 0;
    int main_class = 0;
    double center_scale = 1.5;
    double cluster_std = 1.0;

    // weighting hyperparameters
    int olaux_horizon = 5;
    double olaux_lr = 0.001;
    double gradnorm_alpha = 1.5;
    double gradnorm_lr = 0.025;
    double cagrad_c = 0.4;
    int cagrad_iters = 20;
    bool slgrad_true_cosine = true;
    bool slgrad_full_val_grad = true;  // meta gradient on the whole validation split

    // harness
    int early_stop_patience = 500;  // in steps; 0 disables
    bool taylor_check = false;
    bool exact_lookahead = false;
    bool log_weights = false;
};

/// One `key = value` line per field, in a fixed order. Doubles are printed
/// with enough digits to round-trip exactly.
std::string serialize_config(const TrainConfig& cfg);

/// Parses serialize_config output (or a hand-written file). Lines may carry
/// `#` comments; unknown keys are fatal.
TrainConfig parse_config_text(const std::string& text);

TrainConfig load_config_file(const std::string& path);

/// Sets a single field from its config key. Fatal on unknown key or
/// unparsable value.
void set_config_field(TrainConfig& cfg, const std::string& key, const std::string& value);

/// Range and enum checks; fatal on violation.
void validate_config(const TrainConfig& cfg);

}  // namespace slmtl
