#include "advarch/cli.hpp"

#include <cmath>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "advarch/checkpoint.hpp"
#include "advarch/presets.hpp"
#include "advarch/reports.hpp"

namespace advarch {

double parse_fraction(const std::string& text) {
    const auto slash = text.find('/');
    std::size_t used = 0;
    try {
        if (slash == std::string::npos) {
            const double v = std::stod(text, &used);
            if (used == text.size() && std::isfinite(v)) return v;
        } else {
            const std::string num = text.substr(0, slash), den = text.substr(slash + 1);
            std::size_t u2 = 0;
            const double n = std::stod(num, &used), d = std::stod(den, &u2);
            if (used == num.size() && u2 == den.size() && d != 0 && std::isfinite(n / d)) return n / d;
        }
    } catch (const std::logic_error&) {
    }
    throw std::invalid_argument("not a number or fraction: '" + text + "'");
}

std::int64_t parse_count(const std::string& text) {
    if (text.empty()) throw std::invalid_argument("empty count");
    double scale = 1;
    std::string body = text;
    switch (body.back()) {
        case 'k': case 'K': scale = 1e3; body.pop_back(); break;
        case 'm': case 'M': scale = 1e6; body.pop_back(); break;
        case 'g': case 'G': case 'b': case 'B': scale = 1e9; body.pop_back(); break;
        default: break;
    }
    std::size_t used = 0;
    double v = 0;
    try {
        v = std::stod(body, &used);
    } catch (const std::logic_error&) {
        used = 0;
    }
    if (used != body.size() || body.empty() || !(v > 0) || !std::isfinite(v))
        throw std::invalid_argument("not a positive count: '" + text + "'");
    return static_cast<std::int64_t>(std::llround(v * scale));
}

namespace {

using ojson = nlohmann::ordered_json;

class UsageError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Malformed flag values are usage errors, not domain errors.
template <typename F>
auto flag_value(const char* flag, F&& parse) {
    try {
        return parse();
    } catch (const std::invalid_argument& e) {
        throw UsageError(std::string(flag) + ": " + e.what());
    }
}

void emit(const std::string& text, const std::string& path, std::ostream& out) {
    if (path.empty() || path == "-") {
        out << text;
        return;
    }
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + path);
    f << text;
    if (!f) throw std::runtime_error("write failed for " + path);
}

struct Source {
    std::string config_path;
    std::string preset_name;

    void attach(CLI::App* cmd) {
        auto* c = cmd->add_option("--config", config_path, "architecture config JSON file");
        auto* p = cmd->add_option("--preset", preset_name, "preset name (see `preset --list`)");
        c->excludes(p);
    }
    bool given() const { return !config_path.empty() || !preset_name.empty(); }
    ArchConfig load() const {
        if (!config_path.empty()) return load_config_file(config_path);
        if (!preset_name.empty()) return preset(preset_name);
        throw UsageError("one of --config or --preset is required");
    }
};

// A bare argument that names a preset, or else a config file.
ArchConfig load_named(const std::string& what) {
    for (const auto& n : preset_names())
        if (n == what) return preset(what);
    return load_config_file(what);
}

struct FitArgs {
    std::string budget;
    std::string mode = "scale_all_widths";
    int rounding = 8;
    double tolerance = 0.005;

    void attach(CLI::App* cmd) {
        cmd->add_option("--budget", budget, "parameter budget, e.g. 26140000 or 26.14M")->required();
        cmd->add_option("--mode", mode, "scale_all_widths or base_width_with_fixed_e");
        cmd->add_option("--rounding", rounding, "width multiple");
        cmd->add_option("--tolerance", tolerance, "relative budget tolerance");
    }
    FitConstraints constraints() const {
        FitConstraints c;
        c.budget = flag_value("--budget", [&] { return parse_count(budget); });
        c.free = flag_value("--mode", [&] { return parse_fit_mode(mode); });
        c.rounding = rounding;
        c.tolerance = tolerance;
        return c;
    }
};

struct DataArgs {
    std::string kind = "synth";
    int samples_per_class = 0;   // 0: benchmark default
    int holdout_per_class = 100;
    std::optional<std::uint64_t> synth_seed;
    std::string train_images, train_labels, holdout_images, holdout_labels;

    void attach(CLI::App* cmd, bool with_train) {
        cmd->add_option("--data", kind, "synth or idx")->check(CLI::IsMember({"synth", "idx"}));
        cmd->add_option("--synth-seed", synth_seed, "synthetic template/noise seed (default: --seed)");
        cmd->add_option("--holdout-per-class", holdout_per_class, "synthetic holdout samples per class");
        cmd->add_option("--holdout-images", holdout_images, "IDX holdout images");
        cmd->add_option("--holdout-labels", holdout_labels, "IDX holdout labels");
        if (with_train) {
            cmd->add_option("--samples-per-class", samples_per_class, "synthetic training samples per class");
            cmd->add_option("--train-images", train_images, "IDX training images");
            cmd->add_option("--train-labels", train_labels, "IDX training labels");
        }
    }
    SynthSpec spec(std::uint64_t seed) const {
        SynthSpec s = benchmark_synth_spec(synth_seed.value_or(seed));
        if (samples_per_class > 0) s.samples_per_class = samples_per_class;
        return s;
    }
    Dataset train_set(std::uint64_t seed) const {
        if (kind == "synth") return synth_generate(spec(seed), 0);
        if (train_images.empty() || train_labels.empty())
            throw UsageError("--data idx needs --train-images and --train-labels");
        return load_idx(train_images, train_labels);
    }
    Dataset holdout(std::uint64_t seed) const {
        if (kind == "synth") {
            SynthSpec s = spec(seed);
            s.samples_per_class = holdout_per_class;
            return synth_generate(s, 1);
        }
        if (holdout_images.empty() || holdout_labels.empty())
            throw UsageError("--data idx needs --holdout-images and --holdout-labels");
        return load_idx(holdout_images, holdout_labels);
    }
};

void check_fits(const ArchConfig& cfg, const Dataset& d) {
    if (cfg.num_classes != d.class_count)
        throw std::invalid_argument("config has " + std::to_string(cfg.num_classes) + " classes, data has " +
                                    std::to_string(d.class_count));
    if (cfg.input_channels != d.channels())
        throw std::invalid_argument("config expects " + std::to_string(cfg.input_channels) +
                                    " input channels, data has " + std::to_string(d.channels()));
}

TrainConfig read_train_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    ojson j;
    try {
        j = ojson::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw std::invalid_argument(path + ": " + e.what());
    }
    if (!j.is_object()) throw std::invalid_argument(path + ": training config must be a JSON object");
    // Keys left out keep the benchmark recipe.
    TrainConfig c = benchmark_train_config(TrainMode::fast_at, 0);
    try {
        for (const auto& [key, v] : j.items()) {
            if (key == "mode") c.mode = parse_train_mode(v.get<std::string>());
            else if (key == "epochs") c.epochs = v.get<int>();
            else if (key == "test_eps") c.test_eps = v.is_string() ? parse_fraction(v.get<std::string>()) : v.get<double>();
            else if (key == "train_eps_multiplier") c.train_eps_multiplier = v.get<double>();
            else if (key == "inner_steps") c.inner_steps = v.get<int>();
            else if (key == "inner_rand_init") c.inner_rand_init = v.get<bool>();
            else if (key == "inner_alpha") c.inner_alpha = v.is_string() ? parse_fraction(v.get<std::string>()) : v.get<double>();
            else if (key == "lr_max") c.lr_max = v.get<double>();
            else if (key == "momentum") c.momentum = v.get<double>();
            else if (key == "weight_decay") c.weight_decay = v.get<double>();
            else if (key == "batch_size") c.batch_size = v.get<int>();
            else if (key == "seed") c.seed = v.get<std::uint64_t>();
            else if (key == "eval_steps") c.eval_steps = v.get<int>();
            else if (key == "eval_every_epoch") c.eval_every_epoch = v.get<bool>();
            else throw std::invalid_argument("unknown training config key '" + key + "'");
        }
    } catch (const nlohmann::json::exception& e) {
        throw std::invalid_argument(path + ": " + e.what());
    }
    return c;
}

std::vector<double> parse_eps_list(const std::string& text) {
    std::vector<double> out;
    std::stringstream ss(text);
    for (std::string item; std::getline(ss, item, ',');)
        out.push_back(flag_value("--eps", [&] { return parse_fraction(item); }));
    if (out.empty()) throw UsageError("--eps needs at least one value");
    return out;
}

std::vector<int> parse_depths(const std::string& text) {
    std::vector<int> out;
    std::stringstream ss(text);
    for (std::string item; std::getline(ss, item, '-');) {
        std::size_t used = 0;
        int v = 0;
        try {
            v = std::stoi(item, &used);
        } catch (const std::logic_error&) {
            used = 0;
        }
        if (used == 0 || used != item.size()) throw UsageError("bad depth vector '" + text + "' (want e.g. 5-8-13-1)");
        out.push_back(v);
    }
    return out;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Architecture analysis, budget fitting and desk-scale adversarial training", "advarch"};
    app.require_subcommand(1);
    app.fallthrough(false);

    Source src;
    std::string out_path, emit_path;
    int resolution = 224;
    std::uint64_t seed = 0;

    auto* analyze = app.add_subcommand("analyze", "parameter and MAC report (JSON)");
    src.attach(analyze);
    analyze->add_option("--resolution", resolution, "input resolution for MACs; 0 skips MACs");
    analyze->add_option("--out", out_path, "report path (default stdout)");

    auto* layers = app.add_subcommand("layers", "per-layer table (CSV)");
    src.attach(layers);
    layers->add_option("--resolution", resolution, "input resolution");
    layers->add_option("--out", out_path, "CSV path (default stdout)");

    int depth_c = 3;
    auto* validate_cmd = app.add_subcommand("validate", "guideline report (JSON)");
    src.attach(validate_cmd);
    validate_cmd->add_option("--c", depth_c, "depth-rule factor");
    validate_cmd->add_option("--out", out_path, "report path (default stdout)");

    std::string cmp_a, cmp_b;
    auto* compare = app.add_subcommand("compare", "structural and guideline diff of two configs (JSON)");
    compare->add_option("a", cmp_a, "preset name or config file")->required();
    compare->add_option("b", cmp_b, "preset name or config file")->required();
    compare->add_option("--c", depth_c, "depth-rule factor");
    compare->add_option("--out", out_path, "report path (default stdout)");

    FitArgs fit;
    auto* fit_cmd = app.add_subcommand("fit-budget", "fit widths to a parameter budget");
    src.attach(fit_cmd);
    fit.attach(fit_cmd);
    fit_cmd->add_option("--emit", emit_path, "write the fitted config here");
    fit_cmd->add_option("--out", out_path, "report path (default stdout)");

    std::string preset_name;
    bool list = false;
    auto* preset_cmd = app.add_subcommand("preset", "emit a preset config (JSON)");
    auto* name_opt = preset_cmd->add_option("--name", preset_name, "preset name");
    auto* list_opt = preset_cmd->add_flag("--list", list, "list preset names");
    name_opt->excludes(list_opt);
    preset_cmd->add_option("--emit", emit_path, "config path (default stdout)");

    std::vector<std::string> depth_rows;
    int jobs = 1;
    auto* sweep = app.add_subcommand("sweep", "fit widths for each depth vector (CSV)");
    src.attach(sweep);
    fit.attach(sweep);
    sweep->add_option("--depths", depth_rows, "depth vector such as 1-2-4-1; repeatable")->required();
    sweep->add_option("--jobs", jobs, "parallel fits")->check(CLI::PositiveNumber);
    sweep->add_option("--out", out_path, "CSV path (default stdout)");

    DataArgs data;
    std::string train_config_path, mode, test_eps, history_path, checkpoint_path;
    std::optional<int> epochs, batch_size, inner_steps, eval_steps;
    std::optional<double> lr_max;
    auto* train_cmd = app.add_subcommand("train", "train a network and write a checkpoint");
    src.attach(train_cmd);
    data.attach(train_cmd, true);
    train_cmd->add_option("--train-config", train_config_path, "training config JSON; flags override it");
    train_cmd->add_option("--mode", mode, "fast_at, standard_at or natural");
    train_cmd->add_option("--epochs", epochs, "epochs");
    train_cmd->add_option("--test-eps", test_eps, "test budget, e.g. 4/255");
    train_cmd->add_option("--lr-max", lr_max, "peak learning rate");
    train_cmd->add_option("--batch-size", batch_size, "batch size");
    train_cmd->add_option("--inner-steps", inner_steps, "standard_at PGD steps");
    train_cmd->add_option("--eval-steps", eval_steps, "holdout PGD steps");
    auto* seed_opt = train_cmd->add_option("--seed", seed, "master seed");
    train_cmd->add_option("--checkpoint", checkpoint_path, "checkpoint output path");
    train_cmd->add_option("--history", history_path, "per-epoch CSV path");
    train_cmd->add_option("--out", out_path, "report path (default stdout)");

    std::string eps_list = "2/255,4/255,8/255";
    int steps = 10, restarts = 1, batch = 128;
    auto* attack = app.add_subcommand("attack", "PGD robust accuracy of a checkpoint (JSON)");
    attack->add_option("--checkpoint", checkpoint_path, "checkpoint to evaluate")->required();
    data.attach(attack, false);
    attack->add_option("--eps", eps_list, "comma-separated budgets");
    attack->add_option("--steps", steps, "PGD steps")->check(CLI::PositiveNumber);
    attack->add_option("--restarts", restarts, "PGD restarts")->check(CLI::PositiveNumber);
    attack->add_option("--batch-size", batch, "evaluation batch")->check(CLI::PositiveNumber);
    attack->add_option("--seed", seed, "attack seed (and synthetic data seed)");
    attack->add_option("--out", out_path, "report path (default stdout)");

    if (!args.empty() && !args.front().starts_with("-")) {
        bool known = false;
        for (const auto* sub : app.get_subcommands({})) known |= sub->get_name() == args.front();
        if (!known) {
            err << "error: unknown command '" << args.front() << "'\n\n" << app.help();
            return kExitUsage;
        }
    }
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        const auto subs = app.get_subcommands();
        out << (subs.empty() ? app.help() : subs.front()->help());
        return kExitOk;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        const auto subs = app.get_subcommands();
        err << "error: " << e.what() << "\n\n" << (subs.empty() ? app.help() : subs.front()->help());
        return kExitUsage;
    }

    CLI::App* cmd = app.get_subcommands().front();
    try {
        if (cmd == analyze) {
            const ArchConfig cfg = src.load();
            emit(analyze_report_json(cfg, resolution > 0 ? std::optional<int>(resolution) : std::nullopt), out_path,
                 out);
        } else if (cmd == layers) {
            emit(layers_csv(layer_table(src.load(), resolution)), out_path, out);
        } else if (cmd == validate_cmd) {
            emit(guideline_report_json(evaluate_guidelines(src.load(), {depth_c})), out_path, out);
        } else if (cmd == compare) {
            const ArchConfig a = load_named(cmp_a), b = load_named(cmp_b);
            emit(compare_report_json(a.name, b.name, compare_configs(a, b, {depth_c})), out_path, out);
        } else if (cmd == fit_cmd) {
            const ArchConfig tmpl = src.load();
            const FitConstraints c = fit.constraints();
            const FitResult r = fit_width_detailed(tmpl, c);
            if (!emit_path.empty()) save_config_file(r.config, emit_path);
            emit(fit_report_json(tmpl, c, r), out_path, out);
        } else if (cmd == preset_cmd) {
            if (list) {
                std::string text;
                for (const auto& p : preset_catalog()) text += p.name + "\t" + p.description + "\n";
                emit(text, "", out);
            } else {
                if (preset_name.empty()) throw UsageError("preset needs --name or --list");
                emit(emit_config(preset(preset_name)) + "\n", emit_path, out);
            }
        } else if (cmd == sweep) {
            const ArchConfig base = src.load();
            std::vector<std::vector<int>> grid;
            for (const auto& row : depth_rows) grid.push_back(parse_depths(row));
            const FitConstraints c = fit.constraints();
            emit(sweep_csv(sweep_depth_width(base, grid, c, jobs), c.budget), out_path, out);
        } else if (cmd == train_cmd) {
            TrainConfig tc = train_config_path.empty() ? benchmark_train_config(TrainMode::fast_at, 0) : read_train_config(train_config_path);
            if (!mode.empty()) tc.mode = flag_value("--mode", [&] { return parse_train_mode(mode); });
            if (epochs) tc.epochs = *epochs;
            if (!test_eps.empty()) tc.test_eps = flag_value("--test-eps", [&] { return parse_fraction(test_eps); });
            if (lr_max) tc.lr_max = *lr_max;
            if (batch_size) tc.batch_size = *batch_size;
            if (inner_steps) tc.inner_steps = *inner_steps;
            if (eval_steps) tc.eval_steps = *eval_steps;
            if (seed_opt->count() > 0) tc.seed = seed;
            tc.validate();

            const Dataset train_set = data.train_set(tc.seed);
            const Dataset holdout = data.holdout(tc.seed);
            ArchConfig cfg = src.given() ? src.load() : tiny_config(train_set.class_count);
            if (!src.given()) cfg.input_channels = train_set.channels();
            check_fits(cfg, train_set);
            check_fits(cfg, holdout);

            auto net = NetworkF::instantiate(cfg, tc.seed);
            const TrainHistory h = train(net, train_set, holdout, tc);
            if (!checkpoint_path.empty()) save_checkpoint(net, checkpoint_path);
            if (!history_path.empty()) emit(history_csv(h), history_path, out);
            emit(train_report_json(cfg, tc, h), out_path, out);
        } else if (cmd == attack) {
            auto net = load_checkpoint(checkpoint_path);
            const Dataset holdout = data.holdout(seed);
            check_fits(net.config(), holdout);
            std::vector<AttackConfig> attacks;
            for (double e : parse_eps_list(eps_list)) attacks.push_back(AttackConfig::pgd(e, steps, restarts));
            const auto r = robust_accuracy(net, holdout, attacks, seed, batch);
            emit(robustness_report_json(net.config().name, r, steps, restarts, seed), out_path, out);
        }
    } catch (const UsageError& e) {
        err << "error: " << e.what() << "\n\n" << cmd->help();
        return kExitUsage;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kExitDomain;
    }
    return kExitOk;
}

}  // namespace advarch
