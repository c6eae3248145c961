// bgslf command line: train, eval, export-graphs, gradcheck, synth.
// Exit codes: 0 ok, 1 config error, 2 data error, 3 numeric abort,
// 4 gradcheck tolerance failure.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "bgslf/checkpoint.hpp"
#include "bgslf/data.hpp"
#include "bgslf/gradcheck.hpp"
#include "bgslf/metrics.hpp"
#include "bgslf/ssu.hpp"
#include "bgslf/synth.hpp"
#include "bgslf/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitConfig = 1;
constexpr int kExitData = 2;
constexpr int kExitNumeric = 3;
constexpr int kExitGradcheck = 4;

struct GlobalOpts {
    std::optional<uint64_t> seed;
    bool deterministic = false;
    bool quiet = false;
};

bgslf::SeriesBlock load_series(const std::string& path, const std::string& format) {
    std::string fmt = format;
    if (fmt == "auto") fmt = path.size() >= 4 && path.substr(path.size() - 4) == ".csv" ? "csv" : "binary";
    if (fmt == "csv") return bgslf::load_csv(path);
    if (fmt == "binary") return bgslf::load_binary(path);
    throw std::invalid_argument("unknown data format '" + format + "'");
}

struct RunConfig {
    bgslf::TrainConfig train;
    std::string data_path;
    std::string data_format = "auto";
    std::string output_dir = ".";
};

RunConfig parse_run_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("cannot open config file: " + path);
    json j = json::parse(in);
    RunConfig rc;
    json train_keys = j;
    for (const char* k : {"data", "format", "output_dir"}) train_keys.erase(k);
    rc.train = bgslf::config_from_json(train_keys);
    if (!j.contains("data")) throw std::invalid_argument("config is missing required key \"data\"");
    rc.data_path = j.at("data").get<std::string>();
    if (j.contains("format")) rc.data_format = j.at("format").get<std::string>();
    if (j.contains("output_dir")) rc.output_dir = j.at("output_dir").get<std::string>();
    return rc;
}

std::vector<int64_t> parse_horizons(const std::string& csv) {
    std::vector<int64_t> out;
    std::stringstream ss(csv);
    std::string tok;
    while (std::getline(ss, tok, ',')) out.push_back(std::stoll(tok));
    if (out.empty()) throw std::invalid_argument("empty horizon list");
    return out;
}

void print_metric_table(std::ostream& os, const std::map<int64_t, bgslf::MetricRow>& rows,
                        const std::optional<bgslf::MetricRow>& ha) {
    os << std::fixed << std::setprecision(4);
    os << "horizon        mae       rmse    mape(%)\n";
    for (const auto& [h, r] : rows)
        os << std::setw(7) << h << std::setw(11) << r.mae << std::setw(11) << r.rmse << std::setw(11) << r.mape
           << "\n";
    if (ha)
        os << "     HA" << std::setw(11) << ha->mae << std::setw(11) << ha->rmse << std::setw(11) << ha->mape << "\n";
    os.unsetf(std::ios::fixed);
}

int cmd_train(const GlobalOpts& g, const std::string& config_path) {
    RunConfig rc;
    try {
        rc = parse_run_config(config_path);
    } catch (const json::exception& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const std::invalid_argument& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    }
    if (g.seed) rc.train.seed = *g.seed;
    if (g.deterministic) rc.train.deterministic = true;
    try {
        bgslf::MtsDataset ds = bgslf::make_dataset(load_series(rc.data_path, rc.data_format),
                                                   rc.train.t_in + rc.train.t_out, rc.train.zero_is_missing);
        fs::create_directories(rc.output_dir);
        std::ofstream log(fs::path(rc.output_dir) / "train_log.csv");
        std::ostringstream capture;
        struct Tee : std::streambuf {
            std::streambuf *a, *b;
            int overflow(int c) override {
                if (c != EOF) {
                    a->sputc(static_cast<char>(c));
                    b->sputc(static_cast<char>(c));
                }
                return c;
            }
        };
        Tee tee;
        tee.a = log.rdbuf();
        tee.b = g.quiet ? capture.rdbuf() : std::cout.rdbuf();
        std::ostream both(&tee);
        bgslf::TrainResult result = bgslf::train(rc.train, ds, &both);
        const std::string ck_path = (fs::path(rc.output_dir) / "checkpoint.bgck").string();
        bgslf::save_checkpoint(ck_path, result.best);
        if (!g.quiet)
            std::cout << "checkpoint written to " << ck_path << " (best valid MAE " << result.best_valid_mae
                      << " at epoch " << result.best_epoch << ")\n";
        return 0;
    } catch (const bgslf::NumericError& e) {
        std::cerr << "numeric abort: " << e.what() << "\n";
        return kExitNumeric;
    } catch (const bgslf::DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return kExitData;
    } catch (const std::invalid_argument& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    }
}

int cmd_eval(const GlobalOpts& g, const std::string& ck_path, const std::string& data_path,
             const std::string& data_format, const std::string& horizons_csv, const std::string& baseline,
             const std::string& split) {
    try {
        const std::vector<int64_t> horizons = parse_horizons(horizons_csv);
        bgslf::Checkpoint ck = bgslf::load_checkpoint(ck_path);
        bgslf::RestoredModel rm = bgslf::restore_model(ck);
        bgslf::MtsDataset ds = bgslf::make_dataset(load_series(data_path, data_format),
                                                   rm.config.t_in + rm.config.t_out, rm.config.zero_is_missing);
        bgslf::renormalize(ds, ck.meta.at("normalization").at("mean").get<std::vector<double>>(),
                           ck.meta.at("normalization").at("std").get<std::vector<double>>());
        bgslf::Tensor segments = bgslf::segment_as_tensor(rm.segments);
        bgslf::EvalResult res = bgslf::evaluate_split(rm.model, segments, ds, split, horizons, rm.config.t_in,
                                                      rm.config.t_out, rm.config.batch_size);
        json out;
        for (const auto& [h, r] : res.by_horizon)
            out[std::to_string(h)] = {{"mae", r.mae}, {"rmse", r.rmse}, {"mape", r.mape}};
        json sel = json::array();
        for (int64_t c : res.selection_counts) sel.push_back(c);
        out["selection_histogram"] = sel;
        std::optional<bgslf::MetricRow> ha;
        if (baseline == "ha") {
            ha = bgslf::historical_average(ds, rm.config.period, split);
            out["baseline_ha"] = {{"mae", ha->mae}, {"rmse", ha->rmse}, {"mape", ha->mape}};
        } else if (!baseline.empty()) {
            std::cerr << "config error: unknown baseline '" << baseline << "'\n";
            return kExitConfig;
        }
        std::cout << out.dump(2) << "\n";
        if (!g.quiet) print_metric_table(std::cout, res.by_horizon, ha);
        return 0;
    } catch (const bgslf::DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return kExitData;
    } catch (const std::runtime_error& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return kExitData;
    } catch (const std::invalid_argument& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    }
}

int cmd_export_graphs(const GlobalOpts& g, const std::string& ck_path, const std::string& out_dir) {
    try {
        bgslf::Checkpoint ck = bgslf::load_checkpoint(ck_path);
        bgslf::RestoredModel rm = bgslf::restore_model(ck);
        bgslf::Tensor segments = bgslf::segment_as_tensor(rm.segments);
        const auto graphs = bgslf::current_graphs(rm.model, segments);
        fs::create_directories(out_dir);
        json summary = json::array();
        for (size_t r = 0; r < graphs.size(); ++r) {
            for (double v : graphs[r])
                if (v < 0.0 || v > 1.0)
                    throw bgslf::DataError("graph " + std::to_string(r) + " has an entry outside [0,1]");
            const std::string path = (fs::path(out_dir) / ("graph_" + std::to_string(r) + ".csv")).string();
            bgslf::write_matrix_csv(path, graphs[r], rm.model.cfg.N, rm.model.cfg.N);
            summary.push_back({{"graph", r},
                               {"epsilon", rm.config.eps},
                               {"fraction_below",
                                bgslf::sparsity_report(bgslf::Tensor::from({rm.model.cfg.N, rm.model.cfg.N},
                                                                           graphs[r]),
                                                       rm.config.eps)}});
        }
        std::ofstream sf(fs::path(out_dir) / "sparsity.json");
        sf << summary.dump(2) << "\n";
        if (!g.quiet) std::cout << "wrote " << graphs.size() << " graphs to " << out_dir << "\n";
        return 0;
    } catch (const std::exception& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return kExitData;
    }
}

int cmd_gradcheck(const GlobalOpts& g) {
    bgslf::GradcheckReport rep = bgslf::run_gradcheck();
    std::cout << "ssu exclusion zones: (0, " << rep.sup << ") and (" << rep.inf << ", 1)\n";
    std::vector<std::string> failed;
    for (const auto& c : rep.checks) {
        std::cout << (c.pass ? "[PASS] " : "[FAIL] ") << c.name << "  max_rel_err=" << c.max_err
                  << "  tol=" << c.tol << "\n";
        if (!c.pass) failed.push_back(c.name);
    }
    if (!rep.all_pass) {
        std::cerr << "gradcheck failed:";
        for (const auto& n : failed) std::cerr << " " << n;
        std::cerr << "\n";
        return kExitGradcheck;
    }
    if (!g.quiet) std::cout << "all gradient checks passed\n";
    return 0;
}

int cmd_synth(const GlobalOpts& g, const std::string& out, int64_t nodes, int64_t steps, uint64_t seed,
              const std::string& dynamics, int64_t period, double noise, std::string graph_out) {
    try {
        if (g.seed) seed = *g.seed;
        bgslf::SynthResult res;
        if (dynamics == "diffusion") {
            res = bgslf::synth_diffusion(nodes, steps, seed, noise > 0 ? noise : 0.01);
            if (graph_out.empty()) graph_out = out + ".graph.csv";
            bgslf::write_matrix_csv(graph_out, res.graph, nodes, nodes);
        } else if (dynamics == "periodic") {
            res = bgslf::synth_periodic(nodes, steps, period, seed, noise);
        } else {
            std::cerr << "error: unknown dynamics '" << dynamics << "'\n";
            return kExitConfig;
        }
        bgslf::save_binary(out, res.series);
        if (!g.quiet) std::cout << "wrote " << out << " (T=" << steps << ", N=" << nodes << ", D=1)\n";
        return 0;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const bgslf::DataError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"BGSLF: joint graph structure learning and forecasting for multivariate time series"};
    app.require_subcommand(1);
    GlobalOpts g;
    uint64_t seed_opt = 0;
    auto* seed_flag = app.add_option("--seed", seed_opt, "override the configured RNG seed");
    app.add_flag("--deterministic", g.deterministic, "force deterministic execution");
    app.add_flag("--quiet", g.quiet, "suppress informational output");

    std::string config_path;
    auto* train = app.add_subcommand("train", "train a model from a JSON config");
    train->add_option("--config", config_path, "path to JSON config")->required();

    std::string ck_path, data_path, data_format = "auto", horizons = "3,6,12", baseline, split = "test";
    auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
    eval->add_option("--checkpoint", ck_path, "checkpoint file")->required();
    eval->add_option("--data", data_path, "dataset file")->required();
    eval->add_option("--format", data_format, "csv, binary, or auto");
    eval->add_option("--horizons", horizons, "comma-separated horizon steps");
    eval->add_option("--baseline", baseline, "also print a baseline row (ha)");
    eval->add_option("--split", split, "split to evaluate (train, valid, test)");

    std::string exp_ck, exp_out = ".";
    auto* expg = app.add_subcommand("export-graphs", "write learned adjacency matrices as CSV");
    expg->add_option("--checkpoint", exp_ck, "checkpoint file")->required();
    expg->add_option("--out", exp_out, "output directory");

    auto* gc = app.add_subcommand("gradcheck", "run the finite-difference verification suite");

    std::string synth_out, dynamics = "diffusion", graph_out;
    int64_t nodes = 8, steps = 2000, period = 50;
    uint64_t synth_seed = 7;
    double noise = 0.0;
    auto* synth = app.add_subcommand("synth", "generate synthetic benchmark data");
    synth->add_option("--out", synth_out, "output binary container path")->required();
    synth->add_option("--nodes", nodes, "number of nodes (>= 2)");
    synth->add_option("--steps", steps, "number of timesteps (>= 100)");
    synth->add_option("--seed", synth_seed, "generator seed");
    synth->add_option("--dynamics", dynamics, "diffusion or periodic");
    synth->add_option("--period", period, "period for periodic dynamics");
    synth->add_option("--noise", noise, "noise sigma");
    synth->add_option("--graph-out", graph_out, "ground-truth graph CSV path (diffusion)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) ? kExitConfig : 0;
    }
    if (seed_flag->count()) g.seed = seed_opt;

    if (train->parsed()) return cmd_train(g, config_path);
    if (eval->parsed()) return cmd_eval(g, ck_path, data_path, data_format, horizons, baseline, split);
    if (expg->parsed()) return cmd_export_graphs(g, exp_ck, exp_out);
    if (gc->parsed()) return cmd_gradcheck(g);
    if (synth->parsed()) return cmd_synth(g, synth_out, nodes, steps, synth_seed, dynamics, period, noise, graph_out);
    return kExitConfig;
}
