// Command-line driver: gen-data, train, eval, reconstruct, info.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "tearth/checkpoint.hpp"
#include "tearth/eval.hpp"
#include "tearth/run.hpp"

namespace {

using namespace tearth;
namespace fs = std::filesystem;

constexpr int kExitUsage = 2;
constexpr int kExitData = 3;
constexpr int kExitNumeric = 4;

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

template <class T>
std::vector<T> parse_list(const std::string& text, const std::string& flag) {
    std::vector<T> out;
    std::stringstream ss(text);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
        std::istringstream cs(cell);
        T v{};
        if (!(cs >> v) || !(cs >> std::ws).eof()) throw UsageError(flag + ": bad list element '" + cell + "'");
        out.push_back(v);
    }
    if (out.empty()) throw UsageError(flag + ": empty list");
    return out;
}

std::size_t modality_id(const Registry& reg, const std::string& name) {
    for (std::size_t m = 0; m < reg.size(); ++m)
        if (reg[m].name == name || slug(reg[m].name) == name) return m;
    throw UsageError("unknown modality '" + name + "'");
}

void write_text(const fs::path& p, const std::string& s) {
    std::ofstream o(p);
    if (!o) throw LoadError("cannot write " + p.string());
    o << s;
}

// ---------------------------------------------------------------------------

struct GenDataArgs {
    std::string out;
    std::uint64_t seed = 0;
    std::size_t points = 5000;
};

void cmd_gen_data(const GenDataArgs& a) {
    fs::create_directories(a.out);
    const Registry reg = synthetic_registry();
    const auto data = synthetic_datasets(reg, a.points, a.seed);
    for (std::size_t m = 0; m < reg.size(); ++m) write_csv(modality_file(a.out, reg[m]), data[m], reg[m]);
    reg.save((fs::path(a.out) / "registry.json").string());
    std::cout << "wrote " << reg.size() << " modalities x " << a.points << " points to " << a.out << '\n';
}

struct TrainArgs {
    std::string config;
    std::string out;
    std::optional<std::uint64_t> steps;
};

void cmd_train(const TrainArgs& a) {
    RunConfig cfg = a.config.empty() ? RunConfig{} : load_run_config(a.config);
    if (a.steps) cfg.steps = *a.steps;
    std::cout << "training " << cfg.model.preset << " for " << cfg.steps << " steps -> " << a.out << '\n';
    run_training(cfg, a.out, [&](const TrainRecord& r) {
        if (r.step % 100 == 0 || r.step == cfg.steps) {
            std::cout << "step " << r.step << " loss " << r.total_loss << '\n';
        }
    });
    std::cout << "checkpoint " << RunPaths{a.out}.checkpoint().string() << '\n';
}

struct EvalArgs {
    std::string checkpoint;
    std::string protocol;
    std::string data_dir;
    std::string out;
    std::string obs_counts = "2,4,8";
    std::size_t seeds = 3;
    std::uint64_t seed = 0;
    std::string center = "20.6,79.0";
    std::string neighbors = "0,4,8,16,24";
    std::string modality;
    std::size_t threads = 0;
};

DataSplits eval_data(const LoadedCheckpoint& ck, const std::string& data_dir) {
    std::string dir = data_dir;
    if (dir.empty()) {
        const auto& run = ck.extras.run;
        if (!run.contains("split_dir")) throw UsageError("checkpoint records no split directory; pass --data-dir");
        dir = run.at("split_dir").get<std::string>();
    }
    return load_splits(dir, ck.model->registry());
}

void cmd_eval(const EvalArgs& a) {
    if (a.protocol != "local" && a.protocol != "global" && a.protocol != "heldout") {
        throw UsageError("unknown protocol '" + a.protocol + "' (expected local, global or heldout)");
    }
    const auto ck = load_checkpoint(a.checkpoint);
    const Model& model = *ck.model;
    const Registry& reg = model.registry();
    const DataSplits data = eval_data(ck, a.data_dir);
    const std::size_t threads = a.threads ? a.threads : default_threads();
    const fs::path out = a.out.empty() ? fs::path(a.checkpoint).parent_path() / "eval" : fs::path(a.out);
    fs::create_directories(out);

    std::ostringstream csv, summary;
    summary << std::fixed << std::setprecision(4);
    if (a.protocol == "heldout") {
        HeldoutConfig hc;
        hc.seed = a.seed;
        hc.threads = threads;
        csv << "modality,metric,value,count\n";
        summary << "held-out metrics (" << hc.observations_per_modality << " observations per modality)\n";
        for (const auto& r : heldout_metrics(model, hc, data.train, data.test)) {
            csv << reg[r.modality].name << ',' << r.metric << ',' << detail::format_number(r.value) << ',' << r.count << '\n';
            summary << "  " << std::left << std::setw(28) << reg[r.modality].name << r.metric << ' ' << r.value << '\n';
        }
    } else if (a.protocol == "global") {
        GlobalProtocolConfig gc;
        gc.observation_counts = parse_list<std::size_t>(a.obs_counts, "--obs-counts");
        gc.seeds = a.seeds;
        gc.base_seed = a.seed;
        gc.threads = threads;
        if (!a.modality.empty()) gc.targets = {modality_id(reg, a.modality)};
        csv << "target,condition,obs_per_modality,total_obs,mean,std_error,seeds\n";
        summary << "global protocol (" << gc.seeds << " seeds)\n";
        for (const auto& r : global_inference(model, gc, data.train, data.test)) {
            csv << reg[r.target].name << ',' << to_string(r.condition) << ',' << r.observations_per_modality << ','
                << r.total_observations << ',' << detail::format_number(r.mean) << ',' << detail::format_number(r.std_error)
                << ',' << r.per_seed.size() << '\n';
            summary << "  " << reg[r.target].name << "  " << std::setw(6) << to_string(r.condition) << " n=" << std::setw(3)
                    << r.observations_per_modality << "  error " << r.mean << " +- " << r.std_error << '\n';
        }
    } else {
        const auto c = parse_list<double>(a.center, "--center");
        if (c.size() != 2) throw UsageError("--center expects LAT,LON");
        LocalProtocolConfig lc;
        lc.reference = {c[0], c[1], 0.0};
        validate_point(lc.reference);
        lc.neighbor_counts = parse_list<std::size_t>(a.neighbors, "--neighbors");
        lc.modality = a.modality.empty() ? 0 : modality_id(reg, a.modality);
        csv << "modality,neighbors,observations,error\n";
        summary << "local protocol around (" << c[0] << ", " << c[1] << ") for " << reg[lc.modality].name << '\n';
        for (const auto& r : local_inference(model, lc, data.test)) {
            csv << reg[lc.modality].name << ',' << r.neighbors << ',' << r.observations << ',' << detail::format_number(r.error) << '\n';
            summary << "  k=" << std::setw(3) << r.neighbors << "  error " << r.error << '\n';
        }
    }
    write_text(out / (a.protocol + ".csv"), csv.str());
    write_text(out / (a.protocol + "_summary.txt"), summary.str());
    std::cout << summary.str();
}

struct ReconstructArgs {
    std::string checkpoint;
    std::string modality;
    double resolution = 1.0;
    std::string out;
    std::string mask;
    double depth_km = 0.0;
    std::size_t threads = 0;
};

void cmd_reconstruct(const ReconstructArgs& a) {
    const auto ck = load_checkpoint(a.checkpoint);
    const Model& model = *ck.model;
    const std::size_t m = modality_id(model.registry(), a.modality);
    if (!(a.resolution > 0.0) || a.resolution > 180.0) throw UsageError("--resolution must lie in (0, 180]");
    const std::set<std::size_t> mask = a.mask.empty() ? std::set<std::size_t>{} : load_mask(a.mask);
    const auto grid = reconstruct_field(model, m, a.resolution, {}, mask, a.depth_km, a.threads ? a.threads : default_threads());
    fs::path csv(a.out);
    if (csv.has_parent_path()) fs::create_directories(csv.parent_path());
    fs::path pgm = csv, side = csv;
    pgm.replace_extension(".pgm");
    side.replace_extension(".pgm.json");
    const auto& spec = model.registry()[m];
    write_field_csv(csv.string(), grid, spec);
    write_field_pgm(pgm.string(), side.string(), grid, spec);
    std::cout << "wrote " << grid.n_lat << " x " << grid.n_lon << " grid to " << csv.string() << " and " << pgm.string() << '\n';
}

void cmd_info(const std::string& path) {
    const auto ck = load_checkpoint(path);
    const Model& model = *ck.model;
    std::cout << "config\n" << nlohmann::json(model.config()).dump(2) << "\n\nregistry\n";
    for (std::size_t m = 0; m < model.registry().size(); ++m) {
        const auto& s = model.registry()[m];
        std::cout << "  " << m << "  " << std::left << std::setw(28) << s.name << to_string(s.kind);
        if (s.kind == TaskKind::classification) std::cout << " (" << s.classes.size() << " classes)";
        std::cout << '\n';
    }
    const auto breakdown = model.parameter_breakdown();
    std::size_t total = 0;
    for (const auto& [_, n] : breakdown) total += n;
    std::cout << "\nparameters " << total << "\n";
    for (const auto& [name, n] : breakdown) std::cout << "  " << std::left << std::setw(12) << name << n << '\n';
    if (ck.adam_config) std::cout << "\noptimizer step " << ck.adam_step << '\n';
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Multimodal geospatial transformer toolkit"};
    app.require_subcommand(1);

    GenDataArgs gen;
    auto* g = app.add_subcommand("gen-data", "Write synthetic modality CSVs and their registry");
    g->add_option("--out", gen.out, "Output directory")->required();
    g->add_option("--seed", gen.seed, "Data seed");
    g->add_option("--points", gen.points, "Points per modality")->check(CLI::PositiveNumber);

    TrainArgs tr;
    std::uint64_t steps = 0;
    auto* t = app.add_subcommand("train", "Train a model from a JSON run config");
    t->add_option("--config", tr.config, "Run config JSON (defaults: micro preset on synthetic data)");
    t->add_option("--out", tr.out, "Run directory")->required();
    auto* steps_opt = t->add_option("--steps", steps, "Override the configured step count");

    EvalArgs ev;
    auto* e = app.add_subcommand("eval", "Run an evaluation protocol");
    e->add_option("--checkpoint", ev.checkpoint)->required();
    e->add_option("--protocol", ev.protocol, "local | global | heldout")->required();
    e->add_option("--data-dir", ev.data_dir, "Split directory with train/ and test/ (default: from the checkpoint)");
    e->add_option("--out", ev.out, "Directory for CSV tables and summary");
    e->add_option("--obs-counts", ev.obs_counts, "global: observations per modality");
    e->add_option("--seeds", ev.seeds, "global: independent draws per setting");
    e->add_option("--seed", ev.seed, "Base seed for observation draws");
    e->add_option("--center", ev.center, "local: reference point LAT,LON");
    e->add_option("--neighbors", ev.neighbors, "local: neighbor counts");
    e->add_option("--modality", ev.modality, "Target modality (local default: first; global default: angular ones)");
    e->add_option("--threads", ev.threads, "Worker threads (default: TEARTH_THREADS, else 1)");

    ReconstructArgs rc;
    auto* r = app.add_subcommand("reconstruct", "Predict a modality on a global grid");
    r->add_option("--checkpoint", rc.checkpoint)->required();
    r->add_option("--modality", rc.modality)->required();
    r->add_option("--resolution", rc.resolution, "Grid spacing in degrees");
    r->add_option("--out", rc.out, "CSV path; the PGM and its sidecar are written alongside")->required();
    r->add_option("--mask", rc.mask, "File of cell indices to suppress");
    r->add_option("--depth", rc.depth_km, "Query depth in km");
    r->add_option("--threads", rc.threads);

    std::string info_path;
    auto* i = app.add_subcommand("info", "Describe a checkpoint");
    i->add_option("--checkpoint", info_path)->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& err) {
        const int code = app.exit(err);
        return code == 0 ? 0 : kExitUsage;
    }

    try {
        if (*g) cmd_gen_data(gen);
        if (*t) {
            if (*steps_opt) tr.steps = steps;
            cmd_train(tr);
        }
        if (*e) cmd_eval(ev);
        if (*r) cmd_reconstruct(rc);
        if (*i) cmd_info(info_path);
    } catch (const UsageError& err) {
        std::cerr << "error: " << err.what() << '\n';
        return kExitUsage;
    } catch (const ConfigError& err) {
        std::cerr << "config error: " << err.what() << '\n';
        return kExitUsage;
    } catch (const NumericError& err) {
        std::cerr << "numeric failure: " << err.what() << '\n';
        return kExitNumeric;
    } catch (const std::exception& err) {
        std::cerr << "error: " << err.what() << '\n';
        return kExitData;
    }
    return 0;
}
