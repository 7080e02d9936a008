#include "valigen/cli.hpp"

#include <unistd.h>

#include <iostream>
#include <numeric>

#include <CLI11.hpp>

#include "valigen/channel.hpp"
#include "valigen/charts.hpp"
#include "valigen/config.hpp"
#include "valigen/conformance.hpp"
#include "valigen/dataset.hpp"
#include "valigen/error.hpp"
#include "valigen/png_codec.hpp"
#include "valigen/reference_workers.hpp"
#include "valigen/report_io.hpp"
#include "valigen/rng.hpp"
#include "valigen/run_directory.hpp"
#include "valigen/util.hpp"

namespace valigen {

namespace fs = std::filesystem;

namespace {

struct RunOverrides {
    std::optional<std::uint64_t> seed;
    std::optional<int> workers;
    std::optional<int> n_per_class;
    std::optional<int> retry_budget;
};

EngineConfig load_config(const std::string& path, const RunOverrides& o) {
    EngineConfig cfg = path.empty() ? EngineConfig() : EngineConfig::load(path);
    if (o.seed) cfg.loop.base_seed = cfg.eval.base_seed = *o.seed;
    if (o.workers) cfg.workers = *o.workers;
    if (o.n_per_class) cfg.eval.n_per_class = *o.n_per_class;
    if (o.retry_budget) cfg.loop.retry_budget = *o.retry_budget;
    if (cfg.workers < 1) throw UsageError("--workers must be >= 1");
    cfg.loop.validate();
    cfg.eval.validate();
    return cfg;
}

std::vector<WorkerPair> open_pool(const EngineConfig& cfg, const ClassCatalog& catalog, int width, int height) {
    const auto gen_spec = cfg.endpoint(Role::generator, catalog.size());
    const auto val_spec = cfg.endpoint(Role::validator, catalog.size());
    std::vector<WorkerPair> pool;
    for (int i = 0; i < cfg.workers; ++i) {
        auto gen = spawn_worker(gen_spec, catalog, width, height);
        auto val = spawn_worker(val_spec, catalog, width, height);
        pool.push_back({std::move(gen), std::move(val)});
    }
    return pool;
}

RunManifest base_manifest(const EngineConfig& cfg, const ClassCatalog& catalog, const std::vector<WorkerPair>& pool,
                          std::uint64_t seed, const std::vector<std::string>& argv) {
    RunManifest m;
    m.run_id = new_run_id();
    m.created_at = utc_timestamp();
    m.config_snapshot = cfg.canonical();
    m.base_seed = seed;
    m.generator_identity = pool.front().generator.identity();
    m.validator_identity = pool.front().validator.identity();
    m.catalog_digest = catalog.digest();
    m.command = std::accumulate(argv.begin(), argv.end(), std::string(),
                                [](std::string a, const std::string& b) { return a.empty() ? b : a + " " + b; });
    return m;
}

fs::path resolve_out(const std::string& out, const EngineConfig& cfg) {
    if (!out.empty()) return out;
    fs::path root(cfg.run_root);
    if (root.is_relative()) root = cfg.base_dir / root;
    return root / ("run-" + new_run_id());
}

void write_report_artifacts(const fs::path& dir, const EvalReport& report, bool transpose) {
    write_text_file(dir / "confusion.csv", confusion_to_csv(report, transpose));
    fs::create_directories(dir / "charts");
    const auto charts = render_charts(report, transpose);
    write_text_file(dir / "charts" / "f1_bars.svg", charts.f1_bars);
    write_text_file(dir / "charts" / "confusion.svg", charts.confusion_heatmap);
}

int cmd_split(const std::string& manifest_path, const std::string& root, const std::string& fraction,
              std::uint64_t seed, const std::string& out, const std::string& catalog_path) {
    const ClassCatalog catalog = catalog_path.empty() ? default_catalog() : catalog_load(catalog_path);
    const auto manifest = ingest_manifest(manifest_path, root, catalog.size());
    const auto split = stratified_split(manifest, {Fraction::parse(fraction), seed});
    fs::create_directories(out);
    write_text_file(fs::path(out) / "train.csv", manifest_to_csv(split.train));
    write_text_file(fs::path(out) / "test.csv", manifest_to_csv(split.test));
    std::cout << "class,name,train,test\n";
    for (std::size_t c = 0; c < catalog.size(); ++c) {
        std::cout << c << "," << catalog.classes()[c].name << "," << split.train.counts_per_class[c] << ","
                  << split.test.counts_per_class[c] << "\n";
    }
    return 0;
}

int cmd_augment(const std::string& manifest_path, const std::string& root, const std::string& spec_path,
                std::uint64_t seed, int copies, const std::string& out, const std::string& catalog_path) {
    if (copies < 1) throw UsageError("--copies must be >= 1");
    const ClassCatalog catalog = catalog_path.empty() ? default_catalog() : catalog_load(catalog_path);
    const AugmentSpec spec = spec_path.empty() ? AugmentSpec{} : AugmentSpec::from_json(read_text_file(spec_path));
    spec.validate();
    const auto manifest = ingest_manifest(manifest_path, root, catalog.size());
    DatasetManifest result;
    result.root = out;
    result.counts_per_class.assign(catalog.size(), 0);
    for (std::size_t i = 0; i < manifest.entries.size(); ++i) {
        const auto& e = manifest.entries[i];
        const auto img = decode_image(read_binary_file(fs::path(root) / e.relative_path));
        fs::path rel = e.relative_path;
        for (int j = 0; j < copies; ++j) {
            const std::uint64_t s = mix_seed(mix_seed(seed, i), static_cast<std::uint64_t>(j));
            fs::path target = rel.parent_path() / (rel.stem().string() + "_aug" + std::to_string(j) + ".png");
            fs::create_directories(fs::path(out) / target.parent_path());
            write_binary_file(fs::path(out) / target, encode_image(augment_image(img, spec, s)));
            result.entries.push_back({target.generic_string(), e.class_id});
            ++result.counts_per_class[static_cast<std::size_t>(e.class_id)];
        }
    }
    write_text_file(fs::path(out) / "manifest.csv", manifest_to_csv(result));
    std::cout << "wrote " << result.entries.size() << " augmented images to " << out << "\n";
    return 0;
}

int cmd_gen(const std::string& config_path, const std::string& class_arg, int count, const std::string& out,
            const RunOverrides& o, const std::vector<std::string>& argv) {
    if (count < 1) throw UsageError("--count must be >= 1");
    const EngineConfig cfg = load_config(config_path, o);
    const ClassCatalog catalog = cfg.load_catalog();
    const auto cls = catalog.resolve(class_arg);
    if (!cls) throw UsageError("unknown class '" + class_arg + "'");
    auto pool = open_pool(cfg, catalog, cfg.loop.width, cfg.loop.height);
    auto run = RunDirectory::create(resolve_out(out, cfg), base_manifest(cfg, catalog, pool, cfg.loop.base_seed, argv),
                                    cfg.canonical());
    const std::vector<BatchRequest> requests{{*cls, count}};
    const auto results = batch_generate_validated(pool, requests, cfg.loop);
    write_loop_artifacts(run.path(), catalog, results);
    for (auto& p : pool) {
        shutdown_worker(p.generator);
        shutdown_worker(p.validator);
    }
    int accepted = 0, exhausted = 0, failed = 0;
    std::size_t attempts = 0;
    for (const auto& r : results) {
        attempts += r.attempts.size();
        if (r.outcome == LoopOutcome::accepted) ++accepted;
        if (r.outcome == LoopOutcome::budget_exhausted) ++exhausted;
        if (r.outcome == LoopOutcome::failed) {
            ++failed;
            log_warning("item " + std::to_string(r.item_index) + " failed: " + r.error);
        }
    }
    run.mark_completed();
    std::cout << "run " << run.path().string() << ": class " << catalog.at(*cls).name << ", " << accepted
              << " accepted, " << exhausted << " budget_exhausted, " << failed << " failed, " << attempts
              << " attempts\n";
    return failed == 0 ? 0 : 1;
}

int cmd_eval(const std::string& config_path, const std::string& out, const RunOverrides& o,
             const std::vector<std::string>& argv) {
    const EngineConfig cfg = load_config(config_path, o);
    const ClassCatalog catalog = cfg.load_catalog();
    auto pool = open_pool(cfg, catalog, cfg.eval.width, cfg.eval.height);
    auto run = RunDirectory::create(resolve_out(out, cfg), base_manifest(cfg, catalog, pool, cfg.eval.base_seed, argv),
                                    cfg.canonical());
    std::vector<EvalSample> samples;
    EvalReport report = evaluate_first_attempt(pool, catalog, cfg.eval, &samples, true);
    for (auto& p : pool) {
        shutdown_worker(p.generator);
        shutdown_worker(p.validator);
    }
    report.manifest = run.manifest();

    std::string log;
    for (const auto& s : samples) {
        if (s.image) {
            const auto& def = catalog.at(s.class_id);
            const auto dir = run.path() / "images" / (std::to_string(def.id) + "_" + path_safe(def.name));
            fs::create_directories(dir);
            write_binary_file(dir / (std::to_string(s.item_index) + "_1.png"), encode_image(*s.image));
        }
        if (s.verdict) {
            AttemptRecord a{1, s.seed, *s.verdict, s.verdict->pred == s.class_id, std::nullopt};
            log += attempt_log_line(s.class_id, s.item_index, a) + "\n";
        }
    }
    write_text_file(run.path() / "attempts.jsonl", log);
    write_text_file(run.path() / "report.json", report_to_json(report));
    write_report_artifacts(run.path(), report, false);
    run.mark_completed();

    std::cout << "run " << run.path().string() << ": macro precision " << format_fixed6(report.macro.precision)
              << ", recall " << format_fixed6(report.macro.recall) << ", F1 " << format_fixed6(report.macro.f1)
              << "\n";
    if (!report.complete()) {
        log_warning(std::to_string(report.failures.size()) + " evaluation item(s) failed; report is incomplete");
        return 1;
    }
    return 0;
}

int cmd_report(const std::string& run_dir, bool transpose) {
    const EvalReport report = load_report(fs::path(run_dir) / "report.json");
    write_report_artifacts(run_dir, report, transpose);
    std::cout << "re-rendered confusion.csv and charts for " << run_dir << "\n";
    return 0;
}

int cmd_compare(const std::vector<std::string>& runs, const std::string& out) {
    std::vector<fs::path> dirs(runs.begin(), runs.end());
    const auto table = compare_runs(dirs);
    if (!out.empty()) write_text_file(out, table.to_csv());
    std::cout << table.to_text();
    return 0;
}

int cmd_conformance(const std::string& config_path) {
    const EngineConfig cfg = load_config(config_path, {});
    const ClassCatalog catalog = cfg.load_catalog();
    bool ok = true;
    for (Role role : {Role::generator, Role::validator}) {
        const auto report = conformance_check(cfg.endpoint(role, catalog.size()), catalog);
        std::cout << report.to_text();
        ok = ok && report.passed();
    }
    return ok ? 0 : 1;
}

std::vector<char*> as_argv(std::vector<std::string>& args) {
    std::vector<char*> out;
    for (auto& a : args) out.push_back(a.data());
    return out;
}

}  // namespace

int run_reference_worker_main(const std::vector<std::string>& argv_in) {
    CLI::App app{"valigen reference worker"};
    std::string role = "generator";
    double fidelity = 1.0, error_rate = 0.0;
    std::string stub_matrix, transport = "stdio", name, version_tag;
    std::uint64_t seed = 0;
    std::optional<std::int64_t> step;
    app.add_option("--role", role, "generator | validator | stub")
        ->check(CLI::IsMember({"generator", "validator", "stub"}));
    app.add_option("--fidelity", fidelity)->check(CLI::Range(0.0, 1.0));
    app.add_option("--error-rate", error_rate)->check(CLI::Range(0.0, 1.0));
    app.add_option("--stub-matrix", stub_matrix, "CSV with one row per true class");
    app.add_option("--transport", transport, "stdio | tcp:<port>");
    app.add_option("--seed", seed, "stub sampling seed");
    app.add_option("--name", name);
    app.add_option("--version-tag", version_tag);
    app.add_option("--checkpoint-step", step);
    std::vector<std::string> args = argv_in;
    auto cargv = as_argv(args);
    try {
        app.parse(static_cast<int>(cargv.size()), cargv.data());
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 2;
    }
    reference::WorkerParams p;
    p.kind = role == "generator" ? reference::WorkerKind::generator
             : role == "stub"    ? reference::WorkerKind::stub
                                 : reference::WorkerKind::centroid;
    p.fidelity = {fidelity, error_rate};
    p.seed = seed;
    p.identity = reference::default_identity(p.kind);
    if (!name.empty()) p.identity.name = name;
    if (!version_tag.empty()) p.identity.version_tag = version_tag;
    if (step) p.identity.checkpoint_step = step;
    try {
        if (p.kind == reference::WorkerKind::stub) {
            if (stub_matrix.empty()) {
                std::cerr << "valigen: --stub-matrix is required for --role stub\n";
                return 2;
            }
            p.stub_policy = reference::StubPolicy::load_csv(stub_matrix);
        }
        if (transport == "stdio") {
            LineChannel ch(::dup(STDIN_FILENO), ::dup(STDOUT_FILENO));
            return reference::serve(p, ch);
        }
        if (transport.rfind("tcp:", 0) == 0) {
            const int port = std::stoi(transport.substr(4));
            const auto [listen_fd, bound] = listen_tcp(port);
            std::cerr << "valigen: reference " << role << " listening on 127.0.0.1:" << bound << std::endl;
            const int fd = accept_one(listen_fd);
            ::close(listen_fd);
            LineChannel ch(fd, fd);
            return reference::serve(p, ch);
        }
        std::cerr << "valigen: --transport must be stdio or tcp:<port>\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "valigen: " << e.what() << "\n";
        return 1;
    }
}

int dispatch(const std::vector<std::string>& argv_in) {
    // `worker reference` forwards its own flags untouched
    if (argv_in.size() >= 3 && argv_in[1] == "worker" && argv_in[2] == "reference") {
        std::vector<std::string> rest{argv_in[0] + " worker reference"};
        rest.insert(rest.end(), argv_in.begin() + 3, argv_in.end());
        return run_reference_worker_main(rest);
    }

    CLI::App app{"valigen: self-validating synthetic image pipeline"};
    app.require_subcommand(1);

    std::string manifest, root, out, config, fraction = "0.8", spec, class_arg, run_dir, catalog_path;
    std::uint64_t seed = 0;
    int copies = 1, count = 1;
    bool transpose = false;
    std::vector<std::string> runs;
    RunOverrides overrides;

    auto* split = app.add_subcommand("split", "stratified train/test split of a manifest");
    split->add_option("--manifest", manifest)->required();
    split->add_option("--root", root)->required();
    split->add_option("--fraction", fraction, "train fraction, e.g. 0.8 or 4/5");
    split->add_option("--seed", seed);
    split->add_option("--out", out)->required();
    split->add_option("--catalog", catalog_path);

    auto* augment = app.add_subcommand("augment", "write augmented copies of a manifest's images");
    augment->add_option("--manifest", manifest)->required();
    augment->add_option("--root", root)->required();
    augment->add_option("--spec", spec);
    augment->add_option("--seed", seed);
    augment->add_option("--copies", copies);
    augment->add_option("--out", out)->required();
    augment->add_option("--catalog", catalog_path);

    auto add_run_flags = [&](CLI::App* sub) {
        sub->add_option("--config", config);
        sub->add_option("--out", out);
        sub->add_option("--seed", overrides.seed, "overrides loop and eval base seeds");
        sub->add_option("--workers", overrides.workers, "worker pairs in the pool");
    };
    auto* gen = app.add_subcommand("gen", "generate validated images for one class");
    add_run_flags(gen);
    gen->add_option("--class", class_arg, "class id or name")->required();
    gen->add_option("--count", count);
    gen->add_option("--retry-budget", overrides.retry_budget);

    auto* eval = app.add_subcommand("eval", "first-attempt evaluation with report and charts");
    add_run_flags(eval);
    eval->add_option("--n-per-class", overrides.n_per_class);

    auto* report = app.add_subcommand("report", "re-render confusion.csv and charts from report.json");
    report->add_option("--run", run_dir)->required();
    report->add_flag("--transpose", transpose, "rows = predicted class");

    auto* compare = app.add_subcommand("compare", "tabulate macro metrics across runs");
    compare->add_option("runs", runs, "run directories");
    compare->add_option("--out", out, "comparison CSV");

    auto* worker = app.add_subcommand("worker", "worker utilities");
    worker->require_subcommand(1);
    auto* conformance = worker->add_subcommand("conformance", "check the configured workers against the protocol");
    conformance->add_option("--config", config);
    worker->add_subcommand("reference", "serve a reference worker");

    std::vector<std::string> args = argv_in;
    auto cargv = as_argv(args);
    try {
        app.parse(static_cast<int>(cargv.size()), cargv.data());
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        if (code == 0) return 0;
        std::cerr << app.help();
        return 2;
    }

    try {
        if (split->parsed()) return cmd_split(manifest, root, fraction, seed, out, catalog_path);
        if (augment->parsed()) return cmd_augment(manifest, root, spec, seed, copies, out, catalog_path);
        if (gen->parsed()) return cmd_gen(config, class_arg, count, out, overrides, argv_in);
        if (eval->parsed()) return cmd_eval(config, out, overrides, argv_in);
        if (report->parsed()) return cmd_report(run_dir, transpose);
        if (compare->parsed()) return cmd_compare(runs, out);
        if (conformance->parsed()) return cmd_conformance(config);
    } catch (const UsageError& e) {
        std::cerr << "valigen: " << e.what() << "\n";
        return 2;
    } catch (const Error& e) {
        std::cerr << "valigen: " << e.what() << "\n";
        return 1;
    } catch (const fs::filesystem_error& e) {
        std::cerr << "valigen: " << e.what() << "\n";
        return 1;
    }
    std::cerr << app.help();
    return 2;
}

}  // namespace valigen
