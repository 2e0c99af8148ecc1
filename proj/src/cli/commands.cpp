#include <atomic>
#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <mutex>
#include <thread>

#include "mdl/checkpoint.hpp"
#include "mdl/cli.hpp"
#include "mdl/errors.hpp"
#include "mdl/io.hpp"
#include "mdl/metrics.hpp"

namespace mdl::cli {
namespace {

std::filesystem::path output_root(const Options& opt, const ExperimentConfig& cfg) {
    if (opt.out) return *opt.out;
    if (cfg.output_dir.empty()) throw ConfigError("no output directory: set output_dir or pass --out");
    return cfg.output_dir;
}

std::vector<std::uint64_t> seeds_of(const Options& opt, const ExperimentConfig& cfg) {
    const auto seeds = opt.seeds ? *opt.seeds : cfg.seeds;
    if (seeds.empty()) throw ConfigError("no seeds: set seeds or pass --seeds");
    return seeds;
}

std::string timestamp() {
    const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

class RunLog {
public:
    RunLog(const std::filesystem::path& dir, std::ostream& echo) : echo_(echo) {
        std::filesystem::create_directories(dir);
        file_.open(dir / "run.log", std::ios::app);
    }
    void line(const std::string& msg) {
        std::lock_guard<std::mutex> lock(mu_);
        echo_ << msg << '\n';
        file_ << timestamp() << ' ' << msg << '\n';
        file_.flush();
    }

private:
    std::ostream& echo_;
    std::ofstream file_;
    std::mutex mu_;
};

std::string percent(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.1f", 100.0 * v);
    return buf;
}

struct Column {
    std::string name;
    std::vector<double> values;
};

std::pair<double, double> mean_std(const std::vector<double>& v) {
    double m = 0.0;
    for (double x : v) m += x;
    m /= static_cast<double>(v.size());
    if (v.size() < 2) return {m, std::nan("")};
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return {m, std::sqrt(s / static_cast<double>(v.size() - 1))};
}

std::vector<std::filesystem::path> config_files(const std::filesystem::path& p) {
    if (!std::filesystem::is_directory(p)) return {p};
    std::vector<std::filesystem::path> files;
    for (const auto& e : std::filesystem::directory_iterator(p))
        if (e.is_regular_file() && e.path().extension() == ".json") files.push_back(e.path());
    std::sort(files.begin(), files.end());
    return files;
}

}  // namespace

std::filesystem::path run_dir(const std::filesystem::path& output_dir, const std::string& method, std::uint64_t seed) {
    return output_dir / method_slug(method) / ("seed_" + std::to_string(seed));
}

void write_run(const dtrain::PipelineReport& report, const std::filesystem::path& dir) {
    for (const auto& s : report.snapshots)
        models::save_checkpoint(s.model, dir / (std::string("checkpoint_") + dtrain::phase_name(s.phase) + ".bin"));
    io::write_file_atomic(dir / "curves.csv", dtrain::curves_csv(report));
    io::write_file_atomic(dir / "metrics.csv", dtrain::metrics_csv(report));
    io::write_file_atomic(dir / "report.json", dtrain::report_to_json(report).dump(2) + "\n");
}

void cmd_generate(const Options& opt, std::ostream& log) {
    const ExperimentConfig cfg = load_config(opt.config);
    if (!cfg.generator) throw ConfigError("generate: config needs data.generator");
    const auto out = output_root(opt, cfg);
    std::vector<std::pair<std::uint64_t, std::filesystem::path>> jobs;
    if (opt.seeds)
        for (auto s : *opt.seeds) jobs.emplace_back(s, out / ("dataset_seed_" + std::to_string(s) + ".csv"));
    else
        jobs.emplace_back(cfg.generator->seed, out / "dataset.csv");
    for (const auto& [seed, path] : jobs) {
        data::SyntheticSpec spec = *cfg.generator;
        spec.seed = seed;
        const auto ds = data::generate(spec);
        data::write_dataset(ds, spec, path);
        std::size_t n = 0;
        for (const auto& d : ds.domains) n += d.size();
        log << "wrote " << path.string() << " (" << n << " rows, " << ds.num_domains() << " domains)\n";
    }
}

void cmd_train(const Options& opt, std::ostream& log) {
    const ExperimentConfig cfg = load_config(opt.config);
    check_method(cfg);
    const auto seeds = seeds_of(opt, cfg);
    const auto out = output_root(opt, cfg);
    const data::DomainDataset data = load_data(cfg);
    resolve_arch(cfg, data);

    RunLog runlog(out, log);
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mu;
    auto worker = [&] {
        for (std::size_t i; (i = next++) < seeds.size();) {
            try {
                runlog.line("start " + cfg.method + " seed " + std::to_string(seeds[i]));
                const auto report = run_method(cfg, data, seeds[i]);
                const auto dir = run_dir(out, cfg.method, seeds[i]);
                write_run(report, dir);
                runlog.line("done " + cfg.method + " seed " + std::to_string(seeds[i]) + ": test average " +
                            percent(report.test.average) + ", worst " + percent(report.test.worst) + " -> " +
                            dir.string());
            } catch (...) {
                std::lock_guard<std::mutex> lock(failure_mu);
                if (!failure) failure = std::current_exception();
                next = seeds.size();
            }
        }
    };
    const std::size_t jobs = std::max<std::size_t>(1, std::min(opt.jobs, seeds.size()));
    std::vector<std::thread> threads;
    for (std::size_t j = 1; j < jobs; ++j) threads.emplace_back(worker);
    worker();
    for (auto& t : threads) t.join();
    if (failure) std::rethrow_exception(failure);
}

void cmd_compare(const Options& opt, std::ostream& log) {
    struct Row {
        std::string method;
        std::vector<std::uint64_t> found;
        std::vector<std::uint64_t> missing;
        std::vector<Column> cols;
    };
    std::vector<Row> rows;
    std::optional<std::filesystem::path> results_dir = opt.out;
    std::size_t num_domains = 0;
    std::string metric;
    for (const auto& file : config_files(opt.config)) {
        const ExperimentConfig cfg = load_config(file);
        if (cfg.method.empty()) continue;
        const auto out = output_root(opt, cfg);
        if (!results_dir) results_dir = out;
        Row row;
        row.method = cfg.method;
        for (auto seed : seeds_of(opt, cfg)) {
            const auto path = run_dir(out, cfg.method, seed) / "report.json";
            if (!std::filesystem::exists(path)) {
                row.missing.push_back(seed);
                continue;
            }
            nlohmann::json rep;
            try {
                rep = nlohmann::json::parse(io::read_file(path));
            } catch (const nlohmann::json::exception& e) {
                throw DataError(path.string() + ": " + e.what());
            }
            const auto& test = rep.at("final").at("test");
            const auto per = test.at("per_domain").get<std::vector<double>>();
            if (num_domains == 0) {
                num_domains = per.size();
                metric = rep.at("metric").get<std::string>();
            }
            if (per.size() != num_domains) throw DataError(path.string() + ": domain count differs from other runs");
            if (row.cols.empty()) {
                for (std::size_t t = 0; t < per.size(); ++t) row.cols.push_back({"domain_" + std::to_string(t), {}});
                for (const char* name : {"average", "worst", "pooled"}) row.cols.push_back({name, {}});
            }
            for (std::size_t t = 0; t < per.size(); ++t) row.cols[t].values.push_back(per[t]);
            row.cols[per.size()].values.push_back(test.at("average").get<double>());
            row.cols[per.size() + 1].values.push_back(test.at("worst").get<double>());
            row.cols[per.size() + 2].values.push_back(test.at("pooled").get<double>());
            row.found.push_back(seed);
        }
        rows.push_back(std::move(row));
    }
    if (rows.empty()) throw ConfigError("compare: no experiment configs found in " + opt.config.string());
    if (num_domains == 0) throw DataError("compare: no completed runs found");

    std::vector<std::string> names;
    for (std::size_t t = 0; t < num_domains; ++t) names.push_back("domain_" + std::to_string(t));
    for (const char* n : {"average", "worst", "pooled"}) names.push_back(n);

    std::string csv = "method,seeds,missing";
    for (const auto& n : names) csv += "," + n + "_mean," + n + "_std";
    csv += '\n';
    std::vector<std::vector<std::string>> table;
    table.push_back({"method", "n"});
    for (std::size_t t = 0; t < num_domains; ++t) table[0].push_back("D" + std::to_string(t));
    const std::string tag = metric == "auc" ? "AUC" : "Acc.";
    table[0].push_back("Avg. " + tag);
    table[0].push_back("Worst " + tag);
    table[0].push_back("Pooled " + tag);
    std::string missing_note;
    for (const auto& row : rows) {
        csv += row.method + ',' + std::to_string(row.found.size()) + ',';
        for (std::size_t i = 0; i < row.missing.size(); ++i) csv += (i ? ";" : "") + std::to_string(row.missing[i]);
        std::vector<std::string> cells{row.method, std::to_string(row.found.size())};
        for (std::size_t c = 0; c < names.size(); ++c) {
            if (row.cols.empty()) {
                csv += ",,";
                cells.push_back("-");
                continue;
            }
            const auto [m, s] = mean_std(row.cols[c].values);
            csv += ',' + io::format_double(m) + ',' + (std::isnan(s) ? std::string() : io::format_double(s));
            cells.push_back(percent(m) + (std::isnan(s) ? std::string() : "±" + percent(s)));
        }
        csv += '\n';
        table.push_back(std::move(cells));
        if (!row.missing.empty()) {
            missing_note += "missing " + row.method + " seeds:";
            for (auto s : row.missing) missing_note += " " + std::to_string(s);
            missing_note += '\n';
        }
    }

    std::vector<std::size_t> width(table[0].size(), 0);
    auto display_width = [](const std::string& s) {
        std::size_t w = 0;
        for (unsigned char ch : s) w += (ch & 0xC0) != 0x80;
        return w;
    };
    for (const auto& r : table)
        for (std::size_t c = 0; c < r.size(); ++c) width[c] = std::max(width[c], display_width(r[c]));
    std::string text;
    for (const auto& r : table) {
        for (std::size_t c = 0; c < r.size(); ++c) {
            const std::string pad(width[c] - display_width(r[c]), ' ');
            text += c == 0 ? r[c] + pad : "  " + pad + r[c];
        }
        text += '\n';
    }
    text += missing_note;

    io::write_file_atomic(*results_dir / "results.csv", csv);
    io::write_file_atomic(*results_dir / "results.txt", text);
    log << text;
    if (!missing_note.empty()) log << "partial table: some runs are missing\n";
}

void cmd_boundary(const Options& opt, std::ostream& log) {
    if (!opt.checkpoint) throw ConfigError("boundary: --checkpoint is required");
    data::DomainDataset ds;
    std::optional<ExperimentConfig> cfg;
    if (opt.dataset) {
        ds = data::read_dataset(*opt.dataset);
    } else if (!opt.config.empty()) {
        cfg = load_config(opt.config);
        ds = load_data(*cfg);
    } else {
        throw ConfigError("boundary: pass --dataset or --config");
    }
    std::filesystem::path out;
    if (opt.out) out = *opt.out;
    else if (cfg && !cfg->output_dir.empty()) out = cfg->output_dir;
    else out = opt.checkpoint->parent_path();

    const models::Model model = models::load_checkpoint(*opt.checkpoint);
    if (model.spec().num_domains != ds.num_domains() || model.spec().input_dim != ds.input_dim())
        throw ConfigError("boundary: checkpoint does not match the dataset");
    const auto grid = metrics::boundary_grid(model, metrics::data_extents(ds), opt.resolution, ds);
    for (std::size_t t = 0; t < ds.num_domains(); ++t)
        io::write_file_atomic(out / ("grid_" + std::to_string(t) + ".csv"), metrics::grid_csv(grid, t));
    nlohmann::json summary;
    summary["resolution"] = grid.resolution;
    summary["extents"] = {grid.extents.x_min, grid.extents.x_max, grid.extents.y_min, grid.extents.y_max};
    summary["test_accuracy"] = grid.accuracy;
    summary["conflict_cells"] = grid.conflict_count();
    io::write_file_atomic(out / "boundary.json", summary.dump(2) + "\n");
    log << "wrote " << ds.num_domains() << " grids to " << out.string() << " (" << grid.conflict_count()
        << " conflict cells)\n";
}

int run_command(const std::string& name, const Options& opt, std::ostream& log, std::ostream& err) {
    try {
        if (name == "generate") cmd_generate(opt, log);
        else if (name == "train") cmd_train(opt, log);
        else if (name == "compare") cmd_compare(opt, log);
        else if (name == "boundary") cmd_boundary(opt, log);
        else throw ConfigError("unknown command '" + name + "'");
        return kOk;
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << '\n';
        return kConfigError;
    } catch (const DataError& e) {
        err << "data error: " << e.what() << '\n';
        return kDataError;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kRuntimeError;
    }
}

}  // namespace mdl::cli
