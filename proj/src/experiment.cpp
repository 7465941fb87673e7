#include "p2preg/experiment.hpp"

#include <atomic>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <thread>

#include <json.hpp>

#include "p2preg/rng.hpp"

namespace fs = std::filesystem;

namespace p2preg {

namespace {

uint64_t mix(uint64_t seed, uint64_t a, uint64_t b = 0) {
    return Rng::derive(Rng::derive(seed, a).next_u64(), b).next_u64();
}

/// Runs fn(0..count-1) on `workers` threads; items are independent.
void parallel_for(int count, int workers, const std::function<void(int)>& fn) {
    workers = std::max(1, workers);
    if (workers == 1) {
        for (int i = 0; i < count; ++i) fn(i);
        return;
    }
    std::atomic<int> next{0};
    std::vector<std::thread> threads;
    for (int w = 0; w < workers; ++w)
        threads.emplace_back([&] {
            for (int i = next.fetch_add(1); i < count; i = next.fetch_add(1)) fn(i);
        });
    for (std::thread& t : threads) t.join();
}

}  // namespace

std::vector<SampleSpec> plan_suite(const SuiteConfig& config) {
    std::vector<SampleSpec> specs;
    char id[128];
    for (int s = 0; s < config.shapes; ++s) {
        for (int d = 0; d < config.deformations; ++d) {
            for (int c = 0; c < config.crops; ++c) {
                for (double noise : config.noise_levels_mm) {
                    SampleSpec spec;
                    uint64_t cell = (static_cast<uint64_t>(s) * 1000 + d) * 1000 + c;
                    if (config.noise_levels_mm.size() > 1) {
                        std::snprintf(id, sizeof id, "s%02d_d%02d_c%02d_n%g", s, d, c, noise);
                    } else {
                        std::snprintf(id, sizeof id, "s%02d_d%02d_c%02d", s, d, c);
                    }
                    spec.id = id;
                    spec.shape_seed = mix(config.seed, 1, s);
                    spec.scale_seed = mix(config.seed, 2, s);
                    spec.deformation = config.deformation;
                    spec.deformation.seed = mix(config.seed, 3, s * 1000 + d);
                    Rng vis_rng(mix(config.seed, 4, cell));
                    spec.visibility_ratio =
                        vis_rng.uniform(config.visibility_range[0], config.visibility_range[1]);
                    spec.noise_level_mm = noise;
                    spec.crop_seed = mix(config.seed, 5, cell);
                    spec.rigid_seed = mix(config.seed, 6, cell);
                    specs.push_back(spec);
                }
            }
        }
    }
    return specs;
}

namespace {

nlohmann::json suite_config_to_json(const SuiteConfig& c) {
    return {{"dir", c.dir},
            {"shapes", c.shapes},
            {"deformations", c.deformations},
            {"crops", c.crops},
            {"visibility_range", c.visibility_range},
            {"noise_levels_mm", c.noise_levels_mm},
            {"deformation",
             {{"control_points", c.deformation.control_points},
              {"kernel_width_mm", c.deformation.kernel_width_mm},
              {"amplitude_mm", c.deformation.amplitude_mm}}},
            {"seed", c.seed}};
}

}  // namespace

void generate_suite(const SuiteConfig& config, bool dry_run) {
    std::vector<SampleSpec> specs = plan_suite(config);
    fs::create_directories(config.dir);

    nlohmann::json samples = nlohmann::json::array();
    if (dry_run) {
        for (const SampleSpec& spec : specs)
            samples.push_back({{"id", spec.id},
                               {"requested_visibility", spec.visibility_ratio},
                               {"noise_level_mm", spec.noise_level_mm}});
    } else {
        std::vector<nlohmann::json> rows(specs.size());
        for (std::size_t i = 0; i < specs.size(); ++i) {
            BenchmarkSample sample = build_sample(specs[i]);
            save_sample(sample, config.dir + "/" + specs[i].id);
            rows[i] = {{"id", specs[i].id},
                       {"dir", specs[i].id},
                       {"visibility", sample.visibility_ratio},
                       {"noise_level_mm", sample.noise_level_mm},
                       {"deformation_rms_mm", sample.deformation_rms}};
        }
        for (auto& row : rows) samples.push_back(std::move(row));
    }

    nlohmann::json manifest{{"config", suite_config_to_json(config)},
                            {"dry_run", dry_run},
                            {"sample_count", specs.size()},
                            {"samples", samples}};
    std::ofstream out(config.dir + "/suite.json");
    if (!out) throw ParameterError("generate_suite: cannot write manifest");
    out << manifest.dump(2) << "\n";
}

std::vector<SuiteEntry> load_suite_index(const std::string& dir) {
    std::ifstream in(dir + "/suite.json");
    if (!in) throw ParameterError("load_suite_index: no suite.json in " + dir);
    nlohmann::json j;
    in >> j;
    if (j.value("dry_run", false))
        throw StateError("load_suite_index: suite was generated with --dry-run");
    std::vector<SuiteEntry> entries;
    for (const auto& s : j.at("samples")) {
        SuiteEntry e;
        e.id = s.at("id").get<std::string>();
        e.dir = dir + "/" + s.at("dir").get<std::string>();
        e.visibility = s.at("visibility").get<double>();
        e.noise_level_mm = s.at("noise_level_mm").get<double>();
        e.deformation_rms_mm = s.at("deformation_rms_mm").get<double>();
        entries.push_back(e);
    }
    return entries;
}

namespace {

MethodConfig method_from_json(const nlohmann::json& j) {
    MethodConfig m;
    m.name = j.at("name").get<std::string>();
    m.type = j.value("type", m.name);
    m.temperature = j.value("temperature", 0.0);
    if (j.contains("descriptor")) {
        const auto& d = j.at("descriptor");
        m.descriptor.type = d.value("type", "oracle");
        m.descriptor.dim = d.value("dim", m.descriptor.dim);
        m.descriptor.sigma = d.value("sigma", m.descriptor.sigma);
        m.descriptor.correlation = d.value("correlation", m.descriptor.correlation);
        m.descriptor.noise_sensitivity =
            d.value("noise_sensitivity", m.descriptor.noise_sensitivity);
        m.descriptor.seed = d.value("seed", m.descriptor.seed);
        m.descriptor.radius = d.value("radius", m.descriptor.radius);
        m.descriptor.normal_k = d.value("normal_k", m.descriptor.normal_k);
    }
    if (m.type == "p2p") {
        m.p2p.patch_count = j.value("K", m.p2p.patch_count);
        std::string rule = j.value("selection", "closest");
        m.p2p.selection = rule == "inlier" ? SelectionRule::InlierCount
                                           : SelectionRule::ClosestDistance;
        m.p2p.inlier_radius = j.value("tau", m.p2p.inlier_radius);
        m.p2p.seed = j.value("seed", m.p2p.seed);
        m.p2p.propose_candidates = j.value("propose_candidates", true);
    } else if (m.type == "icp") {
        m.icp.max_iterations = j.value("max_iterations", m.icp.max_iterations);
        m.icp.tolerance = j.value("tolerance", m.icp.tolerance);
        m.icp.max_correspondence_distance =
            j.value("max_correspondence_distance", m.icp.max_correspondence_distance);
        m.icp_init_ground_truth = j.value("init_ground_truth", false);
    } else if (m.type == "ransac") {
        m.ransac.iterations = j.value("iterations", m.ransac.iterations);
        m.ransac.max_correspondence_distance =
            j.value("max_correspondence_distance", m.ransac.max_correspondence_distance);
        m.ransac.seed = j.value("seed", m.ransac.seed);
        m.ransac.refine_with_icp = j.value("refine_with_icp", false);
    }
    return m;
}

}  // namespace

ExperimentConfig default_experiment_config() {
    ExperimentConfig config;
    MethodConfig baseline;
    baseline.name = "baseline";
    baseline.type = "baseline";
    MethodConfig p2p;
    p2p.name = "p2p";
    p2p.type = "p2p";
    config.methods = {baseline, p2p};
    return config;
}

ExperimentConfig load_experiment_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParameterError("load_experiment_config: cannot open " + path);
    nlohmann::json j;
    in >> j;

    ExperimentConfig config;
    if (j.contains("suite")) {
        const auto& s = j.at("suite");
        config.suite.dir = s.value("dir", config.suite.dir);
        config.suite.shapes = s.value("shapes", config.suite.shapes);
        config.suite.deformations = s.value("deformations", config.suite.deformations);
        config.suite.crops = s.value("crops", config.suite.crops);
        if (s.contains("visibility_range")) {
            config.suite.visibility_range[0] = s.at("visibility_range")[0].get<double>();
            config.suite.visibility_range[1] = s.at("visibility_range")[1].get<double>();
        }
        if (s.contains("noise_levels_mm"))
            config.suite.noise_levels_mm = s.at("noise_levels_mm").get<std::vector<double>>();
        if (s.contains("deformation")) {
            const auto& d = s.at("deformation");
            config.suite.deformation.control_points =
                d.value("control_points", config.suite.deformation.control_points);
            config.suite.deformation.kernel_width_mm =
                d.value("kernel_width_mm", config.suite.deformation.kernel_width_mm);
            config.suite.deformation.amplitude_mm =
                d.value("amplitude_mm", config.suite.deformation.amplitude_mm);
        }
        config.suite.seed = s.value("seed", config.suite.seed);
    }
    if (j.contains("preprocess"))
        config.voxel_size = j.at("preprocess").value("voxel_size", config.voxel_size);
    if (j.contains("methods")) {
        config.methods.clear();
        for (const auto& m : j.at("methods")) config.methods.push_back(method_from_json(m));
        std::vector<std::string> names;
        for (const MethodConfig& m : config.methods) {
            if (std::find(names.begin(), names.end(), m.name) != names.end())
                throw ParameterError("duplicate method name: " + m.name);
            names.push_back(m.name);
        }
    } else {
        config.methods = default_experiment_config().methods;
    }
    config.out = j.value("out", config.out);
    config.workers = j.value("workers", config.workers);
    return config;
}

int run_registrations(const ExperimentConfig& config, const std::string& method_filter,
                      const std::string& sample_filter) {
    std::vector<SuiteEntry> entries = load_suite_index(config.suite.dir);
    if (!sample_filter.empty()) {
        std::erase_if(entries, [&](const SuiteEntry& e) { return e.id != sample_filter; });
        if (entries.empty())
            throw ParameterError("run_registrations: unknown sample " + sample_filter);
    }

    std::vector<MethodConfig> methods = config.methods;
    if (!method_filter.empty()) {
        std::erase_if(methods, [&](const MethodConfig& m) { return m.name != method_filter; });
        if (methods.empty())
            throw ParameterError("run_registrations: unknown method " + method_filter);
    }

    std::atomic<int> failures{0};
    for (const MethodConfig& method : methods) {
        fs::create_directories(config.out + "/" + method.name);
        parallel_for(static_cast<int>(entries.size()), config.workers, [&](int i) {
            BenchmarkSample sample = load_sample(entries[i].dir);
            RunResult result = run_method(sample, method, config.voxel_size);
            if (result.failed) failures.fetch_add(1);
            write_result_json(config.out + "/" + method.name + "/" + entries[i].id + ".json",
                              entries[i].id, method.name, result);
        });
    }
    return failures.load();
}

std::vector<EvalRecord> evaluate_results(const ExperimentConfig& config) {
    std::vector<SuiteEntry> entries = load_suite_index(config.suite.dir);
    if (entries.empty()) throw ParameterError("evaluate_results: empty suite");

    std::vector<EvalRecord> records;
    for (const SuiteEntry& entry : entries) {
        BenchmarkSample sample = load_sample(entry.dir);

        EvalRecord ref;
        ref.sample_id = entry.id;
        ref.method = "procrustes";
        ref.rms_tre_mm =
            procrustes_reference(sample.source_fiducials, sample.target_fiducials).rms_tre;
        ref.visibility = entry.visibility;
        ref.noise_level_mm = entry.noise_level_mm;
        ref.deformation_rms_mm = entry.deformation_rms_mm;
        records.push_back(ref);

        for (const MethodConfig& method : config.methods) {
            std::string path = config.out + "/" + method.name + "/" + entry.id + ".json";
            if (!fs::exists(path)) continue;
            LoadedResult loaded = read_result_json(path);
            EvalRecord rec;
            rec.sample_id = entry.id;
            rec.method = method.name;
            rec.failed = loaded.failed;
            if (!loaded.failed)
                rec.rms_tre_mm = rms_tre(loaded.transform_mm, sample.source_fiducials,
                                         sample.target_fiducials);
            rec.runtime_s = loaded.wall_time_s;
            rec.visibility = entry.visibility;
            rec.noise_level_mm = entry.noise_level_mm;
            rec.deformation_rms_mm = entry.deformation_rms_mm;
            records.push_back(rec);
        }
    }

    if (records.empty()) throw ParameterError("evaluate_results: no results found");
    fs::create_directories(config.out);
    std::vector<BinRow> rows = bin_report(records, default_visibility_edges());
    write_bin_report_csv(config.out + "/bins.csv", rows);
    write_bin_report_json(config.out + "/bins.json", rows);
    std::vector<double> tau_grid;
    for (int t = 2; t <= 40; t += 2) tau_grid.push_back(t);
    write_success_rate_csv(config.out + "/success_rate.csv", records, tau_grid);
    write_paired_csv(config.out + "/paired.csv", records);
    write_records_json(config.out + "/records.json", records);
    return records;
}

}  // namespace p2preg
