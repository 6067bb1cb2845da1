#include "muloco/cli_config.hpp"

#include <algorithm>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

namespace muloco {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kVersion = "0.1.0";

void check_keys(const json& obj, const std::string& path, const std::set<std::string>& allowed) {
    if (!obj.is_object()) throw ConfigError(path + ": expected an object");
    for (const auto& item : obj.items()) {
        if (!allowed.count(item.key()))
            throw ConfigError(path + ": unknown key '" + item.key() + "'");
    }
}

template <typename T>
T get_or(const json& obj, const std::string& key, T fallback) {
    if (!obj.contains(key)) return fallback;
    try {
        return obj.at(key).get<T>();
    } catch (const json::exception&) {
        throw ConfigError("invalid value for key '" + key + "'");
    }
}

CompressorSpec parse_compressor(const json& j, const std::string& path) {
    check_keys(j, path,
               {"kind", "k_pct", "bits", "scheme", "granularity", "error_feedback", "ef_beta"});
    CompressorSpec spec;
    const std::string kind = get_or<std::string>(j, "kind", "none");
    if (kind == "none")
        spec.kind = CompressorKind::none;
    else if (kind == "topk")
        spec.kind = CompressorKind::topk;
    else if (kind == "quant")
        spec.kind = CompressorKind::quant;
    else
        throw ConfigError(path + ".kind: must be none, topk, or quant");
    spec.k_pct = get_or<double>(j, "k_pct", spec.k_pct);
    spec.bits = get_or<int>(j, "bits", spec.bits);
    const std::string scheme = get_or<std::string>(j, "scheme", "linear");
    if (scheme == "linear")
        spec.scheme = QuantScheme::linear;
    else if (scheme == "statistical")
        spec.scheme = QuantScheme::statistical;
    else
        throw ConfigError(path + ".scheme: must be linear or statistical");
    const std::string gran = get_or<std::string>(j, "granularity", "global");
    if (gran == "global")
        spec.granularity = QuantGranularity::global;
    else if (gran == "rowwise")
        spec.granularity = QuantGranularity::rowwise;
    else
        throw ConfigError(path + ".granularity: must be global or rowwise");
    spec.error_feedback = get_or<bool>(j, "error_feedback", false);
    spec.ef_beta = get_or<double>(j, "ef_beta", 1.0);
    try {
        spec.validate();
    } catch (const ContractError& e) {
        throw ConfigError(path + ": " + e.what());
    }
    return spec;
}

json compressor_json(const CompressorSpec& s) {
    json j;
    switch (s.kind) {
        case CompressorKind::none:
            j["kind"] = "none";
            break;
        case CompressorKind::topk:
            j["kind"] = "topk";
            j["k_pct"] = s.k_pct;
            break;
        case CompressorKind::quant:
            j["kind"] = "quant";
            j["bits"] = s.bits;
            j["scheme"] = s.scheme == QuantScheme::linear ? "linear" : "statistical";
            j["granularity"] = s.granularity == QuantGranularity::global ? "global" : "rowwise";
            break;
    }
    if (s.kind != CompressorKind::none) {
        j["error_feedback"] = s.error_feedback;
        j["ef_beta"] = s.ef_beta;
    }
    return j;
}

TaskConfig parse_task(const json& j) {
    check_keys(j, "task",
               {"kind", "seed", "dim", "condition", "noise_scale", "in_dim", "hidden_dim", "out_dim",
                "label_noise"});
    TaskConfig t;
    if (!j.contains("kind")) throw ConfigError("task.kind is required");
    t.kind = j.at("kind").get<std::string>();
    if (t.kind != "quadratic_bowl" && t.kind != "two_layer_mlp")
        throw ConfigError("task.kind: must be quadratic_bowl or two_layer_mlp");
    t.seed = get_or<std::uint64_t>(j, "seed", 0);
    t.dim = get_or<int>(j, "dim", t.dim);
    t.condition = get_or<double>(j, "condition", t.condition);
    t.noise_scale = get_or<double>(j, "noise_scale", t.noise_scale);
    t.in_dim = get_or<int>(j, "in_dim", t.in_dim);
    t.hidden_dim = get_or<int>(j, "hidden_dim", t.hidden_dim);
    t.out_dim = get_or<int>(j, "out_dim", t.out_dim);
    t.label_noise = get_or<double>(j, "label_noise", t.label_noise);
    return t;
}

json task_json(const TaskConfig& t) {
    json j;
    j["kind"] = t.kind;
    j["seed"] = t.seed;
    if (t.kind == "quadratic_bowl") {
        j["dim"] = t.dim;
        j["condition"] = t.condition;
        j["noise_scale"] = t.noise_scale;
    } else {
        j["in_dim"] = t.in_dim;
        j["hidden_dim"] = t.hidden_dim;
        j["out_dim"] = t.out_dim;
        j["label_noise"] = t.label_noise;
    }
    return j;
}

RunConfig parse_run(const json& j, SnapshotConfig log) {
    check_keys(j, "run",
               {"workers", "inner_steps", "rounds", "global_batch", "seed", "lr_schedule",
                "streaming_partitions", "reset_inner_state", "eval_ema_alpha", "inner", "outer",
                "compressor"});
    RunConfig r;
    r.log = log;
    r.workers = get_or<int>(j, "workers", r.workers);
    r.inner_steps = get_or<int>(j, "inner_steps", r.inner_steps);
    r.rounds = get_or<int>(j, "rounds", r.rounds);
    r.global_batch = get_or<long>(j, "global_batch", r.global_batch);
    r.seed = get_or<std::uint64_t>(j, "seed", r.seed);
    const std::string sched = get_or<std::string>(j, "lr_schedule", "constant");
    if (sched == "constant")
        r.lr_schedule = LrSchedule::constant;
    else if (sched == "cosine_to_tenth")
        r.lr_schedule = LrSchedule::cosine_to_tenth;
    else
        throw ConfigError("run.lr_schedule: must be constant or cosine_to_tenth");
    r.streaming_partitions = get_or<int>(j, "streaming_partitions", r.streaming_partitions);
    r.reset_inner_state = get_or<bool>(j, "reset_inner_state", r.reset_inner_state);
    r.eval_ema_alpha = get_or<double>(j, "eval_ema_alpha", r.eval_ema_alpha);

    if (j.contains("inner")) {
        const json& in = j.at("inner");
        check_keys(in, "run.inner",
                   {"algorithm", "lr", "beta1", "beta2", "epsilon", "weight_decay", "ns_iterations",
                    "lr_shape_rescale"});
        const std::string algo = get_or<std::string>(in, "algorithm", "adamw");
        if (algo == "adamw")
            r.inner.algorithm = Algorithm::adamw;
        else if (algo == "muon")
            r.inner.algorithm = Algorithm::muon;
        else
            throw ConfigError("run.inner.algorithm: must be adamw or muon");
        r.inner.lr = get_or<double>(in, "lr", r.inner.lr);
        r.inner.beta1 = get_or<double>(in, "beta1", r.inner.beta1);
        r.inner.beta2 = get_or<double>(in, "beta2", r.inner.beta2);
        r.inner.epsilon = get_or<double>(in, "epsilon", r.inner.epsilon);
        r.inner.weight_decay = get_or<double>(in, "weight_decay", r.inner.weight_decay);
        r.inner.ns_iterations = get_or<int>(in, "ns_iterations", r.inner.ns_iterations);
        r.inner.lr_shape_rescale = get_or<bool>(in, "lr_shape_rescale", r.inner.lr_shape_rescale);
    }
    if (j.contains("outer")) {
        const json& out = j.at("outer");
        check_keys(out, "run.outer", {"lr", "momentum"});
        r.outer.lr = get_or<double>(out, "lr", r.outer.lr);
        r.outer.momentum = get_or<double>(out, "momentum", r.outer.momentum);
    }
    if (j.contains("compressor")) r.compressor = parse_compressor(j.at("compressor"), "run.compressor");
    return r;
}

json run_json(const RunConfig& r) {
    json j;
    j["workers"] = r.workers;
    j["inner_steps"] = r.inner_steps;
    j["rounds"] = r.rounds;
    j["global_batch"] = r.global_batch;
    j["seed"] = r.seed;
    j["lr_schedule"] = r.lr_schedule == LrSchedule::constant ? "constant" : "cosine_to_tenth";
    j["streaming_partitions"] = r.streaming_partitions;
    j["reset_inner_state"] = r.reset_inner_state;
    j["eval_ema_alpha"] = r.eval_ema_alpha;
    j["inner"] = {{"algorithm", r.inner.algorithm == Algorithm::adamw ? "adamw" : "muon"},
                  {"lr", r.inner.lr},
                  {"beta1", r.inner.beta1},
                  {"beta2", r.inner.beta2},
                  {"epsilon", r.inner.epsilon},
                  {"weight_decay", r.inner.weight_decay},
                  {"ns_iterations", r.inner.ns_iterations},
                  {"lr_shape_rescale", r.inner.lr_shape_rescale}};
    j["outer"] = {{"lr", r.outer.lr}, {"momentum", r.outer.momentum}};
    j["compressor"] = compressor_json(r.compressor);
    return j;
}

std::string compressor_tag(const CompressorSpec& s) {
    char buf[64];
    std::string tag;
    switch (s.kind) {
        case CompressorKind::none:
            return "none";
        case CompressorKind::topk:
            std::snprintf(buf, sizeof(buf), "topk%g", s.k_pct);
            tag = buf;
            break;
        case CompressorKind::quant:
            std::snprintf(buf, sizeof(buf), "q%d%s%s", s.bits,
                          s.scheme == QuantScheme::linear ? "lin" : "stat",
                          s.granularity == QuantGranularity::global ? "g" : "r");
            tag = buf;
            break;
    }
    if (s.error_feedback) tag += "ef";
    return tag;
}

void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot write file: " + path);
    out << content;
}

std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot read file: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_matrix_dump(const std::string& path, const Matrix& m) {
    CompressorSpec none;
    const std::vector<std::uint8_t> bytes = encode(m, none).serialize();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot write dump: " + path);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

Matrix read_matrix_dump(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot read dump: " + path);
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                    std::istreambuf_iterator<char>());
    return decode(EncodedDelta::deserialize(bytes));
}

}  // namespace

std::unique_ptr<ModelTask> TaskConfig::instantiate() const {
    if (kind == "quadratic_bowl") return quadratic_bowl(dim, condition, seed, noise_scale);
    if (kind == "two_layer_mlp") return two_layer_mlp(in_dim, hidden_dim, out_dim, seed, label_noise);
    throw ConfigError("task.kind: must be quadratic_bowl or two_layer_mlp");
}

std::uint64_t fnv1a64(const std::string& text) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

ExperimentConfig ExperimentConfig::parse_file(const std::string& path) {
    return parse_string(read_text_file(path), path);
}

ExperimentConfig ExperimentConfig::parse_string(const std::string& text, const std::string& origin) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError(origin + ": " + e.what());
    }
    check_keys(j, "config", {"task", "run", "log", "sweep", "threads"});
    if (!j.contains("task")) throw ConfigError("config: missing required section 'task'");

    ExperimentConfig cfg;
    cfg.task = parse_task(j.at("task"));

    SnapshotConfig log;
    if (j.contains("log")) {
        const json& l = j.at("log");
        check_keys(l, "log",
                   {"pseudogradients", "worker_deltas", "step_records", "step_norms", "dump_deltas"});
        log.pseudogradients = get_or<bool>(l, "pseudogradients", false);
        log.worker_deltas = get_or<bool>(l, "worker_deltas", false);
        log.step_records = get_or<bool>(l, "step_records", false);
        log.step_norms = get_or<bool>(l, "step_norms", false);
        cfg.dump_deltas = get_or<bool>(l, "dump_deltas", false);
        if (cfg.dump_deltas) {
            // Dumps require the in-memory snapshots they serialize.
            log.pseudogradients = true;
            log.worker_deltas = true;
            log.step_records = true;
        }
    }
    cfg.base = parse_run(j.contains("run") ? j.at("run") : json::object(), log);
    cfg.threads = get_or<int>(j, "threads", 1);

    if (j.contains("sweep")) {
        const json& s = j.at("sweep");
        check_keys(s, "sweep", {"workers", "inner_steps", "global_batch", "compressor", "seed"});
        cfg.sweep_workers = get_or<std::vector<int>>(s, "workers", {});
        cfg.sweep_inner_steps = get_or<std::vector<int>>(s, "inner_steps", {});
        cfg.sweep_global_batch = get_or<std::vector<long>>(s, "global_batch", {});
        cfg.sweep_seeds = get_or<std::vector<std::uint64_t>>(s, "seed", {});
        if (s.contains("compressor")) {
            if (!s.at("compressor").is_array())
                throw ConfigError("sweep.compressor: expected an array of compressor objects");
            int i = 0;
            for (const auto& c : s.at("compressor"))
                cfg.sweep_compressors.push_back(
                    parse_compressor(c, "sweep.compressor[" + std::to_string(i++) + "]"));
        }
    }
    return cfg;
}

std::vector<ResolvedRun> ExperimentConfig::expand() const {
    const std::vector<int> workers = sweep_workers.empty() ? std::vector<int>{base.workers} : sweep_workers;
    const std::vector<int> steps =
        sweep_inner_steps.empty() ? std::vector<int>{base.inner_steps} : sweep_inner_steps;
    const std::vector<long> batches =
        sweep_global_batch.empty() ? std::vector<long>{base.global_batch} : sweep_global_batch;
    const std::vector<CompressorSpec> specs =
        sweep_compressors.empty() ? std::vector<CompressorSpec>{base.compressor} : sweep_compressors;
    const std::vector<std::uint64_t> seeds =
        sweep_seeds.empty() ? std::vector<std::uint64_t>{base.seed} : sweep_seeds;

    std::vector<ResolvedRun> runs;
    int idx = 0;
    for (int k : workers)
        for (int h : steps)
            for (long b : batches)
                for (const auto& spec : specs)
                    for (std::uint64_t seed : seeds) {
                        ResolvedRun r;
                        r.task = task;
                        r.run = base;
                        r.run.workers = k;
                        r.run.inner_steps = h;
                        r.run.global_batch = b;
                        r.run.compressor = spec;
                        r.run.seed = seed;
                        r.dump_deltas = dump_deltas;
                        char name[160];
                        std::snprintf(name, sizeof(name), "run_%03d_K%d_H%d_B%ld_%s_s%llu", idx, k, h,
                                      b, compressor_tag(spec).c_str(),
                                      static_cast<unsigned long long>(seed));
                        r.name = name;
                        runs.push_back(std::move(r));
                        ++idx;
                    }
    return runs;
}

std::string resolved_config_json(const ResolvedRun& run, int threads) {
    json j;
    j["task"] = task_json(run.task);
    j["run"] = run_json(run.run);
    j["log"] = {{"pseudogradients", run.run.log.pseudogradients},
                {"worker_deltas", run.run.log.worker_deltas},
                {"step_records", run.run.log.step_records},
                {"step_norms", run.run.log.step_norms},
                {"dump_deltas", run.dump_deltas}};
    j["threads"] = threads;
    return j.dump(2) + "\n";
}

RunPaths run_paths(const std::string& out_dir, const std::string& run_name) {
    RunPaths p;
    p.dir = (fs::path(out_dir) / run_name).string();
    p.rounds_csv = (fs::path(p.dir) / "rounds.csv").string();
    p.step_norms_csv = (fs::path(p.dir) / "step_norms.csv").string();
    p.manifest_json = (fs::path(p.dir) / "manifest.json").string();
    p.dumps_dir = (fs::path(p.dir) / "dumps").string();
    return p;
}

namespace {

std::string rounds_csv_text(const RunResult& res) {
    std::string out =
        "round,raw_eval_loss,smoothed_eval_loss,sent_bytes,received_bytes,peak_sync_sent_bytes,"
        "sync_events\n";
    for (const auto& r : res.rounds) {
        out += std::to_string(r.round) + "," + format_double(r.raw_eval_loss) + "," +
               format_double(r.smoothed_eval_loss) + "," +
               format_double(r.comm.sent_bytes_per_worker) + "," +
               format_double(r.comm.received_bytes_per_worker) + "," +
               format_double(r.peak_sync_sent_bytes) + "," + std::to_string(r.sync_events) + "\n";
    }
    return out;
}

std::string step_norms_csv_text(const RunResult& res) {
    std::string out = "round,worker,step,param,alpha,step_fro\n";
    for (const auto& r : res.rounds)
        for (const auto& s : r.step_norms)
            out += std::to_string(r.round) + "," + std::to_string(s.worker) + "," +
                   std::to_string(s.step) + "," + s.param + "," + format_double(s.alpha) + "," +
                   format_double(s.step_fro) + "\n";
    return out;
}

void write_dumps(const std::string& dumps_dir, const RunResult& res) {
    for (const auto& round : res.rounds) {
        char sub[32];
        std::snprintf(sub, sizeof(sub), "round_%04d", round.round);
        const fs::path dir = fs::path(dumps_dir) / sub;
        fs::create_directories(dir);
        for (const auto& p : round.psi_snapshots)
            write_matrix_dump((dir / ("psi__" + p.param + ".bin")).string(), p.psi);
        for (const auto& d : round.delta_snapshots) {
            char wbuf[16];
            std::snprintf(wbuf, sizeof(wbuf), "w%03d", d.worker);
            write_matrix_dump((dir / ("delta__" + d.param + "__" + wbuf + ".bin")).string(), d.delta);
        }
        std::string steps_csv = "worker,step,param,alpha\n";
        for (const auto& s : round.step_records) {
            char wbuf[16], hbuf[16];
            std::snprintf(wbuf, sizeof(wbuf), "w%03d", s.worker);
            std::snprintf(hbuf, sizeof(hbuf), "h%04d", s.step);
            write_matrix_dump(
                (dir / ("step__" + s.param + "__" + wbuf + "__" + hbuf + ".bin")).string(), s.psi);
            steps_csv += std::to_string(s.worker) + "," + std::to_string(s.step) + "," + s.param +
                         "," + format_double(s.alpha) + "\n";
        }
        write_text_file((dir / "steps.csv").string(), steps_csv);
    }
}

}  // namespace

std::vector<std::string> cmd_run(const ExperimentConfig& cfg, const std::string& out_dir,
                                 int threads_override, const std::uint64_t* seed_override) {
    const int threads = threads_override > 0 ? threads_override : cfg.threads;
    fs::create_directories(out_dir);
    std::vector<std::string> names;
    std::string summary = "run,final_raw_eval_loss,final_smoothed_eval_loss\n";

    for (ResolvedRun resolved : cfg.expand()) {
        if (seed_override) resolved.run.seed = *seed_override;
        const std::unique_ptr<ModelTask> task = resolved.task.instantiate();
        const RunResult res = run(resolved.run, *task, threads);

        const RunPaths paths = run_paths(out_dir, resolved.name);
        fs::create_directories(paths.dir);
        write_text_file(paths.rounds_csv, rounds_csv_text(res));
        std::vector<std::string> outputs = {"rounds.csv"};
        if (resolved.run.log.step_norms) {
            write_text_file(paths.step_norms_csv, step_norms_csv_text(res));
            outputs.push_back("step_norms.csv");
        }
        if (resolved.dump_deltas) {
            write_dumps(paths.dumps_dir, res);
            outputs.push_back("dumps/");
        }

        const std::string config_text = resolved_config_json(resolved, threads);
        char hash[32];
        std::snprintf(hash, sizeof(hash), "fnv1a64:%016llx",
                      static_cast<unsigned long long>(fnv1a64(config_text)));
        json manifest;
        manifest["run"] = resolved.name;
        manifest["config"] = json::parse(config_text);
        manifest["config_hash"] = hash;
        manifest["seed"] = resolved.run.seed;
        manifest["version"] = kVersion;
        manifest["outputs"] = outputs;
        manifest["generated_unix"] = static_cast<long>(std::time(nullptr));
        write_text_file(paths.manifest_json, manifest.dump(2) + "\n");

        summary += resolved.name + "," + format_double(res.rounds.back().raw_eval_loss) + "," +
                   format_double(res.rounds.back().smoothed_eval_loss) + "\n";
        names.push_back(resolved.name);
    }
    write_text_file((fs::path(out_dir) / "summary.csv").string(), summary);
    return names;
}

RunResult load_dumped_run(const std::string& run_dir) {
    const fs::path dumps = fs::path(run_dir) / "dumps";
    if (!fs::is_directory(dumps))
        throw ConfigError("run directory has no dumps/: " + run_dir +
                          " (enable log.dump_deltas when running)");
    std::vector<std::string> round_dirs;
    for (const auto& entry : fs::directory_iterator(dumps))
        if (entry.is_directory()) round_dirs.push_back(entry.path().filename().string());
    std::sort(round_dirs.begin(), round_dirs.end());
    if (round_dirs.empty()) throw ConfigError("no dumped rounds under: " + dumps.string());

    RunResult res;
    for (const auto& sub : round_dirs) {
        RoundLog rl;
        rl.round = std::stoi(sub.substr(sub.find('_') + 1));
        const fs::path dir = dumps / sub;

        std::vector<std::string> files;
        for (const auto& entry : fs::directory_iterator(dir))
            if (entry.is_regular_file()) files.push_back(entry.path().filename().string());
        std::sort(files.begin(), files.end());

        std::map<std::pair<std::string, std::pair<int, int>>, double> alphas;
        const fs::path steps_csv = dir / "steps.csv";
        if (fs::exists(steps_csv)) {
            std::ifstream in(steps_csv);
            std::string line;
            std::getline(in, line);  // header
            while (std::getline(in, line)) {
                if (line.empty()) continue;
                std::stringstream ss(line);
                std::string w, h, param, alpha;
                std::getline(ss, w, ',');
                std::getline(ss, h, ',');
                std::getline(ss, param, ',');
                std::getline(ss, alpha, ',');
                alphas[{param, {std::stoi(w), std::stoi(h)}}] = std::stod(alpha);
            }
        }

        for (const auto& name : files) {
            if (name.size() < 4 || name.substr(name.size() - 4) != ".bin") continue;
            const std::string stem = name.substr(0, name.size() - 4);
            std::vector<std::string> parts;
            std::size_t pos = 0;
            while (true) {
                const std::size_t next = stem.find("__", pos);
                if (next == std::string::npos) {
                    parts.push_back(stem.substr(pos));
                    break;
                }
                parts.push_back(stem.substr(pos, next - pos));
                pos = next + 2;
            }
            const Matrix m = read_matrix_dump((dir / name).string());
            if (parts[0] == "psi" && parts.size() == 2) {
                rl.psi_snapshots.push_back({parts[1], m});
            } else if (parts[0] == "delta" && parts.size() == 3) {
                rl.delta_snapshots.push_back({parts[1], std::stoi(parts[2].substr(1)), m});
            } else if (parts[0] == "step" && parts.size() == 4) {
                const int worker = std::stoi(parts[2].substr(1));
                const int step = std::stoi(parts[3].substr(1));
                const auto it = alphas.find({parts[1], {worker, step}});
                const double alpha = it == alphas.end() ? 0.0 : it->second;
                rl.step_records.push_back({worker, step, parts[1], alpha, m});
            }
        }
        res.rounds.push_back(std::move(rl));
    }
    return res;
}

namespace {

std::string alignment_csv_text(const AlignmentReport& report) {
    std::string out = "param,worker,round,metric,value\n";
    for (const auto& r : report.rows)
        out += r.param + "," + std::to_string(r.worker) + "," + std::to_string(r.round) + "," +
               r.metric + "," + format_double(r.value) + "\n";
    return out;
}

std::string alignment_summary_csv_text(const AlignmentReport& report) {
    std::string out = "metric,count,min,q1,median,q3,max\n";
    for (const auto& s : report.summary)
        out += s.metric + "," + std::to_string(s.count) + "," + format_double(s.min) + "," +
               format_double(s.q1) + "," + format_double(s.median) + "," + format_double(s.q3) +
               "," + format_double(s.max) + "\n";
    return out;
}

std::string spectra_csv_text(const SpectralReport& report) {
    std::string out = "param,round,source,worker,sv_index,value\n";
    for (const auto& r : report.singular_values)
        out += r.param + "," + std::to_string(r.round) + "," + r.source + "," +
               std::to_string(r.worker) + "," + std::to_string(r.index) + "," +
               format_double(r.value) + "\n";
    return out;
}

std::string gaps_csv_text(const SpectralReport& report) {
    std::string out = "param,round,top_s,gap\n";
    for (const auto& g : report.gaps)
        out += g.param + "," + std::to_string(g.round) + "," + std::to_string(g.top_s) + "," +
               format_double(g.gap) + "\n";
    return out;
}

}  // namespace

void cmd_analyze(const std::vector<std::string>& run_dirs, const std::string& out_dir,
                 const AnalyzeOptions& opts) {
    if (run_dirs.empty()) throw ConfigError("analyze: no run directories given");
    fs::create_directories(out_dir);

    RunResult reference;
    const bool has_reference = !opts.reference_dir.empty();
    if (has_reference) reference = load_dumped_run(opts.reference_dir);

    for (const auto& dir : run_dirs) {
        const RunResult res = load_dumped_run(dir);
        const std::string name = fs::path(dir).filename().string();
        const fs::path base = fs::path(out_dir) / name;

        const AlignmentReport alignment = alignment_report(res, has_reference ? &reference : nullptr);
        write_text_file(base.string() + "__alignment.csv", alignment_csv_text(alignment));
        write_text_file(base.string() + "__alignment_summary.csv",
                        alignment_summary_csv_text(alignment));

        const SpectralReport spectral = spectra(res, opts.top_s_percents);
        write_text_file(base.string() + "__spectra.csv", spectra_csv_text(spectral));
        write_text_file(base.string() + "__gaps.csv", gaps_csv_text(spectral));

        if (opts.audit) {
            std::string audit_csv =
                "param,round,lhs_nuclear,rhs_general,rhs_orthonormal,rel_discrepancy,degenerate\n";
            for (const auto& round : res.rounds) {
                int workers = 0;
                for (const auto& d : round.delta_snapshots) workers = std::max(workers, d.worker + 1);
                for (const auto& snap : round.psi_snapshots) {
                    std::vector<AuditStep> steps;
                    for (const auto& s : round.step_records)
                        if (s.param == snap.param) steps.push_back({s.worker, s.step, s.alpha, s.psi});
                    if (steps.empty() || workers == 0) continue;
                    const AuditRecord rec = nuclear_decomposition_audit(steps, snap.psi, workers);
                    audit_csv += snap.param + "," + std::to_string(round.round) + "," +
                                 format_double(rec.lhs_nuclear) + "," +
                                 format_double(rec.rhs_general) + "," +
                                 format_double(rec.rhs_orthonormal) + "," +
                                 format_double(rec.rel_discrepancy) + "," +
                                 (rec.degenerate ? "1" : "0") + "\n";
                }
            }
            write_text_file(base.string() + "__audit.csv", audit_csv);
        }
    }
}

PowerLawFit cmd_fit(const std::string& data_csv, const std::string& out_dir, const FitOptions& opts) {
    const std::vector<FitRow> rows = read_fit_csv(data_csv);
    const std::vector<FitDatum> data = to_fit_data(rows, opts.x);
    const PowerLawFit fit = fit_power_law(data, opts.form, opts.restarts, opts.seed);

    fs::create_directories(out_dir);
    json report;
    report["form"] = opts.form == FitForm::plain
                         ? "plain"
                         : (opts.form == FitForm::per_method_offset ? "per_method_offset" : "joint_irr");
    report["x"] = opts.x == XVariable::compute ? "compute"
                                               : (opts.x == XVariable::tokens ? "tokens" : "batch");
    report["restarts"] = opts.restarts;
    report["seed"] = opts.seed;
    report["objective"] = fit.objective;
    report["train_residual"] = fit.train_residual;
    if (fit.form == FitForm::joint_irr) report["shared_irr"] = fit.shared_irr;
    report["methods"] = json::array();
    for (const auto& m : fit.methods)
        report["methods"].push_back(
            {{"method", m.method}, {"a", m.a}, {"alpha", m.alpha}, {"offset", m.offset}});
    write_text_file((fs::path(out_dir) / "fit_report.json").string(), report.dump(2) + "\n");

    std::string csv = "method,a,alpha,offset\n";
    for (const auto& m : fit.methods)
        csv += m.method + "," + format_double(m.a) + "," + format_double(m.alpha) + "," +
               format_double(m.offset) + "\n";
    write_text_file((fs::path(out_dir) / "fit_methods.csv").string(), csv);
    return fit;
}

void cmd_cost(const std::string& config_path, const std::string& out_dir) {
    json j;
    try {
        j = json::parse(read_text_file(config_path));
    } catch (const json::parse_error& e) {
        throw ConfigError(config_path + ": " + e.what());
    }
    check_keys(j, "cost",
               {"model_bytes", "compute_step_s", "optimizer_step_s", "workers", "inner_steps",
                "steps_total", "collective", "compressor", "streaming_partitions", "bandwidth_bps"});
    CostConfig cfg;
    cfg.model_bytes = get_or<double>(j, "model_bytes", cfg.model_bytes);
    cfg.compute_step_s = get_or<double>(j, "compute_step_s", cfg.compute_step_s);
    cfg.optimizer_step_s = get_or<double>(j, "optimizer_step_s", cfg.optimizer_step_s);
    cfg.workers = get_or<int>(j, "workers", cfg.workers);
    cfg.inner_steps = get_or<int>(j, "inner_steps", cfg.inner_steps);
    cfg.steps_total = get_or<long>(j, "steps_total", cfg.steps_total);
    cfg.streaming_partitions = get_or<int>(j, "streaming_partitions", cfg.streaming_partitions);
    const std::string coll = get_or<std::string>(j, "collective", "ring_allreduce");
    if (coll == "ring_allreduce")
        cfg.collective = Collective::ring_allreduce;
    else if (coll == "a2a_rs_then_ag")
        cfg.collective = Collective::a2a_rs_then_ag;
    else if (coll == "allgather")
        cfg.collective = Collective::allgather;
    else
        throw ConfigError("cost.collective: must be ring_allreduce, a2a_rs_then_ag, or allgather");
    if (j.contains("compressor")) cfg.compressor = parse_compressor(j.at("compressor"), "cost.compressor");

    std::vector<double> grid;
    if (j.contains("bandwidth_bps")) {
        if (j.at("bandwidth_bps").is_array())
            grid = j.at("bandwidth_bps").get<std::vector<double>>();
        else
            grid.push_back(j.at("bandwidth_bps").get<double>());
    } else {
        grid.push_back(cfg.bandwidth_bps);
    }
    if (grid.empty()) throw ConfigError("cost.bandwidth_bps: empty grid");

    fs::create_directories(out_dir);
    std::string wallclock =
        "bandwidth_bps,total_s,compute_s,optimizer_s,comm_s,sync_events,per_event_payload_bytes,"
        "peak_event_bytes,total_comm_bytes\n";
    for (double bw : grid) {
        CostConfig c = cfg;
        c.bandwidth_bps = bw;
        const WallclockBreakdown wc = estimate_wallclock(c);
        wallclock += format_double(bw) + "," + format_double(wc.total_s) + "," +
                     format_double(wc.compute_s) + "," + format_double(wc.optimizer_s) + "," +
                     format_double(wc.comm_s) + "," + std::to_string(wc.sync_events) + "," +
                     format_double(wc.per_event_payload_bytes) + "," +
                     format_double(wc.peak_event_bytes) + "," + format_double(wc.total_comm_bytes) +
                     "\n";
    }
    write_text_file((fs::path(out_dir) / "wallclock.csv").string(), wallclock);

    std::string util = "bandwidth_bps,utilization\n";
    for (const auto& [bw, u] : compute_utilization(cfg, grid))
        util += format_double(bw) + "," + format_double(u) + "\n";
    write_text_file((fs::path(out_dir) / "utilization.csv").string(), util);
}

}  // namespace muloco
