// Copyright 2026 The sambo Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef SAMBO_HARNESS_HPP
#define SAMBO_HARNESS_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include <sambo/calibration.hpp>
#include <sambo/collect.hpp>
#include <sambo/common.hpp>
#include <sambo/environments.hpp>
#include <sambo/frontier.hpp>
#include <sambo/gp.hpp>
#include <sambo/meta_prior.hpp>
#include <sambo/safe_bo.hpp>

namespace sambo {

// ---- configuration ----

struct CollectConfig {
    Index tasks = 10;
    Index rows = 50;
    Index domain_size = 1000;
    double f_lengthscale = 0.2;
    double q_lengthscale = 0.5;
    double likelihood_std = 0.1;
};

struct FrontierConfig {
    int iterations = 20;
    double threshold_f = 0.95;
    double threshold_q = 1.0;
    double l_low = 0.01;
    double l_high = 5.0;
    double nu_low = 1.0;
    double nu_high = 6.0;
    double likelihood_std = 0.1;
};

struct MetaConfig {
    int iterations = 5000;
    double learning_rate = 1e-3;
    int measurement_size = 20;
    double kl_multiplier = 1.0;
    std::vector<Index> hidden{32, 32, 32};
};

struct BOConfig {
    Index iterations = 50;
    Index domain_size = 4000;
    double alpha = 0.99;
    double epsilon = 0.2;
    int max_inner_rounds = 25;
    Index test_tasks = 4;
    Index seeds = 5;
    std::vector<std::string> algorithms{"safeopt", "goose", "sambo-s", "sambo-g"};
};

struct GridConfig {
    std::vector<double> lengthscales;
    std::vector<double> variances;
    Index test_tasks = 1;
    Index seeds = 1;
    Index iterations = 50;
};

struct AblateConfig {
    std::vector<Index> tasks{10, 20};
    std::vector<Index> rows{50, 100};
    std::string algorithm = "sambo-g";
};

struct ExperimentConfig {
    std::string family = "camelback";
    std::string profile = "desk";
    std::uint64_t seed = 0;
    int parallelism = 1;
    CollectConfig collect;
    FrontierConfig frontier;
    MetaConfig meta;
    BOConfig bo;
    GridConfig grid;
    AblateConfig ablate;
};

inline std::vector<double> log_grid(double lo, double hi, int n)
{
    std::vector<double> v;
    for (int i = 0; i < n; ++i)
        v.push_back(std::pow(10.0, std::log10(lo) + (std::log10(hi) - std::log10(lo)) * i / (n - 1)));
    return v;
}

inline std::vector<double> linear_grid(double lo, double hi, int n)
{
    std::vector<double> v;
    for (int i = 0; i < n; ++i)
        v.push_back(lo + (hi - lo) * i / (n - 1));
    return v;
}

/// Defaults for a profile. "paper" is the full-scale profile;
/// "desk" shrinks data, domains and grids to run on one core in minutes.
inline ExperimentConfig default_config(const std::string& profile, const std::string& family)
{
    ExperimentConfig c;
    c.family = family;
    c.profile = profile;
    const FamilyDefaults fd = family_defaults(family);
    c.collect.q_lengthscale = fd.q_lengthscale;
    if (profile == "paper") {
        c.collect.tasks = fd.tasks;
        c.collect.rows = fd.rows;
        c.collect.domain_size = 40000;
        c.bo.iterations = 200;
        c.bo.domain_size = 40000;
        c.grid.lengthscales = log_grid(0.05, 5.0, 10);
        c.grid.variances = linear_grid(1.0, 6.0, 10);
        c.grid.iterations = 200;
        c.grid.seeds = 5;
    } else if (profile == "desk") {
        c.collect.tasks = std::min<Index>(10, fd.tasks);
        c.collect.rows = fd.rows / 2;
        c.collect.domain_size = 1000;
        c.bo.iterations = 50;
        c.bo.domain_size = 4000;
        c.grid.lengthscales = log_grid(0.1, 2.0, 6);
        c.grid.variances = linear_grid(1.0, 6.0, 6);
        c.grid.iterations = 50;
        c.grid.seeds = 1;
        c.ablate.rows = {fd.rows / 2, fd.rows};
    } else {
        throw DomainError("unknown profile '" + profile + "'");
    }
    return c;
}

inline nlohmann::json to_json(const ExperimentConfig& c)
{
    using nlohmann::json;
    return json{{"family", c.family},
                {"profile", c.profile},
                {"seed", c.seed},
                {"parallelism", c.parallelism},
                {"collect",
                 {{"tasks", c.collect.tasks},
                  {"rows", c.collect.rows},
                  {"domain_size", c.collect.domain_size},
                  {"f_lengthscale", c.collect.f_lengthscale},
                  {"q_lengthscale", c.collect.q_lengthscale},
                  {"likelihood_std", c.collect.likelihood_std}}},
                {"frontier",
                 {{"iterations", c.frontier.iterations},
                  {"threshold_f", c.frontier.threshold_f},
                  {"threshold_q", c.frontier.threshold_q},
                  {"l_low", c.frontier.l_low},
                  {"l_high", c.frontier.l_high},
                  {"nu_low", c.frontier.nu_low},
                  {"nu_high", c.frontier.nu_high},
                  {"likelihood_std", c.frontier.likelihood_std}}},
                {"meta",
                 {{"iterations", c.meta.iterations},
                  {"learning_rate", c.meta.learning_rate},
                  {"measurement_size", c.meta.measurement_size},
                  {"kl_multiplier", c.meta.kl_multiplier},
                  {"hidden", c.meta.hidden}}},
                {"bo",
                 {{"iterations", c.bo.iterations},
                  {"domain_size", c.bo.domain_size},
                  {"alpha", c.bo.alpha},
                  {"epsilon", c.bo.epsilon},
                  {"max_inner_rounds", c.bo.max_inner_rounds},
                  {"test_tasks", c.bo.test_tasks},
                  {"seeds", c.bo.seeds},
                  {"algorithms", c.bo.algorithms}}},
                {"grid",
                 {{"lengthscales", c.grid.lengthscales},
                  {"variances", c.grid.variances},
                  {"test_tasks", c.grid.test_tasks},
                  {"seeds", c.grid.seeds},
                  {"iterations", c.grid.iterations}}},
                {"ablate", {{"tasks", c.ablate.tasks}, {"rows", c.ablate.rows}, {"algorithm", c.ablate.algorithm}}}};
}

inline ExperimentConfig config_from_json(const nlohmann::json& j)
{
    ExperimentConfig c;
    try {
        c.family = j.at("family").get<std::string>();
        c.profile = j.at("profile").get<std::string>();
        c.seed = j.at("seed").get<std::uint64_t>();
        c.parallelism = j.at("parallelism").get<int>();
        const auto& co = j.at("collect");
        c.collect = {co.at("tasks").get<Index>(),          co.at("rows").get<Index>(),
                     co.at("domain_size").get<Index>(),    co.at("f_lengthscale").get<double>(),
                     co.at("q_lengthscale").get<double>(), co.at("likelihood_std").get<double>()};
        const auto& fr = j.at("frontier");
        c.frontier = {fr.at("iterations").get<int>(),   fr.at("threshold_f").get<double>(),
                      fr.at("threshold_q").get<double>(), fr.at("l_low").get<double>(),
                      fr.at("l_high").get<double>(),    fr.at("nu_low").get<double>(),
                      fr.at("nu_high").get<double>(),   fr.at("likelihood_std").get<double>()};
        const auto& me = j.at("meta");
        c.meta = {me.at("iterations").get<int>(), me.at("learning_rate").get<double>(),
                  me.at("measurement_size").get<int>(), me.at("kl_multiplier").get<double>(),
                  me.at("hidden").get<std::vector<Index>>()};
        const auto& bo = j.at("bo");
        c.bo = {bo.at("iterations").get<Index>(), bo.at("domain_size").get<Index>(),
                bo.at("alpha").get<double>(),     bo.at("epsilon").get<double>(),
                bo.at("max_inner_rounds").get<int>(), bo.at("test_tasks").get<Index>(),
                bo.at("seeds").get<Index>(),      bo.at("algorithms").get<std::vector<std::string>>()};
        const auto& gr = j.at("grid");
        c.grid = {gr.at("lengthscales").get<std::vector<double>>(), gr.at("variances").get<std::vector<double>>(),
                  gr.at("test_tasks").get<Index>(), gr.at("seeds").get<Index>(), gr.at("iterations").get<Index>()};
        const auto& ab = j.at("ablate");
        c.ablate = {ab.at("tasks").get<std::vector<Index>>(), ab.at("rows").get<std::vector<Index>>(),
                    ab.at("algorithm").get<std::string>()};
    } catch (const nlohmann::json::exception& e) {
        throw DomainError(std::string("config: ") + e.what());
    }
    return c;
}

namespace detail {

inline void check_keys(const nlohmann::json& base, const nlohmann::json& over, const std::string& path)
{
    for (const auto& [k, v] : over.items()) {
        if (!base.contains(k))
            throw DomainError("config: unknown key " + path + k);
        if (v.is_object() != base[k].is_object())
            throw DomainError("config: wrong type for " + path + k);
        if (v.is_object())
            check_keys(base[k], v, path + k + ".");
    }
}

} // namespace detail

/// Profile defaults overlaid with a (partial) JSON document. Unknown keys
/// are rejected; arrays are replaced whole.
inline ExperimentConfig merge_config(const ExperimentConfig& base, const nlohmann::json& overrides)
{
    if (!overrides.is_object())
        throw DomainError("config: top level must be an object");
    nlohmann::json j = to_json(base);
    detail::check_keys(j, overrides, "");
    j.merge_patch(overrides);
    return config_from_json(j);
}

inline void validate(const ExperimentConfig& c)
{
    family_defaults(c.family);
    if (c.parallelism < 1)
        throw DomainError("config: parallelism must be at least 1");
    if (c.collect.tasks < 1 || c.collect.rows < 2 || c.collect.domain_size < 1)
        throw DomainError("config: collect sizes must be positive");
    if (c.bo.test_tasks < 1 || c.bo.seeds < 1 || c.bo.iterations < 0 || c.bo.domain_size < 1)
        throw DomainError("config: bo sizes must be positive");
    if (c.frontier.iterations < 0 || c.meta.iterations < 1)
        throw DomainError("config: iteration counts must be positive");
    for (const auto& a : c.bo.algorithms)
        if (a != "safeopt" && a != "goose" && a != "sambo-s" && a != "sambo-g")
            throw DomainError("config: unknown algorithm " + a);
}

enum class Stage { collect, frontier, meta, run, grid, ablate };

inline std::string hex64(std::uint64_t h)
{
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

/// Hash of the configuration sections a stage depends on, its upstream
/// stages included. Parallelism never enters.
inline std::string stage_hash(const ExperimentConfig& c, Stage s)
{
    const nlohmann::json j = to_json(c);
    nlohmann::json key{{"family", j["family"]}, {"seed", j["seed"]}, {"collect", j["collect"]}};
    if (s != Stage::collect && s != Stage::ablate)
        key["frontier"] = j["frontier"];
    if (s == Stage::meta || s == Stage::run || s == Stage::ablate) {
        key["meta"] = j["meta"];
        key["frontier"] = j["frontier"];
    }
    if (s == Stage::run || s == Stage::ablate)
        key["bo"] = j["bo"];
    if (s == Stage::grid) {
        key["grid"] = j["grid"];
        key["bo"] = j["bo"];
    }
    if (s == Stage::ablate)
        key["ablate"] = j["ablate"];
    key["stage"] = static_cast<int>(s);
    return hex64(fnv1a64(key.dump()));
}

inline std::string config_hash(const ExperimentConfig& c)
{
    nlohmann::json j = to_json(c);
    j.erase("parallelism");
    return hex64(fnv1a64(j.dump()));
}

// ---- pipeline stages ----

enum class Target { f, q };

inline std::string to_string(Target t) { return t == Target::f ? "f" : "q"; }

struct Corpus {
    std::vector<CollectedTask> tasks;
    Standardizer standardizer;
    Bounds bounds;

    std::vector<MetaTaskData> data() const
    {
        std::vector<MetaTaskData> out;
        for (const auto& t : tasks)
            if (t.error.empty())
                out.push_back(t.data);
        return out;
    }

    std::vector<TaskDataset> datasets(Target t) const
    {
        auto [fs, qs] = standardize(data(), standardizer);
        return t == Target::f ? fs : qs;
    }

    Index violations() const
    {
        Index v = 0;
        for (const auto& t : tasks)
            v += t.violations;
        return v;
    }

    Index failures() const
    {
        return static_cast<Index>(std::count_if(tasks.begin(), tasks.end(), [](const auto& t) { return !t.error.empty(); }));
    }
};

/// First `n` tasks and first `rows` rows of each, with a refit standardizer.
inline Corpus slice_corpus(const Corpus& c, Index n, Index rows)
{
    Corpus out;
    out.bounds = c.bounds;
    for (Index i = 0; i < std::min<Index>(n, static_cast<Index>(c.tasks.size())); ++i) {
        CollectedTask t = c.tasks[static_cast<std::size_t>(i)];
        if (t.error.empty()) {
            const Index r = std::min(rows, t.data.size());
            t.data.inputs = t.data.inputs.topRows(r).eval();
            t.data.f = t.data.f.head(r).eval();
            t.data.q = t.data.q.head(r).eval();
        }
        out.tasks.push_back(t);
    }
    out.standardizer = fit_standardizer(out.bounds, out.data());
    return out;
}

inline Corpus collect_corpus(const ExperimentConfig& c)
{
    CollectOptions o;
    o.domain_size = c.collect.domain_size;
    o.f_lengthscale = c.collect.f_lengthscale;
    o.q_lengthscale = c.collect.q_lengthscale;
    o.likelihood_std = c.collect.likelihood_std;
    o.parallelism = c.parallelism;
    Corpus corpus;
    corpus.tasks = collect_meta_data(c.family, c.collect.tasks, c.collect.rows, c.seed, o);
    corpus.bounds = sample_task(c.family, meta_task_seed(c.seed, 0)).bounds;
    corpus.standardizer = fit_standardizer(corpus.bounds, corpus.data());
    return corpus;
}

struct FrontierChoice {
    KernelConfig kernel;
    double avg_calib = 0.0;
    double avg_std = 0.0;
    std::vector<FrontierTraceRecord> trace;
};

/// Sharpest vanilla kernel whose calibration meets the target's threshold.
inline FrontierChoice select_kernel(const std::vector<TaskDataset>& datasets, const FrontierConfig& fc, Target t,
                                    int parallelism = 1)
{
    const double threshold = t == Target::q ? fc.threshold_q : fc.threshold_f;
    const auto bounds = SearchBounds::from_hyperparameters(fc.l_low, fc.l_high, fc.nu_low, fc.nu_high);
    auto oracle = [&](const Point2& z) -> std::pair<double, double> {
        const auto [l, nu] = inverse_transform(z);
        const MetricsResult m = evaluate_params(datasets, KernelConfig{l, nu, fc.likelihood_std}, parallelism);
        return {m.avg_std, m.avg_calib};
    };
    const FrontierResult r = frontier_search(oracle, bounds, threshold, fc.iterations);
    FrontierChoice out;
    const auto [l, nu] = inverse_transform(r.best.z);
    out.kernel = {l, nu, fc.likelihood_std};
    out.avg_std = *r.best.s_value;
    out.avg_calib = *r.best.c_value;
    out.trace = r.trace;
    return out;
}

inline MetaTrainResult train_prior(const Corpus& corpus, const KernelConfig& hyper, const MetaConfig& mc, Target t,
                                   std::uint64_t seed, int parallelism = 1)
{
    MetaTrainOptions o;
    o.iterations = mc.iterations;
    o.learning_rate = mc.learning_rate;
    o.measurement_size = mc.measurement_size;
    o.kl_multiplier = mc.kl_multiplier;
    o.hidden = mc.hidden;
    o.seed = derive_seed(seed, t == Target::f ? 10 : 11);
    o.parallelism = parallelism;
    return meta_train(corpus.datasets(t), corpus.standardizer.bounds(corpus.bounds), hyper, o);
}

/// GP priors per algorithm: FS-chosen vanilla kernels for the baselines,
/// meta-learned priors for the SaMBO variants.
struct PriorSet {
    GPPrior vanilla_f, vanilla_q;
    std::optional<GPPrior> learned_f, learned_q;

    std::pair<GPPrior, GPPrior> for_algorithm(const std::string& a) const
    {
        if (a == "sambo-s" || a == "sambo-g") {
            if (!learned_f || !learned_q)
                throw DomainError("harness: " + a + " needs meta-learned priors");
            return {*learned_f, *learned_q};
        }
        return {vanilla_f, vanilla_q};
    }
};

inline Algorithm algorithm_of(const std::string& a)
{
    return a == "safeopt" || a == "sambo-s" ? Algorithm::SafeOpt : Algorithm::GoOSE;
}

/// One test task on its discretized domain, with the safe optimum.
struct TestTask {
    EnvTask task;
    DiscreteDomain domain;
    double f_opt = 0.0;
};

inline std::vector<TestTask> make_test_tasks(const std::string& family, std::uint64_t seed, Index n, Index domain_size,
                                             int parallelism = 1)
{
    std::vector<TestTask> out(static_cast<std::size_t>(n));
    parallel_for(n, parallelism, [&](Index j) {
        TestTask& t = out[static_cast<std::size_t>(j)];
        const std::uint64_t s = test_task_seed(seed, j);
        t.task = sample_task(family, s);
        t.domain = discretize(t.task.bounds, domain_size, derive_seed(s, 5), t.task.safe_seed);
        t.f_opt = safe_optimum(t.task, t.domain.points);
    });
    return out;
}

struct CampaignRun {
    std::string algorithm;
    Index task = 0;
    std::uint64_t task_seed = 0;
    Index seed = 0;
    RunRecord record;
    bool audit_failure = false;
    std::string error;
};

struct CampaignReport {
    std::vector<CampaignRun> runs;

    Index audit_failures() const
    {
        return static_cast<Index>(std::count_if(runs.begin(), runs.end(), [](const auto& r) { return r.audit_failure; }));
    }
    Index errors() const
    {
        return static_cast<Index>(std::count_if(runs.begin(), runs.end(), [](const auto& r) { return !r.error.empty(); }));
    }
    std::vector<const CampaignRun*> of(const std::string& algorithm) const
    {
        std::vector<const CampaignRun*> out;
        for (const auto& r : runs)
            if (r.algorithm == algorithm)
                out.push_back(&r);
        return out;
    }
};

inline double median(std::vector<double> v)
{
    if (v.empty())
        return std::numeric_limits<double>::quiet_NaN();
    std::sort(v.begin(), v.end());
    const std::size_t m = v.size() / 2;
    return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

inline double median_final_regret(const CampaignReport& r, const std::string& algorithm)
{
    std::vector<double> v;
    for (const auto* run : r.of(algorithm))
        if (run->error.empty())
            v.push_back(run->record.final_regret());
    return median(v);
}

/// Every (algorithm, task, seed) job. Seeds are shared across algorithms so
/// comparisons are paired.
inline CampaignReport run_campaign(const std::vector<TestTask>& tasks, const Standardizer& st, const PriorSet& priors,
                                   const std::vector<std::string>& algorithms, Index seeds, Index iterations,
                                   const SafeBOOptions& opts, int parallelism = 1)
{
    CampaignReport rep;
    for (const auto& a : algorithms)
        for (std::size_t j = 0; j < tasks.size(); ++j)
            for (Index k = 0; k < seeds; ++k)
                rep.runs.push_back({a, static_cast<Index>(j), tasks[j].task.seed, k, {}, false, {}});
    parallel_for(static_cast<Index>(rep.runs.size()), parallelism, [&](Index i) {
        CampaignRun& r = rep.runs[static_cast<std::size_t>(i)];
        const TestTask& t = tasks[static_cast<std::size_t>(r.task)];
        SafeBORun run;
        run.algorithm = algorithm_of(r.algorithm);
        run.iterations = iterations;
        run.seed = derive_seed(t.task.seed, 100 + static_cast<std::uint64_t>(r.seed));
        run.options = opts;
        try {
            const auto [pf, pq] = priors.for_algorithm(r.algorithm);
            r.record = run_safe_bo(t.task, st, pf, pq, t.domain, t.f_opt, run);
        } catch (const SafetyAuditError& e) {
            r.audit_failure = true;
            r.error = e.what();
        } catch (const std::exception& e) {
            r.error = e.what();
        }
    });
    return rep;
}

// ---- output ----

inline void ensure_directory(const std::filesystem::path& p)
{
    std::error_code ec;
    std::filesystem::create_directories(p, ec);
    if (ec || !std::filesystem::is_directory(p))
        throw std::runtime_error("cannot create output directory " + p.string() + (ec ? ": " + ec.message() : ""));
}

inline void write_text(const std::filesystem::path& p, const std::string& text)
{
    std::ofstream out(p, std::ios::binary);
    if (!out)
        throw std::runtime_error("cannot write " + p.string());
    out << text;
    if (!out)
        throw std::runtime_error("write failed for " + p.string());
}

inline std::string read_text(const std::filesystem::path& p)
{
    std::ifstream in(p, std::ios::binary);
    if (!in)
        throw std::runtime_error("cannot read " + p.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

/// First line of every CSV written by the harness.
inline std::string csv_preamble(const std::string& kind, const std::string& hash)
{
    return "# sambo." + kind + " v1 config=" + hash + "\n";
}

inline std::string campaign_runs_csv(const CampaignReport& rep, const std::string& hash)
{
    std::ostringstream os;
    os << csv_preamble("runs", hash);
    Index d = 0;
    for (const auto& r : rep.runs)
        if (!r.record.rows.empty())
            d = r.record.rows.front().x.size();
    os << "algorithm,task,task_seed,seed,t";
    for (Index j = 0; j < d; ++j)
        os << ",x" << j;
    os << ",f_obs,q_obs,f_true,q_true,regret,max_q_obs\n";
    for (const auto& r : rep.runs)
        for (const auto& row : r.record.rows) {
            os << r.algorithm << ',' << r.task << ',' << r.task_seed << ',' << r.seed << ',' << row.t;
            for (Index j = 0; j < d; ++j)
                os << ',' << format_double(row.x[j]);
            os << ',' << format_double(row.f_obs) << ',' << format_double(row.q_obs) << ','
               << format_double(row.f_true) << ',' << format_double(row.q_true) << ',' << format_double(row.regret)
               << ',' << format_double(row.max_q_obs) << '\n';
        }
    return os.str();
}

/// Per algorithm and iteration: regret mean, 95% normal interval half-width
/// and median across runs, and the min/max band of the running max q~.
inline std::string campaign_curves_csv(const CampaignReport& rep, const std::vector<std::string>& algorithms,
                                       const std::string& hash)
{
    std::ostringstream os;
    os << csv_preamble("curves", hash);
    os << "algorithm,t,runs,regret_mean,regret_ci95,regret_median,max_q_min,max_q_max\n";
    for (const auto& a : algorithms) {
        std::vector<const RunRecord*> recs;
        for (const auto* r : rep.of(a))
            if (r->error.empty())
                recs.push_back(&r->record);
        if (recs.empty())
            continue;
        std::size_t len = recs.front()->rows.size();
        for (const auto* r : recs)
            len = std::min(len, r->rows.size());
        for (std::size_t t = 0; t < len; ++t) {
            std::vector<double> reg;
            double lo = std::numeric_limits<double>::infinity(), hi = -lo, sum = 0.0;
            for (const auto* r : recs) {
                reg.push_back(r->rows[t].regret);
                sum += r->rows[t].regret;
                lo = std::min(lo, r->rows[t].max_q_obs);
                hi = std::max(hi, r->rows[t].max_q_obs);
            }
            const double n = static_cast<double>(reg.size()), mean = sum / n;
            double ss = 0.0;
            for (double v : reg)
                ss += (v - mean) * (v - mean);
            const double ci = reg.size() > 1 ? 1.96 * std::sqrt(ss / (n - 1.0)) / std::sqrt(n) : 0.0;
            os << a << ',' << t << ',' << reg.size() << ',' << format_double(mean) << ',' << format_double(ci) << ','
               << format_double(median(reg)) << ',' << format_double(lo) << ',' << format_double(hi) << '\n';
        }
    }
    return os.str();
}

inline std::string campaign_summary_csv(const CampaignReport& rep, const std::vector<std::string>& algorithms,
                                        const std::string& hash)
{
    std::ostringstream os;
    os << csv_preamble("summary", hash);
    os << "algorithm,runs,median_final_regret,mean_final_regret,violations,true_violations,audit_failures,errors,"
          "fallbacks\n";
    for (const auto& a : algorithms) {
        Index n = 0, viol = 0, tviol = 0, audit = 0, err = 0, fb = 0;
        double sum = 0.0;
        for (const auto* r : rep.of(a)) {
            ++n;
            audit += r->audit_failure;
            err += !r->error.empty();
            if (!r->error.empty())
                continue;
            viol += r->record.violations;
            tviol += r->record.true_violations;
            fb += r->record.fallbacks;
            sum += r->record.final_regret();
        }
        const Index ok = n - err;
        os << a << ',' << n << ',' << format_double(median_final_regret(rep, a)) << ','
           << format_double(ok > 0 ? sum / static_cast<double>(ok) : std::numeric_limits<double>::quiet_NaN()) << ','
           << viol << ',' << tviol << ',' << audit << ',' << err << ',' << fb << '\n';
    }
    return os.str();
}

inline std::string frontier_trace_csv(const FrontierChoice& fc, const std::string& hash)
{
    std::ostringstream os;
    os << csv_preamble("frontier_trace", hash);
    os << "k,z1,z2,lengthscale,variance,avg_std,avg_calib,safe,d,best_lengthscale,best_variance,best_avg_std\n";
    for (const auto& r : fc.trace) {
        const auto [l, nu] = inverse_transform(r.zq);
        const auto [bl, bnu] = inverse_transform(r.best);
        os << r.k << ',' << format_double(r.zq.z1) << ',' << format_double(r.zq.z2) << ',' << format_double(l) << ','
           << format_double(nu) << ',' << format_double(r.s) << ',' << format_double(r.c) << ',' << (r.safe ? 1 : 0)
           << ',' << format_double(r.d) << ',' << format_double(bl) << ',' << format_double(bnu) << ','
           << format_double(r.best_s) << '\n';
    }
    return os.str();
}

inline std::string loss_trace_csv(const std::vector<double>& loss, const std::string& hash)
{
    std::ostringstream os;
    os << csv_preamble("loss_trace", hash);
    os << "iteration,loss\n";
    for (std::size_t i = 0; i < loss.size(); ++i)
        os << i << ',' << format_double(loss[i]) << '\n';
    return os.str();
}

// ---- cached pipeline ----

/// Runs the stages in order and keeps each stage's artifacts in
/// `<out>/<stage>-<hash>/`. A stage whose manifest exists is loaded instead
/// of recomputed.
class Pipeline {
public:
    Pipeline(ExperimentConfig cfg, std::filesystem::path out) : _cfg(std::move(cfg)), _out(std::move(out))
    {
        validate(_cfg);
    }

    const ExperimentConfig& config() const { return _cfg; }
    std::string hash() const { return config_hash(_cfg); }

    std::filesystem::path stage_dir(Stage s) const
    {
        static const char* names[] = {"collect", "frontier", "meta", "run", "grid", "ablate"};
        return _out / (std::string(names[static_cast<int>(s)]) + "-" + stage_hash(_cfg, s));
    }

    const Corpus& corpus()
    {
        if (_corpus)
            return *_corpus;
        const auto dir = stage_dir(Stage::collect);
        if (std::filesystem::exists(dir / "manifest.json"))
            return *(_corpus = load_corpus(dir));
        Corpus c = collect_corpus(_cfg);
        ensure_directory(dir);
        const std::string h = stage_hash(_cfg, Stage::collect);
        nlohmann::json files = nlohmann::json::array(), failures = nlohmann::json::array();
        for (std::size_t i = 0; i < c.tasks.size(); ++i) {
            const auto& t = c.tasks[i];
            if (!t.error.empty()) {
                failures.push_back({{"index", i}, {"seed", t.data.seed}, {"error", t.error}});
                continue;
            }
            char name[32];
            std::snprintf(name, sizeof name, "task_%03zu.csv", i);
            write_task_file((dir / name).string(), t.data, &c.standardizer, h);
            files.push_back({{"file", name}, {"violations", t.violations}, {"fallbacks", t.fallbacks}});
        }
        const nlohmann::json manifest{{"format", "sambo.corpus"},
                                      {"config_hash", h},
                                      {"family", _cfg.family},
                                      {"tasks", _cfg.collect.tasks},
                                      {"rows", _cfg.collect.rows},
                                      {"files", files},
                                      {"failures", failures},
                                      {"violations", c.violations()},
                                      {"standardizer", standardizer_to_json(c.standardizer)},
                                      {"bounds", {{"low", std::vector<double>(c.bounds.low.data(), c.bounds.low.data() + c.bounds.dim())},
                                                  {"high", std::vector<double>(c.bounds.high.data(), c.bounds.high.data() + c.bounds.dim())}}}};
        write_text(dir / "manifest.json", manifest.dump(2) + "\n");
        return *(_corpus = std::move(c));
    }

    const FrontierChoice& frontier(Target t)
    {
        auto& slot = t == Target::f ? _frontier_f : _frontier_q;
        if (slot)
            return *slot;
        const auto dir = stage_dir(Stage::frontier);
        const auto json_path = dir / ("kernel_" + to_string(t) + ".json");
        if (std::filesystem::exists(json_path)) {
            const auto j = nlohmann::json::parse(read_text(json_path));
            FrontierChoice fc;
            fc.kernel = {j.at("lengthscale").get<double>(), j.at("variance").get<double>(),
                         j.at("likelihood_std").get<double>()};
            fc.avg_calib = j.at("avg_calib").get<double>();
            fc.avg_std = j.at("avg_std").get<double>();
            return *(slot = fc);
        }
        FrontierChoice fc = select_kernel(corpus().datasets(t), _cfg.frontier, t, _cfg.parallelism);
        ensure_directory(dir);
        const std::string h = stage_hash(_cfg, Stage::frontier);
        write_text(dir / ("trace_" + to_string(t) + ".csv"), frontier_trace_csv(fc, h));
        const nlohmann::json j{{"config_hash", h},
                               {"target", to_string(t)},
                               {"lengthscale", fc.kernel.lengthscale},
                               {"variance", fc.kernel.variance},
                               {"likelihood_std", fc.kernel.likelihood_std},
                               {"avg_calib", fc.avg_calib},
                               {"avg_std", fc.avg_std},
                               {"threshold", t == Target::q ? _cfg.frontier.threshold_q : _cfg.frontier.threshold_f}};
        write_text(json_path, j.dump(2) + "\n");
        return *(slot = fc);
    }

    const LearnablePrior& prior(Target t)
    {
        auto& slot = t == Target::f ? _prior_f : _prior_q;
        if (slot)
            return *slot;
        const auto dir = stage_dir(Stage::meta);
        const auto json_path = dir / ("prior_" + to_string(t) + ".json");
        if (std::filesystem::exists(json_path))
            return *(slot = prior_from_json(nlohmann::json::parse(read_text(json_path))));
        const KernelConfig hyper = frontier(t).kernel;
        MetaTrainResult r = train_prior(corpus(), hyper, _cfg.meta, t, _cfg.seed, _cfg.parallelism);
        ensure_directory(dir);
        const std::string h = stage_hash(_cfg, Stage::meta);
        write_text(dir / ("loss_" + to_string(t) + ".csv"), loss_trace_csv(r.loss_trace, h));
        nlohmann::json j = prior_to_json(r.prior);
        j["config_hash"] = h;
        write_text(json_path, j.dump() + "\n");
        return *(slot = r.prior);
    }

    PriorSet priors(bool learned)
    {
        PriorSet p;
        p.vanilla_f = GPPrior::vanilla(frontier(Target::f).kernel);
        p.vanilla_q = GPPrior::vanilla(frontier(Target::q).kernel);
        if (learned) {
            p.learned_f = prior(Target::f).gp_prior();
            p.learned_q = prior(Target::q).gp_prior();
        }
        return p;
    }

    const std::vector<TestTask>& test_tasks()
    {
        if (!_tests)
            _tests = make_test_tasks(_cfg.family, _cfg.seed, _cfg.bo.test_tasks, _cfg.bo.domain_size, _cfg.parallelism);
        return *_tests;
    }

    SafeBOOptions bo_options() const { return {_cfg.bo.alpha, _cfg.bo.epsilon, _cfg.bo.max_inner_rounds}; }

    /// The safe BO campaign; always recomputed and written.
    CampaignReport run()
    {
        bool learned = false;
        for (const auto& a : _cfg.bo.algorithms)
            learned = learned || a == "sambo-s" || a == "sambo-g";
        const PriorSet p = priors(learned);
        CampaignReport rep = run_campaign(test_tasks(), corpus().standardizer, p, _cfg.bo.algorithms, _cfg.bo.seeds,
                                          _cfg.bo.iterations, bo_options(), _cfg.parallelism);
        const auto dir = stage_dir(Stage::run);
        ensure_directory(dir);
        const std::string h = stage_hash(_cfg, Stage::run);
        write_text(dir / "runs.csv", campaign_runs_csv(rep, h));
        write_text(dir / "curves.csv", campaign_curves_csv(rep, _cfg.bo.algorithms, h));
        write_text(dir / "summary.csv", campaign_summary_csv(rep, _cfg.bo.algorithms, h));
        nlohmann::json errors = nlohmann::json::array();
        for (const auto& r : rep.runs)
            if (!r.error.empty())
                errors.push_back({{"algorithm", r.algorithm}, {"task", r.task}, {"seed", r.seed},
                                  {"audit_failure", r.audit_failure}, {"error", r.error}});
        nlohmann::json medians;
        for (const auto& a : _cfg.bo.algorithms)
            medians[a] = median_final_regret(rep, a);
        nlohmann::json config = to_json(_cfg);
        config.erase("parallelism");
        const nlohmann::json j{{"config_hash", h},
                               {"config", config},
                               {"runs", rep.runs.size()},
                               {"audit_failures", rep.audit_failures()},
                               {"errors", errors},
                               {"median_final_regret", medians}};
        write_text(dir / "report.json", j.dump(2) + "\n");
        return rep;
    }

    struct GridCell {
        double lengthscale = 0.0, variance = 0.0;
        double avg_calib = 0.0, avg_std = 0.0;
        double max_q = 0.0;           // raw, max over runs
        double cumulative_regret = 0.0;  // mean over runs
        std::string error;
    };

    /// Calibration, sharpness, max constraint and cumulative regret of GoOSE
    /// over the (l_q, nu_q) grid, with the FS-chosen target kernel.
    std::vector<GridCell> grid()
    {
        const auto& g = _cfg.grid;
        const auto qs = corpus().datasets(Target::q);
        const GPPrior pf = GPPrior::vanilla(frontier(Target::f).kernel);
        const auto tasks = make_test_tasks(_cfg.family, _cfg.seed, g.test_tasks, _cfg.bo.domain_size, _cfg.parallelism);
        std::vector<GridCell> cells;
        for (double l : g.lengthscales)
            for (double nu : g.variances)
                cells.push_back({l, nu, 0, 0, 0, 0, {}});
        parallel_for(static_cast<Index>(cells.size()), _cfg.parallelism, [&](Index i) {
            GridCell& c = cells[static_cast<std::size_t>(i)];
            try {
                const KernelConfig kq{c.lengthscale, c.variance, _cfg.frontier.likelihood_std};
                const MetricsResult m = evaluate_params(qs, kq);
                c.avg_calib = m.avg_calib;
                c.avg_std = m.avg_std;
                PriorSet p;
                p.vanilla_f = pf;
                p.vanilla_q = GPPrior::vanilla(kq);
                const CampaignReport rep =
                    run_campaign(tasks, corpus_standardizer(), p, {"goose"}, g.seeds, g.iterations, bo_options());
                c.max_q = -std::numeric_limits<double>::infinity();
                double sum = 0.0;
                for (const auto& r : rep.runs) {
                    if (!r.error.empty())
                        throw std::runtime_error(r.error);
                    c.max_q = std::max(c.max_q, r.record.max_q_obs());
                    const std::size_t seeds = static_cast<std::size_t>(tasks[static_cast<std::size_t>(r.task)].task.safe_seed.rows());
                    for (std::size_t t = seeds; t < r.record.rows.size(); ++t)
                        sum += r.record.rows[t].regret;
                }
                c.cumulative_regret = sum / static_cast<double>(rep.runs.size());
            } catch (const std::exception& e) {
                c.error = e.what();
            }
        });
        const auto dir = stage_dir(Stage::grid);
        ensure_directory(dir);
        const std::string h = stage_hash(_cfg, Stage::grid);
        auto matrix = [&](const std::string& kind, auto value) {
            std::ostringstream os;
            os << csv_preamble("grid_" + kind, h) << "lengthscale";
            for (double nu : g.variances)
                os << ',' << format_double(nu);
            os << '\n';
            std::size_t k = 0;
            for (double l : g.lengthscales) {
                os << format_double(l);
                for (std::size_t j = 0; j < g.variances.size(); ++j, ++k)
                    os << ',' << (cells[k].error.empty() ? format_double(value(cells[k])) : std::string("error"));
                os << '\n';
            }
            write_text(dir / ("grid_" + kind + ".csv"), os.str());
        };
        matrix("calib", [](const GridCell& c) { return c.avg_calib; });
        matrix("std", [](const GridCell& c) { return c.avg_std; });
        matrix("max_q", [](const GridCell& c) { return c.max_q; });
        matrix("cumulative_regret", [](const GridCell& c) { return c.cumulative_regret; });
        nlohmann::json errors = nlohmann::json::array();
        for (const auto& c : cells)
            if (!c.error.empty())
                errors.push_back({{"lengthscale", c.lengthscale}, {"variance", c.variance}, {"error", c.error}});
        const auto& fq = frontier(Target::q).kernel;
        write_text(dir / "grid.json", nlohmann::json{{"config_hash", h},
                                                     {"fs_lengthscale", fq.lengthscale},
                                                     {"fs_variance", fq.variance},
                                                     {"errors", errors}}
                                              .dump(2) + "\n");
        return cells;
    }

    struct AblateCell {
        Index tasks = 0, rows = 0;
        double median_final_regret = 0.0;
        Index violations = 0;
        Index audit_failures = 0;
        std::string error;
    };

    /// Terminal regret of the configured algorithm for every (n, T) pair,
    /// each with its own standardizer, kernel search and meta-training.
    std::vector<AblateCell> ablate()
    {
        const auto& ab = _cfg.ablate;
        if (ab.tasks.empty() || ab.rows.empty())
            throw DomainError("config: empty ablation lattice");
        ExperimentConfig big = _cfg;
        big.collect.tasks = *std::max_element(ab.tasks.begin(), ab.tasks.end());
        big.collect.rows = *std::max_element(ab.rows.begin(), ab.rows.end());
        Pipeline full(big, _out);
        const Corpus& all = full.corpus();
        std::vector<AblateCell> cells;
        for (Index n : ab.tasks)
            for (Index T : ab.rows) {
                AblateCell cell{n, T, 0.0, 0, 0, {}};
                try {
                    const Corpus c = slice_corpus(all, n, T);
                    PriorSet p;
                    const FrontierChoice ff = select_kernel(c.datasets(Target::f), _cfg.frontier, Target::f, _cfg.parallelism);
                    const FrontierChoice fq = select_kernel(c.datasets(Target::q), _cfg.frontier, Target::q, _cfg.parallelism);
                    p.vanilla_f = GPPrior::vanilla(ff.kernel);
                    p.vanilla_q = GPPrior::vanilla(fq.kernel);
                    if (ab.algorithm == "sambo-s" || ab.algorithm == "sambo-g") {
                        p.learned_f = train_prior(c, ff.kernel, _cfg.meta, Target::f, _cfg.seed, _cfg.parallelism).prior.gp_prior();
                        p.learned_q = train_prior(c, fq.kernel, _cfg.meta, Target::q, _cfg.seed, _cfg.parallelism).prior.gp_prior();
                    }
                    const CampaignReport rep = run_campaign(test_tasks(), c.standardizer, p, {ab.algorithm}, _cfg.bo.seeds,
                                                            _cfg.bo.iterations, bo_options(), _cfg.parallelism);
                    cell.median_final_regret = median_final_regret(rep, ab.algorithm);
                    cell.audit_failures = rep.audit_failures();
                    for (const auto& r : rep.runs)
                        cell.violations += r.record.violations;
                } catch (const std::exception& e) {
                    cell.error = e.what();
                }
                cells.push_back(cell);
            }
        const auto dir = stage_dir(Stage::ablate);
        ensure_directory(dir);
        const std::string h = stage_hash(_cfg, Stage::ablate);
        std::ostringstream os;
        os << csv_preamble("ablate", h) << "tasks,rows,algorithm,median_final_regret,violations,audit_failures,error\n";
        for (const auto& c : cells)
            os << c.tasks << ',' << c.rows << ',' << ab.algorithm << ',' << format_double(c.median_final_regret) << ','
               << c.violations << ',' << c.audit_failures << ',' << (c.error.empty() ? "" : "error") << '\n';
        write_text(dir / "ablate.csv", os.str());
        return cells;
    }

private:
    const Standardizer& corpus_standardizer() { return corpus().standardizer; }

    static Corpus load_corpus(const std::filesystem::path& dir)
    {
        nlohmann::json m;
        try {
            m = nlohmann::json::parse(read_text(dir / "manifest.json"));
        } catch (const nlohmann::json::exception& e) {
            throw DomainError("corpus manifest: " + std::string(e.what()));
        }
        Corpus c;
        c.standardizer = standardizer_from_json(m.at("standardizer"));
        const auto low = m.at("bounds").at("low").get<std::vector<double>>();
        const auto high = m.at("bounds").at("high").get<std::vector<double>>();
        c.bounds.low = Eigen::Map<const Vector>(low.data(), static_cast<Index>(low.size()));
        c.bounds.high = Eigen::Map<const Vector>(high.data(), static_cast<Index>(high.size()));
        std::map<std::size_t, CollectedTask> by_index;
        for (const auto& f : m.at("files")) {
            const std::string name = f.at("file").get<std::string>();
            CollectedTask t;
            t.data = read_task_file((dir / name).string()).data;
            t.violations = f.at("violations").get<Index>();
            t.fallbacks = f.at("fallbacks").get<Index>();
            by_index[std::stoul(name.substr(5, 3))] = std::move(t);
        }
        for (const auto& f : m.at("failures")) {
            CollectedTask t;
            t.data.seed = f.at("seed").get<std::uint64_t>();
            t.error = f.at("error").get<std::string>();
            by_index[f.at("index").get<std::size_t>()] = std::move(t);
        }
        for (auto& [i, t] : by_index)
            c.tasks.push_back(std::move(t));
        return c;
    }

    ExperimentConfig _cfg;
    std::filesystem::path _out;
    std::optional<Corpus> _corpus;
    std::optional<FrontierChoice> _frontier_f, _frontier_q;
    std::optional<LearnablePrior> _prior_f, _prior_q;
    std::optional<std::vector<TestTask>> _tests;
};

} // namespace sambo

#endif
