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

// sambo: command line driver for the safe meta-BO pipeline.
//
// Exit codes: 0 success, 1 error, 2 safety audit failure during `run`.

#include <cstdio>
#include <exception>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include <sambo/harness.hpp>

namespace {

struct GlobalOptions {
    std::string config_path;
    std::string profile;
    std::string family;
    std::optional<std::uint64_t> seed;
    std::optional<int> parallelism;
    std::string out = "out";
};

sambo::ExperimentConfig load_config(const GlobalOptions& g)
{
    nlohmann::json file = nlohmann::json::object();
    if (!g.config_path.empty()) {
        try {
            file = nlohmann::json::parse(sambo::read_text(g.config_path));
        } catch (const nlohmann::json::parse_error& e) {
            throw sambo::DomainError("config " + g.config_path + ": " + e.what());
        }
    }
    std::string profile = g.profile, family = g.family;
    if (profile.empty())
        profile = file.value("profile", std::string("desk"));
    if (family.empty())
        family = file.value("family", std::string("camelback"));
    file.erase("profile");
    file.erase("family");
    sambo::ExperimentConfig c = sambo::merge_config(sambo::default_config(profile, family), file);
    if (g.seed)
        c.seed = *g.seed;
    if (g.parallelism)
        c.parallelism = *g.parallelism;
    sambo::validate(c);
    return c;
}

void print_kernel(const char* target, const sambo::FrontierChoice& fc)
{
    std::printf("%s: lengthscale=%.6g variance=%.6g avg_calib=%.4f avg_std=%.4f\n", target, fc.kernel.lengthscale,
                fc.kernel.variance, fc.avg_calib, fc.avg_std);
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Safe meta-Bayesian optimization experiments"};
    app.require_subcommand(1);
    GlobalOptions g;
    app.add_option("--config", g.config_path, "JSON config overriding the profile defaults")->check(CLI::ExistingFile);
    app.add_option("--profile", g.profile, "Default sizes")->check(CLI::IsMember({"desk", "paper"}));
    app.add_option("--family", g.family, "Environment family")->check(CLI::IsMember({"camelback", "eggholder", "argus"}));
    app.add_option("--seed", g.seed, "Master seed");
    app.add_option("--out", g.out, "Output directory")->capture_default_str();
    app.add_option("--parallelism", g.parallelism, "Worker threads")->check(CLI::PositiveNumber);

    auto* collect = app.add_subcommand("collect", "Collect meta-training data with SafeOpt");
    auto* frontier = app.add_subcommand("frontier-search", "Choose GP kernel parameters by frontier search");
    std::string target = "both";
    frontier->add_option("--target", target, "Model")->check(CLI::IsMember({"f", "q", "both"}))->capture_default_str();
    auto* meta = app.add_subcommand("meta-train", "Meta-learn GP priors for f and q");
    auto* run = app.add_subcommand("run", "Safe BO campaign over the test tasks");
    auto* grid = app.add_subcommand("grid", "Calibration, sharpness, safety and regret over a kernel grid");
    auto* ablate = app.add_subcommand("ablate", "Terminal regret over meta-data sizes");
    auto* show = app.add_subcommand("show-config", "Print the effective configuration");
    for (auto* sub : {collect, frontier, meta, run, grid, ablate, show})
        sub->fallthrough();

    CLI11_PARSE(app, argc, argv);

    try {
        const sambo::ExperimentConfig cfg = load_config(g);
        if (show->parsed()) {
            std::cout << sambo::to_json(cfg).dump(2) << "\n";
            return 0;
        }
        sambo::Pipeline p(cfg, g.out);
        if (collect->parsed()) {
            const auto& c = p.corpus();
            std::printf("%zu tasks, %lld failed, %lld violations -> %s\n", c.tasks.size(),
                        static_cast<long long>(c.failures()), static_cast<long long>(c.violations()),
                        p.stage_dir(sambo::Stage::collect).string().c_str());
            return c.failures() > 0 ? 1 : 0;
        }
        if (frontier->parsed()) {
            if (target != "q")
                print_kernel("f", p.frontier(sambo::Target::f));
            if (target != "f")
                print_kernel("q", p.frontier(sambo::Target::q));
            std::printf("-> %s\n", p.stage_dir(sambo::Stage::frontier).string().c_str());
            return 0;
        }
        if (meta->parsed()) {
            p.prior(sambo::Target::f);
            p.prior(sambo::Target::q);
            std::printf("-> %s\n", p.stage_dir(sambo::Stage::meta).string().c_str());
            return 0;
        }
        if (run->parsed()) {
            const sambo::CampaignReport rep = p.run();
            for (const auto& a : cfg.bo.algorithms)
                std::printf("%-8s median final regret %.6g\n", a.c_str(), sambo::median_final_regret(rep, a));
            for (const auto& r : rep.runs)
                if (!r.error.empty())
                    std::fprintf(stderr, "%s task %lld seed %lld: %s\n", r.algorithm.c_str(),
                                 static_cast<long long>(r.task), static_cast<long long>(r.seed), r.error.c_str());
            std::printf("-> %s\n", p.stage_dir(sambo::Stage::run).string().c_str());
            if (rep.audit_failures() > 0)
                return 2;
            return rep.errors() > 0 ? 1 : 0;
        }
        if (grid->parsed()) {
            const auto cells = p.grid();
            long long failed = 0;
            for (const auto& c : cells)
                failed += !c.error.empty();
            std::printf("%zu cells, %lld failed -> %s\n", cells.size(), failed,
                        p.stage_dir(sambo::Stage::grid).string().c_str());
            return failed > 0 ? 1 : 0;
        }
        if (ablate->parsed()) {
            const auto cells = p.ablate();
            int rc = 0;
            for (const auto& c : cells) {
                std::printf("n=%lld T=%lld median final regret %.6g%s\n", static_cast<long long>(c.tasks),
                            static_cast<long long>(c.rows), c.median_final_regret, c.error.empty() ? "" : " (error)");
                if (c.audit_failures > 0)
                    rc = 2;
                else if (!c.error.empty() && rc == 0)
                    rc = 1;
            }
            std::printf("-> %s\n", p.stage_dir(sambo::Stage::ablate).string().c_str());
            return rc;
        }
    } catch (const std::exception& e) {
        std::fprintf(stderr, "sambo: %s\n", e.what());
        return 1;
    }
    return 0;
}
