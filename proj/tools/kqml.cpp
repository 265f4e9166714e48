#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "kqml/attitudes.hpp"
#include "kqml/policy.hpp"
#include "kqml/semantics.hpp"
#include "kqml/sim.hpp"
#include "kqml/wire.hpp"

namespace {

std::string slurp(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

struct LintResult {
    int exit_code = 0;
};

int run_lint(const std::string& path, bool strict, bool proactive, const std::string& format) {
    std::vector<kqml::TranscriptEntry> entries;
    try {
        entries = kqml::parse_transcript(slurp(path), proactive);
    } catch (const kqml::TranscriptError& e) {
        std::cerr << "parse error: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }

    // The transcript shows one agent's traffic; infer who that is.
    std::string owner;
    for (const auto& e : entries) {
        if (!e.incoming && e.msg.sender) {
            owner = *e.msg.sender;
            break;
        }
        if (e.incoming && e.msg.receiver) {
            owner = *e.msg.receiver;
            break;
        }
    }
    if (owner.empty()) owner = "self";

    kqml::SemanticsEngine engine(proactive);
    kqml::ConversationTracker tracker(kqml::builtin_grammar(proactive));
    kqml::AgentState st;
    st.name = owner;
    st.facilitator = true;  // role is unobservable from a transcript
    kqml::AssumeTrueProver prover;  // belief bases are unobservable, too

    const bool lines = format == "lines";
    int worst = 0;
    std::size_t n = 0;
    for (const auto& e : entries) {
        ++n;
        std::string verdict = "ok";
        std::string note;
        auto out = tracker.feed(e.msg, !e.incoming);
        if (!out.ok) {
            verdict = strict ? "reject" : "warn";
            note = out.reason;
            if (!out.expected.empty()) {
                note += "; expected one of:";
                for (const auto& p : out.expected) note += ' ' + kqml::to_string(p);
            }
            if (strict) worst = std::max(worst, 2);
        }
        for (const auto& w : out.warnings) {
            if (note.empty()) note = w;
            if (!lines) std::cout << "# warning: " << w << '\n';
        }
        if (out.ok) {
            std::optional<kqml::Violation> v;
            if (e.incoming) {
                v = engine.check_receive(st, e.msg, &prover);
            } else {
                engine.establish_sender_prerequisites(st, e.msg);
                v = engine.check_send(st, e.msg, &prover);
            }
            if (v) {
                verdict = strict ? "reject" : "warn";
                note = v->detail + ": " + kqml::to_string(v->unmet);
                if (strict) worst = std::max(worst, 3);
            } else {
                if (e.incoming)
                    engine.apply_receive(st, e.msg, &prover);
                else
                    engine.apply_send(st, e.msg, &prover);
            }
        }
        if (lines) {
            std::cout << n << ' ' << (out.conv_id.empty() ? "-" : out.conv_id) << ' ' << verdict;
            if (!note.empty()) std::cout << ' ' << note;
            std::cout << '\n';
        } else {
            std::cout << (e.incoming ? "< " : "> ") << kqml::serialize_message(e.msg) << '\n';
            std::cout << "  [" << verdict;
            if (!out.conv_id.empty()) std::cout << ", conversation " << out.conv_id;
            std::cout << ']';
            if (!note.empty()) std::cout << ' ' << note;
            std::cout << '\n';
        }
    }
    return worst;
}

int run_scenario_file(const std::string& path, bool strict, bool proactive, int seed) {
    std::string text;
    try {
        text = slurp(path);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    kqml::SimOptions opts;
    opts.strict = strict;
    opts.enable_proactive = proactive;
    opts.id_seed = seed;
    kqml::RunReport rep = kqml::run_scenario(text, opts);
    std::cout << rep.render();
    return rep.exit_code();
}

int run_explain(const std::string& name, bool proactive) {
    kqml::SemanticsEngine engine(proactive);
    try {
        if (name == "all")
            std::cout << engine.dump_table();
        else
            std::cout << engine.explain(name);
    } catch (const kqml::UnknownPerformativeName& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"KQML conversation engine: lint transcripts, run scenarios, explain "
                 "performatives"};
    app.require_subcommand(1);

    bool strict = true, lenient = false, proactive = false;
    app.add_flag("--strict", strict, "reject on violations (default)");
    app.add_flag("--lenient", lenient, "downgrade violations to warnings");
    app.add_flag("--proactive", proactive, "enable the proactive performatives");

    std::string lint_path, format = "text";
    auto* lint = app.add_subcommand("lint", "check a transcript against policy and semantics");
    lint->add_option("transcript", lint_path, "transcript file ('>'/'<' prefixed messages)")
        ->required();
    lint->add_option("--format", format, "output format: text or lines")
        ->check(CLI::IsMember({"text", "lines"}));

    std::string scn_path;
    int seed = 0;
    if (const char* s = std::getenv("KQML_ID_SEED")) seed = std::atoi(s);
    auto* run = app.add_subcommand("run", "execute a scenario script");
    run->add_option("scenario", scn_path, "scenario script file")->required();
    run->add_option("--seed", seed, "start value for minted message ids");

    std::string perf;
    auto* explain = app.add_subcommand("explain", "print a performative's semantic description");
    explain->add_option("performative", perf, "performative name, or 'all'")->required();

    CLI11_PARSE(app, argc, argv);
    if (lenient) strict = false;

    if (lint->parsed()) return run_lint(lint_path, strict, proactive, format);
    if (run->parsed()) return run_scenario_file(scn_path, strict, proactive, seed);
    if (explain->parsed()) return run_explain(perf, proactive);
    return 0;
}
