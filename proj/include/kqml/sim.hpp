#pragma once

#include <deque>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "kqml/attitudes.hpp"
#include "kqml/policy.hpp"
#include "kqml/semantics.hpp"
#include "kqml/wire.hpp"

namespace kqml {

struct DuplicateName : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct UnknownAgent : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct SimOptions {
    bool strict = true;           // violations drop the message; lenient only warns
    bool enable_proactive = false;
    int id_seed = 0;              // start of the minted-id counter
};

struct SimEvent {
    enum class Kind { Sent, Delivered, Policy, Semantic, Warning, Failure, Info };
    Kind kind;
    std::string agent;
    std::string text;
};

struct RunReport {
    std::vector<SimEvent> events;
    int parse_errors = 0;
    int policy_violations = 0;
    int semantic_violations = 0;
    int assertion_failures = 0;

    bool ok() const {
        return parse_errors + policy_violations + semantic_violations + assertion_failures == 0;
    }
    int exit_code() const;
    std::string render() const;
};

/// Deterministic single-threaded multi-agent run: one FIFO bus drained to
/// quiescence after every submitted message.
class Simulation {
public:
    explicit Simulation(SimOptions opts = {});
    Simulation(const Simulation&) = delete;
    Simulation& operator=(const Simulation&) = delete;

    void add_agent(const std::string& name, bool facilitator = false);
    bool has_agent(const std::string& name) const { return agents_.count(name) > 0; }
    AgentState& state(const std::string& name);
    const AgentState& state(const std::string& name) const;
    const ConversationTracker& tracker(const std::string& name) const;
    const SemanticsEngine& semantics() const { return engine_; }

    void believe(const std::string& agent, const std::string& prop);

    /// Inject one message (its :sender names the sending agent; a missing
    /// :reply-with is minted) and run the bus to quiescence.
    void submit(KqmlMessage msg);

    /// Every message that reached its receiver, in delivery order.
    const std::vector<KqmlMessage>& delivered() const { return delivered_; }

    /// Completion state of the exchange opened with this :reply-with.
    bool completion_met_for(const std::string& conv_id) const;

    RunReport& report() { return report_; }
    const RunReport& report() const { return report_; }

private:
    struct Advert {
        std::string advertiser;
        KqmlMessage tmpl;     // the embedded directive template
        std::string adv_rw;   // the advertise's :reply-with
    };
    struct PendingBroker {
        std::string requester;
        std::string broker_rw;
    };
    struct Agent {
        AgentState st;
        ConversationTracker tracker;
        std::vector<Advert> adverts;                     // facilitator registry
        std::map<std::string, PendingBroker> pending;    // relay :reply-with -> origin
        Agent(std::string name, bool facilitator, Grammar g);
    };

    SimOptions opts_;
    SemanticsEngine engine_;
    std::map<std::string, Agent> agents_;
    std::deque<KqmlMessage> bus_;
    std::vector<KqmlMessage> delivered_;
    std::map<std::string, KqmlMessage> heads_;  // :reply-with -> the message that used it
    RunReport report_;
    int id_counter_;

    std::string mint_id() { return "g" + std::to_string(++id_counter_); }
    Agent& agent(const std::string& name);
    bool do_send(Agent& a, KqmlMessage msg);
    void do_deliver(const KqmlMessage& msg);
    void react(Agent& a, const KqmlMessage& msg);
    void run();
};

/// Execute a line-oriented scenario script; see fixtures for the directives
/// (agent, facilitator, believe, send, expect, holds, not-holds, completion).
RunReport run_scenario(const std::string& script, SimOptions opts = {});

}  // namespace kqml
