#include "kqml/sim.hpp"

#include <sstream>

namespace kqml {

int RunReport::exit_code() const {
    if (parse_errors) return 1;
    if (policy_violations) return 2;
    if (semantic_violations) return 3;
    if (assertion_failures) return 4;
    return 0;
}

namespace {

const char* kind_name(SimEvent::Kind k) {
    switch (k) {
        case SimEvent::Kind::Sent:
            return "sent";
        case SimEvent::Kind::Delivered:
            return "delivered";
        case SimEvent::Kind::Policy:
            return "policy-violation";
        case SimEvent::Kind::Semantic:
            return "semantic-violation";
        case SimEvent::Kind::Warning:
            return "warning";
        case SimEvent::Kind::Failure:
            return "check-failed";
        case SimEvent::Kind::Info:
            return "info";
    }
    return "?";
}

}  // namespace

std::string RunReport::render() const {
    std::ostringstream out;
    for (const auto& e : events) {
        out << kind_name(e.kind);
        if (!e.agent.empty()) out << ' ' << e.agent;
        out << ": " << e.text << '\n';
    }
    out << "summary: " << parse_errors << " parse, " << policy_violations << " policy, "
        << semantic_violations << " semantic, " << assertion_failures << " check failures\n";
    return out.str();
}

Simulation::Agent::Agent(std::string name, bool facilitator, Grammar g)
    : tracker(std::move(g)) {
    st.name = std::move(name);
    st.facilitator = facilitator;
}

Simulation::Simulation(SimOptions opts)
    : opts_(opts), engine_(opts.enable_proactive), id_counter_(opts.id_seed) {}

void Simulation::add_agent(const std::string& name, bool facilitator) {
    if (agents_.count(name)) throw DuplicateName("agent '" + name + "' already exists");
    agents_.emplace(name, Agent(name, facilitator, builtin_grammar(opts_.enable_proactive)));
}

Simulation::Agent& Simulation::agent(const std::string& name) {
    auto it = agents_.find(name);
    if (it == agents_.end()) throw UnknownAgent("no agent named '" + name + "'");
    return it->second;
}

AgentState& Simulation::state(const std::string& name) { return agent(name).st; }
const AgentState& Simulation::state(const std::string& name) const {
    return const_cast<Simulation*>(this)->agent(name).st;
}
const ConversationTracker& Simulation::tracker(const std::string& name) const {
    return const_cast<Simulation*>(this)->agent(name).tracker;
}

void Simulation::believe(const std::string& a, const std::string& prop) {
    agent(a).st.belief_base.insert(prop);
}

void Simulation::submit(KqmlMessage msg) {
    if (!msg.sender) throw UnknownAgent("submitted message has no :sender");
    Agent& a = agent(*msg.sender);
    if (!msg.reply_with) msg.reply_with = mint_id();
    do_send(a, msg);
    run();
}

bool Simulation::do_send(Agent& a, KqmlMessage msg) {
    engine_.establish_sender_prerequisites(a.st, msg);
    auto out = a.tracker.feed(msg, /*outgoing=*/true);
    for (const auto& w : out.warnings)
        report_.events.push_back({SimEvent::Kind::Warning, a.st.name, w});
    if (!out.ok) {
        std::string text = out.reason + " [" + serialize_message(msg) + "]";
        if (opts_.strict) {
            ++report_.policy_violations;
            report_.events.push_back({SimEvent::Kind::Policy, a.st.name, text});
            return false;
        }
        report_.events.push_back({SimEvent::Kind::Warning, a.st.name, text});
    }
    if (auto v = engine_.check_send(a.st, msg)) {
        std::string text = v->detail + ": " + to_string(v->unmet) + " [" +
                           serialize_message(msg) + "]";
        if (opts_.strict) {
            ++report_.semantic_violations;
            report_.events.push_back({SimEvent::Kind::Semantic, a.st.name, text});
            return false;
        }
        report_.events.push_back({SimEvent::Kind::Warning, a.st.name, text});
    }
    if (msg.reply_with) heads_.emplace(*msg.reply_with, msg);
    engine_.apply_send(a.st, msg);
    report_.events.push_back({SimEvent::Kind::Sent, a.st.name, serialize_message(msg)});
    bus_.push_back(std::move(msg));
    return true;
}

void Simulation::run() {
    while (!bus_.empty()) {
        KqmlMessage msg = std::move(bus_.front());
        bus_.pop_front();
        do_deliver(msg);
    }
}

void Simulation::do_deliver(const KqmlMessage& msg) {
    if (!msg.receiver || !agents_.count(*msg.receiver)) {
        report_.events.push_back({SimEvent::Kind::Warning, {},
                                  "undeliverable message: " + serialize_message(msg)});
        return;
    }
    Agent& a = agents_.at(*msg.receiver);
    auto out = a.tracker.feed(msg, /*outgoing=*/false);
    for (const auto& w : out.warnings)
        report_.events.push_back({SimEvent::Kind::Warning, a.st.name, w});
    if (!out.ok) {
        std::string text = out.reason + " [" + serialize_message(msg) + "]";
        if (opts_.strict) {
            ++report_.policy_violations;
            report_.events.push_back({SimEvent::Kind::Policy, a.st.name, text});
            return;
        }
        report_.events.push_back({SimEvent::Kind::Warning, a.st.name, text});
    }
    if (auto v = engine_.check_receive(a.st, msg)) {
        std::string text = v->detail + ": " + to_string(v->unmet) + " [" +
                           serialize_message(msg) + "]";
        if (opts_.strict) {
            ++report_.semantic_violations;
            report_.events.push_back({SimEvent::Kind::Semantic, a.st.name, text});
            return;
        }
        report_.events.push_back({SimEvent::Kind::Warning, a.st.name, text});
    }
    engine_.apply_receive(a.st, msg);
    delivered_.push_back(msg);
    report_.events.push_back({SimEvent::Kind::Delivered, a.st.name, serialize_message(msg)});
    react(a, msg);
}

void Simulation::react(Agent& a, const KqmlMessage& msg) {
    const std::string& p = msg.performative;
    const std::string& me = a.st.name;

    if (p == "ask-if" || p == "proactive-ask-if") {
        if (!msg.reply_with || !msg.content.opaque) {
            report_.events.push_back({SimEvent::Kind::Warning, me,
                                      "cannot answer a query without :reply-with and content"});
            return;
        }
        KqmlMessage reply;
        reply.sender = me;
        reply.receiver = msg.sender;
        reply.in_reply_to = msg.reply_with;
        if (a.st.belief_base.count(*msg.content.opaque)) {
            reply.performative = "tell";
            reply.reply_with = mint_id();
            reply.content = Content::text(*msg.content.opaque);
        } else {
            reply.performative = "sorry";
        }
        do_send(a, reply);
        return;
    }

    if (p == "advertise" && a.st.facilitator) {
        if (!msg.content.nested || !msg.sender || !msg.reply_with) {
            report_.events.push_back(
                {SimEvent::Kind::Warning, me, "malformed advertise ignored"});
            return;
        }
        a.adverts.push_back({*msg.sender, *msg.content.nested, *msg.reply_with});
        assert_expr(a.st, canproc(*msg.sender, *msg.content.nested));
        return;
    }

    if (p == "broker-one") {
        if (!msg.content.nested || !msg.sender || !msg.reply_with) {
            report_.events.push_back(
                {SimEvent::Kind::Warning, me, "malformed broker-one ignored"});
            return;
        }
        const KqmlMessage& emb = *msg.content.nested;
        const Advert* chosen = nullptr;
        for (const auto& ad : a.adverts) {  // earliest registration wins
            if (ad.advertiser == me) continue;
            if (ad.tmpl.performative != emb.performative) continue;
            if (!emb.content.opaque || !ad.tmpl.content.opaque ||
                *emb.content.opaque != *ad.tmpl.content.opaque)
                continue;
            chosen = &ad;
            break;
        }
        if (!chosen) {
            KqmlMessage srr;
            srr.performative = "sorry";
            srr.sender = me;
            srr.receiver = msg.sender;
            srr.in_reply_to = msg.reply_with;
            do_send(a, srr);
            return;
        }
        KqmlMessage relay;
        relay.performative = emb.performative;
        relay.sender = me;
        relay.receiver = chosen->advertiser;
        relay.in_reply_to = chosen->adv_rw;         // joins the advertiser's offer thread
        relay.reply_with = *msg.reply_with + ".1";  // links back to this brokering
        relay.content = emb.content;
        a.pending[*relay.reply_with] = {*msg.sender, *msg.reply_with};
        do_send(a, relay);
        return;
    }

    // Responses that resolve a pending brokering at the facilitator.
    if (msg.in_reply_to && a.pending.count(*msg.in_reply_to)) {
        PendingBroker pb = a.pending.at(*msg.in_reply_to);
        a.pending.erase(*msg.in_reply_to);
        if (p == "tell") {
            KqmlMessage inner;  // the answer, with the answerer's identity withheld
            inner.performative = "tell";
            inner.receiver = pb.requester;
            inner.in_reply_to = pb.broker_rw;
            inner.content = msg.content;
            KqmlMessage fwd;
            fwd.performative = "forward";
            fwd.sender = me;
            fwd.receiver = pb.requester;
            fwd.to = pb.requester;
            fwd.in_reply_to = pb.broker_rw;
            fwd.reply_with = mint_id();
            fwd.content = Content::message(std::move(inner));
            do_send(a, fwd);
        } else if (p == "sorry" || p == "error") {
            KqmlMessage srr;
            srr.performative = "sorry";
            srr.sender = me;
            srr.receiver = pb.requester;
            srr.in_reply_to = pb.broker_rw;
            do_send(a, srr);
        }
        return;
    }
}

bool Simulation::completion_met_for(const std::string& conv_id) const {
    auto it = heads_.find(conv_id);
    if (it == heads_.end()) throw UnknownAgent("no message sent with :reply-with " + conv_id);
    const KqmlMessage& head = it->second;
    const AgentState& s = state(head.sender.value_or(""));
    const AgentState& r = state(head.receiver.value_or(""));
    return engine_.completion_met(s, r, head);
}

// ---- scenario scripts ------------------------------------------------------

namespace {

std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

std::string strip_quotes(const std::string& s) {
    if (s.size() >= 2 && s.front() == '"' && s.back() == '"') return s.substr(1, s.size() - 2);
    return s;
}

}  // namespace

RunReport run_scenario(const std::string& script, SimOptions opts) {
    Simulation sim(opts);
    RunReport& rep = sim.report();
    std::istringstream in(script);
    std::string line;
    std::size_t line_no = 0;
    std::size_t expect_cursor = 0;

    auto fail = [&](const std::string& what) {
        ++rep.assertion_failures;
        rep.events.push_back(
            {SimEvent::Kind::Failure, {}, "line " + std::to_string(line_no) + ": " + what});
    };

    while (std::getline(in, line)) {
        ++line_no;
        line = trim(line);
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ls(line);
        std::string cmd;
        ls >> cmd;
        try {
            if (cmd == "agent" || cmd == "facilitator") {
                std::string name;
                ls >> name;
                sim.add_agent(name, cmd == "facilitator");
            } else if (cmd == "believe") {
                std::string name;
                ls >> name;
                std::string prop;
                std::getline(ls, prop);
                sim.believe(name, strip_quotes(trim(prop)));
            } else if (cmd == "send") {
                std::string rest;
                std::getline(ls, rest);
                sim.submit(parse_message(trim(rest), opts.enable_proactive));
            } else if (cmd == "expect") {
                std::string rest;
                std::getline(ls, rest);
                KqmlMessage partial = parse_message_partial(trim(rest), opts.enable_proactive);
                const auto& log = sim.delivered();
                std::size_t i = expect_cursor;
                while (i < log.size() && !message_matches(partial, log[i])) ++i;
                if (i == log.size())
                    fail("no delivered message matches " + trim(rest));
                else
                    expect_cursor = i + 1;
            } else if (cmd == "holds" || cmd == "not-holds") {
                std::string name;
                ls >> name;
                std::string rest;
                std::getline(ls, rest);
                StateExpr e = parse_state_expr(trim(rest));
                bool h = holds(sim.state(name), e);
                if (h != (cmd == "holds"))
                    fail(cmd + " " + name + " " + to_string(e) + " is " +
                         (h ? "true" : "false"));
            } else if (cmd == "completion") {
                std::string id, want;
                ls >> id >> want;
                bool met = sim.completion_met_for(id);
                if (met != (want == "met"))
                    fail("completion " + id + " is " + (met ? "met" : "unmet"));
            } else {
                ++rep.parse_errors;
                rep.events.push_back({SimEvent::Kind::Failure, {},
                                      "line " + std::to_string(line_no) +
                                          ": unknown directive '" + cmd + "'"});
            }
        } catch (const ParseError& e) {
            ++rep.parse_errors;
            rep.events.push_back({SimEvent::Kind::Failure, {},
                                  "line " + std::to_string(line_no) + ": " + e.what()});
        } catch (const std::exception& e) {
            fail(e.what());
        }
    }
    return std::move(rep);
}

}  // namespace kqml
