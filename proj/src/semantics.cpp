#include "kqml/semantics.hpp"

#include <functional>
#include <sstream>

namespace kqml {

std::string message_tag(const KqmlMessage& msg) {
    if (msg.reply_with) return *msg.reply_with;
    return "m#" + std::to_string(std::hash<std::string>{}(serialize_message(msg)));
}

std::optional<KqmlMessage> find_reply_target(const AgentState& state, const std::string& id) {
    for (const auto& rec : state.action_log)
        if (rec.msg.reply_with && *rec.msg.reply_with == id) return rec.msg;
    return std::nullopt;
}

namespace {

KqmlMessage placeholder(const char* perf) {
    KqmlMessage m;
    m.performative = perf;
    return m;
}

KqmlMessage wildcard_message() { return placeholder("_"); }

const ContentProver& prover_or_default(const ContentProver* p) {
    static const ExactMatchProver exact;
    return p ? *p : exact;
}

// Closes a descriptor template against one concrete message.
struct Ctx {
    const KqmlMessage& msg;
    std::optional<StateExpr> s;            // chosen existential S
    std::optional<KqmlMessage> reply_target;
    AgentState* minter = nullptr;          // mints anonymous agents when set
    mutable std::string minted_sender;

    std::string sender_name() const {
        if (msg.sender) return *msg.sender;
        if (minter) {
            if (minted_sender.empty()) minted_sender = minter->mint_anon();
            return minted_sender;
        }
        return kBlankAgent;
    }
    std::string receiver_name() const { return msg.receiver.value_or(kBlankAgent); }
    std::string content_text() const { return msg.content.opaque ? *msg.content.opaque : "_"; }
    const KqmlMessage* embedded() const { return msg.content.nested.get(); }
    std::string embedded_content_text() const {
        const KqmlMessage* e = embedded();
        return (e && e->content.opaque) ? *e->content.opaque : "_";
    }

    std::string resolve_agent(const std::string& a) const {
        if (a == "?sender") return sender_name();
        if (a == "?receiver") return receiver_name();
        return a;
    }
    std::string resolve_prop(const std::string& p) const {
        if (p == "?content") return content_text();
        if (p == "?embedded-content") return embedded_content_text();
        return p;
    }
    KqmlMessage resolve_msg(const KqmlMessage& m) const {
        const std::string& p = m.performative;
        if (p == "?self") return msg;
        if (p == "?embedded") return embedded() ? *embedded() : wildcard_message();
        if (p == "?relay") {
            // The directive the facilitator relays: embedded performative,
            // sender rewritten to the facilitator, receiver left open.
            KqmlMessage relay;
            const KqmlMessage* e = embedded();
            relay.performative = e ? e->performative : "_";
            relay.sender = msg.receiver;
            if (e) relay.content = e->content;
            return relay;
        }
        if (p == "?reply-target") return reply_target ? *reply_target : wildcard_message();
        if (p == "?forward-completion") {
            KqmlMessage fwd;
            fwd.performative = "forward";
            fwd.sender = msg.receiver;
            fwd.receiver = msg.sender;
            fwd.to = msg.sender;
            fwd.in_reply_to = msg.reply_with;
            KqmlMessage inner;
            inner.performative = "_";
            inner.receiver = msg.sender;
            if (embedded()) inner.content = embedded()->content;
            fwd.content = Content::message(std::move(inner));
            return fwd;
        }
        return m;
    }
};

StateExpr instantiate(const StateExpr& e, const Ctx& ctx) {
    return std::visit(
        [&](const auto& n) -> StateExpr {
            using T = std::decay_t<decltype(n)>;
            if constexpr (std::is_same_v<T, Bel>)
                return bel(ctx.resolve_agent(n.agent), ctx.resolve_prop(n.proposition));
            else if constexpr (std::is_same_v<T, Know>)
                return know(ctx.resolve_agent(n.agent), instantiate(*n.arg, ctx));
            else if constexpr (std::is_same_v<T, Want>)
                return want(ctx.resolve_agent(n.agent), instantiate(*n.arg, ctx));
            else if constexpr (std::is_same_v<T, Intend>)
                return intend(ctx.resolve_agent(n.agent), instantiate(*n.arg, ctx));
            else if constexpr (std::is_same_v<T, ProcAct>)
                return proc(ctx.resolve_agent(n.agent), ctx.resolve_msg(n.msg));
            else if constexpr (std::is_same_v<T, SendMsgAct>)
                return sendmsg(ctx.resolve_agent(n.sender), ctx.resolve_agent(n.receiver),
                               ctx.resolve_msg(n.msg));
            else if constexpr (std::is_same_v<T, CanProcAct>)
                return canproc(ctx.resolve_agent(n.agent), ctx.resolve_msg(n.msg));
            else if constexpr (std::is_same_v<T, AndExpr> || std::is_same_v<T, OrExpr>) {
                std::vector<StateExpr> parts;
                parts.reserve(n.parts.size());
                for (const auto& p : n.parts) parts.push_back(instantiate(p, ctx));
                if constexpr (std::is_same_v<T, AndExpr>)
                    return conj(std::move(parts));
                else
                    return disj(std::move(parts));
            } else if constexpr (std::is_same_v<T, NotExpr>)
                return neg(instantiate(*n.arg, ctx));
            else {  // VarExpr
                if (n.name == "S" && ctx.s) return *ctx.s;
                return {n};
            }
        },
        e.node);
}

// The alternatives the existential S ranges over, in their fixed order:
// the positive belief first, then its negation.
std::vector<std::optional<StateExpr>> s_alternatives(const SemanticDescriptor& d, const Ctx& ctx,
                                                     AgentState* minter) {
    using SRole = SemanticDescriptor::SRole;
    if (d.s_role == SRole::None) return {std::nullopt};
    std::string agent;
    std::string prop = ctx.content_text();
    switch (d.s_role) {
        case SRole::Receiver:
            agent = ctx.receiver_name();
            break;
        case SRole::Sender:
            agent = ctx.msg.sender.value_or(kBlankAgent);
            break;
        case SRole::AnonThird:
            agent = minter ? minter->mint_anon() : kBlankAgent;
            prop = ctx.embedded_content_text();
            break;
        default:
            break;
    }
    StateExpr s = bel(agent, prop);
    return {s, neg(s)};
}

}  // namespace

SemanticsEngine::SemanticsEngine(bool enable_proactive) {
    using SRole = SemanticDescriptor::SRole;
    auto self = std::string("?sender");
    auto other = std::string("?receiver");

    auto add = [&](SemanticDescriptor d) { table_.emplace(d.name, std::move(d)); };

    {
        SemanticDescriptor d;
        d.name = "advertise";
        d.gloss = "The sender commits to processing the embedded message from the receiver, "
                  "should one arrive.";
        StateExpr commitment = intend(self, proc(self, placeholder("?embedded")));
        d.meaning = {commitment};
        d.pre_sender = {commitment};
        d.self_establishable = {0};
        d.post_sender = {know(self, know(other, commitment))};
        d.post_receiver = {know(other, commitment)};
        d.completion = d.post_receiver;
        d.completion_at_receiver = true;
        d.starter_allowed = true;
        d.responder_kinds = {"ask-if", "sorry", "error"};
        add(std::move(d));
    }
    {
        SemanticDescriptor d;
        d.name = "ask-if";
        d.gloss = "The sender wants to know what the receiver believes about the truth of the "
                  "content.";
        d.meaning = {want(self, know(self, var("S")))};
        d.pre_sender = {want(self, know(self, var("S"))),
                        know(self, intend(other, proc(other, placeholder("?self"))))};
        d.self_establishable = {0};
        d.pre_receiver = {intend(other, proc(other, placeholder("?self")))};
        d.post_sender = {intend(self, know(self, var("S")))};
        d.post_receiver = {know(other, want(self, know(self, var("S"))))};
        d.completion = {know(self, var("S"))};
        d.s_role = SRole::Receiver;
        d.responder_kinds = {"tell", "sorry", "error"};
        add(std::move(d));
    }
    {
        SemanticDescriptor d;
        d.name = "tell";
        d.gloss = "The sender states that it believes the content to be true.";
        d.meaning = {bel(self, "?content")};
        d.pre_sender = {bel(self, "?content"), know(self, want(other, know(other, var("S"))))};
        d.pre_receiver = {intend(other, know(other, var("S")))};
        d.post_sender = {know(self, know(other, bel(self, "?content")))};
        d.post_receiver = {know(other, bel(self, "?content"))};
        d.completion = {know(other, bel(self, "?content"))};
        d.completion_at_receiver = true;
        d.s_role = SRole::Sender;
        add(std::move(d));
    }
    auto make_problem = [&](const char* name, const char* gloss) {
        SemanticDescriptor d;
        d.name = name;
        d.gloss = gloss;
        d.meaning = {proc(self, placeholder("?reply-target"))};
        d.pre_sender = {proc(self, placeholder("?reply-target"))};
        d.pre_receiver = {sendmsg(other, self, placeholder("?reply-target"))};
        d.post_sender = {know(self, know(other, proc(self, placeholder("?reply-target"))))};
        d.post_receiver = {know(other, proc(self, placeholder("?reply-target")))};
        d.completion = {know(other, proc(self, placeholder("?reply-target")))};
        d.completion_at_receiver = true;
        d.suppresses_reply_post = true;
        return d;
    };
    add(make_problem("sorry",
                     "The sender processed the referenced message but has no (further) response "
                     "to offer; its postconditions are withdrawn."));
    add(make_problem("error",
                     "The sender could not process the referenced message; mirrors sorry, with an "
                     "optional free-text reason as content."));
    {
        SemanticDescriptor d;
        d.name = "broker-one";
        d.gloss = "The sender asks a facilitator to relay the embedded directive to one capable "
                  "agent and to forward back a single response, with that agent's identity "
                  "withheld.";
        d.meaning = {want(self, sendmsg(other, kBlankAgent, placeholder("?relay")))};
        d.pre_sender = {want(self, sendmsg(other, kBlankAgent, placeholder("?relay")))};
        d.self_establishable = {0};
        d.requires_facilitator_receiver = true;
        d.post_sender = {know(self, sendmsg(other, kBlankAgent, placeholder("?relay"))),
                         intend(self, know(self, var("S")))};
        d.completion = {sendmsg(other, self, placeholder("?forward-completion"))};
        d.completion_at_receiver = true;
        d.s_role = SRole::AnonThird;
        d.starter_allowed = true;
        d.responder_kinds = {"forward", "sorry", "error"};
        add(std::move(d));
    }
    {
        SemanticDescriptor d;
        d.name = "forward";
        d.gloss = "Pure delivery: carries another message toward its destination; the embedded "
                  "message speaks for itself.";
        d.delivery_only = true;
        add(std::move(d));
    }
    if (enable_proactive) {
        SemanticDescriptor d = table_.at("tell");
        d.name = "proactive-tell";
        d.gloss = "Unsolicited tell: the sender only needs to believe the content.";
        d.pre_sender = {bel(self, "?content")};
        d.pre_receiver = {};
        d.self_establishable = {};
        d.starter_allowed = true;
        add(std::move(d));

        SemanticDescriptor q = table_.at("ask-if");
        q.name = "proactive-ask-if";
        q.gloss = "Direct query: the sender only needs to want the answer.";
        q.pre_sender = {want(self, know(self, var("S")))};
        q.self_establishable = {0};
        q.pre_receiver = {};
        q.starter_allowed = true;
        add(std::move(q));
    }
}

const SemanticDescriptor& SemanticsEngine::descriptor(const std::string& name) const {
    auto it = table_.find(name);
    if (it == table_.end()) throw UnknownPerformativeName("no descriptor for '" + name + "'");
    return it->second;
}

namespace {

std::optional<Violation> check_conjuncts(const AgentState& state, const KqmlMessage& msg,
                                         const SemanticDescriptor& d,
                                         const std::vector<StateExpr>& conjuncts,
                                         Violation::Which which, const ContentProver& prover) {
    Ctx base{msg};
    base.reply_target =
        msg.in_reply_to ? find_reply_target(state, *msg.in_reply_to) : std::nullopt;
    std::optional<Violation> first_failure;
    for (const auto& s : s_alternatives(d, base, nullptr)) {
        Ctx ctx = base;
        ctx.s = s;
        bool all_ok = true;
        for (const auto& tmpl : conjuncts) {
            StateExpr inst = instantiate(tmpl, ctx);
            if (!holds(state, inst, prover)) {
                all_ok = false;
                if (!first_failure)
                    first_failure = Violation{which, inst, msg,
                                              "unmet condition for " + d.name + " at " + state.name};
                break;
            }
        }
        if (all_ok) return std::nullopt;
    }
    return first_failure;
}

// Picks the S alternative under which the given precondition list holds,
// falling back to the first alternative (lenient application).
std::optional<StateExpr> choose_s(const AgentState& state, const KqmlMessage& msg,
                                  const SemanticDescriptor& d,
                                  const std::vector<StateExpr>& conjuncts,
                                  const ContentProver& prover, AgentState* minter) {
    Ctx base{msg};
    base.reply_target =
        msg.in_reply_to ? find_reply_target(state, *msg.in_reply_to) : std::nullopt;
    auto alts = s_alternatives(d, base, minter);
    for (const auto& s : alts) {
        Ctx ctx = base;
        ctx.s = s;
        bool all_ok = true;
        for (const auto& tmpl : conjuncts)
            if (!holds(state, instantiate(tmpl, ctx), prover)) {
                all_ok = false;
                break;
            }
        if (all_ok) return s;
    }
    return alts.front();
}

}  // namespace

std::optional<Violation> SemanticsEngine::check_send(const AgentState& sender,
                                                     const KqmlMessage& msg,
                                                     const ContentProver* prover) const {
    const auto& d = descriptor(msg.performative);
    return check_conjuncts(sender, msg, d, d.pre_sender, Violation::Which::PreSender,
                           prover_or_default(prover));
}

std::optional<Violation> SemanticsEngine::check_receive(const AgentState& receiver,
                                                        const KqmlMessage& msg,
                                                        const ContentProver* prover) const {
    const auto& d = descriptor(msg.performative);
    if (d.requires_facilitator_receiver && !receiver.facilitator)
        return Violation{Violation::Which::PreReceiver, var("facilitator-status"), msg,
                         "receiver " + receiver.name + " is not a facilitator"};
    return check_conjuncts(receiver, msg, d, d.pre_receiver, Violation::Which::PreReceiver,
                           prover_or_default(prover));
}

namespace {

// Withdraw the attitude entries that the exchange identified by `id`
// asserted, restricted to shapes drawn from that message's postcondition
// templates. Entries established by other exchanges keep their other tags.
void suppress_exchange(AgentState& state, const SemanticsEngine& engine, const KqmlMessage& target) {
    const auto& d_m = engine.descriptor(target.performative);
    Ctx ctx{target};
    ctx.s = var("S");  // wildcard: any instantiation of S
    std::string tag = message_tag(target);
    for (const auto* templates : {&d_m.post_sender, &d_m.post_receiver})
        for (const auto& tmpl : *templates)
            retract_tag_matching(state, tag, instantiate(tmpl, ctx));
}

}  // namespace

void SemanticsEngine::apply_send(AgentState& sender, const KqmlMessage& msg,
                                 const ContentProver* prover) const {
    const auto& d = descriptor(msg.performative);
    const std::string tag = message_tag(msg);
    if (d.suppresses_reply_post) {
        if (!msg.in_reply_to)
            throw UnknownReplyTarget(d.name + " without :in-reply-to");
        auto target = find_reply_target(sender, *msg.in_reply_to);
        if (!target)
            throw UnknownReplyTarget("no message with :reply-with " + *msg.in_reply_to +
                                     " in " + sender.name + "'s log");
        suppress_exchange(sender, *this, *target);
    }
    Ctx ctx{msg};
    ctx.reply_target = msg.in_reply_to ? find_reply_target(sender, *msg.in_reply_to) : std::nullopt;
    ctx.s = choose_s(sender, msg, d, d.pre_sender, prover_or_default(prover), &sender);
    for (const auto& tmpl : d.post_sender)
        assert_expr(sender, instantiate(tmpl, ctx), tag);
    sender.action_log.push_back({ActionRecord::Kind::SendMsg, sender.name,
                                 msg.receiver.value_or(kBlankAgent), msg, tag});
}

void SemanticsEngine::apply_receive(AgentState& receiver, const KqmlMessage& msg,
                                    const ContentProver* prover) const {
    const auto& d = descriptor(msg.performative);
    const std::string tag = message_tag(msg);
    receiver.action_log.push_back({ActionRecord::Kind::Proc, receiver.name, {}, msg, tag});
    if (d.suppresses_reply_post) {
        if (!msg.in_reply_to)
            throw UnknownReplyTarget(d.name + " without :in-reply-to");
        auto target = find_reply_target(receiver, *msg.in_reply_to);
        if (!target)
            throw UnknownReplyTarget("no message with :reply-with " + *msg.in_reply_to +
                                     " in " + receiver.name + "'s log");
        suppress_exchange(receiver, *this, *target);
    }
    if (d.delivery_only) {
        if (msg.content.nested) apply_receive(receiver, *msg.content.nested, prover);
        return;
    }
    Ctx ctx{msg};
    ctx.reply_target =
        msg.in_reply_to ? find_reply_target(receiver, *msg.in_reply_to) : std::nullopt;
    ctx.s = choose_s(receiver, msg, d, d.pre_receiver, prover_or_default(prover), &receiver);
    ctx.minter = &receiver;
    for (const auto& tmpl : d.post_receiver)
        assert_expr(receiver, instantiate(tmpl, ctx), tag);

    // A query's intention to know is discharged once an answer arrives.
    if ((msg.performative == "tell" || msg.performative == "proactive-tell") && msg.in_reply_to) {
        for (const auto& rec : receiver.action_log) {
            if (rec.kind != ActionRecord::Kind::SendMsg) continue;
            if (!rec.msg.reply_with || *rec.msg.reply_with != *msg.in_reply_to) continue;
            const std::string& p = rec.msg.performative;
            if (p == "ask-if" || p == "proactive-ask-if" || p == "broker-one")
                retract_tag_matching(receiver, message_tag(rec.msg),
                                     intend(receiver.name, know(receiver.name, var("S"))));
        }
    }
}

void SemanticsEngine::establish_sender_prerequisites(AgentState& sender,
                                                     const KqmlMessage& msg) const {
    const auto& d = descriptor(msg.performative);
    if (d.self_establishable.empty()) return;
    Ctx ctx{msg};
    auto alts = s_alternatives(d, ctx, nullptr);
    ctx.s = alts.front();
    for (std::size_t idx : d.self_establishable)
        assert_expr(sender, instantiate(d.pre_sender[idx], ctx), message_tag(msg));
}

bool SemanticsEngine::completion_met(const AgentState& sender_state,
                                     const AgentState& receiver_state, const KqmlMessage& head,
                                     const ContentProver* prover) const {
    const auto& d = descriptor(head.performative);
    const AgentState& eval = d.completion_at_receiver ? receiver_state : sender_state;
    if (d.completion.empty()) return true;
    Ctx base{head};
    base.reply_target =
        head.in_reply_to ? find_reply_target(eval, *head.in_reply_to) : std::nullopt;
    for (const auto& s : s_alternatives(d, base, nullptr)) {
        Ctx ctx = base;
        ctx.s = s;
        bool all_ok = true;
        for (const auto& tmpl : d.completion)
            if (!holds(eval, instantiate(tmpl, ctx), prover_or_default(prover))) {
                all_ok = false;
                break;
            }
        if (all_ok) return true;
    }
    return false;
}

namespace {

void emit_templates(std::ostringstream& out, const char* label,
                    const std::vector<StateExpr>& templates, bool suppression_note = false) {
    out << "  " << label << ": ";
    if (templates.empty() && !suppression_note) {
        out << "NONE\n";
        return;
    }
    for (std::size_t i = 0; i < templates.size(); ++i) {
        if (i) out << " and ";
        out << to_string(templates[i]);
    }
    if (suppression_note) {
        if (!templates.empty()) out << " and ";
        out << "not(Post of the referenced message)";
    }
    out << '\n';
}

}  // namespace

std::string SemanticsEngine::explain(const std::string& name) const {
    const auto& d = descriptor(name);
    std::ostringstream out;
    out << d.name << '\n';
    out << "  description: " << d.gloss << '\n';
    emit_templates(out, "meaning", d.meaning);
    emit_templates(out, "Pre(A)", d.pre_sender);
    if (d.requires_facilitator_receiver)
        out << "  Pre(B): receiver must be a facilitator\n";
    else
        emit_templates(out, "Pre(B)", d.pre_receiver);
    emit_templates(out, "Post(A)", d.post_sender, d.suppresses_reply_post);
    emit_templates(out, "Post(B)", d.post_receiver, d.suppresses_reply_post);
    emit_templates(out, "Completion", d.completion);
    out << "  may start a conversation: " << (d.starter_allowed ? "yes" : "no") << '\n';
    if (!d.responder_kinds.empty()) {
        out << "  responses:";
        for (const auto& r : d.responder_kinds) out << ' ' << r;
        out << '\n';
    }
    return out.str();
}

std::string SemanticsEngine::dump_table() const {
    std::ostringstream out;
    for (const auto& [name, d] : table_) out << explain(name) << '\n';
    return out.str();
}

}  // namespace kqml
