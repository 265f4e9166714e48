#include "kqml/attitudes.hpp"

#include <algorithm>
#include <cctype>
#include <sstream>

namespace kqml {

bool agent_matches(const std::string& a, const std::string& b) {
    if (a == b) return true;
    if (a == kBlankAgent || b == kBlankAgent || a.empty() || b.empty()) return true;
    if (is_anon_agent(a) && is_anon_agent(b)) return true;
    return false;
}

StateExpr bel(std::string agent, std::string prop) {
    return {Bel{std::move(agent), std::move(prop)}};
}
StateExpr know(std::string agent, StateExpr arg) {
    return {Know{std::move(agent), Box<StateExpr>(std::move(arg))}};
}
StateExpr want(std::string agent, StateExpr arg) {
    return {Want{std::move(agent), Box<StateExpr>(std::move(arg))}};
}
StateExpr intend(std::string agent, StateExpr arg) {
    return {Intend{std::move(agent), Box<StateExpr>(std::move(arg))}};
}
StateExpr proc(std::string agent, KqmlMessage msg) {
    return {ProcAct{std::move(agent), std::move(msg)}};
}
StateExpr sendmsg(std::string sender, std::string receiver, KqmlMessage msg) {
    return {SendMsgAct{std::move(sender), std::move(receiver), std::move(msg)}};
}
StateExpr canproc(std::string agent, KqmlMessage msg) {
    return {CanProcAct{std::move(agent), std::move(msg)}};
}
StateExpr conj(std::vector<StateExpr> parts) { return {AndExpr{std::move(parts)}}; }
StateExpr disj(std::vector<StateExpr> parts) { return {OrExpr{std::move(parts)}}; }
StateExpr neg(StateExpr arg) { return {NotExpr{Box<StateExpr>(std::move(arg))}}; }
StateExpr var(std::string name) { return {VarExpr{std::move(name)}}; }

namespace {

std::string quote_prop(const std::string& s) {
    std::string out = "\"";
    for (char c : s) {
        if (c == '"' || c == '\\') out += '\\';
        out += c;
    }
    return out + "\"";
}

void list_to_string(std::ostringstream& out, const char* name, const std::vector<StateExpr>& parts) {
    out << name << '(';
    for (std::size_t i = 0; i < parts.size(); ++i) {
        if (i) out << ',';
        out << to_string(parts[i]);
    }
    out << ')';
}

}  // namespace

std::string to_string(const StateExpr& e) {
    std::ostringstream out;
    std::visit(
        [&](const auto& n) {
            using T = std::decay_t<decltype(n)>;
            if constexpr (std::is_same_v<T, Bel>)
                out << "BEL(" << n.agent << ',' << quote_prop(n.proposition) << ')';
            else if constexpr (std::is_same_v<T, Know>)
                out << "KNOW(" << n.agent << ',' << to_string(*n.arg) << ')';
            else if constexpr (std::is_same_v<T, Want>)
                out << "WANT(" << n.agent << ',' << to_string(*n.arg) << ')';
            else if constexpr (std::is_same_v<T, Intend>)
                out << "INT(" << n.agent << ',' << to_string(*n.arg) << ')';
            else if constexpr (std::is_same_v<T, ProcAct>)
                out << "PROC(" << n.agent << ',' << serialize_message(n.msg) << ')';
            else if constexpr (std::is_same_v<T, SendMsgAct>)
                out << "SENDMSG(" << n.sender << ',' << n.receiver << ','
                    << serialize_message(n.msg) << ')';
            else if constexpr (std::is_same_v<T, CanProcAct>)
                out << "CANPROC(" << n.agent << ',' << serialize_message(n.msg) << ')';
            else if constexpr (std::is_same_v<T, AndExpr>)
                list_to_string(out, "and", n.parts);
            else if constexpr (std::is_same_v<T, OrExpr>)
                list_to_string(out, "or", n.parts);
            else if constexpr (std::is_same_v<T, NotExpr>)
                out << "not(" << to_string(*n.arg) << ')';
            else if constexpr (std::is_same_v<T, VarExpr>)
                out << '?' << n.name;
        },
        e.node);
    return out.str();
}

bool operator==(const StateExpr& a, const StateExpr& b) {
    // Structural; the rendering is injective on the structure.
    return to_string(a) == to_string(b);
}

namespace {

bool opt_matches(const std::optional<std::string>& a, const std::optional<std::string>& b) {
    if (!a || !b) return true;  // absent parameter: universally quantified
    if (*a == "_" || *b == "_") return true;
    return *a == *b;
}

}  // namespace

bool message_matches(const KqmlMessage& a, const KqmlMessage& b) {
    if (a.performative != "_" && b.performative != "_" && a.performative != b.performative)
        return false;
    if (!opt_matches(a.sender, b.sender)) return false;
    if (!opt_matches(a.receiver, b.receiver)) return false;
    if (!opt_matches(a.from, b.from)) return false;
    if (!opt_matches(a.to, b.to)) return false;
    if (!opt_matches(a.in_reply_to, b.in_reply_to)) return false;
    if (!opt_matches(a.reply_with, b.reply_with)) return false;
    // :language/:ontology are carried opaquely and do not bear on identity.
    if (a.content.absent() || b.content.absent()) return true;
    if (a.content.opaque && b.content.opaque)
        return *a.content.opaque == "_" || *b.content.opaque == "_" ||
               *a.content.opaque == *b.content.opaque;
    if (a.content.nested && b.content.nested) return message_matches(*a.content.nested, *b.content.nested);
    return false;
}

bool expr_matches(const StateExpr& a, const StateExpr& b) {
    if (a.is<VarExpr>() || b.is<VarExpr>()) return true;
    if (a.node.index() != b.node.index()) return false;
    return std::visit(
        [&](const auto& x) {
            using T = std::decay_t<decltype(x)>;
            const auto& y = std::get<T>(b.node);
            if constexpr (std::is_same_v<T, Bel>)
                return agent_matches(x.agent, y.agent) &&
                       (x.proposition == "_" || y.proposition == "_" ||
                        x.proposition == y.proposition);
            else if constexpr (std::is_same_v<T, Know> || std::is_same_v<T, Want> ||
                               std::is_same_v<T, Intend>)
                return agent_matches(x.agent, y.agent) && expr_matches(*x.arg, *y.arg);
            else if constexpr (std::is_same_v<T, ProcAct> || std::is_same_v<T, CanProcAct>)
                return agent_matches(x.agent, y.agent) && message_matches(x.msg, y.msg);
            else if constexpr (std::is_same_v<T, SendMsgAct>)
                return agent_matches(x.sender, y.sender) && agent_matches(x.receiver, y.receiver) &&
                       message_matches(x.msg, y.msg);
            else if constexpr (std::is_same_v<T, AndExpr> || std::is_same_v<T, OrExpr>) {
                if (x.parts.size() != y.parts.size()) return false;
                for (std::size_t i = 0; i < x.parts.size(); ++i)
                    if (!expr_matches(x.parts[i], y.parts[i])) return false;
                return true;
            } else if constexpr (std::is_same_v<T, NotExpr>)
                return expr_matches(*x.arg, *y.arg);
            else
                return false;
        },
        a.node);
}

namespace {

bool is_action(const StateExpr& e) {
    return e.is<ProcAct>() || e.is<SendMsgAct>() || e.is<CanProcAct>();
}

// Legal arguments of KNOW: state descriptions — BEL, not(BEL), KNOW, WANT,
// INT, or a past action.
bool know_arg_ok(const StateExpr& e) {
    if (e.is<Bel>() || e.is<Know>() || e.is<Want>() || e.is<Intend>() || is_action(e)) return true;
    if (const auto* n = e.as<NotExpr>()) return n->arg->is<Bel>();
    return false;
}

}  // namespace

bool well_formed(const StateExpr& e) {
    return std::visit(
        [&](const auto& n) {
            using T = std::decay_t<decltype(n)>;
            if constexpr (std::is_same_v<T, Bel>)
                return !n.proposition.empty();
            else if constexpr (std::is_same_v<T, Know>)
                return know_arg_ok(*n.arg) && well_formed(*n.arg);
            else if constexpr (std::is_same_v<T, Want> || std::is_same_v<T, Intend>)
                return (n.arg->template is<Know>() || is_action(*n.arg)) && well_formed(*n.arg);
            else if constexpr (std::is_same_v<T, ProcAct> || std::is_same_v<T, SendMsgAct> ||
                               std::is_same_v<T, CanProcAct>)
                return true;
            else if constexpr (std::is_same_v<T, AndExpr> || std::is_same_v<T, OrExpr>)
                return std::all_of(n.parts.begin(), n.parts.end(),
                                   [](const StateExpr& p) { return well_formed(p); });
            else if constexpr (std::is_same_v<T, NotExpr>)
                return well_formed(*n.arg);
            else  // VarExpr: templates only
                return false;
        },
        e.node);
}

bool holds(const AgentState& state, const StateExpr& e, const ContentProver& prover) {
    return std::visit(
        [&](const auto& n) -> bool {
            using T = std::decay_t<decltype(n)>;
            if constexpr (std::is_same_v<T, Bel>) {
                if (n.agent != state.name) return false;
                try {
                    return prover.proves(state.belief_base, n.proposition);
                } catch (const ProverFailure&) {
                    throw;
                } catch (const std::exception& ex) {
                    throw ProverFailure(ex.what());
                }
            } else if constexpr (std::is_same_v<T, Know> || std::is_same_v<T, Want> ||
                                 std::is_same_v<T, Intend> || std::is_same_v<T, CanProcAct>) {
                for (const auto& [key, entry] : state.attitude_store)
                    if (expr_matches(entry.expr, e)) return true;
                return false;
            } else if constexpr (std::is_same_v<T, ProcAct>) {
                for (const auto& rec : state.action_log)
                    if (rec.kind == ActionRecord::Kind::Proc && agent_matches(rec.agent, n.agent) &&
                        message_matches(rec.msg, n.msg))
                        return true;
                return false;
            } else if constexpr (std::is_same_v<T, SendMsgAct>) {
                for (const auto& rec : state.action_log)
                    if (rec.kind == ActionRecord::Kind::SendMsg &&
                        agent_matches(rec.agent, n.sender) && agent_matches(rec.peer, n.receiver) &&
                        message_matches(rec.msg, n.msg))
                        return true;
                return false;
            } else if constexpr (std::is_same_v<T, AndExpr>) {
                for (const auto& p : n.parts)
                    if (!holds(state, p, prover)) return false;
                return true;
            } else if constexpr (std::is_same_v<T, OrExpr>) {
                for (const auto& p : n.parts)
                    if (holds(state, p, prover)) return true;
                return false;
            } else if constexpr (std::is_same_v<T, NotExpr>) {
                return !holds(state, *n.arg, prover);  // negation as failure
            } else {
                return false;  // VarExpr never holds
            }
        },
        e.node);
}

void assert_expr(AgentState& state, const StateExpr& e, const std::string& tag) {
    if (const auto* a = e.as<AndExpr>()) {
        for (const auto& p : a->parts) assert_expr(state, p, tag);
        return;
    }
    if (const auto* b = e.as<Bel>()) {
        if (b->agent != state.name)
            throw NotSelfBelief("agent " + state.name + " cannot adopt BEL about " + b->agent);
        state.belief_base.insert(b->proposition);
        return;
    }
    if (const auto* p = e.as<ProcAct>()) {
        state.action_log.push_back({ActionRecord::Kind::Proc, p->agent, {}, p->msg, tag});
        return;
    }
    if (const auto* s = e.as<SendMsgAct>()) {
        state.action_log.push_back({ActionRecord::Kind::SendMsg, s->sender, s->receiver, s->msg, tag});
        return;
    }
    if (e.is<Know>() || e.is<Want>() || e.is<Intend>() || e.is<CanProcAct>()) {
        auto& entry = state.attitude_store[to_string(e)];
        entry.expr = e;
        if (tag.empty())
            entry.untagged = true;
        else
            entry.tags.insert(tag);
        return;
    }
    throw InvalidAssert("cannot assert " + to_string(e));
}

void retract_expr(AgentState& state, const StateExpr& e) {
    if (const auto* b = e.as<Bel>()) {
        state.belief_base.erase(b->proposition);
        return;
    }
    state.attitude_store.erase(to_string(e));
}

void retract_tag(AgentState& state, const std::string& tag) {
    for (auto it = state.attitude_store.begin(); it != state.attitude_store.end();) {
        it->second.tags.erase(tag);
        if (it->second.tags.empty() && !it->second.untagged)
            it = state.attitude_store.erase(it);
        else
            ++it;
    }
}

void retract_tag_matching(AgentState& state, const std::string& tag, const StateExpr& shape) {
    for (auto it = state.attitude_store.begin(); it != state.attitude_store.end();) {
        if (expr_matches(it->second.expr, shape)) {
            it->second.tags.erase(tag);
            if (it->second.tags.empty() && !it->second.untagged) {
                it = state.attitude_store.erase(it);
                continue;
            }
        }
        ++it;
    }
}

std::string dump_state(const AgentState& state) {
    std::ostringstream out;
    out << "agent " << state.name << (state.facilitator ? " (facilitator)" : "") << '\n';
    out << "  beliefs:\n";
    for (const auto& p : state.belief_base) out << "    " << p << '\n';
    out << "  attitudes:\n";
    for (const auto& [key, entry] : state.attitude_store) out << "    " << key << '\n';
    out << "  actions:\n";
    for (const auto& rec : state.action_log) {
        if (rec.kind == ActionRecord::Kind::Proc)
            out << "    PROC(" << rec.agent << ',' << serialize_message(rec.msg) << ")\n";
        else
            out << "    SENDMSG(" << rec.agent << ',' << rec.peer << ','
                << serialize_message(rec.msg) << ")\n";
    }
    return out.str();
}

namespace {

class ExprReader {
public:
    explicit ExprReader(const std::string& text) : text_(text) {}

    StateExpr read_top() {
        StateExpr e = read_expr();
        skip_ws();
        if (pos_ != text_.size()) throw std::invalid_argument("trailing text in expression");
        return e;
    }

private:
    const std::string& text_;
    std::size_t pos_ = 0;

    void skip_ws() {
        while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
    }
    char peek() {
        skip_ws();
        return pos_ < text_.size() ? text_[pos_] : '\0';
    }
    void expect(char c) {
        if (peek() != c)
            throw std::invalid_argument(std::string("expected '") + c + "' in expression");
        ++pos_;
    }

    std::string read_name() {
        skip_ws();
        std::size_t start = pos_;
        while (pos_ < text_.size() &&
               (std::isalnum(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '-' ||
                text_[pos_] == '_' || text_[pos_] == '@' || text_[pos_] == '.'))
            ++pos_;
        if (pos_ == start) throw std::invalid_argument("expected name in expression");
        return text_.substr(start, pos_ - start);
    }

    std::string read_quoted() {
        expect('"');
        std::string out;
        while (pos_ < text_.size() && text_[pos_] != '"') {
            if (text_[pos_] == '\\' && pos_ + 1 < text_.size()) ++pos_;
            out += text_[pos_++];
        }
        if (pos_ >= text_.size()) throw std::invalid_argument("unterminated proposition string");
        ++pos_;
        return out;
    }

    std::string read_balanced_parens() {
        skip_ws();
        std::size_t start = pos_;
        int depth = 0;
        bool in_str = false;
        while (pos_ < text_.size()) {
            char c = text_[pos_];
            if (in_str) {
                if (c == '\\')
                    ++pos_;
                else if (c == '"')
                    in_str = false;
            } else if (c == '"')
                in_str = true;
            else if (c == '(')
                ++depth;
            else if (c == ')') {
                --depth;
                if (depth == 0) {
                    ++pos_;
                    return text_.substr(start, pos_ - start);
                }
            }
            ++pos_;
        }
        throw std::invalid_argument("unbalanced parentheses in expression");
    }

    // Messages inside expressions are templates: a missing :content is a
    // wildcard slot, so the content requirement is not enforced here.
    KqmlMessage read_message_arg() { return parse_message_partial(read_balanced_parens()); }

    StateExpr read_expr() {
        if (peek() == '?') {
            ++pos_;
            return var(read_name());
        }
        std::string name = read_name();
        expect('(');
        StateExpr result = [&]() -> StateExpr {
            if (name == "BEL") {
                std::string agent = read_name();
                expect(',');
                skip_ws();
                std::string prop = peek() == '"' ? read_quoted() : read_name();
                return bel(agent, prop);
            }
            if (name == "KNOW" || name == "WANT" || name == "INT") {
                std::string agent = read_name();
                expect(',');
                StateExpr arg = read_expr();
                if (name == "KNOW") return know(agent, std::move(arg));
                if (name == "WANT") return want(agent, std::move(arg));
                return intend(agent, std::move(arg));
            }
            if (name == "PROC" || name == "CANPROC") {
                std::string agent = read_name();
                expect(',');
                KqmlMessage m = read_message_arg();
                return name == "PROC" ? proc(agent, std::move(m)) : canproc(agent, std::move(m));
            }
            if (name == "SENDMSG") {
                std::string s = read_name();
                expect(',');
                std::string r = read_name();
                expect(',');
                return sendmsg(s, r, read_message_arg());
            }
            if (name == "and" || name == "or") {
                std::vector<StateExpr> parts;
                if (peek() != ')') {
                    parts.push_back(read_expr());
                    while (peek() == ',') {
                        ++pos_;
                        parts.push_back(read_expr());
                    }
                }
                return name == "and" ? conj(std::move(parts)) : disj(std::move(parts));
            }
            if (name == "not") return neg(read_expr());
            throw std::invalid_argument("unknown operator '" + name + "'");
        }();
        expect(')');
        return result;
    }
};

}  // namespace

StateExpr parse_state_expr(const std::string& text) { return ExprReader(text).read_top(); }

}  // namespace kqml
