#include "kqml/policy.hpp"

#include <algorithm>
#include <sstream>

namespace kqml {

bool operator==(const Terminal& a, const Terminal& b) {
    if (a.performative != b.performative || a.sender != b.sender || a.receiver != b.receiver ||
        a.in_reply_to != b.in_reply_to || a.reply_with != b.reply_with || a.io != b.io ||
        a.content != b.content)
        return false;
    if (static_cast<bool>(a.nested) != static_cast<bool>(b.nested)) return false;
    return !a.nested || *a.nested == *b.nested;
}

namespace {

std::string flip(const std::string& io) { return io == "0" ? "1" : "0"; }

std::string blank_as(const std::string& s) { return s.empty() ? "_" : s; }

}  // namespace

Terminal terminal_from_message(const KqmlMessage& msg, const std::string& io) {
    Terminal t;
    t.performative = msg.performative;
    t.sender = msg.sender.value_or("");
    t.receiver = msg.receiver.value_or("");
    t.in_reply_to = msg.in_reply_to.value_or("");
    t.reply_with = msg.reply_with.value_or("");
    t.io = io;
    if (msg.content.opaque) t.content = *msg.content.opaque;
    if (msg.content.nested)
        t.nested = std::make_shared<Terminal>(terminal_from_message(*msg.content.nested, flip(io)));
    return t;
}

std::string to_string(const Terminal& t) {
    std::ostringstream out;
    out << t.performative << '[' << blank_as(t.sender) << "->" << blank_as(t.receiver)
        << " ir=" << blank_as(t.in_reply_to) << " rw=" << blank_as(t.reply_with) << " io=" << t.io;
    if (!t.content.empty()) out << " \"" << t.content << '"';
    if (t.nested) out << ' ' << to_string(*t.nested);
    out << ']';
    return out.str();
}

namespace {

std::string tok_str(const PTok& p) {
    switch (p.kind) {
        case PTok::Kind::Const:
            return blank_as(p.text);
        case PTok::Kind::Var:
            return "?" + p.text;
        default:
            return "*";
    }
}

}  // namespace

std::string to_string(const TerminalPat& p) {
    std::ostringstream out;
    out << tok_str(p.performative) << '[' << tok_str(p.sender) << "->" << tok_str(p.receiver)
        << " ir=" << tok_str(p.in_reply_to) << " rw=" << tok_str(p.reply_with)
        << " io=" << tok_str(p.io) << " content=" << tok_str(p.content);
    if (p.nested) out << ' ' << to_string(*p.nested);
    out << ']';
    return out.str();
}

namespace {

bool tok_admits(const PTok& p, const std::string& field) {
    if (p.kind != PTok::Kind::Const) return true;
    if (field.empty()) return true;  // blank field is universally quantified
    return field == p.text;
}

}  // namespace

bool pattern_admits(const TerminalPat& p, const Terminal& t) {
    if (!tok_admits(p.performative, t.performative) || !tok_admits(p.sender, t.sender) ||
        !tok_admits(p.receiver, t.receiver) || !tok_admits(p.in_reply_to, t.in_reply_to) ||
        !tok_admits(p.reply_with, t.reply_with) || !tok_admits(p.io, t.io) ||
        !tok_admits(p.content, t.content))
        return false;
    if (p.nested) {
        if (!t.nested) return false;
        return pattern_admits(*p.nested, *t.nested);
    }
    return true;
}

// ---- bindings --------------------------------------------------------------

std::string Bindings::resolve(std::string v) const {
    for (auto it = alias.find(v); it != alias.end(); it = alias.find(v)) v = it->second;
    return v;
}

std::optional<std::string> Bindings::lookup(const std::string& var) const {
    auto it = value.find(resolve(var));
    if (it == value.end()) return std::nullopt;
    return it->second;
}

bool Bindings::bind(const std::string& var, const std::string& atom) {
    std::string r = resolve(var);
    auto it = value.find(r);
    if (it != value.end()) return it->second == atom;
    value[r] = atom;
    return true;
}

bool Bindings::link(const std::string& a, const std::string& b) {
    std::string ra = resolve(a), rb = resolve(b);
    if (ra == rb) return true;
    auto va = value.find(ra), vb = value.find(rb);
    if (va != value.end() && vb != value.end()) return va->second == vb->second;
    if (va != value.end()) {
        alias[rb] = ra;
        return true;
    }
    alias[ra] = rb;
    return true;
}

// ---- matching with bindings ------------------------------------------------

namespace {

bool match_tok(const PTok& p, const std::string& field, Bindings& b) {
    switch (p.kind) {
        case PTok::Kind::Any:
            return true;
        case PTok::Kind::Const:
            return field.empty() || field == p.text;
        case PTok::Kind::Var: {
            if (field.empty()) return true;  // blank binds nothing
            auto cur = b.lookup(p.text);
            if (cur) return *cur == field;
            return b.bind(p.text, field);
        }
    }
    return false;
}

bool match_pat(const TerminalPat& p, const Terminal& t, Bindings& b) {
    if (!match_tok(p.performative, t.performative, b) || !match_tok(p.sender, t.sender, b) ||
        !match_tok(p.receiver, t.receiver, b) || !match_tok(p.in_reply_to, t.in_reply_to, b) ||
        !match_tok(p.reply_with, t.reply_with, b) || !match_tok(p.io, t.io, b) ||
        !match_tok(p.content, t.content, b))
        return false;
    if (p.nested) {
        if (!t.nested) return false;
        return match_pat(*p.nested, *t.nested, b);
    }
    return true;
}

PTok resolve_tok(const PTok& p, const Bindings& b) {
    if (p.kind != PTok::Kind::Var) return p;
    auto v = b.lookup(p.text);
    if (v) return PTok::lit(*v);
    return PTok::any();
}

TerminalPat resolve_pat(const TerminalPat& p, const Bindings& b) {
    TerminalPat out;
    out.performative = resolve_tok(p.performative, b);
    out.sender = resolve_tok(p.sender, b);
    out.receiver = resolve_tok(p.receiver, b);
    out.in_reply_to = resolve_tok(p.in_reply_to, b);
    out.reply_with = resolve_tok(p.reply_with, b);
    out.io = resolve_tok(p.io, b);
    out.content = resolve_tok(p.content, b);
    if (p.nested) out.nested = std::make_shared<TerminalPat>(resolve_pat(*p.nested, b));
    return out;
}

// ---- variable renaming for rule instantiation ------------------------------

PTok rename_tok(const PTok& p, const std::string& suffix) {
    if (p.kind != PTok::Kind::Var) return p;
    return PTok::var(p.text + suffix);
}

TerminalPat rename_pat(const TerminalPat& p, const std::string& suffix) {
    TerminalPat out;
    out.performative = rename_tok(p.performative, suffix);
    out.sender = rename_tok(p.sender, suffix);
    out.receiver = rename_tok(p.receiver, suffix);
    out.in_reply_to = rename_tok(p.in_reply_to, suffix);
    out.reply_with = rename_tok(p.reply_with, suffix);
    out.io = rename_tok(p.io, suffix);
    out.content = rename_tok(p.content, suffix);
    if (p.nested) out.nested = std::make_shared<TerminalPat>(rename_pat(*p.nested, suffix));
    return out;
}

BodyElem rename_elem(const BodyElem& e, const std::string& suffix) {
    return std::visit(
        [&](const auto& n) -> BodyElem {
            using T = std::decay_t<decltype(n)>;
            if constexpr (std::is_same_v<T, TermElem>)
                return TermElem{rename_pat(n.pat, suffix)};
            else if constexpr (std::is_same_v<T, CallElem>) {
                CallElem c{n.head, {}};
                for (const auto& a : n.args) c.args.push_back(rename_tok(a, suffix));
                return c;
            } else if constexpr (std::is_same_v<T, MemberGuard>)
                return MemberGuard{n.var + suffix, n.allowed};
            else if constexpr (std::is_same_v<T, FlipGuard>)
                return FlipGuard{n.out_var + suffix, n.in_var + suffix};
            else
                return SubLastGuard{rename_pat(n.pat, suffix)};
        },
        e);
}

}  // namespace

// ---- conversation ----------------------------------------------------------

Conversation::Conversation(const Grammar* grammar) : grammar_(grammar) {
    Branch root;
    root.rest.push_back(CallElem{grammar_->start, {}});
    branches_ = closure({std::move(root)}, nullptr, /*lenient_sub=*/false);
}

std::vector<Conversation::Branch> Conversation::closure(std::vector<Branch> in,
                                                        const Terminal* sub_last,
                                                        bool resolve_sub) const {
    std::vector<Branch> done;
    std::vector<Branch> work = std::move(in);
    int fuel = 100000;
    // Cast away constness only for the rename counter; uniqueness is all
    // that matters.
    int* counter = const_cast<int*>(&rename_counter_);
    while (!work.empty()) {
        if (--fuel <= 0) break;  // malformed (cyclic) grammar: drop the rest
        Branch br = std::move(work.back());
        work.pop_back();
        if (br.rest.empty() || std::holds_alternative<TermElem>(br.rest.front())) {
            done.push_back(std::move(br));
            continue;
        }
        if (std::holds_alternative<SubLastGuard>(br.rest.front())) {
            if (!resolve_sub) {  // barrier: wait for the step that supplies sub_last
                done.push_back(std::move(br));
                continue;
            }
            SubLastGuard g = std::get<SubLastGuard>(br.rest.front());
            br.rest.pop_front();
            if (sub_last && !match_pat(g.pat, *sub_last, br.binds)) continue;  // branch dies
            work.push_back(std::move(br));
            continue;
        }
        if (std::holds_alternative<FlipGuard>(br.rest.front())) {
            FlipGuard g = std::get<FlipGuard>(br.rest.front());
            br.rest.pop_front();
            auto v = br.binds.lookup(g.in_var);
            if (!v || (*v != "0" && *v != "1")) continue;
            if (!br.binds.bind(g.out_var, flip(*v))) continue;
            work.push_back(std::move(br));
            continue;
        }
        if (std::holds_alternative<MemberGuard>(br.rest.front())) {
            MemberGuard g = std::get<MemberGuard>(br.rest.front());
            br.rest.pop_front();
            auto v = br.binds.lookup(g.var);
            if (v) {
                if (std::find(g.allowed.begin(), g.allowed.end(), *v) == g.allowed.end()) continue;
                work.push_back(std::move(br));
            } else {
                for (const auto& a : g.allowed) {  // fan out, one branch per member
                    Branch fan = br;
                    if (fan.binds.bind(g.var, a)) work.push_back(std::move(fan));
                }
            }
            continue;
        }
        // CallElem: expand into each alternative of the callee.
        CallElem call = std::get<CallElem>(br.rest.front());
        br.rest.pop_front();
        auto [lo, hi] = grammar_->rules.equal_range(call.head);
        for (auto it = lo; it != hi; ++it) {
            const GrammarRule& rule = it->second;
            if (rule.params.size() != call.args.size()) continue;
            std::string suffix = "#" + std::to_string(++*counter);
            Branch inst = br;
            bool ok = true;
            for (std::size_t i = 0; i < rule.params.size() && ok; ++i) {
                std::string param = rule.params[i] + suffix;
                const PTok& a = call.args[i];
                switch (a.kind) {
                    case PTok::Kind::Const:
                        ok = inst.binds.bind(param, a.text);
                        break;
                    case PTok::Kind::Var:
                        ok = inst.binds.link(a.text, param);
                        break;
                    case PTok::Kind::Any:
                        break;
                }
            }
            if (!ok) continue;
            for (auto rit = rule.body.rbegin(); rit != rule.body.rend(); ++rit)
                inst.rest.push_front(rename_elem(*rit, suffix));
            work.push_back(std::move(inst));
        }
    }
    return done;
}

Conversation::StepResult Conversation::step(const Terminal& t, const Terminal* sub_last) {
    std::vector<Branch> ready = closure(branches_, sub_last, /*resolve_sub=*/true);
    std::vector<Branch> next;
    for (const Branch& br : ready) {
        if (br.rest.empty()) continue;  // completed derivation cannot consume more
        const TerminalPat& pat = std::get<TermElem>(br.rest.front()).pat;
        Branch adv = br;
        if (!match_pat(pat, t, adv.binds)) continue;
        adv.rest.pop_front();
        for (Branch& b : closure({std::move(adv)}, nullptr, /*resolve_sub=*/false))
            next.push_back(std::move(b));
    }
    if (next.empty()) {
        std::ostringstream why;
        bool any_open = false;
        for (const Branch& br : ready)
            if (!br.rest.empty()) any_open = true;
        if (!any_open)
            why << "conversation already complete; no further message allowed";
        else
            why << "message does not fit the conversation policy";
        why << ": got " << to_string(t);
        return {false, why.str()};
    }
    branches_ = std::move(next);
    history_.push_back(t);
    for (const Terminal* p = &t; p; p = p->nested.get())
        if (!p->reply_with.empty()) open_ids_.insert(p->reply_with);
    return {true, {}};
}

bool Conversation::complete() const {
    for (const Branch& br : closure(branches_, nullptr, /*resolve_sub=*/true))
        if (br.rest.empty()) return true;
    return false;
}

std::vector<TerminalPat> Conversation::expected_next() const {
    std::vector<TerminalPat> out;
    std::vector<std::string> seen;
    for (const Branch& br : closure(branches_, nullptr, /*resolve_sub=*/true)) {
        if (br.rest.empty()) continue;
        TerminalPat p = resolve_pat(std::get<TermElem>(br.rest.front()).pat, br.binds);
        std::string key = to_string(p);
        if (std::find(seen.begin(), seen.end(), key) == seen.end()) {
            seen.push_back(key);
            out.push_back(std::move(p));
        }
    }
    return out;
}

bool accepts(const Grammar& g, const std::vector<Terminal>& seq) {
    Conversation c(&g);
    for (const Terminal& t : seq)
        if (!c.step(t).ok) return false;
    return true;
}

// ---- builtin grammar -------------------------------------------------------

namespace {

PTok V(const char* n) { return PTok::var(n); }
PTok L(const char* s) { return PTok::lit(s); }
PTok A() { return PTok::any(); }

TerminalPat tp(PTok perf, PTok s, PTok r, PTok ir, PTok rw, PTok io, PTok c,
               std::shared_ptr<const TerminalPat> nested = nullptr) {
    TerminalPat p;
    p.performative = std::move(perf);
    p.sender = std::move(s);
    p.receiver = std::move(r);
    p.in_reply_to = std::move(ir);
    p.reply_with = std::move(rw);
    p.io = std::move(io);
    p.content = std::move(c);
    p.nested = std::move(nested);
    return p;
}

std::shared_ptr<const TerminalPat> nest(TerminalPat p) {
    return std::make_shared<TerminalPat>(std::move(p));
}

}  // namespace

Grammar builtin_grammar(bool enable_proactive) {
    Grammar g;
    auto add = [&](GrammarRule r) { g.rules.emplace(r.head, std::move(r)); };

    std::vector<std::string> starters = {"advertise", "broker-one"};
    if (enable_proactive) {
        starters.push_back("proactive-tell");
        starters.push_back("proactive-ask-if");
    }

    // A conversation opens with a performative allowed to stand on its own.
    add({"start",
         {},
         {MemberGuard{"P", starters},
          CallElem{"s", {V("P"), V("S"), V("R"), V("IR"), V("Rw"), L("0"), V("C")}}}});

    // Query: the question, then one answer or a refusal.
    {
        std::vector<std::string> kinds = {"ask-if"};
        if (enable_proactive) kinds.push_back("proactive-ask-if");
        add({"s",
             {"P", "S", "R", "IR", "Rw", "IO", "C"},
             {MemberGuard{"P", kinds},
              TermElem{tp(V("P"), V("S"), V("R"), V("IR"), V("Rw"), V("IO"), V("C"))},
              FlipGuard{"IO2", "IO"},
              CallElem{"r", {V("S"), V("R"), V("Rw"), V("IO2"), V("C")}}}});
    }
    add({"r",
         {"Asker", "Responder", "Q", "IO", "C"},
         {TermElem{tp(L("tell"), V("Responder"), V("Asker"), V("Q"), A(), V("IO"), V("C"))}}});
    add({"r",
         {"Asker", "Responder", "Q", "IO", "C"},
         {CallElem{"problem", {V("Responder"), V("Asker"), V("Q"), V("IO")}}}});

    add({"problem",
         {"From", "To", "Ref", "IO"},
         {TermElem{tp(L("sorry"), V("From"), V("To"), V("Ref"), A(), V("IO"), A())}}});
    add({"problem",
         {"From", "To", "Ref", "IO"},
         {TermElem{tp(L("error"), V("From"), V("To"), V("Ref"), A(), V("IO"), A())}}});

    // Advertise: the offer embeds the query template with the parties
    // swapped; the advertisee may then pose exactly that query, or decline.
    add({"s",
         {"P", "S", "R", "IR", "Rw", "IO", "C"},
         {MemberGuard{"P", {"advertise"}},
          MemberGuard{"P1", {"ask-if"}},
          FlipGuard{"IO2", "IO"},
          TermElem{tp(V("P"), V("S"), V("R"), V("IR"), V("Rw"), V("IO"), A(),
                      nest(tp(V("P1"), V("R"), V("S"), V("Rw"), V("Rw1"), V("IO2"), V("C1"))))},
          CallElem{"c_adv", {V("P1"), V("R"), V("S"), V("Rw"), V("IO2"), V("C1")}}}});
    add({"c_adv",
         {"P1", "Dee", "Der", "RwAdv", "IOa", "C1"},
         {CallElem{"s", {V("P1"), V("Dee"), V("Der"), V("RwAdv"), V("RwQ"), V("IOa"), V("C1")}}}});
    add({"c_adv",
         {"P1", "Dee", "Der", "RwAdv", "IOa", "C1"},
         {CallElem{"problem", {V("Dee"), V("Der"), V("RwAdv"), V("IOa")}}}});

    // Brokering: the request embeds the directive the facilitator is to
    // relay; it resolves with a forward of the (anonymized) answer, or a
    // refusal. The relayed sub-dialogue runs as its own conversation; its
    // last terminal is consulted when visible.
    add({"s",
         {"P", "S", "R", "IR", "Rw", "IO", "C"},
         {MemberGuard{"P", {"broker-one"}},
          MemberGuard{"P1", {"ask-if"}},
          FlipGuard{"IO2", "IO"},
          TermElem{tp(V("P"), V("S"), V("R"), V("IR"), V("Rw"), V("IO"), A(),
                      nest(tp(V("P1"), V("R"), A(), V("Rw"), V("Rw1"), V("IO2"), V("C1"))))},
          CallElem{"c_brk_one", {V("S"), V("R"), V("Rw"), V("IO"), V("C1")}}}});
    add({"c_brk_one",
         {"Req", "Fac", "RwBrk", "IO", "C1"},
         {FlipGuard{"IOf", "IO"},
          CallElem{"problem", {V("Fac"), V("Req"), V("RwBrk"), V("IOf")}}}});
    add({"c_brk_one",
         {"Req", "Fac", "RwBrk", "IO", "C1"},
         {FlipGuard{"IOf", "IO"},
          FlipGuard{"IOn", "IOf"},
          SubLastGuard{tp(V("P2"), A(), V("Fac"), A(), A(), A(), V("C2"))},
          MemberGuard{"P2", {"tell"}},
          TermElem{tp(L("forward"), V("Fac"), V("Req"), V("RwBrk"), A(), V("IOf"), A(),
                      nest(tp(V("P2"), L(""), V("Req"), V("RwBrk"), A(), V("IOn"), V("C2"))))}}});

    if (enable_proactive) {
        // Unsolicited statement: a one-message conversation.
        add({"s",
             {"P", "S", "R", "IR", "Rw", "IO", "C"},
             {MemberGuard{"P", {"proactive-tell"}},
              TermElem{tp(V("P"), V("S"), V("R"), V("IR"), V("Rw"), V("IO"), V("C"))}}});
    }
    return g;
}

// ---- tracker ---------------------------------------------------------------

const Conversation* ConversationTracker::find(const std::string& id) const {
    auto it = convs_.find(id);
    return it == convs_.end() ? nullptr : &it->second;
}

const Terminal* ConversationTracker::sub_last_for(const std::string& conv_id) const {
    const std::string prefix = conv_id + ".";
    for (const auto& [id, conv] : convs_) {
        if (id == conv_id) continue;
        for (const auto& t : conv.history())
            if (t.reply_with.rfind(prefix, 0) == 0)
                return conv.history().empty() ? nullptr : &conv.history().back();
    }
    return nullptr;
}

ConversationTracker::Outcome ConversationTracker::feed(const KqmlMessage& msg, bool outgoing) {
    Outcome out;
    std::vector<std::string> candidates;
    if (msg.in_reply_to) {
        for (const auto& id : order_) {
            auto it = convs_.find(id);
            if (it != convs_.end() && it->second.open_ids().count(*msg.in_reply_to))
                candidates.push_back(id);
        }
    }
    if (!candidates.empty()) {
        if (candidates.size() > 1)
            out.warnings.push_back("reply id '" + *msg.in_reply_to + "' is open in " +
                                   std::to_string(candidates.size()) +
                                   " conversations; joining the most recent");
        std::string id = candidates.back();  // order_ is most-recently-updated last
        Conversation& conv = convs_.at(id);
        std::string io = (outgoing == opener_outgoing_.at(id)) ? "0" : "1";
        Terminal t = terminal_from_message(msg, io);
        auto res = conv.step(t, sub_last_for(id));
        out.conv_id = id;
        out.ok = res.ok;
        if (!res.ok) {
            out.reason = res.reason;
            out.expected = conv.expected_next();
        } else {
            order_.erase(std::remove(order_.begin(), order_.end(), id), order_.end());
            order_.push_back(id);
        }
        return out;
    }

    // No thread to join: this message must open a conversation.
    out.started = true;
    Conversation conv(&grammar_);
    Terminal t = terminal_from_message(msg, "0");
    auto res = conv.step(t);
    if (!res.ok) {
        out.ok = false;
        out.reason = msg.in_reply_to
                         ? ":in-reply-to '" + *msg.in_reply_to + "' matches no open conversation"
                         : "'" + msg.performative + "' cannot open a conversation";
        out.expected = conv.expected_next();
        return out;
    }
    std::string id = msg.reply_with ? *msg.reply_with : "conv" + std::to_string(++fresh_counter_);
    while (convs_.count(id)) id += "'";
    convs_.emplace(id, std::move(conv));
    opener_outgoing_[id] = outgoing;
    order_.push_back(id);
    out.ok = true;
    out.conv_id = id;
    return out;
}

}  // namespace kqml
