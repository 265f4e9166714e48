#pragma once

#include <deque>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <variant>
#include <vector>

#include "kqml/wire.hpp"

namespace kqml {

// A message flattened into the fields the conversation grammar cares about.
// Blank fields are the empty string. `io` is "0" when the message travels in
// the same direction as the conversation opener, "1" for the other way; the
// io of an embedded message is the flip of its carrier's.
struct Terminal {
    std::string performative;
    std::string sender;
    std::string receiver;
    std::string in_reply_to;
    std::string reply_with;
    std::string io;
    std::string content;  // opaque content text; "" if absent or nested
    std::shared_ptr<const Terminal> nested;
};

bool operator==(const Terminal& a, const Terminal& b);
inline bool operator!=(const Terminal& a, const Terminal& b) { return !(a == b); }
Terminal terminal_from_message(const KqmlMessage& msg, const std::string& io);
std::string to_string(const Terminal& t);

/// Pattern token: a literal, a grammar variable, or don't-care.
struct PTok {
    enum class Kind { Const, Var, Any } kind = Kind::Any;
    std::string text;

    static PTok lit(std::string s) { return {Kind::Const, std::move(s)}; }
    static PTok var(std::string s) { return {Kind::Var, std::move(s)}; }
    static PTok any() { return {}; }
};

struct TerminalPat {
    PTok performative, sender, receiver, in_reply_to, reply_with, io, content;
    std::shared_ptr<const TerminalPat> nested;  // null = don't care
};

/// Render a pattern (with Const/Any tokens) for diagnostics.
std::string to_string(const TerminalPat& p);

/// Match a fully-resolved pattern (no Var tokens carry meaning beyond Any)
/// against a terminal. Blank terminal fields match anything.
bool pattern_admits(const TerminalPat& p, const Terminal& t);

// ---- grammar rules as data -------------------------------------------------

struct TermElem {
    TerminalPat pat;
};
struct CallElem {
    std::string head;
    std::vector<PTok> args;
};
/// Constrains a variable to a finite set; fans the branch out when unbound.
struct MemberGuard {
    std::string var;
    std::vector<std::string> allowed;
};
/// Binds out_var to the opposite direction flag of (bound) in_var.
struct FlipGuard {
    std::string out_var;
    std::string in_var;
};
/// Matches the last terminal of the linked sub-conversation, when the caller
/// can see one; skipped leniently otherwise (variables stay unbound).
struct SubLastGuard {
    TerminalPat pat;
};

using BodyElem = std::variant<TermElem, CallElem, MemberGuard, FlipGuard, SubLastGuard>;

struct GrammarRule {
    std::string head;
    std::vector<std::string> params;
    std::vector<BodyElem> body;
};

struct Grammar {
    std::string start = "start";
    std::multimap<std::string, GrammarRule> rules;
};

/// The builtin conversation policy.
Grammar builtin_grammar(bool enable_proactive = false);

// ---- execution -------------------------------------------------------------

/// Variable store with var-var aliasing.
struct Bindings {
    std::map<std::string, std::string> value;  // representative var -> atom
    std::map<std::string, std::string> alias;  // var -> var

    std::string resolve(std::string v) const;
    std::optional<std::string> lookup(const std::string& var) const;
    bool bind(const std::string& var, const std::string& atom);
    bool link(const std::string& a, const std::string& b);
};

/// One in-flight conversation: a frontier of alternative derivations stepped
/// breadth-wise over the incoming terminal sequence (no backtracking; every
/// consumed prefix is accepted, so acceptance is prefix-closed by
/// construction).
class Conversation {
public:
    explicit Conversation(const Grammar* grammar);

    struct StepResult {
        bool ok;
        std::string reason;  // set when !ok
    };
    /// Consume one terminal. `sub_last` is the last terminal of a linked
    /// sub-conversation, if any (used by SubLastGuard). On failure the
    /// conversation is left unchanged.
    StepResult step(const Terminal& t, const Terminal* sub_last = nullptr);

    bool open() const { return !branches_.empty(); }
    /// True iff some derivation needs no further terminals.
    bool complete() const;

    /// Frontier patterns with bound variables substituted in (unbound -> Any).
    std::vector<TerminalPat> expected_next() const;

    const std::vector<Terminal>& history() const { return history_; }
    /// Ids a reply may reference to join this conversation: every
    /// :reply-with seen so far, embedded messages included.
    const std::set<std::string>& open_ids() const { return open_ids_; }

private:
    struct Branch {
        std::deque<BodyElem> rest;
        Bindings binds;
    };
    const Grammar* grammar_;
    std::vector<Branch> branches_;
    std::vector<Terminal> history_;
    std::set<std::string> open_ids_;
    int rename_counter_ = 0;

    std::vector<Branch> closure(std::vector<Branch> in, const Terminal* sub_last,
                                bool lenient_sub) const;
    friend class ConversationTracker;
};

/// Whole-sequence acceptance (single conversation, terminals pre-built).
bool accepts(const Grammar& g, const std::vector<Terminal>& seq);

/// Demultiplexes one agent's message stream into conversations by reply
/// threading and steps each through the grammar.
class ConversationTracker {
public:
    explicit ConversationTracker(Grammar grammar) : grammar_(std::move(grammar)) {}

    struct Outcome {
        bool ok = false;
        std::string conv_id;
        bool started = false;  // this message opened a new conversation
        std::string reason;    // set when !ok
        std::vector<std::string> warnings;
        std::vector<TerminalPat> expected;  // frontier that rejected, when !ok
    };

    /// Feed one message. `outgoing` is the direction relative to the tracked
    /// agent and determines the io flag within its conversation.
    Outcome feed(const KqmlMessage& msg, bool outgoing);

    const std::map<std::string, Conversation>& conversations() const { return convs_; }
    const Conversation* find(const std::string& id) const;

private:
    Grammar grammar_;
    std::map<std::string, Conversation> convs_;
    // Conversation id -> whether its opener was outgoing (fixes io mapping).
    std::map<std::string, bool> opener_outgoing_;
    std::vector<std::string> order_;  // most-recently-updated last
    int fresh_counter_ = 0;

    const Terminal* sub_last_for(const std::string& conv_id) const;
};

}  // namespace kqml
