#pragma once

#include <functional>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "kqml/wire.hpp"

namespace kqml {

// Agent slots use "_" for a parameter with no value. A blank slot is
// universally quantified: it matches any concrete name. Tokens starting
// with '@' are anonymous agents minted when an identity was deliberately
// withheld; two anonymous tokens match each other but never a named agent.
inline constexpr const char* kBlankAgent = "_";
inline bool is_anon_agent(const std::string& a) { return !a.empty() && a[0] == '@'; }
bool agent_matches(const std::string& a, const std::string& b);

struct StateExpr;

struct Bel {
    std::string agent;
    std::string proposition;  // content-language text, opaque to us
};
struct Know {
    std::string agent;
    Box<StateExpr> arg;
};
struct Want {
    std::string agent;
    Box<StateExpr> arg;
};
struct Intend {  // INT
    std::string agent;
    Box<StateExpr> arg;
};
struct ProcAct {  // PROC: agent processed message
    std::string agent;
    KqmlMessage msg;
};
struct SendMsgAct {  // SENDMSG
    std::string sender;
    std::string receiver;
    KqmlMessage msg;
};
struct CanProcAct {  // CANPROC: ability to process
    std::string agent;
    KqmlMessage msg;
};
struct AndExpr {
    std::vector<StateExpr> parts;
};
struct OrExpr {
    std::vector<StateExpr> parts;
};
struct NotExpr {
    Box<StateExpr> arg;
};
/// Free variable; only legal inside semantic-descriptor templates.
struct VarExpr {
    std::string name;
};

struct StateExpr {
    std::variant<Bel, Know, Want, Intend, ProcAct, SendMsgAct, CanProcAct, AndExpr, OrExpr,
                 NotExpr, VarExpr>
        node;

    template <typename T>
    const T* as() const {
        return std::get_if<T>(&node);
    }
    template <typename T>
    bool is() const {
        return std::holds_alternative<T>(node);
    }
};

// Convenience constructors.
StateExpr bel(std::string agent, std::string prop);
StateExpr know(std::string agent, StateExpr arg);
StateExpr want(std::string agent, StateExpr arg);
StateExpr intend(std::string agent, StateExpr arg);
StateExpr proc(std::string agent, KqmlMessage msg);
StateExpr sendmsg(std::string sender, std::string receiver, KqmlMessage msg);
StateExpr canproc(std::string agent, KqmlMessage msg);
StateExpr conj(std::vector<StateExpr> parts);
StateExpr disj(std::vector<StateExpr> parts);
StateExpr neg(StateExpr arg);
StateExpr var(std::string name);

/// Deterministic rendering, e.g. KNOW(A,BEL(B,"p")). Round-trips through
/// parse_state_expr.
std::string to_string(const StateExpr& e);

/// Parse the textual expression form (used by scenario scripts and tests).
StateExpr parse_state_expr(const std::string& text);

bool operator==(const StateExpr& a, const StateExpr& b);
inline bool operator!=(const StateExpr& a, const StateExpr& b) { return !(a == b); }

/// Structural match treating blank ("_" / absent) slots on either side as
/// universally quantified and anonymous agents as mutually compatible.
bool expr_matches(const StateExpr& a, const StateExpr& b);
bool message_matches(const KqmlMessage& a, const KqmlMessage& b);

/// One pass over the expression; true iff every nesting restriction holds:
/// BEL only over propositions, WANT/INT only over KNOW or an action,
/// KNOW over state descriptions (BEL, not(BEL), KNOW, WANT, INT, or a
/// past action), no conjunction or disjunction inside KNOW/WANT/INT,
/// no free variables.
bool well_formed(const StateExpr& e);

/// Proves a proposition against a belief base. The default is exact string
/// match; richer content languages plug in here.
class ContentProver {
public:
    virtual ~ContentProver() = default;
    virtual bool proves(const std::set<std::string>& base, const std::string& prop) const = 0;
};

class ExactMatchProver : public ContentProver {
public:
    bool proves(const std::set<std::string>& base, const std::string& prop) const override {
        return base.count(prop) > 0;
    }
};

/// Prover that accepts everything; used by the transcript linter, where
/// belief bases are unobservable.
class AssumeTrueProver : public ContentProver {
public:
    bool proves(const std::set<std::string>&, const std::string&) const override { return true; }
};

struct ProverFailure : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct NotSelfBelief : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct InvalidAssert : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ActionRecord {
    enum class Kind { Proc, SendMsg } kind;
    std::string agent;               // Proc: processor; SendMsg: sender
    std::string peer;                // SendMsg only: receiver
    KqmlMessage msg;
    std::string tag;                 // exchange id that produced the record
};

/// Per-agent store: belief base, held attitude expressions, action log.
/// Every attitude entry carries the set of exchange tags that asserted it,
/// so a later sorry/error can withdraw exactly one exchange's contribution.
struct AgentState {
    std::string name;
    bool facilitator = false;
    std::set<std::string> belief_base;
    std::vector<ActionRecord> action_log;

    struct Entry {
        StateExpr expr;
        std::set<std::string> tags;  // empty set = asserted untagged
        bool untagged = false;
    };
    std::map<std::string, Entry> attitude_store;  // keyed by to_string(expr)

    int anon_counter = 0;
    std::string mint_anon() { return "@a" + std::to_string(++anon_counter); }
};

/// True iff e holds in `state` under negation as failure.
bool holds(const AgentState& state, const StateExpr& e, const ContentProver& prover);
inline bool holds(const AgentState& state, const StateExpr& e) {
    return holds(state, e, ExactMatchProver{});
}

/// Assert e (conjunctions distribute; Bel goes to the belief base and must
/// be about the agent itself; actions go to the log). Idempotent.
void assert_expr(AgentState& state, const StateExpr& e, const std::string& tag = {});

/// Remove e from whichever store holds it.
void retract_expr(AgentState& state, const StateExpr& e);

/// Drop the given exchange tag from every attitude entry; entries whose
/// last tag disappears are removed. Entries also asserted untagged or by
/// another exchange survive.
void retract_tag(AgentState& state, const std::string& tag);

/// Drop entries with this tag that match `shape` (blank slots wild).
void retract_tag_matching(AgentState& state, const std::string& tag, const StateExpr& shape);

/// Deterministic dump (sorted) for golden tests and reports.
std::string dump_state(const AgentState& state);

}  // namespace kqml
