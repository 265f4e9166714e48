#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "kqml/attitudes.hpp"
#include "kqml/wire.hpp"

namespace kqml {

// Descriptor templates are StateExprs over a small variable vocabulary.
// Agent slots may hold "?sender", "?receiver", or "_"; BEL propositions may
// hold "?content" / "?embedded-content"; message arguments of PROC/SENDMSG
// use placeholder performatives "?self", "?embedded", "?relay",
// "?reply-target", "?forward-completion". VarExpr{"S"} marks the
// existential state description; instantiation closes all of them.

/// Six-part semantic description of one performative, as data.
struct SemanticDescriptor {
    std::string name;
    std::string gloss;                    // natural-language description
    std::vector<StateExpr> meaning;       // formalized illocutionary content
    std::vector<StateExpr> pre_sender;    // Pre(A), conjunct list
    std::vector<StateExpr> pre_receiver;  // Pre(B)
    std::vector<StateExpr> post_sender;   // Post(A)
    std::vector<StateExpr> post_receiver; // Post(B)
    std::vector<StateExpr> completion;

    // Indices of pre_sender conjuncts the sender can establish by its own
    // resolve (self-directed WANT/INT); everything else needs prior
    // communication or a provable belief.
    std::vector<std::size_t> self_establishable;

    // Which message party the existential S describes.
    enum class SRole { None, Receiver, Sender, AnonThird } s_role = SRole::None;

    bool completion_at_receiver = false;
    bool suppresses_reply_post = false;     // sorry / error
    bool requires_facilitator_receiver = false;
    bool delivery_only = false;             // forward
    bool starter_allowed = false;
    std::set<std::string> responder_kinds;
};

struct Violation {
    enum class Which { PreSender, PreReceiver } which;
    StateExpr unmet;    // instantiated conjunct that failed
    KqmlMessage msg;
    std::string detail;
};

struct UnknownReplyTarget : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct UnknownPerformativeName : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Exchange tag for assertion bookkeeping: the :reply-with id when present,
/// otherwise a digest of the canonical serialization.
std::string message_tag(const KqmlMessage& msg);

/// Search an agent's action log for the message whose :reply-with equals id.
std::optional<KqmlMessage> find_reply_target(const AgentState& state, const std::string& id);

/// The builtin descriptor table plus checkers and state appliers.
class SemanticsEngine {
public:
    explicit SemanticsEngine(bool enable_proactive = false);

    const std::map<std::string, SemanticDescriptor>& descriptors() const { return table_; }
    const SemanticDescriptor& descriptor(const std::string& name) const;
    bool has_descriptor(const std::string& name) const { return table_.count(name) > 0; }

    /// ok (nullopt) iff the instantiated Pre(A) holds in the sender's state,
    /// trying the S alternatives in their fixed order.
    std::optional<Violation> check_send(const AgentState& sender, const KqmlMessage& msg,
                                        const ContentProver* prover = nullptr) const;
    std::optional<Violation> check_receive(const AgentState& receiver, const KqmlMessage& msg,
                                           const ContentProver* prover = nullptr) const;

    /// Postcondition application. Callers run the corresponding check first
    /// in strict mode; lenient callers may force-apply.
    void apply_send(AgentState& sender, const KqmlMessage& msg,
                    const ContentProver* prover = nullptr) const;
    void apply_receive(AgentState& receiver, const KqmlMessage& msg,
                       const ContentProver* prover = nullptr) const;

    /// Assert the sender's self-establishable Pre(A) conjuncts (the act of
    /// deciding to send manifests the corresponding desire or intention).
    void establish_sender_prerequisites(AgentState& sender, const KqmlMessage& msg) const;

    /// Evaluate the completion template of a conversation's head message.
    bool completion_met(const AgentState& sender_state, const AgentState& receiver_state,
                        const KqmlMessage& head, const ContentProver* prover = nullptr) const;

    /// Six-part text block for one performative. Throws UnknownPerformativeName.
    std::string explain(const std::string& name) const;
    /// Deterministic dump of the whole table.
    std::string dump_table() const;

private:
    std::map<std::string, SemanticDescriptor> table_;
};

}  // namespace kqml
