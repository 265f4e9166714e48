#include <doctest.h>

#include "kqml/semantics.hpp"

using namespace kqml;

namespace {

KqmlMessage msg(const std::string& text) { return parse_message(text); }

const char* kAdv =
    "(advertise :sender A :receiver B :reply-with id1 "
    ":content (ask-if :sender B :receiver A :in-reply-to id1 :content \"p(x)\"))";
const char* kAsk =
    "(ask-if :sender B :receiver A :in-reply-to id1 :reply-with id2 :content \"p(x)\")";
const char* kTell =
    "(tell :sender A :receiver B :in-reply-to id2 :reply-with id3 :content \"p(x)\")";

// Drive one message across: sender-side resolve, checks, postconditions.
void play(const SemanticsEngine& eng, AgentState& s, AgentState& r, const KqmlMessage& m) {
    eng.establish_sender_prerequisites(s, m);
    auto vs = eng.check_send(s, m);
    if (vs) FAIL("unexpected send violation: ", vs->detail, " ", to_string(vs->unmet));
    eng.apply_send(s, m);
    auto vr = eng.check_receive(r, m);
    if (vr) FAIL("unexpected receive violation: ", vr->detail, " ", to_string(vr->unmet));
    eng.apply_receive(r, m);
}

struct Pair {
    AgentState a, b;
    Pair() {
        a.name = "A";
        b.name = "B";
    }
};

}  // namespace

TEST_CASE("descriptor table: base entries always, proactive entries gated") {
    SemanticsEngine base(false);
    for (const char* n : {"advertise", "ask-if", "tell", "sorry", "error", "broker-one", "forward"})
        CHECK(base.has_descriptor(n));
    CHECK_FALSE(base.has_descriptor("proactive-tell"));
    CHECK_THROWS_AS(base.descriptor("proactive-tell"), UnknownPerformativeName);
    SemanticsEngine pro(true);
    CHECK(pro.has_descriptor("proactive-tell"));
    CHECK(pro.has_descriptor("proactive-ask-if"));
}

TEST_CASE("explain renders the six-part description") {
    SemanticsEngine eng;
    std::string t = eng.explain("ask-if");
    for (const char* part :
         {"description:", "meaning:", "Pre(A):", "Pre(B):", "Post(A):", "Post(B):", "Completion:"})
        CHECK(t.find(part) != std::string::npos);
    CHECK(t.find("WANT(?sender,KNOW(?sender,?S))") != std::string::npos);
    // sorry documents the withdrawal of the referenced message's effects.
    CHECK(eng.explain("sorry").find("not(Post of the referenced message)") != std::string::npos);
    CHECK(eng.dump_table().find("broker-one") != std::string::npos);
}

TEST_CASE("advertise establishes the offer on both sides") {
    SemanticsEngine eng;
    Pair p;
    KqmlMessage adv = msg(kAdv);
    play(eng, p.a, p.b, adv);
    // Post(B): the receiver knows the sender's commitment.
    CHECK(holds(p.b, parse_state_expr(
                         "KNOW(B,INT(A,PROC(A,(ask-if :sender B :receiver A :content \"p(x)\"))))")));
    // Post(A): the sender knows the receiver knows.
    CHECK(holds(p.a,
                parse_state_expr("KNOW(A,KNOW(B,INT(A,PROC(A,(ask-if :sender B :receiver A "
                                 ":content \"p(x)\")))))")));
    // Completion is a subset of the postconditions: met immediately.
    CHECK(eng.completion_met(p.a, p.b, adv));
}

TEST_CASE("the advertise/ask-if/tell chain threads preconditions and postconditions") {
    SemanticsEngine eng;
    Pair p;
    p.a.belief_base.insert("p(x)");
    KqmlMessage adv = msg(kAdv), ask = msg(kAsk), tell = msg(kTell);

    // Cold start: neither ask-if nor tell can be justified yet.
    CHECK(eng.check_send(p.b, ask).has_value());
    CHECK(eng.check_send(p.a, tell).has_value());

    play(eng, p.a, p.b, adv);
    CHECK_FALSE(eng.completion_met(p.b, p.a, ask));

    play(eng, p.b, p.a, ask);
    CHECK(holds(p.b, parse_state_expr("INT(B,KNOW(B,BEL(A,\"p(x)\")))")));
    CHECK(holds(p.a, parse_state_expr("KNOW(A,WANT(B,KNOW(B,BEL(A,\"p(x)\"))))")));
    // The question alone does not complete the query.
    CHECK_FALSE(eng.completion_met(p.b, p.a, ask));
    CHECK_FALSE(eng.completion_met(p.a, p.b, tell));

    play(eng, p.a, p.b, tell);
    CHECK(holds(p.b, parse_state_expr("KNOW(B,BEL(A,\"p(x)\"))")));
    CHECK(holds(p.a, parse_state_expr("KNOW(A,KNOW(B,BEL(A,\"p(x)\")))")));
    CHECK(eng.completion_met(p.b, p.a, ask));   // answer arrived: KNOW(B,S)
    CHECK(eng.completion_met(p.a, p.b, tell));  // tell completes on receipt
    // The answered query's intention to know is discharged.
    CHECK_FALSE(holds(p.b, parse_state_expr("INT(B,KNOW(B,BEL(A,\"p(x)\")))")));
}

TEST_CASE("tell requires the sender to actually believe the content") {
    SemanticsEngine eng;
    Pair p;
    play(eng, p.a, p.b, msg(kAdv));
    play(eng, p.b, p.a, msg(kAsk));
    auto v = eng.check_send(p.a, msg(kTell));  // belief base does NOT contain p(x)
    REQUIRE(v.has_value());
    CHECK(v->which == Violation::Which::PreSender);
    CHECK(to_string(v->unmet) == "BEL(A,\"p(x)\")");
}

TEST_CASE("broker-one must be addressed to a facilitator") {
    SemanticsEngine eng;
    Pair p;  // b is not a facilitator
    KqmlMessage brk = msg(
        "(broker-one :sender A :receiver B :reply-with b1 "
        ":content (ask-if :sender B :in-reply-to b1 :content \"p(x)\"))");
    auto v = eng.check_receive(p.b, brk);
    REQUIRE(v.has_value());
    CHECK(v->which == Violation::Which::PreReceiver);
    CHECK(v->detail.find("not a facilitator") != std::string::npos);
    p.b.facilitator = true;
    CHECK_FALSE(eng.check_receive(p.b, brk).has_value());
}

TEST_CASE("broker-one posts an anonymous expectation; forwarding completes it") {
    SemanticsEngine eng;
    AgentState a, f;
    a.name = "A";
    f.name = "F";
    f.facilitator = true;
    KqmlMessage brk = msg(
        "(broker-one :sender A :receiver F :reply-with b1 "
        ":content (ask-if :sender F :in-reply-to b1 :content \"p(x)\"))");
    play(eng, a, f, brk);
    CHECK(holds(a, parse_state_expr(
                       "KNOW(A,SENDMSG(F,_,(ask-if :sender F :content \"p(x)\")))")));
    CHECK(holds(a, parse_state_expr("INT(A,KNOW(A,BEL(@a9,\"p(x)\")))")));  // anon matches anon
    CHECK_FALSE(holds(a, parse_state_expr("INT(A,KNOW(A,BEL(F,\"p(x)\")))")));
    CHECK_FALSE(eng.completion_met(a, f, brk));

    KqmlMessage fwd = msg(
        "(forward :sender F :receiver A :to A :in-reply-to b1 "
        ":content (tell :receiver A :in-reply-to b1 :content \"p(x)\"))");
    eng.apply_send(f, fwd);
    CHECK(eng.completion_met(a, f, brk));

    // The requester learns the answer attributed to a minted anonym only.
    eng.apply_receive(a, fwd);
    CHECK(holds(a, parse_state_expr("KNOW(A,BEL(@a1,\"p(x)\"))")));
    CHECK(dump_state(a).find("BEL(F,") == std::string::npos);
}

TEST_CASE("sorry withdraws exactly the referenced exchange's postconditions") {
    SemanticsEngine eng;
    Pair p;
    p.a.belief_base.insert("p(x)");
    // Exchange 1 completes and establishes KNOW(B,BEL(A,p(x))).
    play(eng, p.a, p.b, msg(kAdv));
    play(eng, p.b, p.a, msg(kAsk));
    play(eng, p.a, p.b, msg(kTell));
    // Exchange 2: the same question again (ids id4), declined this time.
    play(eng, p.b, p.a,
         msg("(ask-if :sender B :receiver A :in-reply-to id1 :reply-with id4 :content \"p(x)\")"));
    CHECK(holds(p.b, parse_state_expr("INT(B,KNOW(B,BEL(A,\"p(x)\")))")));
    KqmlMessage srr = msg("(sorry :sender A :receiver B :in-reply-to id4)");
    play(eng, p.a, p.b, srr);
    // The pending intention of exchange 2 is gone...
    CHECK_FALSE(holds(p.b, parse_state_expr("INT(B,KNOW(B,BEL(A,\"p(x)\")))")));
    // ...but exchange 1's established result and the advertise survive.
    CHECK(holds(p.b, parse_state_expr("KNOW(B,BEL(A,\"p(x)\"))")));
    CHECK(holds(p.b, parse_state_expr("KNOW(B,INT(A,PROC(A,(ask-if :content \"p(x)\"))))")));
    // sorry's own postconditions landed.
    CHECK(holds(p.b, parse_state_expr("KNOW(B,PROC(A,(ask-if :reply-with id4 :content \"p(x)\")))")));
    CHECK(holds(p.a, parse_state_expr(
                         "KNOW(A,KNOW(B,PROC(A,(ask-if :reply-with id4 :content \"p(x)\"))))")));
    CHECK(eng.completion_met(p.a, p.b, srr));
    // Applying the same sorry again changes nothing beyond logging its
    // receipt a second time (idempotent withdrawal).
    std::string before = dump_state(p.b);
    eng.apply_receive(p.b, srr);
    std::string after = dump_state(p.b);
    std::string receipt = "PROC(B," + serialize_message(srr) + ")";
    auto pos = after.rfind("\n    " + receipt);
    REQUIRE(pos != std::string::npos);
    after.erase(pos, receipt.size() + 5);
    CHECK(after == before);
}

TEST_CASE("an attitude vouched for by two exchanges survives one sorry") {
    SemanticsEngine eng;
    Pair p;
    play(eng, p.a, p.b, msg(kAdv));
    play(eng, p.b, p.a, msg(kAsk));  // id2
    play(eng, p.b, p.a,
         msg("(ask-if :sender B :receiver A :in-reply-to id1 :reply-with id4 :content \"p(x)\")"));
    play(eng, p.a, p.b, msg("(sorry :sender A :receiver B :in-reply-to id4)"));
    // Exchange id2 still vouches for the intention.
    CHECK(holds(p.b, parse_state_expr("INT(B,KNOW(B,BEL(A,\"p(x)\")))")));
    play(eng, p.a, p.b, msg("(sorry :sender A :receiver B :in-reply-to id2)"));
    CHECK_FALSE(holds(p.b, parse_state_expr("INT(B,KNOW(B,BEL(A,\"p(x)\")))")));
}

TEST_CASE("replay oracle: post-sorry stores equal a replay without the exchange's assertions") {
    SemanticsEngine eng;
    auto scrub = [](const AgentState& st) {
        // Compare attitude stores and beliefs (tags aside).
        std::string out;
        for (const auto& [k, e] : st.attitude_store) out += k + "\n";
        for (const auto& b : st.belief_base) out += b + "\n";
        return out;
    };

    // Real run: advertise, ask, sorry.
    Pair real;
    KqmlMessage adv = msg(kAdv), ask = msg(kAsk);
    KqmlMessage srr = msg("(sorry :sender A :receiver B :in-reply-to id2)");
    play(eng, real.a, real.b, adv);
    play(eng, real.b, real.a, ask);
    play(eng, real.a, real.b, srr);

    // Oracle run: same log, but the sorry'd exchange contributes only its
    // action records and sender-side resolve — no postcondition assertions.
    Pair oracle;
    play(eng, oracle.a, oracle.b, adv);
    eng.establish_sender_prerequisites(oracle.b, ask);
    oracle.b.action_log.push_back(
        {ActionRecord::Kind::SendMsg, "B", "A", ask, message_tag(ask)});
    oracle.a.action_log.push_back({ActionRecord::Kind::Proc, "A", {}, ask, message_tag(ask)});
    play(eng, oracle.a, oracle.b, srr);

    CHECK(scrub(real.a) == scrub(oracle.a));
    CHECK(scrub(real.b) == scrub(oracle.b));
}

TEST_CASE("error mirrors sorry, with an optional free-text reason") {
    SemanticsEngine eng;
    Pair p;
    play(eng, p.a, p.b, msg(kAdv));
    play(eng, p.b, p.a, msg(kAsk));
    play(eng, p.a, p.b,
         msg("(error :sender A :receiver B :in-reply-to id2 :content \"cannot parse p(x)\")"));
    CHECK_FALSE(holds(p.b, parse_state_expr("INT(B,KNOW(B,BEL(A,\"p(x)\")))")));
    CHECK(holds(p.b, parse_state_expr("KNOW(B,PROC(A,(ask-if :reply-with id2 :content \"p(x)\")))")));
}

TEST_CASE("replies to unknown exchanges are rejected") {
    SemanticsEngine eng;
    Pair p;
    CHECK_THROWS_AS(eng.apply_send(p.a, msg("(sorry :sender A :receiver B :in-reply-to zzz)")),
                    UnknownReplyTarget);
    CHECK_THROWS_AS(eng.apply_send(p.a, msg("(sorry :sender A :receiver B)")), UnknownReplyTarget);
}

TEST_CASE("message_tag prefers :reply-with and digests otherwise") {
    KqmlMessage with = msg("(tell :sender A :reply-with id9 :content \"p\")");
    CHECK(message_tag(with) == "id9");
    KqmlMessage without = msg("(tell :sender A :content \"p\")");
    CHECK(message_tag(without) == message_tag(without));
    CHECK(message_tag(without) != message_tag(msg("(tell :sender A :content \"q\")")));
}
