#include <doctest.h>

#include <functional>
#include <random>
#include <set>

#include "kqml/policy.hpp"
#include "policy_oracle.hpp"

using namespace kqml;
using oracle::term;

namespace {

std::vector<Terminal> pick(const std::vector<Terminal>& abc, const std::vector<int>& ix) {
    std::vector<Terminal> out;
    for (int i : ix) out.push_back(abc[i]);
    return out;
}

}  // namespace

TEST_CASE("grammar agrees with the explicit-state oracle on short sequences") {
    Grammar g = builtin_grammar();
    auto abc = oracle::alphabet();
    int checked = 0;
    for (int len = 1; len <= 2; ++len) {  // the full length-3 sweep runs in acceptance
        std::vector<int> ix(len, 0);
        while (true) {
            CHECK(accepts(g, pick(abc, ix)) == oracle::oracle_accepts(ix));
            ++checked;
            int k = len - 1;
            while (k >= 0 && ++ix[k] == 8) ix[k--] = 0;
            if (k < 0) break;
        }
    }
    CHECK(checked == 8 + 64);
    CHECK(accepts(g, {}));  // the empty sequence is a conversation prefix too
}

TEST_CASE("the advertise/ask-if/tell build-up is accepted prefix by prefix") {
    Grammar g = builtin_grammar();
    auto abc = oracle::alphabet();
    CHECK(accepts(g, pick(abc, {0})));
    CHECK(accepts(g, pick(abc, {0, 1})));
    CHECK(accepts(g, pick(abc, {0, 1, 2})));
    CHECK(accepts(g, pick(abc, {0, 1, 3})));  // declining the question is fine too
    CHECK(accepts(g, pick(abc, {0, 4})));     // declining the offer as well
}

TEST_CASE("each single-field perturbation of the build-up is rejected") {
    Grammar g = builtin_grammar();
    auto adv_inner = std::make_shared<Terminal>(term("ask-if", "B", "A", "id1", "", "1", "X"));
    Terminal adv = term("advertise", "A", "B", "", "id1", "0", "", adv_inner);
    Terminal ask = term("ask-if", "B", "A", "id1", "id2", "1", "X");
    Terminal tell = term("tell", "A", "B", "id2", "", "0", "X");

    // 1. ask-if threaded against the wrong id
    CHECK_FALSE(accepts(g, {adv, term("ask-if", "B", "A", "idX", "id2", "1", "X")}));
    // 2. ask-if parties not swapped
    CHECK_FALSE(accepts(g, {adv, term("ask-if", "A", "B", "id1", "id2", "1", "X")}));
    // 3. ask-if content drifts from the advertised template
    CHECK_FALSE(accepts(g, {adv, term("ask-if", "B", "A", "id1", "id2", "1", "Y")}));
    // 4. ask-if direction flag contradicts the flow
    CHECK_FALSE(accepts(g, {adv, term("ask-if", "B", "A", "id1", "id2", "0", "X")}));
    // 5. tell threaded against the advertise instead of the question
    CHECK_FALSE(accepts(g, {adv, ask, term("tell", "A", "B", "id1", "", "0", "X")}));
    // 6. tell content differs from the question
    CHECK_FALSE(accepts(g, {adv, ask, term("tell", "A", "B", "id2", "", "0", "Y")}));
    // 7. tell parties swapped
    CHECK_FALSE(accepts(g, {adv, ask, term("tell", "B", "A", "id2", "", "0", "X")}));
    // 8. tell direction flag wrong
    CHECK_FALSE(accepts(g, {adv, ask, term("tell", "A", "B", "id2", "", "1", "X")}));
    // 9. advertise whose embedded query does not swap the parties
    auto bad_inner = std::make_shared<Terminal>(term("ask-if", "A", "B", "id1", "", "1", "X"));
    CHECK_FALSE(accepts(g, {term("advertise", "A", "B", "", "id1", "0", "", bad_inner)}));
    // The unperturbed chain still passes.
    CHECK(accepts(g, {adv, ask, tell}));
}

TEST_CASE("only the designated performatives may open a conversation") {
    auto inner = std::make_shared<Terminal>(term("ask-if", "B", "A", "id1", "", "1", "X"));
    auto openers = [&](bool proactive) {
        Grammar g = builtin_grammar(proactive);
        std::set<std::string> ok;
        std::vector<std::string> all = {"advertise",  "ask-if",  "tell",
                                        "sorry",      "error",   "broker-one",
                                        "forward",    "proactive-tell", "proactive-ask-if"};
        for (const auto& p : all) {
            Terminal t = term(p, "A", "B", "", "id1", "0", "X");
            if (p == "advertise" || p == "broker-one" || p == "forward") t.nested = inner;
            if (accepts(g, {t})) ok.insert(p);
        }
        return ok;
    };
    CHECK(openers(false) == std::set<std::string>{"advertise", "broker-one"});
    CHECK(openers(true) == std::set<std::string>{"advertise", "broker-one", "proactive-tell",
                                                 "proactive-ask-if"});
}

TEST_CASE("a completed conversation admits no further message") {
    Grammar g = builtin_grammar();
    auto abc = oracle::alphabet();
    Conversation c(&g);
    for (int i : {0, 1, 2}) REQUIRE(c.step(abc[i]).ok);
    CHECK(c.complete());
    for (int i = 0; i < 8; ++i) {
        auto res = c.step(abc[i]);
        CHECK_FALSE(res.ok);
        CHECK(res.reason.find("complete") != std::string::npos);
    }
    CHECK(c.expected_next().empty());
    CHECK(c.history().size() == 3);
}

TEST_CASE("expected_next characterizes exactly the acceptable alphabet steps") {
    Grammar g = builtin_grammar();
    auto abc = oracle::alphabet();
    // Walk every oracle-accepted state reachable within 3 steps and compare
    // the frontier against actual stepping, message by message.
    std::vector<std::vector<int>> states = {{}, {0}, {7}, {0, 1}, {0, 4}, {0, 1, 2}, {0, 1, 3}};
    for (const auto& prefix : states) {
        Conversation c(&g);
        for (int i : prefix) REQUIRE(c.step(abc[i]).ok);
        auto frontier = c.expected_next();
        for (int i = 0; i < 8; ++i) {
            bool admitted = false;
            for (const auto& p : frontier)
                if (pattern_admits(p, abc[i])) admitted = true;
            Conversation copy = c;
            CHECK(admitted == copy.step(abc[i]).ok);
        }
    }
}

TEST_CASE("the failure reason lists the frontier via the tracker") {
    ConversationTracker tr(builtin_grammar());
    auto out = tr.feed(parse_message("(tell :sender A :receiver B :content \"p\")"), true);
    CHECK_FALSE(out.ok);
    CHECK(out.reason.find("cannot open") != std::string::npos);
    CHECK_FALSE(out.expected.empty());
}

TEST_CASE("tracker demultiplexes interleaved conversations by reply threading") {
    ConversationTracker tr(builtin_grammar());
    auto feed = [&](const std::string& m, bool outgoing) {
        return tr.feed(parse_message(m), outgoing);
    };
    // Two independent offers from A's point of view, interleaved.
    auto o1 = feed("(advertise :sender A :receiver B :reply-with a1 "
                   ":content (ask-if :sender B :receiver A :in-reply-to a1 :content \"p\"))",
                   true);
    auto o2 = feed("(advertise :sender A :receiver C :reply-with a2 "
                   ":content (ask-if :sender C :receiver A :in-reply-to a2 :content \"q\"))",
                   true);
    REQUIRE(o1.ok);
    REQUIRE(o2.ok);
    CHECK(o1.conv_id == "a1");
    CHECK(o2.conv_id == "a2");
    auto q2 = feed("(ask-if :sender C :receiver A :in-reply-to a2 :reply-with q2 :content \"q\")",
                   false);
    auto q1 = feed("(ask-if :sender B :receiver A :in-reply-to a1 :reply-with q1 :content \"p\")",
                   false);
    CHECK(q2.conv_id == "a2");
    CHECK(q1.conv_id == "a1");
    auto t1 = feed("(tell :sender A :receiver B :in-reply-to q1 :content \"p\")", true);
    auto t2 = feed("(tell :sender A :receiver C :in-reply-to q2 :content \"q\")", true);
    CHECK(t1.ok);
    CHECK(t2.ok);
    CHECK(t1.conv_id == "a1");
    CHECK(t2.conv_id == "a2");
    CHECK(tr.conversations().size() == 2);
    // A cross-threaded reply is rejected inside its conversation.
    auto bad = feed("(tell :sender A :receiver B :in-reply-to a1 :content \"p\")", true);
    CHECK_FALSE(bad.ok);
    CHECK(bad.conv_id == "a1");
}

TEST_CASE("ambiguous reply threading warns and joins the most recent conversation") {
    ConversationTracker tr(builtin_grammar());
    auto adv = [&](const std::string& rcv) {
        return "(advertise :sender A :receiver " + rcv + " :reply-with dup " +
               ":content (ask-if :sender " + rcv + " :receiver A :in-reply-to dup :content \"p\"))";
    };
    REQUIRE(tr.feed(parse_message(adv("B")), true).ok);
    auto second = tr.feed(parse_message(adv("C")), true);
    REQUIRE(second.ok);  // stored under a disambiguated key
    auto reply = tr.feed(
        parse_message("(ask-if :sender C :receiver A :in-reply-to dup :reply-with q1 :content \"p\")"),
        false);
    CHECK(reply.ok);
    CHECK_FALSE(reply.warnings.empty());
    CHECK(reply.conv_id == second.conv_id);  // most recently updated wins
}

TEST_CASE("the brokered exchange consults the relayed sub-conversation") {
    Grammar g = builtin_grammar();
    auto brk_inner = std::make_shared<Terminal>(term("ask-if", "F", "", "b1", "", "1", "X"));
    Terminal brk = term("broker-one", "A", "F", "", "b1", "0", "", brk_inner);
    auto fwd_inner = std::make_shared<Terminal>(term("tell", "", "A", "b1", "", "0", "X"));
    Terminal fwd = term("forward", "F", "A", "b1", "f1", "1", "", fwd_inner);

    Terminal sub_tell = term("tell", "D", "F", "b1.1", "", "0", "X");
    Terminal sub_sorry = term("sorry", "D", "F", "b1.1", "", "0");
    Terminal sub_pending = term("ask-if", "F", "D", "a1", "b1.1", "1", "X");

    SUBCASE("forward accepted once the sub-dialogue ended in a tell") {
        Conversation c(&g);
        REQUIRE(c.step(brk).ok);
        CHECK(c.step(fwd, &sub_tell).ok);
        CHECK(c.complete());
    }
    SUBCASE("forward rejected while the relay is still unanswered") {
        Conversation c(&g);
        REQUIRE(c.step(brk).ok);
        CHECK_FALSE(c.step(fwd, &sub_pending).ok);
    }
    SUBCASE("forward rejected when the sub-dialogue was declined") {
        Conversation c(&g);
        REQUIRE(c.step(brk).ok);
        CHECK_FALSE(c.step(fwd, &sub_sorry).ok);
    }
    SUBCASE("forwarded content must repeat the sub-dialogue's answer") {
        Conversation c(&g);
        REQUIRE(c.step(brk).ok);
        Terminal wrong = term("tell", "D", "F", "b1.1", "", "0", "Y");
        CHECK_FALSE(c.step(fwd, &wrong).ok);
    }
    SUBCASE("anonymity: a forward naming the answerer is rejected") {
        Conversation c(&g);
        REQUIRE(c.step(brk).ok);
        auto leaky_inner = std::make_shared<Terminal>(term("tell", "D", "A", "b1", "", "0", "X"));
        Terminal leaky = term("forward", "F", "A", "b1", "f1", "1", "", leaky_inner);
        CHECK_FALSE(c.step(leaky, &sub_tell).ok);
    }
    SUBCASE("without sub-conversation visibility the forward is taken on faith") {
        Conversation c(&g);
        REQUIRE(c.step(brk).ok);
        CHECK(c.step(fwd, nullptr).ok);
    }
}

TEST_CASE("random walks through the grammar are accepted along every prefix") {
    Grammar g = builtin_grammar(true);
    std::mt19937 rng(555);
    auto rnd_tok = [&] { return "t" + std::to_string(rng() % 5); };
    std::function<Terminal(const TerminalPat&)> instantiate = [&](const TerminalPat& p) {
        auto field = [&](const PTok& t, bool blank_ok) {
            if (t.kind == PTok::Kind::Const) return t.text;
            return (blank_ok && rng() % 3 == 0) ? std::string() : rnd_tok();
        };
        Terminal t;
        t.performative =
            p.performative.kind == PTok::Kind::Const ? p.performative.text : "ask-if";
        t.sender = field(p.sender, false);
        t.receiver = field(p.receiver, false);
        t.in_reply_to = field(p.in_reply_to, true);
        t.reply_with = field(p.reply_with, true);
        t.io = p.io.kind == PTok::Kind::Const ? p.io.text : "0";
        t.content = field(p.content, true);
        if (p.nested) t.nested = std::make_shared<Terminal>(instantiate(*p.nested));
        return t;
    };
    int walks = 0;
    for (int i = 0; i < 120; ++i) {
        Conversation c(&g);
        std::vector<Terminal> seq;
        for (int step = 0; step < 5; ++step) {
            auto frontier = c.expected_next();
            if (frontier.empty()) break;
            Terminal t = instantiate(frontier[rng() % frontier.size()]);
            if (!c.step(t).ok) continue;  // an unlucky instantiation; try again
            seq.push_back(t);
        }
        for (std::size_t k = 0; k <= seq.size(); ++k) {
            CHECK(accepts(g, std::vector<Terminal>(seq.begin(), seq.begin() + k)));
            ++walks;
        }
    }
    CHECK(walks >= 120);  // the acceptance suite runs the >=500-case sweep
}

TEST_CASE("terminal construction flips the direction flag of embedded messages") {
    KqmlMessage m = parse_message(
        "(advertise :sender A :receiver B :reply-with id1 "
        ":content (ask-if :sender B :receiver A :in-reply-to id1 :content \"p\"))");
    Terminal t = terminal_from_message(m, "0");
    CHECK(t.io == "0");
    REQUIRE(t.nested);
    CHECK(t.nested->io == "1");
    CHECK(t.nested->performative == "ask-if");
    CHECK(t.nested->sender == "B");
    CHECK(terminal_from_message(m, "1").nested->io == "0");
}
