#pragma once

// Closed message alphabet (agents A and B, content X, ids id1/id2) and an
// explicit-state oracle automaton for it, written down independently of the
// grammar engine. Used to cross-check `accepts` exhaustively.

#include <string>
#include <vector>

#include "kqml/policy.hpp"

namespace oracle {

inline kqml::Terminal term(std::string perf, std::string s, std::string r, std::string ir,
                           std::string rw, std::string io, std::string content = "",
                           std::shared_ptr<const kqml::Terminal> nested = nullptr) {
    kqml::Terminal t;
    t.performative = std::move(perf);
    t.sender = std::move(s);
    t.receiver = std::move(r);
    t.in_reply_to = std::move(ir);
    t.reply_with = std::move(rw);
    t.io = std::move(io);
    t.content = std::move(content);
    t.nested = std::move(nested);
    return t;
}

// The eight instantiated messages.
inline std::vector<kqml::Terminal> alphabet() {
    auto adv_inner =
        std::make_shared<kqml::Terminal>(term("ask-if", "B", "A", "id1", "", "1", "X"));
    auto brk_inner = std::make_shared<kqml::Terminal>(term("ask-if", "B", "", "id1", "", "1", "X"));
    return {
        term("advertise", "A", "B", "", "id1", "0", "", adv_inner),   // 0: the offer
        term("ask-if", "B", "A", "id1", "id2", "1", "X"),             // 1: the matching query
        term("tell", "A", "B", "id2", "", "0", "X"),                  // 2: the answer
        term("sorry", "A", "B", "id2", "", "0"),                      // 3: decline the query
        term("sorry", "B", "A", "id1", "", "1"),                      // 4: decline the opener
        term("tell", "A", "B", "id1", "", "0", "X"),                  // 5: distractor (bad ir)
        term("ask-if", "B", "A", "id2", "id1", "1", "X"),             // 6: distractor (ids swapped)
        term("broker-one", "A", "B", "", "id1", "0", "", brk_inner),  // 7: the brokering request
    };
}

// Hand-coded automaton over alphabet indices. Every state is accepting
// (prefix closure); a missing transition rejects.
inline bool oracle_accepts(const std::vector<int>& seq) {
    enum State { Q0, QAdv, QAsk, QBrk, QDone };
    State st = Q0;
    for (int m : seq) {
        switch (st) {
            case Q0:
                if (m == 0)
                    st = QAdv;
                else if (m == 7)
                    st = QBrk;
                else
                    return false;
                break;
            case QAdv:
                if (m == 1)
                    st = QAsk;
                else if (m == 4)
                    st = QDone;
                else
                    return false;
                break;
            case QAsk:
                if (m == 2 || m == 3)
                    st = QDone;
                else
                    return false;
                break;
            case QBrk:
                if (m == 4)
                    st = QDone;
                else
                    return false;
                break;
            case QDone:
                return false;
        }
    }
    return true;
}

}  // namespace oracle
