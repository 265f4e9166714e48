#include "kqml/wire.hpp"

#include <array>
#include <cctype>
#include <sstream>

namespace kqml {

Content Content::message(KqmlMessage m) {
    Content c;
    c.nested = Box<KqmlMessage>(std::move(m));
    return c;
}

bool operator==(const Content& a, const Content& b) {
    if (a.opaque != b.opaque) return false;
    if (static_cast<bool>(a.nested) != static_cast<bool>(b.nested)) return false;
    if (a.nested && !(*a.nested == *b.nested)) return false;
    return true;
}

bool operator==(const KqmlMessage& a, const KqmlMessage& b) {
    return a.performative == b.performative && a.sender == b.sender && a.receiver == b.receiver &&
           a.from == b.from && a.to == b.to && a.in_reply_to == b.in_reply_to &&
           a.reply_with == b.reply_with && a.language == b.language && a.ontology == b.ontology &&
           a.extras == b.extras && a.content == b.content;
}

namespace {

constexpr std::array<const char*, 7> kBasePerformatives = {
    "advertise", "ask-if", "tell", "sorry", "broker-one", "forward", "error",
};
constexpr std::array<const char*, 2> kProactivePerformatives = {
    "proactive-tell", "proactive-ask-if",
};

bool is_token_char(char c) {
    return !std::isspace(static_cast<unsigned char>(c)) && c != '(' && c != ')' && c != '"' &&
           c != '\'';
}

}  // namespace

bool is_registered_performative(const std::string& name, bool enable_proactive) {
    for (const char* p : kBasePerformatives)
        if (name == p) return true;
    if (enable_proactive)
        for (const char* p : kProactivePerformatives)
            if (name == p) return true;
    return false;
}

bool performative_requires_content(const std::string& name) {
    return name == "advertise" || name == "ask-if" || name == "tell" || name == "broker-one" ||
           name == "forward" || name == "proactive-tell" || name == "proactive-ask-if";
}

bool performative_permits_nesting(const std::string& name) {
    return name == "advertise" || name == "broker-one" || name == "forward";
}

namespace {

class Reader {
public:
    Reader(const std::string& text, bool enable_proactive, bool require_content = true)
        : text_(text), enable_proactive_(enable_proactive), require_content_(require_content) {}

    KqmlMessage read_top() {
        skip_ws();
        KqmlMessage msg = read_message();
        skip_ws();
        if (pos_ != text_.size())
            throw ParseError(ParseErrorKind::UnbalancedParens,
                             "trailing characters after message");
        return msg;
    }

private:
    const std::string& text_;
    std::size_t pos_ = 0;
    bool enable_proactive_;
    bool require_content_ = true;

    [[noreturn]] void fail(ParseErrorKind k, const std::string& what) {
        throw ParseError(k, what + " at offset " + std::to_string(pos_));
    }

    void skip_ws() {
        while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
    }

    char peek() const { return pos_ < text_.size() ? text_[pos_] : '\0'; }

    std::string read_atom() {
        std::size_t start = pos_;
        while (pos_ < text_.size() && is_token_char(text_[pos_])) ++pos_;
        if (pos_ == start) fail(ParseErrorKind::UnbalancedParens, "expected token");
        return text_.substr(start, pos_ - start);
    }

    // "..." with backslash escaping, or the legacy ''...'' form.
    std::string read_string() {
        if (text_.compare(pos_, 2, "''") == 0) {
            pos_ += 2;
            std::size_t end = text_.find("''", pos_);
            if (end == std::string::npos)
                fail(ParseErrorKind::UnbalancedParens, "unterminated ''...'' string");
            std::string out = text_.substr(pos_, end - pos_);
            pos_ = end + 2;
            return out;
        }
        ++pos_;  // opening quote
        std::string out;
        while (pos_ < text_.size() && text_[pos_] != '"') {
            if (text_[pos_] == '\\' && pos_ + 1 < text_.size()) ++pos_;
            out += text_[pos_++];
        }
        if (pos_ >= text_.size()) fail(ParseErrorKind::UnbalancedParens, "unterminated string");
        ++pos_;  // closing quote
        return out;
    }

    // Captures a balanced parenthesized expression verbatim.
    std::string read_balanced() {
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
            } else if (c == '"') {
                in_str = true;
            } else if (c == '(') {
                ++depth;
            } else if (c == ')') {
                --depth;
                if (depth == 0) {
                    ++pos_;
                    return text_.substr(start, pos_ - start);
                }
            }
            ++pos_;
        }
        fail(ParseErrorKind::UnbalancedParens, "unbalanced parentheses");
    }

    Content read_content() {
        skip_ws();
        char c = peek();
        if (c == '"' || c == '\'') return Content::text(read_string());
        if (c == '(') {
            // A performative head makes it a nested message; anything else
            // stays opaque, verbatim.
            std::size_t save = pos_;
            std::string raw = read_balanced();
            std::size_t h = 1;
            while (h < raw.size() && std::isspace(static_cast<unsigned char>(raw[h]))) ++h;
            std::size_t he = h;
            while (he < raw.size() && is_token_char(raw[he])) ++he;
            std::string head = raw.substr(h, he - h);
            if (is_registered_performative(head, enable_proactive_)) {
                pos_ = save;
                return Content::message(read_message());
            }
            return Content::text(raw);
        }
        return Content::text(read_atom());
    }

    KqmlMessage read_message() {
        skip_ws();
        if (peek() != '(') fail(ParseErrorKind::UnbalancedParens, "expected '('");
        ++pos_;
        skip_ws();
        KqmlMessage msg;
        msg.performative = read_atom();
        if (!is_registered_performative(msg.performative, enable_proactive_))
            fail(ParseErrorKind::UnknownPerformative,
                 "unknown performative '" + msg.performative + "'");
        while (true) {
            skip_ws();
            if (peek() == ')') {
                ++pos_;
                break;
            }
            if (peek() == '\0') fail(ParseErrorKind::UnbalancedParens, "unbalanced parentheses");
            std::string kw = read_atom();
            if (kw.empty() || kw[0] != ':')
                fail(ParseErrorKind::UnbalancedParens, "expected keyword, got '" + kw + "'");
            if (kw == ":content") {
                if (!msg.content.absent())
                    fail(ParseErrorKind::DuplicateKeyword, "duplicate :content");
                msg.content = read_content();
                continue;
            }
            std::optional<std::string>* slot = nullptr;
            if (kw == ":sender")
                slot = &msg.sender;
            else if (kw == ":receiver")
                slot = &msg.receiver;
            else if (kw == ":from")
                slot = &msg.from;
            else if (kw == ":to")
                slot = &msg.to;
            else if (kw == ":in-reply-to")
                slot = &msg.in_reply_to;
            else if (kw == ":reply-with")
                slot = &msg.reply_with;
            else if (kw == ":language")
                slot = &msg.language;
            else if (kw == ":ontology")
                slot = &msg.ontology;
            if (slot) {
                if (slot->has_value())
                    fail(ParseErrorKind::DuplicateKeyword, "duplicate " + kw);
                skip_ws();
                *slot = read_atom();
            } else {
                for (const auto& [k, v] : msg.extras)
                    if (k == kw) fail(ParseErrorKind::DuplicateKeyword, "duplicate " + kw);
                skip_ws();
                std::string value;
                char c = peek();
                if (c == '"' || c == '\'')
                    value = read_string();
                else if (c == '(')
                    value = read_balanced();
                else
                    value = read_atom();
                msg.extras.emplace_back(kw, value);
            }
        }
        if (require_content_ && msg.content.absent() &&
            performative_requires_content(msg.performative))
            fail(ParseErrorKind::MissingContent,
                 "performative '" + msg.performative + "' requires :content");
        return msg;
    }
};

std::string quote(const std::string& s) {
    std::string out = "\"";
    for (char c : s) {
        if (c == '"' || c == '\\') out += '\\';
        out += c;
    }
    out += '"';
    return out;
}

}  // namespace

KqmlMessage parse_message(const std::string& text, bool enable_proactive) {
    return Reader(text, enable_proactive).read_top();
}

KqmlMessage parse_message_partial(const std::string& text, bool enable_proactive) {
    return Reader(text, enable_proactive, /*require_content=*/false).read_top();
}

std::string serialize_message(const KqmlMessage& msg) {
    std::ostringstream out;
    out << '(' << msg.performative;
    auto emit = [&](const char* kw, const std::optional<std::string>& v) {
        if (v) out << ' ' << kw << ' ' << *v;
    };
    emit(":sender", msg.sender);
    emit(":receiver", msg.receiver);
    emit(":from", msg.from);
    emit(":to", msg.to);
    emit(":in-reply-to", msg.in_reply_to);
    emit(":reply-with", msg.reply_with);
    emit(":language", msg.language);
    emit(":ontology", msg.ontology);
    for (const auto& [k, v] : msg.extras) out << ' ' << k << ' ' << v;
    if (msg.content.opaque)
        out << " :content " << quote(*msg.content.opaque);
    else if (msg.content.nested)
        out << " :content " << serialize_message(*msg.content.nested);
    out << ')';
    return out.str();
}

std::vector<TranscriptEntry> parse_transcript(const std::string& text, bool enable_proactive) {
    std::vector<TranscriptEntry> entries;
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::size_t i = 0;
        while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
        if (i >= line.size() || line[i] == '#') continue;
        char dir = line[i];
        if (dir != '>' && dir != '<')
            throw TranscriptError(line_no, "expected '>' or '<' direction marker");
        try {
            entries.push_back({dir == '<', parse_message(line.substr(i + 1), enable_proactive)});
        } catch (const ParseError& e) {
            throw TranscriptError(line_no, e.what());
        }
    }
    return entries;
}

std::string serialize_transcript(const std::vector<TranscriptEntry>& entries) {
    std::string out;
    for (const auto& e : entries) {
        out += e.incoming ? "< " : "> ";
        out += serialize_message(e.msg);
        out += '\n';
    }
    return out;
}

}  // namespace kqml
