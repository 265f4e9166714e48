#pragma once

#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace kqml {

/// Deep-copying smart box for recursive value types.
template <typename T>
class Box {
public:
    Box() = default;
    Box(T value) : ptr_(std::make_unique<T>(std::move(value))) {}
    Box(const Box& other) : ptr_(other.ptr_ ? std::make_unique<T>(*other.ptr_) : nullptr) {}
    Box(Box&&) noexcept = default;
    Box& operator=(const Box& other) {
        if (this != &other) ptr_ = other.ptr_ ? std::make_unique<T>(*other.ptr_) : nullptr;
        return *this;
    }
    Box& operator=(Box&&) noexcept = default;

    explicit operator bool() const { return static_cast<bool>(ptr_); }
    const T& operator*() const { return *ptr_; }
    T& operator*() { return *ptr_; }
    const T* operator->() const { return ptr_.get(); }
    T* operator->() { return ptr_.get(); }
    const T* get() const { return ptr_.get(); }

private:
    std::unique_ptr<T> ptr_;
};

enum class ParseErrorKind {
    UnbalancedParens,
    UnknownPerformative,
    DuplicateKeyword,
    MissingContent,
};

struct ParseError : std::runtime_error {
    ParseError(ParseErrorKind k, std::string what) : std::runtime_error(std::move(what)), kind(k) {}
    ParseErrorKind kind;
};

struct KqmlMessage;

/// Message content: absent, an opaque content-language expression, or a
/// nested KQML message.
struct Content {
    std::optional<std::string> opaque;
    Box<KqmlMessage> nested;

    bool absent() const { return !opaque && !nested; }
    static Content none() { return {}; }
    static Content text(std::string s) {
        Content c;
        c.opaque = std::move(s);
        return c;
    }
    static Content message(KqmlMessage m);
};

/// One performative utterance. Optional fields left empty stand for
/// parameters that carry no value (they match anything downstream,
/// like anonymous variables).
struct KqmlMessage {
    std::string performative;
    std::optional<std::string> sender;
    std::optional<std::string> receiver;
    std::optional<std::string> from;  // forward only
    std::optional<std::string> to;    // forward only
    std::optional<std::string> in_reply_to;
    std::optional<std::string> reply_with;
    std::optional<std::string> language;
    std::optional<std::string> ontology;
    std::vector<std::pair<std::string, std::string>> extras;  // unknown keywords, preserved
    Content content;
};

bool operator==(const Content& a, const Content& b);
bool operator==(const KqmlMessage& a, const KqmlMessage& b);
inline bool operator!=(const KqmlMessage& a, const KqmlMessage& b) { return !(a == b); }

/// True if `name` is a registered performative.
bool is_registered_performative(const std::string& name, bool enable_proactive = true);

/// True if the performative's descriptor requires a :content value.
bool performative_requires_content(const std::string& name);

/// True if the performative may carry a nested message as content
/// (advertise, broker-one, forward). Policy-layer concern; the codec
/// itself places no restriction.
bool performative_permits_nesting(const std::string& name);

/// Parse one message from its S-expression surface form.
/// Throws ParseError on malformed input.
KqmlMessage parse_message(const std::string& text, bool enable_proactive = true);

/// Like parse_message, but tolerates missing :content; for match patterns.
KqmlMessage parse_message_partial(const std::string& text, bool enable_proactive = true);

/// Canonical serialization: fixed keyword order, absent keywords omitted,
/// opaque content double-quoted with backslash escaping.
std::string serialize_message(const KqmlMessage& msg);

/// One transcript line: direction plus message.
struct TranscriptEntry {
    bool incoming = false;  // '<' incoming, '>' outgoing
    KqmlMessage msg;
};

struct TranscriptError : std::runtime_error {
    TranscriptError(std::size_t line_no_, std::string what)
        : std::runtime_error(std::move(what)), line_no(line_no_) {}
    std::size_t line_no;
};

/// Parse a transcript: one serialized message per line prefixed by
/// "> " (outgoing) or "< " (incoming). Blank lines and '#' comments
/// are skipped.
std::vector<TranscriptEntry> parse_transcript(const std::string& text, bool enable_proactive = true);

std::string serialize_transcript(const std::vector<TranscriptEntry>& entries);

}  // namespace kqml
