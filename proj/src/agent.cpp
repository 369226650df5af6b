#include "forge/agent.hpp"

#include <cctype>
#include <charconv>

#include <fmt/format.h>

#include "forge/error.hpp"
#include "forge/text.hpp"

namespace forge::agent {

std::string_view to_string(Signal s) {
    switch (s) {
        case Signal::continue_: return "continue";
        case Signal::error: return "error";
        case Signal::pause: return "pause";
    }
    return "continue";
}

// ---------------------------------------------------------------------------
// agent-res.xml

namespace {

constexpr int kMaxDepth = 64;

class XmlReader {
public:
    explicit XmlReader(std::string_view s) : s_(s) {}

    // Returns the child elements of <agent-res> as (name, text) pairs.
    std::vector<std::pair<std::string, std::string>> read_document() {
        if (s_.substr(0, 3) == "\xEF\xBB\xBF") pos_ = 3;
        skip_misc();
        expect("<");
        const auto root = read_name();
        if (root != "agent-res") fail(fmt::format("root element is <{}>, expected <agent-res>", root));
        std::vector<std::pair<std::string, std::string>> children;
        if (skip_attributes()) {
            finish();
            return children;
        }
        while (true) {
            skip_text();
            if (at("</")) {
                pos_ += 2;
                if (read_name() != "agent-res") fail("mismatched closing tag for <agent-res>");
                skip_ws();
                expect(">");
                break;
            }
            if (at("<!--")) {
                skip_comment();
                continue;
            }
            expect("<");
            auto name = read_name();
            if (skip_attributes()) {
                children.emplace_back(std::move(name), std::string{});
                continue;
            }
            children.emplace_back(name, read_content(name, 1));
        }
        finish();
        return children;
    }

private:
    [[noreturn]] void fail(const std::string& what) const {
        throw MalformedResponse(fmt::format("agent-res.xml offset {}: {}", pos_, what));
    }
    bool eof() const { return pos_ >= s_.size(); }
    bool at(std::string_view t) const { return s_.substr(pos_, t.size()) == t; }
    void expect(std::string_view t) {
        if (!at(t)) fail(fmt::format("expected `{}`", t));
        pos_ += t.size();
    }
    void skip_ws() {
        while (!eof() && (s_[pos_] == ' ' || s_[pos_] == '\t' || s_[pos_] == '\r' || s_[pos_] == '\n')) ++pos_;
    }
    void skip_until(std::string_view t) {
        const auto p = s_.find(t, pos_);
        if (p == std::string_view::npos) fail(fmt::format("unterminated construct, missing `{}`", t));
        pos_ = p + t.size();
    }
    void skip_comment() {
        pos_ += 4;
        skip_until("-->");
    }
    void skip_misc() {
        while (true) {
            skip_ws();
            if (at("<?")) skip_until("?>");
            else if (at("<!--")) skip_comment();
            else if (at("<!DOCTYPE") || at("<!doctype")) skip_until(">");
            else return;
        }
    }
    void finish() {
        skip_misc();
        if (!eof()) fail("trailing content after </agent-res>");
    }
    // character data between children of the root is ignored
    void skip_text() {
        while (!eof() && s_[pos_] != '<') ++pos_;
        if (eof()) fail("unexpected end of document inside <agent-res>");
    }
    std::string read_name() {
        const auto start = pos_;
        while (!eof()) {
            const char c = s_[pos_];
            const bool ok = std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.' || c == ':';
            if (!ok) break;
            ++pos_;
        }
        if (pos_ == start) fail("expected an element name");
        return std::string(s_.substr(start, pos_ - start));
    }
    // Consumes attributes through `>` or `/>`; true when self-closing.
    bool skip_attributes() {
        while (true) {
            skip_ws();
            if (eof()) fail("unterminated start tag");
            if (at("/>")) {
                pos_ += 2;
                return true;
            }
            if (at(">")) {
                ++pos_;
                return false;
            }
            read_name();
            skip_ws();
            expect("=");
            skip_ws();
            if (eof() || (s_[pos_] != '"' && s_[pos_] != '\'')) fail("attribute value must be quoted");
            const char q = s_[pos_++];
            const auto end = s_.find(q, pos_);
            if (end == std::string_view::npos) fail("unterminated attribute value");
            pos_ = end + 1;
        }
    }
    void append_entity(std::string& out) {
        const auto semi = s_.find(';', pos_);
        if (semi == std::string_view::npos || semi - pos_ > 12) fail("bad entity reference");
        const auto ent = s_.substr(pos_ + 1, semi - pos_ - 1);
        pos_ = semi + 1;
        if (ent == "lt") out += '<';
        else if (ent == "gt") out += '>';
        else if (ent == "amp") out += '&';
        else if (ent == "quot") out += '"';
        else if (ent == "apos") out += '\'';
        else if (!ent.empty() && ent[0] == '#') {
            unsigned cp = 0;
            const bool hex = ent.size() > 1 && (ent[1] == 'x' || ent[1] == 'X');
            const auto digits = ent.substr(hex ? 2 : 1);
            auto [p, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), cp, hex ? 16 : 10);
            if (digits.empty() || ec != std::errc{} || p != digits.data() + digits.size() || cp == 0 || cp > 0x10FFFF ||
                (cp >= 0xD800 && cp <= 0xDFFF))
                fail("bad character reference");
            if (cp < 0x80) out += static_cast<char>(cp);
            else if (cp < 0x800) {
                out += static_cast<char>(0xC0 | (cp >> 6));
                out += static_cast<char>(0x80 | (cp & 0x3F));
            } else if (cp < 0x10000) {
                out += static_cast<char>(0xE0 | (cp >> 12));
                out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
                out += static_cast<char>(0x80 | (cp & 0x3F));
            } else {
                out += static_cast<char>(0xF0 | (cp >> 18));
                out += static_cast<char>(0x80 | ((cp >> 12) & 0x3F));
                out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
                out += static_cast<char>(0x80 | (cp & 0x3F));
            }
        } else {
            fail(fmt::format("unknown entity `&{};`", ent));
        }
    }
    // Text of an element up to its closing tag; nested markup is skipped
    // (its text is dropped) so unknown structured elements parse.
    std::string read_content(const std::string& name, int depth) {
        if (depth > kMaxDepth) fail("elements nested too deeply");
        std::string out;
        while (true) {
            if (eof()) fail(fmt::format("unterminated <{}>", name));
            const char c = s_[pos_];
            if (c == '&') {
                append_entity(out);
            } else if (c == '<') {
                if (at("<![CDATA[")) {
                    pos_ += 9;
                    const auto end = s_.find("]]>", pos_);
                    if (end == std::string_view::npos) fail("unterminated CDATA section");
                    out += s_.substr(pos_, end - pos_);
                    pos_ = end + 3;
                } else if (at("<!--")) {
                    skip_comment();
                } else if (at("</")) {
                    pos_ += 2;
                    if (read_name() != name) fail(fmt::format("mismatched closing tag for <{}>", name));
                    skip_ws();
                    expect(">");
                    return out;
                } else {
                    ++pos_;
                    const auto inner = read_name();
                    if (!skip_attributes()) read_content(inner, depth + 1);
                }
            } else {
                out += c;
                ++pos_;
            }
        }
    }

    std::string_view s_;
    std::size_t pos_ = 0;
};

std::int64_t parse_count(const std::string& v, std::string_view what) {
    const auto t = text::trim(v);
    std::int64_t n = 0;
    auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), n);
    if (t.empty() || ec != std::errc{} || p != t.data() + t.size() || n < 0)
        throw MalformedResponse(fmt::format("<{}> must be a non-negative integer", what));
    return n;
}

std::string xml_escape(std::string_view s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '&': out += "&amp;"; break;
            default: out += c;
        }
    }
    return out;
}

}  // namespace

AgentResponse parse_agent_response(std::string_view raw) {
    const auto children = XmlReader(raw).read_document();
    std::optional<std::string> signal;
    AgentResponse r;
    auto set_once = [](std::optional<std::string>& slot, const std::string& v, std::string_view name) {
        if (slot) throw MalformedResponse(fmt::format("<{}> appears more than once", name));
        slot = v;
    };
    std::optional<std::string> turns, tokens;
    for (const auto& [name, value] : children) {
        if (name == "signal") set_once(signal, value, name);
        else if (name == "reason") set_once(r.reason, value, name);
        else if (name == "file") set_once(r.file, value, name);
        else if (name == "turns") set_once(turns, value, name);
        else if (name == "tokens") set_once(tokens, value, name);
    }
    if (!signal) throw MalformedResponse("<signal> is missing");
    const auto sig = text::trim(*signal);
    if (sig == "continue") r.signal = Signal::continue_;
    else if (sig == "error") r.signal = Signal::error;
    else if (sig == "pause") r.signal = Signal::pause;
    else throw InvalidSignal(fmt::format("unknown signal `{}`", sig));

    auto clean = [](std::optional<std::string>& v) {
        if (!v) return;
        v = std::string(text::trim(*v));
        if (v->empty()) v.reset();
    };
    clean(r.reason);
    clean(r.file);
    if (r.signal == Signal::pause && (!r.file || !r.reason))
        throw MalformedResponse("pause requires both <file> and <reason>");
    if (r.signal == Signal::error && !r.reason) throw MalformedResponse("error requires <reason>");
    if (turns) r.turns = parse_count(*turns, "turns");
    if (tokens) r.tokens = parse_count(*tokens, "tokens");
    r.metered = turns.has_value() || tokens.has_value();
    return r;
}

std::string render_agent_response(const AgentResponse& r) {
    std::string out = fmt::format("<agent-res>\n  <signal>{}</signal>\n", to_string(r.signal));
    if (r.file) out += fmt::format("  <file>{}</file>\n", xml_escape(*r.file));
    if (r.reason) out += fmt::format("  <reason>{}</reason>\n", xml_escape(*r.reason));
    out += "</agent-res>\n";
    return out;
}

// ---------------------------------------------------------------------------
// sessions

AgentSessions::AgentSessions(AgentBackend& backend, std::filesystem::path pkg_root, std::string pipeline_id,
                             taskpkg::AccessLog& log, std::chrono::milliseconds timeout)
    : backend_(backend), root_(std::move(pkg_root)), pipeline_id_(std::move(pipeline_id)), log_(log),
      timeout_(timeout) {}

AgentResponse AgentSessions::invoke(Role role, std::string message, std::optional<std::string> session_id) {
    if (session_id) {
        auto it = issued_.find(*session_id);
        if (it == issued_.end()) throw UnknownSession(fmt::format("session `{}` was never issued", *session_id));
        paused_[*session_id] = false;
        return run(it->second, *session_id, true, std::move(message));
    }
    const auto id = fmt::format("{}/{}/{}", pipeline_id_, to_string(role), next_id_++);
    issued_.emplace(id, role);
    latest_[role] = id;
    return run(role, id, false, std::move(message));
}

AgentResponse AgentSessions::resume(const std::string& session_id, std::string message) {
    auto it = paused_.find(session_id);
    if (it == paused_.end() || !it->second)
        throw UnknownSession(fmt::format("session `{}` is not awaiting resumption", session_id));
    it->second = false;
    if (message.empty()) message = "The requested revision is complete. Continue your task.";
    return run(issued_.at(session_id), session_id, true, std::move(message));
}

std::optional<std::string> AgentSessions::session_of(Role role) const {
    auto it = latest_.find(role);
    if (it == latest_.end()) return std::nullopt;
    return it->second;
}

std::optional<Role> AgentSessions::role_of(const std::string& session_id) const {
    auto it = issued_.find(session_id);
    if (it == issued_.end()) return std::nullopt;
    return it->second;
}

AgentResponse AgentSessions::run(Role role, const std::string& session_id, bool resume, std::string message) {
    namespace fs = std::filesystem;
    const auto res_path = root_ / taskpkg::files::agent_res;
    std::error_code ec;
    fs::remove(res_path, ec);

    taskpkg::Workspace ws(taskpkg::scoped_view(root_, role), log_);
    AgentInvocation inv;
    inv.pipeline_id = pipeline_id_;
    inv.role = role;
    inv.session_id = session_id;
    inv.workspace = &ws;
    inv.briefing = taskpkg::briefing_for(role, pipeline_id_);
    inv.resume = resume;
    inv.message = std::move(message);

    const auto start = std::chrono::steady_clock::now();
    const auto deadline = start + timeout_;
    Usage usage;
    ++totals_.invocations;
    try {
        usage = backend_.run(inv, deadline);
    } catch (const BackendTimeout&) {
        throw;
    } catch (const BackendCrash&) {
        throw;
    } catch (const std::exception& e) {
        throw BackendCrash(fmt::format("{} backend failed: {}", backend_.name(), e.what()));
    }
    if (std::chrono::steady_clock::now() > deadline)
        throw BackendTimeout(fmt::format("{} exceeded {} ms", session_id, timeout_.count()));

    if (!fs::is_regular_file(res_path)) throw MalformedResponse("agent did not write agent-res.xml");
    const auto raw = text::read_file(res_path);
    fs::remove(res_path, ec);

    AgentResponse r = parse_agent_response(raw);
    if (usage.turns || usage.tokens) {
        r.turns = usage.turns.value_or(0);
        r.tokens = usage.tokens.value_or(0);
        r.metered = true;
    }
    totals_.turns += r.turns;
    totals_.tokens += r.tokens;
    totals_.fully_metered = totals_.fully_metered && r.metered;
    if (r.signal == Signal::pause) paused_[session_id] = true;
    return r;
}

}  // namespace forge::agent
