#pragma once

// Unified-diff parsing and the tagged long-context commit format.
//
// Layout produced by structure_commit (lines joined by '\n', no trailing
// newline):
//
//   [num_lines_added:] [LOW]          <- optional metric block
//   ...
//   <COMMIT_MESSAGE>message</COMMIT_MESSAGE>
//   <FILE path="src/a.c">
//   <REMOVED>
//   old line
//   </REMOVED>
//   <ADDED/>                           <- empty blocks collapse
//   </FILE>
//
// Text content and attribute values are XML-escaped, so a literal '<' in
// the output always starts one of the four tags.

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "drs/error.hpp"

namespace drs {

struct Commit {
    std::string repo;  // "owner/name"
    std::string sha;
    std::int64_t author_timestamp = 0;
    std::string message;
    std::string raw_diff;
};

inline bool is_full_sha(std::string_view sha) {
    return sha.size() == 40 && std::all_of(sha.begin(), sha.end(), [](char c) {
               return (c >= '0' && c <= '9') || (c >= 'a' && c <= 'f');
           });
}

struct FileDelta {
    std::string path;
    std::optional<std::string> old_path;  // set for renames and copies
    std::vector<std::string> added_lines;
    std::vector<std::string> removed_lines;
    bool is_binary = false;

    bool operator==(const FileDelta&) const = default;
};

struct DiffDocument {
    std::vector<FileDelta> files;
    // Lines that matched no recognized construct and were dropped.
    std::size_t skipped_lines = 0;
};

enum class UnitRule { Words, Bytes };

inline constexpr std::size_t kDefaultUnitBudget = 22000;

struct StructuredText {
    std::string text;
    std::size_t unit_count = 0;
    bool truncated = false;
    UnitRule rule = UnitRule::Words;
};

namespace detail {

inline bool is_space(char c) {
    return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f';
}

inline std::string_view chomp_cr(std::string_view s) {
    if (!s.empty() && s.back() == '\r') s.remove_suffix(1);
    return s;
}

inline std::vector<std::string_view> split_lines(std::string_view text) {
    std::vector<std::string_view> lines;
    std::size_t start = 0;
    while (start < text.size()) {
        std::size_t nl = text.find('\n', start);
        if (nl == std::string_view::npos) {
            lines.push_back(text.substr(start));
            break;
        }
        lines.push_back(text.substr(start, nl - start));
        start = nl + 1;
    }
    return lines;
}

// git quotes paths containing unusual bytes: "a/t\303\251st"
inline std::string unquote_c_style(std::string_view s) {
    if (s.size() < 2 || s.front() != '"' || s.back() != '"') return std::string(s);
    s = s.substr(1, s.size() - 2);
    std::string out;
    for (std::size_t i = 0; i < s.size(); ++i) {
        char c = s[i];
        if (c != '\\' || i + 1 >= s.size()) {
            out.push_back(c);
            continue;
        }
        char e = s[++i];
        switch (e) {
        case 'n': out.push_back('\n'); break;
        case 't': out.push_back('\t'); break;
        case 'r': out.push_back('\r'); break;
        case 'a': out.push_back('\a'); break;
        case 'b': out.push_back('\b'); break;
        case 'f': out.push_back('\f'); break;
        case 'v': out.push_back('\v'); break;
        case '"': out.push_back('"'); break;
        case '\\': out.push_back('\\'); break;
        default:
            if (e >= '0' && e <= '7') {
                int value = 0;
                int digits = 0;
                while (digits < 3 && i < s.size() && s[i] >= '0' && s[i] <= '7') {
                    value = value * 8 + (s[i] - '0');
                    ++i;
                    ++digits;
                }
                --i;
                out.push_back(static_cast<char>(value));
            } else {
                out.push_back(e);
            }
        }
    }
    return out;
}

inline std::string strip_prefix_dir(std::string path, std::string_view prefix) {
    if (path.rfind(prefix, 0) == 0) path.erase(0, prefix.size());
    return path;
}

// Splits the operand of "diff --git " into (old, new) paths.
inline std::pair<std::string, std::string> split_git_header_paths(std::string_view rest) {
    rest = chomp_cr(rest);
    if (!rest.empty() && rest.front() == '"') {
        // Quoted old path; find its closing quote.
        std::size_t i = 1;
        while (i < rest.size() && !(rest[i] == '"' && rest[i - 1] != '\\')) ++i;
        std::string lhs = unquote_c_style(rest.substr(0, i + 1));
        std::string_view tail = rest.substr(std::min(rest.size(), i + 2));
        std::string rhs = unquote_c_style(tail);
        return {strip_prefix_dir(lhs, "a/"), strip_prefix_dir(rhs, "b/")};
    }
    // Same path on both sides: "a/P b/P".
    if (rest.size() % 2 == 1) {
        std::size_t half = rest.size() / 2;
        std::string_view lhs = rest.substr(0, half);
        std::string_view rhs = rest.substr(half + 1);
        if (rest[half] == ' ' && lhs.size() >= 2 && rhs.size() >= 2 && lhs.substr(2) == rhs.substr(2)) {
            return {strip_prefix_dir(std::string(lhs), "a/"), strip_prefix_dir(std::string(rhs), "b/")};
        }
    }
    std::size_t split = rest.rfind(" b/");
    if (split == std::string_view::npos) split = rest.find(' ');
    if (split == std::string_view::npos) return {std::string(rest), std::string(rest)};
    std::string lhs(rest.substr(0, split));
    std::string rhs(rest.substr(split + 1));
    if (!rhs.empty() && rhs.front() == '"') rhs = unquote_c_style(rhs);
    return {strip_prefix_dir(lhs, "a/"), strip_prefix_dir(rhs, "b/")};
}

// Path operand of a "--- " / "+++ " line; nullopt for /dev/null.
inline std::optional<std::string> marker_path(std::string_view operand, std::string_view prefix) {
    operand = chomp_cr(operand);
    std::size_t tab = operand.find('\t');
    if (tab != std::string_view::npos) operand = operand.substr(0, tab);
    if (operand == "/dev/null") return std::nullopt;
    std::string path = operand.front() == '"' ? unquote_c_style(operand) : std::string(operand);
    return strip_prefix_dir(path, prefix);
}

inline bool parse_range_count(std::string_view range, std::int64_t& count) {
    // "12,3" or "12"
    std::size_t comma = range.find(',');
    std::string_view len = comma == std::string_view::npos ? std::string_view{"1"} : range.substr(comma + 1);
    std::string_view start = comma == std::string_view::npos ? range : range.substr(0, comma);
    auto all_digits = [](std::string_view s) {
        return !s.empty() && std::all_of(s.begin(), s.end(), [](char c) { return c >= '0' && c <= '9'; });
    };
    if (!all_digits(start) || !all_digits(len)) return false;
    count = std::stoll(std::string(len));
    return true;
}

// "@@ -a,b +c,d @@ section" -> (b, d)
inline bool parse_hunk_header(std::string_view line, std::int64_t& old_count, std::int64_t& new_count) {
    if (line.rfind("@@ -", 0) != 0) return false;
    std::size_t old_end = line.find(' ', 4);
    if (old_end == std::string_view::npos || old_end + 1 >= line.size() || line[old_end + 1] != '+') return false;
    std::size_t new_end = line.find(' ', old_end + 2);
    if (new_end == std::string_view::npos) return false;
    if (line.substr(new_end, 3) != " @@") return false;
    return parse_range_count(line.substr(4, old_end - 4), old_count) &&
           parse_range_count(line.substr(old_end + 2, new_end - old_end - 2), new_count);
}

inline bool starts_with(std::string_view s, std::string_view p) { return s.rfind(p, 0) == 0; }

}  // namespace detail

/// Parses git-style (and plain) unified diffs. Context lines, hunk headers
/// and mode/index lines are dropped; '+'/'-' body lines keep their content
/// without the marker. Throws MalformedDiff only when non-blank input
/// contains no file header at all.
inline DiffDocument parse_unified_diff(std::string_view raw) {
    using detail::starts_with;

    enum class State { Header, Hunk, Binary };

    DiffDocument doc;
    State state = State::Header;
    bool git_header_open = false;  // inside "diff --git" preamble, before first hunk
    bool counts_known = false;
    std::int64_t old_left = 0;
    std::int64_t new_left = 0;

    auto lines = detail::split_lines(raw);
    auto current = [&]() -> FileDelta* { return doc.files.empty() ? nullptr : &doc.files.back(); };

    for (std::size_t i = 0; i < lines.size(); ++i) {
        std::string_view line = lines[i];

        if (starts_with(line, "diff --git ")) {
            auto [old_path, new_path] = detail::split_git_header_paths(line.substr(11));
            FileDelta file;
            file.path = new_path;
            if (old_path != new_path) file.old_path = old_path;
            doc.files.push_back(std::move(file));
            state = State::Header;
            git_header_open = true;
            continue;
        }

        if (state == State::Binary) continue;

        if (state == State::Hunk) {
            const char marker = line.empty() ? ' ' : line.front();
            const bool body = marker == '+' || marker == '-' || marker == ' ' || marker == '\\';
            if (body && (!counts_known || old_left > 0 || new_left > 0 || marker == '\\')) {
                FileDelta* file = current();
                switch (marker) {
                case '+':
                    file->added_lines.emplace_back(line.substr(1));
                    --new_left;
                    break;
                case '-':
                    file->removed_lines.emplace_back(line.substr(1));
                    --old_left;
                    break;
                case ' ':
                    --old_left;
                    --new_left;
                    break;
                default:
                    break;  // "\ No newline at end of file"
                }
                if (counts_known && old_left <= 0 && new_left <= 0) state = State::Header;
                continue;
            }
            if (counts_known && (old_left > 0 || new_left > 0)) ++doc.skipped_lines;  // short hunk
            state = State::Header;
            // fall through and reinterpret the line as a header
        }

        if (starts_with(line, "@@ ")) {
            if (current() == nullptr) {
                ++doc.skipped_lines;
                continue;
            }
            counts_known = detail::parse_hunk_header(detail::chomp_cr(line), old_left, new_left);
            if (!counts_known) ++doc.skipped_lines;
            git_header_open = false;
            state = (counts_known && old_left <= 0 && new_left <= 0) ? State::Header : State::Hunk;
            continue;
        }

        if (starts_with(line, "--- ") && i + 1 < lines.size() && starts_with(lines[i + 1], "+++ ")) {
            auto old_path = detail::marker_path(line.substr(4), "a/");
            auto new_path = detail::marker_path(lines[i + 1].substr(4), "b/");
            ++i;
            if (!git_header_open) {
                doc.files.emplace_back();
                git_header_open = false;
            }
            FileDelta* file = current();
            if (new_path) {
                file->path = *new_path;
            } else if (old_path) {
                file->path = *old_path;  // deletion
            }
            if (old_path && new_path && *old_path != *new_path && !file->old_path) file->old_path = *old_path;
            continue;
        }

        FileDelta* file = current();
        if (file != nullptr) {
            if (starts_with(line, "Binary files ") || starts_with(line, "GIT binary patch")) {
                file->is_binary = true;
                file->added_lines.clear();
                file->removed_lines.clear();
                state = State::Binary;
                git_header_open = false;
                continue;
            }
            if (starts_with(line, "rename from ") || starts_with(line, "copy from ")) {
                std::string_view operand = line.substr(line.find("from ") + 5);
                file->old_path = detail::unquote_c_style(detail::chomp_cr(operand));
                continue;
            }
            if (starts_with(line, "rename to ") || starts_with(line, "copy to ")) {
                std::string_view operand = line.substr(line.find("to ") + 3);
                file->path = detail::unquote_c_style(detail::chomp_cr(operand));
                continue;
            }
            if (git_header_open &&
                (starts_with(line, "index ") || starts_with(line, "old mode ") || starts_with(line, "new mode ") ||
                 starts_with(line, "deleted file mode ") || starts_with(line, "new file mode ") ||
                 starts_with(line, "similarity index ") || starts_with(line, "dissimilarity index "))) {
                continue;
            }
            if (starts_with(line, "\\")) continue;
        }
        if (!detail::chomp_cr(line).empty()) ++doc.skipped_lines;
    }

    if (doc.files.empty()) {
        bool blank = std::all_of(raw.begin(), raw.end(), detail::is_space);
        if (!blank) throw Error(Errc::MalformedDiff, "no file header found in diff input");
    }
    return doc;
}

inline std::size_t count_units(std::string_view text, UnitRule rule) {
    if (rule == UnitRule::Bytes) return text.size();
    std::size_t words = 0;
    bool in_word = false;
    for (char c : text) {
        bool space = detail::is_space(c);
        if (!space && !in_word) ++words;
        in_word = !space;
    }
    return words;
}

inline std::string xml_escape(std::string_view s, bool attribute = false) {
    std::string out;
    out.reserve(s.size());
    for (char c : s) {
        switch (c) {
        case '&': out += "&amp;"; break;
        case '<': out += "&lt;"; break;
        case '>': out += "&gt;"; break;
        case '"':
            if (attribute) {
                out += "&quot;";
                break;
            }
            [[fallthrough]];
        default: out.push_back(c);
        }
    }
    return out;
}

inline std::string xml_unescape(std::string_view s) {
    std::string out;
    out.reserve(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (s[i] == '&') {
            std::string_view rest = s.substr(i);
            if (rest.rfind("&amp;", 0) == 0) { out.push_back('&'); i += 4; continue; }
            if (rest.rfind("&lt;", 0) == 0) { out.push_back('<'); i += 3; continue; }
            if (rest.rfind("&gt;", 0) == 0) { out.push_back('>'); i += 3; continue; }
            if (rest.rfind("&quot;", 0) == 0) { out.push_back('"'); i += 5; continue; }
        }
        out.push_back(s[i]);
    }
    return out;
}

/// Intermediate form shared by serialization and truncation. Lines are
/// stored already escaped.
struct StructuredLayout {
    std::string prefix;  // metric block + message block
    struct File {
        std::string open_tag;  // <FILE path="...">
        std::vector<std::string> removed;
        std::vector<std::string> added;
    };
    std::vector<File> files;

    std::string render() const {
        std::string out = prefix;
        auto block = [&out](std::string_view tag, const std::vector<std::string>& lines) {
            out += '\n';
            if (lines.empty()) {
                out += '<';
                out += tag;
                out += "/>";
                return;
            }
            out += '<';
            out += tag;
            out += '>';
            for (const auto& l : lines) {
                out += '\n';
                out += l;
            }
            out += "\n</";
            out += tag;
            out += '>';
        };
        for (const auto& f : files) {
            out += '\n';
            out += f.open_tag;
            block("REMOVED", f.removed);
            block("ADDED", f.added);
            out += "\n</FILE>";
        }
        return out;
    }

    std::size_t line_count() const {
        std::size_t n = 0;
        for (const auto& f : files) n += f.removed.size() + f.added.size();
        return n;
    }
};

/// Inverse of StructuredLayout::render for text produced by this module.
inline StructuredLayout parse_structured_layout(std::string_view text) {
    constexpr std::string_view kClose = "</COMMIT_MESSAGE>";
    std::size_t close = text.find(kClose);
    if (close == std::string_view::npos) throw Error(Errc::MalformedStructuredText, "missing </COMMIT_MESSAGE>");
    StructuredLayout layout;
    layout.prefix = std::string(text.substr(0, close + kClose.size()));

    std::string_view rest = text.substr(close + kClose.size());
    if (rest.empty()) return layout;
    if (rest.front() != '\n') throw Error(Errc::MalformedStructuredText, "expected newline after message block");
    auto lines = detail::split_lines(rest.substr(1));

    auto fail = [](const std::string& why) { throw Error(Errc::MalformedStructuredText, why); };
    std::size_t i = 0;
    auto read_block = [&](std::string_view tag, std::vector<std::string>& out) {
        if (i >= lines.size()) fail("truncated block");
        std::string empty = "<" + std::string(tag) + "/>";
        std::string open = "<" + std::string(tag) + ">";
        std::string closing = "</" + std::string(tag) + ">";
        if (lines[i] == empty) {
            ++i;
            return;
        }
        if (lines[i] != open) fail("expected " + open);
        ++i;
        while (i < lines.size() && lines[i] != closing) out.emplace_back(lines[i++]);
        if (i >= lines.size()) fail("unterminated " + open);
        ++i;
    };
    while (i < lines.size()) {
        if (!detail::starts_with(lines[i], "<FILE ")) fail("expected <FILE>");
        StructuredLayout::File file;
        file.open_tag = std::string(lines[i++]);
        read_block("REMOVED", file.removed);
        read_block("ADDED", file.added);
        if (i >= lines.size() || lines[i] != "</FILE>") fail("expected </FILE>");
        ++i;
        layout.files.push_back(std::move(file));
    }
    return layout;
}

/// Serializes a commit into the tagged format. Renamed files are emitted
/// under their new path only. Deterministic for identical inputs.
inline StructuredText structure_commit(const Commit& commit, const std::optional<std::string>& metric_block,
                                       const DiffDocument& doc, UnitRule rule = UnitRule::Words) {
    auto trim_trailing = [](std::string_view s) {
        while (!s.empty() && detail::is_space(s.back())) s.remove_suffix(1);
        return s;
    };
    StructuredLayout layout;
    if (metric_block && !trim_trailing(*metric_block).empty()) {
        layout.prefix = std::string(trim_trailing(*metric_block));
        layout.prefix += '\n';
    }
    layout.prefix += "<COMMIT_MESSAGE>";
    layout.prefix += xml_escape(trim_trailing(commit.message));
    layout.prefix += "</COMMIT_MESSAGE>";

    for (const auto& delta : doc.files) {
        StructuredLayout::File file;
        file.open_tag = "<FILE path=\"" + xml_escape(delta.path, true) + "\">";
        file.removed.reserve(delta.removed_lines.size());
        for (const auto& l : delta.removed_lines) file.removed.push_back(xml_escape(l));
        file.added.reserve(delta.added_lines.size());
        for (const auto& l : delta.added_lines) file.added.push_back(xml_escape(l));
        layout.files.push_back(std::move(file));
    }

    StructuredText out;
    out.text = layout.render();
    out.rule = rule;
    out.unit_count = count_units(out.text, rule);
    return out;
}

/// Drops diff lines from the end (ADDED before REMOVED within the last file,
/// then the file itself) until the text fits. The metric and message blocks
/// are never cut.
inline StructuredText truncate_to_budget(const StructuredText& st, std::size_t budget) {
    if (budget == 0) throw Error(Errc::InvalidArgument, "budget must be positive");
    const std::size_t current = count_units(st.text, st.rule);
    StructuredLayout full = parse_structured_layout(st.text);

    StructuredLayout head;
    head.prefix = full.prefix;
    if (count_units(head.prefix, st.rule) > budget) {
        throw Error(Errc::BudgetTooSmall, "metric and message blocks alone exceed the unit budget of " +
                                              std::to_string(budget));
    }
    if (current <= budget) return st;

    // Item stream, in document order: per file one open item then its
    // REMOVED lines then its ADDED lines. Keeping the first m items gives a
    // cost that is non-decreasing in m, so binary search applies.
    std::size_t total_items = full.files.size() + full.line_count();
    auto keep_first = [&](std::size_t m) {
        StructuredLayout out;
        out.prefix = full.prefix;
        for (const auto& f : full.files) {
            if (m == 0) break;
            --m;
            StructuredLayout::File kept;
            kept.open_tag = f.open_tag;
            std::size_t r = std::min(m, f.removed.size());
            kept.removed.assign(f.removed.begin(), f.removed.begin() + static_cast<std::ptrdiff_t>(r));
            m -= r;
            std::size_t a = std::min(m, f.added.size());
            kept.added.assign(f.added.begin(), f.added.begin() + static_cast<std::ptrdiff_t>(a));
            m -= a;
            out.files.push_back(std::move(kept));
        }
        return out.render();
    };

    std::size_t lo = 0;  // always fits
    std::size_t hi = total_items;  // known not to fit
    while (hi - lo > 1) {
        std::size_t mid = lo + (hi - lo) / 2;
        if (count_units(keep_first(mid), st.rule) <= budget) {
            lo = mid;
        } else {
            hi = mid;
        }
    }

    StructuredText out;
    out.text = keep_first(lo);
    out.rule = st.rule;
    out.unit_count = count_units(out.text, st.rule);
    out.truncated = true;
    return out;
}

/// Stack scan over the four tag names; true when every tag is closed in
/// order and nothing else starts with '<'.
inline bool is_well_formed(std::string_view text) {
    static constexpr std::string_view kTags[] = {"COMMIT_MESSAGE", "FILE", "REMOVED", "ADDED"};
    std::vector<std::string_view> stack;
    std::size_t pos = 0;
    while ((pos = text.find('<', pos)) != std::string_view::npos) {
        std::size_t end = text.find('>', pos);
        if (end == std::string_view::npos) return false;
        std::string_view tag = text.substr(pos + 1, end - pos - 1);
        pos = end + 1;
        bool closing = !tag.empty() && tag.front() == '/';
        bool self_closing = !tag.empty() && tag.back() == '/';
        if (closing) tag.remove_prefix(1);
        if (self_closing) tag.remove_suffix(1);
        std::string_view name = tag.substr(0, tag.find(' '));
        if (std::find(std::begin(kTags), std::end(kTags), name) == std::end(kTags)) return false;
        if (closing && self_closing) return false;
        if (self_closing) continue;
        if (closing) {
            if (stack.empty() || stack.back() != name) return false;
            stack.pop_back();
        } else {
            stack.push_back(name);
        }
    }
    return stack.empty();
}

}  // namespace drs
