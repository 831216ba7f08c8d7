#pragma once

#include <cctype>
#include <cstdint>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "fontpair/error.hpp"

// Minimal TOML subset for config files: [sections], bare keys, strings,
// integers, floats, booleans and flat arrays. Comments start with '#'.
namespace fontpair::minitoml {

struct Value {
    enum class Kind { String, Integer, Float, Boolean, Array } kind = Kind::String;
    std::string str;
    int64_t integer = 0;
    double number = 0.0;
    bool boolean = false;
    std::vector<Value> array;

    double as_number() const {
        return kind == Kind::Integer ? double(integer) : number;
    }
};

using Table = std::map<std::string, std::map<std::string, Value>>;

namespace detail {

inline std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

inline Value parse_value(const std::string& raw, const std::string& where) {
    std::string s = trim(raw);
    if (s.empty()) fail("config.BadToml", "empty value at " + where);
    Value v;
    if (s.front() == '"') {
        if (s.size() < 2 || s.back() != '"')
            fail("config.BadToml", "unterminated string at " + where);
        v.kind = Value::Kind::String;
        v.str = s.substr(1, s.size() - 2);
        return v;
    }
    if (s.front() == '[') {
        if (s.back() != ']') fail("config.BadToml", "unterminated array at " + where);
        v.kind = Value::Kind::Array;
        std::string inner = s.substr(1, s.size() - 2);
        std::string item;
        int depth = 0;
        for (char c : inner) {
            if (c == '[') ++depth;
            if (c == ']') --depth;
            if (c == ',' && depth == 0) {
                if (!trim(item).empty()) v.array.push_back(parse_value(item, where));
                item.clear();
            } else {
                item += c;
            }
        }
        if (!trim(item).empty()) v.array.push_back(parse_value(item, where));
        return v;
    }
    if (s == "true" || s == "false") {
        v.kind = Value::Kind::Boolean;
        v.boolean = s == "true";
        return v;
    }
    bool floaty = s.find_first_of(".eE") != std::string::npos;
    try {
        size_t used = 0;
        if (floaty) {
            v.kind = Value::Kind::Float;
            v.number = std::stod(s, &used);
        } else {
            v.kind = Value::Kind::Integer;
            v.integer = std::stoll(s, &used);
        }
        if (used != s.size()) fail("config.BadToml", "trailing junk at " + where);
    } catch (const std::exception&) {
        fail("config.BadToml", "cannot parse value '" + s + "' at " + where);
    }
    return v;
}

} // namespace detail

inline Table parse_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail("config.UnreadableFile", "cannot open " + path);
    Table table;
    std::string section;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        // Strip comments outside strings.
        bool in_str = false;
        for (size_t i = 0; i < line.size(); ++i) {
            if (line[i] == '"') in_str = !in_str;
            if (line[i] == '#' && !in_str) {
                line.resize(i);
                break;
            }
        }
        std::string s = detail::trim(line);
        if (s.empty()) continue;
        std::string where = path + ":" + std::to_string(lineno);
        if (s.front() == '[') {
            if (s.back() != ']') fail("config.BadToml", "bad section header at " + where);
            section = detail::trim(s.substr(1, s.size() - 2));
            table[section];
            continue;
        }
        size_t eq = s.find('=');
        if (eq == std::string::npos) fail("config.BadToml", "expected key = value at " + where);
        std::string key = detail::trim(s.substr(0, eq));
        if (key.empty()) fail("config.BadToml", "empty key at " + where);
        table[section][key] = detail::parse_value(s.substr(eq + 1), where);
    }
    return table;
}

} // namespace fontpair::minitoml
