#include "mmfusion/text.hpp"

#include <charconv>
#include <cmath>

#include "mmfusion/errors.hpp"

namespace mmfusion::text {

std::string format_double(double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    if (ec != std::errc{}) {
        throw IoError("format_double: conversion failed");
    }
    return std::string(buf, ptr);
}

std::string format_double_hex(double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::hex);
    if (ec != std::errc{}) {
        throw IoError("format_double_hex: conversion failed");
    }
    std::string body(buf, ptr);
    // to_chars omits the 0x prefix; add it so the text is unambiguous
    if (!body.empty() && body.front() == '-') {
        return "-0x" + body.substr(1);
    }
    return "0x" + body;
}

double parse_double(std::string_view s) {
    s = trim(s);
    if (s.empty()) {
        throw IoError("parse_double: empty token");
    }
    bool negative = false;
    std::string_view body = s;
    if (body.front() == '+' || body.front() == '-') {
        negative = body.front() == '-';
        body.remove_prefix(1);
    }
    if (body.starts_with("0x") || body.starts_with("0X")) {
        body.remove_prefix(2);
        double mag = 0.0;
        auto [ptr, ec] =
            std::from_chars(body.data(), body.data() + body.size(), mag, std::chars_format::hex);
        if (ec != std::errc{} || ptr != body.data() + body.size()) {
            throw IoError("parse_double: bad hexfloat '" + std::string(s) + "'");
        }
        return negative ? -mag : mag;
    }
    double out = 0.0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    if (ec != std::errc{} || ptr != s.data() + s.size()) {
        throw IoError("parse_double: bad number '" + std::string(s) + "'");
    }
    return out;
}

long long parse_int(std::string_view s) {
    s = trim(s);
    long long out = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    if (ec != std::errc{} || ptr != s.data() + s.size()) {
        throw IoError("parse_int: bad integer '" + std::string(s) + "'");
    }
    return out;
}

unsigned long long parse_uint(std::string_view s) {
    s = trim(s);
    unsigned long long out = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    if (ec != std::errc{} || ptr != s.data() + s.size()) {
        throw IoError("parse_uint: bad integer '" + std::string(s) + "'");
    }
    return out;
}

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) {
        s.remove_prefix(1);
    }
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) {
        s.remove_suffix(1);
    }
    return s;
}

std::vector<std::string_view> split(std::string_view s, char delim) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    for (std::size_t i = 0; i <= s.size(); ++i) {
        if (i == s.size() || s[i] == delim) {
            out.push_back(s.substr(start, i - start));
            start = i + 1;
        }
    }
    return out;
}

}  // namespace mmfusion::text
