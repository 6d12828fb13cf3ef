#include "report.hpp"

#include <cmath>

#include "dnx/io.hpp"

namespace dnx::cli {

std::string quote(const std::string& s) {
    std::string out = "\"";
    for (char c : s) {
        switch (c) {
            case '"': out += "\\\""; break;
            case '\\': out += "\\\\"; break;
            case '\n': out += "\\n"; break;
            case '\t': out += "\\t"; break;
            default: out += c;
        }
    }
    return out + '"';
}

JsonObject& JsonObject::put(const std::string& key, std::string scalar) {
    fields_.push_back({Field::Kind::scalar, key, std::move(scalar), {}});
    return *this;
}

JsonObject& JsonObject::add(const std::string& key, double v) {
    return put(key, std::isfinite(v) ? format_double(v) : "null");
}
JsonObject& JsonObject::add(const std::string& key, int v) { return put(key, std::to_string(v)); }
JsonObject& JsonObject::add(const std::string& key, long v) { return put(key, std::to_string(v)); }
JsonObject& JsonObject::add(const std::string& key, std::size_t v) {
    return put(key, std::to_string(v));
}
JsonObject& JsonObject::add(const std::string& key, bool v) { return put(key, v ? "true" : "false"); }
JsonObject& JsonObject::add(const std::string& key, const std::string& v) { return put(key, quote(v)); }

JsonObject& JsonObject::add(const std::string& key, const JsonObject& v) {
    fields_.push_back({Field::Kind::object, key, {}, {v}});
    return *this;
}

JsonObject& JsonObject::add(const std::string& key, const std::vector<JsonObject>& v) {
    fields_.push_back({Field::Kind::array, key, {}, v});
    return *this;
}

std::string JsonObject::str(int indent) const {
    const std::string pad(static_cast<std::size_t>(indent) + 2, ' ');
    const std::string close(static_cast<std::size_t>(indent), ' ');
    if (fields_.empty()) return "{}";
    std::string out = "{\n";
    for (std::size_t i = 0; i < fields_.size(); ++i) {
        const auto& f = fields_[i];
        out += pad + quote(f.key) + ": ";
        switch (f.kind) {
            case Field::Kind::scalar: out += f.scalar; break;
            case Field::Kind::object: out += f.children.front().str(indent + 2); break;
            case Field::Kind::array:
                out += '[';
                for (std::size_t j = 0; j < f.children.size(); ++j) {
                    out += j ? ",\n" : "\n";
                    out += pad + "  " + f.children[j].str(indent + 4);
                }
                out += f.children.empty() ? "]" : "\n" + pad + "]";
                break;
        }
        out += i + 1 < fields_.size() ? ",\n" : "\n";
    }
    return out + close + "}";
}

}  // namespace dnx::cli
