#pragma once

#include <string>
#include <vector>

namespace dnx::cli {

// Insertion-ordered JSON object written with %.17g numbers.
class JsonObject {
 public:
    JsonObject& add(const std::string& key, double v);
    JsonObject& add(const std::string& key, int v);
    JsonObject& add(const std::string& key, long v);
    JsonObject& add(const std::string& key, std::size_t v);
    JsonObject& add(const std::string& key, bool v);
    JsonObject& add(const std::string& key, const std::string& v);
    JsonObject& add(const std::string& key, const char* v) { return add(key, std::string(v)); }
    JsonObject& add(const std::string& key, const JsonObject& v);
    JsonObject& add(const std::string& key, const std::vector<JsonObject>& v);

    std::string str(int indent = 0) const;

 private:
    struct Field {
        enum class Kind { scalar, object, array } kind = Kind::scalar;
        std::string key;
        std::string scalar;
        std::vector<JsonObject> children;
    };
    JsonObject& put(const std::string& key, std::string scalar);

    std::vector<Field> fields_;
};

std::string quote(const std::string& s);

}  // namespace dnx::cli
