#pragma once
// Builds UDF text with symbolic jump targets: `@name` in an instruction refers
// to the instruction added right after mark(name).

#include <cctype>
#include <map>
#include <string>
#include <vector>

namespace dfopt::test {

class Code {
public:
    explicit Code(std::string header) { add(std::move(header)); }

    Code& add(std::string text) {
        for (auto& m : pending_) marks_[m] = lines_.size();
        pending_.clear();
        lines_.push_back(std::move(text));
        return *this;
    }
    Code& mark(const std::string& name) {
        pending_.push_back(name);
        return *this;
    }

    std::string str() const {
        std::string out;
        for (std::size_t i = 0; i < lines_.size(); ++i) {
            std::string t = lines_[i];
            for (auto p = t.find('@'); p != std::string::npos; p = t.find('@')) {
                auto e = p + 1;
                while (e < t.size() && (std::isalnum(static_cast<unsigned char>(t[e])) || t[e] == '_')) ++e;
                t.replace(p, e - p, std::to_string(label(marks_.at(t.substr(p + 1, e - p - 1)))));
            }
            out += std::to_string(label(i)) + ": " + t + "\n";
        }
        return out;
    }

private:
    static std::size_t label(std::size_t i) { return 10 + i; }

    std::vector<std::string> lines_;
    std::vector<std::string> pending_;
    std::map<std::string, std::size_t> marks_;
};

} // namespace dfopt::test
