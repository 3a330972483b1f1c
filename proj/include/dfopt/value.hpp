#pragma once
// Values, records, bags of records and the global attribute naming.

#include <algorithm>
#include <bit>
#include <compare>
#include <cstdint>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "dfopt/error.hpp"

namespace dfopt {

struct Absent {
    friend bool operator==(Absent, Absent) { return true; }
};

enum class ValueTag : std::uint8_t { absent = 0, int64 = 1, float64 = 2, string = 3, boolean = 4 };

class Value {
public:
    Value() = default;
    Value(std::int64_t v) : v_(v) {}
    Value(int v) : v_(static_cast<std::int64_t>(v)) {}
    Value(double v) : v_(v) {}
    Value(std::string v) : v_(std::move(v)) {}
    Value(const char* v) : v_(std::string(v)) {}
    Value(bool v) : v_(v) {}

    static Value absent() { return Value(); }

    ValueTag tag() const { return static_cast<ValueTag>(v_.index()); }
    bool is_absent() const { return v_.index() == 0; }
    bool is_int() const { return tag() == ValueTag::int64; }
    bool is_float() const { return tag() == ValueTag::float64; }
    bool is_string() const { return tag() == ValueTag::string; }
    bool is_bool() const { return tag() == ValueTag::boolean; }

    std::int64_t as_int() const { return std::get<std::int64_t>(v_); }
    double as_float() const { return std::get<double>(v_); }
    const std::string& as_string() const { return std::get<std::string>(v_); }
    bool as_bool() const { return std::get<bool>(v_); }

    // Tag-and-payload equality. Floats compare bitwise.
    friend bool operator==(const Value& a, const Value& b) {
        if (a.v_.index() != b.v_.index())
            return false;
        if (a.is_float())
            return std::bit_cast<std::uint64_t>(a.as_float()) == std::bit_cast<std::uint64_t>(b.as_float());
        return a.v_ == b.v_;
    }

    // Canonical total order: tag first, then payload.
    friend std::strong_ordering operator<=>(const Value& a, const Value& b) {
        if (auto c = a.v_.index() <=> b.v_.index(); c != 0)
            return c;
        switch (a.tag()) {
        case ValueTag::absent: return std::strong_ordering::equal;
        case ValueTag::int64: return a.as_int() <=> b.as_int();
        case ValueTag::float64: {
            // order by numeric value, bit pattern breaks ties (and orders NaNs)
            double x = a.as_float(), y = b.as_float();
            if (x < y) return std::strong_ordering::less;
            if (y < x) return std::strong_ordering::greater;
            return std::bit_cast<std::uint64_t>(x) <=> std::bit_cast<std::uint64_t>(y);
        }
        case ValueTag::string: return a.as_string().compare(b.as_string()) <=> 0;
        case ValueTag::boolean: return a.as_bool() <=> b.as_bool();
        }
        return std::strong_ordering::equal;
    }

    std::string to_string() const {
        switch (tag()) {
        case ValueTag::absent: return "\\N";
        case ValueTag::int64: return std::to_string(as_int());
        case ValueTag::float64: {
            std::ostringstream os;
            os.precision(17);
            os << as_float();
            return os.str();
        }
        case ValueTag::string: return as_string();
        case ValueTag::boolean: return as_bool() ? "true" : "false";
        }
        return {};
    }

    friend std::ostream& operator<<(std::ostream& os, const Value& v) {
        if (v.is_string())
            return os << '"' << v.as_string() << '"';
        return os << v.to_string();
    }

private:
    std::variant<Absent, std::int64_t, double, std::string, bool> v_;
};

inline const char* tag_name(ValueTag t) {
    switch (t) {
    case ValueTag::absent: return "absent";
    case ValueTag::int64: return "int";
    case ValueTag::float64: return "float";
    case ValueTag::string: return "string";
    case ValueTag::boolean: return "bool";
    }
    return "?";
}

inline std::optional<ValueTag> parse_tag(const std::string& s) {
    if (s == "int" || s == "int64") return ValueTag::int64;
    if (s == "float" || s == "float64" || s == "double") return ValueTag::float64;
    if (s == "string") return ValueTag::string;
    if (s == "bool") return ValueTag::boolean;
    return std::nullopt;
}

/// An ordered tuple of values.
struct Record {
    std::vector<Value> values;

    Record() = default;
    Record(std::initializer_list<Value> vs) : values(vs) {}
    explicit Record(std::vector<Value> vs) : values(std::move(vs)) {}

    std::size_t arity() const { return values.size(); }
    const Value& operator[](std::size_t i) const { return values[i]; }
    Value& operator[](std::size_t i) { return values[i]; }

    friend bool operator==(const Record&, const Record&) = default;
    friend std::strong_ordering operator<=>(const Record& a, const Record& b) {
        return std::lexicographical_compare_three_way(a.values.begin(), a.values.end(), b.values.begin(),
                                                      b.values.end());
    }

    std::string to_string() const {
        std::string s = "<";
        for (std::size_t i = 0; i < values.size(); ++i) {
            if (i) s += ",";
            s += values[i].to_string();
        }
        return s + ">";
    }
    friend std::ostream& operator<<(std::ostream& os, const Record& r) { return os << r.to_string(); }
};

inline bool records_equal(const Record& a, const Record& b) { return a == b; }

inline Record concat(const Record& r, const Record& s) {
    Record out;
    out.values.reserve(r.arity() + s.arity());
    out.values.insert(out.values.end(), r.values.begin(), r.values.end());
    out.values.insert(out.values.end(), s.values.begin(), s.values.end());
    return out;
}

/// Unique name of a base or intermediate attribute.
struct AttributeId {
    std::uint32_t value = 0;
    friend auto operator<=>(const AttributeId&, const AttributeId&) = default;
};

/// Dense bit set over attribute ids.
class AttrSet {
public:
    AttrSet() = default;
    AttrSet(std::initializer_list<AttributeId> ids) {
        for (auto id : ids) insert(id);
    }

    void insert(AttributeId a) {
        std::size_t w = a.value / 64;
        if (w >= bits_.size()) bits_.resize(w + 1, 0);
        bits_[w] |= std::uint64_t{1} << (a.value % 64);
    }
    void erase(AttributeId a) {
        std::size_t w = a.value / 64;
        if (w < bits_.size()) bits_[w] &= ~(std::uint64_t{1} << (a.value % 64));
    }
    bool contains(AttributeId a) const {
        std::size_t w = a.value / 64;
        return w < bits_.size() && (bits_[w] >> (a.value % 64)) & 1u;
    }
    bool empty() const {
        return std::all_of(bits_.begin(), bits_.end(), [](std::uint64_t w) { return w == 0; });
    }
    std::size_t size() const {
        std::size_t n = 0;
        for (auto w : bits_) n += static_cast<std::size_t>(std::popcount(w));
        return n;
    }
    bool intersects(const AttrSet& o) const {
        std::size_t n = std::min(bits_.size(), o.bits_.size());
        for (std::size_t i = 0; i < n; ++i)
            if (bits_[i] & o.bits_[i]) return true;
        return false;
    }
    bool subset_of(const AttrSet& o) const {
        for (std::size_t i = 0; i < bits_.size(); ++i) {
            std::uint64_t other = i < o.bits_.size() ? o.bits_[i] : 0;
            if (bits_[i] & ~other) return false;
        }
        return true;
    }
    AttrSet& operator|=(const AttrSet& o) {
        if (o.bits_.size() > bits_.size()) bits_.resize(o.bits_.size(), 0);
        for (std::size_t i = 0; i < o.bits_.size(); ++i) bits_[i] |= o.bits_[i];
        return *this;
    }
    AttrSet& operator&=(const AttrSet& o) {
        for (std::size_t i = 0; i < bits_.size(); ++i) bits_[i] &= i < o.bits_.size() ? o.bits_[i] : 0;
        return *this;
    }
    AttrSet& operator-=(const AttrSet& o) {
        for (std::size_t i = 0; i < bits_.size() && i < o.bits_.size(); ++i) bits_[i] &= ~o.bits_[i];
        return *this;
    }
    friend AttrSet operator|(AttrSet a, const AttrSet& b) { return a |= b; }
    friend AttrSet operator&(AttrSet a, const AttrSet& b) { return a &= b; }
    friend AttrSet operator-(AttrSet a, const AttrSet& b) { return a -= b; }
    friend bool operator==(const AttrSet& a, const AttrSet& b) { return a.subset_of(b) && b.subset_of(a); }

    std::vector<AttributeId> to_vector() const {
        std::vector<AttributeId> out;
        for (std::size_t w = 0; w < bits_.size(); ++w)
            for (std::uint32_t b = 0; b < 64; ++b)
                if ((bits_[w] >> b) & 1u) out.push_back(AttributeId{static_cast<std::uint32_t>(w * 64 + b)});
        return out;
    }

private:
    std::vector<std::uint64_t> bits_;
};

using Layout = std::vector<AttributeId>;

inline AttrSet to_set(std::span<const AttributeId> layout) {
    AttrSet s;
    for (auto a : layout) s.insert(a);
    return s;
}

/// Values at the positions of `attrs`, in layout order.
inline Record project(const Record& r, const Layout& layout, const AttrSet& attrs) {
    if (r.arity() != layout.size())
        throw LayoutMismatch("record arity " + std::to_string(r.arity()) + " does not match layout size " +
                             std::to_string(layout.size()));
    for (auto a : attrs.to_vector())
        if (std::find(layout.begin(), layout.end(), a) == layout.end())
            throw LayoutMismatch("attribute #" + std::to_string(a.value) + " is not part of the layout");
    Record out;
    for (std::size_t i = 0; i < layout.size(); ++i)
        if (attrs.contains(layout[i])) out.values.push_back(r[i]);
    return out;
}

/// Unordered bag of records under a fixed attribute layout.
struct DataSet {
    Layout layout;
    std::vector<Record> records;

    void validate() const {
        for (const auto& r : records)
            if (r.arity() != layout.size())
                throw ValidationError("record " + r.to_string() + " has arity " + std::to_string(r.arity()) +
                                      ", layout has " + std::to_string(layout.size()));
    }
};

/// Bag equality. Both data sets must share a layout.
inline bool datasets_equal(const DataSet& a, const DataSet& b) {
    if (a.layout != b.layout)
        throw LayoutMismatch("data sets have different layouts; align them through the redirection map first");
    if (a.records.size() != b.records.size())
        return false;
    auto x = a.records;
    auto y = b.records;
    std::sort(x.begin(), x.end());
    std::sort(y.begin(), y.end());
    return x == y;
}

struct AttributeInfo {
    AttributeId id;
    std::string name;       // display name, e.g. "A" or "Reduce_g.2"
    std::string dataset;    // source name, or operator id for created attributes
    std::size_t position = 0;
    bool created = false;
    std::optional<ValueTag> type; // known for base attributes
};

/// Unique naming of all attributes of a flow plus the redirection map
/// (data set, position) -> attribute.
class GlobalRecord {
public:
    AttributeId add_attribute(std::string name, std::string dataset, std::size_t position, bool created,
                              std::optional<ValueTag> type = std::nullopt) {
        AttributeId id{static_cast<std::uint32_t>(attrs_.size())};
        attrs_.push_back(AttributeInfo{id, std::move(name), std::move(dataset), position, created, type});
        return id;
    }

    void map(const std::string& dataset, std::size_t position, AttributeId id) {
        redirection_[{dataset, position}] = id;
    }

    void map_layout(const std::string& dataset, const Layout& layout) {
        for (std::size_t i = 0; i < layout.size(); ++i) map(dataset, i, layout[i]);
    }

    AttributeId resolve(const std::string& dataset, std::size_t position) const {
        auto it = redirection_.find({dataset, position});
        if (it == redirection_.end())
            throw ValidationError("no attribute for position " + std::to_string(position) + " of data set '" +
                                  dataset + "'");
        return it->second;
    }

    Layout layout_of(const std::string& dataset) const {
        Layout out;
        for (std::size_t i = 0;; ++i) {
            auto it = redirection_.find({dataset, i});
            if (it == redirection_.end()) break;
            out.push_back(it->second);
        }
        return out;
    }

    std::size_t size() const { return attrs_.size(); }
    const AttributeInfo& info(AttributeId id) const { return attrs_.at(id.value); }
    const std::vector<AttributeInfo>& attributes() const { return attrs_; }
    const std::string& name(AttributeId id) const { return info(id).name; }

    std::optional<AttributeId> find(const std::string& name) const {
        for (const auto& a : attrs_)
            if (a.dataset + "." + a.name == name) return a.id;
        std::optional<AttributeId> hit;
        for (const auto& a : attrs_) {
            if (a.name != name) continue;
            if (hit)
                throw ValidationError("attribute name '" + name + "' is ambiguous; qualify it as <dataset>.<name>");
            hit = a.id;
        }
        return hit;
    }

    std::string format(const AttrSet& s) const {
        std::string out = "{";
        bool first = true;
        for (auto a : s.to_vector()) {
            if (!first) out += ",";
            first = false;
            out += a.value < attrs_.size() ? attrs_[a.value].name : "#" + std::to_string(a.value);
        }
        return out + "}";
    }

private:
    std::vector<AttributeInfo> attrs_;
    std::map<std::pair<std::string, std::size_t>, AttributeId> redirection_;
};

} // namespace dfopt
