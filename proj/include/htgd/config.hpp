#ifndef HTGD_CONFIG_HPP
#define HTGD_CONFIG_HPP

// Experiment configuration: a flat key = value file with section headers,
// or the same schema as JSON.
//
//   [experiment]
//   kind = logistic            # logistic | symmetric | quadratic_toy
//   N = 500
//   ...
//   [method.htgd]
//   optimizer = htgd
//   ...
//
// Lists are comma-separated. Lines starting with '#' or ';' are comments.

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "htgd/engine.hpp"
#include "htgd/error.hpp"
#include "htgd/io.hpp"
#include "htgd/models.hpp"

namespace htgd {

enum class ExperimentKind { logistic, symmetric, quadratic_toy };

constexpr std::string_view to_string(ExperimentKind k) noexcept
{
    switch (k) {
    case ExperimentKind::logistic: return "logistic";
    case ExperimentKind::symmetric: return "symmetric";
    case ExperimentKind::quadratic_toy: return "quadratic_toy";
    }
    return "?";
}

inline ExperimentKind parse_experiment_kind(std::string_view s)
{
    if (s == "logistic") return ExperimentKind::logistic;
    if (s == "symmetric") return ExperimentKind::symmetric;
    if (s == "quadratic_toy") return ExperimentKind::quadratic_toy;
    throw ConfigError("unknown experiment kind '" + std::string(s) + "'");
}

/// One compared method: a name (used in file names and seeds) and its
/// optimizer settings.
struct MethodConfig
{
    std::string name;
    OptimizerConfig optimizer;
};

struct ExperimentConfig
{
    ExperimentKind kind = ExperimentKind::logistic;
    std::size_t population_size = 0;
    std::size_t feature_dim = 0;            ///< d (logistic)
    std::vector<std::size_t> subfeatures;   ///< 0-based feature indices of the link's marginal
    Vector true_theta;                      ///< logistic (alpha, beta) or quadratic-toy center
    double mixture_mean = 4.0;              ///< symmetric: components at +-mixture_mean
    double mixture_sd = 1.0;
    double bandwidth = 0.0;                 ///< symmetric: 0 selects Silverman's rule
    std::vector<double> curvature;          ///< quadratic toy: diagonal of A (default ones)
    double noise_sd = 1.0;                  ///< quadratic toy: spread of the records
    std::size_t replications = 1;
    std::uint64_t master_seed = 0;
    std::string output_dir = "out";
    bool fresh_data = true;                 ///< new population per replication
    std::size_t jobs = 0;                   ///< 0: hardware concurrency
    bool write_traces = true;
    std::vector<MethodConfig> methods;

    /// Dimension of theta for this experiment.
    std::size_t param_dim() const
    {
        switch (kind) {
        case ExperimentKind::logistic: return feature_dim + 1;
        case ExperimentKind::symmetric: return 1;
        case ExperimentKind::quadratic_toy: return static_cast<std::size_t>(true_theta.size());
        }
        return 0;
    }

    const MethodConfig& method(std::string_view name) const
    {
        for (const auto& m : methods)
            if (m.name == name)
                return m;
        throw ConfigError("no method named '" + std::string(name) + "'");
    }

    void validate() const
    {
        if (population_size < 2)
            throw ConfigError("N must be at least 2");
        if (replications < 1)
            throw ConfigError("replications must be at least 1");
        if (methods.empty())
            throw ConfigError("at least one [method.NAME] section is required");
        switch (kind) {
        case ExperimentKind::logistic:
            if (feature_dim < 1)
                throw ConfigError("logistic: d must be at least 1");
            if (static_cast<std::size_t>(true_theta.size()) != feature_dim + 1)
                throw ConfigError("logistic: true_theta must have d + 1 entries (alpha, beta_1..beta_d)");
            if (subfeatures.size() > feature_dim)
                throw ConfigError("logistic: more subfeatures than features");
            for (std::size_t f : subfeatures)
                if (f >= feature_dim)
                    throw ConfigError("logistic: subfeature index out of range (features are numbered 1..d)");
            break;
        case ExperimentKind::symmetric:
            if (!(mixture_sd >= 0.0) || !std::isfinite(mixture_mean))
                throw ConfigError("symmetric: mixture_sd must be nonnegative and mixture_mean finite");
            if (!(bandwidth >= 0.0))
                throw ConfigError("symmetric: bandwidth must be nonnegative");
            break;
        case ExperimentKind::quadratic_toy:
            if (true_theta.size() < 1)
                throw ConfigError("quadratic_toy: true_theta (the center) must be given");
            if (!curvature.empty() && curvature.size() != static_cast<std::size_t>(true_theta.size()))
                throw ConfigError("quadratic_toy: curvature must have one entry per coordinate");
            for (double c : curvature)
                if (!(c > 0.0))
                    throw ConfigError("quadratic_toy: curvature entries must be positive");
            if (!(noise_sd >= 0.0))
                throw ConfigError("quadratic_toy: noise_sd must be nonnegative");
            break;
        }
        std::set<std::string> names;
        for (const auto& m : methods) {
            if (!names.insert(m.name).second)
                throw ConfigError("duplicate method name '" + m.name + "'");
            if (m.optimizer.optimizer == OptimizerKind::htgd)
                validate_link(m);
            try {
                m.optimizer.validate(population_size);
            } catch (const ConfigError& e) {
                throw ConfigError("method '" + m.name + "': " + e.what());
            }
        }
    }

private:
    void validate_link(const MethodConfig& m) const
    {
        const std::string& link = m.optimizer.link;
        bool ok = link == "constant" || link == "gradient_norm";
        if (kind == ExperimentKind::logistic && link == "subfeature")
            ok = !subfeatures.empty();
        if (kind == ExperimentKind::symmetric && link == "abs_deviation")
            ok = true;
        if (!ok)
            throw ConfigError("method '" + m.name + "': link '" + link + "' is not available for "
                              + std::string(to_string(kind)) + " experiments"
                              + (link == "subfeature" ? " (or subfeatures is empty)" : ""));
    }
};

namespace detail {

using RawSections = std::map<std::string, std::map<std::string, std::string>>;

inline std::string trim(std::string_view s)
{
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front())))
        s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back())))
        s.remove_suffix(1);
    return std::string(s);
}

inline RawSections parse_ini(std::istream& in)
{
    RawSections sections;
    std::string current;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string t = trim(line);
        if (t.empty() || t[0] == '#' || t[0] == ';')
            continue;
        if (t.front() == '[') {
            if (t.back() != ']')
                throw ConfigError("line " + std::to_string(line_no) + ": unterminated section header");
            current = trim(std::string_view(t).substr(1, t.size() - 2));
            if (current.empty())
                throw ConfigError("line " + std::to_string(line_no) + ": empty section name");
            if (sections.count(current))
                throw ConfigError("line " + std::to_string(line_no) + ": duplicate section [" + current + "]");
            sections[current];
            continue;
        }
        const auto eq = t.find('=');
        if (eq == std::string::npos)
            throw ConfigError("line " + std::to_string(line_no) + ": expected key = value");
        if (current.empty())
            throw ConfigError("line " + std::to_string(line_no) + ": key outside of any section");
        std::string key = trim(std::string_view(t).substr(0, eq));
        std::string value = trim(std::string_view(t).substr(eq + 1));
        const auto hash = value.find(" #");
        if (hash != std::string::npos)
            value = trim(std::string_view(value).substr(0, hash));
        if (!sections[current].emplace(key, value).second)
            throw ConfigError("line " + std::to_string(line_no) + ": duplicate key '" + key + "'");
    }
    return sections;
}

inline std::string json_scalar(const nlohmann::json& v)
{
    if (v.is_string())
        return v.get<std::string>();
    if (v.is_boolean())
        return v.get<bool>() ? "true" : "false";
    if (v.is_number_integer())
        return std::to_string(v.get<long long>());
    if (v.is_number_unsigned())
        return std::to_string(v.get<unsigned long long>());
    if (v.is_number_float())
        return io::format_double(v.get<double>());
    throw ConfigError("unsupported JSON value: " + v.dump());
}

inline std::map<std::string, std::string> json_section(const nlohmann::json& obj, const std::string& where)
{
    if (!obj.is_object())
        throw ConfigError("JSON: '" + where + "' must be an object");
    std::map<std::string, std::string> out;
    for (const auto& [key, value] : obj.items()) {
        if (value.is_array()) {
            std::string joined;
            for (std::size_t i = 0; i < value.size(); ++i)
                joined += (i ? "," : "") + json_scalar(value[i]);
            out[key] = joined;
        } else {
            out[key] = json_scalar(value);
        }
    }
    return out;
}

/// JSON layout: {"experiment": {...}, "methods": {"NAME": {...}, ...}}.
inline RawSections parse_json(std::istream& in)
{
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("JSON: ") + e.what());
    }
    if (!doc.is_object())
        throw ConfigError("JSON: top level must be an object");
    RawSections sections;
    for (const auto& [key, value] : doc.items()) {
        if (key == "experiment") {
            sections["experiment"] = json_section(value, key);
        } else if (key == "methods") {
            if (!value.is_object())
                throw ConfigError("JSON: 'methods' must be an object keyed by method name");
            for (const auto& [name, m] : value.items())
                sections["method." + name] = json_section(m, "methods." + name);
        } else {
            throw ConfigError("JSON: unknown top-level key '" + key + "'");
        }
    }
    return sections;
}

/// Typed, consuming access to one section; leftover keys are errors.
class SectionReader
{
public:
    SectionReader(std::string name, std::map<std::string, std::string> values)
        : name_(std::move(name)), values_(std::move(values))
    {
    }

    bool has(const std::string& key) const { return values_.count(key) != 0; }

    std::string text(const std::string& key, std::string fallback)
    {
        auto it = values_.find(key);
        if (it == values_.end())
            return fallback;
        std::string v = std::move(it->second);
        values_.erase(it);
        return v;
    }

    std::string required(const std::string& key)
    {
        if (!has(key))
            throw ConfigError("[" + name_ + "]: missing required key '" + key + "'");
        return text(key, {});
    }

    double number(const std::string& key, double fallback)
    {
        if (!has(key))
            return fallback;
        const std::string v = text(key, {});
        if (v == "inf")
            return std::numeric_limits<double>::infinity();
        try {
            return io::parse_double(v);
        } catch (const InvalidArgument&) {
            throw ConfigError("[" + name_ + "] " + key + ": not a number: '" + v + "'");
        }
    }

    std::uint64_t integer(const std::string& key, std::uint64_t fallback)
    {
        if (!has(key))
            return fallback;
        const std::string v = text(key, {});
        std::uint64_t out = 0;
        const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
        if (res.ec != std::errc{} || res.ptr != v.data() + v.size())
            throw ConfigError("[" + name_ + "] " + key + ": not a nonnegative integer: '" + v + "'");
        return out;
    }

    bool boolean(const std::string& key, bool fallback)
    {
        if (!has(key))
            return fallback;
        const std::string v = text(key, {});
        if (v == "true" || v == "1" || v == "yes")
            return true;
        if (v == "false" || v == "0" || v == "no")
            return false;
        throw ConfigError("[" + name_ + "] " + key + ": not a boolean: '" + v + "'");
    }

    std::vector<double> numbers(const std::string& key)
    {
        std::vector<double> out;
        if (!has(key))
            return out;
        const std::string v = text(key, {});
        if (trim(v).empty())
            return out;
        for (const auto& field : io::split(v)) {
            try {
                out.push_back(io::parse_double(field));
            } catch (const InvalidArgument&) {
                throw ConfigError("[" + name_ + "] " + key + ": not a number: '" + field + "'");
            }
        }
        return out;
    }

    void finish() const
    {
        if (!values_.empty())
            throw ConfigError("[" + name_ + "]: unknown key '" + values_.begin()->first + "'");
    }

private:
    std::string name_;
    std::map<std::string, std::string> values_;
};

inline ExperimentConfig build_config(RawSections sections)
{
    ExperimentConfig cfg;
    auto exp_it = sections.find("experiment");
    if (exp_it == sections.end())
        throw ConfigError("missing [experiment] section");
    SectionReader exp("experiment", std::move(exp_it->second));
    sections.erase(exp_it);

    cfg.kind = parse_experiment_kind(exp.required("kind"));
    cfg.population_size = exp.integer("N", 0);
    cfg.feature_dim = exp.integer("d", 0);
    for (double f : exp.numbers("subfeatures")) {
        if (!(f >= 1.0) || f != std::floor(f))
            throw ConfigError("[experiment] subfeatures: entries are feature numbers 1..d");
        cfg.subfeatures.push_back(static_cast<std::size_t>(f) - 1);
    }
    const std::vector<double> theta = exp.numbers("true_theta");
    cfg.true_theta = Eigen::Map<const Vector>(theta.data(), static_cast<Eigen::Index>(theta.size()));
    cfg.mixture_mean = exp.number("mixture_mean", cfg.mixture_mean);
    cfg.mixture_sd = exp.number("mixture_sd", cfg.mixture_sd);
    cfg.bandwidth = exp.number("bandwidth", cfg.bandwidth);
    cfg.curvature = exp.numbers("curvature");
    cfg.noise_sd = exp.number("noise_sd", cfg.noise_sd);
    cfg.replications = exp.integer("replications", cfg.replications);
    cfg.master_seed = exp.integer("master_seed", cfg.master_seed);
    cfg.output_dir = exp.text("output_dir", cfg.output_dir);
    cfg.fresh_data = exp.boolean("fresh_data", cfg.fresh_data);
    cfg.jobs = exp.integer("jobs", cfg.jobs);
    cfg.write_traces = exp.boolean("write_traces", cfg.write_traces);
    exp.finish();

    for (auto& [section, values] : sections) {
        std::string name;
        if (section.rfind("method.", 0) == 0)
            name = section.substr(7);
        if (name.empty())
            throw ConfigError("unknown section [" + section + "] (expected [experiment] or [method.NAME])");
        for (char c : name)
            if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-'))
                throw ConfigError("method name '" + name + "' may only contain letters, digits, '_' and '-'");
        SectionReader r(section, std::move(values));
        MethodConfig m;
        m.name = name;
        OptimizerConfig& o = m.optimizer;
        o.optimizer = parse_optimizer_kind(r.required("optimizer"));
        o.design = parse_design_kind(r.text("design", "poisson"));
        o.link = r.text("link", o.link);
        o.gamma0 = r.number("gamma0", o.gamma0);
        o.alpha = r.number("alpha", o.alpha);
        o.iterations = r.integer("iterations", o.iterations);
        o.expected_size = r.number("expected_size", o.expected_size);
        o.prob_floor = r.number("prob_floor", o.prob_floor);
        o.projection_radius = r.number("projection_radius", o.projection_radius);
        r.finish();
        cfg.methods.push_back(std::move(m));
    }
    return cfg;
}

} // namespace detail

/// Parses a configuration; `json` selects the JSON representation. The
/// result is validated.
inline ExperimentConfig parse_config(std::istream& in, bool json)
{
    ExperimentConfig cfg = detail::build_config(json ? detail::parse_json(in) : detail::parse_ini(in));
    cfg.validate();
    return cfg;
}

inline ExperimentConfig parse_config(const std::string& text, bool json)
{
    std::istringstream in(text);
    return parse_config(in, json);
}

/// Loads a configuration file; files ending in .json are read as JSON.
inline ExperimentConfig load_config(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw ConfigError("cannot read config file '" + path + "'");
    const bool json = path.size() >= 5 && path.compare(path.size() - 5, 5, ".json") == 0;
    return parse_config(in, json);
}

} // namespace htgd

#endif // HTGD_CONFIG_HPP
