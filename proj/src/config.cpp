#include "nestco/config.hpp"

#include "nestco/errors.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <type_traits>

namespace nestco::config {

namespace {

class Fields {
public:
    Fields(const json& j, std::string where) : j_(j), where_(std::move(where))
    {
        if (!j_.is_object())
            throw ConfigError(where_ + " must be a JSON object");
    }

    template <class T>
    void get(const std::string& key, T& out)
    {
        seen_.insert(key);
        if (!j_.contains(key))
            return;
        out = convert<T>(j_.at(key), path(key));
    }

    template <class F>
    void sub(const std::string& key, F&& parse)
    {
        seen_.insert(key);
        if (j_.contains(key))
            parse(j_.at(key), path(key));
    }

    void finish() const
    {
        for (const auto& [k, v] : j_.items())
            if (!seen_.count(k))
                throw ConfigError("unknown key '" + path(k) + "'");
    }

    std::string path(const std::string& key) const { return where_.empty() ? key : where_ + "." + key; }

    template <class T>
    static T convert(const json& v, const std::string& where)
    {
        if constexpr (std::is_same_v<T, bool>) {
            if (!v.is_boolean())
                throw ConfigError(where + " must be true or false");
        } else if constexpr (std::is_integral_v<T> && std::is_unsigned_v<T>) {
            if (!v.is_number_unsigned())
                throw ConfigError(where + " must be a non-negative integer");
        } else if constexpr (std::is_floating_point_v<T>) {
            if (!v.is_number())
                throw ConfigError(where + " must be a number");
        } else if constexpr (std::is_same_v<T, std::string>) {
            if (!v.is_string())
                throw ConfigError(where + " must be a string");
        } else {
            if (!v.is_array())
                throw ConfigError(where + " must be a list");
            T out;
            for (std::size_t i = 0; i < v.size(); ++i)
                out.push_back(convert<typename T::value_type>(v[i], where + "[" + std::to_string(i) + "]"));
            return out;
        }
        return v.get<T>();
    }

private:
    const json& j_;
    std::string where_;
    std::set<std::string> seen_;
};

template <class F>
void checked(const std::string& where, F&& f)
{
    try {
        f();
    } catch (const ConfigError&) {
        throw;
    } catch (const std::exception& e) {
        throw ConfigError(where + ": " + e.what());
    }
}

void parse(const json& j, LrSchedule& s, const std::string& where)
{
    Fields f(j, where);
    std::string decay = to_string(s.decay);
    f.get("base", s.base);
    f.get("warmup_iterations", s.warmup_iterations);
    f.get("decay", decay);
    f.get("milestones", s.milestones);
    f.get("gamma", s.gamma);
    f.get("final_lr", s.final_lr);
    f.get("total_epochs", s.total_epochs);
    f.finish();
    checked(where, [&] {
        s.decay = lr_decay_from_string(decay);
        s.validate();
    });
}

void parse(const json& j, noise::NoiseSpec& s, const std::string& where)
{
    Fields f(j, where);
    std::string kind = noise::to_string(s.kind);
    f.get("kind", kind);
    f.get("tau", s.tau);
    f.get("seed", s.seed);
    f.sub("pair_map", [&](const json& pm, const std::string& at) {
        s.pair_map.clear();
        if (pm.is_string()) {
            if (pm.get<std::string>() != "cifar10")
                throw ConfigError(at + ": unknown preset '" + pm.get<std::string>() + "'");
            s.pair_map = noise::cifar10_pair_map();
            return;
        }
        const auto pairs = Fields::convert<std::vector<std::vector<std::size_t>>>(pm, at);
        for (const auto& p : pairs) {
            if (p.size() != 2)
                throw ConfigError(at + " entries must be [from, to] pairs");
            s.pair_map[p[0]] = p[1];
        }
    });
    f.finish();
    checked(where, [&] { s.kind = noise::noise_kind_from_string(kind); });
}

void parse(const json& j, train::StageOneConfig& s, const std::string& where)
{
    Fields f(j, where);
    f.get("epochs", s.epochs);
    f.get("batch_size", s.batch_size);
    f.sub("lr", [&](const json& v, const std::string& at) { parse(v, s.lr, at); });
    f.get("momentum", s.momentum);
    f.get("weight_decay", s.weight_decay);
    f.get("n_mask_samples", s.n_mask_samples);
    f.get("seed", s.seed);
    f.finish();
    checked(where, [&] { s.validate(); });
}

void parse(const json& j, train::CoTeachConfig& s, const std::string& where)
{
    Fields f(j, where);
    f.get("lambda_forget", s.lambda_forget);
    f.get("epochs", s.epochs);
    f.get("batch_size", s.batch_size);
    f.sub("lr", [&](const json& v, const std::string& at) { parse(v, s.lr, at); });
    f.get("momentum", s.momentum);
    f.get("weight_decay", s.weight_decay);
    f.get("freeze_encoder", s.freeze_encoder);
    f.get("n_mask_samples", s.n_mask_samples);
    f.get("seed", s.seed);
    f.finish();
    checked(where, [&] { s.validate(); });
}

void parse(const json& j, analysis::ProbeConfig& s, const std::string& where)
{
    Fields f(j, where);
    f.get("hidden", s.hidden);
    f.get("epochs", s.epochs);
    f.get("batch_size", s.batch_size);
    f.get("lr", s.lr);
    f.get("momentum", s.momentum);
    f.get("train_fraction", s.train_fraction);
    f.get("min_examples", s.min_examples);
    f.get("seed", s.seed);
    f.finish();
    if (!(s.train_fraction > 0.0 && s.train_fraction < 1.0))
        throw ConfigError(where + ".train_fraction must lie in (0, 1)");
    if (s.hidden < 1 || s.epochs < 1 || s.batch_size < 1 || !(s.lr > 0.0))
        throw ConfigError(where + ": hidden, epochs, batch_size and lr must be positive");
}

void parse(const json& j, toy::ToyConfig& s, const std::string& where)
{
    Fields f(j, where);
    f.get("n_points", s.n_points);
    f.get("x_min", s.x_min);
    f.get("x_max", s.x_max);
    f.get("noise_std", s.noise_std);
    f.get("widths", s.widths);
    f.get("mask_layer", s.mask_layer);
    f.get("sigma_nest", s.sigma_nest);
    f.get("ks", s.ks);
    f.get("p_drops", s.p_drops);
    f.get("epochs", s.epochs);
    f.get("lr", s.lr);
    f.get("final_lr", s.final_lr);
    f.get("warmup", s.warmup);
    f.get("momentum", s.momentum);
    f.get("weight_decay", s.weight_decay);
    f.get("n_mask_samples", s.n_mask_samples);
    f.get("standardize_input", s.standardize_input);
    f.get("standardize_target", s.standardize_target);
    f.get("spread_input_kinks", s.spread_input_kinks);
    f.get("activate_masked_layer", s.activate_masked_layer);
    f.get("activation_margin", s.activation_margin);
    f.get("grid_points", s.grid_points);
    f.get("seed", s.seed);
    f.finish();
    if (!(s.noise_std >= 0.0))
        throw ConfigError(where + ".noise_std must be non-negative");
    checked(where, [&] { s.validate(); });
}

void parse(const json& j, exp::BlobData& s, const std::string& where)
{
    Fields f(j, where);
    f.get("classes", s.classes);
    f.get("dim", s.dim);
    f.get("separation", s.separation);
    f.get("train_per_class", s.train_per_class);
    f.get("val_per_class", s.val_per_class);
    f.get("test_per_class", s.test_per_class);
    f.sub("noise", [&](const json& v, const std::string& at) { parse(v, s.noise, at); });
    f.finish();
    checked(where, [&] { s.validate(); });
}

void parse(const json& j, exp::ModelConfig& s, const std::string& where)
{
    Fields f(j, where);
    f.get("hidden", s.hidden);
    f.get("mask_layer", s.mask_layer);
    f.get("p_drop", s.p_drop);
    f.get("sigma_nest", s.sigma_nest);
    f.finish();
    checked(where, [&] { s.validate(); });
}

template <class T>
void parse_root(const json& j, T& out)
{
    parse(j, out, "");
}

} // namespace

json load(const std::filesystem::path& path)
{
    if (path.empty())
        return json::object();
    std::ifstream is(path);
    if (!is)
        throw ConfigError("cannot read config " + path.string());
    try {
        json j = json::parse(is);
        if (!j.is_object())
            throw ConfigError(path.string() + ": top level must be an object");
        return j;
    } catch (const json::parse_error& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
}

void apply_override(json& doc, const std::string& assignment)
{
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0)
        throw ConfigError("override '" + assignment + "' must look like key.path=value");
    const std::string key = assignment.substr(0, eq);
    const std::string text = assignment.substr(eq + 1);

    json* node = &doc;
    std::size_t start = 0;
    while (true) {
        const auto dot = key.find('.', start);
        const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
        if (part.empty())
            throw ConfigError("override '" + assignment + "' has an empty key segment");
        if (node->is_null())
            *node = json::object();
        if (!node->is_object())
            throw ConfigError("override '" + assignment + "': '" + part + "' is inside a non-object value");
        node = &(*node)[part];
        if (dot == std::string::npos)
            break;
        start = dot + 1;
    }
    json value = json::parse(text, nullptr, false);
    *node = value.is_discarded() ? json(text) : value;
}

void allow_keys(const json& doc, std::initializer_list<std::string_view> allowed)
{
    if (!doc.is_object())
        throw ConfigError("config must be a JSON object");
    for (const auto& [k, v] : doc.items())
        if (std::find(allowed.begin(), allowed.end(), k) == allowed.end())
            throw ConfigError("unknown key '" + k + "'");
}

void from_json(const json& j, LrSchedule& out) { parse_root(j, out); }
void from_json(const json& j, noise::NoiseSpec& out) { parse_root(j, out); }
void from_json(const json& j, train::StageOneConfig& out) { parse_root(j, out); }
void from_json(const json& j, train::CoTeachConfig& out) { parse_root(j, out); }
void from_json(const json& j, analysis::ProbeConfig& out) { parse_root(j, out); }
void from_json(const json& j, toy::ToyConfig& out) { parse_root(j, out); }
void from_json(const json& j, exp::BlobData& out) { parse_root(j, out); }
void from_json(const json& j, exp::ModelConfig& out) { parse_root(j, out); }

json to_json(const LrSchedule& s)
{
    return {{"base", s.base},
            {"warmup_iterations", s.warmup_iterations},
            {"decay", to_string(s.decay)},
            {"milestones", s.milestones},
            {"gamma", s.gamma},
            {"final_lr", s.final_lr},
            {"total_epochs", s.total_epochs}};
}

json to_json(const noise::NoiseSpec& s)
{
    json pairs = json::array();
    for (auto [a, b] : s.pair_map)
        pairs.push_back({a, b});
    return {{"kind", noise::to_string(s.kind)}, {"tau", s.tau}, {"pair_map", pairs}, {"seed", s.seed}};
}

json to_json(const train::StageOneConfig& s)
{
    return {{"epochs", s.epochs},
            {"batch_size", s.batch_size},
            {"lr", to_json(s.lr)},
            {"momentum", s.momentum},
            {"weight_decay", s.weight_decay},
            {"n_mask_samples", s.n_mask_samples},
            {"seed", s.seed}};
}

json to_json(const train::CoTeachConfig& s)
{
    return {{"lambda_forget", s.lambda_forget},
            {"epochs", s.epochs},
            {"batch_size", s.batch_size},
            {"lr", to_json(s.lr)},
            {"momentum", s.momentum},
            {"weight_decay", s.weight_decay},
            {"freeze_encoder", s.freeze_encoder},
            {"n_mask_samples", s.n_mask_samples},
            {"seed", s.seed}};
}

json to_json(const analysis::ProbeConfig& s)
{
    return {{"hidden", s.hidden},
            {"epochs", s.epochs},
            {"batch_size", s.batch_size},
            {"lr", s.lr},
            {"momentum", s.momentum},
            {"train_fraction", s.train_fraction},
            {"min_examples", s.min_examples},
            {"seed", s.seed}};
}

json to_json(const toy::ToyConfig& s)
{
    return {{"n_points", s.n_points},
            {"x_min", s.x_min},
            {"x_max", s.x_max},
            {"noise_std", s.noise_std},
            {"widths", s.widths},
            {"mask_layer", s.mask_layer},
            {"sigma_nest", s.sigma_nest},
            {"ks", s.ks},
            {"p_drops", s.p_drops},
            {"epochs", s.epochs},
            {"lr", s.lr},
            {"final_lr", s.final_lr},
            {"warmup", s.warmup},
            {"momentum", s.momentum},
            {"weight_decay", s.weight_decay},
            {"n_mask_samples", s.n_mask_samples},
            {"standardize_input", s.standardize_input},
            {"standardize_target", s.standardize_target},
            {"spread_input_kinks", s.spread_input_kinks},
            {"activate_masked_layer", s.activate_masked_layer},
            {"activation_margin", s.activation_margin},
            {"grid_points", s.grid_points},
            {"seed", s.seed}};
}

json to_json(const exp::BlobData& s)
{
    return {{"classes", s.classes},
            {"dim", s.dim},
            {"separation", s.separation},
            {"train_per_class", s.train_per_class},
            {"val_per_class", s.val_per_class},
            {"test_per_class", s.test_per_class},
            {"noise", to_json(s.noise)}};
}

json to_json(const exp::ModelConfig& s)
{
    return {{"hidden", s.hidden}, {"mask_layer", s.mask_layer}, {"p_drop", s.p_drop}, {"sigma_nest", s.sigma_nest}};
}

} // namespace nestco::config
