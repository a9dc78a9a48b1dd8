#include "nestco/io.hpp"

#include "nestco/errors.hpp"

#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>

namespace nestco::io {

using nlohmann::json;

namespace {

void put_u64(std::ostream& os, std::uint64_t v)
{
    char b[8];
    for (int i = 0; i < 8; ++i)
        b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    os.write(b, 8);
}

std::uint64_t get_u64(std::istream& is)
{
    unsigned char b[8];
    if (!is.read(reinterpret_cast<char*>(b), 8))
        throw IoError("truncated file");
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i)
        v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
}

void put_f64(std::ostream& os, double d)
{
    put_u64(os, std::bit_cast<std::uint64_t>(d));
}

double get_f64(std::istream& is)
{
    return std::bit_cast<double>(get_u64(is));
}

void put_i32(std::ostream& os, std::int32_t v)
{
    const auto u = static_cast<std::uint32_t>(v);
    char b[4];
    for (int i = 0; i < 4; ++i)
        b[i] = static_cast<char>((u >> (8 * i)) & 0xff);
    os.write(b, 4);
}

std::int32_t get_i32(std::istream& is)
{
    unsigned char b[4];
    if (!is.read(reinterpret_cast<char*>(b), 4))
        throw IoError("truncated file");
    std::uint32_t u = 0;
    for (int i = 0; i < 4; ++i)
        u |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    return static_cast<std::int32_t>(u);
}

std::ofstream open_out(const std::filesystem::path& path)
{
    if (path.has_parent_path())
        std::filesystem::create_directories(path.parent_path());
    std::ofstream os(path, std::ios::binary);
    if (!os)
        throw IoError("cannot write " + path.string());
    return os;
}

void write_header(std::ostream& os, const char (&magic)[8], const json& header)
{
    const std::string h = header.dump();
    os.write(magic, 8);
    put_u64(os, h.size());
    os.write(h.data(), static_cast<std::streamsize>(h.size()));
}

json read_header(std::istream& is, const char (&magic)[8], const std::filesystem::path& path)
{
    char m[8];
    if (!is.read(m, 8) || std::memcmp(m, magic, 8) != 0)
        throw IoError(path.string() + " is not a " + std::string(magic, 7) + " file");
    const std::uint64_t n = get_u64(is);
    if (n > (1u << 26))
        throw IoError(path.string() + ": header too large");
    std::string h(n, '\0');
    if (!is.read(h.data(), static_cast<std::streamsize>(n)))
        throw IoError(path.string() + ": truncated header");
    try {
        return json::parse(h);
    } catch (const json::exception& e) {
        throw IoError(path.string() + ": bad header: " + e.what());
    }
}

std::ifstream open_in(const std::filesystem::path& path)
{
    std::ifstream is(path, std::ios::binary);
    if (!is)
        throw IoError("cannot open " + path.string());
    return is;
}

} // namespace

std::string format_double(double v)
{
    char buf[64];
    const auto r = std::to_chars(buf, buf + sizeof buf, v);
    return {buf, r.ptr};
}

json mask_to_json(const masks::MaskDistribution& mask)
{
    return std::visit(
        [](const auto& d) -> json {
            using T = std::decay_t<decltype(d)>;
            if constexpr (std::is_same_v<T, masks::NoMask>)
                return {{"kind", "none"}, {"channels", d.channels}};
            else if constexpr (std::is_same_v<T, masks::DropoutSpec>)
                return {{"kind", "dropout"}, {"p_drop", d.p_drop}, {"channels", d.channels}};
            else
                return {{"kind", "nested"}, {"sigma_nest", d.sigma}, {"channels", d.channels}};
        },
        mask);
}

masks::MaskDistribution mask_from_json(const json& j)
{
    const std::string kind = j.at("kind").get<std::string>();
    const auto K = j.value("channels", std::size_t{0});
    if (kind == "none")
        return masks::NoMask{K};
    if (kind == "dropout") {
        masks::DropoutSpec d{j.at("p_drop").get<double>(), K};
        d.validate();
        return d;
    }
    if (kind == "nested") {
        masks::NestedSpec n{j.at("sigma_nest").get<double>(), K};
        n.validate();
        return n;
    }
    throw DomainError("unknown mask kind '" + kind + "'");
}

json spec_to_json(const MlpSpec& spec)
{
    json acts = json::array();
    for (auto a : spec.activations)
        acts.push_back(to_string(a));
    return {{"widths", spec.widths}, {"activations", acts}};
}

MlpSpec spec_from_json(const json& j)
{
    MlpSpec s;
    s.widths = j.at("widths").get<std::vector<std::size_t>>();
    if (j.contains("activations")) {
        for (const auto& a : j.at("activations"))
            s.activations.push_back(activation_from_string(a.get<std::string>()));
    } else {
        s = MlpSpec::relu_chain(s.widths);
    }
    s.validate();
    return s;
}

void save_model(const std::filesystem::path& path, const lvm::LatentModel& model, std::uint64_t seed,
                const json& meta)
{
    model.validate();
    json tensors = json::array();
    for (std::size_t l = 0; l < model.params.layers(); ++l) {
        tensors.push_back({{"name", "W" + std::to_string(l)}, {"shape", model.params.weight(l).shape()}});
        tensors.push_back({{"name", "b" + std::to_string(l)}, {"shape", model.params.bias(l).shape()}});
    }
    const json header{{"format", "nestco-model"},
                      {"version", 1},
                      {"spec", spec_to_json(model.spec)},
                      {"mask", mask_to_json(model.mask)},
                      {"mask_layer", model.mask_layer},
                      {"task", model.task == lvm::Task::classification ? "classification" : "regression"},
                      {"seed", seed},
                      {"tensors", tensors},
                      {"meta", meta}};
    auto os = open_out(path);
    write_header(os, model_magic, header);
    for (const Tensor* t : model.params.tensors())
        for (double v : t->values())
            put_f64(os, v);
    if (!os)
        throw IoError("failed writing " + path.string());
}

ModelFile load_model(const std::filesystem::path& path)
{
    auto is = open_in(path);
    const json h = read_header(is, model_magic, path);
    ModelFile f;
    try {
        f.model.spec = spec_from_json(h.at("spec"));
        f.model.mask = mask_from_json(h.at("mask"));
        f.model.mask_layer = h.at("mask_layer").get<std::size_t>();
        f.model.task = h.at("task").get<std::string>() == "regression" ? lvm::Task::regression
                                                                        : lvm::Task::classification;
        f.seed = h.value("seed", std::uint64_t{0});
        f.meta = h.value("meta", json::object());
    } catch (const json::exception& e) {
        throw IoError(path.string() + ": bad header: " + e.what());
    }
    f.model.params = ParamSet(f.model.spec);
    for (Tensor* t : f.model.params.mutable_tensors())
        for (double& v : t->values())
            v = get_f64(is);
    f.model.validate();
    return f;
}

json noise_spec_to_json(const noise::NoiseSpec& spec)
{
    json pairs = json::array();
    for (auto [a, b] : spec.pair_map)
        pairs.push_back({a, b});
    return {{"kind", noise::to_string(spec.kind)}, {"tau", spec.tau}, {"pair_map", pairs}, {"seed", spec.seed}};
}

noise::NoiseSpec noise_spec_from_json(const json& j)
{
    noise::NoiseSpec s;
    s.kind = noise::noise_kind_from_string(j.value("kind", std::string("none")));
    s.tau = j.value("tau", 0.0);
    s.seed = j.value("seed", std::uint64_t{0});
    if (j.contains("pair_map")) {
        const auto& pm = j.at("pair_map");
        if (pm.is_string()) {
            if (pm.get<std::string>() != "cifar10")
                throw DomainError("unknown pair-map preset '" + pm.get<std::string>() + "'");
            s.pair_map = noise::cifar10_pair_map();
        } else {
            for (const auto& p : pm)
                s.pair_map[p.at(0).get<std::size_t>()] = p.at(1).get<std::size_t>();
        }
    }
    return s;
}

void save_dataset(const std::filesystem::path& path, const noise::NoisyDataset& data, std::uint64_t seed)
{
    const json header{{"format", "nestco-dataset"},
                      {"version", 1},
                      {"classes", data.classes()},
                      {"n", data.size()},
                      {"dim", data.dim()},
                      {"noise", noise_spec_to_json(data.noise_spec())},
                      {"seed", seed}};
    auto os = open_out(path);
    write_header(os, dataset_magic, header);
    for (double v : data.inputs().values())
        put_f64(os, v);
    for (int y : data.noisy_labels())
        put_i32(os, y);
    for (int y : noise::CleanLabelAccess::clean_labels(data))
        put_i32(os, y);
    if (!os)
        throw IoError("failed writing " + path.string());
}

noise::NoisyDataset load_dataset(const std::filesystem::path& path)
{
    auto is = open_in(path);
    const json h = read_header(is, dataset_magic, path);
    std::size_t n = 0, dim = 0, classes = 0;
    noise::NoiseSpec spec;
    try {
        n = h.at("n").get<std::size_t>();
        dim = h.at("dim").get<std::size_t>();
        classes = h.at("classes").get<std::size_t>();
        spec = noise_spec_from_json(h.value("noise", json::object()));
    } catch (const json::exception& e) {
        throw IoError(path.string() + ": bad header: " + e.what());
    }
    Tensor x({n, dim});
    for (double& v : x.values())
        v = get_f64(is);
    std::vector<int> noisy(n), clean(n);
    for (auto& y : noisy)
        y = get_i32(is);
    for (auto& y : clean)
        y = get_i32(is);
    return {std::move(x), std::move(noisy), std::move(clean), classes, spec};
}

void export_dataset_csv(const std::filesystem::path& path, const noise::NoisyDataset& data)
{
    auto os = open_out(path);
    for (std::size_t j = 0; j < data.dim(); ++j)
        os << 'x' << j << ',';
    os << "noisy,clean\n";
    const auto clean = noise::CleanLabelAccess::clean_labels(data);
    for (std::size_t i = 0; i < data.size(); ++i) {
        for (std::size_t j = 0; j < data.dim(); ++j)
            os << format_double(data.inputs().at(i, j)) << ',';
        os << data.noisy_labels()[i] << ',' << clean[i] << '\n';
    }
}

} // namespace nestco::io
