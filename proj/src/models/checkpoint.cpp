#include "mdl/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>

#include "mdl/errors.hpp"
#include "mdl/io.hpp"

namespace mdl::models {

static_assert(std::endian::native == std::endian::little, "checkpoint format assumes a little-endian host");

namespace {

constexpr char kMagic[8] = {'M', 'D', 'L', 'C', 'K', 'P', 'T', '\0'};

template <typename T>
void put(std::string& out, T v) {
    char buf[sizeof(T)];
    std::memcpy(buf, &v, sizeof(T));
    out.append(buf, sizeof(T));
}

void put_string(std::string& out, const std::string& s) {
    put<std::uint64_t>(out, s.size());
    out += s;
}

void put_tensor(std::string& out, const ad::Tensor& t) {
    put<std::uint64_t>(out, t.shape.size());
    for (auto d : t.shape) put<std::uint64_t>(out, d);
    out.append(reinterpret_cast<const char*>(t.data.data()), t.data.size() * sizeof(double));
}

class Reader {
public:
    explicit Reader(const std::string& bytes) : bytes_(bytes) {}

    template <typename T>
    T get() {
        need(sizeof(T));
        T v;
        std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
        pos_ += sizeof(T);
        return v;
    }

    std::string get_string() {
        const auto n = get<std::uint64_t>();
        need(n);
        std::string s = bytes_.substr(pos_, n);
        pos_ += n;
        return s;
    }

    ad::Tensor get_tensor() {
        const auto rank = get<std::uint64_t>();
        if (rank == 0 || rank > 8) throw DataError("checkpoint: bad tensor rank");
        ad::Shape shape;
        for (std::uint64_t i = 0; i < rank; ++i) shape.push_back(get<std::uint64_t>());
        const std::size_t n = ad::shape_size(shape);
        need(n * sizeof(double));
        std::vector<double> data(n);
        std::memcpy(data.data(), bytes_.data() + pos_, n * sizeof(double));
        pos_ += n * sizeof(double);
        return ad::Tensor(std::move(shape), std::move(data));
    }

    bool done() const { return pos_ == bytes_.size(); }

private:
    void need(std::size_t n) const {
        if (bytes_.size() - pos_ < n) throw DataError("checkpoint: truncated file");
    }

    const std::string& bytes_;
    std::size_t pos_ = 0;
};

std::vector<std::size_t> size_list(const nlohmann::json& j, const char* key) {
    if (!j.is_array()) throw ConfigError(std::string("arch: '") + key + "' must be an array");
    std::vector<std::size_t> out;
    for (const auto& v : j) {
        if (!v.is_number_integer() || v.get<long long>() <= 0)
            throw ConfigError(std::string("arch: '") + key + "' entries must be positive integers");
        out.push_back(v.get<std::size_t>());
    }
    return out;
}

std::size_t positive(const nlohmann::json& j, const char* key) {
    if (!j.is_number_integer() || j.get<long long>() <= 0)
        throw ConfigError(std::string("arch: '") + key + "' must be a positive integer");
    return j.get<std::size_t>();
}

}  // namespace

nlohmann::json arch_to_json(const ArchSpec& s) {
    nlohmann::json j;
    j["kind"] = kind_name(s.kind);
    j["input_dim"] = s.input_dim;
    j["backbone_layers"] = s.backbone_layers;
    j["head_layers"] = s.head_layers;
    j["num_classes"] = s.num_classes;
    j["num_domains"] = s.num_domains;
    if (s.expert_count) j["expert_count"] = *s.expert_count;
    if (s.shared_experts) j["shared_experts"] = *s.shared_experts;
    if (s.specific_experts) j["specific_experts"] = *s.specific_experts;
    if (s.discriminator_layers) j["discriminator_layers"] = *s.discriminator_layers;
    if (s.lambda) j["lambda"] = *s.lambda;
    return j;
}

ArchSpec arch_from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw ConfigError("arch: expected an object");
    static const std::set<std::string> known = {"kind", "input_dim", "backbone_layers", "head_layers",
                                                "num_classes", "num_domains", "expert_count", "shared_experts",
                                                "specific_experts", "discriminator_layers", "lambda"};
    io::reject_unknown_keys(j, known, "arch");
    ArchSpec s;
    if (!j.contains("kind") || !j["kind"].is_string()) throw ConfigError("arch: 'kind' is required");
    s.kind = parse_kind(j["kind"].get<std::string>());
    if (j.contains("input_dim")) s.input_dim = positive(j["input_dim"], "input_dim");
    if (j.contains("backbone_layers")) s.backbone_layers = size_list(j["backbone_layers"], "backbone_layers");
    if (j.contains("head_layers")) s.head_layers = size_list(j["head_layers"], "head_layers");
    if (j.contains("num_classes")) s.num_classes = positive(j["num_classes"], "num_classes");
    if (j.contains("num_domains")) s.num_domains = positive(j["num_domains"], "num_domains");
    if (j.contains("expert_count")) s.expert_count = positive(j["expert_count"], "expert_count");
    if (j.contains("shared_experts")) s.shared_experts = positive(j["shared_experts"], "shared_experts");
    if (j.contains("specific_experts")) s.specific_experts = size_list(j["specific_experts"], "specific_experts");
    if (j.contains("discriminator_layers"))
        s.discriminator_layers = size_list(j["discriminator_layers"], "discriminator_layers");
    if (j.contains("lambda")) {
        if (!j["lambda"].is_number()) throw ConfigError("arch: 'lambda' must be a number");
        s.lambda = j["lambda"].get<double>();
    }
    return s;
}

std::string serialize_model(const Model& model) {
    std::string out(kMagic, sizeof(kMagic));
    put<std::uint32_t>(out, kCheckpointVersion);
    put_string(out, arch_to_json(model.spec()).dump());
    put<std::uint64_t>(out, model.groups().size());
    for (const auto& g : model.groups()) {
        put_string(out, g.name);
        put<std::uint8_t>(out, g.trainable ? 1 : 0);
        put<std::uint64_t>(out, g.layers.size());
        for (const auto& l : g.layers) {
            put_tensor(out, l.weight);
            put_tensor(out, l.bias);
        }
    }
    return out;
}

Model deserialize_model(const std::string& bytes) {
    if (bytes.size() < sizeof(kMagic) || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0)
        throw DataError("checkpoint: bad magic");
    Reader r(bytes);
    for (std::size_t i = 0; i < sizeof(kMagic); ++i) r.get<char>();
    const auto version = r.get<std::uint32_t>();
    if (version != kCheckpointVersion)
        throw DataError("checkpoint: unsupported version " + std::to_string(version));
    ArchSpec spec;
    try {
        spec = arch_from_json(nlohmann::json::parse(r.get_string()));
        spec.validate();
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("checkpoint: bad spec: ") + e.what());
    } catch (const ConfigError& e) {
        throw DataError(std::string("checkpoint: bad spec: ") + e.what());
    }
    const auto ngroups = r.get<std::uint64_t>();
    std::vector<Group> groups;
    for (std::uint64_t gi = 0; gi < ngroups; ++gi) {
        Group g;
        g.name = r.get_string();
        g.trainable = r.get<std::uint8_t>() != 0;
        const auto nlayers = r.get<std::uint64_t>();
        for (std::uint64_t l = 0; l < nlayers; ++l) {
            DenseLayer layer;
            layer.weight = r.get_tensor();
            layer.bias = r.get_tensor();
            g.layers.push_back(std::move(layer));
        }
        groups.push_back(std::move(g));
    }
    if (!r.done()) throw DataError("checkpoint: trailing bytes");

    // The stored groups must match what the architecture builds, shape for shape.
    const Model reference = build_model(spec, 0);
    if (reference.groups().size() != groups.size()) throw DataError("checkpoint: group layout does not match spec");
    for (std::size_t i = 0; i < groups.size(); ++i) {
        const Group& a = reference.groups()[i];
        const Group& b = groups[i];
        if (a.name != b.name || a.layers.size() != b.layers.size())
            throw DataError("checkpoint: group layout does not match spec");
        for (std::size_t l = 0; l < a.layers.size(); ++l)
            if (a.layers[l].weight.shape != b.layers[l].weight.shape || a.layers[l].bias.shape != b.layers[l].bias.shape)
                throw DataError("checkpoint: layer shapes do not match spec");
    }
    return Model(spec, std::move(groups));
}

void save_checkpoint(const Model& model, const std::filesystem::path& path) {
    io::write_file_atomic(path, serialize_model(model));
}

Model load_checkpoint(const std::filesystem::path& path) { return deserialize_model(io::read_file(path)); }

}  // namespace mdl::models
