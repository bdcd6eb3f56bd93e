#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include <json.hpp>

#include "ser/model.hpp"

namespace ser {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

std::string config_to_json(const ModelConfig& config)
{
    nlohmann::json tasks = nlohmann::json::array();
    for (Task t : config.tasks) {
        tasks.push_back(task_name(t));
    }
    nlohmann::json doc = {{"variant", variant_name(config.variant)},
                          {"tasks", tasks},
                          {"hidden", config.hidden},
                          {"conv_filters", config.conv_filters},
                          {"conv_width", config.conv_width},
                          {"channel_pool", config.channel_pool},
                          {"keep_prob", config.keep_prob},
                          {"seed", config.seed}};
    return doc.dump();
}

ModelConfig config_from_json(const std::string& text)
{
    const auto doc = nlohmann::json::parse(text);
    ModelConfig config;
    config.variant = parse_variant(doc.at("variant").get<std::string>());
    config.tasks.clear();
    for (const auto& t : doc.at("tasks")) {
        config.tasks.push_back(parse_task(t.get<std::string>()));
    }
    config.hidden = doc.at("hidden").get<std::size_t>();
    config.conv_filters = doc.at("conv_filters").get<std::size_t>();
    config.conv_width = doc.at("conv_width").get<std::size_t>();
    config.channel_pool = doc.at("channel_pool").get<std::size_t>();
    config.keep_prob = doc.at("keep_prob").get<double>();
    config.seed = doc.at("seed").get<std::uint64_t>();
    config.validate();
    return config;
}

namespace {

template <typename V>
void put(std::vector<char>& out, V value)
{
    const char* p = reinterpret_cast<const char*>(&value);
    out.insert(out.end(), p, p + sizeof(V));
}

class Reader {
public:
    Reader(const std::vector<char>& bytes, const std::string& origin) : bytes_(bytes), origin_(origin) {}

    void read(void* dst, std::size_t n, const char* what)
    {
        if (n > bytes_.size() - pos_) {
            throw CheckpointError(CheckpointError::Kind::Truncated,
                                  origin_ + ": truncated while reading " + std::string(what) + " at byte " +
                                      std::to_string(pos_));
        }
        std::memcpy(dst, bytes_.data() + pos_, n);
        pos_ += n;
    }

    template <typename V>
    V get(const char* what)
    {
        V value{};
        read(&value, sizeof(V), what);
        return value;
    }

    std::string string(std::size_t n, const char* what)
    {
        std::string s(n, '\0');
        read(s.data(), n, what);
        return s;
    }

    bool at_end() const { return pos_ == bytes_.size(); }

private:
    const std::vector<char>& bytes_;
    std::string origin_;
    std::size_t pos_ = 0;
};

constexpr std::uint8_t kFloat32 = 0;
constexpr std::uint8_t kFloat64 = 1;

} // namespace

template <typename T>
void save_checkpoint(const ModelParams<T>& params, const std::filesystem::path& path)
{
    std::vector<char> out(std::begin(kCheckpointMagic), std::end(kCheckpointMagic));
    put<std::uint32_t>(out, kCheckpointVersion);
    const std::string config = config_to_json(params.config);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(config.size()));
    out.insert(out.end(), config.begin(), config.end());

    std::uint32_t count = 0;
    params.for_each([&count](const std::string&, const BasicTensor<T>&, bool) { ++count; });
    put<std::uint32_t>(out, count);
    params.for_each([&out](const std::string& name, const BasicTensor<T>& t, bool) {
        put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
        out.insert(out.end(), name.begin(), name.end());
        put<std::uint8_t>(out, sizeof(T) == 4 ? kFloat32 : kFloat64);
        put<std::uint32_t>(out, static_cast<std::uint32_t>(t.rank()));
        for (std::size_t d : t.shape()) {
            put<std::uint64_t>(out, d);
        }
        const char* p = reinterpret_cast<const char*>(t.data());
        out.insert(out.end(), p, p + t.size() * sizeof(T));
    });

    std::ofstream file(path, std::ios::binary | std::ios::trunc);
    if (!file) {
        throw CheckpointError(CheckpointError::Kind::Io, "cannot write checkpoint " + path.string());
    }
    file.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!file) {
        throw CheckpointError(CheckpointError::Kind::Io, "write failed for checkpoint " + path.string());
    }
}

template <typename T>
ModelParams<T> load_checkpoint(const std::filesystem::path& path)
{
    using Kind = CheckpointError::Kind;
    std::ifstream file(path, std::ios::binary);
    if (!file) {
        throw CheckpointError(Kind::Io, "cannot open checkpoint " + path.string());
    }
    const std::vector<char> bytes((std::istreambuf_iterator<char>(file)), std::istreambuf_iterator<char>());
    const std::string origin = path.string();
    Reader in(bytes, origin);

    char magic[8];
    if (bytes.size() < sizeof(magic) || std::memcmp(bytes.data(), kCheckpointMagic, sizeof(magic)) != 0) {
        throw CheckpointError(Kind::BadMagic, origin + ": not a checkpoint (bad magic bytes)");
    }
    in.read(magic, sizeof(magic), "magic");
    const auto version = in.get<std::uint32_t>("version");
    if (version != kCheckpointVersion) {
        throw CheckpointError(Kind::VersionMismatch, origin + ": checkpoint format version " + std::to_string(version) +
                                                         ", this build reads version " +
                                                         std::to_string(kCheckpointVersion));
    }
    const auto config_len = in.get<std::uint32_t>("config length");
    const std::string config_text = in.string(config_len, "config");
    ModelConfig config;
    try {
        config = config_from_json(config_text);
    } catch (const std::exception& e) {
        throw CheckpointError(Kind::BadConfig, origin + ": invalid embedded config: " + e.what());
    }

    ModelParams<T> params = build_model<T>(config);
    std::uint32_t expected = 0;
    params.for_each([&expected](const std::string&, const BasicTensor<T>&, bool) { ++expected; });
    const auto count = in.get<std::uint32_t>("tensor count");
    if (count != expected) {
        throw CheckpointError(Kind::ShapeMismatch, origin + ": " + std::to_string(count) +
                                                       " tensors stored, config implies " + std::to_string(expected));
    }

    params.for_each([&](const std::string& name, BasicTensor<T>& t, bool) {
        const auto name_len = in.get<std::uint32_t>("tensor name length");
        const std::string stored = in.string(name_len, "tensor name");
        if (stored != name) {
            throw CheckpointError(Kind::ShapeMismatch,
                                  origin + ": expected tensor '" + name + "', found '" + stored + "'");
        }
        const auto dtype = in.get<std::uint8_t>("dtype");
        if (dtype != kFloat32 && dtype != kFloat64) {
            throw CheckpointError(Kind::BadConfig, origin + ": tensor '" + name + "' has unknown dtype " +
                                                       std::to_string(dtype));
        }
        const auto rank = in.get<std::uint32_t>("rank");
        Shape shape(rank);
        for (auto& d : shape) {
            d = static_cast<std::size_t>(in.get<std::uint64_t>("shape"));
        }
        if (shape != t.shape()) {
            throw CheckpointError(Kind::ShapeMismatch, origin + ": tensor '" + name + "' has shape " +
                                                           shape_to_string(shape) + ", config implies " +
                                                           shape_to_string(t.shape()));
        }
        if (dtype == kFloat32) {
            std::vector<float> raw(t.size());
            in.read(raw.data(), raw.size() * sizeof(float), "tensor data");
            std::copy(raw.begin(), raw.end(), t.values().begin());
        } else {
            std::vector<double> raw(t.size());
            in.read(raw.data(), raw.size() * sizeof(double), "tensor data");
            std::transform(raw.begin(), raw.end(), t.values().begin(), [](double v) { return static_cast<T>(v); });
        }
    });
    if (!in.at_end()) {
        throw CheckpointError(Kind::ShapeMismatch, origin + ": trailing bytes after the last tensor");
    }
    return params;
}

template void save_checkpoint(const ModelParams<float>&, const std::filesystem::path&);
template void save_checkpoint(const ModelParams<double>&, const std::filesystem::path&);
template ModelParams<float> load_checkpoint<float>(const std::filesystem::path&);
template ModelParams<double> load_checkpoint<double>(const std::filesystem::path&);

} // namespace ser
