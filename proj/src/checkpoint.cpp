#include "sf/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>

namespace sf {

namespace {

struct Blob {
    std::string name;
    std::vector<int> shape;
    std::vector<double> data;
};

void put_u8(std::ofstream& out, std::uint8_t v) { out.put(static_cast<char>(v)); }
void put_u16(std::ofstream& out, std::uint16_t v) {
    put_u8(out, static_cast<std::uint8_t>(v & 0xff));
    put_u8(out, static_cast<std::uint8_t>(v >> 8));
}
void put_u32(std::ofstream& out, std::uint32_t v) {
    put_u16(out, static_cast<std::uint16_t>(v & 0xffff));
    put_u16(out, static_cast<std::uint16_t>(v >> 16));
}
void put_f64(std::ofstream& out, double v) {
    std::uint64_t bits = std::bit_cast<std::uint64_t>(v);
    for (int i = 0; i < 8; ++i) put_u8(out, static_cast<std::uint8_t>((bits >> (8 * i)) & 0xff));
}

std::uint8_t get_u8(std::ifstream& in, const std::string& path) {
    int c = in.get();
    if (c == std::char_traits<char>::eof()) throw CheckpointError("unexpected end of file in '" + path + "'");
    return static_cast<std::uint8_t>(c);
}
std::uint16_t get_u16(std::ifstream& in, const std::string& path) {
    const std::uint16_t lo = get_u8(in, path);
    return static_cast<std::uint16_t>(lo | (static_cast<std::uint16_t>(get_u8(in, path)) << 8));
}
std::uint32_t get_u32(std::ifstream& in, const std::string& path) {
    const std::uint32_t lo = get_u16(in, path);
    return lo | (static_cast<std::uint32_t>(get_u16(in, path)) << 16);
}
double get_f64(std::ifstream& in, const std::string& path) {
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(get_u8(in, path)) << (8 * i);
    return std::bit_cast<double>(bits);
}

void write_blob(std::ofstream& out, const Blob& blob) {
    put_u16(out, static_cast<std::uint16_t>(blob.name.size()));
    out.write(blob.name.data(), static_cast<std::streamsize>(blob.name.size()));
    put_u8(out, static_cast<std::uint8_t>(blob.shape.size()));
    for (int d : blob.shape) put_u32(out, static_cast<std::uint32_t>(d));
    for (double v : blob.data) put_f64(out, v);
}

std::vector<std::uint32_t> config_words(const ModelConfig& c) {
    return {static_cast<std::uint32_t>(c.d_model),    static_cast<std::uint32_t>(c.n_layers),
            static_cast<std::uint32_t>(c.n_heads),    static_cast<std::uint32_t>(c.patch_size),
            static_cast<std::uint32_t>(c.image_h),    static_cast<std::uint32_t>(c.image_w),
            static_cast<std::uint32_t>(c.image_c),    static_cast<std::uint32_t>(c.n_views),
            static_cast<std::uint32_t>(c.vocab),      static_cast<std::uint32_t>(c.m_tokens),
            static_cast<std::uint32_t>(c.k_queries),  static_cast<std::uint32_t>(c.action_dim),
            static_cast<std::uint32_t>(c.horizon),    static_cast<std::uint32_t>(c.aligned_layer),
            static_cast<std::uint32_t>(c.d_teacher)};
}

}  // namespace

void save_checkpoint(const std::string& path, VLAParams& params, Projector* projector,
                     Difficulty difficulty, const std::string& experiment_config_text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw CheckpointError("cannot open '" + path + "' for writing");
    out.write("SFCK", 4);
    put_u8(out, kCheckpointVersion);
    for (std::uint32_t w : config_words(params.config)) put_u32(out, w);
    put_u8(out, static_cast<std::uint8_t>(difficulty));
    put_u32(out, static_cast<std::uint32_t>(experiment_config_text.size()));
    out.write(experiment_config_text.data(), static_cast<std::streamsize>(experiment_config_text.size()));

    std::vector<Blob> blobs;
    params.visit([&blobs](const std::string& name, Tensor& t) {
        blobs.push_back(Blob{name, t.shape(), {t.data().begin(), t.data().end()}});
    });
    if (projector) {
        projector->visit([&blobs](const std::string& name, Tensor& t) {
            blobs.push_back(Blob{name, t.shape(), {t.data().begin(), t.data().end()}});
        });
        blobs.push_back(Blob{"sf/proj.bn.running_mean",
                             {static_cast<int>(projector->bn.running_mean.size())},
                             projector->bn.running_mean});
        blobs.push_back(Blob{"sf/proj.bn.running_var",
                             {static_cast<int>(projector->bn.running_var.size())},
                             projector->bn.running_var});
    }
    put_u32(out, static_cast<std::uint32_t>(blobs.size()));
    for (const Blob& b : blobs) write_blob(out, b);
    out.flush();
    if (!out) throw CheckpointError("write failed for '" + path + "'");
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CheckpointError("cannot open '" + path + "' for reading");
    char magic[4];
    in.read(magic, 4);
    if (in.gcount() != 4 || std::memcmp(magic, "SFCK", 4) != 0)
        throw CheckpointError("bad magic in '" + path + "'");
    const std::uint8_t version = get_u8(in, path);
    if (version != kCheckpointVersion)
        throw CheckpointError("checkpoint version " + std::to_string(version) + " unsupported in '" + path + "'");

    Checkpoint ck;
    std::uint32_t words[15];
    for (std::uint32_t& w : words) w = get_u32(in, path);
    ck.config.d_model = static_cast<int>(words[0]);
    ck.config.n_layers = static_cast<int>(words[1]);
    ck.config.n_heads = static_cast<int>(words[2]);
    ck.config.patch_size = static_cast<int>(words[3]);
    ck.config.image_h = static_cast<int>(words[4]);
    ck.config.image_w = static_cast<int>(words[5]);
    ck.config.image_c = static_cast<int>(words[6]);
    ck.config.n_views = static_cast<int>(words[7]);
    ck.config.vocab = static_cast<int>(words[8]);
    ck.config.m_tokens = static_cast<int>(words[9]);
    ck.config.k_queries = static_cast<int>(words[10]);
    ck.config.action_dim = static_cast<int>(words[11]);
    ck.config.horizon = static_cast<int>(words[12]);
    ck.config.aligned_layer = static_cast<int>(words[13]);
    ck.config.d_teacher = static_cast<int>(words[14]);
    ck.config.validate();
    ck.difficulty = static_cast<Difficulty>(get_u8(in, path));
    const std::uint32_t text_len = get_u32(in, path);
    ck.experiment_config_text.resize(text_len);
    in.read(ck.experiment_config_text.data(), static_cast<std::streamsize>(text_len));
    if (in.gcount() != static_cast<std::streamsize>(text_len))
        throw CheckpointError("unexpected end of file in '" + path + "'");

    std::map<std::string, Blob> blobs;
    const std::uint32_t n_blobs = get_u32(in, path);
    for (std::uint32_t i = 0; i < n_blobs; ++i) {
        Blob b;
        const std::uint16_t name_len = get_u16(in, path);
        b.name.resize(name_len);
        in.read(b.name.data(), name_len);
        if (in.gcount() != name_len) throw CheckpointError("unexpected end of file in '" + path + "'");
        const int rank = get_u8(in, path);
        int numel = 1;
        for (int r = 0; r < rank; ++r) {
            b.shape.push_back(static_cast<int>(get_u32(in, path)));
            numel *= b.shape.back();
        }
        b.data.resize(static_cast<size_t>(numel));
        for (double& v : b.data) v = get_f64(in, path);
        blobs.emplace(b.name, std::move(b));
    }

    auto take = [&blobs, &path](const std::string& name, Tensor& t) {
        auto it = blobs.find(name);
        if (it == blobs.end()) throw CheckpointError("missing parameter '" + name + "' in '" + path + "'");
        if (it->second.shape != t.shape())
            throw CheckpointError("parameter '" + name + "' has unexpected shape in '" + path + "'");
        std::copy(it->second.data.begin(), it->second.data.end(), t.data_mut().begin());
    };

    Rng scratch(0);  // values are overwritten below; init only fixes shapes
    ck.params = VLAParams::init(ck.config, scratch);
    ck.params.visit(take);

    if (blobs.count("sf/proj.mlp.w1")) {
        Projector proj = Projector::init(ck.config, scratch);
        proj.visit(take);
        auto rm = blobs.find("sf/proj.bn.running_mean");
        auto rv = blobs.find("sf/proj.bn.running_var");
        if (rm == blobs.end() || rv == blobs.end())
            throw CheckpointError("projector running statistics missing in '" + path + "'");
        proj.bn.running_mean = rm->second.data;
        proj.bn.running_var = rv->second.data;
        ck.projector = std::move(proj);
    }
    return ck;
}

}  // namespace sf
