#include "sf/dataset.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace sf {

namespace {

class Writer {
public:
    explicit Writer(const std::string& path) : out_(path, std::ios::binary), path_(path) {
        if (!out_) throw DatasetError("cannot open '" + path + "' for writing");
    }
    void u8(std::uint8_t v) { out_.put(static_cast<char>(v)); }
    void u16(std::uint16_t v) {
        u8(static_cast<std::uint8_t>(v & 0xff));
        u8(static_cast<std::uint8_t>(v >> 8));
    }
    void u32(std::uint32_t v) {
        u16(static_cast<std::uint16_t>(v & 0xffff));
        u16(static_cast<std::uint16_t>(v >> 16));
    }
    void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
    void f32s(const std::vector<float>& vs) {
        for (float v : vs) f32(v);
    }
    void bits(const std::vector<std::uint8_t>& flags) {
        std::uint8_t acc = 0;
        int nbits = 0;
        for (std::uint8_t f : flags) {
            if (f) acc |= static_cast<std::uint8_t>(1u << nbits);
            if (++nbits == 8) {
                u8(acc);
                acc = 0;
                nbits = 0;
            }
        }
        if (nbits > 0) u8(acc);
    }
    void finish() {
        out_.flush();
        if (!out_) throw DatasetError("write failed for '" + path_ + "'");
    }

private:
    std::ofstream out_;
    std::string path_;
};

class Reader {
public:
    explicit Reader(const std::string& path) : in_(path, std::ios::binary), path_(path) {
        if (!in_) throw DatasetError("cannot open '" + path + "' for reading");
    }
    std::uint8_t u8() {
        int c = in_.get();
        if (c == std::char_traits<char>::eof())
            throw TruncatedFileError("unexpected end of file in '" + path_ + "'");
        return static_cast<std::uint8_t>(c);
    }
    std::uint16_t u16() {
        const std::uint16_t lo = u8();
        return static_cast<std::uint16_t>(lo | (static_cast<std::uint16_t>(u8()) << 8));
    }
    std::uint32_t u32() {
        const std::uint32_t lo = u16();
        return lo | (static_cast<std::uint32_t>(u16()) << 16);
    }
    float f32() { return std::bit_cast<float>(u32()); }
    std::vector<float> f32s(size_t n) {
        std::vector<float> v(n);
        for (size_t i = 0; i < n; ++i) v[i] = f32();
        return v;
    }
    std::vector<std::uint8_t> bits(size_t n) {
        std::vector<std::uint8_t> flags(n);
        std::uint8_t acc = 0;
        int nbits = 8;
        for (size_t i = 0; i < n; ++i) {
            if (nbits == 8) {
                acc = u8();
                nbits = 0;
            }
            flags[i] = (acc >> nbits) & 1u;
            ++nbits;
        }
        return flags;
    }

private:
    std::ifstream in_;
    std::string path_;
};

}  // namespace

void write_dataset(const Dataset& ds, const std::string& path) {
    const size_t px = static_cast<size_t>(ds.height) * ds.width;
    for (const Episode& ep : ds.episodes) {
        if (ep.instruction_ids.size() != kInstructionLen)
            throw DatasetError("write_dataset: episode has " + std::to_string(ep.instruction_ids.size()) +
                               " instruction ids");
        if (ep.steps.size() > kMaxEpisodeSteps)
            throw DatasetError("write_dataset: episode has " + std::to_string(ep.steps.size()) + " steps");
        for (const EpisodeStep& st : ep.steps)
            for (int v = 0; v < ds.n_views; ++v)
                if (st.views[static_cast<size_t>(v)].depth.size() != px)
                    throw DatasetError("write_dataset: view buffers do not match header dimensions");
    }

    Writer w(path);
    w.u8('S');
    w.u8('F');
    w.u8('D');
    w.u8('S');
    w.u8(kDatasetVersion);
    w.u32(static_cast<std::uint32_t>(ds.episodes.size()));
    w.u16(static_cast<std::uint16_t>(ds.height));
    w.u16(static_cast<std::uint16_t>(ds.width));
    w.u8(static_cast<std::uint8_t>(ds.n_views));
    w.u8(static_cast<std::uint8_t>(ds.difficulty));
    for (const Episode& ep : ds.episodes) {
        w.u8(static_cast<std::uint8_t>(ep.instruction_ids.size()));
        for (std::uint16_t id : ep.instruction_ids) w.u16(id);
        w.u8(static_cast<std::uint8_t>(ep.steps.size()));
        w.u8(ep.success ? 1 : 0);
        for (const EpisodeStep& st : ep.steps) {
            w.f32(static_cast<float>(st.ee_pos.x));
            w.f32(static_cast<float>(st.ee_pos.y));
            w.f32(static_cast<float>(st.ee_pos.z));
            for (double a : st.action) w.f32(static_cast<float>(a));
            for (int v = 0; v < ds.n_views; ++v) {
                const StoredView& view = st.views[static_cast<size_t>(v)];
                w.f32s(view.image);
                w.f32s(view.depth);
                w.f32s(view.pointmap);
                w.bits(view.mask);
            }
        }
    }
    w.finish();
}

Dataset read_dataset(const std::string& path) {
    Reader r(path);
    char magic[4];
    for (char& c : magic) c = static_cast<char>(r.u8());
    if (std::memcmp(magic, "SFDS", 4) != 0) throw BadMagicError("bad magic in '" + path + "'");
    const std::uint8_t version = r.u8();
    if (version != kDatasetVersion)
        throw VersionMismatchError("dataset version " + std::to_string(version) + " != " +
                                   std::to_string(kDatasetVersion) + " in '" + path + "'");
    Dataset ds;
    const std::uint32_t n_episodes = r.u32();
    ds.height = r.u16();
    ds.width = r.u16();
    ds.n_views = r.u8();
    ds.difficulty = static_cast<Difficulty>(r.u8());
    if (ds.n_views < 1 || ds.n_views > 2) throw DatasetError("unsupported n_views in '" + path + "'");
    const size_t px = static_cast<size_t>(ds.height) * ds.width;

    ds.episodes.resize(n_episodes);
    for (Episode& ep : ds.episodes) {
        const int m = r.u8();
        ep.instruction_ids.resize(static_cast<size_t>(m));
        for (auto& id : ep.instruction_ids) id = r.u16();
        const int n_steps = r.u8();
        ep.success = r.u8() != 0;
        ep.steps.resize(static_cast<size_t>(n_steps));
        for (EpisodeStep& st : ep.steps) {
            st.ee_pos.x = r.f32();
            st.ee_pos.y = r.f32();
            st.ee_pos.z = r.f32();
            for (double& a : st.action) a = r.f32();
            for (int v = 0; v < ds.n_views; ++v) {
                StoredView& view = st.views[static_cast<size_t>(v)];
                view.height = static_cast<std::uint16_t>(ds.height);
                view.width = static_cast<std::uint16_t>(ds.width);
                view.image = r.f32s(px * 3);
                view.depth = r.f32s(px);
                view.pointmap = r.f32s(px * 3);
                view.mask = r.bits(px);
            }
        }
    }
    return ds;
}

}  // namespace sf
