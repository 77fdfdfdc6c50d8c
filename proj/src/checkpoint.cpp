#include "slt/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include <json.hpp>

#include "slt/builders.hpp"
#include "slt/data.hpp"

namespace slt {

uint32_t crc32(const void* data, size_t len) {
    static const auto table = [] {
        std::array<uint32_t, 256> t{};
        for (uint32_t i = 0; i < 256; ++i) {
            uint32_t c = i;
            for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
            t[i] = c;
        }
        return t;
    }();
    uint32_t c = 0xFFFFFFFFu;
    const unsigned char* p = static_cast<const unsigned char*>(data);
    for (size_t i = 0; i < len; ++i) c = table[(c ^ p[i]) & 0xFFu] ^ (c >> 8);
    return c ^ 0xFFFFFFFFu;
}

namespace {

using Bytes = std::vector<unsigned char>;

void put_u32(Bytes& b, uint32_t v) {
    for (int i = 0; i < 4; ++i) b.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xff));
}

void put_u64(Bytes& b, uint64_t v) {
    for (int i = 0; i < 8; ++i) b.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xff));
}

void put_f32(Bytes& b, float v) {
    uint32_t u;
    std::memcpy(&u, &v, 4);
    put_u32(b, u);
}

void put_str(Bytes& b, const std::string& s) {
    put_u32(b, static_cast<uint32_t>(s.size()));
    b.insert(b.end(), s.begin(), s.end());
}

struct Reader {
    const unsigned char* p;
    size_t len;
    size_t pos = 0;
    std::string context;

    void need(size_t n, const char* what) {
        if (pos + n > len)
            throw FormatError("checkpoint: truncated " + std::string(what) +
                              (context.empty() ? "" : " in section '" + context + "'"));
    }
    uint32_t u32(const char* what) {
        need(4, what);
        uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(p[pos + i]) << (8 * i);
        pos += 4;
        return v;
    }
    uint64_t u64(const char* what) {
        need(8, what);
        uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(p[pos + i]) << (8 * i);
        pos += 8;
        return v;
    }
    float f32(const char* what) {
        uint32_t u = u32(what);
        float v;
        std::memcpy(&v, &u, 4);
        return v;
    }
    std::string str(const char* what) {
        uint32_t n = u32(what);
        need(n, what);
        std::string s(reinterpret_cast<const char*>(p + pos), n);
        pos += n;
        return s;
    }
    bool done() const { return pos >= len; }
};

void append_section(Bytes& out, const std::string& name, const Bytes& payload) {
    put_str(out, name);
    put_u64(out, payload.size());
    out.insert(out.end(), payload.begin(), payload.end());
    put_u32(out, crc32(payload.data(), payload.size()));
}

Bytes encode_layer(const MaskedLayer& l) {
    Bytes b;
    b.push_back(l.kind() == LayerKind::conv ? 1 : 0);
    b.push_back(l.mode() == WeightMode::binary_weight ? 1 : 0);
    b.push_back(l.weight_frozen() ? 1 : 0);
    b.push_back(0);
    put_u32(b, static_cast<uint32_t>(l.stride()));
    put_u32(b, static_cast<uint32_t>(l.padding()));
    put_f32(b, l.alpha());
    put_f32(b, l.prune_rate());
    encode_tensor(b, l.w());
    encode_tensor(b, l.s());
    encode_tensor(b, l.m());
    return b;
}

void decode_layer(const Bytes& payload, MaskedLayer& l) {
    if (payload.size() < 20) throw FormatError("checkpoint: truncated layer block");
    const bool conv = payload[0] == 1;
    if (conv != (l.kind() == LayerKind::conv))
        throw FormatError("checkpoint: layer kind mismatch for " + l.name());
    l.set_mode(payload[1] == 1 ? WeightMode::binary_weight : WeightMode::full_precision);
    const bool frozen = payload[2] == 1;
    Reader r{payload.data(), payload.size(), 4, l.name()};
    r.u32("stride");
    r.u32("padding");
    const float alpha = r.f32("alpha");
    const float prune = r.f32("prune_rate");
    size_t consumed = 0;
    Tensor w = decode_tensor(payload.data() + r.pos, payload.size() - r.pos, consumed);
    r.pos += consumed;
    Tensor s = decode_tensor(payload.data() + r.pos, payload.size() - r.pos, consumed);
    r.pos += consumed;
    Tensor m = decode_tensor(payload.data() + r.pos, payload.size() - r.pos, consumed);
    r.pos += consumed;
    if (w.shape() != l.w().shape())
        throw FormatError("checkpoint: weight shape mismatch for " + l.name());
    l.w().mutable_array() = w.array();
    l.s().mutable_array() = s.array();
    l.m().mutable_array() = m.array();
    l.set_alpha(alpha);
    if (prune > 0.0f) l.set_prune_rate(prune);
    if (frozen)
        l.set_inert();
    else
        l.set_frozen(false);
}

Bytes encode_ticket(const PatchTicket& t) {
    Bytes b;
    put_u32(b, static_cast<uint32_t>(t.n_p));
    put_f32(b, t.source_pr_p);
    put_u32(b, static_cast<uint32_t>(t.indices.size()));
    for (int64_t i : t.indices) put_u32(b, static_cast<uint32_t>(i));
    put_u32(b, static_cast<uint32_t>(t.scores.size()));
    for (float s : t.scores) put_f32(b, s);
    return b;
}

PatchTicket decode_ticket(const Bytes& payload) {
    Reader r{payload.data(), payload.size(), 0, "patch_ticket"};
    PatchTicket t;
    t.n_p = r.u32("n_p");
    t.source_pr_p = r.f32("pr_p");
    const uint32_t k = r.u32("index count");
    for (uint32_t i = 0; i < k; ++i) t.indices.push_back(r.u32("index"));
    const uint32_t ns = r.u32("score count");
    for (uint32_t i = 0; i < ns; ++i) t.scores.push_back(r.f32("score"));
    return t;
}

Bytes encode_rng(const RngRegistry& rng) {
    Bytes b;
    put_u32(b, static_cast<uint32_t>(rng.size()));
    for (const auto& [name, state] : rng) {
        put_str(b, name);
        put_str(b, state);
    }
    return b;
}

RngRegistry decode_rng(const Bytes& payload) {
    Reader r{payload.data(), payload.size(), 0, "rng"};
    RngRegistry out;
    const uint32_t n = r.u32("stream count");
    for (uint32_t i = 0; i < n; ++i) {
        std::string name = r.str("stream name");
        out[name] = r.str("stream state");
    }
    return out;
}

struct Section {
    std::string name;
    Bytes payload;
};

std::vector<Section> read_sections(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw FormatError("cannot open checkpoint " + path.string());
    Bytes buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    if (buf.size() < 8 || std::memcmp(buf.data(), "SLTC", 4) != 0)
        throw FormatError("checkpoint: bad magic");
    Reader r{buf.data(), buf.size(), 4, ""};
    const uint32_t version = r.u32("version");
    if (version != 1) throw FormatError("checkpoint: unsupported version " + std::to_string(version));
    std::vector<Section> sections;
    while (!r.done()) {
        r.context.clear();
        std::string name = r.str("section header");
        r.context = name;
        const uint64_t len = r.u64("section length");
        r.need(len + 4, "section payload");
        Section s;
        s.name = std::move(name);
        s.payload.assign(buf.begin() + static_cast<long>(r.pos),
                         buf.begin() + static_cast<long>(r.pos + len));
        r.pos += len;
        const uint32_t stored = r.u32("section crc");
        if (stored != crc32(s.payload.data(), s.payload.size()))
            throw FormatError("checkpoint: CRC mismatch in section '" + s.name + "'");
        sections.push_back(std::move(s));
    }
    return sections;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, Model& model,
                     const ExperimentConfig& config, const PatchTicket* ticket,
                     const RngRegistry& rng) {
    Bytes out;
    out.insert(out.end(), {'S', 'L', 'T', 'C'});
    put_u32(out, 1);

    const std::string cfg = config_to_text(config);
    append_section(out, "config", Bytes(cfg.begin(), cfg.end()));
    append_section(out, "rng", encode_rng(rng));
    for (MaskedLayer* l : model.masked_layers())
        append_section(out, "layer:" + l->name(), encode_layer(*l));
    if (auto* former = dynamic_cast<SpikeformerToy*>(&model)) {
        Bytes pe;
        encode_tensor(pe, former->pos_embed());
        append_section(out, "pos_embed", pe);
    }
    if (ticket) append_section(out, "patch_ticket", encode_ticket(*ticket));

    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw FormatError("cannot write checkpoint " + path.string());
    f.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
    std::vector<Section> sections = read_sections(path);
    LoadedCheckpoint out;
    const Section* config_sec = nullptr;
    for (const Section& s : sections)
        if (s.name == "config") config_sec = &s;
    if (!config_sec) throw FormatError("checkpoint: missing config section");
    out.config = parse_config_text(std::string(config_sec->payload.begin(), config_sec->payload.end()));

    RngStream init(derive_seed(out.config.seed, "init.model"));
    out.model = build_model(out.config, init);

    std::map<std::string, MaskedLayer*> by_name;
    for (MaskedLayer* l : out.model->masked_layers()) by_name["layer:" + l->name()] = l;

    for (const Section& s : sections) {
        if (s.name == "config") continue;
        if (s.name == "rng") {
            out.rng = decode_rng(s.payload);
        } else if (s.name == "pos_embed") {
            auto* former = dynamic_cast<SpikeformerToy*>(out.model.get());
            if (!former) throw FormatError("checkpoint: pos_embed for a non-transformer model");
            size_t consumed = 0;
            Tensor pe = decode_tensor(s.payload.data(), s.payload.size(), consumed);
            if (pe.shape() != former->pos_embed().shape())
                throw FormatError("checkpoint: pos_embed shape mismatch");
            former->pos_embed().mutable_array() = pe.array();
        } else if (s.name == "patch_ticket") {
            out.ticket = decode_ticket(s.payload);
        } else if (s.name.rfind("layer:", 0) == 0) {
            auto it = by_name.find(s.name);
            if (it == by_name.end())
                throw FormatError("checkpoint: unexpected section '" + s.name + "'");
            decode_layer(s.payload, *it->second);
            by_name.erase(it);
        } else {
            throw FormatError("checkpoint: unknown section '" + s.name + "'");
        }
    }
    if (!by_name.empty())
        throw FormatError("checkpoint: missing section '" + by_name.begin()->first + "'");
    return out;
}

std::string inspect_checkpoint(const std::filesystem::path& path) {
    std::vector<Section> sections = read_sections(path);
    nlohmann::json j;
    j["sections"] = nlohmann::json::array();
    for (const Section& s : sections) {
        nlohmann::json e;
        e["name"] = s.name;
        e["bytes"] = s.payload.size();
        e["crc_ok"] = true;  // read_sections already validated
        if (s.name.rfind("layer:", 0) == 0) {
            Reader r{s.payload.data(), s.payload.size(), 0, s.name};
            r.need(20, "layer header");
            e["kind"] = s.payload[0] == 1 ? "conv" : "linear";
            e["mode"] = s.payload[1] == 1 ? "binary_weight" : "full_precision";
            e["frozen"] = s.payload[2] == 1;
            r.pos = 12;
            e["alpha"] = r.f32("alpha");
            e["prune_rate"] = r.f32("prune_rate");
            size_t consumed = 0;
            Tensor w = decode_tensor(s.payload.data() + r.pos, s.payload.size() - r.pos, consumed);
            r.pos += consumed;
            Tensor sc = decode_tensor(s.payload.data() + r.pos, s.payload.size() - r.pos, consumed);
            r.pos += consumed;
            Tensor m = decode_tensor(s.payload.data() + r.pos, s.payload.size() - r.pos, consumed);
            int64_t active = 0;
            for (int64_t i = 0; i < m.numel(); ++i)
                if (m.array()[i] != 0.0f) ++active;
            e["shape"] = w.shape();
            e["active"] = active;
            e["numel"] = w.numel();
            (void)sc;
        } else if (s.name == "patch_ticket") {
            PatchTicket t = decode_ticket(s.payload);
            e["n_p"] = t.n_p;
            e["kept"] = t.indices.size();
            e["indices"] = t.indices;
        }
        j["sections"].push_back(e);
    }
    return j.dump(2);
}

}  // namespace slt
