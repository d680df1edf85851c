#include "museum/checkpoint.hpp"

#include <openssl/evp.h>

#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

#include "museum/errors.hpp"

namespace museum {

using nlohmann::json;

namespace {

constexpr char kMagic[8] = {'M', 'U', 'S', 'E', 'U', 'M', 'C', 'K'};

void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint64_t get_uint(const std::string& in, std::size_t pos, int bytes) {
    if (pos + static_cast<std::size_t>(bytes) > in.size()) throw FormatError("checkpoint truncated in header");
    std::uint64_t v = 0;
    for (int i = 0; i < bytes; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[pos + i])) << (8 * i);
    return v;
}

class BlobWriter {
public:
    void add(const std::string& key, const Tensor& t) {
        tensors_.push_back({{"key", key}, {"shape", t.shape}, {"offset", blob_.size()}});
        for (double v : t.data) {
            const float f = static_cast<float>(v);
            std::uint32_t bits;
            std::memcpy(&bits, &f, sizeof bits);
            put_u32(blob_, bits);
        }
    }
    json tensors_ = json::array();
    std::string blob_;
};

class BlobReader {
public:
    BlobReader(const json& index, const std::string& blob) : blob_(blob) {
        for (const auto& e : index) entries_[e.at("key").get<std::string>()] = e;
    }

    Tensor get(const std::string& key, const std::vector<int>* expect = nullptr) const {
        auto it = entries_.find(key);
        if (it == entries_.end()) throw FormatError("checkpoint is missing tensor '" + key + "'");
        const std::vector<int> shape = it->second.at("shape").get<std::vector<int>>();
        if (expect && shape != *expect) {
            throw FormatError("tensor '" + key + "' has shape " + shape_str(shape) + ", expected " + shape_str(*expect));
        }
        const std::size_t offset = it->second.at("offset").get<std::size_t>();
        Tensor t(shape);
        if (offset + 4 * t.size() > blob_.size()) throw FormatError("tensor '" + key + "' runs past the blob");
        for (std::size_t i = 0; i < t.size(); ++i) {
            const auto bits = static_cast<std::uint32_t>(get_uint(blob_, offset + 4 * i, 4));
            float f;
            std::memcpy(&f, &bits, sizeof f);
            t[i] = static_cast<double>(f);
        }
        return t;
    }

private:
    const std::string& blob_;
    std::map<std::string, json> entries_;
};

json lora_meta(const LoraState& l) {
    json names = json::array();
    for (const auto& a : l.adapters()) names.push_back(a.name);
    return {{"rank", l.rank()}, {"scale", l.scale()}, {"adapters", names}};
}

void write_lora(BlobWriter& w, const std::string& prefix, const LoraState& l) {
    for (const auto& a : l.adapters()) {
        w.add(prefix + a.name + "/A", a.a.value());
        w.add(prefix + a.name + "/B", a.b.value());
    }
}

LoraState read_lora(const BlobReader& r, const std::string& prefix, const json& meta, const DiffusionModel& model) {
    const auto layout = model.unet().adapted_projections();
    const auto names = meta.at("adapters").get<std::vector<std::string>>();
    if (names.size() != layout.size()) throw FormatError("checkpoint LoRA layout does not match the model");
    LoraState l = LoraState::create(layout, meta.at("rank").get<int>(), meta.at("scale").get<double>(), 0);
    for (std::size_t i = 0; i < layout.size(); ++i) {
        if (names[i] != layout[i].name) throw FormatError("checkpoint LoRA adapter '" + names[i] + "' not in model");
        l.set_factors(i, r.get(prefix + names[i] + "/A"), r.get(prefix + names[i] + "/B"));
    }
    return l;
}

}  // namespace

std::string serialize_checkpoint(const Museum& museum) {
    const DiffusionModel& base = museum.base;
    BlobWriter w;
    for (const auto& [name, p] : base.params()) w.add("base/" + name, p.value());

    json manifest;
    manifest["format"] = "museum-checkpoint";
    manifest["format_version"] = kCheckpointVersion;
    manifest["config"] = to_json(museum.config);
    manifest["model"] = to_json(base.config());
    manifest["latent_scale"] = base.codec().latent_scale();
    manifest["schedule"] = {{"kind", "linear"},
                            {"steps", base.schedule().steps()},
                            {"beta_start", base.config().beta_start},
                            {"beta_end", base.config().beta_end}};
    json tasks = json::array();
    for (const auto& t : museum.tasks) {
        tasks.push_back({{"task_id", t.task_id}, {"style", t.style_name}, {"prompt_templates", t.prompt_templates}});
    }
    manifest["tasks"] = tasks;

    if (museum.lora.layer_count()) {
        manifest["lora"] = lora_meta(museum.lora);
        write_lora(w, "lora/", museum.lora);
    } else {
        manifest["lora"] = nullptr;
    }
    json task_loras = json::array();
    for (const auto& [id, l] : museum.task_loras) {
        json m = lora_meta(l);
        m["task_id"] = id;
        task_loras.push_back(m);
        write_lora(w, "task_lora/" + std::to_string(id) + "/", l);
    }
    manifest["task_loras"] = task_loras;

    json tokens = json::array();
    for (const auto& [id, set] : museum.bank.sets()) {
        tokens.push_back({{"task_id", id},
                          {"style", set.style_name},
                          {"init", set.init_record},
                          {"trainable", set.trainable},
                          {"layers", set.vectors.size()}});
        for (std::size_t l = 0; l < set.vectors.size(); ++l) {
            w.add("tokens/" + std::to_string(id) + "/" + std::to_string(l + 1), set.vectors[l].value());
        }
    }
    manifest["tokens"] = tokens;
    manifest["tensors"] = w.tensors_;
    manifest["blob_bytes"] = w.blob_.size();

    const std::string text = manifest.dump(1);
    std::string out(kMagic, sizeof kMagic);
    put_u32(out, kCheckpointVersion);
    put_u64(out, text.size());
    out += text;
    put_u64(out, w.blob_.size());
    out += w.blob_;
    return out;
}

Museum deserialize_checkpoint(const std::string& bytes) {
    if (bytes.size() < sizeof kMagic || std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0) {
        throw FormatError("not a museum checkpoint (bad magic)");
    }
    const auto version = static_cast<std::uint32_t>(get_uint(bytes, 8, 4));
    if (version != kCheckpointVersion) {
        throw FormatError("checkpoint format version " + std::to_string(version) + " is not supported (expected " +
                          std::to_string(kCheckpointVersion) + ")");
    }
    const std::uint64_t mlen = get_uint(bytes, 12, 8);
    const std::size_t mpos = 20;
    if (mpos + mlen > bytes.size()) throw FormatError("checkpoint truncated in manifest");
    const std::uint64_t blen = get_uint(bytes, mpos + mlen, 8);
    const std::size_t bpos = mpos + mlen + 8;
    if (bpos + blen != bytes.size()) {
        throw FormatError("checkpoint blob holds " + std::to_string(bytes.size() - std::min<std::size_t>(bpos, bytes.size())) +
                          " bytes, manifest expects " + std::to_string(blen));
    }
    const std::string blob = bytes.substr(bpos);

    try {
        const json manifest = json::parse(bytes.begin() + static_cast<std::ptrdiff_t>(mpos),
                                          bytes.begin() + static_cast<std::ptrdiff_t>(mpos + mlen));
        if (manifest.at("format_version").get<std::uint32_t>() != version) {
            throw FormatError("manifest version disagrees with header");
        }
        if (manifest.at("blob_bytes").get<std::uint64_t>() != blen) throw FormatError("manifest blob size mismatch");
        const BlobReader r(manifest.at("tensors"), blob);

        Museum m;
        m.config = train_config_from_json(manifest.at("config"));
        m.base = DiffusionModel(model_config_from_json(manifest.at("model")));
        for (const auto& [name, p] : m.base.params()) {
            p.mutable_value() = r.get("base/" + name, &p.value().shape);
        }
        m.base.codec().set_latent_scale(manifest.at("latent_scale").get<double>());

        for (const auto& t : manifest.at("tasks")) {
            m.tasks.push_back({t.at("task_id").get<int>(), t.at("style").get<std::string>(),
                               t.at("prompt_templates").get<std::vector<std::string>>()});
        }
        for (std::size_t i = 0; i < m.tasks.size(); ++i) {
            if (m.tasks[i].task_id != static_cast<int>(i) + 1) throw FormatError("task registry is not contiguous");
        }
        if (!manifest.at("lora").is_null()) {
            m.lora = read_lora(r, "lora/", manifest.at("lora"), m.base);
            m.base.unet().mark_lora_attached();
        }
        for (const auto& e : manifest.at("task_loras")) {
            const int id = e.at("task_id").get<int>();
            m.task_loras.emplace(id, read_lora(r, "task_lora/" + std::to_string(id) + "/", e, m.base).clone_frozen());
            m.base.unet().mark_lora_attached();
        }
        const std::vector<int> token_shape{m.base.config().d_cond};
        for (const auto& e : manifest.at("tokens")) {
            TokenSet set;
            set.task_id = e.at("task_id").get<int>();
            set.style_name = e.at("style").get<std::string>();
            set.init_record = e.at("init").get<std::string>();
            set.trainable = e.at("trainable").get<bool>();
            const int layers = e.at("layers").get<int>();
            if (layers != m.base.cross_attention_layers()) throw FormatError("token set layer count mismatch");
            for (int l = 1; l <= layers; ++l) {
                Tensor v = r.get("tokens/" + std::to_string(set.task_id) + "/" + std::to_string(l), &token_shape);
                set.vectors.push_back(set.trainable ? ag::parameter(std::move(v)) : ag::constant(std::move(v)));
            }
            m.bank.restore(std::move(set));
        }
        return m;
    } catch (const json::exception& e) {
        throw FormatError(std::string("corrupt checkpoint manifest: ") + e.what());
    } catch (const ConfigError& e) {
        throw FormatError(std::string("checkpoint config invalid: ") + e.what());
    }
}

void save_checkpoint(const Museum& museum, const std::filesystem::path& path) {
    const std::string bytes = serialize_checkpoint(museum);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write checkpoint " + path.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("failed writing checkpoint " + path.string());
}

namespace {

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read " + path.string());
    return std::string(std::istreambuf_iterator<char>(in), {});
}

}  // namespace

Museum load_checkpoint(const std::filesystem::path& path) { return deserialize_checkpoint(read_file(path)); }

std::string sha256_hex(const std::string& bytes) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
        throw Error("SHA-256 computation failed");
    }
    static const char* hex = "0123456789abcdef";
    std::string out;
    for (unsigned int i = 0; i < len; ++i) {
        out.push_back(hex[digest[i] >> 4]);
        out.push_back(hex[digest[i] & 0xf]);
    }
    return out;
}

std::string file_sha256(const std::filesystem::path& path) { return sha256_hex(read_file(path)); }

}  // namespace museum
