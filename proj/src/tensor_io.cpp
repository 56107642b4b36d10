#include "hsfusion/tensor_io.hpp"

#include "hsfusion/errors.hpp"

#include "json.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace hsfusion {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

static_assert(std::endian::native == std::endian::little, "payload is written in native little-endian order");

std::string read_all(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw IoError("cannot open " + p.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    if (in.bad()) throw IoError("read failed: " + p.string());
    return ss.str();
}

template <class T>
T header_field(const json& h, const char* key, const fs::path& p) {
    auto it = h.find(key);
    if (it == h.end()) throw IoError(p.string() + ": header lacks \"" + key + "\"");
    try {
        return it->get<T>();
    } catch (const json::exception&) {
        throw IoError(p.string() + ": header field \"" + key + "\" has the wrong type");
    }
}

void expect(const json& h, const char* key, const std::string& value, const fs::path& p) {
    const auto got = header_field<std::string>(h, key, p);
    if (got != value) {
        throw IoError(p.string() + ": unsupported " + key + " \"" + got + "\" (expected \"" + value + "\")");
    }
}

}  // namespace

fs::path tensor_base(const fs::path& path) {
    const auto ext = path.extension();
    if (ext == ".json" || ext == ".bin") {
        fs::path b = path;
        return b.replace_extension();
    }
    return path;
}

fs::path header_path(const fs::path& base) {
    fs::path p = tensor_base(base);
    p += ".json";
    return p;
}

fs::path payload_path(const fs::path& base) {
    fs::path p = tensor_base(base);
    p += ".bin";
    return p;
}

void save_tensor(const fs::path& base, const Tensor3& t, const std::string& semantic) {
    const fs::path hp = header_path(base);
    const fs::path bp = payload_path(base);
    if (hp.has_parent_path()) {
        std::error_code ec;
        fs::create_directories(hp.parent_path(), ec);
        if (ec) throw IoError("cannot create " + hp.parent_path().string() + ": " + ec.message());
    }
    json h;
    h["dims"] = {t.dims()[0], t.dims()[1], t.dims()[2]};
    h["element_type"] = "f64";
    h["byte_order"] = "little";
    h["layout"] = "mode1-fastest";
    h["semantic"] = semantic;
    h["payload"] = bp.filename().string();

    std::ofstream ho(hp, std::ios::binary | std::ios::trunc);
    if (!ho) throw IoError("cannot write " + hp.string());
    ho << h.dump(2) << '\n';
    if (!ho) throw IoError("write failed: " + hp.string());

    std::ofstream bo(bp, std::ios::binary | std::ios::trunc);
    if (!bo) throw IoError("cannot write " + bp.string());
    bo.write(reinterpret_cast<const char*>(t.vec().data()),
             static_cast<std::streamsize>(t.size() * sizeof(double)));
    if (!bo) throw IoError("write failed: " + bp.string());
}

TensorFile load_tensor(const fs::path& path) {
    const fs::path hp = header_path(path);
    const fs::path bp = payload_path(path);
    const std::string text = read_all(hp);
    json h;
    try {
        h = json::parse(text);
    } catch (const json::parse_error& e) {
        throw IoError(hp.string() + ": malformed header at byte " + std::to_string(e.byte) + ": " + e.what());
    }
    if (!h.is_object()) throw IoError(hp.string() + ": header is not a JSON object");
    expect(h, "element_type", "f64", hp);
    expect(h, "byte_order", "little", hp);
    expect(h, "layout", "mode1-fastest", hp);
    const auto dims = header_field<std::vector<long long>>(h, "dims", hp);
    if (dims.size() != 3) throw IoError(hp.string() + ": dims must have three entries");
    Dims d{};
    for (std::size_t i = 0; i < 3; ++i) {
        if (dims[i] < 0) throw IoError(hp.string() + ": negative dimension");
        d[i] = static_cast<Index>(dims[i]);
    }
    std::string semantic;
    if (h.contains("semantic")) semantic = header_field<std::string>(h, "semantic", hp);

    const std::string payload = read_all(bp);
    const std::size_t expected = static_cast<std::size_t>(d[0] * d[1] * d[2]) * sizeof(double);
    if (payload.size() != expected) {
        throw IoError(bp.string() + ": payload has " + std::to_string(payload.size()) + " bytes, header implies " +
                      std::to_string(expected) + (payload.size() < expected
                                                      ? " (truncated at byte offset " + std::to_string(payload.size()) + ")"
                                                      : " (trailing data from byte offset " + std::to_string(expected) + ")"));
    }
    Tensor3 t(d);
    std::memcpy(t.vec().data(), payload.data(), expected);
    return {std::move(t), std::move(semantic)};
}

}  // namespace hsfusion
