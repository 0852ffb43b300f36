#pragma once

#include <array>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "cnn.hpp"
#include "control.hpp"
#include "core.hpp"
#include "detector.hpp"
#include "envs.hpp"

namespace safeocc {

using json = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// CRC64 (ECMA-182)

inline uint64_t crc64(const uint8_t* data, size_t len, uint64_t crc = 0) {
    static const auto table = [] {
        std::array<uint64_t, 256> t{};
        for (uint64_t i = 0; i < 256; ++i) {
            uint64_t c = i;
            for (int k = 0; k < 8; ++k) c = (c >> 1) ^ ((c & 1) ? 0xC96C5795D7870F42ull : 0);
            t[i] = c;
        }
        return t;
    }();
    crc = ~crc;
    for (size_t i = 0; i < len; ++i) crc = table[(crc ^ data[i]) & 0xFF] ^ (crc >> 8);
    return ~crc;
}

inline uint64_t crc64_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    require(in.good(), "crc64_file: cannot open " + path);
    uint64_t crc = 0;
    std::vector<char> buf(1 << 16);
    while (in) {
        in.read(buf.data(), buf.size());
        const std::streamsize got = in.gcount();
        if (got > 0) crc = crc64(reinterpret_cast<const uint8_t*>(buf.data()), got, crc);
    }
    return crc;
}

// ---------------------------------------------------------------------------
// Atomic file writes (temp-and-rename)

inline void write_file_atomic(const std::string& path, const std::string& bytes) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        require(out.good(), "write_file_atomic: cannot open " + tmp);
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        require(out.good(), "write_file_atomic: write failed for " + tmp);
    }
    std::filesystem::rename(tmp, path);
}

// ---------------------------------------------------------------------------
// ModelFile: magic "SFOC", u32 version, u64 metadata length, JSON metadata,
// little-endian f64 payload in metadata-declared order, CRC64 trailer.

namespace detail {

inline void append_u32(std::string& s, uint32_t v) { s.append(reinterpret_cast<char*>(&v), 4); }
inline void append_u64(std::string& s, uint64_t v) { s.append(reinterpret_cast<char*>(&v), 8); }
inline void append_doubles(std::string& s, const double* d, size_t n) {
    s.append(reinterpret_cast<const char*>(d), n * sizeof(double));
}

}  // namespace detail

struct ModelFile {
    json metadata;
    std::vector<Vec> payload;  // segments, in metadata-declared order
};

inline void save_model_file(const std::string& path, const ModelFile& mf) {
    std::string bytes = "SFOC";
    detail::append_u32(bytes, 1);
    const std::string meta = mf.metadata.dump();
    detail::append_u64(bytes, meta.size());
    bytes += meta;
    for (const Vec& seg : mf.payload) detail::append_doubles(bytes, seg.data(), seg.size());
    const uint64_t crc = crc64(reinterpret_cast<const uint8_t*>(bytes.data()), bytes.size());
    detail::append_u64(bytes, crc);
    write_file_atomic(path, bytes);
}

inline ModelFile load_model_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    require(in.good(), "load_model_file: cannot open " + path);
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    require(bytes.size() >= 24 && bytes.compare(0, 4, "SFOC") == 0,
            "load_model_file: bad magic in " + path);
    uint64_t stored;
    std::memcpy(&stored, bytes.data() + bytes.size() - 8, 8);
    const uint64_t crc = crc64(reinterpret_cast<const uint8_t*>(bytes.data()), bytes.size() - 8);
    require(stored == crc, "load_model_file: checksum mismatch in " + path);

    uint32_t version;
    std::memcpy(&version, bytes.data() + 4, 4);
    require(version == 1, "load_model_file: unsupported version");
    uint64_t meta_len;
    std::memcpy(&meta_len, bytes.data() + 8, 8);

    ModelFile mf;
    mf.metadata = json::parse(bytes.substr(16, meta_len));
    size_t off = 16 + meta_len;
    const size_t payload_end = bytes.size() - 8;
    for (const auto& seg : mf.metadata.at("segments")) {
        const size_t n = seg.at("len").get<size_t>();
        require(off + n * 8 <= payload_end, "load_model_file: truncated payload");
        Vec v(n);
        std::memcpy(v.data(), bytes.data() + off, n * 8);
        mf.payload.push_back(std::move(v));
        off += n * 8;
    }
    require(off == payload_end, "load_model_file: payload size mismatch");
    return mf;
}

// ---------------------------------------------------------------------------
// CNN sensor persistence

inline void save_cnn(const std::string& path, const CnnModel& model, const json& extra = {}) {
    ModelFile mf;
    json meta;
    meta["type"] = "cnn";
    meta["input_dim"] = model.input_dim;
    meta["input_channels"] = model.input_channels;
    json blocks = json::array();
    for (const auto& b : model.blocks) {
        blocks.push_back({{"filters", b.filters},
                          {"kernel_size", b.kernel_size},
                          {"activation", static_cast<int>(b.activation)},
                          {"pool", static_cast<int>(b.pool)},
                          {"pool_size", b.pool_size}});
    }
    meta["blocks"] = blocks;
    json dense = json::array();
    for (const auto& d : model.dense)
        dense.push_back({{"rows", d.weights.rows},
                         {"cols", d.weights.cols},
                         {"activation", static_cast<int>(d.activation)}});
    meta["dense"] = dense;
    if (!extra.is_null() && !extra.empty()) meta["info"] = extra;

    Vec params = params_flatten(model);
    meta["segments"] = json::array({{{"name", "params"}, {"len", params.size()}}});
    mf.metadata = std::move(meta);
    mf.payload.push_back(std::move(params));
    save_model_file(path, mf);
}

inline CnnModel load_cnn(const std::string& path, json* info = nullptr) {
    ModelFile mf = load_model_file(path);
    require(mf.metadata.at("type") == "cnn", "load_cnn: not a cnn model file");
    CnnModel model;
    model.input_dim = mf.metadata.at("input_dim");
    model.input_channels = mf.metadata.at("input_channels");
    int ch = model.input_channels;
    for (const auto& b : mf.metadata.at("blocks")) {
        ConvBlockSpec spec;
        spec.filters = b.at("filters");
        spec.kernel_size = b.at("kernel_size");
        spec.activation = static_cast<Activation>(b.at("activation").get<int>());
        spec.pool = static_cast<PoolKind>(b.at("pool").get<int>());
        spec.pool_size = b.at("pool_size");
        model.blocks.push_back(spec);
        model.ops.emplace_back(spec.kernel_size, ch, spec.filters);
        ch = spec.filters;
    }
    for (const auto& d : mf.metadata.at("dense")) {
        DenseLayer layer;
        layer.weights = Mat(d.at("rows"), d.at("cols"));
        layer.bias = Vec(d.at("rows").get<size_t>(), 0.0);
        layer.activation = static_cast<Activation>(d.at("activation").get<int>());
        model.dense.push_back(std::move(layer));
    }
    params_assign(model, mf.payload.at(0));
    if (info && mf.metadata.contains("info")) *info = mf.metadata["info"];
    return model;
}

// ---------------------------------------------------------------------------
// Detector persistence

inline void save_detector(const std::string& path, const SafeOccDetector& det,
                          const json& extra = {}) {
    ModelFile mf;
    json meta;
    meta["type"] = "detector";
    meta["config"] = {{"tap_block", det.config.tap.block},
                      {"tap_signal", static_cast<int>(det.config.tap.signal)},
                      {"scalarizer", static_cast<int>(det.config.scalarizer)},
                      {"refiner", static_cast<int>(det.config.refiner)},
                      {"pca_mode", static_cast<int>(det.config.pca_mode)},
                      {"pca_dims", det.config.pca_dims}};
    json segments = json::array();
    auto add_seg = [&](const std::string& name, Vec v) {
        segments.push_back({{"name", name}, {"len", v.size()}});
        mf.payload.push_back(std::move(v));
    };
    add_seg("scalars", {det.config.pca_variance, det.config.nu, det.config.gamma,
                        det.config.epsilon, det.ocsvm.rho, det.ocsvm.gamma, det.ocsvm.nu});

    if (det.twod_pca) {
        meta["twod_pca"] = {{"filters", det.twod_pca->filters.size()},
                            {"n", det.twod_pca->filters[0].w.rows},
                            {"d", det.twod_pca->filters[0].w.cols},
                            {"r", det.twod_pca->filters[0].q.cols}};
        Vec blob;
        for (const auto& f : det.twod_pca->filters) {
            blob.insert(blob.end(), f.w.data.begin(), f.w.data.end());
            blob.insert(blob.end(), f.q.data.begin(), f.q.data.end());
            blob.insert(blob.end(), f.mean_map.data.begin(), f.mean_map.data.end());
        }
        add_seg("twod_pca", std::move(blob));
    }

    meta["refiner_len"] = det.refiner.v_mu.size();
    {
        Vec blob;
        blob.insert(blob.end(), det.refiner.v_min.begin(), det.refiner.v_min.end());
        blob.insert(blob.end(), det.refiner.v_max.begin(), det.refiner.v_max.end());
        blob.insert(blob.end(), det.refiner.v_mu.begin(), det.refiner.v_mu.end());
        blob.insert(blob.end(), det.refiner.v_sigma.begin(), det.refiner.v_sigma.end());
        add_seg("refiner", std::move(blob));
    }

    if (det.pca) {
        meta["pca"] = {{"n", det.pca->mean.size()}, {"d", det.pca->projection.cols}};
        Vec blob = det.pca->mean;
        blob.insert(blob.end(), det.pca->projection.data.begin(), det.pca->projection.data.end());
        blob.insert(blob.end(), det.pca->eigenvalues.begin(), det.pca->eigenvalues.end());
        add_seg("pca", std::move(blob));
    }

    meta["ocsvm"] = {{"n_sv", det.ocsvm.support_vectors.size()},
                     {"dim", det.ocsvm.support_vectors.empty()
                                 ? 0
                                 : det.ocsvm.support_vectors[0].size()}};
    {
        Vec blob = det.ocsvm.alphas;
        for (const Vec& sv : det.ocsvm.support_vectors)
            blob.insert(blob.end(), sv.begin(), sv.end());
        add_seg("ocsvm", std::move(blob));
    }

    if (!extra.is_null() && !extra.empty()) meta["info"] = extra;
    meta["segments"] = segments;
    mf.metadata = std::move(meta);
    save_model_file(path, mf);
}

inline SafeOccDetector load_detector(const std::string& path, json* info = nullptr) {
    ModelFile mf = load_model_file(path);
    require(mf.metadata.at("type") == "detector", "load_detector: not a detector model file");
    SafeOccDetector det;
    const json& cfg = mf.metadata.at("config");
    det.config.tap = {cfg.at("tap_block"), static_cast<TapSignal>(cfg.at("tap_signal").get<int>())};
    det.config.scalarizer = static_cast<ScalarizerKind>(cfg.at("scalarizer").get<int>());
    det.config.refiner = static_cast<RefinerKind>(cfg.at("refiner").get<int>());
    det.config.pca_mode = static_cast<PcaMode>(cfg.at("pca_mode").get<int>());
    det.config.pca_dims = cfg.at("pca_dims");

    size_t seg = 0;
    auto next_seg = [&]() -> const Vec& { return mf.payload.at(seg++); };
    {
        const Vec& s = next_seg();
        det.config.pca_variance = s[0];
        det.config.nu = s[1];
        det.config.gamma = s[2];
        det.config.epsilon = s[3];
        det.ocsvm.rho = s[4];
        det.ocsvm.gamma = s[5];
        det.ocsvm.nu = s[6];
    }
    if (mf.metadata.contains("twod_pca")) {
        const json& t = mf.metadata["twod_pca"];
        const size_t q = t.at("filters");
        const int n = t.at("n"), d = t.at("d"), r = t.at("r");
        const Vec& blob = next_seg();
        TwoDPcaModel model;
        size_t off = 0;
        for (size_t j = 0; j < q; ++j) {
            TwoDPcaFilter f;
            f.w = Mat(n, d);
            std::copy_n(blob.begin() + off, f.w.data.size(), f.w.data.begin());
            off += f.w.data.size();
            f.q = Mat(n, r);
            std::copy_n(blob.begin() + off, f.q.data.size(), f.q.data.begin());
            off += f.q.data.size();
            f.mean_map = Mat(n, n);
            std::copy_n(blob.begin() + off, f.mean_map.data.size(), f.mean_map.data.begin());
            off += f.mean_map.data.size();
            model.filters.push_back(std::move(f));
        }
        det.twod_pca = std::move(model);
    }
    {
        const size_t len = mf.metadata.at("refiner_len");
        const Vec& blob = next_seg();
        det.refiner.kind = det.config.refiner;
        det.refiner.v_min.assign(blob.begin(), blob.begin() + len);
        det.refiner.v_max.assign(blob.begin() + len, blob.begin() + 2 * len);
        det.refiner.v_mu.assign(blob.begin() + 2 * len, blob.begin() + 3 * len);
        det.refiner.v_sigma.assign(blob.begin() + 3 * len, blob.begin() + 4 * len);
    }
    if (mf.metadata.contains("pca")) {
        const size_t n = mf.metadata["pca"].at("n");
        const int d = mf.metadata["pca"].at("d");
        const Vec& blob = next_seg();
        PcaModel p;
        p.mean.assign(blob.begin(), blob.begin() + n);
        p.projection = Mat(static_cast<int>(n), d);
        std::copy_n(blob.begin() + n, p.projection.data.size(), p.projection.data.begin());
        p.eigenvalues.assign(blob.begin() + n + p.projection.data.size(), blob.end());
        det.pca = std::move(p);
    }
    {
        const size_t n_sv = mf.metadata.at("ocsvm").at("n_sv");
        const size_t dim = mf.metadata.at("ocsvm").at("dim");
        const Vec& blob = next_seg();
        det.ocsvm.alphas.assign(blob.begin(), blob.begin() + n_sv);
        for (size_t k = 0; k < n_sv; ++k)
            det.ocsvm.support_vectors.emplace_back(blob.begin() + n_sv + k * dim,
                                                   blob.begin() + n_sv + (k + 1) * dim);
    }
    if (info && mf.metadata.contains("info")) *info = mf.metadata["info"];
    return det;
}

// ---------------------------------------------------------------------------
// Dataset directory: manifest.json + images.bin (f32 LE) + labels.bin (f64 LE)

inline void save_dataset(const std::string& dir, const EpisodeDataset& ds, const json& extra = {}) {
    require(!ds.data.images.empty(), "save_dataset: empty dataset");
    std::filesystem::create_directories(dir);
    const Tensor3& first = ds.data.images[0];

    std::string images;
    images.reserve(ds.data.images.size() * first.data.size() * 4);
    for (const Tensor3& img : ds.data.images)
        for (double v : img.data) {
            const float f = static_cast<float>(v);
            images.append(reinterpret_cast<const char*>(&f), 4);
        }
    write_file_atomic(dir + "/images.bin", images);

    std::string labels;
    for (const Vec& l : ds.data.labels)
        labels.append(reinterpret_cast<const char*>(l.data()), l.size() * 8);
    write_file_atomic(dir + "/labels.bin", labels);

    json manifest;
    manifest["schema_version"] = 1;
    manifest["n_frames"] = ds.data.images.size();
    manifest["image_dim"] = first.dim1;
    manifest["channels"] = first.channels;
    manifest["label_dim"] = ds.data.labels[0].size();
    manifest["episode_starts"] = ds.episode_starts;
    char hash[32];
    std::snprintf(hash, sizeof(hash), "%016llx",
                  static_cast<unsigned long long>(crc64_file(dir + "/images.bin") ^
                                                  crc64_file(dir + "/labels.bin")));
    manifest["data_hash"] = hash;
    if (!extra.is_null() && !extra.empty()) manifest["info"] = extra;
    write_file_atomic(dir + "/manifest.json", manifest.dump(2) + "\n");
}

inline EpisodeDataset load_dataset(const std::string& dir, json* manifest_out = nullptr) {
    std::ifstream mf(dir + "/manifest.json");
    require(mf.good(), "load_dataset: missing manifest in " + dir);
    json manifest = json::parse(mf);
    const size_t n = manifest.at("n_frames");
    const int dim = manifest.at("image_dim");
    const int ch = manifest.at("channels");
    const size_t label_dim = manifest.at("label_dim");

    EpisodeDataset ds;
    ds.episode_starts = manifest.at("episode_starts").get<std::vector<int>>();

    std::ifstream imgs(dir + "/images.bin", std::ios::binary);
    require(imgs.good(), "load_dataset: missing images.bin in " + dir);
    const size_t pixels = static_cast<size_t>(dim) * dim * ch;
    std::vector<float> buf(pixels);
    for (size_t i = 0; i < n; ++i) {
        imgs.read(reinterpret_cast<char*>(buf.data()), pixels * 4);
        require(imgs.good(), "load_dataset: truncated images.bin");
        Tensor3 img(dim, dim, ch);
        for (size_t k = 0; k < pixels; ++k) img.data[k] = static_cast<double>(buf[k]);
        ds.data.images.push_back(std::move(img));
    }
    std::ifstream labels(dir + "/labels.bin", std::ios::binary);
    require(labels.good(), "load_dataset: missing labels.bin in " + dir);
    for (size_t i = 0; i < n; ++i) {
        Vec l(label_dim);
        labels.read(reinterpret_cast<char*>(l.data()), label_dim * 8);
        require(labels.good(), "load_dataset: truncated labels.bin");
        ds.data.labels.push_back(std::move(l));
    }
    if (manifest_out) *manifest_out = std::move(manifest);
    return ds;
}

// ---------------------------------------------------------------------------
// CSV emission

inline std::string accuracy_csv(const std::vector<AccuracyRow>& rows) {
    std::string out = "sensor,config,test_set,label,accuracy_pct,n_images\n";
    char line[256];
    for (const auto& r : rows) {
        std::snprintf(line, sizeof(line), "%s,%s,%s,%s,%.2f,%d\n", r.sensor.c_str(),
                      r.config.c_str(), r.test_set.c_str(), r.label.c_str(), r.accuracy_pct,
                      r.n_images);
        out += line;
    }
    return out;
}

inline std::string loop_csv(const std::vector<LoopStep>& steps) {
    std::string out = "t,y_true,y_hat,y_err,z,h_hat,score,verdict,alarm\n";
    char line[256];
    for (const auto& s : steps) {
        std::snprintf(line, sizeof(line), "%d,%.6f,%.6f,%.6f,%d,%.9f,%.9f,%s,%d\n", s.t, s.y_true,
                      s.y_hat, s.y_err, s.z, s.h_hat, s.score,
                      s.verdict == Verdict::novel ? "novel" : "normal", s.alarm ? 1 : 0);
        out += line;
    }
    return out;
}

}  // namespace safeocc
