#include "uar/io.hpp"

#include <charconv>
#include <zlib.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

namespace uar::io {

namespace fs = std::filesystem;

static_assert(std::endian::native == std::endian::little, "the UARL writer assumes a little-endian host");

namespace {

constexpr char kMagic[4] = {'U', 'A', 'R', 'L'};

template <class T>
void put(std::vector<std::uint8_t>& out, T v) {
    std::uint8_t buf[sizeof(T)];
    std::memcpy(buf, &v, sizeof(T));
    out.insert(out.end(), buf, buf + sizeof(T));
}

class Reader {
public:
    explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

    template <class T>
    T get() {
        need(sizeof(T));
        T v;
        std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
        pos_ += sizeof(T);
        return v;
    }
    std::string get_string(std::size_t n) {
        need(n);
        std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
        pos_ += n;
        return s;
    }
    std::size_t remaining() const { return bytes_.size() - pos_; }

private:
    void need(std::size_t n) const {
        if (remaining() < n) throw FormatError("UARL: truncated data");
    }
    std::span<const std::uint8_t> bytes_;
    std::size_t pos_ = 0;
};

}  // namespace

std::uint32_t crc32(std::span<const std::uint8_t> bytes) {
    uLong c = ::crc32(0L, Z_NULL, 0);
    std::size_t pos = 0;
    while (pos < bytes.size()) {
        const auto chunk = static_cast<uInt>(std::min<std::size_t>(bytes.size() - pos, 1u << 30));
        c = ::crc32(c, bytes.data() + pos, chunk);
        pos += chunk;
    }
    return static_cast<std::uint32_t>(c);
}

std::vector<std::uint8_t> encode(const std::vector<NamedArray>& arrays) {
    std::vector<std::uint8_t> out(kMagic, kMagic + 4);
    put<std::uint32_t>(out, kFormatVersion);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(arrays.size()));
    for (const auto& a : arrays) {
        if (a.name.size() > 0xFFFF) throw FormatError("UARL: array name too long: " + a.name);
        if (a.dims.size() > 0xFF) throw FormatError("UARL: too many dimensions in " + a.name);
        std::uint64_t count = 1;
        for (auto d : a.dims) count *= d;
        if (count != a.values.size()) throw FormatError("UARL: dims do not match payload for " + a.name);
        put<std::uint16_t>(out, static_cast<std::uint16_t>(a.name.size()));
        out.insert(out.end(), a.name.begin(), a.name.end());
        put<std::uint8_t>(out, static_cast<std::uint8_t>(a.dims.size()));
        for (auto d : a.dims) put<std::uint64_t>(out, d);
        for (double v : a.values) put<double>(out, v);
    }
    put<std::uint32_t>(out, crc32(out));
    return out;
}

std::vector<NamedArray> decode(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 16 || std::memcmp(bytes.data(), kMagic, 4) != 0) throw FormatError("UARL: bad magic");
    const auto body = bytes.first(bytes.size() - 4);
    std::uint32_t stored;
    std::memcpy(&stored, bytes.data() + body.size(), 4);
    if (stored != crc32(body)) throw FormatError("UARL: CRC mismatch (file is corrupt)");
    Reader r(body);
    r.get_string(4);
    const auto version = r.get<std::uint32_t>();
    if (version != kFormatVersion) throw FormatError("UARL: unsupported version " + std::to_string(version));
    const auto count = r.get<std::uint32_t>();
    std::vector<NamedArray> arrays;
    for (std::uint32_t i = 0; i < count; ++i) {
        NamedArray a;
        a.name = r.get_string(r.get<std::uint16_t>());
        const auto ndim = r.get<std::uint8_t>();
        std::uint64_t n = 1;
        for (std::uint8_t d = 0; d < ndim; ++d) {
            a.dims.push_back(r.get<std::uint64_t>());
            n *= a.dims.back();
        }
        if (n > r.remaining() / 8) throw FormatError("UARL: truncated payload for " + a.name);
        a.values.resize(n);
        for (auto& v : a.values) v = r.get<double>();
        arrays.push_back(std::move(a));
    }
    if (r.remaining() != 0) throw FormatError("UARL: trailing bytes before CRC");
    return arrays;
}

void write_bytes(const fs::path& path, std::span<const std::uint8_t> bytes) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    const fs::path tmp = path.string() + ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        if (!f) throw std::runtime_error("cannot open " + tmp.string() + " for writing");
        f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
        if (!f) throw std::runtime_error("write failed: " + tmp.string());
    }
    fs::rename(tmp, path);
}

std::vector<std::uint8_t> read_bytes(const fs::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open " + path.string());
    return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>());
}

void save_arrays(const fs::path& path, const std::vector<NamedArray>& arrays) { write_bytes(path, encode(arrays)); }

std::vector<NamedArray> load_arrays(const fs::path& path) {
    try {
        return decode(read_bytes(path));
    } catch (const FormatError& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

// ---- checkpoints -----------------------------------------------------------

namespace {

NamedArray tensor_array(const std::string& name, const ad::Tensor& t) {
    NamedArray a{name, {}, {t.data().begin(), t.data().end()}};
    for (auto d : t.shape()) a.dims.push_back(d);
    return a;
}

NamedArray vector_array(const std::string& name, std::vector<double> values) {
    return {name, {values.size()}, std::move(values)};
}

void pack_params(std::vector<NamedArray>& out, const std::string& prefix, const nn::ParamSet& params) {
    for (const auto& [name, t] : params) out.push_back(tensor_array(prefix + name, t));
}

void pack_adam(std::vector<NamedArray>& out, const std::string& prefix, const nn::AdamState& s) {
    out.push_back(vector_array(prefix + "hyper", {s.lr, s.beta1, s.beta2, s.eps, static_cast<double>(s.t)}));
    pack_params(out, prefix + "m/", s.m);
    pack_params(out, prefix + "v/", s.v);
}

class ArrayIndex {
public:
    explicit ArrayIndex(const std::vector<NamedArray>& arrays) : arrays_(arrays) {}

    const NamedArray& at(const std::string& name) const {
        for (const auto& a : arrays_) {
            if (a.name == name) return a;
        }
        throw FormatError("checkpoint: missing array " + name);
    }
    bool contains(const std::string& name) const {
        return std::any_of(arrays_.begin(), arrays_.end(), [&](const NamedArray& a) { return a.name == name; });
    }
    const std::vector<double>& vec(const std::string& name, std::size_t size) const {
        const auto& a = at(name);
        if (a.values.size() != size) throw FormatError("checkpoint: array " + name + " has the wrong size");
        return a.values;
    }
    // Fills every parameter of `layout` from prefix + name.
    nn::ParamSet params(const std::string& prefix, const nn::ParamSet& layout) const {
        nn::ParamSet out;
        for (const auto& [name, t] : layout) {
            const auto& a = at(prefix + name);
            ad::Shape shape(a.dims.begin(), a.dims.end());
            if (shape != t.shape()) throw FormatError("checkpoint: shape mismatch for " + prefix + name);
            out.add(name, ad::Tensor(shape, a.values));
        }
        return out;
    }
    nn::AdamState adam(const std::string& prefix, const nn::ParamSet& layout) const {
        const auto& h = vec(prefix + "hyper", 5);
        nn::AdamState s;
        s.lr = h[0];
        s.beta1 = h[1];
        s.beta2 = h[2];
        s.eps = h[3];
        s.t = static_cast<std::uint64_t>(h[4]);
        s.m = params(prefix + "m/", layout);
        s.v = params(prefix + "v/", layout);
        return s;
    }

private:
    const std::vector<NamedArray>& arrays_;
};

}  // namespace

std::vector<NamedArray> pack(const Checkpoint& c) {
    std::vector<NamedArray> out;
    const auto& g = c.geometry;
    out.push_back(vector_array("geometry", {static_cast<double>(g.n), static_cast<double>(g.n_angles),
                                            static_cast<double>(g.n_det), g.det_spacing}));
    out.push_back(vector_array("geometry.angles", g.angles));
    const auto& gc = c.gen.config;
    out.push_back(vector_array("config.generator", {static_cast<double>(gc.layers), static_cast<double>(gc.channels),
                                                    static_cast<double>(gc.kernel), gc.prelu_init, gc.step_init}));
    const auto& cc = c.critic.config;
    out.push_back(vector_array("config.critic",
                               {static_cast<double>(cc.conv_layers), static_cast<double>(cc.base_channels),
                                static_cast<double>(cc.kernel), static_cast<double>(cc.hidden), cc.slope}));
    out.push_back(vector_array("progress", {static_cast<double>(c.phase), static_cast<double>(c.step)}));
    pack_params(out, "gen/", c.gen.params);
    pack_params(out, "critic/", c.critic.params);
    if (c.gen_opt) pack_adam(out, "opt.gen/", *c.gen_opt);
    if (c.critic_opt) pack_adam(out, "opt.critic/", *c.critic_opt);
    return out;
}

Checkpoint unpack(const std::vector<NamedArray>& arrays) {
    const ArrayIndex idx(arrays);
    Checkpoint c;
    const auto& g = idx.vec("geometry", 4);
    c.geometry.n = static_cast<std::size_t>(g[0]);
    c.geometry.n_angles = static_cast<std::size_t>(g[1]);
    c.geometry.n_det = static_cast<std::size_t>(g[2]);
    c.geometry.det_spacing = g[3];
    c.geometry.angles = idx.vec("geometry.angles", c.geometry.n_angles);
    const auto& gc = idx.vec("config.generator", 5);
    c.gen.config = {static_cast<std::size_t>(gc[0]), static_cast<std::size_t>(gc[1]), static_cast<std::size_t>(gc[2]),
                    gc[3], gc[4]};
    const auto& cc = idx.vec("config.critic", 5);
    c.critic.config = {static_cast<std::size_t>(cc[0]), static_cast<std::size_t>(cc[1]),
                       static_cast<std::size_t>(cc[2]), static_cast<std::size_t>(cc[3]), cc[4]};
    const auto& p = idx.vec("progress", 2);
    c.phase = static_cast<int>(p[0]);
    c.step = static_cast<std::size_t>(p[1]);
    // Layouts come from the architecture; values from the file.
    const auto gen_layout = model::make_generator(c.gen.config, 0).params;
    const auto critic_layout = model::make_critic(c.critic.config, 0).params;
    c.gen.params = idx.params("gen/", gen_layout);
    c.critic.params = idx.params("critic/", critic_layout);
    if (idx.contains("opt.gen/hyper")) c.gen_opt = idx.adam("opt.gen/", gen_layout);
    if (idx.contains("opt.critic/hyper")) c.critic_opt = idx.adam("opt.critic/", critic_layout);
    c.geometry.validate();
    return c;
}

void save_checkpoint(const fs::path& path, const Checkpoint& ckpt) { save_arrays(path, pack(ckpt)); }

Checkpoint load_checkpoint(const fs::path& path) {
    try {
        return unpack(load_arrays(path));
    } catch (const FormatError& e) {
        const std::string what = e.what();
        if (what.rfind(path.string(), 0) == 0) throw;
        throw FormatError(path.string() + ": " + what);
    }
}

void require_geometry(const Checkpoint& ckpt, const tomo::Geometry& g) {
    if (!(ckpt.geometry == g)) {
        throw FormatError("geometry mismatch: checkpoint has n=" + std::to_string(ckpt.geometry.n) +
                          " angles=" + std::to_string(ckpt.geometry.n_angles) +
                          " detectors=" + std::to_string(ckpt.geometry.n_det) + ", data has n=" + std::to_string(g.n) +
                          " angles=" + std::to_string(g.n_angles) + " detectors=" + std::to_string(g.n_det));
    }
}

// ---- datasets --------------------------------------------------------------

std::string sample_name(char prefix, std::size_t index) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%c_%06zu", prefix, index);
    return buf;
}

namespace {

void save_image(const fs::path& dir, const std::string& name, const tomo::Image& x) {
    save_arrays(dir / (name + ".uarl"), {{name, {x.n, x.n}, x.values}});
}

void save_sinogram(const fs::path& dir, const std::string& name, const tomo::Sinogram& y) {
    save_arrays(dir / (name + ".uarl"), {{name, {y.n_angles, y.n_det}, y.values}});
}

const NamedArray& single(const std::vector<NamedArray>& arrays, const std::string& name,
                         const std::vector<std::uint64_t>& dims) {
    if (arrays.size() != 1 || arrays[0].name != name || arrays[0].dims != dims) {
        throw FormatError("dataset: " + name + " is missing or has unexpected shape");
    }
    return arrays[0];
}

std::size_t count_files(const fs::path& dir, char prefix) {
    std::size_t n = 0;
    while (fs::exists(dir / (sample_name(prefix, n) + ".uarl"))) ++n;
    return n;
}

}  // namespace

void save_dataset(const fs::path& dir, const data::DatasetPools& pools) {
    for (std::size_t i = 0; i < pools.train_x.size(); ++i) save_image(dir / "train_x", sample_name('x', i), pools.train_x[i]);
    for (std::size_t i = 0; i < pools.train_y.size(); ++i) {
        save_sinogram(dir / "train_y", sample_name('y', i), pools.train_y[i]);
    }
    for (std::size_t i = 0; i < pools.test_x.size(); ++i) {
        save_image(dir / "test", sample_name('x', i), pools.test_x[i]);
        save_sinogram(dir / "test", sample_name('y', i), pools.test_y[i]);
    }
}

data::DatasetPools load_dataset(const fs::path& dir, const tomo::Geometry& g) {
    data::DatasetPools pools;
    auto image = [&](const fs::path& sub, std::size_t i) {
        const std::string name = sample_name('x', i);
        const auto arrays = load_arrays(dir / sub / (name + ".uarl"));
        tomo::Image x(g.n);
        x.values = single(arrays, name, {g.n, g.n}).values;
        return x;
    };
    auto sinogram = [&](const fs::path& sub, std::size_t i) {
        const std::string name = sample_name('y', i);
        const auto arrays = load_arrays(dir / sub / (name + ".uarl"));
        tomo::Sinogram y(g.n_angles, g.n_det);
        y.values = single(arrays, name, {g.n_angles, g.n_det}).values;
        return y;
    };
    for (std::size_t i = 0, n = count_files(dir / "train_x", 'x'); i < n; ++i) pools.train_x.push_back(image("train_x", i));
    for (std::size_t i = 0, n = count_files(dir / "train_y", 'y'); i < n; ++i) {
        pools.train_y.push_back(sinogram("train_y", i));
    }
    for (std::size_t i = 0, n = count_files(dir / "test", 'x'); i < n; ++i) {
        pools.test_x.push_back(image("test", i));
        pools.test_y.push_back(sinogram("test", i));
    }
    if (pools.train_x.empty() && pools.train_y.empty() && pools.test_x.empty()) {
        throw std::runtime_error("no dataset found in " + dir.string());
    }
    return pools;
}

// ---- PGM -------------------------------------------------------------------

std::vector<std::uint8_t> encode_pgm(const tomo::Image& img) {
    const std::string header = "P5\n" + std::to_string(img.n) + " " + std::to_string(img.n) + "\n65535\n";
    std::vector<std::uint8_t> out(header.begin(), header.end());
    out.reserve(header.size() + 2 * img.size());
    for (double v : img.values) {
        const double c = std::isnan(v) ? 0.0 : std::clamp(v, 0.0, 1.0);
        const auto s = static_cast<std::uint16_t>(std::lround(c * 65535.0));
        out.push_back(static_cast<std::uint8_t>(s >> 8));
        out.push_back(static_cast<std::uint8_t>(s & 0xFF));
    }
    return out;
}

tomo::Image decode_pgm(std::span<const std::uint8_t> bytes) {
    std::size_t pos = 0;
    auto token = [&]() {
        while (pos < bytes.size() && std::isspace(bytes[pos])) ++pos;
        std::string t;
        while (pos < bytes.size() && !std::isspace(bytes[pos])) t.push_back(static_cast<char>(bytes[pos++]));
        return t;
    };
    if (token() != "P5") throw FormatError("PGM: expected P5");
    const std::size_t w = std::stoul(token()), h = std::stoul(token());
    if (token() != "65535") throw FormatError("PGM: expected maxval 65535");
    ++pos;  // single whitespace before the raster
    if (w != h) throw FormatError("PGM: image must be square");
    if (bytes.size() - pos != 2 * w * h) throw FormatError("PGM: raster size mismatch");
    tomo::Image img(w);
    for (std::size_t i = 0; i < w * h; ++i) {
        const unsigned s = (static_cast<unsigned>(bytes[pos + 2 * i]) << 8) | bytes[pos + 2 * i + 1];
        img.values[i] = static_cast<double>(s) / 65535.0;
    }
    return img;
}

void write_pgm(const fs::path& path, const tomo::Image& img) { write_bytes(path, encode_pgm(img)); }

// ---- CSV -------------------------------------------------------------------

std::string format_double(double v) {
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    if (std::isnan(v)) return "nan";
    // Shortest text that parses back to the same double.
    char buf[40];
    const auto r = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, r.ptr);
}

void write_metrics_csv(const fs::path& path, const std::vector<MetricsRow>& rows) {
    std::ostringstream s;
    s << "sample_id,method,psnr_db,ssim,distortion,seconds\n";
    for (const auto& r : rows) {
        s << r.sample_id << ',' << r.method << ',' << format_double(r.psnr_db) << ',' << format_double(r.ssim) << ','
          << format_double(r.distortion) << ',' << format_double(r.seconds) << '\n';
    }
    const std::string text = s.str();
    write_bytes(path, std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

}  // namespace uar::io
