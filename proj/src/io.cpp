#include "rd/io.hpp"

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <vector>

static_assert(std::endian::native == std::endian::little,
              "on-disk formats are little-endian and assume a little-endian host");

namespace rd {

namespace {

void put_u32(std::ostream& os, std::uint32_t v) {
    os.write(reinterpret_cast<const char*>(&v), 4);
}

void put_u8(std::ostream& os, std::uint8_t v) {
    os.write(reinterpret_cast<const char*>(&v), 1);
}

void put_f64(std::ostream& os, double v) {
    os.write(reinterpret_cast<const char*>(&v), 8);
}

std::uint32_t get_u32(std::istream& is, const std::string& field) {
    std::uint32_t v = 0;
    if (!is.read(reinterpret_cast<char*>(&v), 4))
        throw FileFormatError("truncated file while reading field: " + field);
    return v;
}

std::uint8_t get_u8(std::istream& is, const std::string& field) {
    std::uint8_t v = 0;
    if (!is.read(reinterpret_cast<char*>(&v), 1))
        throw FileFormatError("truncated file while reading field: " + field);
    return v;
}

double get_f64(std::istream& is, const std::string& field) {
    double v = 0;
    if (!is.read(reinterpret_cast<char*>(&v), 8))
        throw FileFormatError("truncated file while reading field: " + field);
    return v;
}

void put_magic(std::ostream& os, const char magic[4]) { os.write(magic, 4); }

void check_magic(std::istream& is, const char expect[4]) {
    char m[4] = {};
    if (!is.read(m, 4) || std::string(m, 4) != std::string(expect, 4))
        throw FileFormatError("bad magic, expected " + std::string(expect, 4));
    const std::uint8_t version = get_u8(is, "version");
    if (version != 0x01)
        throw FileFormatError("unsupported version " + std::to_string(version));
}

void put_f32_payload(std::ostream& os, const std::vector<double>& v) {
    for (double d : v) {
        const float f = static_cast<float>(d);
        os.write(reinterpret_cast<const char*>(&f), 4);
    }
}

void get_f32_payload(std::istream& is, std::vector<double>& v, const std::string& field) {
    for (double& d : v) {
        float f = 0;
        if (!is.read(reinterpret_cast<char*>(&f), 4))
            throw FileFormatError("truncated payload: " + field);
        d = static_cast<double>(f);
    }
}

void put_f64_payload(std::ostream& os, const std::vector<double>& v) {
    os.write(reinterpret_cast<const char*>(v.data()),
             static_cast<std::streamsize>(v.size() * 8));
}

void get_f64_payload(std::istream& is, std::vector<double>& v, const std::string& field) {
    if (!is.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(v.size() * 8)))
        throw FileFormatError("truncated payload: " + field);
}

// Write to <path>.tmp and rename, so an error never leaves a partial file.
class AtomicWriter {
  public:
    explicit AtomicWriter(const std::string& path)
        : final_(path), tmp_(path + ".tmp"), os_(tmp_, std::ios::binary | std::ios::trunc) {
        if (!os_) throw FileFormatError("cannot open for writing: " + tmp_);
    }
    std::ostream& stream() { return os_; }
    void commit() {
        os_.flush();
        if (!os_) throw FileFormatError("write failed: " + tmp_);
        os_.close();
        std::filesystem::rename(tmp_, final_);
        committed_ = true;
    }
    ~AtomicWriter() {
        if (!committed_) {
            os_.close();
            std::error_code ec;
            std::filesystem::remove(tmp_, ec);
        }
    }

  private:
    std::string final_, tmp_;
    std::ofstream os_;
    bool committed_ = false;
};

std::ifstream open_read(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw FileFormatError("cannot open file: " + path);
    return is;
}

}  // namespace

void write_embedding_file(const std::string& path, const EmbeddingSet& e) {
    AtomicWriter w(path);
    put_magic(w.stream(), "RDEM");
    put_u8(w.stream(), 0x01);
    put_u32(w.stream(), static_cast<std::uint32_t>(e.count));
    put_u32(w.stream(), static_cast<std::uint32_t>(e.dim));
    put_f32_payload(w.stream(), e.data);
    w.commit();
}

EmbeddingSet read_embedding_file(const std::string& path) {
    std::ifstream is = open_read(path);
    check_magic(is, "RDEM");
    const std::uint32_t count = get_u32(is, "count");
    const std::uint32_t dim = get_u32(is, "dim");
    if (count == 0 || dim == 0) throw FileFormatError("embedding file has zero count or dim");
    EmbeddingSet e(static_cast<int>(count), static_cast<int>(dim));
    get_f32_payload(is, e.data, "embedding payload");
    return e;
}

void write_dictionary_file(const std::string& path, const Dictionary& d) {
    std::uint8_t normalized = 1;
    for (int i = 0; i < d.atoms && normalized; ++i) {
        double nrm = 0.0;
        for (int j = 0; j < d.dim; ++j) nrm += d.at(i, j) * d.at(i, j);
        if (std::abs(std::sqrt(nrm) - 1.0) > 1e-4) normalized = 0;
    }
    AtomicWriter w(path);
    put_magic(w.stream(), "RDDC");
    put_u8(w.stream(), 0x01);
    put_u32(w.stream(), static_cast<std::uint32_t>(d.atoms));
    put_u32(w.stream(), static_cast<std::uint32_t>(d.dim));
    put_u8(w.stream(), normalized);
    put_f32_payload(w.stream(), d.data);
    w.commit();
}

Dictionary read_dictionary_file(const std::string& path) {
    std::ifstream is = open_read(path);
    check_magic(is, "RDDC");
    const std::uint32_t atoms = get_u32(is, "atoms");
    const std::uint32_t dim = get_u32(is, "dim");
    if (atoms == 0 || dim == 0) throw FileFormatError("dictionary file has zero atoms or dim");
    get_u8(is, "normalized flag");
    Dictionary d(static_cast<int>(atoms), static_cast<int>(dim));
    get_f32_payload(is, d.data, "dictionary payload");
    return d;
}

void write_model_file(const std::string& path, const Model& m) {
    AtomicWriter w(path);
    std::ostream& os = w.stream();
    put_magic(os, "RDMD");
    put_u8(os, 0x01);
    put_u32(os, static_cast<std::uint32_t>(m.features));
    put_u32(os, static_cast<std::uint32_t>(m.rd.retriever.atoms));
    put_u32(os, static_cast<std::uint32_t>(m.rd.retriever.kernel_size));
    put_u32(os, static_cast<std::uint32_t>(m.num_classes));
    put_f64(os, m.rd.lambda);
    put_f64(os, m.rd.pono.epsilon);
    std::uint8_t flags = 0;
    if (m.rd.dictionary.trainable) flags |= 0x01;
    if (m.rd.freeze_dictionary) flags |= 0x02;
    put_u8(os, flags);
    put_f64_payload(os, m.encoder);
    put_f64_payload(os, m.rd.retriever.pointwise);
    put_f64_payload(os, m.rd.retriever.depthwise);
    put_f64_payload(os, m.rd.pono.gamma);
    put_f64_payload(os, m.rd.pono.beta);
    put_f64_payload(os, m.rd.dictionary.data);
    put_f64_payload(os, m.head_w);
    put_f64_payload(os, m.head_b);
    w.commit();
}

Model read_model_file(const std::string& path) {
    std::ifstream is = open_read(path);
    check_magic(is, "RDMD");
    const int f = static_cast<int>(get_u32(is, "features"));
    const int n = static_cast<int>(get_u32(is, "atoms"));
    const int k = static_cast<int>(get_u32(is, "kernel_size"));
    const int classes = static_cast<int>(get_u32(is, "num_classes"));
    if (f <= 0 || n <= 0 || k <= 0 || classes <= 0)
        throw FileFormatError("model header has non-positive dimension");
    const double lambda = get_f64(is, "lambda");
    const double epsilon = get_f64(is, "epsilon");
    const std::uint8_t flags = get_u8(is, "flags");

    Model m;
    m.features = f;
    m.num_classes = classes;
    m.encoder.resize(static_cast<std::size_t>(f) * f);
    m.rd.retriever = RetrieverWeights(n, f, k);
    m.rd.pono = PonoParams(n, epsilon);
    m.rd.dictionary = Dictionary(n, f);
    m.rd.lambda = lambda;
    m.rd.dictionary.trainable = (flags & 0x01) != 0;
    m.rd.freeze_dictionary = (flags & 0x02) != 0;
    m.head_w.resize(static_cast<std::size_t>(classes) * f);
    m.head_b.resize(classes);

    get_f64_payload(is, m.encoder, "encoder weights");
    get_f64_payload(is, m.rd.retriever.pointwise, "pointwise weights");
    get_f64_payload(is, m.rd.retriever.depthwise, "depthwise weights");
    get_f64_payload(is, m.rd.pono.gamma, "gamma");
    get_f64_payload(is, m.rd.pono.beta, "beta");
    get_f64_payload(is, m.rd.dictionary.data, "dictionary");
    get_f64_payload(is, m.head_w, "head weights");
    get_f64_payload(is, m.head_b, "head bias");
    return m;
}

}  // namespace rd
