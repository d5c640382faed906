#include "sketret/io.hpp"

#include <zlib.h>

#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace sketret {

namespace {

constexpr char kMagic[4] = {'B', 'D', 'A', 'S'};
constexpr std::uint16_t kVersion = 1;

void put_u16(std::string& buf, std::uint16_t v) {
    buf.push_back(char(v & 0xff));
    buf.push_back(char((v >> 8) & 0xff));
}

void put_u32(std::string& buf, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf.push_back(char((v >> (8 * i)) & 0xff));
}

void put_f64(std::string& buf, double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, sizeof(bits));
    for (int i = 0; i < 8; ++i) buf.push_back(char((bits >> (8 * i)) & 0xff));
}

class Reader {
public:
    explicit Reader(std::string data) : data_(std::move(data)) {}

    std::uint16_t u16() { return std::uint16_t(byte() | (std::uint16_t(byte()) << 8)); }
    std::uint32_t u32() {
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= std::uint32_t(byte()) << (8 * i);
        return v;
    }
    double f64() {
        std::uint64_t bits = 0;
        for (int i = 0; i < 8; ++i) bits |= std::uint64_t(byte()) << (8 * i);
        double v;
        std::memcpy(&v, &bits, sizeof(v));
        return v;
    }
    std::string bytes(std::size_t n) {
        if (pos_ + n > data_.size()) throw std::runtime_error("container: truncated file");
        std::string out = data_.substr(pos_, n);
        pos_ += n;
        return out;
    }
    std::size_t position() const { return pos_; }
    std::size_t size() const { return data_.size(); }
    const std::string& data() const { return data_; }

private:
    std::uint8_t byte() {
        if (pos_ >= data_.size()) throw std::runtime_error("container: truncated file");
        return std::uint8_t(data_[pos_++]);
    }

    std::string data_;
    std::size_t pos_ = 0;
};

}  // namespace

void write_tensor_container(const std::string& path,
                            const std::map<std::string, Tensor>& entries) {
    std::string buf;
    buf.append(kMagic, 4);
    put_u16(buf, kVersion);
    put_u32(buf, std::uint32_t(entries.size()));
    for (const auto& [name, t] : entries) {
        put_u16(buf, std::uint16_t(name.size()));
        buf.append(name);
        buf.push_back(char(t.rank()));
        for (std::size_t d : t.shape()) put_u32(buf, std::uint32_t(d));
        for (std::size_t i = 0; i < t.size(); ++i) put_f64(buf, t[i]);
    }
    const std::uint32_t crc = std::uint32_t(
        ::crc32(0L, reinterpret_cast<const Bytef*>(buf.data()), uInt(buf.size())));
    put_u32(buf, crc);

    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("write_tensor_container: cannot open " + path);
    out.write(buf.data(), std::streamsize(buf.size()));
    if (!out) throw std::runtime_error("write_tensor_container: write failed for " + path);
}

std::map<std::string, Tensor> read_tensor_container(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("read_tensor_container: cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    Reader r(ss.str());

    if (r.size() < 14) throw std::runtime_error("container: truncated file");
    if (r.bytes(4) != std::string(kMagic, 4))
        throw std::runtime_error("container: bad magic bytes");
    const std::uint16_t version = r.u16();
    if (version > kVersion)
        throw std::runtime_error("container: unsupported version " + std::to_string(version));

    const std::uint32_t count = r.u32();
    std::map<std::string, Tensor> entries;
    for (std::uint32_t e = 0; e < count; ++e) {
        const std::uint16_t name_len = r.u16();
        const std::string name = r.bytes(name_len);
        const std::uint8_t rank = std::uint8_t(r.bytes(1)[0]);
        std::vector<std::size_t> shape(rank);
        std::size_t size = 1;
        for (std::uint8_t d = 0; d < rank; ++d) {
            shape[d] = r.u32();
            size *= shape[d];
        }
        Tensor t(shape);
        for (std::size_t i = 0; i < size; ++i) t[i] = r.f64();
        entries.emplace(name, std::move(t));
    }

    const std::size_t payload_end = r.position();
    const std::uint32_t stored_crc = r.u32();
    const std::uint32_t crc = std::uint32_t(
        ::crc32(0L, reinterpret_cast<const Bytef*>(r.data().data()), uInt(payload_end)));
    if (crc != stored_crc) throw std::runtime_error("container: checksum mismatch");
    return entries;
}

namespace {

Tensor pack_maps(const std::vector<SampleRecord>& records) {
    if (records.empty()) return Tensor::matrix(0, 0);
    const std::size_t f = records.front().feature_map.size();
    Tensor out = Tensor::matrix(records.size(), f);
    for (std::size_t r = 0; r < records.size(); ++r)
        for (std::size_t c = 0; c < f; ++c) out(r, c) = records[r].feature_map[c];
    return out;
}

Tensor pack_flats(const std::vector<SampleRecord>& records) {
    if (records.empty()) return Tensor::matrix(0, 0);
    const std::size_t d = records.front().flat_features.size();
    Tensor out = Tensor::matrix(records.size(), d);
    for (std::size_t r = 0; r < records.size(); ++r)
        for (std::size_t c = 0; c < d; ++c) out(r, c) = records[r].flat_features[c];
    return out;
}

Tensor pack_labels(const std::vector<SampleRecord>& records) {
    Tensor out({records.size()});
    for (std::size_t r = 0; r < records.size(); ++r) out[r] = double(records[r].class_id);
    return out;
}

Tensor pack_indices(const std::vector<std::size_t>& v) {
    Tensor out({v.size()});
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = double(v[i]);
    return out;
}

std::vector<SampleRecord> unpack_records(const Tensor& maps, const Tensor& flats,
                                         const Tensor& labels, Modality modality,
                                         std::size_t grid, std::size_t channels) {
    std::vector<SampleRecord> out(labels.size());
    for (std::size_t r = 0; r < labels.size(); ++r) {
        SampleRecord& rec = out[r];
        rec.modality = modality;
        rec.class_id = std::size_t(labels[r]);
        rec.feature_map = Tensor({grid, grid, channels});
        for (std::size_t c = 0; c < rec.feature_map.size(); ++c)
            rec.feature_map[c] = maps(r, c);
        rec.flat_features = Tensor({flats.cols()});
        for (std::size_t c = 0; c < flats.cols(); ++c) rec.flat_features[c] = flats(r, c);
    }
    return out;
}

}  // namespace

void save_dataset(const DatasetBundle& bundle, const std::string& dir) {
    std::map<std::string, Tensor> entries;
    entries["images/maps"] = pack_maps(bundle.images);
    entries["images/flat"] = pack_flats(bundle.images);
    entries["images/labels"] = pack_labels(bundle.images);
    entries["sketches/maps"] = pack_maps(bundle.sketches);
    entries["sketches/flat"] = pack_flats(bundle.sketches);
    entries["sketches/labels"] = pack_labels(bundle.sketches);
    entries["split/seen"] = pack_indices(bundle.split.seen_classes);
    entries["split/unseen"] = pack_indices(bundle.split.unseen_classes);
    if (bundle.images.empty()) throw std::invalid_argument("save_dataset: empty bundle");
    const auto& shape = bundle.images.front().feature_map.shape();
    entries["meta/grid"] = Tensor({std::size_t{1}}, {double(shape[0])});
    entries["meta/channels"] = Tensor({std::size_t{1}}, {double(shape[2])});
    write_tensor_container(dir + "/dataset.bdas", entries);
    save_semantic_embeddings(bundle.prototypes, dir + "/prototypes.txt");
}

DatasetBundle load_dataset(const std::string& dir) {
    std::map<std::string, Tensor> entries = read_tensor_container(dir + "/dataset.bdas");
    auto need = [&](const char* key) -> const Tensor& {
        auto it = entries.find(key);
        if (it == entries.end())
            throw std::runtime_error(std::string("load_dataset: missing entry ") + key);
        return it->second;
    };
    const std::size_t grid = std::size_t(need("meta/grid")[0]);
    const std::size_t channels = std::size_t(need("meta/channels")[0]);

    DatasetBundle bundle;
    bundle.images = unpack_records(need("images/maps"), need("images/flat"),
                                   need("images/labels"), Modality::image, grid, channels);
    bundle.sketches =
        unpack_records(need("sketches/maps"), need("sketches/flat"),
                       need("sketches/labels"), Modality::sketch, grid, channels);
    const Tensor& seen = need("split/seen");
    const Tensor& unseen = need("split/unseen");
    for (std::size_t i = 0; i < seen.size(); ++i)
        bundle.split.seen_classes.push_back(std::size_t(seen[i]));
    for (std::size_t i = 0; i < unseen.size(); ++i)
        bundle.split.unseen_classes.push_back(std::size_t(unseen[i]));
    bundle.prototypes = load_semantic_embeddings(dir + "/prototypes.txt");
    return bundle;
}

}  // namespace sketret
